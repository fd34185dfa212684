import csv
import json

import pytest

from occstream.errors import ComparisonError, ConfigError
from occstream.harness import (METRIC_COLUMNS, ExperimentConfig, compare_runs, load_config,
                               parse_config_text, read_metrics, run_experiment, write_config_text)

SMALL = {"instances": "2400", "initial_points": "300", "min_points": "200", "fold_count": "3",
         "metric_period": "200", "window_size": "200", "seed": "5"}


def cfg(**kw):
    return load_config(None, {**SMALL, **kw})


def test_smoke_single_sa(tmp_path):
    res = run_experiment(cfg(), tmp_path / "r")
    lines = (tmp_path / "r" / "metrics.csv").read_text().splitlines()
    assert lines[0] == "# schema: occstream-metrics/1"
    assert lines[1] == ",".join(METRIC_COLUMNS)
    rows = read_metrics(tmp_path / "r" / "metrics.csv")
    assert {(r["framework"], r["classifier"]) for r in rows} == {("single", "sa")}
    assert {r["fold"] for r in rows} == {"0", "1", "2"}
    assert set(res.files) == {"metrics.csv", "thresholds.csv", "snapshots.csv"}


def test_same_config_gives_identical_bytes(tmp_path):
    c = cfg(frameworks="single,occluster", classifiers="nnd")
    run_experiment(c, tmp_path / "a")
    run_experiment(c, tmp_path / "b")
    for name in ("metrics.csv", "thresholds.csv", "snapshots.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_reproduces_the_run(tmp_path):
    run_experiment(cfg(classifiers="hstrees", hst_depth="6"), tmp_path / "a")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"]["seed"] == 5 and manifest["fold_count"] == 3
    again = ExperimentConfig.from_mapping(manifest["config"])
    run_experiment(again, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_occomplete_vs_single_report(tmp_path):
    run_experiment(cfg(frameworks="single,occomplete"), tmp_path / "r")
    [cmp] = compare_runs([tmp_path / "r"], out=tmp_path / "r")
    assert cmp.comparison == "occomplete/sa - single/sa"
    assert cmp.p_left + cmp.p_rope + cmp.p_right == pytest.approx(1.0)
    with open(tmp_path / "r" / "cbtt.csv") as fh:
        assert fh.readline().strip() == "# schema: occstream-cbtt/1"
        assert len(list(csv.DictReader(fh))) == 1


def test_run_compared_to_itself(tmp_path):
    run_experiment(cfg(), tmp_path / "r")
    [cmp] = compare_runs([tmp_path / "r", tmp_path / "r"])
    assert cmp.p_rope == 1.0 and cmp.mean_difference == 0.0


def test_two_seeds_sum_to_one(tmp_path):
    run_experiment(cfg(), tmp_path / "a")
    run_experiment(cfg(model_seed="2", stream_seed="5", seed="6"), tmp_path / "b")
    [cmp] = compare_runs([tmp_path / "a", tmp_path / "b"])
    assert cmp.p_left + cmp.p_rope + cmp.p_right == pytest.approx(1.0)


def test_mismatched_fold_counts(tmp_path):
    run_experiment(cfg(), tmp_path / "a")
    run_experiment(cfg(fold_count="4"), tmp_path / "b")
    with pytest.raises(ComparisonError):
        compare_runs([tmp_path / "a", tmp_path / "b"])


def test_thresholds_and_snapshots(tmp_path):
    run_experiment(cfg(frameworks="occluster", classifiers="nnd"), tmp_path / "r")
    with open(tmp_path / "r" / "thresholds.csv") as fh:
        fh.readline()
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 and len({r["evaluation_threshold"] for r in rows}) == 1
    snap = (tmp_path / "r" / "snapshots.csv").read_text().splitlines()
    assert snap[0] == "# schema: occstream-snapshot/1" and "center_0" in snap[1]


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as err:
        load_config(None, {"fold_cont": "3"})
    assert err.value.key == "fold_cont"


def test_exactly_one_stream_source():
    with pytest.raises(ConfigError) as err:
        load_config(None, {"csv_path": "x.csv"})
    assert err.value.key == "csv_path"
    with pytest.raises(ConfigError):
        load_config(None, {"stream": "csv"})


def test_short_stream_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError) as err:
        run_experiment(cfg(instances="250"), tmp_path / "r")
    assert err.value.key == "instances"


def test_config_text_round_trip(tmp_path):
    c = cfg(frameworks="single,ocfuzzy", classifiers="sa,nnd", threshold="0.4")
    path = tmp_path / "c.txt"
    path.write_text(write_config_text(c))
    assert load_config(path) == c


def test_config_text_comments_and_overrides(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\ninstances = 900\n\nseed=3\n")
    assert parse_config_text(path.read_text()) == {"instances": "900", "seed": "3"}
    c = load_config(path, {"seed": "4"})
    assert (c.instances, c.seed) == (900, 4)


def test_csv_stream_run(tmp_path):
    import numpy as np
    rng = np.random.default_rng(0)
    with open(tmp_path / "s.csv", "w") as fh:
        fh.write("a,b,cls\n")
        for i in range(1500):
            minority = rng.random() < 0.05
            x = rng.random(2) if minority else 0.3 + 0.05 * rng.standard_normal(2)
            fh.write(f"{x[0]},{x[1]},{'bad' if minority else 'ok'}\n")
    c = cfg(stream="csv", csv_path=str(tmp_path / "s.csv"), feature_columns="a,b", class_column="cls", minority_labels="bad",
            instances="1500")
    res = run_experiment(c, tmp_path / "r")
    assert res.mean_auc("single", "sa") > 0.5
