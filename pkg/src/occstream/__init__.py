"""Context-aware streaming one-class classification.

Three frameworks (OCComplete, OCFuzzy, OCCluster) select one base classifier
per context; the base classifiers are a streaming autoencoder, Streaming
HS-Trees and a streaming nearest-neighbour data description.
"""

from .errors import (ComparisonError, ConfigError, ContractError, InitializationError, SchemaError,
                     StateError, StreamParseError)
from .frameworks import (FrameworkConfig, FrameworkFactory, OCCluster, OCComplete, OCFuzzy,
                         SingleClassifier, StreamVerdict, make_framework)
from .streams import Instance, StreamDescriptor, StreamPreset, make_stream

__all__ = [
    "ComparisonError", "ConfigError", "ContractError", "FrameworkConfig", "FrameworkFactory",
    "InitializationError", "Instance", "OCCluster", "OCComplete", "OCFuzzy", "SchemaError",
    "SingleClassifier", "StateError", "StreamDescriptor", "StreamParseError", "StreamPreset",
    "StreamVerdict", "make_framework", "make_stream",
]
