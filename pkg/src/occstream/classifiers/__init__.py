from .autoencoder import StreamingAutoencoder
from .base import MinMaxScaler, OneClassClassifier
from .hstrees import HalfSpaceForest, HalfSpaceTree, hst_build, node_mass
from .nnd import NearestNeighbourDescription

CLASSIFIERS = {
    "sa": StreamingAutoencoder,
    "hstrees": HalfSpaceForest,
    "nnd": NearestNeighbourDescription,
}

__all__ = [
    "CLASSIFIERS",
    "HalfSpaceForest",
    "HalfSpaceTree",
    "MinMaxScaler",
    "NearestNeighbourDescription",
    "OneClassClassifier",
    "StreamingAutoencoder",
    "hst_build",
    "node_mass",
]
