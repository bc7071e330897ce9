"""Random depthwise signed convolutional features and their evaluation tools."""

from .errors import RdcnnError
from .network import (
    FeatureMatrix,
    KernelStack,
    NetworkConfig,
    Normalization,
    extract_feature,
    extract_features,
    generate_kernel_stacks,
)
from .tensor import backend_name

__version__ = "0.1.0"

__all__ = [
    "FeatureMatrix",
    "KernelStack",
    "NetworkConfig",
    "Normalization",
    "RdcnnError",
    "backend_name",
    "extract_feature",
    "extract_features",
    "generate_kernel_stacks",
]
