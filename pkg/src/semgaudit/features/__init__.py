from .catalog import CATALOG, CHANNEL_FEATURES, FEATURE_NAMES, FeatureConfig, FeatureDescriptor
from .channels import compute_xch
from .matrix import FeatureMatrix, build_feature_matrix, channel_features
from .spectral import compute_fd
from .time_domain import compute_td
from .wavelet import compute_tf

__all__ = [
    "CATALOG",
    "CHANNEL_FEATURES",
    "FEATURE_NAMES",
    "FeatureConfig",
    "FeatureDescriptor",
    "FeatureMatrix",
    "build_feature_matrix",
    "channel_features",
    "compute_fd",
    "compute_td",
    "compute_tf",
    "compute_xch",
]
