"""Synthetic populations and independent reference implementations."""

from .generator import (
    Effect,
    SynthSpec,
    generate_population,
    ground_truth,
    planted_features,
    sample_demographics,
    score_audit,
    write_ground_truth,
)
from .oracles import oracle_bh, oracle_features, oracle_ols

__all__ = [
    "Effect",
    "SynthSpec",
    "generate_population",
    "ground_truth",
    "planted_features",
    "sample_demographics",
    "score_audit",
    "write_ground_truth",
    "oracle_bh",
    "oracle_features",
    "oracle_ols",
]
