"""Randomized smoothing certification of point-cloud classifiers under parametric deformations."""

import json

from ._core import (
    CallbackClassifier,
    CentroidClassifier,
    Classifier,
    ClassifierError,
    ConstantClassifier,
    MlpClassifier,
    OracleClient,
    ProtocolError,
    TransportError,
    binomial_two_sided_pvalue,
    certified_radius,
    certify,
    clopper_pearson_lower,
    connect_oracle,
    deform,
    deformation_kinds,
    generate_shape,
    param_dim,
    predict,
    sample_params,
    std_normal_cdf,
    std_normal_quantile,
    sweep_csv,
    synthetic_dataset,
)
from ._core import summary_json as _summary_json


def summary(csv: str, samples: int = 64) -> dict:
    """ACR, per-scale accuracy and the envelope curve of a sweep table."""
    return json.loads(_summary_json(csv, samples))


__all__ = [name for name in dir() if not name.startswith("_")]
