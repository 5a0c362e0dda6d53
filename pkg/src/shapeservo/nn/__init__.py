"""Learned components: shape-servo policy and manipulation-point selectors."""

from .checkpoint import (
    MP_MAGIC,
    POLICY_MAGIC,
    load_mp_model,
    load_policy,
    save_mp_model,
    save_policy,
)
from .manip_point import (
    CandidateClassifierNet,
    ClassifierSelector,
    DensePredictorNet,
    DensePredictorSelector,
    FixedPointsSelector,
    MPConfig,
    MPSelection,
    OracleSelector,
    UniformRandomSelector,
    classify_candidate,
    dense_predict,
    select_by_classifier,
    train_classifier,
    train_dense_predictor,
)
from .policy import (
    PolicyConfig,
    PolicyNet,
    TrainResult,
    evaluate_loss,
    geodesic_angle,
    infer_action,
    learning_rate,
    policy_loss,
    rot6d_to_matrix,
    train_policy,
)
from .pointconv import FeatureExtractor, PyramidBatch, build_pyramid

__all__ = [
    "CandidateClassifierNet",
    "ClassifierSelector",
    "DensePredictorNet",
    "DensePredictorSelector",
    "FeatureExtractor",
    "FixedPointsSelector",
    "MPConfig",
    "MPSelection",
    "MP_MAGIC",
    "OracleSelector",
    "POLICY_MAGIC",
    "PolicyConfig",
    "PolicyNet",
    "PyramidBatch",
    "TrainResult",
    "UniformRandomSelector",
    "build_pyramid",
    "classify_candidate",
    "dense_predict",
    "evaluate_loss",
    "geodesic_angle",
    "infer_action",
    "learning_rate",
    "load_mp_model",
    "load_policy",
    "policy_loss",
    "rot6d_to_matrix",
    "save_mp_model",
    "save_policy",
    "select_by_classifier",
    "train_classifier",
    "train_dense_predictor",
    "train_policy",
]
