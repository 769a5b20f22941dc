"""Point-language association: geometry, pair building, training and evaluation."""

from ._pla import (
    InputError,
    NumericError,
    associate,
    calibrate,
    entity_pairs,
    evaluate,
    extract_entities,
    harmonic_mean_iou,
    inspect,
    synth,
    train,
    view_overlap,
)
from ._pla import eval_run as eval  # noqa: A001

__all__ = [
    "InputError",
    "NumericError",
    "associate",
    "calibrate",
    "entity_pairs",
    "eval",
    "evaluate",
    "extract_entities",
    "harmonic_mean_iou",
    "inspect",
    "synth",
    "train",
    "view_overlap",
]
