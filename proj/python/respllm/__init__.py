"""Python bindings for the respllm C++ library."""

from ._core import (
    ContractViolation,
    MODEL_KINDS,
    auroc,
    evaluate,
    gradcheck,
    load_records,
    log_mel,
    prepare,
    pretrain,
    synth,
    train,
)

__all__ = [
    "ContractViolation",
    "MODEL_KINDS",
    "auroc",
    "evaluate",
    "gradcheck",
    "load_records",
    "log_mel",
    "prepare",
    "pretrain",
    "synth",
    "train",
]
