from .types import Conditioning, Latent
from .schedule import CosineSchedule, TableSchedule
from .ops import add_noise, cfg_combine
from .backends import (
    FrozenTargetBackend,
    OracleBackend,
    PriorBackend,
    ToyPriorBackend,
)
from .toy import CorpusSpec, SignalClassSpec, ToyPriorCheckpoint, TrainingConfig, train_toy_prior

__all__ = [
    "Latent",
    "Conditioning",
    "CosineSchedule",
    "TableSchedule",
    "add_noise",
    "cfg_combine",
    "PriorBackend",
    "OracleBackend",
    "FrozenTargetBackend",
    "ToyPriorBackend",
    "CorpusSpec",
    "SignalClassSpec",
    "TrainingConfig",
    "ToyPriorCheckpoint",
    "train_toy_prior",
]
