"""Visual entailment with chunk-grounded, lexically constrained explanations."""

from .config import DataConfig, DecodeConfig, ModelConfig, TrainConfig
from .data import generate_dataset, load_dataset, make_vocabulary
from .decoding import Beam, beam_sample, constrained_beam_sample, top_k_sample_step
from .evaluate import EvalReport, evaluate, explain_record
from .generator import ConstraintState, build_constraint_set
from .model import Model
from .training import pretrain_alignment, train_generator, train_inference

__version__ = "0.1.0"

__all__ = [
    "Beam",
    "ConstraintState",
    "DataConfig",
    "DecodeConfig",
    "EvalReport",
    "Model",
    "ModelConfig",
    "TrainConfig",
    "beam_sample",
    "build_constraint_set",
    "constrained_beam_sample",
    "evaluate",
    "explain_record",
    "generate_dataset",
    "load_dataset",
    "make_vocabulary",
    "pretrain_alignment",
    "top_k_sample_step",
    "train_generator",
    "train_inference",
]
