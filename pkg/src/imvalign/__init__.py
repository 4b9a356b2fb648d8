"""Single-step non-autoregressive transduction with index-mapping-vector alignment."""

from .alignment import AlignmentBundle, DegenerateAlignment, ReconstructionBundle, generator_forward
from .checkpoint import CheckpointError, load_model, save_checkpoint
from .data import SynthTaskConfig, TranscriptionExample, gen_corpus, read_corpus, write_corpus
from .model import Hypothesis, ModelConfig, Transducer
from .predictor import PredictorConfig, predict_length
from .scoring import ScoreReport, edit_distance, evaluate_corpus
from .tensor import Parameter, Tape, Tensor, no_grad
from .train import TrainConfig, Trainer

__version__ = "0.1.0"

__all__ = [
    "AlignmentBundle", "CheckpointError", "DegenerateAlignment", "Hypothesis", "ModelConfig", "Parameter",
    "PredictorConfig", "ReconstructionBundle", "ScoreReport", "SynthTaskConfig", "Tape", "Tensor",
    "TrainConfig", "Trainer", "Transducer", "TranscriptionExample", "edit_distance", "evaluate_corpus",
    "gen_corpus", "generator_forward", "load_model", "no_grad", "predict_length", "read_corpus",
    "save_checkpoint", "write_corpus",
]
