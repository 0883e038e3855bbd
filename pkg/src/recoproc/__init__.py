"""Image processing models trained to keep their outputs recognizable.

A processing model P (super-resolution, denoising, JPEG deblocking) is
trained on a pixel loss plus, optionally, the loss of a frozen recognizer R
applied to P's output.
"""

from .config import ExperimentConfig
from .degradations import DegradationSpec
from .errors import (
    ConfigError,
    CorruptCheckpoint,
    DecodeError,
    DivergedError,
    InvalidDataset,
    InvalidParam,
    InvalidSpec,
    InvalidSplit,
    LabelError,
    NotFound,
    RecoprocError,
    ShapeError,
)
from .harness import EvalRecord, evaluate_pipeline, lambda_sweep, transfer_matrix
from .metrics import psnr, ssim, top1_accuracy
from .models import ModelCheckpoint, load_checkpoint
from .training import pretrain_recognizer, train_processor

__version__ = "0.1.0"
