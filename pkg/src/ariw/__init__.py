"""Adaptive robust iterative image watermarking."""

from .attacks import AttackSpec, AttackSuite, apply_attack, jpeg_quant_tables
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import LossWeights, TrainConfig, load_config, parse_config
from .decoder import extract
from .encoder import InitState, embed
from .gradmap import GradMode
from .metrics import bit_accuracy, psnr, ssim
from .model import ARIWModel
from .tensor_core import RngStream
from .trainer import Trainer, train
from .wm_codec import bits_to_hex, hex_to_bits

__version__ = "0.1.0"
