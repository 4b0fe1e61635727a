"""Lightweight 1-D convolutional sequence models on a small numpy autodiff engine."""
from .blocks import ConvEncoder, EncoderConfig, VARIANTS
from .config import Config, REPRESENTATIONS, load as load_config
from .cost import cost_report, param_count
from .models import build_model
from .serialize import load_artifact, save_artifact
from .tensor import Tensor, make_rng, no_grad

__version__ = "0.1.0"

__all__ = [
    "Config", "ConvEncoder", "EncoderConfig", "REPRESENTATIONS", "Tensor", "VARIANTS",
    "build_model", "cost_report", "load_artifact", "load_config", "make_rng", "no_grad",
    "param_count", "save_artifact",
]
