"""Cascaded diffusion pipeline for rhythm-aligned skeletal motion generation.

A self-contained desk-scale stack: a tiny reverse-mode tensor core, motion
representation and kinematics, two transformer denoisers (base low-FPS model
and a sequence super-resolution model), contrastive audio/motion alignment,
rhythm-aware evaluation metrics, and a CLI that drives the whole pipeline on
synthetic rhythmic data.
"""

__version__ = "0.1.0"

from .rng import SplitMix64
from .tensor import Tensor, Tape, backward

__all__ = ["SplitMix64", "Tensor", "Tape", "backward", "__version__"]
