"""Spectral sequence compression for transformers.

FFT-based DCT downsampling of hidden states, a minimal numpy training
substrate hosting it, desk-scale tasks, and performance analysis tools.
"""

__version__ = "0.1.0"

from .dct import (DctPlan, SpectrumTensor, build_plan, dct_fft, dct_naive,
                  idct_fft, idct_naive, power_spectrum, spectral_centroid,
                  spectral_downsample, truncate_spectrum)
from .model import FilterSpec, ModelConfig, build_model, presets

__all__ = [
    "DctPlan", "SpectrumTensor", "build_plan", "dct_fft", "dct_naive",
    "idct_fft", "idct_naive", "power_spectrum", "spectral_centroid",
    "spectral_downsample", "truncate_spectrum",
    "FilterSpec", "ModelConfig", "build_model", "presets",
    "__version__",
]
