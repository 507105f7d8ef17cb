"""Score-distillation optimization toolkit for parametric audio.

Distills a pluggable text-conditioned audio diffusion prior into explicit
audio representations: an FM synthesizer, a modal impact-sound model, and
multi-source latent decompositions for prompt-guided separation.
"""

from ._kernels import KERNEL_BACKEND
from .waveform import Waveform
from .spectrogram import (
    SpectrogramConfig,
    SpectrogramStack,
    multiscale_spectrogram,
    multiscale_vjp,
    spectral_recon_loss,
    stft_magnitude,
)
from .wavio import wav_read, wav_write
from .sds import SDSConfig, UpdateReport, sds_update
from .metrics import si_sdr, build_separation_report
from .optimize import OptimizerSettings, SynthesisTask, optimize
from .separation import SeparationProblem, SourceSpec, baseline_assignment

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Waveform",
    "SpectrogramConfig",
    "SpectrogramStack",
    "multiscale_spectrogram",
    "multiscale_vjp",
    "spectral_recon_loss",
    "stft_magnitude",
    "wav_read",
    "wav_write",
    "SDSConfig",
    "UpdateReport",
    "sds_update",
    "si_sdr",
    "build_separation_report",
    "OptimizerSettings",
    "SynthesisTask",
    "optimize",
    "SeparationProblem",
    "SourceSpec",
    "baseline_assignment",
]
