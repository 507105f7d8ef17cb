from .base import IdentityRenderer, RenderSpec
from .fm import FMParams, FMRenderer, envelope
from .impact import (
    ImpactParams,
    ImpactRenderer,
    bandpass,
    fft_convolve,
    init_impact_params,
)

__all__ = [
    "RenderSpec",
    "IdentityRenderer",
    "FMParams",
    "FMRenderer",
    "envelope",
    "ImpactParams",
    "ImpactRenderer",
    "bandpass",
    "fft_convolve",
    "init_impact_params",
]
