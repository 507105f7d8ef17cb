"""Prior-bridge sidecar: serves a diffusion checkpoint over the wire protocol."""

__version__ = "0.1.0"
