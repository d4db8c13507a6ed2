"""Mask-conditioned diffusion inpainting for multicontrast lesion filling and synthesis."""

__version__ = "0.1.0"
