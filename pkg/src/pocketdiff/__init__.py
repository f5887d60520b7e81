"""Pocket-conditioned 3D molecular diffusion with adaptive self-conditioned
training, plus the evaluation toolkit and synthetic corpus generator."""

__version__ = "0.1.0"
