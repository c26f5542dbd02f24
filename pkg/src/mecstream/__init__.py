"""Simulator and profit optimizer for serverless adaptive 3D-media streaming sessions."""

__version__ = "0.1.0"
