"""meshlift: sparse-view 3D reconstruction with a differentiable mesh decoder."""

__version__ = "0.1.0"
