"""Differentiable isosurface extraction and mesh-quality regularizers."""

from .extract import (Mesh, RegWeights, ScalarGrid, VertexJacobians,
                      edge_face_counts, euler_characteristic, extract_mesh,
                      is_closed_manifold, load_obj, reg_loss, save_obj,
                      undirected_edges, vertex_gradients)

__all__ = [
    "ScalarGrid", "Mesh", "extract_mesh", "vertex_gradients",
    "VertexJacobians", "reg_loss", "RegWeights", "euler_characteristic",
    "is_closed_manifold", "undirected_edges", "edge_face_counts",
    "save_obj", "load_obj",
]
