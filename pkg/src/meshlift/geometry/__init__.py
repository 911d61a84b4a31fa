"""Cameras, view configurations, projection, and analytic SDF shapes."""

from .cameras import (DEFAULT_RING_AZIMUTHS, DEFAULT_RING_ELEVATIONS, Camera,
                      ViewSet, bounding_sphere_min_depth, camera_from_angles,
                      look_at, make_ring_views, orbit_position, project,
                      training_viewset, uniform_view_sphere, unproject)
from .shapes import (Box, Capsule, Intersection, Pose, Primitive, RoundedBox,
                     Scaled, SdfNode, ShapeSDF, SmoothUnion, Sphere,
                     Superellipsoid, Translated, Union, random_rotation,
                     sdf_eval)

__all__ = [
    "Camera", "ViewSet", "project", "unproject", "look_at", "orbit_position",
    "camera_from_angles", "make_ring_views", "training_viewset",
    "uniform_view_sphere", "bounding_sphere_min_depth",
    "DEFAULT_RING_AZIMUTHS", "DEFAULT_RING_ELEVATIONS",
    "ShapeSDF", "SdfNode", "Primitive", "Pose", "Sphere", "Box", "RoundedBox",
    "Capsule", "Superellipsoid", "Union", "Intersection", "SmoothUnion",
    "Scaled", "Translated", "random_rotation", "sdf_eval",
]
