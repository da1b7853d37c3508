"""Analytic terrain profiles.

Terrain is described by a small spec object and sampled pointwise at
vertex positions, so a mesh whose vertices slide horizontally re-samples
the terrain under the new positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("flat", "smooth_cosine", "steep_cylinder")


@dataclass(frozen=True)
class OrographySpec:
    """Terrain description.

    ``smooth_cosine`` places a cosine hill of height ``h_max`` at
    ``hill_center`` and a cosine depression of depth ``h_min`` (signed)
    at ``valley_center``, both of radius ``radius``.  ``steep_cylinder``
    uses flat-topped cylinders of height ``h_c`` / depth ``-h_c`` instead.
    """

    kind: str = "flat"
    hill_center: tuple[float, float] = (-2500.0, 0.0)
    valley_center: tuple[float, float] = (2500.0, 0.0)
    radius: float = 1000.0
    h_max: float = 500.0
    h_min: float = -500.0
    h_c: float = 500.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown orography kind {self.kind!r}, expected one of {KINDS}")
        if self.radius <= 0.0:
            raise ValueError("orography radius must be positive")

    def peak_magnitude(self) -> float:
        """Largest |h| the profile can reach."""
        if self.kind == "flat":
            return 0.0
        if self.kind == "smooth_cosine":
            return max(abs(self.h_max), abs(self.h_min))
        return abs(self.h_c)


def sample_orography(points, spec: OrographySpec):
    """Terrain height at horizontal positions ``points`` (..., 2)."""
    p = np.asarray(points, dtype=float)
    x = p[..., 0]
    y = p[..., 1]
    if spec.kind == "flat":
        return np.zeros_like(x)

    r_h = np.hypot(x - spec.hill_center[0], y - spec.hill_center[1])
    r_v = np.hypot(x - spec.valley_center[0], y - spec.valley_center[1])
    a = spec.radius
    if spec.kind == "smooth_cosine":
        hill = 0.5 * spec.h_max * (1.0 + np.cos(np.pi * np.minimum(r_h, a) / a))
        valley = 0.5 * spec.h_min * (1.0 + np.cos(np.pi * np.minimum(r_v, a) / a))
        # hill branch wins where the disks overlap
        return np.where(r_h <= a, hill, np.where(r_v <= a, valley, 0.0))
    # steep_cylinder
    return np.where(r_h <= a, spec.h_c, np.where(r_v <= a, -spec.h_c, 0.0))
