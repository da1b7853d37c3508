"""Column meshes over terrain: volumes, faces, swept volumes, mesh fluxes.

Mesh layout
-----------
The domain is [-L, L]^2 x [0, H] discretised into n x n columns with one
vertical layer.  Vertices form an (n+1) x (n+1) grid indexed [i, j] with
i along x and j along y.  Each vertex carries a horizontal position and a
bottom height sampled from the terrain at that position; the top of every
column is the flat lid z = H.

Cell (i, j) is the hexahedron with bottom corners at vertices (i,j),
(i+1,j), (i+1,j+1), (i,j+1) and matching top corners.  Local vertex order
is bottom counterclockwise seen from above, then the tops:

        3 ---- 2        7 ---- 6
        |  bot |        |  top |
        0 ---- 1        4 ---- 5

Volumes are computed by triangulating every face about its centre point
and summing signed tetrahedra against a reference point inside the cell.
Centres are formed from diagonal pairs, ((v0+v2) + (v1+v3))/4, which is
invariant under cyclic rotation and reversal of the quad; this makes
swept-volume antisymmetry exact in floating point.

Faces
-----
x-faces sit between vertex columns (i, j) and (i, j+1); there are
(n+1) x n of them and their area vectors point in +x.  y-faces sit
between (i, j) and (i+1, j), shaped n x (n+1), pointing +y.  Lateral
faces are planar (all four corners share a vertical plane).  The bottom
face of a cell is in general non-planar; its centre triangulation defines
the terrain surface the volume formula integrates.

Mesh fluxes
-----------
When vertices move, each lateral face sweeps a hexahedral volume, signed
positive along the face normal.  Boundary faces are pinned to the walls
and sweep exactly zero; their entries are zeroed explicitly.  Top and
bottom faces are not swept, so over terrain the per-cell identity
"volume change = sum of swept volumes" does not close; the advection
scheme carries the mismatch in the volume-adjustment field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .orography import OrographySpec, sample_orography


class MeshTanglingError(RuntimeError):
    """A displaced mesh produced a non-positive cell volume."""


# faces of the local hexahedron, counterclockwise seen from outside
_HEX_FACES = (
    (0, 3, 2, 1),  # bottom, outward -z
    (4, 5, 6, 7),  # top, outward +z
    (0, 1, 5, 4),  # south, outward -y
    (1, 2, 6, 5),  # east, outward +x
    (2, 3, 7, 6),  # north, outward +y
    (3, 0, 4, 7),  # west, outward -x
)


def _quad_centre(quad):
    """Diagonal-pair mean of a quad (..., 4, 3); order-invariant."""
    return ((quad[..., 0, :] + quad[..., 2, :]) + (quad[..., 1, :] + quad[..., 3, :])) / 4.0


def _quad_area_vector(quad):
    """Area vector of a (possibly non-planar) quad, 0.5 * sum of edge cross products."""
    c = _quad_centre(quad)
    rel = quad - c[..., None, :]
    s = np.zeros(quad.shape[:-2] + (3,))
    for k in range(4):
        s += np.cross(rel[..., k, :], rel[..., (k + 1) % 4, :])
    return 0.5 * s


def _face_cone_term(quad, ref):
    """6x the signed volume of the cone from ``ref`` over one face.

    The four tetrahedron terms combine pairwise, (t0+t2) + (t1+t3), which
    together with the diagonal-pair centre makes the result invariant
    under rotation of the quad cycle and exactly negated under reversal.
    """
    fc = _quad_centre(quad) - ref
    rel = quad - ref[..., None, :]
    t = [
        np.einsum(
            "...k,...k->...", fc, np.cross(rel[..., k, :], rel[..., (k + 1) % 4, :])
        )
        for k in range(4)
    ]
    return (t[0] + t[2]) + (t[1] + t[3])


def hex_volumes(verts):
    """Signed volumes of hexahedra ``verts`` (..., 8, 3).

    Faces are triangulated about their centre points and summed as signed
    tetrahedra against the mean of the eight corners.  Positive for cells
    ordered as in the module docstring.  The summation structure is
    chosen so that exchanging the bottom and top quads negates the result
    bitwise (exact swept-volume antisymmetry).
    """
    v = np.asarray(verts, dtype=float)
    bsum = (v[..., 0, :] + v[..., 2, :]) + (v[..., 1, :] + v[..., 3, :])
    tsum = (v[..., 4, :] + v[..., 6, :]) + (v[..., 5, :] + v[..., 7, :])
    ref = (bsum + tsum) / 8.0
    cones = [_face_cone_term(v[..., face, :], ref) for face in _HEX_FACES]
    vol = (cones[0] + cones[1]) + ((cones[2] + cones[3]) + (cones[4] + cones[5]))
    return vol / 6.0


def cell_volume(verts):
    """Volume of a single hexahedral cell given its 8 corners."""
    v = np.asarray(verts, dtype=float)
    if v.shape != (8, 3):
        raise ValueError("cell_volume expects an (8, 3) corner array")
    return float(hex_volumes(v[None])[0])


def swept_volume(quad_old, quad_new):
    """Signed volume swept by a face moving from ``quad_old`` to ``quad_new``.

    Both quads are (4, 3) in the face's own orientation (counterclockwise
    seen from the normal side); the result is positive for motion along
    the normal.  Exchanging old and new flips the sign exactly.
    """
    q0 = np.asarray(quad_old, dtype=float)
    q1 = np.asarray(quad_new, dtype=float)
    if q0.shape != (4, 3) or q1.shape != (4, 3):
        raise ValueError("swept_volume expects two (4, 3) corner arrays")
    return float(hex_volumes(np.concatenate([q0, q1])[None])[0])


@dataclass(frozen=True, eq=False)
class ColumnMesh:
    """Structured column mesh with precomputed face geometry.

    Face arrays: ``area_x``/``centre_x`` are (n+1, n, 3) for x-faces,
    ``area_y``/``centre_y`` are (n, n+1, 3), and the top/bottom face data
    are (n, n, 3).  Area vectors of lateral faces point +x / +y; top and
    bottom point outward (+z above, downward-tilted below).
    """

    n: int
    half_length: float
    height: float
    orography: OrographySpec
    vertex_x: np.ndarray
    vertex_y: np.ndarray
    vertex_bottom: np.ndarray
    volumes: np.ndarray = field(repr=False)
    cell_centres: np.ndarray = field(repr=False)
    area_x: np.ndarray = field(repr=False)
    centre_x: np.ndarray = field(repr=False)
    area_y: np.ndarray = field(repr=False)
    centre_y: np.ndarray = field(repr=False)
    area_top: np.ndarray = field(repr=False)
    centre_top: np.ndarray = field(repr=False)
    area_bottom: np.ndarray = field(repr=False)
    centre_bottom: np.ndarray = field(repr=False)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.n

    def vertex_positions(self):
        """Horizontal vertex positions stacked as (n+1, n+1, 2)."""
        return np.stack([self.vertex_x, self.vertex_y], axis=-1)

    def cell_corner_array(self):
        """All cell corners as (n, n, 8, 3) in local hexahedron order."""
        return _cell_corners(self.vertex_x, self.vertex_y, self.vertex_bottom, self.height)


def _cell_corners(vx, vy, vb, height):
    n = vx.shape[0] - 1
    verts = np.empty((n, n, 8, 3))
    corner_ij = ((0, 0), (1, 0), (1, 1), (0, 1))
    for k, (di, dj) in enumerate(corner_ij):
        sx = vx[di : di + n, dj : dj + n]
        sy = vy[di : di + n, dj : dj + n]
        sb = vb[di : di + n, dj : dj + n]
        verts[:, :, k, 0] = sx
        verts[:, :, k, 1] = sy
        verts[:, :, k, 2] = sb
        verts[:, :, 4 + k, 0] = sx
        verts[:, :, 4 + k, 1] = sy
        verts[:, :, 4 + k, 2] = height
    return verts


def _x_face_quads(vx, vy, vb, height):
    """Quads of all x-faces, (n+1, n, 4, 3), oriented +x.

    Corners run bottom (i,j), bottom (i,j+1), top (i,j+1), top (i,j).
    """
    nv = vx.shape[0]
    q = np.empty((nv, nv - 1, 4, 3))
    a = (vx[:, :-1], vy[:, :-1], vb[:, :-1])
    b = (vx[:, 1:], vy[:, 1:], vb[:, 1:])
    for c in range(2):
        q[:, :, 0, c] = a[c]
        q[:, :, 1, c] = b[c]
        q[:, :, 2, c] = b[c]
        q[:, :, 3, c] = a[c]
    q[:, :, 0, 2] = a[2]
    q[:, :, 1, 2] = b[2]
    q[:, :, 2, 2] = height
    q[:, :, 3, 2] = height
    return q


def _y_face_quads(vx, vy, vb, height):
    """Quads of all y-faces, (n, n+1, 4, 3), oriented +y.

    Corners run bottom (i+1,j), bottom (i,j), top (i,j), top (i+1,j).
    """
    nv = vx.shape[0]
    q = np.empty((nv - 1, nv, 4, 3))
    a = (vx[:-1, :], vy[:-1, :], vb[:-1, :])
    b = (vx[1:, :], vy[1:, :], vb[1:, :])
    for c in range(2):
        q[:, :, 0, c] = b[c]
        q[:, :, 1, c] = a[c]
        q[:, :, 2, c] = a[c]
        q[:, :, 3, c] = b[c]
    q[:, :, 0, 2] = b[2]
    q[:, :, 1, 2] = a[2]
    q[:, :, 2, 2] = height
    q[:, :, 3, 2] = height
    return q


def _assemble_mesh(n, half_length, height, orography, vx, vy):
    vb = sample_orography(np.stack([vx, vy], axis=-1), orography)
    corners = _cell_corners(vx, vy, vb, height)
    volumes = hex_volumes(corners)
    if not np.all(np.isfinite(volumes)):
        raise ValueError("non-finite cell volume; check vertex positions")
    if volumes.min() <= 0.0:
        bad = np.unravel_index(int(np.argmin(volumes)), volumes.shape)
        raise MeshTanglingError(
            f"cell {bad} has non-positive volume {volumes.min():.6g}; mesh is tangled"
        )
    bsum = (corners[:, :, 0, :] + corners[:, :, 2, :]) + (corners[:, :, 1, :] + corners[:, :, 3, :])
    tsum = (corners[:, :, 4, :] + corners[:, :, 6, :]) + (corners[:, :, 5, :] + corners[:, :, 7, :])
    cell_centres = (bsum + tsum) / 8.0

    qx = _x_face_quads(vx, vy, vb, height)
    qy = _y_face_quads(vx, vy, vb, height)
    top = corners[:, :, (4, 5, 6, 7), :]
    bot = corners[:, :, (0, 3, 2, 1), :]
    return ColumnMesh(
        n=n,
        half_length=half_length,
        height=height,
        orography=orography,
        vertex_x=vx,
        vertex_y=vy,
        vertex_bottom=vb,
        volumes=volumes,
        cell_centres=cell_centres,
        area_x=_quad_area_vector(qx),
        centre_x=_quad_centre(qx),
        area_y=_quad_area_vector(qy),
        centre_y=_quad_centre(qy),
        area_top=_quad_area_vector(top),
        centre_top=_quad_centre(top),
        area_bottom=_quad_area_vector(bot),
        centre_bottom=_quad_centre(bot),
    )


def build_mesh(n: int, half_length: float, height: float, orography: OrographySpec) -> ColumnMesh:
    """Uniform n x n column mesh over the given terrain."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if half_length <= 0.0 or height <= 0.0:
        raise ValueError("half_length and height must be positive")
    if orography.peak_magnitude() >= height:
        raise ValueError(
            f"terrain magnitude {orography.peak_magnitude():.6g} reaches the lid height {height:.6g}"
        )
    coords = np.linspace(-half_length, half_length, n + 1)
    vx, vy = np.meshgrid(coords, coords, indexing="ij")
    return _assemble_mesh(n, half_length, height, orography, vx.copy(), vy.copy())


def apply_vertex_positions(mesh: ColumnMesh, new_xy) -> ColumnMesh:
    """Rebuild ``mesh`` with vertices at ``new_xy`` (n+1, n+1, 2).

    Bottom heights are re-sampled from the terrain at the new positions.
    Boundary vertices must stay on their wall exactly; tangling raises
    ``MeshTanglingError``.
    """
    xy = np.asarray(new_xy, dtype=float)
    nv = mesh.n + 1
    if xy.shape != (nv, nv, 2):
        raise ValueError(f"expected vertex array of shape {(nv, nv, 2)}, got {xy.shape}")
    L = mesh.half_length
    vx = xy[..., 0].copy()
    vy = xy[..., 1].copy()
    for name, ok in (
        ("x = -L wall", np.all(vx[0, :] == -L)),
        ("x = +L wall", np.all(vx[-1, :] == L)),
        ("y = -L wall", np.all(vy[:, 0] == -L)),
        ("y = +L wall", np.all(vy[:, -1] == L)),
    ):
        if not ok:
            raise ValueError(f"boundary vertices moved off the {name}")
    return _assemble_mesh(mesh.n, L, mesh.height, mesh.orography, vx, vy)


@dataclass(frozen=True)
class SweptVolumeSet:
    """Signed swept volumes of all lateral faces over one step.

    ``swept_x`` is (n+1, n) signed +x, ``swept_y`` is (n, n+1) signed +y;
    boundary faces are identically zero.  Mesh fluxes are swept / dt.
    """

    swept_x: np.ndarray
    swept_y: np.ndarray
    dt: float

    @property
    def flux_x(self):
        return self.swept_x / self.dt

    @property
    def flux_y(self):
        return self.swept_y / self.dt


def cell_face_sum(fx, fy):
    """Per-cell sum of outward face values for +x/+y signed face arrays."""
    return (fx[1:, :] - fx[:-1, :]) + (fy[:, 1:] - fy[:, :-1])


def mesh_fluxes(mesh_old: ColumnMesh, mesh_new: ColumnMesh, dt: float) -> SweptVolumeSet:
    """Swept volumes of every lateral face between two mesh states."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if mesh_old.n != mesh_new.n:
        raise ValueError("meshes have different resolutions")
    args_old = (mesh_old.vertex_x, mesh_old.vertex_y, mesh_old.vertex_bottom, mesh_old.height)
    args_new = (mesh_new.vertex_x, mesh_new.vertex_y, mesh_new.vertex_bottom, mesh_new.height)
    qx = np.concatenate([_x_face_quads(*args_old), _x_face_quads(*args_new)], axis=2)
    qy = np.concatenate([_y_face_quads(*args_old), _y_face_quads(*args_new)], axis=2)
    sx = hex_volumes(qx)
    sy = hex_volumes(qy)
    # wall faces slide in their own plane; pin their sweep to exactly zero
    sx[0, :] = 0.0
    sx[-1, :] = 0.0
    sy[:, 0] = 0.0
    sy[:, -1] = 0.0
    return SweptVolumeSet(swept_x=sx, swept_y=sy, dt=dt)


def courant_number(mesh_old: ColumnMesh, swept: SweptVolumeSet):
    """Mesh Courant numbers per cell.

    Returns ``(c_net, c_inward)``: the signed net number
    (dt / V) * sum of outward mesh fluxes, and the inward-only magnitude
    sum that bounds positivity of the transported volume adjustment.
    """
    v = mesh_old.volumes
    c_net = cell_face_sum(swept.swept_x, swept.swept_y) / v
    inward = (
        np.maximum(swept.swept_x[:-1, :], 0.0)
        - np.minimum(swept.swept_x[1:, :], 0.0)
        + np.maximum(swept.swept_y[:, :-1], 0.0)
        - np.minimum(swept.swept_y[:, 1:], 0.0)
    )
    return c_net, inward / v
