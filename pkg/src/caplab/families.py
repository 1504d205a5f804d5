"""Closed-form capillary families with exact geometry and structured meshes.

Conventions, used consistently everywhere: the surface normal N is the one
that makes the mean curvature nonnegative (inward for spheres, caps and
tubes), the supporting wall of a cap is the plane z = 0 with exterior domain
normal -e3, and the sphere center of a cap of angle theta sits at height
-R cos(theta), so that cos(theta) = <N, n1> along the boundary circle. The
wall passes through the origin, which the integral identities rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discops import GeometryFields
from .errors import (
    DegenerateFamilyError,
    InvalidSpecError,
    UnsupportedFamilyError,
)
from .meshkit import Hyperplane, LabeledTriMesh, WallSet

__all__ = [
    "FamilySpec",
    "Cap",
    "Cylinder",
    "FlatDisk",
    "ClosedSphere",
    "MongePatch",
    "CapClosedForms",
    "cap_closed_forms",
    "generate_mesh",
    "exact_fields",
    "surface_projector",
    "analytic_test_function",
]

E3 = np.array([0.0, 0.0, 1.0])


class FamilySpec:
    """Base class of the analytic family specifications."""

    def _check_resolution(self):
        if not isinstance(self.resolution, int) or self.resolution < 3:
            raise InvalidSpecError(f"resolution must be an integer >= 3, got {self.resolution}")

    def walls(self) -> WallSet | None:
        """Supporting wall set induced by the family, None for bare immersions."""
        return None


@dataclass(frozen=True)
class Cap(FamilySpec):
    """Spherical cap of radius R meeting the wall z = 0 at contact angle theta."""

    R: float
    theta: float
    resolution: int

    def __post_init__(self):
        self._check_resolution()
        if self.R <= 0:
            raise InvalidSpecError(f"cap radius must be positive, got {self.R}")
        if not 0.0 < self.theta < math.pi:
            raise InvalidSpecError(f"contact angle {self.theta} outside (0, pi)")
        if self.R * math.sin(self.theta) < 1e-8 * self.R:
            raise DegenerateFamilyError("cap boundary circle is numerically degenerate")

    @property
    def center(self):
        return np.array([0.0, 0.0, -self.R * math.cos(self.theta)])

    def walls(self):
        return WallSet((Hyperplane(-E3, 0.0),), (self.theta,))


@dataclass(frozen=True)
class Cylinder(FamilySpec):
    """Tube of radius r between the slab walls z = 0 and z = L (free boundary)."""

    r: float
    L: float
    resolution: int

    def __post_init__(self):
        self._check_resolution()
        if self.r <= 0 or self.L <= 0:
            raise InvalidSpecError("cylinder radius and length must be positive")

    def walls(self):
        return WallSet(
            (Hyperplane(-E3, 0.0), Hyperplane(E3, self.L)),
            (math.pi / 2, math.pi / 2),
        )


@dataclass(frozen=True)
class FlatDisk(FamilySpec):
    """Flat disk of radius R in the plane z = 0 (minimal, free boundary)."""

    R: float
    resolution: int

    def __post_init__(self):
        self._check_resolution()
        if self.R <= 0:
            raise InvalidSpecError(f"disk radius must be positive, got {self.R}")

    def walls(self):
        return WallSet((Hyperplane(-E3, 0.0),), (math.pi / 2,))


@dataclass(frozen=True)
class ClosedSphere(FamilySpec):
    """Round sphere of radius R centered at the origin, no boundary."""

    R: float
    resolution: int

    def __post_init__(self):
        self._check_resolution()
        if self.R <= 0:
            raise InvalidSpecError(f"sphere radius must be positive, got {self.R}")


@dataclass(frozen=True)
class MongePatch(FamilySpec):
    """Graph z = amplitude sin(x) sin(y) over the disk of radius R.

    Not capillary; used for identities that hold for arbitrary immersions.
    """

    amplitude: float
    R: float
    resolution: int

    def __post_init__(self):
        self._check_resolution()
        if self.amplitude < 0:
            raise InvalidSpecError("amplitude must be nonnegative")
        if self.R <= 0:
            raise InvalidSpecError(f"patch radius must be positive, got {self.R}")

    def height(self, x, y):
        return self.amplitude * np.sin(x) * np.sin(y)

    def gradient(self, x, y):
        a = self.amplitude
        return a * np.cos(x) * np.sin(y), a * np.sin(x) * np.cos(y)

    def hessian(self, x, y):
        a = self.amplitude
        fxx = -a * np.sin(x) * np.sin(y)
        fxy = a * np.cos(x) * np.cos(y)
        return fxx, fxy, fxx


@dataclass(frozen=True)
class CapClosedForms:
    """Exact geometric quantities of a spherical cap."""

    area: float
    wetted_area: float
    boundary_length: float
    energy: float
    volume: float
    mean_curv: float


def cap_closed_forms(R: float, theta: float) -> CapClosedForms:
    """Closed forms for the cap of radius R and contact angle theta.

    area = 2 pi R^2 (1 - cos theta), wetted area = pi R^2 sin^2 theta,
    energy = area - cos(theta) * wetted area, H = 1/R; the enclosed volume is
    that of the spherical segment above the wall.
    """
    if R <= 0:
        raise InvalidSpecError(f"cap radius must be positive, got {R}")
    if not 0.0 < theta < math.pi:
        raise InvalidSpecError(f"contact angle {theta} outside (0, pi)")
    c = math.cos(theta)
    s = math.sin(theta)
    area = 2.0 * math.pi * R * R * (1.0 - c)
    wetted = math.pi * R * R * s * s
    return CapClosedForms(
        area=area,
        wetted_area=wetted,
        boundary_length=2.0 * math.pi * R * s,
        energy=area - c * wetted,
        volume=math.pi * R**3 * (1.0 - c) ** 2 * (2.0 + c) / 3.0,
        mean_curv=1.0 / R,
    )


# -- structured mesh builders ---------------------------------------------------


def _ring_indices(base, count):
    return base + np.arange(count)


def _strip(ring_a, ring_b):
    """Quads between two same-length rings, split into triangles."""
    n = len(ring_a)
    ln = np.arange(n)
    lp = (ln + 1) % n
    a, b = ring_a[ln], ring_a[lp]
    d, c = ring_b[ln], ring_b[lp]
    return np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])


def _fan(apex, ring, reverse=False):
    n = len(ring)
    ln = np.arange(n)
    lp = (ln + 1) % n
    if reverse:
        return np.column_stack([np.full(n, apex), ring[lp], ring[ln]])
    return np.column_stack([np.full(n, apex), ring[ln], ring[lp]])


def _orient_to(tris, positions, target_normals):
    """Flip all windings if face normals disagree with the target field."""
    cr = np.cross(
        positions[tris[:, 1]] - positions[tris[:, 0]],
        positions[tris[:, 2]] - positions[tris[:, 0]],
    )
    mean_target = (
        target_normals[tris[:, 0]] + target_normals[tris[:, 1]] + target_normals[tris[:, 2]]
    )
    if float(np.einsum("ij,ij->i", cr, mean_target).sum()) < 0:
        tris = tris[:, [0, 2, 1]]
    return tris


def _azimuth_count(spec):
    return int(spec.resolution)


def _cap_rings(spec):
    # meridian subdivisions balancing the equatorial azimuthal spacing
    n = _azimuth_count(spec)
    return max(2, round(n * spec.theta / (2.0 * math.pi * math.sin(spec.theta))))


def _build_cap(spec: Cap):
    n = _azimuth_count(spec)
    m = _cap_rings(spec)
    R, theta = spec.R, spec.theta
    c = spec.center
    alphas = 2.0 * math.pi * np.arange(n) / n
    pts = [c + np.array([0.0, 0.0, R])]
    for j in range(1, m + 1):
        phi = theta * j / m
        ring = np.column_stack(
            [
                R * math.sin(phi) * np.cos(alphas),
                R * math.sin(phi) * np.sin(alphas),
                np.full(n, R * math.cos(phi) + c[2]),
            ]
        )
        pts.append(ring)
    positions = np.vstack([pts[0][None, :], *pts[1:]])
    # the last ring sits exactly on z = 0: R cos(theta) - R cos(theta)
    positions[1 + (m - 1) * n :, 2] = R * math.cos(theta) + c[2]

    rings = [_ring_indices(1 + j * n, n) for j in range(m)]
    tris = [_fan(0, rings[0], reverse=True)]
    for j in range(m - 1):
        tris.append(_strip(rings[j], rings[j + 1]))
    tris = np.vstack(tris)
    labels = {int(v): 0 for v in rings[-1]}
    return positions, tris, labels


def _build_sphere(spec: ClosedSphere):
    n = _azimuth_count(spec)
    m = max(3, round(n / 2))
    R = spec.R
    alphas = 2.0 * math.pi * np.arange(n) / n
    rows = []
    for j in range(1, m):
        phi = math.pi * j / m
        rows.append(
            np.column_stack(
                [
                    R * math.sin(phi) * np.cos(alphas),
                    R * math.sin(phi) * np.sin(alphas),
                    np.full(n, R * math.cos(phi)),
                ]
            )
        )
    positions = np.vstack([[0.0, 0.0, R], *rows, [0.0, 0.0, -R]])
    south = positions.shape[0] - 1
    rings = [_ring_indices(1 + j * n, n) for j in range(m - 1)]
    tris = [_fan(0, rings[0], reverse=True)]
    for j in range(m - 2):
        tris.append(_strip(rings[j], rings[j + 1]))
    tris.append(_fan(south, rings[-1]))
    return positions, np.vstack(tris), {}


def _build_cylinder(spec: Cylinder):
    n = _azimuth_count(spec)
    m = max(2, round(n * spec.L / (2.0 * math.pi * spec.r)))
    alphas = 2.0 * math.pi * np.arange(n) / n
    rows = []
    for j in range(m + 1):
        z = spec.L * j / m
        rows.append(
            np.column_stack([spec.r * np.cos(alphas), spec.r * np.sin(alphas), np.full(n, z)])
        )
    positions = np.vstack(rows)
    rings = [_ring_indices(j * n, n) for j in range(m + 1)]
    tris = np.vstack([_strip(rings[j], rings[j + 1]) for j in range(m)])
    labels = {int(v): 0 for v in rings[0]}
    labels.update({int(v): 1 for v in rings[-1]})
    return positions, tris, labels


def _build_disk_grid(R, n, m):
    alphas = 2.0 * math.pi * np.arange(n) / n
    rows = []
    for j in range(1, m + 1):
        rho = R * j / m
        rows.append(np.column_stack([rho * np.cos(alphas), rho * np.sin(alphas), np.zeros(n)]))
    positions = np.vstack([[0.0, 0.0, 0.0], *rows])
    rings = [_ring_indices(1 + j * n, n) for j in range(m)]
    tris = [_fan(0, rings[0], reverse=True)]
    for j in range(m - 1):
        tris.append(_strip(rings[j], rings[j + 1]))
    return positions, np.vstack(tris), rings


def _disk_rings(spec):
    return max(2, round(_azimuth_count(spec) / (2.0 * math.pi)) + 1)


def _build_disk(spec: FlatDisk):
    positions, tris, rings = _build_disk_grid(spec.R, _azimuth_count(spec), _disk_rings(spec))
    labels = {int(v): 0 for v in rings[-1]}
    return positions, tris, labels


def _build_monge(spec: MongePatch):
    positions, tris, _ = _build_disk_grid(spec.R, _azimuth_count(spec), _disk_rings(spec))
    positions[:, 2] = spec.height(positions[:, 0], positions[:, 1])
    return positions, tris, {}


# -- exact fields ---------------------------------------------------------------


def _boundary_vertices(mesh):
    return np.array(sorted(mesh.boundary_vertex_set()), dtype=np.int64)


def _monge_normal(spec, x, y):
    fx, fy = spec.gradient(x, y)
    w = np.sqrt(1.0 + fx * fx + fy * fy)
    return np.column_stack([-fx / w, -fy / w, 1.0 / w])


def _monge_curvatures(spec, x, y):
    fx, fy = spec.gradient(x, y)
    fxx, fxy, fyy = spec.hessian(x, y)
    w2 = 1.0 + fx * fx + fy * fy
    w = np.sqrt(w2)
    H = ((1.0 + fy * fy) * fxx - 2.0 * fx * fy * fxy + (1.0 + fx * fx) * fyy) / (2.0 * w2 * w)
    K = (fxx * fyy - fxy * fxy) / (w2 * w2)
    sigma_sq = 4.0 * H * H - 2.0 * K
    return H, sigma_sq


def _monge_sigma_nn(spec, x, y, nu):
    """sigma(nu, nu) for a tangent direction nu expressed in ambient coordinates."""
    fx, fy = spec.gradient(x, y)
    fxx, fxy, fyy = spec.hessian(x, y)
    w = math.sqrt(1.0 + fx * fx + fy * fy)
    # tangent basis (1,0,fx), (0,1,fy): in-plane components of nu are its xy parts
    a, b = nu[0], nu[1]
    m1 = (1.0 + fx * fx) * a * a + 2.0 * fx * fy * a * b + (1.0 + fy * fy) * b * b
    m2 = (fxx * a * a + 2.0 * fxy * a * b + fyy * b * b) / w
    return m2 / m1 if m1 > 0 else float("nan")


def exact_fields(spec: FamilySpec, mesh: LabeledTriMesh) -> GeometryFields:
    """Analytic geometry fields evaluated at the mesh vertices.

    Positions are assumed to lie on the family surface (as produced by
    ``generate_mesh`` or projector-based refinement).
    """
    p = mesh.positions
    nv = mesh.nv
    bverts = _boundary_vertices(mesh)
    nb = len(bverts)
    conormal = np.full((nb, 3), np.nan)
    wall_conormal = np.full((nb, 3), np.nan)
    sigma_nn = np.full(nb, np.nan)
    bdry_curv = np.full(nb, np.nan)
    angle = np.full(nb, np.nan)

    if isinstance(spec, Cap):
        rhat = (p - spec.center) / spec.R
        normal = -rhat
        H = np.full(nv, 1.0 / spec.R)
        sigma_sq = np.full(nv, 2.0 / spec.R**2)
        if nb:
            q = p[bverts]
            rho = np.linalg.norm(q[:, :2], axis=1)
            rho_hat = np.zeros((nb, 3))
            rho_hat[:, 0] = q[:, 0] / rho
            rho_hat[:, 1] = q[:, 1] / rho
            ct, st = math.cos(spec.theta), math.sin(spec.theta)
            conormal = ct * rho_hat - st * E3
            wall_conormal = rho_hat
            sigma_nn[:] = 1.0 / spec.R
            bdry_curv[:] = -1.0 / (spec.R * st)
            angle[:] = spec.theta
    elif isinstance(spec, ClosedSphere):
        normal = -p / spec.R
        H = np.full(nv, 1.0 / spec.R)
        sigma_sq = np.full(nv, 2.0 / spec.R**2)
    elif isinstance(spec, Cylinder):
        rho_all = np.linalg.norm(p[:, :2], axis=1)
        normal = np.zeros((nv, 3))
        normal[:, 0] = -p[:, 0] / rho_all
        normal[:, 1] = -p[:, 1] / rho_all
        H = np.full(nv, 0.5 / spec.r)
        sigma_sq = np.full(nv, 1.0 / spec.r**2)
        if nb:
            q = p[bverts]
            rho = np.linalg.norm(q[:, :2], axis=1)
            rho_hat = np.zeros((nb, 3))
            rho_hat[:, 0] = q[:, 0] / rho
            rho_hat[:, 1] = q[:, 1] / rho
            on_top = q[:, 2] > spec.L / 2
            conormal = np.where(on_top[:, None], E3, -E3) * np.ones((nb, 3))
            wall_conormal = rho_hat
            sigma_nn[:] = 0.0
            bdry_curv[:] = -1.0 / spec.r
            angle[:] = math.pi / 2
    elif isinstance(spec, FlatDisk):
        normal = np.tile(E3, (nv, 1))
        H = np.zeros(nv)
        sigma_sq = np.zeros(nv)
        if nb:
            q = p[bverts]
            rho = np.linalg.norm(q[:, :2], axis=1)
            rho_hat = np.zeros((nb, 3))
            rho_hat[:, 0] = q[:, 0] / rho
            rho_hat[:, 1] = q[:, 1] / rho
            conormal = rho_hat
            # orientation rule with n1 = -e3 makes the in-wall normal point inward
            wall_conormal = -rho_hat
            sigma_nn[:] = 0.0
            bdry_curv[:] = 1.0 / spec.R
            angle[:] = math.pi
    elif isinstance(spec, MongePatch):
        x, y = p[:, 0], p[:, 1]
        normal = _monge_normal(spec, x, y)
        H, sigma_sq = _monge_curvatures(spec, x, y)
        if nb:
            q = p[bverts]
            t = np.arctan2(q[:, 1], q[:, 0])
            fx, fy = spec.gradient(q[:, 0], q[:, 1])
            # rim tangent d/dt (R cos t, R sin t, f)
            tx = -spec.R * np.sin(t)
            ty = spec.R * np.cos(t)
            tz = fx * tx + fy * ty
            T = np.column_stack([tx, ty, tz])
            T /= np.linalg.norm(T, axis=1)[:, None]
            Nq = normal[bverts]
            nu = np.cross(T, Nq)
            nu /= np.linalg.norm(nu, axis=1)[:, None]
            outward = np.column_stack([np.cos(t), np.sin(t), np.zeros(nb)])
            flip = np.einsum("ij,ij->i", nu, outward) < 0
            nu[flip] = -nu[flip]
            conormal = nu
            sigma_nn = np.array(
                [_monge_sigma_nn(spec, q[i, 0], q[i, 1], nu[i]) for i in range(nb)]
            )
    else:
        raise UnsupportedFamilyError(f"no analytic fields for {type(spec).__name__}")

    return GeometryFields(
        normal=normal,
        mean_curv=np.asarray(H, float),
        sigma_sq=np.asarray(sigma_sq, float),
        boundary_vertices=bverts,
        conormal=conormal,
        wall_conormal=wall_conormal,
        sigma_nn=sigma_nn,
        bdry_curv=bdry_curv,
        angle=angle,
        info={"family": type(spec).__name__},
    )


def generate_mesh(spec: FamilySpec):
    """Structured mesh with vertices exactly on the analytic surface.

    Returns (mesh, fields) where the fields carry the exact analytic values;
    triangle winding follows the mean-curvature-positive normal.
    """
    if isinstance(spec, Cap):
        positions, tris, labels = _build_cap(spec)
    elif isinstance(spec, ClosedSphere):
        positions, tris, labels = _build_sphere(spec)
    elif isinstance(spec, Cylinder):
        positions, tris, labels = _build_cylinder(spec)
    elif isinstance(spec, FlatDisk):
        positions, tris, labels = _build_disk(spec)
    elif isinstance(spec, MongePatch):
        positions, tris, labels = _build_monge(spec)
    else:
        raise UnsupportedFamilyError(f"cannot mesh {type(spec).__name__}")
    mesh = LabeledTriMesh(positions, tris, labels)
    fields = exact_fields(spec, mesh)
    tris = _orient_to(mesh.triangles, positions, fields.normal)
    mesh = LabeledTriMesh(positions, tris, labels)
    return mesh, fields


def surface_projector(spec: FamilySpec):
    """Projector (points, labels) -> points used by midpoint refinement.

    Labeled points are returned on the intersection of the surface with their
    wall plane; interior points on the surface.
    """

    if isinstance(spec, Cap):
        center, R = spec.center, spec.R
        rim = spec.R * math.sin(spec.theta)

        def project(points, labels):
            q = np.array(points, float)
            d = q - center
            q = center + d * (R / np.linalg.norm(d, axis=1))[:, None]
            on_wall = labels == 0
            if np.any(on_wall):
                xy = q[on_wall, :2]
                xy *= (rim / np.linalg.norm(xy, axis=1))[:, None]
                q[on_wall, :2] = xy
                q[on_wall, 2] = 0.0
            return q

    elif isinstance(spec, ClosedSphere):
        R = spec.R

        def project(points, labels):
            q = np.array(points, float)
            return q * (R / np.linalg.norm(q, axis=1))[:, None]

    elif isinstance(spec, Cylinder):
        r, L = spec.r, spec.L

        def project(points, labels):
            q = np.array(points, float)
            rho = np.linalg.norm(q[:, :2], axis=1)
            q[:, :2] *= (r / rho)[:, None]
            q[labels == 0, 2] = 0.0
            q[labels == 1, 2] = L
            return q

    elif isinstance(spec, FlatDisk):
        R = spec.R

        def project(points, labels):
            q = np.array(points, float)
            q[:, 2] = 0.0
            on_rim = labels == 0
            if np.any(on_rim):
                xy = q[on_rim, :2]
                xy *= (R / np.linalg.norm(xy, axis=1))[:, None]
                q[on_rim, :2] = xy
            return q

    elif isinstance(spec, MongePatch):

        def project(points, labels):
            q = np.array(points, float)
            q[:, 2] = spec.height(q[:, 0], q[:, 1])
            return q

    else:
        raise UnsupportedFamilyError(f"no projector for {type(spec).__name__}")

    return project


def analytic_test_function(spec: FamilySpec, a, mesh: LabeledTriMesh | None = None):
    """Exact values of phi = 1 + H <psi, N> + <a, N> on a family mesh.

    ``a`` is the capillary vector of the induced wall set; on caps with the
    matching vector this vanishes identically (the equality case).
    """
    if not isinstance(spec, (Cap, Cylinder)):
        raise UnsupportedFamilyError(
            f"analytic test function needs a capillary family, got {type(spec).__name__}"
        )
    if mesh is None:
        mesh, fields = generate_mesh(spec)
    else:
        fields = exact_fields(spec, mesh)
    a = np.asarray(a, float).reshape(3)
    u = np.einsum("ij,ij->i", mesh.positions, fields.normal)
    return 1.0 + fields.mean_curv * u + fields.normal @ a
