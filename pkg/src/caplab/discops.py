"""Discrete differential operators on labeled triangle meshes.

Sign conventions are pinned to make a sphere with inward normal have positive
curvatures: the second fundamental form is sigma(X, Y) = <-D_X N, Y>, the mean
curvature is the average H = (k1 + k2) / 2, and the orientation of the vertex
normal field is flipped globally whenever the mean discrete H comes out
negative, so that H >= 0 on constant-mean-curvature input.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import DegenerateElementError, FitFailureError, InvalidMeshError
from .meshkit import LabeledTriMesh, WallSet

logger = logging.getLogger(__name__)

# ambient formulas are written for surface dimension n = 2 but keep the factor
# symbolic where the general statement has one
NDIM = 2

__all__ = [
    "NDIM",
    "GeometryFields",
    "OperatorSet",
    "assemble_operators",
    "weighted_mass",
    "estimate_fields",
    "integrate_scalar",
    "integrate_vector",
    "principal_direction_residual",
    "export_fields_csv",
]


@dataclass
class GeometryFields:
    """Per-vertex geometry of an immersed mesh.

    ``normal``, ``mean_curv`` (H) and ``sigma_sq`` (|sigma|^2) cover every
    vertex. The remaining arrays are aligned with ``boundary_vertices`` (sorted
    vertex ids): exterior conormal ``conormal`` (nu), in-wall normal
    ``wall_conormal`` (nu-bar), ``sigma_nn`` = sigma(nu, nu), signed boundary
    curvature ``bdry_curv`` (w.r.t. nu-bar) and measured contact ``angle``.
    Wall-dependent entries are NaN for meshes without supporting walls.
    """

    normal: np.ndarray
    mean_curv: np.ndarray
    sigma_sq: np.ndarray
    boundary_vertices: np.ndarray
    conormal: np.ndarray
    wall_conormal: np.ndarray
    sigma_nn: np.ndarray
    bdry_curv: np.ndarray
    angle: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def nv(self):
        return self.normal.shape[0]

    def boundary_index(self, vertices):
        idx = np.searchsorted(self.boundary_vertices, vertices)
        if np.any(idx >= len(self.boundary_vertices)) or np.any(
            self.boundary_vertices[np.minimum(idx, len(self.boundary_vertices) - 1)] != vertices
        ):
            raise KeyError("vertex is not a boundary vertex")
        return idx

    def full(self, name, fill=0.0):
        """Boundary array scattered to vertex length, ``fill`` off-boundary."""
        values = getattr(self, name)
        out_shape = (self.nv,) + values.shape[1:]
        out = np.full(out_shape, fill, dtype=float)
        out[self.boundary_vertices] = values
        return out

    def transformed(self, matrix):
        """Fields of the mesh rotated by an orthogonal ``matrix``."""
        R = np.asarray(matrix, float)
        return GeometryFields(
            normal=self.normal @ R.T,
            mean_curv=self.mean_curv.copy(),
            sigma_sq=self.sigma_sq.copy(),
            boundary_vertices=self.boundary_vertices.copy(),
            conormal=self.conormal @ R.T,
            wall_conormal=self.wall_conormal @ R.T,
            sigma_nn=self.sigma_nn.copy(),
            bdry_curv=self.bdry_curv.copy(),
            angle=self.angle.copy(),
            info=dict(self.info),
        )

    def scaled(self, s):
        """Fields of the mesh dilated by ``s``: curvatures scale like 1/s."""
        s = float(s)
        return GeometryFields(
            normal=self.normal.copy(),
            mean_curv=self.mean_curv / s,
            sigma_sq=self.sigma_sq / s**2,
            boundary_vertices=self.boundary_vertices.copy(),
            conormal=self.conormal.copy(),
            wall_conormal=self.wall_conormal.copy(),
            sigma_nn=self.sigma_nn / s,
            bdry_curv=self.bdry_curv / s,
            angle=self.angle.copy(),
            info=dict(self.info),
        )


@dataclass
class OperatorSet:
    """Mass, stiffness and boundary line-measure matrices of a mesh.

    ``M`` is the consistent Galerkin surface mass matrix, ``K`` the standard
    piecewise-linear Dirichlet form with natural boundary treatment, ``B_wall``
    maps a wall index to the diagonal matrix lumping half of each of its
    boundary edges onto the endpoints, and ``B_all`` does the same for the
    whole boundary regardless of labels.
    """

    M: sparse.csr_matrix
    K: sparse.csr_matrix
    B_wall: dict
    B_all: sparse.csr_matrix

    @property
    def nv(self):
        return self.M.shape[0]

    @property
    def area(self):
        return float(self.M.sum())

    def boundary_lengths(self):
        return {w: float(B.sum()) for w, B in self.B_wall.items()}

    def lumped_mass(self):
        return np.asarray(self.M.sum(axis=1)).ravel()


def _triangle_geometry(mesh):
    p = mesh.positions
    t = mesh.triangles
    cr = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
    areas = 0.5 * np.linalg.norm(cr, axis=1)
    if len(areas):
        floor = 1e-14 * areas.mean()
        bad = np.nonzero(areas < floor)[0]
        if len(bad):
            raise DegenerateElementError(
                f"triangle {int(bad[0])} has area {areas[bad[0]]:.3g} below {floor:.3g}"
            )
    return areas


def assemble_operators(mesh: LabeledTriMesh) -> OperatorSet:
    """Assemble mass, cotangent stiffness and boundary measures."""
    if mesh.nv == 0 or mesh.nf == 0:
        raise InvalidMeshError("cannot assemble operators on an empty mesh")
    p = mesh.positions
    t = mesh.triangles
    areas = _triangle_geometry(mesh)
    nv = mesh.nv

    # consistent mass: A/6 on the diagonal, A/12 off-diagonal per triangle
    ii, jj, vv = [], [], []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        ii.append(t[:, a])
        jj.append(t[:, b])
        vv.append(areas / 12.0)
        ii.append(t[:, b])
        jj.append(t[:, a])
        vv.append(areas / 12.0)
    for a in range(3):
        ii.append(t[:, a])
        jj.append(t[:, a])
        vv.append(areas / 6.0)
    M = sparse.csr_matrix(
        (np.concatenate(vv), (np.concatenate(ii), np.concatenate(jj))), shape=(nv, nv)
    )

    # cotangent stiffness: for the corner opposite an edge, cot = <u, v>/(2A),
    # and each triangle adds cot/2 to its opposite edge weight
    ii, jj, vv = [], [], []
    for corner, (a, b) in ((0, (1, 2)), (1, (2, 0)), (2, (0, 1))):
        u = p[t[:, a]] - p[t[:, corner]]
        w = p[t[:, b]] - p[t[:, corner]]
        half_cot = np.einsum("ij,ij->i", u, w) / (4.0 * areas)
        ii.extend([t[:, a], t[:, b], t[:, a], t[:, b]])
        jj.extend([t[:, b], t[:, a], t[:, a], t[:, b]])
        vv.extend([-half_cot, -half_cot, half_cot, half_cot])
    K = sparse.csr_matrix(
        (np.concatenate(vv), (np.concatenate(ii), np.concatenate(jj))), shape=(nv, nv)
    )

    be = mesh.boundary_edges()
    diag_all = np.zeros(nv)
    diag_wall = {}
    labels = mesh.boundary_labels
    if len(be):
        lengths = np.linalg.norm(p[be[:, 1]] - p[be[:, 0]], axis=1)
        for (a, b), le in zip(be, lengths):
            diag_all[a] += 0.5 * le
            diag_all[b] += 0.5 * le
            la, lb = labels.get(int(a)), labels.get(int(b))
            if la is not None and la == lb:
                d = diag_wall.setdefault(la, np.zeros(nv))
                d[a] += 0.5 * le
                d[b] += 0.5 * le
    B_wall = {w: sparse.diags(d).tocsr() for w, d in sorted(diag_wall.items())}
    return OperatorSet(M=M, K=K, B_wall=B_wall, B_all=sparse.diags(diag_all).tocsr())


def weighted_mass(mesh: LabeledTriMesh, weights) -> sparse.csr_matrix:
    """Consistent mass matrix of the piecewise-linear weight function.

    Entries are exact integrals of w * phi_i * phi_j with w interpolating the
    per-vertex ``weights``.
    """
    w = np.asarray(weights, float)
    if w.shape != (mesh.nv,):
        raise ValueError("need one weight per vertex")
    t = mesh.triangles
    areas = _triangle_geometry(mesh)
    wt = w[t]
    ii, jj, vv = [], [], []
    for a in range(3):
        others = wt.sum(axis=1) - wt[:, a]
        ii.append(t[:, a])
        jj.append(t[:, a])
        vv.append(areas * (wt[:, a] / 10.0 + others / 30.0))
    for a, b in ((0, 1), (1, 2), (2, 0)):
        c = 3 - a - b
        val = areas * ((wt[:, a] + wt[:, b]) / 30.0 + wt[:, c] / 60.0)
        ii.extend([t[:, a], t[:, b]])
        jj.extend([t[:, b], t[:, a]])
        vv.extend([val, val])
    return sparse.csr_matrix(
        (np.concatenate(vv), (np.concatenate(ii), np.concatenate(jj))), shape=(mesh.nv, mesh.nv)
    )


def integrate_scalar(matrix, values) -> float:
    """1^T (matrix) f, realizing the surface or line integral of f."""
    f = np.asarray(values, float)
    if f.shape != (matrix.shape[1],):
        raise ValueError(f"expected {matrix.shape[1]} values, got shape {f.shape}")
    return float((matrix @ f).sum())


def integrate_vector(matrix, values) -> np.ndarray:
    """Componentwise 1^T (matrix) F for per-vertex vectors F."""
    f = np.asarray(values, float)
    if f.ndim != 2 or f.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected ({matrix.shape[1]}, d) values, got shape {f.shape}")
    return np.asarray((matrix @ f).sum(axis=0)).ravel()


# -- field estimation -----------------------------------------------------------


def _vertex_normals(mesh):
    """Angle-weighted average of incident triangle normals."""
    p = mesh.positions
    t = mesh.triangles
    fn = mesh.triangle_normals()
    acc = np.zeros((mesh.nv, 3))
    for corner in range(3):
        a = p[t[:, (corner + 1) % 3]] - p[t[:, corner]]
        b = p[t[:, (corner + 2) % 3]] - p[t[:, corner]]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        cosang = np.clip(np.einsum("ij,ij->i", a, b) / np.maximum(na * nb, 1e-300), -1, 1)
        ang = np.arccos(cosang)
        np.add.at(acc, t[:, corner], ang[:, None] * fn)
    nrm = np.linalg.norm(acc, axis=1)
    nrm[nrm == 0] = 1.0
    return acc / nrm[:, None]


def _two_rings(mesh):
    adj = mesh.adj_sym.copy()
    adj.data[:] = 1
    ring2 = (adj + adj @ adj).tocsr()
    ring2.data[:] = 1
    return ring2


def _tangent_frame(n):
    axis = np.zeros(3)
    axis[np.argmin(np.abs(n))] = 1.0
    t1 = np.cross(n, axis)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return t1, t2


def _fit_shape(points, center, normal, scale):
    """Weighted quadric height fit over a stencil.

    Returns (M1, M2, t1, t2, n_fit): first and second fundamental forms at the
    center in the regressed tangent frame, the frame itself, and the fitted
    surface normal; sigma(X, X) = x^T M2 x / x^T M1 x for a tangent direction
    with frame coordinates x.
    """
    if len(points) < 5:
        raise FitFailureError(
            f"stencil of {len(points)} points too small for a quadric fit (valence too low)"
        )
    t1, t2 = _tangent_frame(normal)
    d = points - center
    x = d @ t1
    y = d @ t2
    z = d @ normal
    dist = np.linalg.norm(d, axis=1)
    w = 1.0 / (dist + 1e-8 * scale)
    A = np.column_stack([x, y, 0.5 * x * x, x * y, 0.5 * y * y]) * w[:, None]
    coef, *_ = np.linalg.lstsq(A, z * w, rcond=None)
    p1, p2, fxx, fxy, fyy = coef
    W = math.sqrt(1.0 + p1 * p1 + p2 * p2)
    M1 = np.array([[1.0 + p1 * p1, p1 * p2], [p1 * p2, 1.0 + p2 * p2]])
    M2 = np.array([[fxx, fxy], [fxy, fyy]]) / W
    n_fit = (normal - p1 * t1 - p2 * t2) / W
    return M1, M2, t1, t2, n_fit


def _pencil_curvatures(M1, M2):
    """Roots of det(M2 - k M1) = 0 for symmetric 2x2 pencils (M1 positive)."""
    a2 = M1[0, 0] * M1[1, 1] - M1[0, 1] ** 2
    a1 = -(M2[0, 0] * M1[1, 1] + M2[1, 1] * M1[0, 0] - 2.0 * M2[0, 1] * M1[0, 1])
    a0 = M2[0, 0] * M2[1, 1] - M2[0, 1] ** 2
    disc = max(a1 * a1 - 4.0 * a2 * a0, 0.0)
    r = math.sqrt(disc)
    return ((-a1 - r) / (2 * a2), (-a1 + r) / (2 * a2))


def estimate_fields(mesh: LabeledTriMesh, walls: WallSet | None = None) -> GeometryFields:
    """Estimate all geometry fields from the raw mesh.

    Normals by angle-weighted triangle-normal averaging, flipped globally if
    the mean discrete H is negative; the shape operator by a weighted
    least-squares quadric fit in the tangent frame over the 2-ring (one-sided
    at the boundary); boundary quantities from the boundary polyline and the
    wall data.
    """
    if mesh.nv == 0 or mesh.nf == 0:
        raise InvalidMeshError("cannot estimate fields on an empty mesh")
    p = mesh.positions
    nv = mesh.nv
    scale = mesh.bbox_diameter()
    normals = _vertex_normals(mesh)

    rings = _two_rings(mesh)
    H = np.zeros(nv)
    sigma_sq = np.zeros(nv)
    fits = {}
    for v in range(nv):
        idx = rings.indices[rings.indptr[v] : rings.indptr[v + 1]]
        idx = idx[idx != v]
        # two passes: the second fit uses the tangent plane regressed by the
        # first, removing the one-sided bias of averaged normals at boundaries
        _, _, _, _, n_fit = _fit_shape(p[idx], p[v], normals[v], scale)
        M1, M2, t1, t2, n_fit = _fit_shape(p[idx], p[v], n_fit, scale)
        normals[v] = n_fit
        k1, k2 = _pencil_curvatures(M1, M2)
        H[v] = 0.5 * (k1 + k2)
        sigma_sq[v] = k1 * k1 + k2 * k2
        fits[v] = (M1, M2, t1, t2)

    areas_lumped = np.zeros(nv)
    np.add.at(areas_lumped, mesh.triangles.ravel(), np.repeat(mesh.triangle_areas() / 3.0, 3))
    mean_H = float(H @ areas_lumped / areas_lumped.sum())
    flipped = False
    if mean_H < 0:
        normals = -normals
        H = -H
        flipped = True
    if abs(mean_H) * scale < 1e-8:
        logger.warning("mean curvature is numerically zero; normal orientation is arbitrary")

    # boundary structure
    loops = mesh.boundary_loops()
    bverts = np.array(sorted({v for loop in loops for v in loop}), dtype=np.int64)
    nb = len(bverts)
    conormal = np.full((nb, 3), np.nan)
    wall_conormal = np.full((nb, 3), np.nan)
    sigma_nn = np.full(nb, np.nan)
    bdry_curv = np.full(nb, np.nan)
    angle = np.full(nb, np.nan)
    pos_in_b = {int(v): i for i, v in enumerate(bverts)}

    adj = mesh.adj_sym
    labels = mesh.boundary_labels
    for loop in loops:
        m = len(loop)
        for li, v in enumerate(loop):
            prev = loop[li - 1]
            nxt = loop[(li + 1) % m]
            i = pos_in_b[v]
            T = p[nxt] - p[prev]
            tn = np.linalg.norm(T)
            if tn == 0:
                continue
            T = T / tn
            N = normals[v]
            nu = np.cross(T, N)
            nu -= N * (nu @ N)
            nrm = np.linalg.norm(nu)
            if nrm == 0:
                continue
            nu /= nrm
            ring1 = adj.indices[adj.indptr[v] : adj.indptr[v + 1]]
            interior_dir = p[ring1].mean(axis=0) - p[v]
            if nu @ interior_dir > 0:
                nu = -nu
            conormal[i] = nu

            M1, M2, t1, t2 = fits[v]
            if flipped:
                M2 = -M2
            q = np.array([nu @ t1, nu @ t2])
            denom = q @ M1 @ q
            if denom > 0:
                sigma_nn[i] = float(q @ M2 @ q) / float(denom)

            w = labels.get(v)
            if walls is not None and w is not None and 0 <= w < len(walls):
                n_i = walls.walls[w].normal
                nb_raw = np.cross(n_i, T)
                nrm = np.linalg.norm(nb_raw)
                if nrm > 0:
                    nb_vec = nb_raw / nrm
                    s_surface = np.cross(N, nu) @ T
                    s_wall = np.cross(n_i, nb_vec) @ T
                    if s_surface * s_wall < 0:
                        nb_vec = -nb_vec
                    wall_conormal[i] = nb_vec
                    # circumscribed-circle curvature of the boundary polyline
                    a = p[prev] - p[v]
                    b = p[nxt] - p[v]
                    chord = p[nxt] - p[prev]
                    area2 = np.linalg.norm(np.cross(a, b))
                    denom = np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(chord)
                    kappa = 2.0 * area2 / denom if denom > 0 else 0.0
                    bend = a + b
                    bdry_curv[i] = math.copysign(kappa, bend @ nb_vec) if kappa > 0 else 0.0
                angle[i] = math.acos(float(np.clip(N @ n_i, -1.0, 1.0)))

    return GeometryFields(
        normal=normals,
        mean_curv=H,
        sigma_sq=sigma_sq,
        boundary_vertices=bverts,
        conormal=conormal,
        wall_conormal=wall_conormal,
        sigma_nn=sigma_nn,
        bdry_curv=bdry_curv,
        angle=angle,
        info={"flipped": flipped, "mean_H": mean_H},
    )


def principal_direction_residual(mesh: LabeledTriMesh, walls: WallSet | None = None):
    """Check that the conormal is a principal direction at the boundary.

    Returns per-boundary-vertex ||S nu - (nu^T S nu) nu|| / ||S|| measured in
    the fitted tangent frame; small values confirm the boundary principal
    direction property of capillary immersions.
    """
    fields = estimate_fields(mesh, walls)
    p = mesh.positions
    scale = mesh.bbox_diameter()
    rings = _two_rings(mesh)
    out = np.full(len(fields.boundary_vertices), np.nan)
    for i, v in enumerate(fields.boundary_vertices):
        nu = fields.conormal[i]
        if not np.all(np.isfinite(nu)):
            continue
        idx = rings.indices[rings.indptr[v] : rings.indptr[v + 1]]
        idx = idx[idx != v]
        M1, M2, t1, t2, _ = _fit_shape(p[idx], p[v], fields.normal[v], scale)
        if fields.info.get("flipped"):
            M2 = -M2
        # shape operator in the frame: S = M1^{-1} M2
        S = np.linalg.solve(M1, M2)
        q = np.array([nu @ t1, nu @ t2])
        qn = np.linalg.norm(q)
        if qn == 0:
            continue
        q /= qn
        Sq = S @ q
        resid = Sq - (q @ Sq) * q
        norm_S = np.linalg.norm(S, 2)
        out[i] = np.linalg.norm(resid) / norm_S if norm_S > 0 else 0.0
    return fields.boundary_vertices, out


def export_fields_csv(mesh: LabeledTriMesh, fields: GeometryFields, path):
    """Per-vertex CSV of every field (boundary columns empty off-boundary)."""
    path = Path(path)
    bset = {int(v): i for i, v in enumerate(fields.boundary_vertices)}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "vertex", "x", "y", "z",
                "normal_x", "normal_y", "normal_z", "mean_curv", "sigma_sq",
                "conormal_x", "conormal_y", "conormal_z",
                "wall_conormal_x", "wall_conormal_y", "wall_conormal_z",
                "sigma_nn", "bdry_curv", "angle",
            ]
        )
        for v in range(mesh.nv):
            row = [v, *(f"{c:.17g}" for c in mesh.positions[v])]
            row += [f"{c:.17g}" for c in fields.normal[v]]
            row += [f"{fields.mean_curv[v]:.17g}", f"{fields.sigma_sq[v]:.17g}"]
            if v in bset:
                i = bset[v]
                row += [f"{c:.17g}" for c in fields.conormal[i]]
                row += [f"{c:.17g}" for c in fields.wall_conormal[i]]
                row += [
                    f"{fields.sigma_nn[i]:.17g}",
                    f"{fields.bdry_curv[i]:.17g}",
                    f"{fields.angle[i]:.17g}",
                ]
            else:
                row += [""] * 9
            w.writerow(row)
    return path
