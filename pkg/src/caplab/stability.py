"""Discrete index form, constrained spectrum, verdicts and the test function.

The quadratic form is the integrated-by-parts second variation
    I(f, f) = int |grad f|^2 - int |sigma|^2 f^2 - sum_i cot(theta_i)
              int_{Gamma_i} sigma(nu, nu) f^2,
realized as f^T A f with A = K - M_sigma - sum_i q_i B_i, and stability means
nonnegativity of the smallest eigenvalue of A relative to the mass M over the
mean-zero subspace c^T f = 0, c = M 1. The constraint is handled by
projection (for the iterative path, through the solver's constraint argument
in the M-inner product; for the dense path, through an explicit orthonormal
basis of the complement), never by a saddle system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, lobpcg, splu

from .discops import (
    NDIM,
    GeometryFields,
    assemble_operators,
    estimate_fields,
    integrate_scalar,
    weighted_mass,
)
from .errors import (
    ConstraintViolationError,
    InvalidAngleError,
    NoCommonOriginError,
    SolverFailureError,
)
from .meshkit import LabeledTriMesh, WallSet

__all__ = [
    "IndexFormSystem",
    "StabilityVerdict",
    "TestFunctionReport",
    "assemble_index_form",
    "solve_spectrum",
    "min_constrained_eigenpair",
    "stability_verdict",
    "build_test_function",
    "first_variation_energy",
    "capillary_energy",
    "mass_correlation",
]

DENSE_CUTOFF = 1600
SOLVER_SEED = 0x5EED


@dataclass
class IndexFormSystem:
    """Matrices realizing the index form on the discrete function space."""

    A: sparse.csr_matrix
    M: sparse.csr_matrix
    c: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass
class StabilityVerdict:
    lambda_min: float
    eigenfunction: np.ndarray
    stable: bool
    tol_used: float
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    info: dict = field(default_factory=dict)

    def to_document(self):
        return {
            "format": "caplab-report",
            "version": 1,
            "kind": "stability-verdict",
            "lambda_min": float(self.lambda_min),
            "stable": bool(self.stable),
            "tol_used": float(self.tol_used),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "info": {k: _jsonable(v) for k, v in self.info.items()},
        }


@dataclass
class TestFunctionReport:
    phi: np.ndarray
    mean_residual: float
    robin_residual: np.ndarray
    index_quadratic: float
    index_closed: float
    match_residual: float
    info: dict = field(default_factory=dict)

    def to_document(self):
        return {
            "format": "caplab-report",
            "version": 1,
            "kind": "test-function",
            "mean_residual": float(self.mean_residual),
            "max_robin_residual": float(np.max(self.robin_residual)) if len(self.robin_residual) else 0.0,
            "index_quadratic": float(self.index_quadratic),
            "index_closed": float(self.index_closed),
            "match_residual": float(self.match_residual),
            "max_abs_phi": float(np.abs(self.phi).max()),
            "info": {k: _jsonable(v) for k, v in self.info.items()},
        }


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _cot(theta):
    c = math.cos(theta)
    # free-boundary angles must kill the term identically
    if abs(c) < 4 * np.finfo(float).eps:
        return 0.0
    s = math.sin(theta)
    if abs(s) < 1e-15:
        raise InvalidAngleError(f"cotangent undefined at theta = {theta}")
    return c / s


def assemble_index_form(
    mesh: LabeledTriMesh, walls: WallSet, fields: GeometryFields, operators=None
) -> IndexFormSystem:
    """A = K - M_{|sigma|^2} - sum_i cot(theta_i) sigma(nu,nu) B_i and c = M 1."""
    ops = operators or assemble_operators(mesh)
    A = ops.K - weighted_mass(mesh, fields.sigma_sq)
    sigma_nn_full = fields.full("sigma_nn")
    for i, theta in enumerate(walls.angles):
        if i not in ops.B_wall:
            continue
        cot = _cot(theta)
        if cot == 0.0:
            continue
        q = cot * sigma_nn_full
        A = A - ops.B_wall[i].multiply(q[None, :])
    A = (0.5 * (A + A.T)).tocsr()
    M = ops.M.tocsr()
    c = np.asarray(M @ np.ones(mesh.nv))
    meta = {
        "area": ops.area,
        "max_sigma_sq": float(np.max(fields.sigma_sq)),
        "boundary_lengths": ops.boundary_lengths(),
    }
    return IndexFormSystem(A=A, M=M, c=c, meta=meta)


def _dense_spectrum(system, k):
    n = system.n
    u = system.c / np.linalg.norm(system.c)
    v = u.copy()
    v[0] += math.copysign(1.0, u[0] if u[0] != 0 else 1.0)
    v /= np.linalg.norm(v)
    H = np.eye(n) - 2.0 * np.outer(v, v)
    Q = H[:, 1:]  # orthonormal basis of the complement of c
    A = system.A.toarray()
    M = system.M.toarray()
    Ar = Q.T @ A @ Q
    Mr = Q.T @ M @ Q
    vals, vecs = eigh(Ar, Mr, subset_by_index=[0, k - 1])
    return vals, Q @ vecs


def _iterative_spectrum(system, k, maxiter, seed):
    n = system.n
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    # constraint in the M-inner product: Y = 1 gives Y^T M x = c^T x = 0
    Y = np.ones((n, 1))
    shift = system.meta.get("max_sigma_sq", 1.0) + 1.0 / max(system.meta.get("area", 1.0), 1e-300)
    P = (system.A + shift * system.M).tocsc()
    try:
        lu = splu(P)
        prec = LinearOperator(P.shape, matvec=lu.solve, matmat=lu.solve)
    except RuntimeError:
        prec = None
    scale = float(np.abs(system.A).sum(axis=1).max())
    tol = 1e-9 * max(scale, 1.0)
    vals, vecs = lobpcg(
        system.A, X, B=system.M, M=prec, Y=Y, largest=False, tol=tol, maxiter=maxiter
    )
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    R = system.A @ vecs - system.M @ vecs * vals[None, :]
    resid = float(np.linalg.norm(R[:, 0]) / max(scale, 1e-300))
    if not np.all(np.isfinite(vals)) or resid > 1e-6:
        raise SolverFailureError(
            f"eigensolver did not converge (relative residual {resid:.3e})", residual=resid
        )
    return vals, vecs


def solve_spectrum(system: IndexFormSystem, k=10, maxiter=500, seed=SOLVER_SEED):
    """Lowest k eigenpairs of f^T A f over {c^T f = 0, f^T M f = 1}.

    Dense solve through an explicit constraint-complement basis for small
    systems, shift-preconditioned LOBPCG with the mean-zero constraint
    beyond; deterministic for fixed inputs.
    """
    n = system.n
    k = max(1, min(k, n - 2))
    if n <= DENSE_CUTOFF:
        vals, vecs = _dense_spectrum(system, k)
    else:
        vals, vecs = _iterative_spectrum(system, k, maxiter, seed)
    # normalize: f^T M f = 1, c^T f = 0 up to solver tolerance
    for j in range(vecs.shape[1]):
        nj = math.sqrt(float(vecs[:, j] @ (system.M @ vecs[:, j])))
        vecs[:, j] /= nj
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] = -vecs[:, j]
    return np.asarray(vals, float), vecs


def min_constrained_eigenpair(system: IndexFormSystem, maxiter=500, seed=SOLVER_SEED):
    """Smallest constrained eigenvalue and its mass-normalized eigenfunction."""
    vals, vecs = solve_spectrum(system, k=1, maxiter=maxiter, seed=seed)
    return float(vals[0]), vecs[:, 0]


def stability_verdict(system: IndexFormSystem, tol=None, k=10) -> StabilityVerdict:
    """Stable iff lambda_min >= -tol; default tol is discretization-scaled.

    The tolerance used is always reported; the default is
    0.05 * max |sigma|^2, the natural curvature scale of the problem.
    """
    if tol is None:
        tol = 0.05 * system.meta.get("max_sigma_sq", 1.0)
    vals, vecs = solve_spectrum(system, k=k)
    lam = float(vals[0])
    return StabilityVerdict(
        lambda_min=lam,
        eigenfunction=vecs[:, 0],
        stable=bool(lam >= -tol),
        tol_used=float(tol),
        eigenvalues=vals,
        eigenfunctions=vecs,
        info={"k": len(vals), "meta": dict(system.meta)},
    )


def mass_correlation(M, f, g):
    """|<f, g>_M| normalized; used for eigenfunction certificates."""
    num = abs(float(f @ (M @ g)))
    den = math.sqrt(float(f @ (M @ f)) * float(g @ (M @ g)))
    return num / den if den > 0 else 0.0


def common_wall_point(walls: WallSet):
    """A point on every wall plane, or an error if none exists."""
    N = walls.normals
    d = walls.offsets
    x0, residuals, *_ = np.linalg.lstsq(N, d, rcond=None)
    gap = float(np.abs(N @ x0 - d).max())
    scale = 1.0 + float(np.abs(d).max())
    if gap > 1e-9 * scale:
        raise NoCommonOriginError(
            f"wall planes share no common point (best residual {gap:.3e})"
        )
    return x0


def _mean_curvature_bar(fields, ops):
    lumped = ops.lumped_mass()
    return float(fields.mean_curv @ lumped / lumped.sum())


def build_test_function(
    mesh: LabeledTriMesh,
    walls: WallSet,
    fields: GeometryFields,
    a=None,
    operators=None,
    system=None,
) -> TestFunctionReport:
    """Build phi = 1 + H <psi, N> + <a, N> and validate its three properties.

    With a capillary vector ``a`` the coordinates are translated so the origin
    lies on every wall plane (error if none exists); ``a = None`` runs the
    identity mode phi = 1 + H <psi, N> that needs no common origin. Reports
    the discrete mean of phi, the weak per-vertex Robin defect
    |d(phi)/d(nu) - q phi|, and the agreement between the quadratic form value
    and the closed-form integral -int (|sigma|^2 - n H^2) phi.
    """
    ops = operators or assemble_operators(mesh)
    sys_ = system or assemble_index_form(mesh, walls, fields, ops)
    if a is None:
        a = np.zeros(3)
        psi = mesh.positions
        identity_mode = True
    else:
        a = np.asarray(a, float).reshape(3)
        psi = mesh.positions - common_wall_point(walls)
        identity_mode = False

    hbar = _mean_curvature_bar(fields, ops)
    u = np.einsum("ij,ij->i", psi, fields.normal)
    phi = 1.0 + hbar * u + fields.normal @ a

    area = ops.area
    mean_residual = abs(float(sys_.c @ phi)) / area

    # weak Robin defect: (K phi)_v carries the conormal flux plus the volume
    # term, which is removed through the structure equation for Delta phi
    lap_model = -fields.sigma_sq * phi + (fields.sigma_sq - NDIM * hbar * hbar)
    flux = ops.K @ phi + ops.M @ lap_model
    bverts = fields.boundary_vertices
    q_full = np.zeros(mesh.nv)
    sigma_nn_full = fields.full("sigma_nn")
    for i, theta in enumerate(walls.angles):
        cot = _cot(theta)
        verts = [v for v, w in mesh.boundary_labels.items() if w == i]
        if verts:
            q_full[verts] = cot * sigma_nn_full[verts]
    b_diag = np.asarray(ops.B_all.diagonal())
    robin = np.zeros(len(bverts))
    if len(bverts):
        denom = np.maximum(b_diag[bverts], 1e-300)
        robin = np.abs(flux[bverts] - q_full[bverts] * b_diag[bverts] * phi[bverts]) / denom

    quad = float(phi @ (sys_.A @ phi))
    closed = -integrate_scalar(ops.M, (fields.sigma_sq - NDIM * hbar * hbar) * phi)
    floor = 1e-12 * area
    match = abs(quad - closed) / max(abs(quad), abs(closed), floor)

    return TestFunctionReport(
        phi=phi,
        mean_residual=mean_residual,
        robin_residual=robin,
        index_quadratic=quad,
        index_closed=closed,
        match_residual=match,
        info={
            "mean_H": hbar,
            "a": a,
            "identity_mode": identity_mode,
            "area": area,
            "max_sigma_sq": sys_.meta.get("max_sigma_sq"),
        },
    )


# -- energy and its first variation ------------------------------------------------


def _loop_plane_area(points, plane):
    """Unsigned area enclosed by a loop after projection into the plane."""
    n = plane.normal
    axis = np.zeros(3)
    axis[np.argmin(np.abs(n))] = 1.0
    u = np.cross(n, axis)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    proj = points - np.outer(points @ n - plane.offset, n)
    x = proj @ u
    y = proj @ v
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def capillary_energy(mesh: LabeledTriMesh, walls: WallSet | None) -> float:
    """E = |Sigma| - sum_i cos(theta_i) |W_i|.

    Wetted areas are the in-plane areas enclosed by the projected boundary
    loops of each wall (disks and annuli for the families).
    """
    e = mesh.area()
    if walls is None:
        return e
    loops = mesh.boundary_loops()
    labels = mesh.boundary_labels
    for i, (plane, theta) in enumerate(zip(walls.walls, walls.angles)):
        cos_t = math.cos(theta)
        if abs(cos_t) < 4 * np.finfo(float).eps:
            continue
        wetted = 0.0
        for loop in loops:
            if all(labels.get(v) == i for v in loop):
                wetted += _loop_plane_area(mesh.positions[loop], plane)
        e -= cos_t * wetted
    return e


def first_variation_energy(mesh, walls, f, h, fields=None, operators=None):
    """Central difference of E(psi + t f N) at t = 0 with step h.

    Requires mean-zero f (volume-preserving direction to first order); for
    capillary equilibria this tends to zero as mesh size and step shrink
    together.
    """
    f = np.asarray(f, float)
    if f.shape != (mesh.nv,):
        raise ConstraintViolationError("need one value per vertex")
    ops = operators or assemble_operators(mesh)
    c = np.asarray(ops.M @ np.ones(mesh.nv))
    fscale = float(np.abs(f).max())
    if fscale == 0:
        return 0.0
    if abs(float(c @ f)) > 1e-8 * ops.area * fscale:
        raise ConstraintViolationError(
            "deformation is not mean-zero (volume constraint violated)"
        )
    if fields is None:
        fields = estimate_fields(mesh, walls)
    step = f[:, None] * fields.normal
    e_plus = capillary_energy(mesh.with_positions(mesh.positions + h * step), walls)
    e_minus = capillary_energy(mesh.with_positions(mesh.positions - h * step), walls)
    return (e_plus - e_minus) / (2.0 * h)


# -- serialization helpers -----------------------------------------------------------


def save_verdict(verdict: StabilityVerdict, path):
    Path(path).write_text(json.dumps(verdict.to_document(), indent=2, sort_keys=True) + "\n")
    return Path(path)


def export_eigenfunction_csv(values, path):
    path = Path(path)
    lines = ["vertex,value"]
    lines += [f"{i},{v:.17g}" for i, v in enumerate(np.asarray(values, float))]
    path.write_text("\n".join(lines) + "\n")
    return path
