"""Dirichlet problems for ``-div(A(x/eps) grad u) = 0`` on balls.

Two conservation-form finite-difference backends share one interface:

* ``CartesianSolution``: a uniform cube grid with an interior mask, for
  any coefficient field.
* ``AxisymmetricSolution``: for isotropic layered media ``a(x_k / eps) I``
  the operator commutes with rotations about the ``x_k`` axis through
  the ball centre, so the solution splits into azimuthal modes
  ``U_m(s, rho) cos(m phi)`` / ``sin(m phi)``, each solved on a 2-D
  ``(s, rho)`` grid. Same stencil along ``s`` as the cell problem, so
  correctors computed at resolution ``eps / h`` are discretely
  consistent.

Dirichlet values are imposed on the ring of grid nodes just outside the
ball using the boundary data's natural extension (harmonic for
spherical-harmonic data).
"""
from __future__ import annotations

import dataclasses
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import harmonics as hm
from ._interp import centered_diff, interp_nd
from .cell import CoefficientField, CorrectorSet, solve_cell_problem, _make_field
from .errors import DegenerateInputError, ResolutionError, SolverError, ValidationError

__all__ = [
    "BoundaryData",
    "boundary_from_preset",
    "BallProblem",
    "GridSolution",
    "CartesianSolution",
    "AxisymmetricSolution",
    "HarmonicApproximant",
    "required_intervals",
    "solve_dirichlet",
    "solve_harmonic",
    "harmonic_approximant",
    "interior_estimate_check",
]

GUARD = 16


# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True)
class BoundaryData:
    """Boundary values with an extension off the sphere.

    ``func`` takes coordinates relative to the ball centre, shape
    (..., 3), and returns values of shape (...).
    """

    name: str
    func: Callable
    band_limit: Optional[int] = None

    def __call__(self, rel):
        return np.asarray(self.func(np.asarray(rel, dtype=float)), dtype=float)

    @classmethod
    def from_coefficients(cls, coeffs, radius=1.0, name="expansion"):
        """Harmonic extension of ``sum a_lm psi_lm`` given on radius ``radius``."""
        coeffs = np.asarray(coeffs, dtype=float)
        L = int(round(np.sqrt(coeffs.size))) - 1
        if (L + 1) ** 2 != coeffs.size:
            raise ValidationError("coefficient vector length must be (L+1)^2")
        terms = []
        for l in range(L + 1):
            c = coeffs[l * l:(l + 1) ** 2]
            if np.any(c):
                terms.append(hm.SolidHarmonic(l, c / radius ** l))

        def func(x):
            out = np.zeros(np.shape(x)[:-1])
            for t in terms:
                out = out + t(x)
            return out

        return cls(name, func, L)


def _poly_boundary(name, fn, degree):
    return BoundaryData(name, fn, degree)


def boundary_from_preset(spec: str) -> BoundaryData:
    """Parse a boundary preset name.

    Recognized forms: ``linear`` / ``linear:k``, ``constant:c``,
    ``product`` (x1 x2, alias ``hp:2-product``), ``cubic``
    (Re (x1 + i x2)^3), ``hp:l,m``, ``mix:l,m,c;l,m,c;...``,
    ``random-bandlimited:seed,L``.
    """
    spec = spec.strip()
    head, _, arg = spec.partition(":")
    if head == "linear":
        k = int(arg) - 1 if arg else 0
        if not 0 <= k < 3:
            raise ValidationError("linear axis must be 1, 2 or 3")
        return _poly_boundary(spec, lambda x: x[..., k], 1)
    if head == "constant":
        c = float(arg) if arg else 1.0
        return _poly_boundary(spec, lambda x: np.full(np.shape(x)[:-1], c), 0)
    if head == "product" or spec == "hp:2-product":
        return _poly_boundary("product", lambda x: x[..., 0] * x[..., 1], 2)
    if head == "cubic":
        return _poly_boundary(
            "cubic", lambda x: x[..., 0] ** 3 - 3 * x[..., 0] * x[..., 1] ** 2, 3)
    if head == "hp":
        try:
            l, m = (int(v) for v in arg.split(","))
        except ValueError:
            raise ValidationError(f"bad hp preset {spec!r}; expected hp:l,m") from None
        if abs(m) > l or l < 0:
            raise ValidationError("hp preset needs |m| <= l")
        coeffs = np.zeros((l + 1) ** 2)
        coeffs[hm.lm_index(l, m)] = 1.0
        return BoundaryData.from_coefficients(coeffs, name=spec)
    if head == "mix":
        items = []
        for part in arg.split(";"):
            l, m, c = part.split(",")
            items.append((int(l), int(m), float(c)))
        if not items:
            raise ValidationError("mix preset needs at least one term")
        L = max(l for l, _, _ in items)
        coeffs = np.zeros((L + 1) ** 2)
        for l, m, c in items:
            if abs(m) > l:
                raise ValidationError("mix term needs |m| <= l")
            coeffs[hm.lm_index(l, m)] += c
        return BoundaryData.from_coefficients(coeffs, name=spec)
    if head == "random-bandlimited":
        seed, L = (int(v) for v in arg.split(","))
        rng = np.random.default_rng(seed)
        coeffs = np.zeros((L + 1) ** 2)
        for l in range(L + 1):
            coeffs[l * l:(l + 1) ** 2] = rng.standard_normal(2 * l + 1) / (l + 1)
        return BoundaryData.from_coefficients(coeffs, name=spec)
    raise ValidationError(f"unknown boundary preset {spec!r}")


# ---------------------------------------------------------------------------
# problem


@dataclass(frozen=True)
class BallProblem:
    """Dirichlet problem on ``B(center, radius)``.

    ``coefficients=None`` means the Laplacian; then ``epsilon`` is only
    a bookkeeping parameter.
    """

    center: tuple
    radius: float
    boundary: BoundaryData
    epsilon: Optional[float] = None
    coefficients: Optional[CoefficientField] = None

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.center, dtype=float).ravel())
        if len(c) != 3:
            raise ValidationError("center must be a 3-vector")
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValidationError("radius must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.oscillating and self.epsilon is None:
            raise ValidationError("oscillating coefficients need epsilon")

    @property
    def oscillating(self):
        A = self.coefficients
        return A is not None and A.n > 1


def required_intervals(radius, epsilon):
    """Smallest even interval count per diameter with h <= eps / 16."""
    n = int(np.ceil(2.0 * radius * GUARD / epsilon - 1e-9))
    return n + (n % 2)


def _check_guard(problem, n):
    h = 2.0 * problem.radius / n
    if problem.oscillating and h > problem.epsilon / GUARD * (1 + 1e-12):
        req = required_intervals(problem.radius, problem.epsilon)
        raise ResolutionError(
            f"resolution guard h <= eps/{GUARD} violated: h={h:.6g}, eps={problem.epsilon:.6g}; "
            f"need n >= {req} intervals per diameter",
            req,
        )


# ---------------------------------------------------------------------------
# linear algebra


@contextmanager
def _pinned_global_rng(seed=0):
    # pyamg draws spectral-radius start vectors from the global RNG
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        yield
    finally:
        np.random.set_state(state)


def _linear_solve(A, b, tol, symmetric=True):
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros_like(b), 0.0, [0.0]
    if A.shape[0] <= 4000:
        x = spsolve(A.tocsc(), b)
        res = float(np.linalg.norm(b - A @ x) / nb)
        return x, res, [res]
    history = []
    sym, accel = ("symmetric", "cg") if symmetric else ("nonsymmetric", "gmres")
    with _pinned_global_rng():
        ml = pyamg.smoothed_aggregation_solver(A, symmetry=sym, max_coarse=500)
        x = ml.solve(b, x0=np.zeros_like(b), tol=tol, accel=accel, maxiter=400, residuals=history)
    res = float(np.linalg.norm(b - A @ x) / nb)
    hist = [float(v) / nb for v in history]
    if not res <= 10 * tol:
        raise SolverError(f"multigrid-preconditioned Krylov stalled at relative residual {res:.3e}", hist)
    return x, res, hist


def _harmonic_mean(a, b):
    return 2.0 * a * b / (a + b)


# ---------------------------------------------------------------------------
# solutions


class GridSolution:
    """Common interface of both grid backends.

    Attributes
    ----------
    center : ndarray (3,)
    radius : float
    h : float
        Grid spacing.
    epsilon : float or None
    residual : float
        Relative residual of the final linear solve.
    problem : BallProblem
    correctors : CorrectorSet or None
    """

    backend = "abstract"

    def value(self, points):
        raise NotImplementedError

    def gradient(self, points):
        raise NotImplementedError

    def nodal_fields(self, radius=None, order=4, n_phi=8):
        """Nodes inside ``B(center, radius)`` with values and gradients."""
        raise NotImplementedError

    def boundary_values(self, rel):
        return self.problem.boundary(rel)

    @property
    def margin(self):
        """Distance from the ball boundary below which evaluation is safe."""
        return 3.6 * self.h

    def fits(self, x0, r):
        d = np.linalg.norm(np.asarray(x0, dtype=float) - self.center)
        return d + r <= self.radius - self.margin + 1e-12

    def export_csv(self, path, spacing=None):
        """Write ``i,j,k,x,y,z,u,ux,uy,uz`` on a lattice through the centre."""
        spacing = float(spacing or self._export_spacing())
        m = int(np.floor((self.radius - self.margin) / spacing))
        idx = np.arange(-m, m + 1)
        I, J, K = np.meshgrid(idx, idx, idx, indexing="ij")
        ijk = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=-1)
        pts = self.center + ijk * spacing
        keep = np.linalg.norm(pts - self.center, axis=1) <= self.radius - self.margin
        ijk, pts = ijk[keep], pts[keep]
        u = self.value(pts)
        g = self.gradient(pts)
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("i,j,k,x,y,z,u,ux,uy,uz\n")
            for a in range(len(u)):
                nums = ",".join("%.12e" % v for v in (*pts[a], u[a], *g[a]))
                fh.write(f"{ijk[a, 0] + m},{ijk[a, 1] + m},{ijk[a, 2] + m},{nums}\n")

    def _export_spacing(self):
        return self.h


class CartesianSolution(GridSolution):
    backend = "cartesian"

    def __init__(self, problem, h, mh, u, interior, residual, history, correctors, coeff_n):
        self.problem = problem
        self.center = np.asarray(problem.center, dtype=float)
        self.radius = float(problem.radius)
        self.epsilon = problem.epsilon
        self.h = float(h)
        self.mh = int(mh)
        self.u = u
        self.interior = interior
        self.residual = float(residual)
        self.residual_history = list(history)
        self.correctors = correctors
        self.coefficients = problem.coefficients
        self.cell_resolution = coeff_n
        grads = []
        for k in range(3):
            g = centered_diff(u, k, self.h, order=4)
            g[~interior] = np.nan
            grads.append(g)
        self.grad = grads
        for arr in [u] + grads:
            arr.setflags(write=False)

    def _s(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return (p - self.center) / self.h + self.mh

    def value(self, points):
        shape = np.shape(points)[:-1]
        return interp_nd([self.u], self._s(points))[0].reshape(shape)

    def gradient(self, points):
        shape = np.shape(points)[:-1]
        vals = interp_nd(self.grad, self._s(points), what="gradient query")
        return vals.T.reshape(shape + (3,))

    def nodal_fields(self, radius=None, order=4, n_phi=8):
        radius = self.radius if radius is None else float(radius)
        idx = np.argwhere(self.interior)
        pts = self.center + (idx - self.mh) * self.h
        keep = np.linalg.norm(pts - self.center, axis=1) < radius
        idx, pts = idx[keep], pts[keep]
        u = self.u[tuple(idx.T)]
        if order == 4:
            g = np.stack([self.grad[k][tuple(idx.T)] for k in range(3)], axis=-1)
        else:
            g = np.stack(
                [centered_diff(self.u, k, self.h, order=2)[tuple(idx.T)] for k in range(3)], axis=-1)
        return pts, u, g


def _sample_coefficients(problem, pts):
    """A(x / eps) at points, shape (..., 3, 3)."""
    A = problem.coefficients
    if A is None:
        return None
    return A.evaluate(pts / problem.epsilon)


def _cartesian_solve(problem, h, mh, R, ghost_fn, tol, laplace=False):
    """Assemble and solve on nodes with |x - c| < R in a box of half-width mh."""
    m = 2 * mh + 1
    c = np.asarray(problem.center, dtype=float)
    ax = (np.arange(m) - mh) * h
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    r2 = np.einsum("...k,...k->...", X, X)
    interior = r2 < R * R * (1 - 1e-12)
    del r2
    N = m ** 3
    pos = np.full(N, -1, dtype=np.int64)
    I = np.flatnonzero(interior.ravel())
    pos[I] = np.arange(I.size)
    Aarr = None if laplace or problem.coefficients is None else _sample_coefficients(problem, X + c)
    del X
    strides = (m * m, m, 1)
    rows, cols, vals = [], [], []
    diag = np.zeros(I.size)
    for k in range(3):
        for sgn in (1, -1):
            nb = I + sgn * strides[k]
            if Aarr is None:
                w = np.full(I.size, 1.0 / h ** 2)
            else:
                akk = Aarr[..., k, k].ravel()
                w = _harmonic_mean(akk[I], akk[nb]) / h ** 2
            diag += w
            rows.append(np.arange(I.size))
            cols.append(nb)
            vals.append(-w)
    if Aarr is not None:
        for k in range(3):
            for l in range(3):
                if k == l:
                    continue
                akl = Aarr[..., k, l].ravel()
                if not np.any(akl):
                    continue
                for sk in (1, -1):
                    base = I + sk * strides[k]
                    coef = akl[base] / (4 * h * h)
                    for sl in (1, -1):
                        rows.append(np.arange(I.size))
                        cols.append(base + sl * strides[l])
                        vals.append(-sk * sl * coef)
    rows.append(np.arange(I.size))
    cols.append(I)
    vals.append(diag)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    cpos = pos[cols]
    inner = cpos >= 0
    Aii = sp.csr_matrix((vals[inner], (rows[inner], cpos[inner])), shape=(I.size, I.size))
    gcols = np.unique(cols[~inner])
    gidx = np.stack(np.unravel_index(gcols, (m, m, m)), axis=-1)
    gvals = ghost_fn(gidx - mh)
    gmap = np.full(N, -1, dtype=np.int64)
    gmap[gcols] = np.arange(gcols.size)
    Big = sp.csr_matrix(
        (vals[~inner], (rows[~inner], gmap[cols[~inner]])), shape=(I.size, gcols.size))
    b = -(Big @ gvals)
    symmetric = Aarr is None or np.allclose(Aarr, np.swapaxes(Aarr, -1, -2))
    x, res, hist = _linear_solve(Aii, b, tol, symmetric)
    u = np.full(N, np.nan)
    u[I] = x
    u[gcols] = gvals
    return u.reshape(m, m, m), interior, res, hist


def _solve_cartesian(problem, n, tol, correctors):
    mh = n // 2
    h = 2.0 * problem.radius / n

    def ghost_fn(off):
        return problem.boundary(off * h)

    u, interior, res, hist = _cartesian_solve(problem, h, mh, problem.radius, ghost_fn, tol)
    cell_n = problem.epsilon / h if problem.epsilon else None
    return CartesianSolution(problem, h, mh, u, interior, res, hist, correctors, cell_n)


# ---------------------------------------------------------------------------
# axisymmetric backend


_NPHI = 64


def _frame(axis):
    p, q = (axis + 1) % 3, (axis + 2) % 3
    return p, q


class AxisymmetricSolution(GridSolution):
    """Layered isotropic medium: azimuthal modes on an (s, rho) grid.

    ``s`` is the coordinate along the layering axis relative to the
    centre, ``rho`` the distance to that axis. Rho nodes sit at
    ``(j + 1/2) h`` so the axis carries no unknowns.
    """

    backend = "axisymmetric"

    def __init__(self, problem, axis, h, mh, J, modes, residual, history, correctors, coeff_n):
        self.problem = problem
        self.center = np.asarray(problem.center, dtype=float)
        self.radius = float(problem.radius)
        self.epsilon = problem.epsilon
        self.axis = int(axis)
        self.h = float(h)
        self.mh = int(mh)
        self.J = int(J)
        self.modes = modes  # list of (m, kind, U)
        self.residual = float(residual)
        self.residual_history = list(history)
        self.correctors = correctors
        self.coefficients = problem.coefficients
        self.cell_resolution = coeff_n
        self._prep()

    def _prep(self):
        h = self.h
        rho = (np.arange(self.J) + 0.5) * h
        self._ext = []
        for m, kind, U in self.modes:
            U.setflags(write=False)
            par = -1.0 if m % 2 else 1.0
            Ue = self._mirror(U, par)
            ds = centered_diff(Ue, 0, h, order=4)
            dr = centered_diff(Ue, 1, h, order=4)
            uor = Ue / np.concatenate([-(rho[1::-1]), rho])[None, :]
            # interior-only derivative fields; mirrored rows follow parity
            inner = self._interior_ext()
            ds[~inner] = np.nan
            dr[~inner] = np.nan
            ds = self._remirror(ds, par)
            dr = self._remirror(dr, -par)
            uor = self._remirror(np.where(inner, uor, np.nan), -par)
            self._ext.append((m, kind, Ue, ds, dr, uor))

    def _interior_ext(self):
        if not hasattr(self, "_inner_cache"):
            s = (np.arange(2 * self.mh + 1) - self.mh) * self.h
            rho = (np.arange(-2, self.J) + 0.5) * self.h
            inner = (s[:, None] ** 2 + rho[None, :] ** 2) < self.radius ** 2 * (1 - 1e-12)
            inner[:, :2] = False
            self._inner_cache = inner
        return self._inner_cache

    @staticmethod
    def _mirror(U, par):
        return np.concatenate([par * U[:, 1::-1], U], axis=1)

    @staticmethod
    def _remirror(E, par):
        E = E.copy()
        E[:, :2] = par * E[:, 3:1:-1]
        return E

    def _cyl(self, points):
        p = np.asarray(points, dtype=float).reshape(-1, 3) - self.center
        a = self.axis
        pa, qa = _frame(a)
        s = p[:, a]
        rho = np.hypot(p[:, pa], p[:, qa])
        phi = np.arctan2(p[:, qa], p[:, pa])
        idx = np.stack([s / self.h + self.mh, rho / self.h - 0.5 + 2.0], axis=-1)
        return s, rho, phi, idx

    def value(self, points):
        shape = np.shape(points)[:-1]
        _, _, phi, idx = self._cyl(points)
        out = np.zeros(idx.shape[0])
        for m, kind, Ue, *_ in self._ext:
            v = interp_nd([Ue], idx)[0]
            out += v * (np.cos(m * phi) if kind == "cos" else np.sin(m * phi))
        return out.reshape(shape)

    def gradient(self, points):
        shape = np.shape(points)[:-1]
        _, _, phi, idx = self._cyl(points)
        P = idx.shape[0]
        gs = np.zeros(P)
        gr = np.zeros(P)
        gp = np.zeros(P)
        for m, kind, Ue, ds, dr, uor in self._ext:
            vs, vr, vo = interp_nd([ds, dr, uor], idx, what="gradient query")
            if kind == "cos":
                t, dt = np.cos(m * phi), -np.sin(m * phi)
            else:
                t, dt = np.sin(m * phi), np.cos(m * phi)
            gs += vs * t
            gr += vr * t
            gp += m * vo * dt
        return self._to_cart(gs, gr, gp, phi).reshape(shape + (3,))

    def _to_cart(self, gs, gr, gp, phi):
        out = np.zeros((gs.size, 3))
        a = self.axis
        pa, qa = _frame(a)
        c, s = np.cos(phi), np.sin(phi)
        out[:, a] = gs
        out[:, pa] = gr * c - gp * s
        out[:, qa] = gr * s + gp * c
        return out

    def nodal_fields(self, radius=None, order=4, n_phi=8):
        radius = self.radius if radius is None else float(radius)
        h = self.h
        s = (np.arange(2 * self.mh + 1) - self.mh) * h
        rho = (np.arange(self.J) + 0.5) * h
        S, Rh = np.meshgrid(s, rho, indexing="ij")
        keep = (S ** 2 + Rh ** 2 < radius ** 2) & self._interior_ext()[:, 2:]
        ii, jj = np.nonzero(keep)
        phis = 2 * np.pi * np.arange(n_phi) / n_phi
        npnt = ii.size * n_phi
        u = np.zeros(npnt)
        gs = np.zeros(npnt)
        gr = np.zeros(npnt)
        gp = np.zeros(npnt)
        PH = np.repeat(phis[None, :], ii.size, axis=0).ravel()
        for m, kind, Ue, ds, dr, uor in self._ext:
            U = Ue[:, 2:]
            if order == 4:
                Ds, Dr = ds[:, 2:], dr[:, 2:]
            else:
                Ds = centered_diff(Ue, 0, h, order=2)[:, 2:]
                Dr = centered_diff(Ue, 1, h, order=2)[:, 2:]
            vals = np.repeat(U[ii, jj], n_phi)
            vs = np.repeat(Ds[ii, jj], n_phi)
            vr = np.repeat(Dr[ii, jj], n_phi)
            vo = np.repeat(U[ii, jj] / rho[jj], n_phi)
            t = np.cos(m * PH) if kind == "cos" else np.sin(m * PH)
            dt = -np.sin(m * PH) if kind == "cos" else np.cos(m * PH)
            u += vals * t
            gs += vs * t
            gr += vr * t
            gp += m * vo * dt
        g = self._to_cart(gs, gr, gp, PH)
        a = self.axis
        pa, qa = _frame(a)
        pts = np.zeros((npnt, 3))
        pts[:, a] = np.repeat(s[ii], n_phi)
        rr = np.repeat(rho[jj], n_phi)
        pts[:, pa] = rr * np.cos(PH)
        pts[:, qa] = rr * np.sin(PH)
        return pts + self.center, u, g

    def _export_spacing(self):
        return max(self.h, self.radius / 32)


def _mode_coefficients(problem, axis, s, rho, mmax):
    """Fourier coefficients in phi of the boundary extension at (s, rho)."""
    pa, qa = _frame(axis)
    phi = 2 * np.pi * np.arange(_NPHI) / _NPHI
    pts = np.zeros(s.shape + (_NPHI, 3))
    pts[..., axis] = s[:, None]
    pts[..., pa] = rho[:, None] * np.cos(phi)
    pts[..., qa] = rho[:, None] * np.sin(phi)
    g = problem.boundary(pts)
    F = np.fft.rfft(g, axis=-1) / _NPHI
    out = {}
    out[(0, "cos")] = F[:, 0].real
    for m in range(1, mmax + 1):
        out[(m, "cos")] = 2 * F[:, m].real
        out[(m, "sin")] = -2 * F[:, m].imag
    return out


def _axisym_solve_modes(problem, axis, h, mh, J, R, a_nodes, ghost_modes_fn, tol):
    """Solve each requested mode on nodes with s^2 + rho^2 < R^2.

    ``a_nodes`` is the scalar coefficient at the s nodes (or None for 1).
    ``ghost_modes_fn(ii, jj)`` returns ``{(m, kind): values}``.
    """
    ns = 2 * mh + 1
    s = (np.arange(ns) - mh) * h
    rho = (np.arange(J) + 0.5) * h
    inside = (s[:, None] ** 2 + rho[None, :] ** 2) < R * R * (1 - 1e-12)
    I = np.flatnonzero(inside.ravel())
    N = ns * J
    pos = np.full(N, -1, dtype=np.int64)
    pos[I] = np.arange(I.size)
    ii, jj = np.unravel_index(I, (ns, J))
    a = np.ones(ns) if a_nodes is None else np.asarray(a_nodes, dtype=float)
    rows, cols, vals = [], [], []
    diag = np.zeros(I.size)
    for sgn in (1, -1):
        nb = ii + sgn
        w = rho[jj] * _harmonic_mean(a[ii], a[nb]) / h ** 2
        diag += w
        rows.append(np.arange(I.size))
        cols.append(nb * J + jj)
        vals.append(-w)
    w = (jj + 1) * h * a[ii] / h ** 2
    diag += w
    rows.append(np.arange(I.size))
    cols.append(ii * J + jj + 1)
    vals.append(-w)
    lower = jj > 0
    w = jj[lower] * h * a[ii[lower]] / h ** 2
    diag[lower] += w
    rows.append(np.arange(I.size)[lower])
    cols.append(ii[lower] * J + jj[lower] - 1)
    vals.append(-w)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    cpos = pos[cols]
    inner = cpos >= 0
    gcols = np.unique(cols[~inner])
    gmap = np.full(N, -1, dtype=np.int64)
    gmap[gcols] = np.arange(gcols.size)
    Big = sp.csr_matrix(
        (vals[~inner], (rows[~inner], gmap[cols[~inner]])), shape=(I.size, gcols.size))
    gi, gj = np.unravel_index(gcols, (ns, J))
    ghost = ghost_modes_fn(gi, gj)
    scale = max((np.abs(v).max() for v in ghost.values()), default=0.0)
    modes, residual, history = [], 0.0, []
    mats = {}
    for (m, kind), gv in sorted(ghost.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if scale == 0.0 or np.abs(gv).max() <= 1e-13 * scale:
            continue
        if m not in mats:
            react = a[ii] * m * m / rho[jj]
            Aii = sp.csr_matrix(
                (np.concatenate([vals[inner], diag + react]),
                 (np.concatenate([rows[inner], np.arange(I.size)]),
                  np.concatenate([cpos[inner], np.arange(I.size)]))),
                shape=(I.size, I.size))
            mats[m] = Aii
        b = -(Big @ gv)
        x, res, hist = _linear_solve(mats[m], b, tol, True)
        residual = max(residual, res)
        history.extend(hist)
        U = np.full(N, np.nan)
        U[I] = x
        U[gcols] = gv
        modes.append((m, kind, U.reshape(ns, J)))
    if not modes:
        modes.append((0, "cos", np.where(np.isin(np.arange(N), np.concatenate([I, gcols])), 0.0, np.nan).reshape(ns, J)))
    return modes, residual, history


def _solve_axisym(problem, n, tol, correctors, axis, profile):
    mh = n // 2
    h = 2.0 * problem.radius / n
    J = mh + 2
    c = np.asarray(problem.center)
    s = (np.arange(2 * mh + 1) - mh) * h
    a_nodes = None
    if profile is not None:
        y = np.zeros((s.size, 3))
        y[:, axis] = (c[axis] + s) / problem.epsilon
        a_nodes = problem.coefficients.evaluate(y)[:, 0, 0]

    def ghost_fn(gi, gj):
        return _mode_coefficients(problem, axis, s[gi], (gj + 0.5) * h, _NPHI // 2 - 1)

    modes, res, hist = _axisym_solve_modes(problem, axis, h, mh, J, problem.radius, a_nodes, ghost_fn, tol)
    cell_n = problem.epsilon / h if problem.epsilon else None
    return AxisymmetricSolution(problem, axis, h, mh, J, modes, res, hist, correctors, cell_n)


# ---------------------------------------------------------------------------
# public solve entry points


def solve_dirichlet(problem: BallProblem, A: Optional[CoefficientField] = None,
                    C: Optional[CorrectorSet] = None, tol: float = 1e-11,
                    n: Optional[int] = None, method: str = "auto") -> GridSolution:
    """Solve ``-div(A(x/eps) grad u) = 0`` in the ball with Dirichlet data.

    Parameters
    ----------
    problem : BallProblem
    A : CoefficientField, optional
        Overrides ``problem.coefficients`` when given.
    C : CorrectorSet, optional
        Attached to the result for later corrected-gradient comparisons.
    tol : float
        Relative residual target of the linear solve.
    n : int, optional
        Grid intervals per diameter (even). Defaults to the smallest
        guard-compliant value, or 64 for constant coefficients.
    method : {"auto", "cartesian", "axisymmetric"}

    Raises
    ------
    ResolutionError
        If the grid is too coarse for ``eps``.
    """
    if A is not None:
        problem = dataclasses.replace(problem, coefficients=A)
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if n is None:
        n = required_intervals(problem.radius, problem.epsilon) if problem.oscillating else 64
    n = int(n)
    if n < 4 or n % 2:
        raise ValidationError("n must be an even integer >= 4")
    _check_guard(problem, n)
    coeff = problem.coefficients
    if coeff is not None and coeff.n == 1:
        # constant coefficients: no oscillation, no epsilon needed
        if problem.epsilon is None:
            problem = dataclasses.replace(problem, epsilon=1.0)
    profile = coeff.scalar_profile() if coeff is not None else (0, None)
    if method == "auto":
        method = "axisymmetric" if (coeff is not None and profile is not None and coeff.n > 1) else "cartesian"
    if method == "axisymmetric":
        if coeff is None:
            return _solve_axisym(problem, n, tol, C, 0, None)
        if profile is None:
            raise ValidationError("axisymmetric backend needs an isotropic layered field")
        axis = profile[0]
        return _solve_axisym(problem, n, tol, C, axis, profile)
    if method != "cartesian":
        raise ValidationError(f"unknown method {method!r}")
    return _solve_cartesian(problem, n, tol, C)


def solve_harmonic(problem: BallProblem, tol: float = 1e-11, n: Optional[int] = None,
                   method: str = "cartesian") -> GridSolution:
    """Laplace problem with the given boundary data."""
    problem = dataclasses.replace(problem, coefficients=None)
    return solve_dirichlet(problem, None, None, tol=tol, n=n or 64, method=method)


# ---------------------------------------------------------------------------
# harmonic approximation


@dataclass(frozen=True)
class HarmonicApproximant:
    """Harmonic comparison function and its measured errors.

    ``e_sup`` and ``e_grad`` are raw; divide by ``normalizer`` for the
    scale-free versions (``rel_sup``, ``rel_grad``).
    """

    u0: GridSolution
    e_sup: float
    e_grad: float
    normalizer: float
    radius: float

    @property
    def rel_sup(self):
        return self.e_sup / self.normalizer

    @property
    def rel_grad(self):
        return self.e_grad / self.normalizer


def _sphere_norm(u: GridSolution, r):
    quad = hm.sphere_quadrature(16)
    rel = r * quad.nodes
    if abs(r - u.radius) <= 1e-12 * u.radius:
        vals = u.boundary_values(rel)
    else:
        vals = u.value(u.center + rel)
    return float(np.sqrt(quad.mean(vals * vals)))


def _matched_correctors(u_eps: GridSolution):
    """Correctors on the cell grid matching the physical grid spacing."""
    A = u_eps.coefficients
    if A is None or A.n == 1:
        return None
    nc = u_eps.epsilon / u_eps.h
    ncr = int(round(nc))
    if abs(nc - ncr) > 1e-9 or A.func is None:
        return solve_cell_problem(A)
    shape = tuple(ncr if s > 1 else 1 for s in A.shape)
    axes = [np.arange(k) / k for k in shape]
    y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    sub = _make_field(A.func(y), func=A.func, name=A.name)
    return solve_cell_problem(sub)


def harmonic_approximant(u_eps: GridSolution, r: Optional[float] = None, tol: float = 1e-11,
                         correctors: Optional[CorrectorSet] = None) -> HarmonicApproximant:
    """Harmonic function matching ``u_eps`` on ``B(x0, 7r/8)``.

    The inner problem is posed on the same grid, with Dirichlet values
    copied from ``u_eps`` on the node ring outside ``B(x0, 7r/8)``, then
    shifted so that ``u0(x0) = u_eps(x0)``. Errors are maxima over grid
    nodes in ``B(x0, 3r/4)``; gradients use second-order centered
    differences on both functions and centered corrector gradients.
    """
    r = u_eps.radius if r is None else float(r)
    if r > u_eps.radius * (1 + 1e-12):
        raise ValidationError("r exceeds the solution radius")
    normalizer = _sphere_norm(u_eps, r)
    pts, vals, _ = u_eps.nodal_fields(r * 0.999, order=2, n_phi=4)
    if normalizer == 0 or np.ptp(vals) <= 1e-12 * max(1.0, np.abs(vals).max()):
        raise DegenerateInputError("u_eps is constant; harmonic approximation is degenerate")
    R_in = 7.0 * r / 8.0
    h = u_eps.h
    mh_in = int(np.ceil(R_in / h)) + 1
    harm = dataclasses.replace(u_eps.problem, coefficients=None, radius=R_in)
    if isinstance(u_eps, CartesianSolution):
        off = u_eps.mh

        def ghost_fn(idx):
            return u_eps.u[tuple((idx + off).T)]

        u0arr, interior, res, hist = _cartesian_solve(harm, h, mh_in, R_in, ghost_fn, tol, laplace=True)
        center_val = u_eps.u[off, off, off]
        shift = center_val - u0arr[mh_in, mh_in, mh_in]
        u0arr = u0arr + shift
        u0 = CartesianSolution(harm, h, mh_in, u0arr, interior, res, hist, None, None)
    elif isinstance(u_eps, AxisymmetricSolution):
        off = u_eps.mh
        lookup = {(m, kind): U for m, kind, U in u_eps.modes}

        def ghost_modes(gi, gj):
            return {key: U[gi - mh_in + off, gj] for key, U in lookup.items()}

        modes, res, hist = _axisym_solve_modes(
            harm, u_eps.axis, h, mh_in, mh_in + 2, R_in, None, ghost_modes, tol)
        u0 = AxisymmetricSolution(harm, u_eps.axis, h, mh_in, mh_in + 2, modes, res, hist, None, None)
        shift = float(u_eps.value(u_eps.center[None])[0] - u0.value(u0.center[None])[0])
        fixed = []
        for m, kind, U in modes:
            if m == 0:
                U = U + shift
            fixed.append((m, kind, U))
        if shift and not any(m == 0 for m, _, _ in modes):
            U = np.where(np.isfinite(modes[0][2]), shift, np.nan)
            fixed.append((0, "cos", U))
        u0 = AxisymmetricSolution(harm, u_eps.axis, h, mh_in, mh_in + 2, fixed, res, hist, None, None)
    else:
        raise ValidationError("unsupported solution backend")

    R_err = 0.75 * r
    p1, v1, g1 = u_eps.nodal_fields(R_err, order=2)
    p0, v0, g0 = u0.nodal_fields(R_err, order=2)
    if p1.shape != p0.shape or not np.allclose(p1, p0, atol=1e-9 * max(1.0, r)):
        raise SolverError("inner and outer node sets disagree")
    e_sup = float(np.abs(v1 - v0).max())
    C = correctors
    if C is None:
        C = _matched_correctors(u_eps)
    if C is None:
        C = u_eps.correctors
    if C is not None:
        G = C.grad_at(p1 / u_eps.epsilon)
        corr = g0 + np.einsum("pij,pj->pi", G, g0)
    else:
        corr = g0
    e_grad = float(np.linalg.norm(g1 - corr, axis=1).max())
    return HarmonicApproximant(u0, e_sup, e_grad, normalizer, r)


# ---------------------------------------------------------------------------
# interior estimates


def _ball_mean_sq(u: GridSolution, r, n_rad=24, q=16):
    """fint_B(x0, r) u^2 by shell quadrature.

    Shells inside the safe radius use interpolation; the thin outer
    layer up to ``r = radius`` is closed with the boundary data.
    """
    quad = hm.sphere_quadrature(q)
    safe = u.radius - u.margin
    r_in = min(r, safe)
    x, w = np.polynomial.legendre.leggauss(n_rad)
    s = 0.5 * r_in * (x + 1)
    ws = 0.5 * r_in * w
    total = 0.0
    for si, wi in zip(s, ws):
        vals = u.value(u.center + si * quad.nodes)
        total += wi * si * si * quad.mean(vals * vals)
    if r > r_in:
        v_in = u.value(u.center + r_in * quad.nodes)
        v_out = u.boundary_values(r * quad.nodes) if abs(r - u.radius) < 1e-12 else u.value(u.center + r * quad.nodes)
        xs, wl = np.polynomial.legendre.leggauss(4)
        for xi, wi in zip(xs, wl):
            t = 0.5 * (xi + 1)
            si = r_in + t * (r - r_in)
            v = (1 - t) * v_in + t * v_out
            total += 0.5 * (r - r_in) * wi * si * si * quad.mean(v * v)
    return 3.0 * total / r ** 3


def interior_estimate_check(u_eps: GridSolution) -> dict:
    """Constants of the interior L2 and Lipschitz-type estimates.

    Returns
    -------
    dict
        ``volume_ratio`` = fint_B u^2 / fint_dB u^2 and
        ``sup_ratio`` = max_{B(7r/8)} (u^2 + r^2 |grad u|^2) / fint_dB u^2.
    """
    r = u_eps.radius
    quad = hm.sphere_quadrature(16)
    surf = float(quad.mean(u_eps.boundary_values(r * quad.nodes) ** 2))
    if surf == 0:
        raise DegenerateInputError("boundary data vanish")
    vol = _ball_mean_sq(u_eps, r)
    pts, vals, grads = u_eps.nodal_fields(7 * r / 8)
    sup = float(np.max(vals ** 2 + r * r * np.einsum("pk,pk->p", grads, grads)))
    lip_pts, _, lip_g = u_eps.nodal_fields(r / 2)
    lip = float(r * np.linalg.norm(lip_g, axis=1).max() / np.sqrt(vol))
    return {"volume_ratio": vol / surf, "sup_ratio": sup / surf, "lipschitz_ratio": lip}
