"""Periodic cell problem: correctors, effective matrix, normalization.

The unit cell ``[0, 1)^3`` is sampled on a node grid ``y = i / n_k``.
Fields that do not vary along an axis may be stored with extent 1 on
that axis; the finite-difference operators below then reduce exactly to
the lower-dimensional problem, which keeps layered media cheap at high
resolution.

Discretization (conservation form)::

    L u = - sum_k Dm_k(aH_k Dp_k u) - sum_{k != l} C_k(a_kl C_l u)

with forward/backward differences ``Dp``/``Dm``, centered ``C``, and
``aH_k`` the harmonic mean of ``a_kk`` across the face ``i + e_k / 2``.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import SolverError, ValidationError

__all__ = [
    "CoefficientField",
    "CorrectorSet",
    "NormalizationTransform",
    "identity_field",
    "constant_field",
    "layered_field",
    "checkerboard_smoothed_field",
    "trig_tensor_field",
    "field_from_preset",
    "field_from_csv",
    "field_to_csv",
    "solve_cell_problem",
    "homogenized_matrix",
    "flux_average",
    "normalization_transform",
    "min_det_check",
]

D = 3


# ---------------------------------------------------------------------------
# small periodic helpers


def _dp(u, k, h):
    return (np.roll(u, -1, axis=k) - u) / h


def _dm(u, k, h):
    return (u - np.roll(u, 1, axis=k)) / h


def _dc(u, k, h):
    return (np.roll(u, -1, axis=k) - np.roll(u, 1, axis=k)) / (2.0 * h)


def _harmonic_mean(a, b):
    return 2.0 * a * b / (a + b)


def periodic_trilinear(arr, y):
    """Trilinear interpolation of a periodic node array.

    Parameters
    ----------
    arr : ndarray, shape (n1, n2, n3, ...)
        Node samples on ``[0, 1)^3``; trailing axes are components.
    y : ndarray, shape (..., 3)
        Query points, reduced modulo 1.

    Returns
    -------
    ndarray, shape y.shape[:-1] + arr.shape[3:]
    """
    y = np.asarray(y, dtype=float)
    lead = y.shape[:-1]
    pts = y.reshape(-1, 3)
    shape = arr.shape[:3]
    tail = arr.shape[3:]
    out = np.zeros((pts.shape[0],) + tail)
    idx0, frac = [], []
    for k in range(3):
        s = np.mod(pts[:, k], 1.0) * shape[k]
        i = np.floor(s).astype(np.int64)
        f = s - i
        if shape[k] == 1:
            f = np.zeros_like(f)
        idx0.append(np.mod(i, shape[k]))
        frac.append(f)
    for c0 in (0, 1):
        w0 = frac[0] if c0 else 1.0 - frac[0]
        i0 = np.mod(idx0[0] + c0, shape[0])
        for c1 in (0, 1):
            w1 = frac[1] if c1 else 1.0 - frac[1]
            i1 = np.mod(idx0[1] + c1, shape[1])
            for c2 in (0, 1):
                w2 = frac[2] if c2 else 1.0 - frac[2]
                i2 = np.mod(idx0[2] + c2, shape[2])
                w = w0 * w1 * w2
                out += w.reshape((-1,) + (1,) * len(tail)) * arr[i0, i1, i2]
    return out.reshape(lead + tail)


# ---------------------------------------------------------------------------
# coefficient fields


@dataclass(frozen=True)
class CoefficientField:
    """Periodic matrix field A(y) sampled on the unit-cell node grid.

    Attributes
    ----------
    values : ndarray, shape (n1, n2, n3, 3, 3)
        Node samples. An axis of extent 1 means A is constant along it.
    lam : float
        Ellipticity constant; checked at every node.
    lipschitz : float
        Discrete Lipschitz constant over neighbouring nodes.
    func : callable, optional
        Exact evaluator ``y (..., 3) -> (..., 3, 3)`` when the field is
        analytic; used for off-grid sampling.
    name : str
    """

    values: np.ndarray
    lam: float
    lipschitz: float
    func: Optional[Callable] = dataclasses.field(default=None, compare=False, repr=False)
    name: str = "custom"

    @property
    def shape(self):
        return self.values.shape[:3]

    @property
    def n(self):
        return int(max(self.shape))

    @property
    def is_symmetric(self):
        v = self.values
        return bool(np.allclose(v, np.swapaxes(v, -1, -2), rtol=0, atol=1e-14))

    def evaluate(self, y):
        """A at arbitrary cell points (periodic)."""
        y = np.asarray(y, dtype=float)
        if self.func is not None:
            return self.func(np.mod(y, 1.0))
        return periodic_trilinear(self.values, y)

    def scalar_profile(self):
        """Return ``(axis, a)`` when A = a(y_axis) I, else None.

        The profile ``a`` is the node array along ``axis``.
        """
        v = self.values
        eye = np.eye(D)
        diag = v[..., 0, 0]
        if not np.allclose(v, diag[..., None, None] * eye, rtol=0, atol=1e-14):
            return None
        varying = [k for k in range(3) if self.shape[k] > 1]
        if len(varying) > 1:
            return None
        axis = varying[0] if varying else 0
        return axis, diag.reshape(-1).copy()

    def expand(self):
        """Same field with every axis stored at full resolution n."""
        n = self.n
        reps = [n // s if s == 1 else 1 for s in self.shape]
        vals = np.tile(self.values, reps + [1, 1])
        if vals.shape[:3] != (n, n, n):
            raise ValidationError("expand requires equal nontrivial extents")
        return CoefficientField(vals, self.lam, self.lipschitz, self.func, self.name)


def _ellipticity(values):
    sym = 0.5 * (values + np.swapaxes(values, -1, -2))
    lo = np.linalg.eigvalsh(sym.reshape(-1, 3, 3)).min()
    hi = np.linalg.norm(values.reshape(-1, 3, 3), ord=2, axis=(1, 2)).max()
    return float(min(lo, 1.0 / hi))


def _lipschitz(values):
    shape = values.shape[:3]
    best = 0.0
    for k in range(3):
        if shape[k] == 1:
            continue
        diff = np.roll(values, -1, axis=k) - values
        nrm = np.linalg.norm(diff.reshape(-1, 3, 3), ord=2, axis=(1, 2)).max()
        best = max(best, float(nrm) * shape[k])
    return best


def _make_field(values, lam=None, lipschitz=None, func=None, name="custom"):
    values = np.ascontiguousarray(values, dtype=float)
    if values.ndim != 5 or values.shape[3:] != (3, 3):
        raise ValidationError("values must have shape (n1, n2, n3, 3, 3)")
    if not np.all(np.isfinite(values)):
        raise ValidationError("coefficient values must be finite")
    lam_data = _ellipticity(values)
    if lam_data <= 0:
        raise ValidationError("coefficient field is not elliptic")
    if lam is None:
        lam = lam_data
    elif lam_data < lam * (1 - 1e-12):
        raise ValidationError(
            f"ellipticity violated: data supports lambda={lam_data:.6g} < {lam:.6g}"
        )
    lip_data = _lipschitz(values)
    if lipschitz is None:
        lipschitz = lip_data
    elif lip_data > lipschitz * (1 + 1e-9) + 1e-14:
        raise ValidationError(
            f"Lipschitz bound violated: discrete constant {lip_data:.6g} > {lipschitz:.6g}"
        )
    values.setflags(write=False)
    return CoefficientField(values, float(lam), float(lipschitz), func, name)


def _node_grid(shape):
    axes = [np.arange(s) / s for s in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _scalar_field(fun, shape, name):
    y = _node_grid(shape)

    def func(yy):
        a = fun(np.asarray(yy, dtype=float))
        return a[..., None, None] * np.eye(D)

    return _make_field(func(y), func=func, name=name)


def identity_field():
    """A = I (stored with a single node)."""
    return constant_field(np.eye(D), name="identity")


def constant_field(A0, name="constant"):
    A0 = np.asarray(A0, dtype=float)
    if A0.shape != (3, 3):
        raise ValidationError("constant field needs a 3x3 matrix")

    def func(y):
        y = np.asarray(y)
        return np.broadcast_to(A0, y.shape[:-1] + (3, 3)).copy()

    return _make_field(A0.reshape(1, 1, 1, 3, 3), func=func, name=name)


def layered_field(n, mean=2.0, amplitude=1.0, axis=0):
    """Isotropic layered medium ``a(y) = mean + amplitude * sin(2 pi y_axis)``."""
    if not 0 <= abs(amplitude) < mean:
        raise ValidationError("layered field needs |amplitude| < mean")
    shape = [1, 1, 1]
    shape[axis] = int(n)

    def fun(y):
        return mean + amplitude * np.sin(2 * np.pi * y[..., axis])

    return _scalar_field(fun, tuple(shape), "layered")


def checkerboard_smoothed_field(n, low=1.0, high=3.0, sharpness=4.0):
    """Smoothed 3-D checkerboard, isotropic."""
    if not 0 < low < high:
        raise ValidationError("checkerboard needs 0 < low < high")

    def fun(y):
        s = np.prod(np.sin(2 * np.pi * y), axis=-1)
        return low + (high - low) * 0.5 * (1.0 + np.tanh(sharpness * s))

    return _scalar_field(fun, (int(n),) * 3, "checkerboard-smoothed")


def trig_tensor_field(n, skew=0.0):
    """Anisotropic smooth tensor with off-diagonal coupling.

    ``skew`` adds an antisymmetric part, giving a nonsymmetric field.
    """

    def func(y):
        y = np.asarray(y, dtype=float)
        s = np.sin(2 * np.pi * y)
        c = np.cos(2 * np.pi * y)
        A = np.zeros(y.shape[:-1] + (3, 3))
        for k in range(3):
            A[..., k, k] = 2.0 + 0.5 * s[..., k] + 0.3 * c[..., (k + 1) % 3]
        for k, l in ((0, 1), (1, 2), (0, 2)):
            A[..., k, l] = A[..., l, k] = 0.25 * np.cos(2 * np.pi * (y[..., k] + y[..., l]))
        if skew:
            t = skew * np.sin(2 * np.pi * (y[..., 0] - y[..., 1]))
            A[..., 0, 1] += t
            A[..., 1, 0] -= t
        return A

    return _make_field(func(_node_grid((int(n),) * 3)), func=func, name="trig-tensor")


def field_from_preset(name, n=64, **params):
    """Build a named preset field."""
    if name == "identity":
        return identity_field()
    if name == "layered":
        return layered_field(n, **params)
    if name == "checkerboard-smoothed":
        return checkerboard_smoothed_field(n, **params)
    if name == "trig-tensor":
        return trig_tensor_field(n, **params)
    raise ValidationError(f"unknown coefficient preset {name!r}")


_CSV_COLS = ["a%d%d" % (i + 1, j + 1) for i in range(3) for j in range(3)]


def field_from_csv(path, lam=None, lipschitz=None):
    """Read node samples with header ``i,j,k,a11,...,a33``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(["i", "j", "k"] + _CSV_COLS) - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"CSV missing columns: {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ValidationError("CSV has no rows")
    idx = np.array([[int(r["i"]), int(r["j"]), int(r["k"])] for r in rows])
    if idx.min() < 0:
        raise ValidationError("negative node index in CSV")
    shape = tuple(idx.max(axis=0) + 1)
    vals = np.full(shape + (3, 3), np.nan)
    data = np.array([[float(r[c]) for c in _CSV_COLS] for r in rows]).reshape(-1, 3, 3)
    vals[idx[:, 0], idx[:, 1], idx[:, 2]] = data
    if np.isnan(vals).any():
        raise ValidationError("CSV does not cover every node of its grid")
    return _make_field(vals, lam=lam, lipschitz=lipschitz, name="csv")


def field_to_csv(A: CoefficientField, path):
    n1, n2, n3 = A.shape
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(["i", "j", "k"] + _CSV_COLS) + "\n")
        for i in range(n1):
            for j in range(n2):
                for k in range(n3):
                    vals = ",".join("%.12e" % v for v in A.values[i, j, k].ravel())
                    fh.write(f"{i},{j},{k},{vals}\n")


# ---------------------------------------------------------------------------
# cell operator


class _CellOperator:
    def __init__(self, A: CoefficientField):
        v = A.values
        self.shape = A.shape
        self.h = [1.0 / s for s in self.shape]
        self.active = [k for k in range(3) if self.shape[k] > 1]
        self.a = v
        self.aH = [_harmonic_mean(v[..., k, k], np.roll(v[..., k, k], -1, axis=k)) for k in range(3)]
        self.off = [
            (k, l)
            for k in self.active
            for l in self.active
            if k != l and np.any(v[..., k, l] != 0)
        ]
        diag = np.zeros(self.shape)
        for k in self.active:
            diag += (self.aH[k] + np.roll(self.aH[k], 1, axis=k)) / self.h[k] ** 2
        self.diag = diag

    def apply(self, u):
        out = np.zeros(self.shape)
        for k in self.active:
            out -= _dm(self.aH[k] * _dp(u, k, self.h[k]), k, self.h[k])
        for k, l in self.off:
            out -= _dc(self.a[..., k, l] * _dc(u, l, self.h[l]), k, self.h[k])
        return out

    def rhs(self, j):
        f = np.zeros(self.shape)
        if j in self.active:
            f += _dm(self.aH[j], j, self.h[j])
        for k in self.active:
            if k != j:
                f += _dc(self.a[..., k, j], k, self.h[k])
        return f

    def gradients(self, u):
        fwd = np.zeros(self.shape + (3,))
        ctr = np.zeros(self.shape + (3,))
        for k in self.active:
            fwd[..., k] = _dp(u, k, self.h[k])
            ctr[..., k] = _dc(u, k, self.h[k])
        return fwd, ctr


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def _pcg(op: _CellOperator, b, tol, maxiter):
    """Diagonally preconditioned CG on the mean-zero subspace."""
    b = b - b.mean()
    x = np.zeros_like(b)
    r = b.copy()
    history = [_rms(r)]
    if history[-1] <= tol:
        return x, history
    dinv = np.where(op.diag > 0, 1.0 / np.where(op.diag > 0, op.diag, 1.0), 1.0)
    z = dinv * r
    z -= z.mean()
    p = z.copy()
    rz = float(np.vdot(r, z))
    for _ in range(maxiter):
        Ap = op.apply(p)
        alpha = rz / float(np.vdot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        r -= r.mean()
        history.append(_rms(r))
        if history[-1] <= tol:
            x -= x.mean()
            return x, history
        z = dinv * r
        z -= z.mean()
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"cell CG did not reach tol={tol:g} in {maxiter} iterations "
        f"(final residual {history[-1]:.3e})",
        history,
    )


def _gmres(op: _CellOperator, b, tol, maxiter):
    size = int(np.prod(op.shape))

    def mv(x):
        y = op.apply(x.reshape(op.shape))
        return (y - y.mean()).ravel()

    lin = LinearOperator((size, size), matvec=mv, dtype=float)
    b = b - b.mean()
    nb = max(np.linalg.norm(b.ravel()), 1e-300)
    history = []
    rtol = min(0.1, tol * np.sqrt(size) / nb)
    x, info = gmres(lin, b.ravel(), rtol=rtol, atol=0.0, restart=200, maxiter=maxiter,
                    callback=lambda rk: history.append(float(rk)), callback_type="pr_norm")
    x = x.reshape(op.shape)
    x -= x.mean()
    res = _rms(b - op.apply(x) + op.apply(x).mean())
    history.append(res)
    if res > tol:
        raise SolverError(f"cell GMRES residual {res:.3e} above tol={tol:g}", history)
    return x, history


# ---------------------------------------------------------------------------
# correctors


@dataclass(frozen=True)
class CorrectorSet:
    """Cell correctors and derived quantities.

    Attributes
    ----------
    chi : ndarray, shape (3, n1, n2, n3)
    grad_chi : ndarray, shape (n1, n2, n3, 3, 3)
        ``grad_chi[..., i, j]`` is the forward difference of chi_j along i.
    a_hat : ndarray, shape (3, 3)
    mu : float
        Minimum over nodes of det(I + grad_chi).
    residual : float
        Largest final RMS residual over the three cell solves.
    """

    chi: np.ndarray
    grad_chi: np.ndarray
    a_hat: np.ndarray
    mu: float
    residual: float
    coefficients: CoefficientField = dataclasses.field(repr=False)
    grad_chi_centered: np.ndarray = dataclasses.field(repr=False, default=None)
    histories: tuple = dataclasses.field(repr=False, default=())

    @property
    def shape(self):
        return self.chi.shape[1:]

    def chi_at(self, y):
        """Correctors at cell points, shape ``y.shape[:-1] + (3,)``."""
        return periodic_trilinear(np.moveaxis(self.chi, 0, -1), y)

    def grad_at(self, y):
        """Centered-difference corrector gradient at cell points.

        Aligned node queries return the nodal centered differences.
        """
        return periodic_trilinear(self.grad_chi_centered, y)


def solve_cell_problem(A: CoefficientField, tol: float = 1e-10, maxiter: int = 20000) -> CorrectorSet:
    """Solve ``L(chi_j + y_j) = 0`` for j = 1, 2, 3 on the periodic cell.

    Parameters
    ----------
    A : CoefficientField
    tol : float
        Target RMS residual of each discrete cell equation.
    maxiter : int

    Returns
    -------
    CorrectorSet

    Raises
    ------
    SolverError
        When an iteration cap is reached; carries the residual history.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if not isinstance(A, CoefficientField):
        raise ValidationError("A must be a CoefficientField")
    op = _CellOperator(A)
    solve = _pcg if A.is_symmetric else _gmres
    chis, fwd, ctr, hists = [], [], [], []
    for j in range(3):
        b = op.rhs(j)
        chi, hist = solve(op, b, tol, maxiter)
        chis.append(chi)
        hists.append(tuple(hist))
        g, c = op.gradients(chi)
        fwd.append(g)
        ctr.append(c)
    chi = np.stack(chis)
    grad = np.stack(fwd, axis=-1)  # [..., i, j] = D_i chi_j
    gradc = np.stack(ctr, axis=-1)
    residual = max(h[-1] for h in hists)
    a_hat = _energy_matrix(op, grad, gradc)
    mu = float(np.linalg.det(np.eye(D) + grad).min())
    for arr in (chi, grad, gradc, a_hat):
        arr.setflags(write=False)
    return CorrectorSet(chi, grad, a_hat, mu, residual, A, gradc, tuple(hists))


def _energy_matrix(op, grad, gradc):
    eye = np.eye(D)
    out = np.zeros((D, D))
    for i in range(D):
        for j in range(D):
            s = 0.0
            for k in range(D):
                s += np.mean(op.aH[k] * (eye[k, j] + grad[..., k, j]) * (eye[k, i] + grad[..., k, i]))
            for k in range(D):
                for l in range(D):
                    if k == l:
                        continue
                    akl = op.a[..., k, l]
                    if not np.any(akl):
                        continue
                    s += np.mean(akl * (eye[l, j] + gradc[..., l, j]) * (eye[k, i] + gradc[..., k, i]))
            out[i, j] = s
    return out


def _check_pair(A, C):
    if C.coefficients is not A and (
        C.coefficients.shape != A.shape or not np.array_equal(C.coefficients.values, A.values)
    ):
        raise ValidationError("corrector set was not computed from this coefficient field")


def homogenized_matrix(A: CoefficientField, C: CorrectorSet) -> np.ndarray:
    """Effective matrix from the corrector energy ``<A grad v_j, grad v_i>``."""
    _check_pair(A, C)
    op = _CellOperator(A)
    return _energy_matrix(op, np.asarray(C.grad_chi), np.asarray(C.grad_chi_centered))


def flux_average(A: CoefficientField, C: CorrectorSet) -> np.ndarray:
    """Effective matrix as the cell average of the flux ``A (I + grad chi)``."""
    _check_pair(A, C)
    op = _CellOperator(A)
    eye = np.eye(D)
    out = np.zeros((D, D))
    for i in range(D):
        for j in range(D):
            s = np.mean(op.aH[i] * (eye[i, j] + C.grad_chi[..., i, j]))
            for l in range(D):
                if l != i and np.any(op.a[..., i, l]):
                    s += np.mean(op.a[..., i, l] * (eye[l, j] + C.grad_chi_centered[..., l, j]))
            out[i, j] = s
    return out


@dataclass(frozen=True)
class NormalizationTransform:
    """Linear change of variables making the effective operator the Laplacian."""

    S: np.ndarray
    S_inv: np.ndarray


def normalization_transform(a_hat) -> NormalizationTransform:
    """``S = ((A + A^T) / 2)^(-1/2)`` so that ``S (A + A^T) S^T = 2 I``."""
    a_hat = np.asarray(a_hat, dtype=float)
    if a_hat.shape != (D, D):
        raise ValidationError("a_hat must be 3x3")
    sym = 0.5 * (a_hat + a_hat.T)
    w, V = np.linalg.eigh(sym)
    if w.min() <= 0:
        raise ValidationError("symmetric part of a_hat is not positive definite")
    S = (V * w ** -0.5) @ V.T
    S_inv = (V * w ** 0.5) @ V.T
    return NormalizationTransform(S, S_inv)


def min_det_check(C: CorrectorSet) -> dict:
    """Grid minimum of det(I + grad chi).

    Returns
    -------
    dict
        ``mu``, ``argmin`` (cell point), ``violation`` (mu <= 0).
    """
    det = np.linalg.det(np.eye(D) + C.grad_chi)
    flat = int(np.argmin(det))
    idx = np.unravel_index(flat, det.shape)
    y = np.array([idx[k] / det.shape[k] for k in range(3)])
    mu = float(det[idx])
    return {"mu": mu, "argmin": y, "violation": bool(mu <= 0)}
