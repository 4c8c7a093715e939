"""Sphere traces, spherical-harmonic expansions and frequency functionals.

Sphere averages use the normalized measure, so for a harmonic radial
family ``u(t R w) = sum_l t^l sum_m a_lm psi_lm(w)`` the surface mass at
``t`` is ``sum_l A_l t^(2l)`` with ``A_l = sum_m a_lm^2``. The Weiss
functional is reported against this normalized measure, a fixed positive
multiple of the surface-integral definition.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import harmonics as hm
from .errors import DegenerateInputError, ValidationError

__all__ = [
    "SphereTrace",
    "HarmonicExpansion",
    "FrequencyRecord",
    "sphere_trace",
    "decompose",
    "expansion_from_degrees",
    "doubling_index",
    "almgren_frequency",
    "spectral_frequency",
    "spectral_doubling",
    "weiss_functional",
    "weiss_identity_check",
    "project",
    "normalized_distance",
    "turning_distance",
    "spectral_turning",
    "concentration_check",
    "frequency_drop_check",
    "spectral_corpus",
    "frequency_sweep",
    "write_expansion_csv",
    "write_frequency_csv",
]


@dataclass(frozen=True)
class SphereTrace:
    """Samples of u on ``x0 + r * nodes``.

    ``values`` follow the node order of ``harmonics.sphere_quadrature(q)``.
    """

    center: np.ndarray
    radius: float
    q: int
    values: np.ndarray
    gradients: Optional[np.ndarray] = None

    @property
    def quadrature(self):
        return hm.sphere_quadrature(self.q)

    def mean(self):
        return float(self.quadrature.mean(self.values))

    def mean_sq(self):
        return float(self.quadrature.mean(self.values ** 2))

    @property
    def norm(self):
        return float(np.sqrt(self.mean_sq()))

    def centered(self, c):
        return replace(self, values=self.values - c)


@dataclass(frozen=True)
class HarmonicExpansion:
    """Real spherical-harmonic coefficients of a trace.

    Attributes
    ----------
    coeffs : ndarray, shape ((L_max + 1)^2,)
    L_max : int
    residual : float
        L2 norm of the part of the trace above degree L_max.
    radius : float
        Radius of the sphere the coefficients describe.
    center : ndarray
    """

    coeffs: np.ndarray
    L_max: int
    residual: float = 0.0
    radius: float = 1.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def degree_energy(self):
        """``A_l = sum_m a_lm^2`` for l = 0..L_max."""
        c = self.coeffs
        return np.array([np.sum(c[l * l:(l + 1) ** 2] ** 2) for l in range(self.L_max + 1)])

    def component(self, l):
        if l > self.L_max:
            return np.zeros(2 * l + 1)
        return np.array(self.coeffs[l * l:(l + 1) ** 2])

    @property
    def norm(self):
        return float(np.sqrt(np.sum(self.coeffs ** 2) + self.residual ** 2))

    def scaled_to(self, r):
        """Coefficients of the harmonic radial family on radius r."""
        t = r / self.radius
        lvec = np.concatenate([[l] * (2 * l + 1) for l in range(self.L_max + 1)])
        return replace(self, coeffs=self.coeffs * t ** lvec, residual=0.0, radius=r)

    def evaluate(self, points):
        """Harmonic extension at absolute points."""
        rel = np.asarray(points, dtype=float) - self.center
        out = np.zeros(rel.shape[:-1])
        for l in range(self.L_max + 1):
            c = self.component(l)
            if np.any(c):
                out = out + hm.SolidHarmonic(l, c / self.radius ** l)(rel)
        return out

    __call__ = evaluate


@dataclass(frozen=True)
class FrequencyRecord:
    """Doubling index and frequency at one centre and scale."""

    N_star: float
    N: float
    radius: float
    center: np.ndarray
    eta: Optional[float] = None
    delta: Optional[float] = None
    kappa: Optional[float] = None


# ---------------------------------------------------------------------------
# sampling and decomposition


def _evaluate(u, pts):
    if hasattr(u, "value"):
        return np.asarray(u.value(pts), dtype=float)
    return np.asarray(u(pts), dtype=float)


def _gradient(u, pts):
    if hasattr(u, "gradient"):
        return np.asarray(u.gradient(pts), dtype=float)
    raise ValidationError("gradient not available for this function")


def sphere_trace(u, x0, r, q=16, with_gradient=False) -> SphereTrace:
    """Sample u on the sphere ``|x - x0| = r``.

    ``u`` is a GridSolution, a HarmonicExpansion or any callable taking
    points of shape (..., 3).
    """
    x0 = np.asarray(x0, dtype=float).reshape(3)
    if not r > 0:
        raise ValidationError("radius must be positive")
    if hasattr(u, "fits") and not u.fits(x0, r):
        raise ValidationError(f"sphere B({x0.tolist()}, {r:g}) exits the solution domain")
    quad = hm.sphere_quadrature(q)
    pts = x0 + r * quad.nodes
    vals = _evaluate(u, pts)
    grads = _gradient(u, pts) if with_gradient else None
    return SphereTrace(x0, float(r), int(q), vals, grads)


def decompose(trace: SphereTrace, L_max: int = 8) -> HarmonicExpansion:
    """Quadrature inner products against the orthonormal basis."""
    if trace.q < L_max + 1:
        raise ValidationError(f"quadrature order {trace.q} under-resolves degree {L_max}")
    quad = trace.quadrature
    Y = quad.basis(L_max)
    a = Y.T @ (quad.weights * trace.values)
    total = float(quad.mean(trace.values ** 2))
    resid = float(np.sqrt(max(total - float(a @ a), 0.0)))
    return HarmonicExpansion(a, int(L_max), resid, trace.radius, np.asarray(trace.center))


def expansion_from_degrees(weights, radius=1.0, seed=None, rng=None):
    """Expansion with prescribed degree energies ``A_l`` and random directions.

    With neither ``seed`` nor ``rng``, each degree uses order m = 0.
    """
    weights = np.asarray(weights, dtype=float)
    L = weights.size - 1
    coeffs = np.zeros((L + 1) ** 2)
    if rng is None and seed is not None:
        rng = np.random.default_rng(seed)
    for l, A in enumerate(weights):
        if A < 0:
            raise ValidationError("degree energies must be nonnegative")
        if A == 0:
            continue
        if rng is None:
            v = np.zeros(2 * l + 1)
            v[l] = 1.0
        else:
            v = rng.standard_normal(2 * l + 1)
            v /= np.linalg.norm(v)
        coeffs[l * l:(l + 1) ** 2] = np.sqrt(A) * v
    return HarmonicExpansion(coeffs, L, 0.0, float(radius))


# ---------------------------------------------------------------------------
# frequency functionals


def _as_energy(e):
    if isinstance(e, HarmonicExpansion):
        return e.degree_energy()
    return np.asarray(e, dtype=float)


def spectral_frequency(e, t, centered=True):
    """``sum_k k A_k t^2k / sum_k A_k t^2k``.

    ``centered`` drops the degree-0 mass, matching ``u - u(x0)`` for
    harmonic families.
    """
    A = _as_energy(e)
    k = np.arange(A.size)
    t = np.asarray(t, dtype=float)
    if centered:
        A = A.copy()
        A[0] = 0.0
    p = t[..., None] ** (2 * k)
    den = p @ A
    if np.any(den <= 0):
        raise DegenerateInputError("vanishing surface mass")
    return (p @ (k * A)) / den


def spectral_doubling(e, t):
    """Doubling index of a harmonic family at scale t (centered)."""
    A = _as_energy(e).copy()
    A[0] = 0.0
    k = np.arange(A.size)
    t = np.asarray(t, dtype=float)
    num = (t[..., None] ** (2 * k)) @ A
    den = ((t[..., None] / 2) ** (2 * k)) @ A
    if np.any(den <= 0):
        raise DegenerateInputError("vanishing surface mass")
    return np.log(num / den) / np.log(4.0)


def _centered_value(u, x0):
    return float(_evaluate(u, np.asarray(x0, dtype=float).reshape(1, 3))[0])


def doubling_index(u, x0=None, r=1.0, q=16) -> FrequencyRecord:
    """``log_4`` of the ratio of centered sphere means at r and r/2.

    For a HarmonicExpansion the spectral formula is used (``r`` relative
    to the expansion radius scale); otherwise sphere traces are sampled.
    """
    if isinstance(u, HarmonicExpansion):
        t = r / u.radius
        x0 = u.center if x0 is None else x0
        return FrequencyRecord(float(spectral_doubling(u, t)), float(spectral_frequency(u, t)),
                               float(r), np.asarray(x0, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(3)
    c = _centered_value(u, x0)
    outer = sphere_trace(u, x0, r, q).centered(c).mean_sq()
    inner = sphere_trace(u, x0, r / 2, q).centered(c).mean_sq()
    if inner <= 0 or outer <= 0:
        raise DegenerateInputError("vanishing centered sphere mean (constant function?)")
    nstar = float(np.log(outer / inner) / np.log(4.0))
    return FrequencyRecord(nstar, float("nan"), float(r), x0)


def _grid_frequency(u, x0, r, q=16, n_rad=24):
    quad = hm.sphere_quadrature(q)
    c = _centered_value(u, x0)
    xs, ws = np.polynomial.legendre.leggauss(n_rad)
    s = 0.5 * r * (xs + 1)
    w = 0.5 * r * ws
    pts = x0 + (s[:, None, None] * quad.nodes[None]).reshape(-1, 3)
    g = _gradient(u, pts).reshape(n_rad, quad.size, 3)
    F = np.einsum("spk,spk->sp", g, g) @ quad.weights
    energy = float(np.sum(w * s * s * F))
    surf = sphere_trace(u, x0, r, q).centered(c).mean_sq()
    if surf <= 0:
        raise DegenerateInputError("vanishing centered sphere mean (constant function?)")
    return energy / (r * surf)


def almgren_frequency(u, x0=None, r=1.0, q=16) -> FrequencyRecord:
    """Frequency ``r int_B |grad u|^2 / int_dB (u - u(x0))^2``.

    Grid solutions use shell quadrature of the interpolated gradient;
    expansions use the spectral formula.
    """
    if isinstance(u, HarmonicExpansion):
        return doubling_index(u, x0, r)
    x0 = np.asarray(x0, dtype=float).reshape(3)
    N = _grid_frequency(u, x0, r, q)
    return FrequencyRecord(float("nan"), float(N), float(r), x0)


def weiss_functional(e: HarmonicExpansion, kappa, r):
    """``W_kappa(r) = sum_k A_k (k - kappa) t^(2k - 2 kappa)``, t = r / R.

    Equals ``(N(r) - kappa) r^(-2 kappa) fint_{dB_r} u^2`` with the
    uncentered frequency and unit reference radius.
    """
    A = _as_energy(e)
    R = e.radius if isinstance(e, HarmonicExpansion) else 1.0
    t = np.asarray(r, dtype=float) / R
    k = np.arange(A.size)
    return (t[..., None] ** (2 * k - 2 * kappa)) @ (A * (k - kappa))


def weiss_identity_check(e, r1=0.5, r2=1.0) -> dict:
    """Compare the coefficient sum with the frequency increment.

    Normalizes the surface mass to 1 at ``r2``; ``kappa = N(r1)``.
    """
    A = _as_energy(e)
    R = e.radius if isinstance(e, HarmonicExpansion) else 1.0
    t2 = r2 / R
    k = np.arange(A.size)
    A = A * t2 ** (2 * k)
    mass = A.sum()
    if mass <= 0:
        raise DegenerateInputError("zero expansion")
    A = A / mass
    rho = r1 / r2
    kappa = float(spectral_frequency(A, rho, centered=False))
    lhs = float(np.sum(A * np.abs(k - kappa) * np.abs(1.0 - rho ** (2 * (k - kappa)))))
    rhs = float(spectral_frequency(A, 1.0, centered=False) - kappa)
    return {"lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs), "kappa": kappa}


# ---------------------------------------------------------------------------
# projections and turning


def project(f, l, L_max=None):
    """Degree-l component as a ``SolidHarmonic`` (coefficients at unit scale).

    ``f`` is a SphereTrace or HarmonicExpansion; the returned polynomial
    reproduces the component on the sphere of f's radius when evaluated
    at ``(x - x0) / r``.
    """
    if isinstance(f, SphereTrace):
        f = decompose(f, max(l, L_max or l))
    return hm.SolidHarmonic(l, f.component(l))


def _vector(f):
    if isinstance(f, SphereTrace):
        return f.values, f.quadrature.weights
    if isinstance(f, HarmonicExpansion):
        return f.coeffs, None
    return np.asarray(f, dtype=float), None


def normalized_distance(f, g) -> float:
    """``|| f/||f|| - g/||g|| ||`` in L2 of the normalized sphere measure."""
    fv, fw = _vector(f)
    gv, gw = _vector(g)
    if fv.shape != gv.shape:
        raise ValidationError("inputs live on different grids")
    w = fw if fw is not None else gw
    if w is None:
        w = np.ones(fv.shape)
    nf = np.sqrt(np.sum(w * fv * fv))
    ng = np.sqrt(np.sum(w * gv * gv))
    if nf == 0 or ng == 0:
        raise DegenerateInputError("zero-norm input")
    d = fv / nf - gv / ng
    return float(np.sqrt(np.sum(w * d * d)))


def turning_distance(u, x0, l, r1, r2, q=16, L_max=8) -> float:
    """Distance between normalized degree-l projections at radii r1, r2."""
    x0 = np.asarray(x0, dtype=float).reshape(3)
    c = _centered_value(u, x0)
    out = []
    for r in (r1, r2):
        tr = sphere_trace(u, x0, r, q).centered(c)
        n = tr.norm
        if n == 0:
            raise DegenerateInputError("centered trace vanishes")
        out.append(decompose(tr, max(L_max, l)).component(l) / n)
    return float(np.linalg.norm(out[0] - out[1]))


def spectral_turning(e, l, t1=0.5, t2=1.0):
    """Turning of a harmonic family between scales t1 and t2 (centered)."""
    A = _as_energy(e).copy()
    A[0] = 0.0
    k = np.arange(A.size)
    n1 = np.sqrt(np.sum(A * t1 ** (2 * k)))
    n2 = np.sqrt(np.sum(A * t2 ** (2 * k)))
    if n1 == 0 or n2 == 0:
        raise DegenerateInputError("zero expansion")
    al = np.sqrt(A[l]) if l < A.size else 0.0
    return float(al * abs(t1 ** l / n1 - t2 ** l / n2))


def concentration_check(e, l, window=1 / 32) -> dict:
    """Coefficient concentration inequalities for a near-degree-l family.

    Returns the hypothesis flag and slack of each inequality (nonnegative
    means satisfied). Expansions must have zero degree-0 part.
    """
    A = _as_energy(e)
    if A[0] > 0:
        raise ValidationError("concentration check assumes u(0) = 0")
    N1 = float(spectral_frequency(A, 1.0))
    Nh = float(spectral_frequency(A, 0.5))
    hyp = (l - window <= Nh <= l + window) and (l - window <= N1 <= l + window)
    eta = N1 - Nh
    total = A.sum()
    k = np.arange(A.size)
    low = float(np.sum(A[:l] * 2.0 ** (-2 * k[:l])))
    high = float(np.sum(A[l + 1:]))
    Al = A[l] if l < A.size else 0.0
    turn = spectral_turning(A, l)
    return {
        "hypothesis": bool(hyp),
        "eta": eta,
        "lead_slack": float(Al - (1 - 3 * eta) * total),
        "low_slack": float(2 * eta * 2.0 ** (-2 * l) * total - low),
        "high_slack": float(2 * eta * total - high),
        "turning": turn,
        "turning_slack": float(8 * eta - turn),
    }


def frequency_drop_check(e, l, delta) -> dict:
    """Frequency at ``t = delta / l`` against ``l - 1 + delta``."""
    N1 = float(spectral_frequency(e, 1.0))
    t = delta / l
    Nt = float(spectral_frequency(e, t))
    return {"hypothesis": N1 <= l - delta, "N1": N1, "Nt": Nt, "slack": l - 1 + delta - Nt}


def spectral_corpus(seed=7, size=200, L_max=8):
    """Seeded corpus of harmonic expansions.

    A quarter are generic mixtures (including degree 0), the rest are
    dominated by one degree l in 1..4 with small random admixtures and
    vanishing degree-0 part, so many satisfy the concentration
    hypotheses.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(size):
        A = np.zeros(L_max + 1)
        if i % 4 == 0:
            A[:] = rng.exponential(size=L_max + 1) * (rng.random(L_max + 1) < 0.6)
            if A.sum() == 0:
                A[1] = 1.0
        else:
            l = int(rng.integers(1, 5))
            A[l] = 1.0
            scale = 10 ** rng.uniform(-4, -1)
            mask = rng.random(L_max + 1) < 0.5
            A += scale * rng.random(L_max + 1) * mask
            A[l] = 1.0
            A[0] = 0.0
        out.append(expansion_from_degrees(A, rng=rng))
    return out


def frequency_sweep(u, x0, radii, kappa=None, q=16):
    """Rows ``(r, N*, N, W_kappa)``; W needs an expansion."""
    rows = []
    for r in radii:
        if isinstance(u, HarmonicExpansion):
            rec = doubling_index(u, x0, r)
            w = float(weiss_functional(u, kappa, r)) if kappa is not None else float("nan")
            rows.append((float(r), rec.N_star, rec.N, w))
        else:
            ns = doubling_index(u, x0, r, q).N_star
            N = almgren_frequency(u, x0, r, q).N
            rows.append((float(r), ns, N, float("nan")))
    return rows


def write_expansion_csv(e: HarmonicExpansion, path):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("l,m,a\n")
        for l, m in hm.lm_pairs(e.L_max):
            fh.write(f"{l},{m},{'%.12e' % e.coeffs[hm.lm_index(l, m)]}\n")


def write_frequency_csv(rows, path):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("r,Nstar,N,Wkappa\n")
        for row in rows:
            fh.write(",".join("%.12e" % v for v in row) + "\n")
