"""Real spherical harmonics, sphere quadrature and solid-harmonic polynomials.

Basis functions are orthonormal for the normalized surface measure
``dsigma / |S^2|`` (so ``psi_00 = 1``) and carry no Condon-Shortley phase.
Coefficients of degree ``l`` and order ``m`` live at flat index
``l*l + m + l``.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import lpmv

from .errors import ValidationError

__all__ = [
    "n_coeffs",
    "lm_index",
    "lm_pairs",
    "real_sph_harm",
    "sph_harm_matrix",
    "SphereQuadrature",
    "sphere_quadrature",
    "monomial_exponents",
    "solid_harmonic_poly",
    "eval_poly",
    "grad_poly",
    "SolidHarmonic",
]


def n_coeffs(L_max):
    return (L_max + 1) ** 2


def lm_index(l, m):
    return l * l + m + l


def lm_pairs(L_max):
    return [(l, m) for l in range(L_max + 1) for m in range(-l, l + 1)]


def _angles(points):
    p = np.asarray(points, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    z = np.clip(p[..., 2] / safe, -1.0, 1.0)
    phi = np.arctan2(p[..., 1], p[..., 0])
    return z, phi


def real_sph_harm(l, m, points):
    """Evaluate psi_lm at directions ``points / |points|``.

    Parameters
    ----------
    l, m : int
    points : ndarray, shape (..., 3)

    Returns
    -------
    ndarray, shape points.shape[:-1]
    """
    if abs(m) > l:
        raise ValidationError("|m| must not exceed l")
    z, phi = _angles(points)
    am = abs(m)
    norm = np.sqrt((2 * l + 1) * factorial(l - am) / factorial(l + am))
    leg = (-1) ** am * lpmv(am, l, z)
    if m == 0:
        return norm * leg
    if m > 0:
        return np.sqrt(2.0) * norm * leg * np.cos(am * phi)
    return np.sqrt(2.0) * norm * leg * np.sin(am * phi)


def sph_harm_matrix(L_max, points):
    """Matrix ``Y[k, idx] = psi_idx(points[k])`` for all degrees <= L_max."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty((pts.shape[0], n_coeffs(L_max)))
    for l, m in lm_pairs(L_max):
        out[:, lm_index(l, m)] = real_sph_harm(l, m, pts)
    return out


class SphereQuadrature:
    """Product Gauss-Legendre (in cos theta) x uniform (in phi) rule.

    Integrates polynomials of degree <= 2q - 1 exactly; ``weights`` sum
    to 1 so ``weights @ f`` is the sphere average.
    """

    def __init__(self, q):
        q = int(q)
        if q < 1:
            raise ValidationError("quadrature order must be >= 1")
        self.q = q
        x, w = np.polynomial.legendre.leggauss(q)
        nphi = 2 * q
        phi = (np.arange(nphi) + 0.5) * (2 * np.pi / nphi)
        ct = np.repeat(x, nphi)
        st = np.sqrt(1.0 - ct * ct)
        ph = np.tile(phi, q)
        self.nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)
        self.weights = np.repeat(w, nphi) / (2.0 * nphi)
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self):
        return self.weights.size

    def mean(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))

    def basis(self, L_max):
        return _basis_cached(self.q, int(L_max))


@lru_cache(maxsize=None)
def sphere_quadrature(q):
    return SphereQuadrature(q)


@lru_cache(maxsize=None)
def _basis_cached(q, L_max):
    Y = sph_harm_matrix(L_max, sphere_quadrature(q).nodes)
    Y.setflags(write=False)
    return Y


@lru_cache(maxsize=None)
def monomial_exponents(l):
    """Exponent triples (a, b, c), a + b + c = l, in a fixed order."""
    return tuple((a, b, l - a - b) for a in range(l, -1, -1) for b in range(l - a, -1, -1))


def _monomials(exps, x):
    x = np.asarray(x, dtype=float)
    cols = [x[..., 0] ** a * x[..., 1] ** b * x[..., 2] ** c for a, b, c in exps]
    return np.stack(cols, axis=-1)


@lru_cache(maxsize=None)
def solid_harmonic_poly(l):
    """Monomial coefficients of ``|x|^l psi_lm(x / |x|)``.

    Returns
    -------
    ndarray, shape (2l + 1, len(monomial_exponents(l)))
    """
    exps = monomial_exponents(l)
    quad = sphere_quadrature(max(l + 2, 4))
    M = _monomials(exps, quad.nodes)
    Y = np.stack([real_sph_harm(l, m, quad.nodes) for m in range(-l, l + 1)], axis=-1)
    coef, *_ = np.linalg.lstsq(M, Y, rcond=None)
    # integer-like rounding noise is harmless; keep full precision
    out = coef.T.copy()
    out.setflags(write=False)
    return out


def eval_poly(coef, exps, x):
    return _monomials(exps, x) @ coef


def grad_poly(coef, exps, x):
    """Gradient of a homogeneous polynomial, shape x.shape."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    for c, (a, b, e) in zip(coef, exps):
        if c == 0:
            continue
        if a:
            out[..., 0] += c * a * x[..., 0] ** (a - 1) * x[..., 1] ** b * x[..., 2] ** e
        if b:
            out[..., 1] += c * b * x[..., 0] ** a * x[..., 1] ** (b - 1) * x[..., 2] ** e
        if e:
            out[..., 2] += c * e * x[..., 0] ** a * x[..., 1] ** b * x[..., 2] ** (e - 1)
    return out


class SolidHarmonic:
    """Homogeneous harmonic polynomial of degree ``l``.

    Parameters
    ----------
    l : int
    coeffs : array_like, shape (2l + 1,)
        Coefficients in the real orthonormal basis, orders ``-l..l``.
    """

    def __init__(self, l, coeffs):
        self.l = int(l)
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(2 * self.l + 1)
        self.exps = monomial_exponents(self.l)
        self.poly = self.coeffs @ solid_harmonic_poly(self.l)

    @property
    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def __call__(self, x):
        return eval_poly(self.poly, self.exps, x)

    def gradient(self, x):
        return grad_poly(self.poly, self.exps, x)

    def normalized(self):
        n = self.norm
        if n == 0:
            raise ValidationError("cannot normalize the zero harmonic")
        return SolidHarmonic(self.l, self.coeffs / n)
