"""Critical sets, minimal radii, almost-invariant subspaces, covers and tubes.

All routines take a ``GridSolution`` (or any object with ``value``,
``gradient`` and ``fits``) and work in physical coordinates; dimension
is fixed at 3, so the cover account ``sum r_i^(d-2)`` is ``sum r_i``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

from . import harmonics as hm
from . import spectra
from .errors import DegenerateInputError, ValidationError

log = logging.getLogger(__name__)

__all__ = [
    "Region",
    "ball_region",
    "ellipsoid_region",
    "CriticalPoint",
    "find_critical_points",
    "MinimalRadiusRecord",
    "minimal_radius",
    "gram_matrix",
    "InvariantSubspace",
    "almost_invariant_subspace",
    "invariant_split",
    "two_point_turning",
    "CriticalCover",
    "build_cover",
    "critical_skeleton",
    "tube_volume",
    "tube_sweep",
    "lipschitz_graph_check",
    "no_critical_zone_check",
    "write_cover_csv",
    "write_tube_csv",
]

D = 3


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    """``{x : (x - c)^T M (x - c) < radius^2}`` with M symmetric positive definite."""

    center: np.ndarray
    M: np.ndarray
    radius: float

    def _q(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", d, self.M, d)

    def contains(self, x, pad=0.0):
        return self._q(x) < (self.radius + pad * self.scale) ** 2

    @property
    def semi_axes(self):
        return self.radius / np.sqrt(np.linalg.eigvalsh(self.M))

    @property
    def scale(self):
        """Metric factor: a Euclidean step d grows the level by at most d * scale."""
        return float(np.sqrt(np.linalg.eigvalsh(self.M).max()))

    def grow(self, d):
        """Region containing the Euclidean d-neighbourhood of this one."""
        return Region(self.center, self.M, self.radius + d * self.scale)

    def bounding_box(self):
        ext = self.radius * np.sqrt(np.diag(np.linalg.inv(self.M)))
        return self.center - ext, self.center + ext

    def clip_segment(self, p, q):
        """Part of the segment pq inside the closed region, or None."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        a0 = p - self.center
        v = q - p
        A = v @ self.M @ v
        B = 2.0 * (a0 @ self.M @ v)
        C = a0 @ self.M @ a0 - self.radius ** 2
        if A <= 0:
            return (p, q) if C <= 0 else None
        disc = B * B - 4 * A * C
        if disc < 0:
            return None
        s = np.sqrt(disc)
        t0 = max(0.0, (-B - s) / (2 * A))
        t1 = min(1.0, (-B + s) / (2 * A))
        if t0 > t1:
            return None
        return p + t0 * v, p + t1 * v


def ball_region(center, radius) -> Region:
    return Region(np.asarray(center, dtype=float).reshape(3), np.eye(3), float(radius))


def ellipsoid_region(a_hat, r, center=(0.0, 0.0, 0.0)) -> Region:
    """``{x : 2 <(A + A^T)^-1 x, x> < r^2}`` for the effective matrix A."""
    a_hat = np.asarray(a_hat, dtype=float)
    M = 2.0 * np.linalg.inv(a_hat + a_hat.T)
    return Region(np.asarray(center, dtype=float).reshape(3), M, float(r))


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPoint:
    """Converged zero of the interpolated gradient."""

    x: np.ndarray
    residual: float
    iterations: int
    cell: tuple


def _fd_hessian(u, x, step):
    P = x.shape[0]
    offs = np.concatenate([np.eye(3), -np.eye(3)]) * step
    pts = (x[:, None, :] + offs[None]).reshape(-1, 3)
    g = u.gradient(pts).reshape(P, 6, 3)
    H = (g[:, :3, :] - g[:, 3:, :]).transpose(0, 2, 1) / (2.0 * step)
    return 0.5 * (H + H.transpose(0, 2, 1))


def _safe(u, x, pad):
    c = np.asarray(u.center)
    return np.linalg.norm(x - c, axis=-1) <= u.radius - u.margin - pad


def find_critical_points(u, region: Region, grad_tol=1e-8, spacing=None, max_iter=60,
                         screen=None) -> List[CriticalPoint]:
    """Detect zeros of the gradient inside ``region``.

    A lattice of spacing ``spacing`` is laid over the region (default:
    the grid spacing, coarsened so the region spans at most 64 cells per
    semi-axis); a cell is a seed when every gradient component takes
    both signs on its corners or the corner minimum of ``|grad u|`` falls
    below ``screen``. Seeds run damped Newton with finite-difference
    Hessians (step h); converged points closer than h/2 are merged,
    keeping the smallest residual.

    Parameters
    ----------
    grad_tol : float
        Convergence tolerance relative to the largest lattice gradient.
    screen : float, optional
        Absolute threshold; by default each cell uses the largest spread
        of a gradient component over its corners.
    """
    h = float(u.h)
    s = float(spacing or max(h, float(region.semi_axes.max()) / 64.0))
    lo, hi = region.bounding_box()
    lo = lo - 2 * s
    hi = hi + 2 * s
    axes = [np.arange(lo[k], hi[k] + s, s) for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([X, Y, Z], axis=-1)
    ok = _safe(u, nodes, 2 * h)
    G = np.full(nodes.shape, np.nan)
    G[ok] = u.gradient(nodes[ok])
    gnorm = np.linalg.norm(G, axis=-1)
    g_ref = float(np.nanmax(gnorm)) if np.any(ok) else 0.0
    if not g_ref > 0:
        return []

    def corners(a):
        return [a[i:a.shape[0] - 1 + i, j:a.shape[1] - 1 + j, k:a.shape[2] - 1 + k]
                for i in (0, 1) for j in (0, 1) for k in (0, 1)]

    cg = np.stack(corners(G), axis=0)
    valid = np.all(np.isfinite(cg).all(axis=-1), axis=0)
    with np.errstate(invalid="ignore"):
        lo_c, hi_c = np.min(cg, axis=0), np.max(cg, axis=0)
        straddle = np.all((lo_c <= 0) & (hi_c >= 0), axis=-1)
        gmin = np.min(np.linalg.norm(cg, axis=-1), axis=0)
        if screen is None:
            # a zero inside the cell keeps |grad u| within the corner spread
            small = gmin < np.max(hi_c - lo_c, axis=-1)
        else:
            small = gmin < screen
    centers = np.stack(corners(nodes), axis=0).mean(axis=0)
    grown = region.grow(2 * s)
    flag = valid & (straddle | small) & grown.contains(centers)
    idx = np.argwhere(flag)
    x = centers[flag].reshape(-1, 3)
    if x.size == 0:
        return []
    tol = grad_tol * g_ref
    iters = np.zeros(len(x), dtype=int)
    g = u.gradient(x)
    r = np.linalg.norm(g, axis=1)
    active = r > tol
    alive = np.ones(len(x), dtype=bool)
    merged = np.zeros(len(x), dtype=bool)
    for it in range(max_iter):
        act = np.flatnonzero(active & alive)
        if act.size == 0:
            break
        if act.size > 1:
            # iterates that met will share a limit; keep the lowest index
            pairs = cKDTree(x[act]).query_pairs(0.25 * h, output_type="ndarray")
            if len(pairs):
                alive[act[np.unique(pairs.max(axis=1))]] = False
                merged[act[np.unique(pairs.max(axis=1))]] = True
                act = np.flatnonzero(active & alive)
        H = _fd_hessian(u, x[act], h)
        step = -np.einsum("pij,pj->pi", np.linalg.pinv(H, rcond=1e-7), g[act])
        alpha = np.ones(act.size)
        pending = np.arange(act.size)
        newx = x[act].copy()
        newg = g[act].copy()
        for _ in range(12):
            cand = x[act][pending] + alpha[pending, None] * step[pending]
            inside = _safe(u, cand, 2 * h) & grown.contains(cand)
            cg_ = np.full(cand.shape, np.inf)
            if np.any(inside):
                cg_[inside] = u.gradient(cand[inside])
            cr = np.linalg.norm(cg_, axis=1)
            accept = cr <= (1 - 1e-4 * alpha[pending]) * r[act][pending]
            acc = pending[accept]
            newx[acc] = cand[accept]
            newg[acc] = cg_[accept]
            pending = pending[~accept]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5
        alive[act[pending]] = False
        x[act] = newx
        g[act] = newg
        r[act] = np.linalg.norm(newg, axis=1)
        iters[act] += 1
        active = r > tol
    conv = alive & ~active & region.contains(x)
    dropped = int(np.sum((~alive & ~merged) | (active & alive)))
    if dropped:
        log.info("critical-point search: %d of %d seeds discarded", dropped, len(x))
    order = np.lexsort((x[:, 2], x[:, 1], x[:, 0], r))
    order = order[conv[order]]
    kept: List[int] = []
    if order.size:
        tree = cKDTree(x[order])
        taken = np.zeros(order.size, dtype=bool)
        for a in range(order.size):
            if taken[a]:
                continue
            kept.append(order[a])
            for b in tree.query_ball_point(x[order[a]], 0.5 * h):
                taken[b] = True
    kept.sort(key=lambda i: tuple(x[i]))
    return [CriticalPoint(x[i].copy(), float(r[i]), int(iters[i]), tuple(int(v) for v in idx[i]))
            for i in kept]


# ---------------------------------------------------------------------------
# minimal radius


@dataclass(frozen=True)
class MinimalRadiusRecord:
    """``r0 = sup{s <= 1 : N*(s) <= l - delta0}`` and ``r_star = max(r0, eps/eps0)``."""

    x: np.ndarray
    r0: float
    r_star: float
    ell: int
    delta0: float
    s: np.ndarray
    n_star: np.ndarray


def _n_star(u, x, s, q):
    if isinstance(u, spectra.HarmonicExpansion):
        return float(spectra.spectral_doubling(u, s / u.radius))
    return spectra.doubling_index(u, x, s, q).N_star


def minimal_radius(u, x, ell, delta0, eps, eps0, n_samples=32, s_min=None, q=16,
                   bisect=25) -> MinimalRadiusRecord:
    """Minimal radius from the sampled doubling-index curve.

    ``s`` runs log-uniformly over ``[s_min, 1]`` (default ``s_min = 8h``).
    The largest sample with ``N* <= ell - delta0`` brackets the crossing,
    refined by bisection; no such sample gives ``r0 = 0``.
    """
    if not 0 < delta0 <= 0.5:
        raise ValidationError("delta0 must lie in (0, 1/2]")
    x = np.asarray(x, dtype=float).reshape(3)
    if s_min is None:
        s_min = 8.0 * u.h if hasattr(u, "h") else 1e-3
    s = np.geomspace(s_min, 1.0, n_samples)
    ns = np.array([_n_star(u, x, si, q) for si in s])
    thr = ell - delta0
    below = np.flatnonzero(ns <= thr)
    if below.size == 0:
        r0 = 0.0
    elif below[-1] == s.size - 1:
        r0 = 1.0
    else:
        i = below[-1]
        a, b = s[i], s[i + 1]
        for _ in range(bisect):
            m = np.sqrt(a * b)
            if _n_star(u, x, m, q) <= thr:
                a = m
            else:
                b = m
        r0 = float(a)
    r_star = max(r0, eps / eps0)
    return MinimalRadiusRecord(x, float(r0), float(r_star), int(ell), float(delta0), s, ns)


# ---------------------------------------------------------------------------
# Gram matrices and subspaces


def _as_harmonic(psi):
    if isinstance(psi, hm.SolidHarmonic):
        return psi
    c = np.asarray(psi, dtype=float)
    l = (c.size - 1) // 2
    return hm.SolidHarmonic(l, c)


def gram_matrix(psi, normalize=True) -> np.ndarray:
    """``Q_ab = fint_S2 d_a psi d_b psi`` so that ``||n . grad psi||^2 = n^T Q n``."""
    psi = _as_harmonic(psi)
    if normalize:
        psi = psi.normalized()
    quad = hm.sphere_quadrature(max(psi.l + 1, 4))
    g = psi.gradient(quad.nodes)
    return np.einsum("p,pa,pb->ab", quad.weights, g, g)


@dataclass(frozen=True)
class InvariantSubspace:
    basis: np.ndarray
    Q: np.ndarray
    eigenvalues: np.ndarray
    eta: float

    @property
    def dim(self):
        return self.basis.shape[0]


def almost_invariant_subspace(Q, eta) -> InvariantSubspace:
    """Eigenvectors of Q with eigenvalue ``<= eta^2``, at most d - 2 of them."""
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    w, v = np.linalg.eigh(Q)
    small = np.flatnonzero(w <= eta * eta)
    if small.size == w.size:
        raise ValidationError("every direction is almost invariant; psi is near-constant")
    small = small[: D - 2]
    basis = v[:, small].T.copy()
    for b in basis:
        k = int(np.argmax(np.abs(b)))
        if b[k] < 0:
            b *= -1
    return InvariantSubspace(basis, Q, w, float(eta))


def _rotation_to_e1(n):
    """Orthogonal R with R n = e1."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.eye(3)[int(np.argmin(np.abs(n)))]
    b = np.cross(n, a)
    b /= np.linalg.norm(b)
    c = np.cross(n, b)
    return np.stack([n, b, c])


def invariant_split(psi, V, q=None) -> dict:
    """Split ``psi = phi + varphi`` with phi depending only on the V-complement.

    Returns ``phi`` and ``varphi`` as SolidHarmonic objects plus their
    norms. ``V`` is a (k, 3) array with k <= 1, or an InvariantSubspace.
    """
    psi = _as_harmonic(psi)
    if isinstance(V, InvariantSubspace):
        V = V.basis
    V = np.asarray(V, dtype=float).reshape(-1, 3)
    if V.shape[0] > 1:
        raise ValidationError("V must have dimension at most 1 in three dimensions")
    R = _rotation_to_e1(V[0]) if V.shape[0] == 1 else np.eye(3)
    l = psi.l
    quad = hm.sphere_quadrature(q or max(l + 2, 4))
    y = quad.nodes @ R.T
    z = (y[:, 1] + 1j * y[:, 2]) ** l
    B = np.stack([z.real, z.imag], axis=1) if l > 0 else np.ones((quad.size, 1))
    w = quad.weights
    G = B.T @ (w[:, None] * B)
    # orthonormalize in the sphere inner product
    L = np.linalg.cholesky(G)
    Bn = np.linalg.solve(L, B.T).T
    f = psi(quad.nodes)
    c = Bn.T @ (w * f)
    phi_vals = Bn @ c
    Y = np.stack([hm.real_sph_harm(l, m, quad.nodes) for m in range(-l, l + 1)], axis=1)
    phi_c = Y.T @ (w * phi_vals)
    phi = hm.SolidHarmonic(l, phi_c)
    varphi = hm.SolidHarmonic(l, psi.coeffs - phi_c)
    return {"phi": phi, "varphi": varphi, "phi_norm": phi.norm, "varphi_norm": varphi.norm,
            "rotation": R}


def two_point_turning(u, x0, x1, ell, r=0.25, q=16, L_max=8) -> dict:
    """``||n . grad P_l|| / ||P_l||`` for the degree-l part of u around x0."""
    x0 = np.asarray(x0, dtype=float).reshape(3)
    x1 = np.asarray(x1, dtype=float).reshape(3)
    d = x1 - x0
    nd = np.linalg.norm(d)
    if nd == 0:
        raise ValidationError("x0 and x1 coincide")
    n = d / nd
    c = float(u.value(x0[None])[0]) if hasattr(u, "value") else float(u(x0[None])[0])
    tr = spectra.sphere_trace(u, x0, r, q).centered(c)
    P = spectra.decompose(tr, max(L_max, ell)).component(ell)
    if np.linalg.norm(P) == 0:
        raise DegenerateInputError("degree-l projection vanishes")
    Q = gram_matrix(P)
    return {"ratio": float(np.sqrt(max(n @ Q @ n, 0.0))), "n": n, "P": P}


# ---------------------------------------------------------------------------
# covering


@dataclass
class CriticalCover:
    centers: np.ndarray
    radii: np.ndarray
    labels: List[str]
    selected: np.ndarray
    secondary_centers: np.ndarray
    secondary_radii: np.ndarray
    points: np.ndarray
    records: list = field(default_factory=list)
    disjoint: bool = True
    contained: bool = True
    c_const: float = 0.0

    @property
    def account(self):
        """``sum r_i^(d-2)`` over primary and secondary balls."""
        return float(np.sum(self.radii[self.selected]) + np.sum(self.secondary_radii))

    def rows(self):
        out = []
        for i in self.selected:
            out.append((*self.centers[i], self.radii[i], self.labels[i]))
        for y, t in zip(self.secondary_centers, self.secondary_radii):
            out.append((*y, t, "secondary"))
        return out


def _vitali(centers, radii, shrink):
    """Greedy disjoint selection of ``B(x, r * shrink)``; descending radius, then lexicographic."""
    if len(radii) == 0:
        return np.zeros(0, dtype=int)
    order = sorted(range(len(radii)), key=lambda i: (-radii[i], tuple(centers[i])))
    chosen: List[int] = []
    for i in order:
        ok = True
        for j in chosen:
            if np.linalg.norm(centers[i] - centers[j]) < shrink * (radii[i] + radii[j]):
                ok = False
                break
        if ok:
            chosen.append(i)
    return np.array(chosen, dtype=int)


def _pairwise_disjoint(centers, radii):
    if len(radii) < 2:
        return True
    d = squareform(pdist(centers))
    s = radii[:, None] + radii[None, :]
    np.fill_diagonal(d, np.inf)
    return bool(np.all(d >= s * (1 - 1e-12)))


def build_cover(u, points, ell, delta0, eps, eps0, region: Optional[Region] = None,
                n_samples=24, q=16, records=None) -> CriticalCover:
    """Good/bad classification, Vitali selection and secondary balls.

    ``points`` are detected critical points (CriticalPoint or arrays).
    ``records`` may pass precomputed MinimalRadiusRecord objects.
    """
    pts = np.array([p.x if isinstance(p, CriticalPoint) else p for p in points], dtype=float).reshape(-1, 3)
    if region is not None and len(pts):
        pts = pts[region.contains(pts)]
    c_const = delta0 / (32.0 * ell)
    if len(pts) == 0:
        e = np.zeros((0, 3))
        return CriticalCover(e, np.zeros(0), [], np.zeros(0, dtype=int), e, np.zeros(0), e,
                             [], True, True, c_const)
    if records is None:
        records = [minimal_radius(u, x, ell, delta0, eps, eps0, n_samples=n_samples, q=q) for x in pts]
    rs = np.array([rec.r_star for rec in records])
    tree = cKDTree(pts)
    labels = []
    for i, x in enumerate(pts):
        nb = tree.query_ball_point(x, rs[i] * (1 - 1e-12))
        labels.append("bad" if np.any(rs[nb] < rs[i] / 3) else "good")
    good = np.array([i for i, lab in enumerate(labels) if lab == "good"], dtype=int)
    sel_local = _vitali(pts[good], rs[good], 1 / 20)
    selected = good[sel_local] if good.size else np.zeros(0, dtype=int)
    disjoint = _pairwise_disjoint(pts[selected], rs[selected] / 20)

    def covered(y, cs, rr, frac):
        if len(rr) == 0:
            return False
        return bool(np.any(np.linalg.norm(cs - y, axis=1) < frac * rr))

    sc, sr = pts[selected], rs[selected]
    leftover = [i for i in range(len(pts)) if not covered(pts[i], sc, sr, 0.25)]
    sec_c = np.zeros((0, 3))
    sec_t = np.zeros(0)
    if leftover:
        if len(sc) == 0:
            raise ValidationError("bad points without any good ball")
        ys = pts[leftover]
        t = np.array([np.linalg.norm(sc - y, axis=1).min() / 10.0 for y in ys])
        chosen = _vitali(ys, t, 1 / 20)
        sec_c, sec_t = ys[chosen], t[chosen]
        disjoint = disjoint and _pairwise_disjoint(sec_c, sec_t / 20)
    contained = all(covered(p, sc, sr, 0.25) or covered(p, sec_c, sec_t, 0.25) for p in pts)
    return CriticalCover(pts, rs, labels, selected, sec_c, sec_t, pts, list(records),
                         disjoint, contained, c_const)


# ---------------------------------------------------------------------------
# tubes


def critical_skeleton(points, link, region: Optional[Region] = None) -> np.ndarray:
    """Segments of the minimum spanning tree shorter than ``link``, clipped to ``region``.

    Returns an array (K, 2, 3); isolated points appear as zero-length
    segments.
    """
    P = np.array([p.x if isinstance(p, CriticalPoint) else p for p in points], dtype=float).reshape(-1, 3)
    if len(P) == 0:
        return np.zeros((0, 2, 3))
    segs = []
    used = np.zeros(len(P), dtype=bool)
    if len(P) > 1:
        tree = cKDTree(P)
        pairs = tree.sparse_distance_matrix(tree, link, output_type="coo_matrix")
        mst = minimum_spanning_tree(pairs.tocsr()).tocoo()
        for i, j in sorted(zip(mst.row.tolist(), mst.col.tolist())):
            segs.append((P[i], P[j]))
            used[i] = used[j] = True
    for i in np.flatnonzero(~used):
        segs.append((P[i], P[i]))
    out = []
    for p, q in segs:
        if region is None:
            out.append((p, q))
            continue
        c = region.clip_segment(p, q)
        if c is not None:
            out.append(c)
    return np.array(out, dtype=float).reshape(-1, 2, 3)


def _densify(S, step):
    S = np.asarray(S, dtype=float)
    if S.ndim == 2:
        return S.reshape(-1, 3)
    out = []
    for p, q in S:
        L = np.linalg.norm(q - p)
        k = max(1, int(np.ceil(L / step)))
        t = np.linspace(0.0, 1.0, k + 1)
        out.append(p + t[:, None] * (q - p))
    return np.concatenate(out) if out else np.zeros((0, 3))


def tube_volume(S, r, samples=400_000, seed=0):
    """Monte Carlo volume of ``{x : dist(x, S) < r}``.

    ``S`` is a point cloud (P, 3) or segments (K, 2, 3); segments are
    sampled at spacing r/64 before nearest-neighbour queries.

    Returns
    -------
    (volume, stderr)
    """
    if not r > 0:
        raise ValidationError("r must be positive")
    pts = _densify(S, r / 64.0)
    if len(pts) == 0:
        return 0.0, 0.0
    lo = pts.min(axis=0) - r
    hi = pts.max(axis=0) + r
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    tree = cKDTree(pts)
    hits = 0
    left = int(samples)
    while left > 0:
        m = min(left, 200_000)
        x = lo + rng.random((m, 3)) * (hi - lo)
        d, _ = tree.query(x, k=1, distance_upper_bound=r)
        hits += int(np.count_nonzero(d < r))
        left -= m
    p = hits / samples
    return box * p, box * np.sqrt(p * (1 - p) / samples)


def tube_sweep(S, radii, samples=400_000, seed=0):
    """Rows ``(r, volume, stderr, volume / r^2)``."""
    rows = []
    for k, r in enumerate(radii):
        v, se = tube_volume(S, r, samples, seed + k)
        rows.append((float(r), v, se, v / r ** 2))
    return rows


# ---------------------------------------------------------------------------
# cone checks


def _dist_to_subspace(w, V):
    V = np.asarray(V, dtype=float).reshape(-1, 3)
    if V.shape[0] == 0:
        return np.linalg.norm(w, axis=-1)
    proj = (w @ V.T) @ V
    return np.linalg.norm(w - proj, axis=-1)


def lipschitz_graph_check(centers, V, gamma) -> dict:
    """Worst ``dist(x_i - x_k, V) / |x_i - x_k|`` over all pairs."""
    X = np.asarray(centers, dtype=float).reshape(-1, 3)
    if len(X) < 2:
        raise ValidationError("need at least two centers")
    worst, pair = -1.0, (0, 1)
    for i in range(len(X) - 1):
        w = X[i + 1:] - X[i]
        n = np.linalg.norm(w, axis=1)
        ok = n > 0
        if not np.any(ok):
            continue
        ratio = _dist_to_subspace(w[ok], V) / n[ok]
        k = int(np.argmax(ratio))
        if ratio[k] > worst:
            worst = float(ratio[k])
            pair = (i, i + 1 + int(np.flatnonzero(ok)[k]))
    return {"pass": worst <= gamma, "ratio": worst, "pair": pair}


def no_critical_zone_check(u, x0, V, r_inner, c0=0.25, gamma=0.1, points=None,
                           n_samples=4000, seed=0) -> dict:
    """Critical points and gradient size in the cone zone around x0.

    Zone: ``r_inner <= |x - x0| < c0`` and ``dist(x - x0, V) >= gamma |x - x0|``.
    Violations are reported, not raised.
    """
    x0 = np.asarray(x0, dtype=float).reshape(3)
    if isinstance(V, InvariantSubspace):
        V = V.basis
    if points is None:
        points = find_critical_points(u, ball_region(x0, c0))
    P = np.array([p.x if isinstance(p, CriticalPoint) else p for p in points], dtype=float).reshape(-1, 3)

    def in_zone(x):
        w = x - x0
        n = np.linalg.norm(w, axis=-1)
        return (n >= r_inner) & (n < c0) & (_dist_to_subspace(w, V) >= gamma * n)

    bad = P[in_zone(P)] if len(P) else P
    rng = np.random.default_rng(seed)
    got = []
    while sum(len(g) for g in got) < n_samples:
        x = x0 + rng.uniform(-c0, c0, (4 * n_samples, 3))
        got.append(x[in_zone(x)])
    zs = np.concatenate(got)[:n_samples]
    gm = np.linalg.norm(u.gradient(zs), axis=1)
    k = int(np.argmin(gm))
    return {"pass": len(bad) == 0, "violations": bad, "min_grad": float(gm[k]),
            "argmin": zs[k], "distance": float(np.linalg.norm(zs[k] - x0))}


# ---------------------------------------------------------------------------
# CSV


def write_cover_csv(cover: CriticalCover, path):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("x,y,z,r,label\n")
        for x, y, z, r, lab in cover.rows():
            fh.write("%.12e,%.12e,%.12e,%.12e,%s\n" % (x, y, z, r, lab))


def write_tube_csv(rows, path):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("r,volume,stderr,ratio_r2\n")
        for row in rows:
            fh.write(",".join("%.12e" % v for v in row) + "\n")
