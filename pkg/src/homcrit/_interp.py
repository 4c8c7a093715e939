"""Local cubic Lagrange interpolation on uniform node arrays.

Four-point stencils per axis reproduce cubic polynomials exactly. Node
arrays mark missing data with NaN; a query whose stencil touches a
missing node raises ``ValidationError``.
"""
import numpy as np

from .errors import ValidationError

_CHUNK = 65536


def cubic_weights(t):
    """Weights for nodes at offsets -1, 0, 1, 2 and their t-derivatives."""
    t = np.asarray(t, dtype=float)
    w = np.stack(
        [
            -t * (t - 1) * (t - 2) / 6.0,
            (t + 1) * (t - 1) * (t - 2) / 2.0,
            -(t + 1) * t * (t - 2) / 2.0,
            (t + 1) * t * (t - 1) / 6.0,
        ],
        axis=-1,
    )
    dw = np.stack(
        [
            -(3 * t * t - 6 * t + 2) / 6.0,
            (3 * t * t - 4 * t - 1) / 2.0,
            -(3 * t * t - 2 * t - 2) / 2.0,
            (3 * t * t - 1) / 6.0,
        ],
        axis=-1,
    )
    return w, dw


def _split(s, n):
    base = np.floor(s).astype(np.int64)
    t = s - base
    start = base - 1
    ok = (start >= 0) & (start + 3 <= n - 1)
    return start, t, ok


def interp_nd(arrays, s, deriv=False, what="point"):
    """Interpolate node arrays at fractional index coordinates.

    Parameters
    ----------
    arrays : sequence of ndarray
        Arrays of identical shape (2-D or 3-D).
    s : ndarray, shape (P, ndim)
        Fractional node indices.
    deriv : bool
        Also return index-space derivatives of the first array.

    Returns
    -------
    vals : ndarray, shape (len(arrays), P)
    dvals : ndarray, shape (P, ndim), only when ``deriv``
    """
    shape = arrays[0].shape
    nd = len(shape)
    s = np.asarray(s, dtype=float).reshape(-1, nd)
    P = s.shape[0]
    vals = np.empty((len(arrays), P))
    dvals = np.empty((P, nd)) if deriv else None
    for lo in range(0, P, _CHUNK):
        hi = min(P, lo + _CHUNK)
        ss = s[lo:hi]
        starts, ws, dws = [], [], []
        ok = np.ones(hi - lo, dtype=bool)
        for k in range(nd):
            st, t, okk = _split(ss[:, k], shape[k])
            ok &= okk
            w, dw = cubic_weights(t)
            starts.append(st)
            ws.append(w)
            dws.append(dw)
        if not ok.all():
            raise ValidationError(f"{what} outside the solution domain")
        offs = np.arange(4)
        if nd == 3:
            i0 = starts[0][:, None, None, None] + offs[None, :, None, None]
            i1 = starts[1][:, None, None, None] + offs[None, None, :, None]
            i2 = starts[2][:, None, None, None] + offs[None, None, None, :]
            W = ws[0][:, :, None, None] * ws[1][:, None, :, None] * ws[2][:, None, None, :]
            for a, arr in enumerate(arrays):
                g = arr[i0, i1, i2]
                if a == 0 and not np.all(np.isfinite(g)):
                    raise ValidationError(f"{what} outside the solution domain")
                vals[a, lo:hi] = np.einsum("pijk,pijk->p", g, W)
                if a == 0 and deriv:
                    dvals[lo:hi, 0] = np.einsum(
                        "pijk,pi,pj,pk->p", g, dws[0], ws[1], ws[2])
                    dvals[lo:hi, 1] = np.einsum(
                        "pijk,pi,pj,pk->p", g, ws[0], dws[1], ws[2])
                    dvals[lo:hi, 2] = np.einsum(
                        "pijk,pi,pj,pk->p", g, ws[0], ws[1], dws[2])
        else:
            i0 = starts[0][:, None, None] + offs[None, :, None]
            i1 = starts[1][:, None, None] + offs[None, None, :]
            W = ws[0][:, :, None] * ws[1][:, None, :]
            for a, arr in enumerate(arrays):
                g = arr[i0, i1]
                if a == 0 and not np.all(np.isfinite(g)):
                    raise ValidationError(f"{what} outside the solution domain")
                vals[a, lo:hi] = np.einsum("pij,pij->p", g, W)
                if a == 0 and deriv:
                    dvals[lo:hi, 0] = np.einsum("pij,pi,pj->p", g, dws[0], ws[1])
                    dvals[lo:hi, 1] = np.einsum("pij,pi,pj->p", g, ws[0], dws[1])
    if deriv:
        return vals, dvals
    return vals


def centered_diff(u, axis, h, order=4):
    """Centered differences with NaN where the stencil is incomplete.

    ``order=4`` falls back to the second-order stencil where the wider
    one is unavailable.
    """
    def shift(k):
        out = np.full(u.shape, np.nan)
        src = [slice(None)] * u.ndim
        dst = [slice(None)] * u.ndim
        if k > 0:
            src[axis] = slice(k, None)
            dst[axis] = slice(None, -k)
        else:
            src[axis] = slice(None, k)
            dst[axis] = slice(-k, None)
        out[tuple(dst)] = u[tuple(src)]
        return out

    p1, m1 = shift(1), shift(-1)
    d2 = (p1 - m1) / (2.0 * h)
    if order == 2:
        return d2
    p2, m2 = shift(2), shift(-2)
    d4 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
    return np.where(np.isfinite(d4), d4, d2)
