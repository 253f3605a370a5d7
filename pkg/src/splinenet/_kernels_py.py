"""Vectorized numpy implementations of the spline hot kernels.

Portable fallback backend; ``splinenet._kernels_cy`` is the compiled
equivalent with the same functions, signatures, and semantics. Callers
validate shapes and clamp evaluation points into the knot domain before
calling in here.
"""

import numpy as np

BACKEND_NAME = "python"


def find_span_batch(knots, degree, x):
    """Index s per point with knots[s] <= x < knots[s+1], right end closed."""
    num_basis = len(knots) - degree - 1
    span = np.searchsorted(knots, x, side="right") - 1
    return np.clip(span, degree, num_basis - 1)


def _triangular_basis(knots, degree, span, x):
    # Bottom-up Cox-de Boor over the active window, vectorized over points.
    # Zero denominators (repeated knots) contribute zero terms.
    k = x.shape[0]
    vals = np.zeros((k, degree + 1))
    vals[:, 0] = 1.0
    left = np.empty((k, degree + 1))
    right = np.empty((k, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(k)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.divide(vals[:, r], denom, out=np.zeros(k), where=denom != 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    # clamped endpoints interpolate exactly; the recursion can drift by an
    # ulp there when interior knots are not representable
    at_lo = x <= knots[0]
    if at_lo.any():
        vals[at_lo] = 0.0
        vals[at_lo, 0] = 1.0
    at_hi = x >= knots[-1]
    if at_hi.any():
        vals[at_hi] = 0.0
        vals[at_hi, degree] = 1.0
    return vals


def basis_batch(knots, degree, x):
    """Non-zero basis values at each point.

    Returns (first, vals) where vals[k, :] are the degree+1 basis values
    B_{first[k]} .. B_{first[k]+degree} at x[k].
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    span = find_span_batch(knots, degree, x)
    vals = _triangular_basis(knots, degree, span, x)
    return span - degree, vals


def basis_deriv_batch(knots, degree, x):
    """Non-zero basis values and their first derivatives at each point."""
    if degree < 1:
        raise ValueError("basis derivative requires degree >= 1")
    x = np.ascontiguousarray(x, dtype=np.float64)
    p = degree
    span = find_span_batch(knots, p, x)
    vals = _triangular_basis(knots, p, span, x)
    lo = _triangular_basis(knots, p - 1, span, x)  # B_{p-1, span-p+1+j}, j=0..p-1
    k = x.shape[0]
    zeros = np.zeros((k, 1))
    upper = np.concatenate([zeros, lo], axis=1)  # B_{p-1, n}   for n = span-p+j
    lower = np.concatenate([lo, zeros], axis=1)  # B_{p-1, n+1}
    n = (span - p)[:, None] + np.arange(p + 1)[None, :]
    d1 = knots[n + p] - knots[n]
    d2 = knots[n + p + 1] - knots[n + 1]
    ta = np.divide(upper, d1, out=np.zeros_like(upper), where=d1 != 0.0)
    tb = np.divide(lower, d2, out=np.zeros_like(lower), where=d2 != 0.0)
    return span - p, vals, p * (ta - tb)


def _gather_coeff_rows(coeffs, first, degree):
    # coeffs (M, N), first (B, M) -> per-element coefficient windows (B, M, degree+1)
    idx = first[:, :, None] + np.arange(degree + 1)[None, None, :]
    rows = np.arange(coeffs.shape[0])[None, :, None]
    return coeffs[rows, idx]


def lcn_apply(knots, degree, coeffs, z):
    """Per-neuron spline activation for a batch of pre-activations.

    coeffs (M, N); z (B, M) already clamped into the knot domain.
    Returns h (B, M), first (B, M), vals (B, M, degree+1).
    """
    b, m = z.shape
    first, vals = basis_batch(knots, degree, z.reshape(-1))
    first = first.reshape(b, m)
    vals = vals.reshape(b, m, degree + 1)
    c = _gather_coeff_rows(coeffs, first, degree)
    h = (c * vals).sum(axis=2)
    return h, first, vals


def lcn_dh_dz(knots, degree, coeffs, z):
    """Derivative of each neuron's spline at its pre-activation; (B, M)."""
    b, m = z.shape
    first, _, dvals = basis_deriv_batch(knots, degree, z.reshape(-1))
    first = first.reshape(b, m)
    dvals = dvals.reshape(b, m, degree + 1)
    c = _gather_coeff_rows(coeffs, first, degree)
    return (c * dvals).sum(axis=2)


def coeff_grad(first, vals, dh, num_basis):
    """Accumulate spline-coefficient gradients: dC[i, n] = sum_b dh[b,i] * B_n."""
    b, m, width = vals.shape
    dcoeffs = np.zeros((m, num_basis))
    idx = first[:, :, None] + np.arange(width)[None, None, :]
    rows = np.broadcast_to(np.arange(m)[None, :, None], idx.shape)
    np.add.at(dcoeffs, (rows, idx), dh[:, :, None] * vals)
    return dcoeffs


def _scatter_full(first, vals, num_basis):
    b, m, width = vals.shape
    full = np.zeros((b, m, num_basis))
    idx = first[:, :, None] + np.arange(width)[None, None, :]
    np.put_along_axis(full, idx, vals, axis=2)
    return full


def kan_apply(knots, degree, coeffs, base_w, x_spline, x_raw):
    """Edge-spline layer: h[b,o] = sum_i spline_oi(x_spline[b,i]) + base_w[o,i]*x_raw[b,i].

    coeffs (Mo, Mi, N); base_w (Mo, Mi); x_spline is x_raw clamped into the
    knot domain. Returns h (B, Mo), first (B, Mi), vals (B, Mi, degree+1).
    """
    b, mi = x_spline.shape
    num_basis = coeffs.shape[2]
    first, vals = basis_batch(knots, degree, x_spline.reshape(-1))
    first = first.reshape(b, mi)
    vals = vals.reshape(b, mi, degree + 1)
    full = _scatter_full(first, vals, num_basis)
    h = np.einsum("bin,oin->bo", full, coeffs) + x_raw @ base_w.T
    return h, first, vals


def kan_backward(knots, degree, coeffs, base_w, x_spline, x_raw, first, vals, live, dh):
    """Backward pass of kan_apply.

    live (B, Mi) is 1.0 where the spline input was not clamped (derivative
    flows) and 0.0 where it was. Returns (dx, dcoeffs, dbase_w).
    """
    b, mi = x_spline.shape
    num_basis = coeffs.shape[2]
    full = _scatter_full(first, vals, num_basis)
    dcoeffs = np.einsum("bo,bin->oin", dh, full)
    dbase_w = dh.T @ x_raw
    _, _, dvals = basis_deriv_batch(knots, degree, x_spline.reshape(-1))
    dfull = _scatter_full(first, dvals.reshape(b, mi, degree + 1), num_basis)
    g = np.einsum("bo,oin->bin", dh, coeffs)
    dx = (g * dfull).sum(axis=2) * live + dh @ base_w
    return dx, dcoeffs, dbase_w
