"""B-spline basis functions, derivatives, and spline curves on clamped
uniform knot vectors.

Everything here is immutable after construction and all operations are
pure, so values can be shared freely across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels


@dataclass(frozen=True)
class KnotVector:
    """Clamped non-decreasing knot sequence for one spline family.

    ``len(knots) == num_basis + degree + 1``; the first and last
    ``degree + 1`` knots repeat the domain endpoints and interior knots
    are uniformly spaced.
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if knots.ndim != 1:
            raise ValueError("knots must be one-dimensional")
        if not np.all(np.isfinite(knots)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        p = self.degree
        if len(knots) < 2 * (p + 1):
            raise ValueError("need at least 2*(degree+1) knots for a clamped vector")
        if knots[p] != knots[0] or knots[-p - 1] != knots[-1]:
            raise ValueError("first and last degree+1 knots must repeat the endpoints")
        if knots[0] >= knots[-1]:
            raise ValueError("knot domain must be non-degenerate")

    @property
    def num_basis(self):
        return len(self.knots) - self.degree - 1

    @property
    def domain_lo(self):
        return float(self.knots[0])

    @property
    def domain_hi(self):
        return float(self.knots[-1])

    def contains(self, x):
        return self.domain_lo <= x <= self.domain_hi


@dataclass(frozen=True)
class BasisSupport:
    """The degree+1 basis values that are non-zero at one point."""

    first_index: int
    values: np.ndarray = field(repr=False)


def make_knot_vector(domain_lo, domain_hi, num_basis, degree):
    """Clamped uniform knot vector on [domain_lo, domain_hi].

    Produces ``num_basis + degree + 1`` knots: the endpoints repeated
    degree+1 times with uniformly spaced interior knots between them.
    Requires ``num_basis >= degree + 1``.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if num_basis < degree + 1:
        raise ValueError(
            f"num_basis={num_basis} too small to clamp degree {degree} (need >= {degree + 1})"
        )
    if not (np.isfinite(domain_lo) and np.isfinite(domain_hi)):
        raise ValueError("domain endpoints must be finite")
    if not domain_lo < domain_hi:
        raise ValueError(f"empty or inverted domain [{domain_lo}, {domain_hi}]")
    segments = num_basis - degree
    interior = np.linspace(domain_lo, domain_hi, segments + 1)[1:-1]
    knots = np.concatenate(
        [np.full(degree + 1, float(domain_lo)), interior, np.full(degree + 1, float(domain_hi))]
    )
    return KnotVector(knots=knots, degree=degree)


def find_span(kv, x):
    """Index s with knots[s] <= x < knots[s+1]; x == domain_hi maps to the
    last non-empty interval."""
    if not kv.contains(x):
        raise ValueError(f"x={x} outside knot domain [{kv.domain_lo}, {kv.domain_hi}]")
    return int(kernels.find_span_batch(kv.knots, kv.degree, np.array([x]))[0])


def eval_nonzero_basis(kv, x):
    """All basis values that are non-zero at x, as a BasisSupport."""
    if not kv.contains(x):
        raise ValueError(f"x={x} outside knot domain [{kv.domain_lo}, {kv.domain_hi}]")
    first, vals = kernels.basis_batch(kv.knots, kv.degree, np.array([x]))
    return BasisSupport(first_index=int(first[0]), values=vals[0])


def eval_basis(kv, n, x):
    """Value of the n-th basis function at x; exact zero off its support."""
    if not 0 <= n < kv.num_basis:
        raise IndexError(f"basis index {n} out of range [0, {kv.num_basis})")
    sup = eval_nonzero_basis(kv, x)
    j = n - sup.first_index
    if 0 <= j <= kv.degree:
        return float(sup.values[j])
    return 0.0


def eval_basis_derivative(kv, n, x):
    """First derivative of the n-th basis function at x (degree >= 1).

    Terms with repeated-knot zero denominators are defined as zero; at
    interior knots of low-continuity splines this is the one-sided
    (right) derivative.
    """
    if kv.degree < 1:
        raise ValueError("derivative undefined for degree 0 basis functions")
    if not 0 <= n < kv.num_basis:
        raise IndexError(f"basis index {n} out of range [0, {kv.num_basis})")
    if not kv.contains(x):
        raise ValueError(f"x={x} outside knot domain [{kv.domain_lo}, {kv.domain_hi}]")
    first, _, dvals = kernels.basis_deriv_batch(kv.knots, kv.degree, np.array([x]))
    j = n - int(first[0])
    if 0 <= j <= kv.degree:
        return float(dvals[0, j])
    return 0.0


def eval_spline(coeffs, kv, x):
    """Spline value sum_n coeffs[n] * B_n(x), using only the local support.

    x may be a scalar or an array; the result matches its shape.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    if coeffs.shape != (kv.num_basis,):
        raise ValueError(f"expected {kv.num_basis} coefficients, got {coeffs.shape}")
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(xa < kv.domain_lo) or np.any(xa > kv.domain_hi):
        raise ValueError("evaluation point outside knot domain")
    y, _, _ = kernels.lcn_apply(kv.knots, kv.degree, coeffs[None, :], xa.reshape(-1, 1))
    if scalar:
        return float(y[0, 0])
    return y.reshape(np.shape(x))


def eval_basis_recursive(knots, degree, n, x):
    """Reference evaluator: the textbook two-term recursion on an arbitrary
    non-decreasing knot sequence.

    Exponential in degree, intended for cross-checking the fast local
    evaluation. The final interval is closed at the last knot value so
    the right boundary is covered.
    """
    knots = np.asarray(knots, dtype=np.float64)
    if n < 0 or n + degree + 1 >= len(knots):
        raise IndexError(f"basis index {n} invalid for {len(knots)} knots, degree {degree}")
    return _recurse(knots, degree, n, float(x), float(knots[-1]))


def _recurse(knots, p, n, x, last):
    if p == 0:
        if knots[n] <= x < knots[n + 1]:
            return 1.0
        if x == last and knots[n] < knots[n + 1] == last:
            return 1.0
        return 0.0
    out = 0.0
    d1 = knots[n + p] - knots[n]
    if d1 != 0.0:
        out += (x - knots[n]) / d1 * _recurse(knots, p - 1, n, x, last)
    d2 = knots[n + p + 1] - knots[n + 1]
    if d2 != 0.0:
        out += (knots[n + p + 1] - x) / d2 * _recurse(knots, p - 1, n + 1, x, last)
    return out
