"""Scalar special functions for the lifetime models.

The residual-lifetime formulas need the upper incomplete gamma function in
an exponentially scaled form, exp(z) * Gamma(s, z), which stays finite far
into the tail where Gamma(s, z) itself underflows.
"""

import math

_MAX_ITER = 1000
_EPS = 1e-15


def upper_incomplete_gamma(s, z, scaled=False):
    """Upper incomplete gamma Gamma(s, z) = int_z^inf u^(s-1) e^-u du.

    Parameters
    ----------
    s : float, > 0
    z : float, >= 0
    scaled : bool
        If True, return exp(z) * Gamma(s, z) instead.

    Uses the lower-gamma power series for z < s + 1 and a modified Lentz
    continued fraction otherwise; both iterate until relative changes fall
    below ~1e-15, giving better than 1e-12 relative accuracy over the
    parameter ranges the lifetime models produce.
    """
    if s <= 0.0:
        raise ValueError(f"s must be positive, got {s}")
    if z < 0.0:
        raise ValueError(f"z must be non-negative, got {z}")
    if z == 0.0:
        g = math.gamma(s)
        return g  # exp(0) == 1, scaled and unscaled coincide
    if z < s + 1.0:
        # series for the regularized lower gamma P(s, z)
        term = 1.0 / s
        total = term
        a = s
        for _ in range(_MAX_ITER):
            a += 1.0
            term *= z / a
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        log_p = s * math.log(z) - z - math.lgamma(s)
        p_reg = math.exp(log_p) * total
        upper = math.gamma(s) * (1.0 - p_reg)
        if scaled:
            return upper * math.exp(z)
        return upper
    # continued fraction for Gamma(s, z) = e^-z z^s * H(s, z)
    tiny = 1e-300
    b = z + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    if scaled:
        return math.exp(s * math.log(z)) * h
    return math.exp(-z + s * math.log(z)) * h
