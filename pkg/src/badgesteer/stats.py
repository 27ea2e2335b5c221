"""One-way ANOVA with an F-distribution tail from the regularized incomplete beta."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc requires 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def betainc_upper(a: float, b: float, x: float) -> float:
    """``1 - I_x(a, b)`` without cancellation in the far tail."""
    return betainc(b, a, 1.0 - x)


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


@dataclass(frozen=True)
class AnovaResult:
    statistic: float
    pvalue: float
    df_between: int
    df_within: int

    def __iter__(self):
        return iter((self.statistic, self.pvalue))


def one_way_anova(samples: Sequence[Sequence[float]]) -> AnovaResult:
    groups = [np.asarray(s, dtype=float) for s in samples]
    if len(groups) < 2:
        raise ValueError("one-way ANOVA needs at least two groups")
    if any(g.size < 2 for g in groups):
        raise ValueError("degenerate group: every group needs at least two observations")
    k = len(groups)
    n = sum(g.size for g in groups)
    # centre on the grand mean so shifts of the data cannot cost precision
    grand = sum(float(g.sum()) for g in groups) / n
    centred = [g - grand for g in groups]
    means = [float(c.mean()) for c in centred]
    ss_between = sum(c.size * m * m for c, m in zip(centred, means))
    ss_within = sum(float(((c - m) ** 2).sum()) for c, m in zip(centred, means))
    df_b, df_w = k - 1, n - k
    # equal raw means are exact; rounding in the centred means must not leak a tiny F
    if ss_between == 0.0 or len({float(g.mean()) for g in groups}) == 1:
        return AnovaResult(0.0, 1.0, df_b, df_w)
    if ss_within == 0.0:
        return AnovaResult(math.inf, 0.0, df_b, df_w)
    f = (ss_between / df_b) / (ss_within / df_w)
    return AnovaResult(f, f_sf(f, df_b, df_w), df_b, df_w)


def format_pvalue(p: float) -> str:
    """Four significant digits; anything below 1e-12 collapses to ``<1e-12``."""
    if p < 1e-12:
        return "<1e-12"
    return f"{p:.4g}"
