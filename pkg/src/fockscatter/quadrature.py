"""Single-mode quadrature-state overlaps and their WKB asymptotics.

The quadrature operator is q = b(a + a+) with a free positive scale b.  The
canonical transformation (q, p) -> (n, theta) with
q = 2b sqrt(n+1/2) cos(theta), p = 2b sqrt(n+1/2) sin(theta) is generated by
F(q, n); theta is taken in [0, pi], which fixes |p| = p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OVERFLOW_N = 10_000


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    b: float = 1.0 / np.sqrt(2.0)

    def __post_init__(self):
        if self.b <= 0:
            raise QuadratureError("quadrature scale b must be positive")


def turning_point(n: float, cfg: QuadratureConfig) -> float:
    return 2.0 * cfg.b * np.sqrt(n + 0.5)


def overlap_exact(n: int, q, cfg: QuadratureConfig = QuadratureConfig()):
    """<n|q> for a single mode.

    Evaluated through the orthonormal Hermite-function recurrence, which keeps
    every intermediate O(1) in the oscillatory region and therefore needs no
    explicit exponent bookkeeping for n up to OVERFLOW_N.
    """
    if n < 0:
        raise QuadratureError("occupation must be non-negative")
    if n > OVERFLOW_N:
        raise QuadratureError(f"n={n} exceeds supported range {OVERFLOW_N}")
    q = np.asarray(q, dtype=float)
    x = q / (np.sqrt(2.0) * cfg.b)
    # h_k(x): orthonormal harmonic-oscillator functions
    h_prev = np.zeros_like(x)
    h = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    for k in range(n):
        h, h_prev = x * np.sqrt(2.0 / (k + 1)) * h - np.sqrt(k / (k + 1.0)) * h_prev, h
    # normalization: <n|q> = (2 b^2)^(-1/4) h_n(q / (sqrt(2) b))
    out = (2.0 * cfg.b**2) ** -0.25 * h
    return out if out.shape else float(out)


def generating_function(q, n: float, cfg: QuadratureConfig = QuadratureConfig()):
    """F(q, n) and its partial derivatives (F, dF/dq, dF/dn).

    Defined in the oscillatory region |q| <= 2b sqrt(n+1/2);
    dF/dq = |p|/(2 b^2) >= 0 and dF/dn = -theta with theta in [0, pi].
    """
    q = np.asarray(q, dtype=float)
    b = cfg.b
    qt = turning_point(n, cfg)
    if np.any(np.abs(q) > qt * (1 + 1e-12)):
        raise QuadratureError("q outside the oscillatory region")
    arg = np.clip(q / qt, -1.0, 1.0)
    root = np.sqrt(np.maximum(4 * b**2 * (n + 0.5) - q * q, 0.0))
    theta = np.arccos(arg)
    F = q * root / (4 * b**2) - (n + 0.5) * theta
    dF_dq = root / (2 * b**2)
    dF_dn = -theta
    if F.shape:
        return F, dF_dq, dF_dn
    return float(F), float(dF_dq), float(dF_dn)


def overlap_wkb(n: int, q, cfg: QuadratureConfig = QuadratureConfig()):
    """WKB form of <n|q>: envelope times cos(F + pi/4), zero past the turning
    points where the exact overlap decays exponentially."""
    q = np.asarray(q, dtype=float)
    qt = turning_point(n, cfg)
    inside = np.abs(q) <= qt
    out = np.zeros_like(q, dtype=float)
    if np.any(inside):
        qi = q[inside] if q.shape else q
        root = np.sqrt(4 * cfg.b**2 * (n + 0.5) - qi * qi)
        F, _, _ = generating_function(qi, n, cfg)
        val = np.sqrt(2.0 / (np.pi * root)) * np.cos(F + np.pi / 4)
        if q.shape:
            out[inside] = val
        else:
            out = val
    return out if q.shape else float(out)
