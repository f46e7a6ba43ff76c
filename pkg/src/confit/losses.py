"""Loss functions (squared, absolute, Huber) and their pointwise proximal maps.

Every target-adjustment subproblem in this package reduces to proximal steps of
one of these losses, so the closed forms here are the computational primitive
of the whole engine.  The mean loss is ``(1/n) * sum g(z_k - y_k)`` with

    g(x) = x^2                      (mse)
    g(x) = |x|                      (mae)
    g(x) = x^2            |x| <= M  (huber)
           2M|x| - M^2    |x| >  M

Solver-facing helpers (`prox_unit`, `prox_pair`, `project_ball`) work with the
unnormalized sum; the public `prox` keeps the 1/n factor so its fixed points
match the mean loss regardless of dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOSS_KINDS = ("mse", "mae", "huber")


@dataclass(frozen=True)
class LossSpec:
    """Loss selector. `huber_m` is the quadratic/linear crossover threshold."""

    kind: str
    huber_m: float = 0.1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.kind == "huber" and not self.huber_m > 0:
            raise ValueError(f"huber threshold must be positive, got {self.huber_m}")


MSE = LossSpec("mse")
MAE = LossSpec("mae")


def pointwise(spec: LossSpec, x: np.ndarray) -> np.ndarray:
    """Elementwise g(x)."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "mse":
        return x * x
    if spec.kind == "mae":
        return np.abs(x)
    m = spec.huber_m
    ax = np.abs(x)
    return np.where(ax <= m, x * x, 2.0 * m * ax - m * m)


def gradient(spec: LossSpec, x: np.ndarray) -> np.ndarray:
    """Elementwise g'(x) (sign(x) for mae, a subgradient choice at 0)."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "mse":
        return 2.0 * x
    if spec.kind == "mae":
        return np.sign(x)
    m = spec.huber_m
    return 2.0 * np.clip(x, -m, m)


def loss_value(spec: LossSpec, z: np.ndarray, y: np.ndarray) -> float:
    """Mean loss (1/n) sum g(z_k - y_k). Symmetric; zero iff z == y."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {y.shape}")
    if z.size == 0:
        raise ValueError("loss of empty vectors is undefined")
    return float(np.mean(pointwise(spec, z - y)))


def prox_unit(spec: LossSpec, t, v: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """argmin_z t*g(z_k - anchor_k) + 0.5*(z_k - v_k)^2, elementwise.

    `t` may be a scalar or a per-coordinate array.
    """
    v = np.asarray(v, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if spec.kind == "mse":
        return (v + 2.0 * t * anchor) / (1.0 + 2.0 * t)
    if spec.kind == "mae":
        d = v - anchor
        return anchor + np.sign(d) * np.maximum(np.abs(d) - t, 0.0)
    m = spec.huber_m
    w = v - anchor
    thr = m * (1.0 + 2.0 * t)
    quad = w / (1.0 + 2.0 * t)
    lin = w - 2.0 * t * m * np.sign(w)
    return anchor + np.where(np.abs(w) <= thr, quad, lin)


def prox(spec: LossSpec, t: float, v: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Proximal map of the mean loss toward `anchor`:

        argmin_z (1/n) g(z_k - anchor_k) + (1/(2t)) (z_k - v_k)^2

    The 1/n normalization is folded into the effective step so behaviour does
    not drift with dimension.
    """
    if not t > 0:
        raise ValueError(f"prox step must be positive, got {t}")
    v = np.asarray(v, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if v.shape != anchor.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {anchor.shape}")
    return prox_unit(spec, t / v.size, v, anchor)


def prox_pair(spec: LossSpec, t, v: np.ndarray, a1: np.ndarray, a2: np.ndarray,
              w2: float) -> np.ndarray:
    """argmin_z t*[g(z-a1_k) + w2*g(z-a2_k)] + 0.5*(z - v_k)^2, elementwise.

    Two-anchor prox used by the combined-objective master step.
    """
    v = np.asarray(v, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    if spec.kind == "mse":
        return (v + 2.0 * t * (a1 + w2 * a2)) / (1.0 + 2.0 * t * (1.0 + w2))
    if spec.kind == "mae":
        lam1 = t * np.ones_like(v)
        lam2 = t * w2 * np.ones_like(v)
        lo = np.minimum(a1, a2)
        hi = np.maximum(a1, a2)
        lam_lo = np.where(a1 <= a2, lam1, lam2)
        lam_hi = np.where(a1 <= a2, lam2, lam1)
        below = v + lam1 + lam2          # stationary point for z < lo
        above = v - lam1 - lam2          # stationary point for z > hi
        middle = v - lam_lo + lam_hi     # stationary point for lo < z < hi

        def obj(z):
            return lam1 * np.abs(z - a1) + lam2 * np.abs(z - a2) + 0.5 * (z - v) ** 2

        at_kink = np.where(obj(lo) <= obj(hi), lo, hi)
        z = np.where(below < lo, below,
                     np.where(above > hi, above,
                              np.where((middle > lo) & (middle < hi), middle, at_kink)))
        return z
    # huber pair: derivative is strictly increasing, bisect it
    m = spec.huber_m
    pad = np.asarray(t * (1.0 + w2) * 2.0 * m + 1.0)
    lo = np.minimum(np.minimum(a1, a2), v) - pad
    hi = np.maximum(np.maximum(a1, a2), v) + pad

    def dphi(z):
        return t * (gradient(spec, z - a1) + w2 * gradient(spec, z - a2)) + (z - v)

    for _ in range(100):
        mid = 0.5 * (lo + hi)
        pos = dphi(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)


def project_ball(spec: LossSpec, v: np.ndarray, center: np.ndarray, beta: float) -> np.ndarray:
    """Euclidean projection of v onto the sublevel set {z : loss_value(z, center) <= beta}."""
    v = np.asarray(v, dtype=float)
    center = np.asarray(center, dtype=float)
    if v.shape != center.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {center.shape}")
    if beta < 0:
        raise ValueError(f"ball radius must be nonnegative, got {beta}")
    if beta == 0:
        return center.copy()
    n = v.size
    d = v - center
    if spec.kind == "mse":
        q = float(d @ d)
        r2 = n * beta
        if q <= r2:
            return v.copy()
        return center + d * np.sqrt(r2 / q)
    if spec.kind == "mae":
        r = n * beta
        s = float(np.abs(d).sum())
        if s <= r:
            return v.copy()
        # sort-based L1-ball projection
        u = np.sort(np.abs(d))[::-1]
        css = np.cumsum(u)
        k = np.nonzero(u * np.arange(1, n + 1) > (css - r))[0][-1]
        theta = (css[k] - r) / (k + 1.0)
        return center + np.sign(d) * np.maximum(np.abs(d) - theta, 0.0)
    # huber: bisection on the KKT multiplier of the sublevel constraint
    target = n * beta
    if float(pointwise(spec, d).sum()) <= target:
        return v.copy()

    def excess(nu):
        z = prox_unit(spec, nu, v, center)
        return float(pointwise(spec, z - center).sum()) - target

    nu_lo, nu_hi = 0.0, 1.0
    while excess(nu_hi) > 0:
        nu_hi *= 2.0
        if nu_hi > 1e15:
            break
    for _ in range(200):
        nu_mid = 0.5 * (nu_lo + nu_hi)
        if excess(nu_mid) > 0:
            nu_lo = nu_mid
        else:
            nu_hi = nu_mid
    return prox_unit(spec, nu_hi, v, center)


def loss_norm(spec: LossSpec, v: np.ndarray) -> float:
    """Norm matched to the loss geometry: L2 for mse/huber, L1 for mae."""
    v = np.asarray(v, dtype=float)
    if spec.kind == "mae":
        return float(np.abs(v).sum())
    return float(np.linalg.norm(v))
