"""Solvers for the two adjustment subproblems: minimize a loss toward an
anchor over a ConstraintSet, optionally inside a loss-ball around a feasible
center.

Three routes, picked automatically:

* squared loss, no auxiliaries, no ball: cyclic projections with Dykstra
  corrections onto bounds and individual rows (the projection is Euclidean);
* squared loss, no auxiliaries, ball: scalar bisection on the ball multiplier,
  each evaluation an inner Dykstra projection of the reweighted anchor;
* everything else (absolute/Huber losses, auxiliary variables, combined
  two-anchor objectives): a primal-dual splitting iteration whose primal step
  is the closed-form loss prox and whose dual blocks are one multiplier per
  linear row plus an optional loss-ball block.

Warm starts carry primal/dual iterates between consecutive solves (sound for
the primal-dual route; Dykstra corrections are never reused because they are
tied to the projected point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .losses import LossSpec, loss_value, project_ball, prox_pair, prox_unit


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-7
    max_iterations: int = 20000
    warm_start: bool = True


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class ProjectionProblem:
    loss: LossSpec
    anchor: np.ndarray
    constraints: ConstraintSet
    trust: tuple[np.ndarray, float] | None = None  # (center, beta in loss units)

    def __post_init__(self):
        if np.asarray(self.anchor).shape != (self.constraints.n,):
            raise ValueError(
                f"anchor has shape {np.asarray(self.anchor).shape}, expected ({self.constraints.n},)")
        if self.trust is not None:
            center, beta = self.trust
            if np.asarray(center).shape != (self.constraints.n,):
                raise ValueError("trust center dimension does not match constraints")
            if beta < 0:
                raise ValueError(f"trust radius must be nonnegative, got {beta}")


@dataclass
class SolverReport:
    solution: np.ndarray
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    method: str
    state: dict | None = None


class _Geometry:
    """Constraint data prepared for the solvers: bounds plus one matrix of
    unit-normalized rows (equalities flagged), with auxiliary columns rescaled
    to match the magnitude of their companion z coefficients."""

    def __init__(self, cs: ConstraintSet):
        self.n = cs.n
        self.n_aux = cs.n_aux
        self.width = cs.width
        rows = [cs.a_ineq, cs.a_eq]
        a = np.vstack([r for r in rows if r.shape[0]]) if any(r.shape[0] for r in rows) \
            else np.zeros((0, cs.width))
        b = np.concatenate([cs.b_ineq, cs.b_eq])
        self.eq_mask = np.concatenate([
            np.zeros(cs.a_ineq.shape[0], dtype=bool),
            np.ones(cs.a_eq.shape[0], dtype=bool),
        ])
        self.aux_scale = np.ones(cs.n_aux)
        lower = cs.lower.astype(float).copy()
        upper = cs.upper.astype(float).copy()
        if cs.n_aux and a.shape[0]:
            a = a.copy()
            for j in range(cs.n_aux):
                col = a[:, cs.n + j]
                hit = np.flatnonzero(col)
                if hit.size == 0:
                    continue
                znorm = np.linalg.norm(a[hit, :cs.n], axis=1)
                good = znorm > 1e-14
                if good.any():
                    self.aux_scale[j] = float(np.exp(np.mean(
                        np.log(znorm[good] / np.abs(col[hit][good])))))
            a[:, cs.n:] *= self.aux_scale[None, :]
            with np.errstate(invalid="ignore"):
                lower[cs.n:] = lower[cs.n:] / self.aux_scale
                upper[cs.n:] = upper[cs.n:] / self.aux_scale
            norms = np.linalg.norm(a, axis=1)
            a = a / norms[:, None]
            b = b / norms
        self.a = a
        self.b = b
        self.lower = lower
        self.upper = upper
        self.m = a.shape[0]
        self.op_norm = self._power_norm()

    def _power_norm(self) -> float:
        if self.m == 0:
            return 0.0
        v = np.full(self.width, 1.0 / np.sqrt(self.width))
        nv = 1.0
        for _ in range(40):
            v = self.a.T @ (self.a @ v)
            nv = float(np.linalg.norm(v))
            if nv == 0:
                return 0.0
            v /= nv
        return float(np.sqrt(nv))

    def violation(self, x: np.ndarray) -> float:
        worst = max(float(np.max(self.lower - x, initial=0.0)),
                    float(np.max(x - self.upper, initial=0.0)))
        if self.m:
            resid = self.a @ x - self.b
            worst = max(worst, float(np.max(resid[~self.eq_mask], initial=0.0)))
            if self.eq_mask.any():
                worst = max(worst, float(np.max(np.abs(resid[self.eq_mask]), initial=0.0)))
        return worst


def _dykstra(geom: _Geometry, v: np.ndarray, tol: float, max_sweeps: int):
    """Euclidean projection onto bounds ∩ rows via cyclic Dykstra corrections."""
    x = v.copy()
    p_bounds = np.zeros_like(v)
    p_rows = np.zeros((geom.m, v.size))
    sweeps = 0
    change = np.inf
    for sweep in range(max_sweeps):
        x_prev = x.copy()
        w = x + p_bounds
        x = np.clip(w, geom.lower, geom.upper)
        p_bounds = w - x
        for i in range(geom.m):
            w = x + p_rows[i]
            resid = geom.a[i] @ w - geom.b[i]
            if geom.eq_mask[i] or resid > 0.0:
                x = w - resid * geom.a[i]
            else:
                x = w
            p_rows[i] = w - x
        sweeps = sweep + 1
        change = float(np.max(np.abs(x - x_prev)))
        if geom.violation(x) <= tol and change <= tol:
            break
    return x, sweeps, geom.violation(x), change


def _pdhg(geom: _Geometry, prox_z, tol: float, max_iter: int, state=None,
          ball=None, anchor_start=None):
    """Primal-dual iteration: primal prox on z (identity on aux), per-row dual
    ascent, optional loss-ball dual block."""
    n, width, m = geom.n, geom.width, geom.m
    norm2 = geom.op_norm ** 2 + (1.0 if ball is not None else 0.0)
    nk = np.sqrt(max(norm2, 1e-12))
    tau = 1.0 / nk
    sig = 1.0 / nk
    x = None
    if state is not None and state.get("kind") == "pdhg" and state.get("x") is not None \
            and state["x"].size == width and state["y"].size == m \
            and (ball is None) == (state.get("yb") is None):
        x = state["x"].copy()
        y = state["y"].copy()
        yb = state["yb"].copy() if state.get("yb") is not None else None
        tau = state.get("tau", tau)
        sig = state.get("sig", sig)
    if x is None:
        x = np.zeros(width)
        if anchor_start is not None:
            x[:n] = np.clip(anchor_start, geom.lower[:n], geom.upper[:n])
        y = np.zeros(m)
        yb = np.zeros(n) if ball is not None else None
    it = 0
    pri = dua = np.inf
    for it in range(1, max_iter + 1):
        x_old = x
        grad = geom.a.T @ y if m else np.zeros(width)
        if ball is not None:
            grad[:n] += yb
        v = x - tau * grad
        xn = v.copy()
        xn[:n] = prox_z(v[:n], tau)
        np.clip(xn, geom.lower, geom.upper, out=xn)
        x_relaxed = 2.0 * xn - x
        y_old = y
        if m:
            y = y + sig * (geom.a @ x_relaxed - geom.b)
            free = geom.eq_mask
            if not free.all():
                y[~free] = np.maximum(y[~free], 0.0)
        if ball is not None:
            yb_old = yb
            t2 = yb + sig * x_relaxed[:n]
            center, beta, spec = ball
            yb = t2 - sig * project_ball(spec, t2 / sig, center, beta)
        x = xn
        if it % 10 == 0 or it == max_iter:
            p = (x_old - x) / tau - (geom.a.T @ (y_old - y) if m else 0.0)
            if ball is not None:
                p = p.copy()
                p[:n] -= yb_old - yb
            d_parts = []
            if m:
                d_parts.append((y_old - y) / sig - geom.a @ (x_old - x))
            if ball is not None:
                d_parts.append((yb_old - yb) / sig - (x_old - x)[:n])
            dvec = np.concatenate(d_parts) if d_parts else np.zeros(1)
            pri = float(np.linalg.norm(p) / np.sqrt(width))
            dua = float(np.linalg.norm(dvec) / np.sqrt(max(dvec.size, 1)))
            if pri <= tol and dua <= tol:
                break
            if it % 50 == 0 and pri > 0 and dua > 0:
                ratio = pri / dua
                if ratio > 10.0:
                    tau *= 2.0
                    sig /= 2.0
                elif ratio < 0.1:
                    tau /= 2.0
                    sig *= 2.0
    state_out = {"kind": "pdhg", "x": x.copy(), "y": y.copy(),
                 "yb": None if yb is None else yb.copy(), "tau": tau, "sig": sig}
    return x, pri, dua, it, state_out


def _finish(geom: _Geometry, x: np.ndarray) -> np.ndarray:
    """Strip auxiliaries (undoing their scaling is unnecessary: they are not returned)."""
    return x[:geom.n].copy()


def project(problem: ProjectionProblem, opts: SolverOptions = DEFAULT_OPTIONS,
            warm: dict | None = None) -> SolverReport:
    """Minimize loss(z, anchor) over the constraint set (within the trust ball
    if one is present)."""
    cs = problem.constraints
    loss = problem.loss
    anchor = np.asarray(problem.anchor, dtype=float)
    geom = _Geometry(cs)
    trust = problem.trust
    if trust is not None:
        center, beta = np.asarray(trust[0], dtype=float), float(trust[1])
        if beta == 0.0:
            # the ball degenerates to its center, which the caller guarantees feasible
            return SolverReport(center.copy(), 0.0, 0.0, 0, True, "degenerate-ball")
        if not np.isfinite(beta):
            trust = None
    if warm is not None and not opts.warm_start:
        warm = None

    if trust is None:
        extended = cs.extend(anchor)
        if cs.n_aux:
            extended = np.concatenate([anchor, extended[cs.n:] / geom.aux_scale])
        if geom.violation(extended) <= 1e-15:
            return SolverReport(anchor.copy(), 0.0, 0.0, 0, True, "already-feasible")
        if loss.kind == "mse" and cs.n_aux == 0:
            x, sweeps, viol, change = _dykstra(geom, anchor, opts.tolerance, opts.max_iterations)
            converged = viol <= opts.tolerance and change <= opts.tolerance
            return SolverReport(_finish(geom, x), viol, change, sweeps, converged, "dykstra")
        x, pri, dua, it, state = _pdhg(
            geom, lambda v, t: prox_unit(loss, t, v, anchor),
            opts.tolerance, opts.max_iterations, state=warm, anchor_start=anchor)
        return SolverReport(_finish(geom, x), pri, dua, it,
                            pri <= opts.tolerance and dua <= opts.tolerance, "pdhg", state)

    if loss.kind == "mse" and cs.n_aux == 0:
        return _ball_bisection_mse(geom, anchor, center, beta, opts, warm)
    x, pri, dua, it, state = _pdhg(
        geom, lambda v, t: prox_unit(loss, t, v, anchor),
        opts.tolerance, opts.max_iterations, state=warm,
        ball=(center, beta, loss), anchor_start=center)
    return SolverReport(_finish(geom, x), pri, dua, it,
                        pri <= opts.tolerance and dua <= opts.tolerance, "pdhg-ball", state)


def project_ball_intersection(loss: LossSpec, anchor, center, beta: float,
                              constraints: ConstraintSet,
                              opts: SolverOptions = DEFAULT_OPTIONS,
                              warm: dict | None = None) -> SolverReport:
    """Minimize loss(z, anchor) over {z in C : loss(z, center) <= beta}."""
    problem = ProjectionProblem(loss, np.asarray(anchor, dtype=float), constraints,
                                trust=(np.asarray(center, dtype=float), beta))
    return project(problem, opts, warm)


def _ball_bisection_mse(geom: _Geometry, anchor, center, beta, opts, warm):
    """Squared loss + Euclidean ball: bisection on the ball multiplier nu; the
    inner problem is the plain projection of (anchor + nu*center)/(1 + nu)."""
    mse = LossSpec("mse")
    tol = opts.tolerance
    total = 0

    def inner(nu):
        nonlocal total
        blend = (anchor + nu * center) / (1.0 + nu)
        x, sweeps, viol, change = _dykstra(geom, blend, tol, opts.max_iterations)
        total += sweeps
        return x, viol, change

    x0, viol, change = inner(0.0)
    if loss_value(mse, x0, center) <= beta + tol:
        converged = viol <= tol and change <= tol
        return SolverReport(_finish(geom, x0), viol, change, total, converged, "dykstra-ball")
    nu_hi = 1.0 if warm is None or warm.get("kind") != "ball-nu" else max(warm["nu"], 1e-6)
    nu_lo = 0.0
    while True:
        x, viol, change = inner(nu_hi)
        if loss_value(mse, x, center) <= beta:
            break
        nu_lo = nu_hi
        nu_hi *= 4.0
        if nu_hi > 1e14:
            break
    for _ in range(200):
        if nu_hi - nu_lo <= 1e-12 * (1.0 + nu_hi):
            break
        mid = 0.5 * (nu_lo + nu_hi)
        x, _, _ = inner(mid)
        if loss_value(mse, x, center) > beta:
            nu_lo = mid
        else:
            nu_hi = mid
    x, viol, change = inner(nu_hi)
    ball_gap = max(loss_value(mse, x, center) - beta, 0.0)
    converged = viol <= tol and change <= tol and ball_gap <= tol
    return SolverReport(_finish(geom, x), max(viol, ball_gap), change, total,
                        converged, "dykstra-ball", {"kind": "ball-nu", "nu": nu_hi})


def project_blend(loss: LossSpec, target, prediction, weight: float,
                  constraints: ConstraintSet, opts: SolverOptions = DEFAULT_OPTIONS,
                  warm: dict | None = None) -> SolverReport:
    """Minimize loss(z, target) + weight * loss(z, prediction) over the set.

    The combined objective is handled by a dedicated two-anchor prox, not by
    reduction to a single projection, so this route stays independent of
    `project` even when the two are mathematically equivalent.
    """
    target = np.asarray(target, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if target.shape != (constraints.n,) or prediction.shape != (constraints.n,):
        raise ValueError("target/prediction dimension does not match constraints")
    if weight < 0:
        raise ValueError(f"weight must be nonnegative, got {weight}")
    if warm is not None and not opts.warm_start:
        warm = None
    geom = _Geometry(constraints)
    x, pri, dua, it, state = _pdhg(
        geom, lambda v, t: prox_pair(loss, t, v, target, prediction, weight),
        opts.tolerance, opts.max_iterations, state=warm, anchor_start=target)
    return SolverReport(_finish(geom, x), pri, dua, it,
                        pri <= opts.tolerance and dua <= opts.tolerance, "pdhg-blend", state)


def lipschitz_probe(loss: LossSpec, constraints: ConstraintSet, samples: int,
                    seed: int, opts: SolverOptions = DEFAULT_OPTIONS,
                    span: tuple[float, float] = (-0.5, 1.5)) -> float:
    """Sampled lower bound on the Lipschitz constant of the projection onto the
    set, in the loss-matched norm (L2 for mse, L1 for mae/huber)."""
    if samples < 1:
        raise ValueError("need at least one sample pair")
    rng = np.random.default_rng(seed)
    n = constraints.n
    worst = 0.0
    for _ in range(samples):
        x1 = rng.uniform(span[0], span[1], n)
        x2 = rng.uniform(span[0], span[1], n)
        gap = _norm(loss, x1 - x2)
        if gap < 1e-12:
            continue  # degenerate pair: the ratio is undefined
        p1 = project(ProjectionProblem(loss, x1, constraints), opts).solution
        p2 = project(ProjectionProblem(loss, x2, constraints), opts).solution
        worst = max(worst, _norm(loss, p1 - p2) / gap)
    return worst


def _norm(loss: LossSpec, v: np.ndarray) -> float:
    if loss.kind == "mae":
        return float(np.abs(v).sum())
    return float(np.linalg.norm(v))
