"""Certified minimization of mutual information over TV neighborhoods.

The feasible set (conditionals whose composition with the source stays
within total variation delta of a target) is the intersection of per-row
probability simplices with one weighted-l1 ball, and the objectives are
convex, so accelerated projected gradient with alternating projections
converges and a linear-programming Frank-Wolfe gap certifies the result.
Endpoints (delta = 0 and delta past the zero-rate threshold) are returned
from closed forms with zero gap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import rel_entr

from coordlab.prob_core import CondPmf, Pmf, compose, in_delta_neighborhood

LN2 = math.log(2.0)
_TINY = 1e-30          # gradient floor; keeps log ratios finite at the boundary
_DYKSTRA_CAP = 500
_GAP_CHECK_EVERY = 25


@dataclass(frozen=True)
class SolverConfig:
    duality_gap_tol: float = 1e-7
    max_iterations: int = 20000
    projection_tol: float = 1e-10
    delta_grid: tuple = ()
    scalarization_weights: tuple = tuple(i / 32 for i in range(33))

    def __post_init__(self):
        if self.duality_gap_tol <= 0 or self.projection_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        grid = tuple(float(d) for d in self.delta_grid)
        if any(not 0.0 <= d <= 1.0 for d in grid):
            raise ValueError(f"delta grid outside [0, 1]: {grid}")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"delta grid not ascending: {grid}")
        lams = tuple(float(v) for v in self.scalarization_weights)
        if any(not 0.0 <= v <= 1.0 for v in lams):
            raise ValueError(f"scalarization weights outside [0, 1]: {lams}")
        object.__setattr__(self, "delta_grid", grid)
        object.__setattr__(self, "scalarization_weights", lams)


@dataclass(frozen=True)
class RegionPoint:
    """One boundary point: rates, neighborhood radius, argmin, certificate."""

    R1: float
    delta: float
    argmin_conditional: CondPmf
    certificate: float
    provenance: str
    R2: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        for name in ("R1", "R2"):
            v = getattr(self, name)
            if v is None:
                continue
            if v < -1e-9:
                raise ValueError(f"{name} = {v} is negative")
            object.__setattr__(self, name, max(float(v), 0.0))
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta {self.delta} outside [0, 1]")

    def rates(self) -> tuple:
        return (self.R1,) if self.R2 is None else (self.R1, self.R2)


def _sanitize_delta(delta: float) -> float:
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if delta > 1.0:
        warnings.warn(f"delta {delta} exceeds 1; clamped to 1 (TV never does)")
        return 1.0
    return float(delta)


def _flat_rows(target: CondPmf) -> np.ndarray:
    return target.rows.reshape(target.rows.shape[0], -1)


class _NeighborhoodProgram:
    """Shared machinery for one (source, target, delta) feasible set.

    Rows of zero source probability never move the composed TV and are
    pinned to the target, so the program works on support rows only.
    """

    def __init__(self, p0: Pmf, target: CondPmf, delta: float):
        self.p0 = p0
        self.target = target
        self.delta = delta
        rows = _flat_rows(target)
        if p0.alphabet_size != rows.shape[0]:
            raise ValueError("source and conditional sizes do not match")
        self.support = np.nonzero(p0.mass > 0.0)[0]
        self.w = p0.mass[self.support]
        self.p = rows[self.support]
        self.k, self.m = self.p.shape
        self.budget = 2.0 * delta  # sum_x w_x ||q_x - p_x||_1 <= 2 delta
        self._lp = None

    # objective pieces -------------------------------------------------

    def mi(self, q: np.ndarray) -> float:
        joint = self.w[:, None] * q
        marg = joint.sum(axis=0)
        return float(rel_entr(joint, np.outer(self.w, marg)).sum() / LN2)

    def mi_grad(self, q: np.ndarray) -> np.ndarray:
        marg = (self.w[:, None] * q).sum(axis=0)
        ratio = np.maximum(q, _TINY) / np.maximum(marg, _TINY)[None, :]
        return self.w[:, None] * (np.log(ratio) / LN2)

    # geometry ---------------------------------------------------------

    def l1_cost(self, q: np.ndarray) -> float:
        return float((self.w[:, None] * np.abs(q - self.p)).sum())

    def project_rows_simplex(self, q: np.ndarray) -> np.ndarray:
        s = np.sort(q, axis=1)[:, ::-1]
        cumsum = np.cumsum(s, axis=1) - 1.0
        j = np.arange(1, self.m + 1)
        cond = s - cumsum / j > 0
        rho = cond.sum(axis=1)
        theta = cumsum[np.arange(self.k), rho - 1] / rho
        return np.maximum(q - theta[:, None], 0.0)

    def project_ball(self, q: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the weighted-l1 ball around the target."""
        d = q - self.p
        wexp = np.broadcast_to(self.w[:, None], d.shape)
        cost = (wexp * np.abs(d)).sum()
        if cost <= self.budget:
            return q.copy()
        absd = np.abs(d).ravel()
        wf = wexp.ravel()
        # lam solves sum_i w_i * max(|d_i| - lam*w_i, 0) = budget
        bp = absd / wf
        order = np.argsort(bp)
        wd_sorted = (wf * absd)[order]
        w2_sorted = (wf * wf)[order]
        # active set = strict suffix above each breakpoint
        sum_wd = np.cumsum(wd_sorted[::-1])[::-1]
        sum_w2 = np.cumsum(w2_sorted[::-1])[::-1]
        lam = None
        for j in range(bp.shape[0]):
            s_wd = sum_wd[j + 1] if j + 1 < bp.shape[0] else 0.0
            s_w2 = sum_w2[j + 1] if j + 1 < bp.shape[0] else 0.0
            # include breakpoint j itself while lam < bp[order[j]]
            cand = (s_wd + wd_sorted[j] - self.budget) / (s_w2 + w2_sorted[j])
            if cand <= bp[order[j]] + 1e-18:
                lam = max(cand, 0.0)
                break
        if lam is None:
            lam = float(bp.max())
        u = np.sign(d) * np.maximum(np.abs(d) - lam * wexp.reshape(d.shape), 0.0)
        return self.p + u

    def project(self, q: np.ndarray, tol: float) -> np.ndarray:
        """Dykstra alternation onto simplex-rows intersect ball."""
        x = q
        p_cor = np.zeros_like(q)
        b_cor = np.zeros_like(q)
        for _ in range(_DYKSTRA_CAP):
            y = self.project_ball(x + p_cor)
            p_cor = x + p_cor - y
            x_new = self.project_rows_simplex(y + b_cor)
            b_cor = y + b_cor - x_new
            if np.abs(x_new - x).max() <= tol:
                x = x_new
                break
            x = x_new
        return x

    def finish(self, q: np.ndarray) -> np.ndarray:
        """Exact feasibility: blend toward the target along the ray, which
        scales the weighted-l1 cost linearly and stays inside the simplex."""
        cost = self.l1_cost(q)
        if cost <= self.budget:
            return q
        theta = (self.budget / cost) * (1.0 - 1e-12)
        return self.p + theta * (q - self.p)

    # Frank-Wolfe gap --------------------------------------------------

    def _lp_parts(self):
        if self._lp is None:
            k, m = self.k, self.m
            km = k * m
            a_eq = np.zeros((k, 2 * km))
            for x in range(k):
                a_eq[x, x * m : (x + 1) * m] = 1.0
            ident = np.eye(km)
            wrow = np.repeat(self.w, m)
            a_ub = np.vstack(
                [
                    np.hstack([ident, -ident]),
                    np.hstack([-ident, -ident]),
                    np.hstack([np.zeros(km), wrow])[None, :],
                ]
            )
            self._lp = (a_eq, a_ub)
        return self._lp

    def linear_min(self, grad: np.ndarray):
        """argmin over the feasible set of a linear functional of q."""
        k, m = self.k, self.m
        km = k * m
        a_eq, a_ub = self._lp_parts()
        pflat = self.p.ravel()
        b_ub = np.concatenate([pflat, -pflat, [self.budget]])
        c = np.concatenate([grad.ravel(), np.zeros(km)])
        res = linprog(
            c,
            A_ub=a_ub,
            b_ub=b_ub,
            A_eq=a_eq,
            b_eq=np.ones(k),
            bounds=[(0, None)] * (2 * km),
            method="highs",
        )
        if not res.success:
            raise RuntimeError(f"gap linear program failed: {res.message}")
        return res.x[:km].reshape(k, m)

    def gap_at(self, q: np.ndarray, grad: np.ndarray = None):
        if grad is None:
            grad = self.mi_grad(q)
        s = self.linear_min(grad)
        gap = float((grad * (q - s)).sum())
        return max(gap, 0.0), s


def _fista(prog, value, gradient, q0: np.ndarray, config: SolverConfig, budget=None):
    """Accelerated projected gradient with restart and periodic gap checks.

    ``value``/``gradient`` act on support-restricted row matrices; returns
    (feasible iterate, value, certified gap).
    """
    tol = config.duality_gap_tol
    ptol = config.projection_tol
    if budget is None:
        budget = config.max_iterations
    q = prog.project(q0, ptol)
    v = q.copy()
    t = 1.0
    lip = 1.0
    f_q = value(q)
    best = (f_q + np.inf, None, np.inf)

    def certify(qc):
        qf = prog.finish(qc)
        gap, _ = prog.gap_at(qf, gradient(qf))
        return qf, value(qf), gap

    it = 0
    stalled = 0
    last_metric = None
    while it < budget:
        it += 1
        g_v = gradient(v)
        f_v = value(v)
        lip = max(lip / 2.0, 1e-6)
        for _ in range(60):
            cand = prog.project(v - g_v / lip, ptol)
            diff = cand - v
            quad = f_v + (g_v * diff).sum() + 0.5 * lip * (diff * diff).sum()
            f_cand = value(cand)
            if f_cand <= quad + 1e-15:
                break
            lip *= 2.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        v = cand + ((t - 1.0) / t_next) * (cand - q)
        if f_cand > f_q:  # function restart
            v = cand.copy()
            t_next = 1.0
        q, f_q, t = cand, f_cand, t_next
        if it % _GAP_CHECK_EVERY == 0 or it == budget:
            qf, f_f, gap = certify(q)
            if f_f + gap < best[0] + best[2]:
                best = (f_f, qf, gap)
            if gap <= tol:
                return qf, f_f, gap
            # When the certified value-plus-gap stops improving the iterate
            # has plateaued short of the tolerance; hand off to the
            # conditional-gradient polish instead of spinning here.
            metric = best[0] + best[2]
            stalled = stalled + 1 if (
                last_metric is not None and last_metric - metric <= 0.5 * tol
            ) else 0
            last_metric = metric
            if stalled >= 6:
                break
    if best[1] is None:
        qf, f_f, gap = certify(q)
        best = (f_f, qf, gap)
    return best[1], best[0], best[2]


def _line_search(gradient, q, d, gamma_max: float) -> float:
    """Exact minimizer of the convex restriction gamma -> f(q + gamma d)."""
    if (gradient(q + gamma_max * d) * d).sum() <= 0.0:
        return gamma_max
    lo, hi = 0.0, gamma_max
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        if (gradient(q + mid * d) * d).sum() > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _fw_polish(prog, value, gradient, q, config: SolverConfig, max_steps: int = 600):
    """Away-step conditional gradient with exact line search.

    Plain toward-vertex steps zig-zag near faces and stall the certified
    gap around O(1/k); pairing them with away steps over the active atom
    set restores a linear rate on the polytope. The incoming iterate joins
    the atom pool as-is (it is feasible, so convex combinations stay in
    the set) and is washed out by away steps if it was off-face.
    """
    tol = config.duality_gap_tol
    atoms = [q.copy()]
    weights = [1.0]
    best = None
    for _ in range(max_steps):
        q = sum(w * a for w, a in zip(weights, atoms))
        g = gradient(q)
        gap, s = prog.gap_at(q, g)
        if best is None or value(q) + gap < best[1] + best[2]:
            best = (q, value(q), gap)
        if gap <= 0.5 * tol:
            break
        away = max(range(len(atoms)), key=lambda i: (g * atoms[i]).sum())
        d_fw = s - q
        d_away = q - atoms[away]
        if -(g * d_fw).sum() >= -(g * d_away).sum() or len(atoms) == 1:
            gamma = _line_search(gradient, q, d_fw, 1.0)
            if gamma <= 0.0:
                break
            weights = [w * (1.0 - gamma) for w in weights]
            for i, a in enumerate(atoms):
                if np.array_equal(a, s):
                    weights[i] += gamma
                    break
            else:
                atoms.append(s)
                weights.append(gamma)
        else:
            w_a = weights[away]
            gamma_max = w_a / (1.0 - w_a) if w_a < 1.0 else 1.0
            gamma = _line_search(gradient, q, d_away, gamma_max)
            if gamma <= 0.0:
                break
            weights = [w * (1.0 + gamma) for w in weights]
            weights[away] -= gamma
        keep = [i for i, w in enumerate(weights) if w > 1e-15]
        atoms = [atoms[i] for i in keep]
        weights = [weights[i] for i in keep]
        total = sum(weights)
        weights = [w / total for w in weights]
    qf = prog.finish(best[0])
    gap, _ = prog.gap_at(qf, gradient(qf))
    return qf, value(qf), gap


def _certified_min(prog, value, gradient, q0: np.ndarray, config: SolverConfig):
    """Alternates accelerated descent and conditional-gradient polish.

    Each mechanism unsticks the other: FISTA makes fast primal progress but
    its certified gap can plateau, while Frank-Wolfe steps shrink the gap
    directly but zig-zag on the primal. Stops at certification or when a
    full round no longer improves value-plus-gap.
    """
    tol = config.duality_gap_tol
    q, f, gap = _fista(prog, value, gradient, q0, config)
    for _ in range(3):
        if gap <= tol:
            break
        metric_before = f + gap
        qp, fp, gapp = _fw_polish(prog, value, gradient, q, config)
        if fp + gapp < f + gap:
            q, f, gap = qp, fp, gapp
        if gap <= tol:
            break
        qr, fr, gapr = _fista(
            prog, value, gradient, q, config, budget=config.max_iterations // 16
        )
        if fr + gapr < f + gap:
            q, f, gap = qr, fr, gapr
        # Rounds that move the certified metric by only a few tolerances
        # are riding the ill-conditioned tail; stop and report honestly.
        if metric_before - (f + gap) <= 2.0 * tol:
            break
    return q, f, gap


def delta_star(p0: Pmf, target: CondPmf) -> float:
    """Smallest delta whose neighborhood admits a source-independent point."""
    return _delta_star_full(p0, target)[0]


def _delta_star_full(p0: Pmf, target: CondPmf):
    """(threshold, optimal output pmf r) via an exact linear program:
    minimize TV(compose(p0, target), p0 x r) over output pmfs r."""
    rows = _flat_rows(target)
    support = np.nonzero(p0.mass > 0.0)[0]
    w = p0.mass[support]
    joint = w[:, None] * rows[support]
    k, m = joint.shape
    km = k * m
    # variables: r (m), u (km); minimize 0.5 sum u
    # u_xy >= |joint_xy - w_x r_y|
    wcol = np.repeat(w, m)
    pick = np.tile(np.eye(m), (k, 1))
    a_ub = np.vstack(
        [
            np.hstack([-wcol[:, None] * pick, -np.eye(km)]),
            np.hstack([wcol[:, None] * pick, -np.eye(km)]),
        ]
    )
    b_ub = np.concatenate([-joint.ravel(), joint.ravel()])
    a_eq = np.hstack([np.ones((1, m)), np.zeros((1, km))])
    c = np.concatenate([np.zeros(m), 0.5 * np.ones(km)])
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * (m + km),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"zero-rate threshold LP failed: {res.message}")
    r = np.maximum(res.x[:m], 0.0)
    r = r / r.sum()
    return min(max(float(res.fun), 0.0), 1.0), r


def _restore_rows(prog, q: np.ndarray, target: CondPmf) -> CondPmf:
    full = _flat_rows(target).copy()
    full[prog.support] = q
    return CondPmf(full.reshape(target.rows.shape))


def solve_two_node(
    p0: Pmf, target: CondPmf, delta: float, config: SolverConfig = SolverConfig()
) -> RegionPoint:
    """Minimal message rate at neighborhood radius delta: min I(X; Yhat)."""
    delta = _sanitize_delta(delta)
    if target.rows.ndim != 2:
        raise ValueError("two-node target must have a single output axis")
    prog = _NeighborhoodProgram(p0, target, delta)

    if delta == 0.0:
        q = prog.p.copy()
        point_value, gap = prog.mi(q), 0.0
    else:
        ds, r_star = _delta_star_full(p0, target)
        if delta >= ds - 1e-12:
            q = np.tile(r_star, (prog.k, 1))
            point_value, gap = prog.mi(q), 0.0
        else:
            blend = min(1.0, delta / ds) if ds > 0 else 1.0
            starts = [
                prog.p + blend * (np.tile(r_star, (prog.k, 1)) - prog.p),
                prog.p.copy(),
            ]
            q, point_value, gap = None, np.inf, np.inf
            for q0 in starts:
                qs, fs, gs = _certified_min(prog, prog.mi, prog.mi_grad, q0, config)
                if fs + gs < point_value + gap or q is None:
                    q, point_value, gap = qs, fs, gs
                # The second start is a safety net against a badly stuck
                # first solve, not a tie-breaker for near-certified ones.
                if gap <= 50.0 * config.duality_gap_tol:
                    break
    cond = _restore_rows(prog, q, target)
    if not in_delta_neighborhood(compose(p0, cond), compose(p0, target), delta):
        raise RuntimeError("solver returned an infeasible conditional")
    return RegionPoint(
        R1=point_value,
        delta=delta,
        argmin_conditional=cond,
        certificate=gap,
        provenance="solver",
    )


def _cascade_objectives(prog, y_size: int, z_size: int):
    """Value/gradient factories for I(X; YZ) and I(X; Z) on flattened rows."""

    def mi_z(q):
        qz = q.reshape(prog.k, y_size, z_size).sum(axis=1)
        joint = prog.w[:, None] * qz
        marg = joint.sum(axis=0)
        return float(rel_entr(joint, np.outer(prog.w, marg)).sum() / LN2)

    def mi_z_grad(q):
        qz = q.reshape(prog.k, y_size, z_size).sum(axis=1)
        marg = (prog.w[:, None] * qz).sum(axis=0)
        ratio = np.maximum(qz, _TINY) / np.maximum(marg, _TINY)[None, :]
        gz = prog.w[:, None] * (np.log(ratio) / LN2)
        return np.repeat(gz[:, None, :], y_size, axis=1).reshape(prog.k, -1)

    return mi_z, mi_z_grad


def solve_cascade(
    p0: Pmf, target: CondPmf, delta: float, config: SolverConfig = SolverConfig()
) -> list:
    """Pareto frontier of (R1, R2) at radius delta via scalarization.

    Minimizes lam*I(X;YZ) + (1-lam)*I(X;Z) for each weight; both terms are
    convex, so the sweep traces the convex lower-left boundary.
    """
    delta = _sanitize_delta(delta)
    if target.rows.ndim != 3:
        raise ValueError("cascade target needs two output axes")
    y_size, z_size = target.rows.shape[1], target.rows.shape[2]
    prog = _NeighborhoodProgram(p0, target, delta)
    mi_z, mi_z_grad = _cascade_objectives(prog, y_size, z_size)

    def point_for(q, gap, lam):
        cond = _restore_rows(prog, q, target)
        if not in_delta_neighborhood(compose(p0, cond), compose(p0, target), delta):
            raise RuntimeError("solver returned an infeasible conditional")
        return RegionPoint(
            R1=prog.mi(q),
            R2=mi_z(q),
            delta=delta,
            argmin_conditional=cond,
            certificate=gap,
            provenance="solver",
            lam=lam,
        )

    if delta == 0.0:
        return [point_for(prog.p.copy(), 0.0, None)]
    ds, r_star = _delta_star_full(p0, target)
    if delta >= ds - 1e-12:
        return [point_for(np.tile(r_star, (prog.k, 1)), 0.0, None)]

    blend = min(1.0, delta / ds) if ds > 0 else 1.0
    start_a = prog.p + blend * (np.tile(r_star, (prog.k, 1)) - prog.p)
    points = []
    for lam in config.scalarization_weights:
        # At the endpoint weights one rate drops out of the objective and
        # the minimizer is non-unique in that coordinate; a hair of the
        # other term breaks the tie toward the lower-left frontier corner.
        w = min(max(lam, 1e-6), 1.0 - 1e-6)

        def value(q, w=w):
            return w * prog.mi(q) + (1.0 - w) * mi_z(q)

        def gradient(q, w=w):
            return w * prog.mi_grad(q) + (1.0 - w) * mi_z_grad(q)

        best = None
        for q0 in (start_a, prog.p.copy()):
            qs, fs, gs = _certified_min(prog, value, gradient, q0, config)
            if best is None or fs + gs < best[1] + best[2]:
                best = (qs, fs, gs)
            if best[2] <= 50.0 * config.duality_gap_tol:
                break
        points.append(point_for(best[0], best[2], lam))
    return pareto_filter(points)


def pareto_filter(points: Sequence[RegionPoint], tol: float = 1e-12) -> list:
    """Drop points whose rate pairs are dominated by another point."""
    kept = []
    for p in points:
        dominated = False
        for q in points:
            if q is p:
                continue
            if (
                q.R1 <= p.R1 + tol
                and q.R2 <= p.R2 + tol
                and (q.R1 < p.R1 - tol or q.R2 < p.R2 - tol)
            ):
                dominated = True
                break
        if not dominated:
            kept.append(p)
    kept.sort(key=lambda pt: (pt.R1, pt.R2 if pt.R2 is not None else 0.0))
    return kept


def region_membership(
    p0: Pmf,
    target: CondPmf,
    candidate: RegionPoint,
    config: SolverConfig = SolverConfig(),
):
    """Does the candidate rate tuple lie in the achievable region at its
    delta? Returns (bool, signed margin in bits); positive margin means
    strictly inside."""
    if target.rows.ndim == 2:
        frontier = [solve_two_node(p0, target, candidate.delta, config)]
    else:
        frontier = solve_cascade(p0, target, candidate.delta, config)
    margins = []
    for pt in frontier:
        parts = [candidate.R1 - pt.R1]
        if pt.R2 is not None:
            if candidate.R2 is None:
                raise ValueError("cascade membership needs an R2 in the candidate")
            parts.append(candidate.R2 - pt.R2)
        margins.append(min(parts))
    margin = max(margins)
    return margin >= -config.duality_gap_tol, float(margin)
