"""Checkable existence conditions for trace-quotient extremals.

Every check returns a three-valued ConditionVerdict (satisfied, violated,
or indeterminate): all inputs are numerical estimates and the underlying
inequalities are strict, so a verdict is only claimed when the error bars
clear the comparison.  Satisfied existence verdicts are numerical
evidence, never proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import RegularityMissing, local_extremum_check, trace_critical
from .geometry import fermi_chart
from .halfspace import sharp_constant_quadrature
from .solver import local_constant_schedule

__all__ = [
    "ConditionVerdict",
    "Estimate",
    "GammaNotEmpty",
    "NotCritical",
    "RegularityMissing",
    "LogPower",
    "compactness_rate_check",
    "global_condition",
    "global_lhs_closed_form",
    "disk_global_lhs",
    "local_condition",
    "existence_verdict",
    "localized_constant_estimate",
    "smallest_localized_constant",
]


class GammaNotEmpty(ValueError):
    """The global condition only applies with an empty zero set."""


class NotCritical(ValueError):
    """The base point is not in the critical set."""


@dataclass(frozen=True)
class ConditionVerdict:
    """Uniform carrier: satisfied is True/False/None (indeterminate)."""

    name: str
    satisfied: bool | None
    lhs: float
    rhs: float
    margin: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "satisfied": self.satisfied,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "provenance": _jsonable(self.provenance),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


@dataclass(frozen=True)
class Estimate:
    """A value with a one-sided error bar."""

    value: float
    error: float = 0.0

    @property
    def low(self):
        return self.value - self.error

    @property
    def high(self):
        return self.value + self.error


@dataclass(frozen=True)
class LogPower:
    """Approach-rate profile xi -> (ln ln xi)^n; admissible for the
    compactness criterion (eventually increasing to infinity with
    phi(xi)/ln(xi) nonincreasing)."""

    n: int = 1

    def __call__(self, xi):
        xi = np.asarray(xi, float)
        inner = np.log(np.maximum(np.log(np.maximum(xi, 1.0 + 1e-12)), 1e-12))
        return np.maximum(inner, 0.0) ** self.n


def _dist_to_set(points, K, domain):
    """Distance from points to K: an (m,2) point array or arc-index list.

    Arc-index sets are measured against the meshed (chordal) trace of those
    arcs, so boundary quadrature points lying on them register distance 0,
    consistently with the discrete boundary measure.
    """
    points = np.atleast_2d(points)
    if len(K) and isinstance(K[0], (int, np.integer)):
        from .geometry import distance_to_ring

        arc_set = {int(i) for i in K}
        mask = np.array([int(a) in arc_set for a in domain.edge_arc])
        edges = domain.boundary_edges[mask]
        d = np.full(len(points), np.inf)
        for i, j in edges:
            a = domain.vertices[i]
            b = domain.vertices[j]
            ab = b - a
            t = np.clip((points - a) @ ab / float(ab @ ab), 0.0, 1.0)
            proj = a + t[:, None] * ab
            d = np.minimum(d, np.linalg.norm(points - proj, axis=1))
        return d
    K_pts = np.atleast_2d(np.asarray(K, float))
    diff = points[:, None, :] - K_pts[None, :, :]
    return np.min(np.sqrt(np.sum(diff * diff, axis=2)), axis=1)


def compactness_rate_check(domain, p, r, K, s, C, r0, phi):
    """Compact-regime criterion: subcritical away from K, controlled
    approach rate near K, and a Minkowski-content bound on K itself.

    K is a finite point set (array of points) or a list of boundary arc
    indices.  The verdict is satisfied only if all three parts hold on the
    boundary quadrature sample.
    """
    if not (0.0 < s <= domain.vertices.shape[1] - 1):
        raise ValueError("need 0 < s <= N-1")
    if not (0.0 < r0 < math.exp(-1.0)):
        raise ValueError("need r0 in (0, 1/e)")
    bpts, bw, _, _ = domain.boundary_quadrature()
    crit = trace_critical(p, np.concatenate([bpts, domain.vertices]))
    gap = np.asarray(crit.trace(bpts), float) - np.asarray(r(bpts), float)
    dist = _dist_to_set(bpts, K, domain)

    far = dist >= r0
    margin_far = float(np.min(gap[far])) if np.any(far) else math.inf

    near = (~far) & (dist > 1e-14)
    if np.any(near):
        d = dist[near]
        rate = np.asarray(phi(1.0 / d), float) / np.log(1.0 / d)
        margin_near = float(np.min(gap[near] - rate))
    else:
        margin_near = math.inf

    on_set = dist <= 1e-14
    # on a positive-measure part of K the rate bound degenerates: the only
    # admissible behavior there is strict subcriticality
    if np.any(on_set):
        margin_on = float(np.min(gap[on_set]))
        if margin_on <= 1e-12:
            margin_on = -math.inf
    else:
        margin_on = math.inf

    rhos = r0 * 2.0 ** -np.arange(6)
    contents = np.array([float(np.sum(bw[dist < rho])) for rho in rhos])
    margin_content = float(np.min(C * rhos**s - contents))
    pos = contents > 0
    if np.sum(pos) >= 2:
        coef = np.polyfit(np.log(rhos[pos]), np.log(contents[pos]), 1)
        fit = {"s_hat": float(coef[0]), "C_hat": float(math.exp(coef[1]))}
    else:
        fit = {"s_hat": None, "C_hat": None}

    # strict uniform subcriticality away from K; the approach rate and the
    # content bound are non-strict inequalities (up to fp slack)
    ok = (
        margin_far > 0.0
        and margin_near >= -1e-12
        and margin_on > 0.0
        and margin_content >= -1e-12
    )
    margin = min(margin_far, margin_near, margin_on, margin_content)
    return ConditionVerdict(
        name="compactness_rate",
        satisfied=bool(ok),
        lhs=-margin,
        rhs=0.0,
        margin=margin,
        provenance={
            "margin_subcritical_far": margin_far,
            "margin_rate_near": margin_near,
            "margin_on_set": margin_on,
            "margin_content": margin_content,
            "content_fit": fit,
            "n_quad_points": int(len(bpts)),
        },
    )


def _exponent_bounds(domain, p, r):
    pts, _, _, _ = domain.interior_quadrature()
    bpts, _, _, _ = domain.boundary_quadrature()
    sample = np.concatenate([pts, domain.vertices])
    pv = np.asarray(p(sample), float)
    rv = np.asarray(r(np.concatenate([bpts, domain.vertices[domain.boundary_nodes()]])), float)
    return (float(np.min(pv)), float(np.max(pv))), (float(np.min(rv)), float(np.max(rv)))


def global_lhs_closed_form(volume, boundary_area, p_bounds, r_bounds):
    """max(|O|^(1/p+), |O|^(1/p-)) / min(|dO|^(1/r+), |dO|^(1/r-))."""
    p_lo, p_hi = p_bounds
    r_lo, r_hi = r_bounds
    num = max(volume ** (1.0 / p_hi), volume ** (1.0 / p_lo))
    den = min(boundary_area ** (1.0 / r_hi), boundary_area ** (1.0 / r_lo))
    return num / den


def disk_global_lhs(radius, p_bounds, r_bounds):
    """Closed-form global lhs for the disk family of the given radius."""
    return global_lhs_closed_form(
        math.pi * radius * radius, 2.0 * math.pi * radius, p_bounds, r_bounds
    )


def global_condition(domain, p, r, t_bar):
    """Small-domain sufficient condition via the constant test function.

    Requires an empty zero set; three-valued against the localized-constant
    estimate t_bar (an Estimate with error bar).
    """
    if np.any(domain.gamma_edges):
        raise GammaNotEmpty("the constant test function must be admissible")
    vol = domain.volume()
    per = domain.boundary_length()
    p_bounds, r_bounds = _exponent_bounds(domain, p, r)
    lhs = global_lhs_closed_form(vol, per, p_bounds, r_bounds)
    if lhs < t_bar.low:
        sat = True
    elif lhs > t_bar.high:
        sat = False
    else:
        sat = None
    return ConditionVerdict(
        name="global_small_domain",
        satisfied=sat,
        lhs=lhs,
        rhs=t_bar.value,
        margin=t_bar.value - lhs,
        provenance={
            "volume": vol,
            "boundary_area": per,
            "p_bounds": list(p_bounds),
            "r_bounds": list(r_bounds),
            "t_bar_error": t_bar.error,
        },
    )


def local_condition(domain, p, r, x0, crit_tol=1e-8, radius=None, extremum_tol=1e-10):
    """Pointwise sufficient condition at a critical boundary point.

    Gates, in order: x0 critical, p locally minimal, r locally maximal;
    then the disjunction (inward normal derivative of p positive) or
    (boundary curvature positive); the fired branch is recorded.
    """
    for name, f in (("p", p), ("r", r)):
        if f.declared_regularity != "C2":
            raise RegularityMissing(f"{name} must be declared C2")
    x0 = np.asarray(x0, float)
    bpts, _, _, _ = domain.boundary_quadrature()
    crit = trace_critical(p, np.concatenate([bpts, domain.vertices]))
    gap0 = float(crit.trace.eval_at(x0) - r.eval_at(x0))
    if abs(gap0) > crit_tol:
        raise NotCritical(f"trace-exponent gap at x0 is {gap0}")

    if radius is None:
        radius = 10.0 * domain.mesh_size()
    ipts, _, _, _ = domain.interior_quadrature()
    near_i = ipts[np.linalg.norm(ipts - x0, axis=1) <= radius]
    near_b = bpts[np.linalg.norm(bpts - x0, axis=1) <= radius]
    p_min_ok, p_wit = local_extremum_check(
        p, x0, radius, "min", tol=extremum_tol,
        points=np.concatenate([near_i, near_b]),
    )
    r_max_ok, r_wit = local_extremum_check(
        r, x0, radius, "max", tol=extremum_tol, points=near_b
    )

    chart = fermi_chart(domain, x0)
    dtp = float(p.gradient(x0[None, :])[0] @ chart.nu)
    H = chart.H
    p_bounds, r_bounds = _exponent_bounds(domain, p, r)
    gates_ok = p_min_ok and r_max_ok and p_bounds[1] < r_bounds[0]
    rhs = max(dtp, H)
    branch = None
    if dtp > 0:
        branch = "normal_derivative"
    elif H > 0:
        branch = "curvature"
    sat = bool(gates_ok and rhs > 0)
    return ConditionVerdict(
        name="local_conditions",
        satisfied=sat,
        lhs=0.0,
        rhs=rhs,
        margin=rhs if gates_ok else -math.inf,
        provenance={
            "critical_gap": gap0,
            "p_local_min": bool(p_min_ok),
            "r_local_max": bool(r_max_ok),
            "p_plus_lt_r_minus": bool(p_bounds[1] < r_bounds[0]),
            "normal_derivative_p": dtp,
            "curvature": H,
            "branch": branch,
            "witness_p": None if p_wit is None else list(p_wit),
            "witness_r": None if r_wit is None else list(r_wit),
        },
    )


def existence_verdict(t_estimate, t_bar_estimate):
    """Strict-gap test T < T_bar with both error bars; numerical evidence only."""
    sat: bool | None
    if t_estimate.high < t_bar_estimate.low:
        sat = True
    elif t_estimate.low > t_bar_estimate.high:
        sat = False
    else:
        sat = None
    return ConditionVerdict(
        name="existence_strict_gap",
        satisfied=sat,
        lhs=t_estimate.value,
        rhs=t_bar_estimate.value,
        margin=t_bar_estimate.value - t_estimate.value,
        provenance={
            "t_error": t_estimate.error,
            "t_bar_error": t_bar_estimate.error,
            "status": "numerical evidence",
        },
    )


def localized_constant_estimate(problem, x0, radii=None, extremum_tol=1e-10,
                                max_iter=120, seed=0):
    """Localized-constant surrogate at a critical boundary point.

    When the base point is a local minimum of p and a local maximum of r,
    the localized constant equals the half-space constant at p(x0) and the
    quadrature value is used.  Otherwise falls back to the supremum of
    local solves on a shrinking radius schedule, with the last increment as
    the error bar.
    """
    domain = problem.domain
    p, r = problem.p_field, problem.r_field
    x0 = np.asarray(x0, float)
    bpts = problem.bquad_points
    near_b = bpts[np.linalg.norm(bpts - x0, axis=1) <= 10 * problem.mesh_h]
    ipts = problem.quad_points
    near_i = ipts[np.linalg.norm(ipts - x0, axis=1) <= 10 * problem.mesh_h]
    p_min_ok, _ = local_extremum_check(
        p, x0, 10 * problem.mesh_h, "min", tol=extremum_tol,
        points=np.concatenate([near_i, near_b]) if len(near_i) else near_b,
    )
    r_max_ok, _ = local_extremum_check(
        r, x0, 10 * problem.mesh_h, "max", tol=extremum_tol, points=near_b
    )
    if p_min_ok and r_max_ok:
        p0 = float(p.eval_at(x0))
        val, tail = sharp_constant_quadrature(2, p0)
        return Estimate(val, tail + 1e-6 * val), "halfspace"
    if radii is None:
        base = 0.4 * math.sqrt(domain.volume())
        radii = [base / 2.0, base / 4.0, base / 8.0]
    sched = local_constant_schedule(problem, x0, radii, max_iter=max_iter, seed=seed)
    vals = [t for _, t in sched]
    err = abs(vals[-1] - vals[-2]) if len(vals) >= 2 else 0.1 * vals[-1]
    return Estimate(vals[-1], err), "schedule"


def smallest_localized_constant(problem, max_points=16, **kwargs):
    """Infimum of the localized constants over sampled critical points.

    The infimum is taken over the boundary quadrature points in the
    critical set only (a sampled check, flagged as such in the result).
    """
    pts = problem.critical_points
    if len(pts) == 0:
        raise NotCritical("no critical boundary quadrature points")
    if len(pts) > max_points:
        stride = len(pts) // max_points
        pts = pts[::stride]
    best = None
    for x in pts:
        est, method = localized_constant_estimate(problem, x, **kwargs)
        if best is None or est.value < best[0].value:
            best = (est, method, (float(x[0]), float(x[1])))
    est, method, loc = best
    return est, {"method": method, "argmin": list(loc), "sampled_check": True,
                 "n_sampled": int(len(pts))}
