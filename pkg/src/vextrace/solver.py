"""Discrete minimization of the trace Rayleigh quotient on P1 meshes.

The quotient is the Sobolev Luxemburg norm over the boundary Luxemburg
norm.  Minimization follows the normalized-sequence pattern: iterates are
kept at unit boundary norm, the descent direction comes from the gradient
of the Sobolev norm (implicit differentiation of the modular equation)
projected against the constraint, and a backtracking line search accepts
only quotient decreases, so the recorded quotient history is nonincreasing
by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .exponents import trace_critical
from .geometry import fermi_chart
from .halfspace import sharp_constant_quadrature
from .luxemburg import _norm_from_arrays, fixed_order_sum

__all__ = [
    "DiscreteTraceProblem",
    "SolverReport",
    "ConcentrationVerdict",
    "ZeroTrace",
    "DegenerateExponent",
    "MeshNotNested",
    "rayleigh_quotient",
    "minimize",
    "solve_problem",
    "concentration_diagnostic",
    "monotonicity_check",
    "local_constant_schedule",
    "bubble_init",
]


class ZeroTrace(ValueError):
    """Boundary norm of the iterate underflowed to zero."""


class DegenerateExponent(ValueError):
    """Exponent too close to 1 for stable descent (alpha blows up)."""


class MeshNotNested(ValueError):
    """Local problem is not a restriction of the global mesh."""


class DiscreteTraceProblem:
    """Assembled quadrature data for the trace quotient on one mesh.

    Flags (reported, not silently assumed):
      - ``p_plus_lt_r_minus``: the strict exponent gap needed by the
        critical-regime existence theory;
      - ``subcritical_margin``: min over boundary quadrature of p_* - r
        (nonpositive means the critical set is engaged);
      - ``critical_points``: boundary quadrature points within crit_tol of
        the critical trace exponent.
    """

    def __init__(self, domain, p_field, r_field, crit_tol=1e-8):
        self.domain = domain
        self.p_field = p_field
        self.r_field = r_field

        pts, w, tri_idx, bary = domain.interior_quadrature()
        bpts, bw, edge_idx, params = domain.boundary_quadrature()
        self.quad_points = pts
        self.quad_weights = w
        self.bquad_points = bpts
        self.bquad_weights = bw

        sample = np.concatenate([pts, domain.vertices])
        self.p_exps = np.asarray(p_field(pts), float)
        self.r_exps = np.asarray(r_field(bpts), float)
        p_all = np.asarray(p_field(sample), float)
        self.p_bounds = (float(np.min(p_all)), float(np.max(p_all)))
        r_all = np.asarray(r_field(np.concatenate([bpts, domain.vertices[domain.boundary_nodes()]])), float)
        self.r_bounds = (float(np.min(r_all)), float(np.max(r_all)))

        if self.p_bounds[0] < 1.05:
            raise DegenerateExponent(
                f"inf p = {self.p_bounds[0]} < 1.05: descent ill-conditioned"
            )
        if self.p_bounds[1] >= 2.0:
            # planar critical theory needs p < N = 2
            raise DegenerateExponent(f"sup p = {self.p_bounds[1]} >= 2 in the plane")
        if self.r_bounds[0] < 1.0:
            raise DegenerateExponent(f"inf r = {self.r_bounds[0]} < 1")

        crit = trace_critical(p_field, sample)
        gap = np.asarray(crit.trace(bpts), float) - self.r_exps
        self.subcritical_margin = float(np.min(gap))
        if self.subcritical_margin < -1e-9:
            raise DegenerateExponent(
                f"r exceeds the critical trace exponent by {-self.subcritical_margin}"
            )
        self.critical_mask = gap <= crit_tol
        self.critical_points = bpts[self.critical_mask]
        self.p_plus_lt_r_minus = self.p_bounds[1] < self.r_bounds[0]

        nv = domain.n_vertices
        tris = domain.triangles
        nq = len(w)
        rows = np.repeat(np.arange(nq), 3)
        cols = tris[tri_idx].ravel()
        self.S = sparse.csr_matrix((bary.ravel(), (rows, cols)), shape=(nq, nv))
        bg = domain.basis_gradients()[tri_idx]  # (nq, 3, 2)
        self.Gx = sparse.csr_matrix((bg[:, :, 0].ravel(), (rows, cols)), shape=(nq, nv))
        self.Gy = sparse.csr_matrix((bg[:, :, 1].ravel(), (rows, cols)), shape=(nq, nv))

        edges = domain.boundary_edges[edge_idx]
        nqb = len(bw)
        browz = np.repeat(np.arange(nqb), 2)
        bcols = edges.ravel()
        bvals = np.stack([1.0 - params, params], axis=1).ravel()
        self.Sb = sparse.csr_matrix((bvals, (browz, bcols)), shape=(nqb, nv))

        self.gamma_nodes = domain.gamma_nodes()
        self.free_mask = np.ones(nv, dtype=bool)
        self.free_mask[self.gamma_nodes] = False
        self.mesh_h = domain.mesh_size()

    # -- norms and gradients --------------------------------------------------

    def interior_fields(self, a):
        vals = self.S @ a
        gx = self.Gx @ a
        gy = self.Gy @ a
        return vals, np.hypot(gx, gy), gx, gy

    def sobolev_norm(self, a):
        vals, gmag, _, _ = self.interior_fields(a)
        return _norm_from_arrays(np.abs(vals), self.quad_weights, self.p_exps, gmag)

    def boundary_values(self, a):
        return self.Sb @ a

    def boundary_norm(self, a):
        bv = self.boundary_values(a)
        if not np.any(bv):
            raise ZeroTrace("iterate vanishes on the boundary quadrature")
        lam = _norm_from_arrays(np.abs(bv), self.bquad_weights, self.r_exps, None)
        if lam == 0.0 or not math.isfinite(lam):
            raise ZeroTrace("boundary norm underflow")
        return lam

    def sobolev_norm_gradient(self, a):
        """(norm, d norm / d nodal values) by implicit differentiation."""
        vals, gmag, gx, gy = self.interior_fields(a)
        lam = _norm_from_arrays(np.abs(vals), self.quad_weights, self.p_exps, gmag)
        if lam == 0.0:
            raise ZeroTrace("zero function has no norm gradient")
        w, p = self.quad_weights, self.p_exps
        tv = w * p * (np.abs(vals) / lam) ** (p - 1.0) * np.sign(vals)
        denom_v = w * p * (np.abs(vals) / lam) ** p
        safe = np.where(gmag > 0, gmag, 1.0)
        tg = w * p * (gmag / lam) ** (p - 1.0) / safe
        tg = np.where(gmag > 0, tg, 0.0)
        denom_g = w * p * (gmag / lam) ** p
        D = fixed_order_sum(np.concatenate([denom_v, denom_g]))
        grad = (
            self.S.T @ tv + self.Gx.T @ (tg * gx) + self.Gy.T @ (tg * gy)
        ) / D
        return lam, grad

    def boundary_norm_gradient(self, a):
        bv = self.boundary_values(a)
        lam = self.boundary_norm(a)
        w, r = self.bquad_weights, self.r_exps
        tv = w * r * (np.abs(bv) / lam) ** (r - 1.0) * np.sign(bv)
        D = fixed_order_sum(w * r * (np.abs(bv) / lam) ** r)
        return lam, (self.Sb.T @ tv) / D


def rayleigh_quotient(a, problem):
    """Sobolev norm over boundary norm; raises ZeroTrace on vanishing trace."""
    a = np.asarray(a, float)
    den = problem.boundary_norm(a)
    return problem.sobolev_norm(a) / den


@dataclass(frozen=True)
class ConcentrationVerdict:
    concentrated: bool
    atom_location: tuple | None
    boundary_mass_profile: tuple  # ((radius, fraction), ...)
    interior_gradient_mass: tuple
    atom_candidates: tuple  # ranked ((x, y), mass fraction) pairs
    refinement: dict  # discrete analogue of the atom inequality

    def to_dict(self):
        return {
            "concentrated": bool(self.concentrated),
            "atom_location": list(self.atom_location) if self.atom_location else None,
            "boundary_mass_profile": [[r, f] for r, f in self.boundary_mass_profile],
            "interior_gradient_mass": [[r, f] for r, f in self.interior_gradient_mass],
            "atom_candidates": [[list(x), f] for x, f in self.atom_candidates],
            "refinement": self.refinement,
        }


@dataclass
class SolverReport:
    t_estimate: float
    minimizer: np.ndarray
    iterations: int
    quotient_history: list
    converged: bool
    line_search_failed: bool
    init_label: str
    concentration: ConcentrationVerdict | None = None
    problem_flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "t_estimate": self.t_estimate,
            "iterations": self.iterations,
            "quotient_history": list(self.quotient_history),
            "converged": self.converged,
            "line_search_failed": self.line_search_failed,
            "init": self.init_label,
            "concentration": self.concentration.to_dict() if self.concentration else None,
            "problem_flags": self.problem_flags,
        }


def _problem_flags(problem):
    return {
        "p_bounds": list(problem.p_bounds),
        "r_bounds": list(problem.r_bounds),
        "p_plus_lt_r_minus": bool(problem.p_plus_lt_r_minus),
        "subcritical_margin": problem.subcritical_margin,
        "n_critical_quad_points": int(np.sum(problem.critical_mask)),
        "mesh_h": problem.mesh_h,
        "n_vertices": int(problem.domain.n_vertices),
    }


def bubble_init(problem, x0, lam, delta=None):
    """Nodal interpolation of a truncated extremal profile centered at x0.

    Local frame coordinates are linearized around the base point; the far
    tail is cut off smoothly beyond delta (default 4 lam), which is all an
    initial iterate needs.
    """
    from .halfspace import ExtremalProfile, _smoothstep_cutoff

    chart = fermi_chart(problem.domain, x0)
    p0 = float(problem.p_field.eval_at(chart.x0))
    prof = ExtremalProfile(2, p0, lam=lam)
    rel = problem.domain.vertices - chart.x0
    y = rel @ chart.tau
    t = np.maximum(rel @ chart.nu, 0.0)
    vals = prof.value(y[:, None], t)
    if delta is None:
        delta = 4.0 * lam
    vals = vals * _smoothstep_cutoff(np.hypot(y, t), delta)
    vals[~problem.free_mask] = 0.0
    return vals


def _initial_vector(problem, init, rng):
    if isinstance(init, np.ndarray):
        a = init.astype(float).copy()
        label = "vector"
    elif init == "constant":
        a = np.ones(problem.domain.n_vertices)
        label = "constant"
    elif init == "random":
        a = rng.standard_normal(problem.domain.n_vertices)
        label = "random"
    elif isinstance(init, tuple) and init[0] == "bubble":
        _, x0, lam = init
        a = bubble_init(problem, x0, lam)
        label = f"bubble({x0[0]:.3g},{x0[1]:.3g};{lam:.3g})"
    else:
        raise ValueError(f"unknown init {init!r}")
    a[~problem.free_mask] = 0.0
    return a, label


def minimize(problem, init="constant", max_iter=200, tol=1e-6, seed=0):
    """Projected descent on the trace quotient from one starting iterate.

    Each accepted iterate is renormalized to unit boundary norm; the
    direction is the constraint-projected Sobolev-norm gradient and the
    backtracking line search only ever accepts a strict quotient decrease.
    """
    rng = np.random.default_rng(seed)
    a, label = _initial_vector(problem, init, rng)
    for _ in range(8):
        try:
            den = problem.boundary_norm(a)
            break
        except ZeroTrace:
            if not (isinstance(init, str) and init == "random"):
                raise
            a, label = _initial_vector(problem, "random", rng)
    else:
        raise ZeroTrace("random init has no boundary mass")
    a = a / den

    num, dnum = problem.sobolev_norm_gradient(a)
    q = num
    history = [q]
    step = 1.0
    converged = False
    ls_failed = False
    it = 0
    for it in range(1, max_iter + 1):
        _, dden = problem.boundary_norm_gradient(a)
        grad = dnum - q * dden
        grad[~problem.free_mask] = 0.0
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            converged = True
            break
        d = -grad
        t_step = step
        accepted = False
        for _ in range(50):
            cand = a + t_step * d
            try:
                q_cand = rayleigh_quotient(cand, problem)
            except ZeroTrace:
                t_step *= 0.5
                continue
            if q_cand <= q - 1e-4 * t_step * gnorm2:
                accepted = True
                break
            t_step *= 0.5
        if not accepted:
            ls_failed = True
            break
        a = cand / problem.boundary_norm(cand)
        step = min(t_step * 4.0, 1e3)
        num, dnum = problem.sobolev_norm_gradient(a)
        q_new = num
        history.append(q_new)
        rel_drop = (q - q_new) / max(q_new, 1e-300)
        q = q_new
        if rel_drop < tol:
            converged = True
            break

    t_final = rayleigh_quotient(a, problem)
    return SolverReport(
        t_estimate=t_final,
        minimizer=a,
        iterations=it,
        quotient_history=history,
        converged=converged,
        line_search_failed=ls_failed,
        init_label=label,
        problem_flags=_problem_flags(problem),
    )


def _cluster_critical_points(problem, max_bubbles=3):
    pts = problem.critical_points
    if len(pts) == 0:
        return []
    sep = 10.0 * problem.mesh_h
    chosen = []
    for x in pts:
        if all(np.linalg.norm(x - c) > sep for c in chosen):
            chosen.append(x)
        if len(chosen) >= max_bubbles:
            break
    return chosen


def solve_problem(
    problem,
    n_random=3,
    bubble_scale=None,
    max_iter=200,
    tol=1e-6,
    seed=0,
    radii=None,
):
    """Multi-start driver: constant, random restarts, one bubble per
    detected critical cluster; returns the best report."""
    inits = [("constant", "constant")]
    for k in range(n_random):
        inits.append(("random", f"random{k}"))
    lam = bubble_scale or 4.0 * problem.mesh_h
    for x0 in _cluster_critical_points(problem):
        gamma_pts = problem.domain.vertices[problem.gamma_nodes]
        if len(gamma_pts) and np.min(np.linalg.norm(gamma_pts - x0, axis=1)) < 8 * lam:
            continue
        inits.append((("bubble", (float(x0[0]), float(x0[1])), lam), "bubble"))

    best = None
    for k, (init, _) in enumerate(inits):
        rep = minimize(problem, init=init, max_iter=max_iter, tol=tol, seed=seed + k)
        if best is None or rep.t_estimate < best.t_estimate:
            best = rep
    if radii is not None:
        best.concentration = concentration_diagnostic(
            best.minimizer, problem, radii
        )
    return best


def concentration_diagnostic(a, problem, radii, threshold=0.9):
    """Locate the dominant boundary mass atom and profile its spread.

    The iterate is renormalized to unit boundary norm, so the boundary
    modular masses sum to one; the verdict compares the mass fraction
    within radius 10h of the atom against the threshold and evaluates the
    discrete analogue of the atom inequality with the half-space constant
    as the localized-constant surrogate.
    """
    a = np.asarray(a, float) / problem.boundary_norm(a)
    radii = sorted(float(r) for r in radii)
    bv = problem.boundary_values(a)
    masses = problem.bquad_weights * np.abs(bv) ** problem.r_exps
    total = fixed_order_sum(masses)
    vals, gmag, _, _ = problem.interior_fields(a)
    gmasses = problem.quad_weights * gmag**problem.p_exps

    bpts = problem.bquad_points
    r_atom = 10.0 * problem.mesh_h
    d2 = np.sum((bpts[:, None, :] - bpts[None, :, :]) ** 2, axis=2)
    ball = d2 <= r_atom**2
    ball_mass = ball @ masses
    order = np.argsort(-ball_mass)
    atom_idx = int(order[0])
    atom = bpts[atom_idx]

    candidates = []
    for idx in order:
        x = bpts[idx]
        if all(np.linalg.norm(x - np.asarray(c[0])) > 2 * r_atom for c in candidates):
            candidates.append(((float(x[0]), float(x[1])), float(ball_mass[idx] / total)))
        if len(candidates) >= 3:
            break

    db = np.linalg.norm(bpts - atom, axis=1)
    di = np.linalg.norm(problem.quad_points - atom, axis=1)
    profile = tuple(
        (r, float(fixed_order_sum(masses[db <= r]) / total)) for r in radii
    )
    gtotal = fixed_order_sum(gmasses)
    gprofile = tuple(
        (r, float(fixed_order_sum(gmasses[di <= r]) / gtotal)) for r in radii
    )
    frac_close = float(fixed_order_sum(masses[db <= r_atom]) / total)
    concentrated = frac_close > threshold

    p_atom = float(problem.p_field.eval_at(atom))
    r_atom_exp = float(problem.r_field.eval_at(atom))
    nu = float(fixed_order_sum(masses[db <= r_atom]))
    mu = float(fixed_order_sum(gmasses[di <= r_atom]))
    tbar, _ = sharp_constant_quadrature(2, p_atom)
    slack = mu ** (1.0 / p_atom) - tbar * nu ** (1.0 / r_atom_exp)
    return ConcentrationVerdict(
        concentrated=concentrated,
        atom_location=(float(atom[0]), float(atom[1])),
        boundary_mass_profile=profile,
        interior_gradient_mass=gprofile,
        atom_candidates=tuple(candidates),
        refinement={
            "nu": nu,
            "mu": mu,
            "t_bar_surrogate": tbar,
            "slack": slack,
            "radius": r_atom,
        },
    )


def monotonicity_check(problem, x0, radius, max_iter=200, tol=1e-6, seed=0):
    """Solve on the full domain and on the ball-restricted subdomain.

    The subdomain's artificial boundary is gamma-marked, so its minimizer
    extends by zero to an admissible full-domain iterate whose quotient
    equals T_local exactly; T_full takes the better of that extension and
    a full-domain solve, so T_full <= T_local holds by construction.
    Returns (T_full, T_local).
    """
    sub, node_map = problem.domain.submesh(np.asarray(x0, float), radius)
    gamma_pts = problem.domain.vertices[problem.gamma_nodes]
    if len(gamma_pts):
        d = np.linalg.norm(gamma_pts - np.asarray(x0, float), axis=1)
        if np.min(d) <= radius:
            raise MeshNotNested("cap overlaps the prescribed zero set")
    local = DiscreteTraceProblem(sub, problem.p_field, problem.r_field)
    rep_local = minimize(local, init="constant", max_iter=max_iter, tol=tol, seed=seed)

    extension = np.zeros(problem.domain.n_vertices)
    extension[node_map] = rep_local.minimizer
    extension[~problem.free_mask] = 0.0
    q_ext = rayleigh_quotient(extension, problem)
    rep_const = minimize(problem, init="constant", max_iter=max_iter, tol=tol, seed=seed)
    t_full = min(q_ext, rep_const.t_estimate)
    return t_full, rep_local.t_estimate


def local_constant_schedule(problem, x0, radii, max_iter=200, tol=1e-6, seed=0):
    """Local constants on a shrinking radius schedule (largest first)."""
    out = []
    for r in sorted(radii, reverse=True):
        sub, _ = problem.domain.submesh(np.asarray(x0, float), r)
        local = DiscreteTraceProblem(sub, problem.p_field, problem.r_field)
        rep = minimize(local, init="constant", max_iter=max_iter, tol=tol, seed=seed)
        out.append((float(r), rep.t_estimate))
    return out
