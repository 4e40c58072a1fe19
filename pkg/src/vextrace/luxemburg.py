"""Modulars and Luxemburg norms on quadrature samples.

A function u over a region is carried as WeightedSamples: quadrature points,
positive weights (cell measures), values, and optionally gradient vectors.
The modular is sum_i w_i |u_i|^{p(x_i)} (plus the gradient term for the
Sobolev kind); the Luxemburg norm is the unique lambda > 0 with
modular(u/lambda) = 1, found by bracketed bisection with a Newton polish.

All reductions go through ``fixed_order_sum`` (compensated, fixed lane
topology) so results are bit-reproducible across runs and thread counts.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeightedSamples",
    "ModularValue",
    "MissingGradient",
    "NonFiniteModular",
    "ExponentMismatch",
    "fixed_order_sum",
    "modular",
    "luxemburg_norm",
    "sum_norm",
    "holder_product_bound",
    "verify_norm_modular_relations",
    "RelationCheck",
]

NORM_TOL = 1e-13  # relative bracket width for the lambda root


class MissingGradient(ValueError):
    """Sobolev modular requested but the samples carry no gradients."""


class NonFiniteModular(FloatingPointError):
    """Modular evaluation overflowed even after rescaling."""


class ExponentMismatch(ValueError):
    """Derived exponent falls outside its admissible range."""


def fixed_order_sum(values):
    """Compensated sum with a fixed 64-lane topology.

    Each lane runs a Kahan accumulation over a deterministic index slice;
    the 64 lane totals are combined exactly with math.fsum.  The topology
    depends only on the input length, never on thread count.
    """
    a = np.ascontiguousarray(values, dtype=float).ravel()
    n = a.size
    if n == 0:
        return 0.0
    if n <= 256:
        return math.fsum(a.tolist())
    rows = 64
    width = (n + rows - 1) // rows
    buf = np.zeros(rows * width)
    buf[:n] = a
    buf = buf.reshape(rows, width)
    s = np.zeros(width)
    c = np.zeros(width)
    for row in buf:
        y = row - c
        t = s + y
        c = (t - s) - y
        s = t
    return math.fsum(s.tolist())


@dataclass(frozen=True)
class WeightedSamples:
    """Quadrature carrier: points(n,N), weights(n,)>0, values(n,), grads(n,N)?"""

    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    gradient_values: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        g = self.gradient_values
        if g is not None:
            g = np.asarray(g, dtype=float)
            if g.shape != (pts.shape[0], pts.shape[1]):
                raise ValueError("gradient_values must have shape (n, N)")
        if not (pts.shape[0] == w.size == v.size):
            raise ValueError("points, weights and values must have equal length")
        if w.size == 0:
            raise ValueError("empty sample")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        for name, arr in (("points", pts), ("weights", w), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if g is not None:
            g.setflags(write=False)
        object.__setattr__(self, "gradient_values", g)

    @property
    def total_weight(self):
        return fixed_order_sum(self.weights)

    def scaled(self, c):
        g = None if self.gradient_values is None else c * self.gradient_values
        return WeightedSamples(self.points, self.weights, c * self.values, g)

    def to_csv(self, path_or_buf):
        """Columnar CSV: x1..xN, weight, value[, g1..gN]."""
        n_dim = self.points.shape[1]
        header = [f"x{i + 1}" for i in range(n_dim)] + ["weight", "value"]
        if self.gradient_values is not None:
            header += [f"g{i + 1}" for i in range(n_dim)]
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            fh = open(path_or_buf, "w", newline="")
            close = True
        else:
            fh = path_or_buf
        try:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.points.shape[0]):
                row = [repr(float(x)) for x in self.points[i]]
                row += [repr(float(self.weights[i])), repr(float(self.values[i]))]
                if self.gradient_values is not None:
                    row += [repr(float(x)) for x in self.gradient_values[i]]
                w.writerow(row)
        finally:
            if close:
                fh.close()

    @classmethod
    def from_csv(cls, path_or_buf):
        if isinstance(path_or_buf, (str, bytes)):
            with open(path_or_buf, newline="") as fh:
                return cls._from_reader(csv.reader(fh))
        return cls._from_reader(csv.reader(path_or_buf))

    @classmethod
    def from_csv_text(cls, text):
        return cls._from_reader(csv.reader(io.StringIO(text)))

    @classmethod
    def _from_reader(cls, reader):
        header = next(reader)
        n_dim = sum(1 for h in header if h.startswith("x"))
        has_grad = any(h.startswith("g") for h in header)
        pts, ws, vs, gs = [], [], [], []
        for row in reader:
            if not row:
                continue
            row = [float(x) for x in row]
            pts.append(row[:n_dim])
            ws.append(row[n_dim])
            vs.append(row[n_dim + 1])
            if has_grad:
                gs.append(row[n_dim + 2 : 2 * n_dim + 2])
        return cls(
            np.array(pts), np.array(ws), np.array(vs),
            np.array(gs) if has_grad else None,
        )


@dataclass(frozen=True)
class ModularValue:
    value: float
    kind: str  # 'lebesgue' or 'sobolev'


def _exponents_at(p, points):
    if isinstance(p, np.ndarray):
        return p
    return np.asarray(p(points), dtype=float)


def _modular_terms(samples, p, kind):
    """abs values, weights, exponents and optional gradient magnitudes."""
    if kind not in ("lebesgue", "sobolev"):
        raise ValueError("kind must be 'lebesgue' or 'sobolev'")
    exps = _exponents_at(p, samples.points)
    av = np.abs(samples.values)
    gmag = None
    if kind == "sobolev":
        if samples.gradient_values is None:
            raise MissingGradient("sobolev modular needs gradient samples")
        gmag = np.linalg.norm(samples.gradient_values, axis=1)
    return av, samples.weights, exps, gmag


def _modular_value(av, w, exps, gmag, lam=1.0):
    terms = w * (av / lam) ** exps
    if gmag is not None:
        terms = np.concatenate([terms, w * (gmag / lam) ** exps])
    return fixed_order_sum(terms)


def modular(samples, p, kind="lebesgue"):
    """Modular sum_i w_i |u_i|^{p_i} (+ gradient part for the sobolev kind)."""
    av, w, exps, gmag = _modular_terms(samples, p, kind)
    val = _modular_value(av, w, exps, gmag)
    if not math.isfinite(val):
        raise NonFiniteModular("modular overflow; rescale the samples")
    return ModularValue(val, kind)


def _norm_from_arrays(av, w, exps, gmag):
    """Luxemburg norm from raw arrays; the shared root-finding core."""
    peak = float(np.max(av)) if av.size else 0.0
    if gmag is not None:
        peak = max(peak, float(np.max(gmag)))
    if peak == 0.0:
        return 0.0
    if not math.isfinite(peak):
        raise NonFiniteModular("samples contain non-finite values")
    # pre-scale by the peak so powers cannot overflow, undo by homogeneity
    av = av / peak
    g = None if gmag is None else gmag / peak
    rho = _modular_value(av, w, exps, g)
    if not math.isfinite(rho):
        raise NonFiniteModular("modular overflow at unit scale")
    if rho == 0.0:
        return 0.0
    p_lo = float(np.min(exps))
    p_hi = float(np.max(exps))
    # bracket from the norm-modular inequalities:
    # rho >= 1: lambda in [rho^(1/p+), rho^(1/p-)], reversed for rho <= 1
    ends = sorted((rho ** (1.0 / p_hi), rho ** (1.0 / p_lo)))
    lo = ends[0] * (1.0 - 1e-12)
    hi = ends[1] * (1.0 + 1e-12)
    f_lo = _modular_value(av, w, exps, g, lo) - 1.0
    f_hi = _modular_value(av, w, exps, g, hi) - 1.0
    # the modular is strictly decreasing in lambda: f_lo >= 0 >= f_hi
    k = 0
    while f_lo < 0.0 and k < 60:
        lo *= 0.5
        f_lo = _modular_value(av, w, exps, g, lo) - 1.0
        k += 1
    k = 0
    while f_hi > 0.0 and k < 60:
        hi *= 2.0
        f_hi = _modular_value(av, w, exps, g, hi) - 1.0
        k += 1
    while (hi - lo) > NORM_TOL * hi:
        mid = 0.5 * (lo + hi)
        if _modular_value(av, w, exps, g, mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    # one Newton polish: d(modular)/d(lambda) = -(1/lambda) sum p_i w_i (.)^{p_i}
    t = w * (av / lam) ** exps
    dt = exps * t
    if g is not None:
        tg = w * (g / lam) ** exps
        t = np.concatenate([t, tg])
        dt = np.concatenate([dt, exps * tg])
    f = fixed_order_sum(t) - 1.0
    df = -fixed_order_sum(dt) / lam
    if df != 0.0:
        step = f / df
        if abs(step) < 0.5 * lam:
            lam -= step
    return lam * peak


def luxemburg_norm(samples, p, kind="lebesgue"):
    """Luxemburg norm: 0 for u = 0, else the lambda with modular(u/lambda)=1."""
    av, w, exps, gmag = _modular_terms(samples, p, kind)
    return _norm_from_arrays(av, w, exps, gmag)


def sum_norm(samples, p):
    """Equivalent Sobolev norm |u|_p + |grad u|_p (the modular norm is canonical)."""
    if samples.gradient_values is None:
        raise MissingGradient("sum norm needs gradient samples")
    av, w, exps, gmag = _modular_terms(samples, p, "sobolev")
    return _norm_from_arrays(av, w, exps, None) + _norm_from_arrays(gmag, w, exps, None)


def holder_product_bound(f, g, p, q):
    """Both sides of the product inequality in L^{s(x)}, 1/s = 1/p + 1/q.

    Returns (lhs, rhs, s) where s is an ExponentField when p and q are
    fields (their pointwise harmonic combination), else the array of s
    values; callers assert lhs <= rhs.  Raises ExponentMismatch when
    s(x) < 1 somewhere on the sample.
    """
    if f.points.shape != g.points.shape or not np.allclose(f.points, g.points):
        raise ValueError("f and g must share sample points")
    if not np.allclose(f.weights, g.weights):
        raise ValueError("f and g must share weights")
    pe = _exponents_at(p, f.points)
    qe = _exponents_at(q, f.points)
    se = 1.0 / (1.0 / pe + 1.0 / qe)
    if np.any(se < 1.0 - 1e-12):
        raise ExponentMismatch("derived exponent s(x) < 1")
    prod = np.abs(f.values * g.values)
    lhs = _norm_from_arrays(prod, f.weights, se, None)
    const = float(np.max(se / pe)) + float(np.max(se / qe))
    nf = _norm_from_arrays(np.abs(f.values), f.weights, pe, None)
    ng = _norm_from_arrays(np.abs(g.values), g.weights, qe, None)
    s_out = se
    if hasattr(p, "expr") and hasattr(q, "expr"):
        from .exponents import BinOp, Const, ExponentField

        one = Const(1.0)
        s_expr = BinOp(
            "/", one, BinOp("+", BinOp("/", one, p.expr), BinOp("/", one, q.expr))
        )
        s_out = ExponentField(s_expr, p.ambient_dimension, p.declared_regularity)
    return lhs, const * nf * ng, s_out


@dataclass(frozen=True)
class RelationCheck:
    name: str
    applicable: bool
    passed: bool
    slack: float


def verify_norm_modular_relations(samples, p, kind="lebesgue", tol=1e-11):
    """Evaluate the norm-modular relations; returns a list of RelationCheck.

    Covered: the unit-ball characterization modular(u/|u|)=1, the three-way
    sign agreement of |u|-1 and modular-1, and the two-sided power bounds
    |u|^{p-} <= modular <= |u|^{p+} (norm > 1) and the reversed pair
    (norm < 1).  Slack is how far inside the inequality the data sits;
    negative slack beyond -tol fails.
    """
    av, w, exps, gmag = _modular_terms(samples, p, kind)
    rho = _modular_value(av, w, exps, gmag)
    lam = _norm_from_arrays(av, w, exps, gmag)
    checks = []

    if lam > 0.0:
        unit = _modular_value(av, w, exps, gmag, lam)
        slack = tol * 10 - abs(unit - 1.0)
        checks.append(RelationCheck("unit_ball_modular", True, slack >= -tol, slack))
    else:
        checks.append(RelationCheck("unit_ball_modular", False, True, 0.0))

    if abs(rho - 1.0) <= tol or abs(lam - 1.0) <= tol:
        agree = abs(rho - 1.0) <= math.sqrt(tol) and abs(lam - 1.0) <= math.sqrt(tol)
        checks.append(RelationCheck("sign_agreement", True, agree, 0.0))
    else:
        agree = (rho > 1.0) == (lam > 1.0)
        checks.append(
            RelationCheck("sign_agreement", True, agree, abs(rho - 1.0))
        )

    p_lo = float(np.min(exps))
    p_hi = float(np.max(exps))
    if lam > 1.0 + tol:
        lo_s = rho - lam**p_lo
        hi_s = lam**p_hi - rho
        checks.append(RelationCheck("norm_gt1_lower", True, lo_s >= -tol, lo_s))
        checks.append(RelationCheck("norm_gt1_upper", True, hi_s >= -tol, hi_s))
        checks.append(RelationCheck("norm_lt1_lower", False, True, 0.0))
        checks.append(RelationCheck("norm_lt1_upper", False, True, 0.0))
    elif 0.0 < lam < 1.0 - tol:
        lo_s = rho - lam**p_hi
        hi_s = lam**p_lo - rho
        checks.append(RelationCheck("norm_gt1_lower", False, True, 0.0))
        checks.append(RelationCheck("norm_gt1_upper", False, True, 0.0))
        checks.append(RelationCheck("norm_lt1_lower", True, lo_s >= -tol, lo_s))
        checks.append(RelationCheck("norm_lt1_upper", True, hi_s >= -tol, hi_s))
    else:
        for name in ("norm_gt1_lower", "norm_gt1_upper", "norm_lt1_lower", "norm_lt1_upper"):
            checks.append(RelationCheck(name, False, True, 0.0))
    return checks
