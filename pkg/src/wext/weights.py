"""One-dimensional weights ``a(t)`` on ``t > 0`` and A2 diagnostics."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import expr as _expr
from .errors import QuadratureError, WeightDomainError, WeightSpecError
from .quadrature import cell_moments, graded_nodes, local_exponent

PROBE_POINTS = np.logspace(-6, 2, 33)


@dataclass(frozen=True)
class Weight:
    """An immutable, evaluable weight.

    ``kind`` is ``"power"`` (``a = t**(1-2s)``), ``"tabulated"`` (C1
    cubic interpolation of samples in log-log coordinates, power-law
    extrapolation fitted to the first/last decade) or ``"expression"``.
    Call the instance to get ``a(t)``; :meth:`derivative` gives ``a'(t)``.
    """

    kind: str
    spec: str
    s: float | None = None
    knots: tuple | None = None
    values: tuple | None = None
    ast: object = None
    _spline: object = field(default=None, repr=False, compare=False)
    _tails: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "tabulated":
            self._build_table()

    def _build_table(self):
        t = np.asarray(self.knots, dtype=float)
        a = np.asarray(self.values, dtype=float)
        x, y = np.log(t), np.log(a)
        lo_slope = _decade_slope(x, y, first=True)
        hi_slope = _decade_slope(x, y, first=False)
        spline = CubicSpline(x, y, bc_type=((1, lo_slope), (1, hi_slope)))
        object.__setattr__(self, "_spline", spline)
        object.__setattr__(self, "_tails", (x[0], y[0], lo_slope, x[-1], y[-1], hi_slope))

    @property
    def weight_id(self):
        return hashlib.sha256(self.spec.encode()).hexdigest()[:16]

    def __call__(self, t):
        return self.evaluate(t)[0]

    def derivative(self, t):
        return self.evaluate(t)[1]

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            alpha = 1.0 - 2.0 * self.s
            with np.errstate(all="ignore"):
                a = t**alpha
                return a, alpha * t ** (alpha - 1.0)
        if self.kind == "expression":
            return _expr.evaluate(self.ast, t)
        x0, y0, k0, x1, y1, k1 = self._tails
        with np.errstate(all="ignore"):
            x = np.log(t)
        xc = np.clip(x, x0, x1)
        y = np.where(x < x0, y0 + k0 * (x - x0), np.where(x > x1, y1 + k1 * (x - x1), self._spline(xc)))
        dy = np.where(x < x0, k0, np.where(x > x1, k1, self._spline(xc, 1)))
        a = np.exp(y)
        return a, a * dy / t

    @property
    def exponent_at_zero(self):
        """Power-law exponent of ``a`` as ``t -> 0`` (exact for power weights)."""
        if self.kind == "power":
            return 1.0 - 2.0 * self.s
        return float(local_exponent(self, 1e-8))

    def reciprocal(self, t):
        with np.errstate(all="ignore"):
            return 1.0 / self(t)


def _decade_slope(x, y, first):
    span = math.log(10.0)
    sel = x <= x[0] + span if first else x >= x[-1] - span
    if sel.sum() < 2:
        sel = np.zeros(x.size, dtype=bool)
        if first:
            sel[:2] = True
        else:
            sel[-2:] = True
    return float(np.polyfit(x[sel], y[sel], 1)[0])


def power_weight(s):
    s = float(s)
    if not 0.0 < s < 1.0:
        raise WeightSpecError(f"s must lie in (0, 1), got {s}")
    return Weight("power", f"power:s={s!r}", s=s)


def expression_weight(text, offset=0):
    ast = _expr.parse_expression(text, offset)
    w = Weight("expression", "expr:" + _expr.unparse(ast), ast=ast)
    _check_positive(w)
    return w


def tabulated_weight(t, a, source="table"):
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    if t.ndim != 1 or t.size < 4 or t.shape != a.shape:
        raise WeightSpecError("table needs at least 4 (t, a) rows")
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise WeightSpecError("table t must be positive and strictly increasing")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise WeightSpecError("table a must be positive and finite")
    digest = hashlib.sha256(np.concatenate([t, a]).tobytes()).hexdigest()[:16]
    w = Weight("tabulated", f"table:{source}#{digest}", knots=tuple(t), values=tuple(a))
    _check_positive(w)
    return w


def _check_positive(w):
    a, da = w.evaluate(PROBE_POINTS)
    bad = ~(np.isfinite(a) & (a > 0) & np.isfinite(da))
    if np.any(bad):
        t_bad = PROBE_POINTS[np.argmax(bad)]
        raise WeightSpecError(f"weight is not positive and finite at probe point t={t_bad:g}")


def read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader, [])]
        if header != ["t", "a"]:
            raise WeightSpecError(f"table {path}: header must be 't,a', got {','.join(header)!r}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def parse_weight(spec):
    """Parse ``power:s=F``, ``table:PATH`` or ``expr:EXPR`` into a :class:`Weight`."""
    spec = spec.strip()
    if spec.startswith("power:"):
        body = spec[len("power:"):]
        if not body.startswith("s="):
            raise WeightSpecError("expected 's=' after 'power:'", len("power:"))
        try:
            s = float(body[2:])
        except ValueError:
            raise WeightSpecError(f"invalid number {body[2:]!r}", len("power:s=")) from None
        if not 0.0 < s < 1.0:
            raise WeightSpecError(f"s must lie in (0, 1), got {s}", len("power:s="))
        return power_weight(s)
    if spec.startswith("table:"):
        path = Path(spec[len("table:"):])
        try:
            t, a = read_table(path)
        except OSError as exc:
            raise WeightSpecError(f"cannot read table: {exc}", len("table:")) from None
        except (ValueError, IndexError) as exc:
            raise WeightSpecError(f"malformed table {path}: {exc}", len("table:")) from None
        return tabulated_weight(t, a, source=path.name)
    if spec.startswith("expr:"):
        return expression_weight(spec[len("expr:"):], offset=len("expr:"))
    raise WeightSpecError("weight spec must start with 'power:', 'table:' or 'expr:'", 0)


def eval_weight(w, t):
    """Return ``(a(t), a'(t))``; ``t`` must be positive."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise WeightDomainError("weight is only defined for t > 0")
    a, da = w.evaluate(t_arr)
    if t_arr.ndim == 0:
        return float(a), float(da)
    return a, da


# ---------------------------------------------------------------------------
# A2 diagnostics


@dataclass(frozen=True)
class A2Report:
    a2_constant_estimate: float
    intervals_tested: int
    growth_constant_C: float
    tail_points: tuple
    tail_mass: tuple
    level_max_ratio: tuple
    doubling_ratio: tuple
    is_plausibly_A2: bool
    failures: tuple = ()
    min_ratio: float = 1.0

    def to_dict(self):
        return {
            "a2_constant_estimate": self.a2_constant_estimate,
            "intervals_tested": self.intervals_tested,
            "growth_constant_C": self.growth_constant_C,
            "tail_points": list(self.tail_points),
            "tail_mass": list(self.tail_mass),
            "level_max_ratio": list(self.level_max_ratio),
            "doubling_ratio": list(self.doubling_ratio),
            "is_plausibly_A2": self.is_plausibly_A2,
            "failures": list(self.failures),
            "min_ratio": self.min_ratio,
        }


def _cumulative(f, points, n_sub, gamma=3.0):
    """``int_0^p f`` at the increasing ``points`` (``points[0] > 0``)."""
    first = graded_nodes(points[0], n_sub, gamma)
    m0, _ = cell_moments(f, first[:-1], first[1:])
    out = [m0.sum()]
    lo = points[:-1]
    hi = points[1:]
    # uniform sub-panels inside each consecutive gap
    frac = np.linspace(0.0, 1.0, n_sub + 1)
    edges = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    m0, _ = cell_moments(f, edges[:, :-1].ravel(), edges[:, 1:].ravel())
    gaps = m0.reshape(lo.size, n_sub).sum(axis=1)
    return np.concatenate([out, out[0] + np.cumsum(gaps)])


def a2_diagnose(w, t_max=1.0, levels=8, doublings=10, n_sub=16):
    """Empirical A2 certificate for ``w``.

    Tests every dyadic subinterval of ``(0, t_max]`` down to ``levels``
    levels, and the growing intervals ``(0, t_max 2**k]`` for
    ``k = 1..doublings``.  Both ``int a`` and ``int 1/a`` are computed
    with a graded composite rule whose first cell uses a local power-law
    fit.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if levels < 3:
        raise ValueError("levels must be at least 3")
    finest = 2 ** (levels - 1)
    down = t_max * np.arange(1, finest + 1) / finest
    up = t_max * 2.0 ** np.arange(1, doublings + 1)
    points = np.concatenate([down, up])

    with np.errstate(all="ignore"):
        cum_a = _cumulative(w, points, n_sub)
        cum_r = _cumulative(w.reciprocal, points, n_sub)
    cum_a = np.concatenate([[0.0], cum_a])
    cum_r = np.concatenate([[0.0], cum_r])
    pts = np.concatenate([[0.0], points])

    failures = []
    ratios_all = []
    level_max = []
    for level in range(levels):
        step = finest // 2**level
        idx = np.arange(0, finest + 1, step)
        ia = np.diff(cum_a[idx])
        ir = np.diff(cum_r[idx])
        width = np.diff(pts[idx])
        with np.errstate(all="ignore"):
            r = ia * ir / width**2
        for k in np.flatnonzero(~np.isfinite(r)):
            failures.append(f"level {level} interval [{pts[idx][k]:g}, {pts[idx][k + 1]:g}]")
        ratios_all.append(r)
        level_max.append(float(np.max(r)))

    up_idx = finest + np.arange(1, doublings + 1)
    with np.errstate(all="ignore"):
        doubling_ratio = cum_a[up_idx] * cum_r[up_idx] / pts[up_idx] ** 2
    for k in np.flatnonzero(~np.isfinite(doubling_ratio)):
        failures.append(f"doubling interval (0, {pts[up_idx][k]:g}]")
    ratios_all.append(doubling_ratio)

    allr = np.concatenate(ratios_all)
    finite = allr[np.isfinite(allr)]
    estimate = float(finite.max()) if finite.size else math.inf
    min_ratio = float(finite.min()) if finite.size else math.nan

    tail_points = np.concatenate([[t_max], up])
    tail_mass = np.concatenate([[cum_a[finest]], cum_a[up_idx]])
    with np.errstate(all="ignore"):
        growth = cum_r[1:] / (1.0 + pts[1:] ** 2)
    growth_C = float(np.max(growth)) if np.all(np.isfinite(growth)) else math.inf

    # scales ordered small -> large
    scales = np.concatenate([np.array(level_max[::-1]), doubling_ratio])
    plausible = not failures and np.all(np.isfinite(scales)) and estimate < 1e6
    if plausible:
        for seq in (scales[::-1], scales):
            last = seq[-3:]
            if np.all(np.diff(last) > 0) and last[-1] > 1.1 * last[0]:
                plausible = False
        if tail_mass[-1] < (1.0 + 1e-3) * tail_mass[-2]:
            plausible = False

    return A2Report(
        a2_constant_estimate=estimate,
        intervals_tested=int(allr.size),
        growth_constant_C=growth_C,
        tail_points=tuple(float(v) for v in tail_points),
        tail_mass=tuple(float(v) for v in tail_mass),
        level_max_ratio=tuple(level_max),
        doubling_ratio=tuple(float(v) for v in doubling_ratio),
        is_plausibly_A2=bool(plausible),
        failures=tuple(failures),
        min_ratio=min_ratio,
    )


def reciprocal_integral(w, t, n_sub=64):
    """``int_0^t d tau / a(tau)`` at the increasing positive points ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = _cumulative(w.reciprocal, t, n_sub)
    if not np.all(np.isfinite(out)):
        raise QuadratureError("reciprocal weight integral is not finite")
    return out
