"""Decaying profiles ``g(lambda, t)`` and the symbol ``m(lambda)``.

For ``lambda > 0`` the profile minimizes

    G(phi) = int_0^inf a(t) (lambda phi**2 + phi'**2) dt,   phi(0) = 1,

and ``m(lambda) = min G = -lim_{t->0} a(t) g'(t)``.  The minimizer is
computed with piecewise-linear elements on a graded mesh.  The mass
term is lumped (row sums of the consistent weighted mass), which makes
the linear system an M-matrix: the discrete profile is then positive,
nonincreasing and its flux ``-a g'`` is bounded by the boundary flux,
exactly as in the continuous problem.

Past the truncation point ``T`` the profile is closed with the WKB tail
``g ~ a**(-1/2) exp(-sqrt(lambda) t)``; its energy enters the functional
as the boundary term ``kappa a(T) g(T)**2``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .errors import ExtrapolationError, ProfileConvergenceError, QuadratureError
from .quadrature import cell_moments

DECAY_LENGTHS = 24.0
T_FLOOR = 10.0
BASE_CELLS = 1000
MAX_CELLS = 2**17


class ExtrapolationWarning(UserWarning):
    """A symbol value was extrapolated past the tabulated range."""


def thread_count():
    env = os.environ.get("WEXT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(func, items):
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def truncation_length(lam):
    return max(T_FLOOR, DECAY_LENGTHS / math.sqrt(lam))


def grading_exponent(w):
    """Mesh grading for ``g ~ 1 - c t**(1 - alpha)`` near 0, capped at 25."""
    alpha = w.exponent_at_zero
    if not alpha > 0.0:
        return 3.0
    return min(25.0, max(3.0, 2.0 / (1.0 - min(alpha, 0.99))))


def profile_mesh(w, lam, cells):
    """Mesh on ``[0, T]`` with about ``cells`` cells in the decay region.

    The decay region ``[0, core]``, ``core = 24/sqrt(lambda)``, is split at
    ``core / (gamma + 1)``: half of the cells are graded
    ``(j/n)**gamma`` towards 0, the other half are uniform, and the two
    spacings match at the junction.  If ``core < T`` geometrically
    growing cells continue to ``T``.
    """
    T = truncation_length(lam)
    core = min(T, DECAY_LENGTHS / math.sqrt(lam))
    gamma = grading_exponent(w)
    half = max(cells // 2, 2)
    split = core / (gamma + 1.0)
    graded = split * (np.arange(half + 1) / half) ** gamma
    uniform = np.linspace(split, core, half + 1)[1:]
    t = np.concatenate([graded, uniform])
    if core < T:
        h = t[-1] - t[-2]
        tail = []
        x = t[-1]
        while x < T:
            h *= 1.15
            x = min(T, x + h)
            tail.append(x)
        t = np.concatenate([t, tail])
    return t


@dataclass(frozen=True)
class _Discrete:
    t: np.ndarray
    g: np.ndarray
    flux_half: np.ndarray      # a g' at cell midpoints (<= 0)
    energy: float
    reaction: float
    m_flux: float
    closure: float


def solve_on_mesh(w, lam, t):
    """Discrete minimizer of the truncated functional on mesh ``t``."""
    t = np.asarray(t, dtype=float)
    n = t.size - 1
    h = np.diff(t)
    m0, m1 = cell_moments(w, t[:-1], t[1:])
    if not (np.all(np.isfinite(m0)) and np.all(np.isfinite(m1))):
        raise QuadratureError(f"weight integral not finite on profile mesh (lambda={lam})")
    k = m0 / h**2
    mass = np.zeros(n + 1)
    mass[:-1] += m0 - m1
    mass[1:] += m1
    aT, daT = w.evaluate(t[-1])
    kappa = math.sqrt(lam) + 0.5 * float(daT) / float(aT)
    closure = float(aT) * max(kappa, 0.0)

    # unknowns g_1..g_n, with g_0 = 1 moved to the right-hand side
    diag = k + lam * mass[1:]
    diag[:-1] += k[1:]
    diag[-1] += closure
    off = -k[1:]
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    rhs = np.zeros(n)
    rhs[0] = k[0]
    g = np.empty(n + 1)
    g[0] = 1.0
    g[1:] = solve_banded((1, 1), ab, rhs, check_finite=False)
    # near t = 0 solve for the deficit 1 - g instead, which is resolved to
    # full relative precision where g is within rounding of 1
    rhs = lam * mass[1:]
    rhs[-1] += closure
    deficit = solve_banded((1, 1), ab, rhs, check_finite=False)
    near = g[1:] > 0.5
    g[1:][near] = 1.0 - deficit[near]

    dg = np.diff(g)
    # k * dg cancels badly on the tiny graded cells; summing the nodal
    # equations from T inwards gives the same fluxes without cancellation
    outflow = closure * g[-1] + lam * np.cumsum((mass * g)[::-1])[::-1]
    flux_half = -outflow[1:]  # cell average of a g'
    energy = float(np.sum(k * dg**2) + lam * np.sum(mass * g**2) + closure * g[-1] ** 2)
    reaction = float(outflow[0])

    # Galerkin identity: the discrete energy is the consistent boundary flux
    m_flux = energy
    return _Discrete(t, g, flux_half, energy, reaction, m_flux, closure)


@dataclass(frozen=True)
class ProfileSolution:
    """Converged profile for one ``lambda``.

    ``flux_values`` holds ``a g'`` at the cell midpoints
    ``t_half`` (nonpositive).
    """

    lam: float
    t_mesh: np.ndarray
    g_values: np.ndarray
    flux_values: np.ndarray
    m_value: float
    energy_value: float
    truncation_T: float
    est_error: float
    cells: int = 0
    closure: float = 0.0
    weight: object = field(default=None, repr=False, compare=False)
    _interp: object = field(default=None, repr=False, compare=False)

    @property
    def t_half(self):
        return 0.5 * (self.t_mesh[:-1] + self.t_mesh[1:])

    def nodal_flux(self):
        """``a g'`` at the mesh nodes (boundary values from the closure)."""
        q = np.empty_like(self.g_values)
        q[0] = -self.m_value
        q[-1] = -self.closure * self.g_values[-1]
        q[1:-1] = 0.5 * (self.flux_values[:-1] + self.flux_values[1:])
        return q

    def _harmonic_coordinate(self, t):
        """``sigma(t) = int_0^t 1/a`` for ``0 <= t <= T``."""
        interp = self._interp
        w = self.weight
        nodes = self.t_mesh
        if interp is None:
            cells, = cell_moments(w.reciprocal, nodes[:-1], nodes[1:], order=0)
            sigma = np.concatenate([[0.0], np.cumsum(cells)])
            interp = (sigma, PchipInterpolator(sigma, self.g_values, extrapolate=False))
            object.__setattr__(self, "_interp", interp)
        sigma = interp[0]
        i = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2)
        out = sigma[i].copy()
        part = t > nodes[i]
        if np.any(part):
            out[part] += cell_moments(w.reciprocal, nodes[i[part]], t[part], order=0)[0]
        return out

    def g_at(self, t):
        """Monotone interpolation of ``g`` at ``t >= 0``.

        ``g`` is interpolated (PCHIP) against ``sigma(t) = int_0^t 1/a``,
        in which it is nearly linear at the boundary even when ``g`` has a
        ``t**(2s)`` layer.  Beyond the truncation point the WKB closure
        ``g(T) sqrt(a(T)/a(t)) exp(-sqrt(lambda) (t - T))`` is used.
        """
        t = np.asarray(t, dtype=float)
        if self.lam == 0.0:
            return np.ones_like(t)
        flat = np.atleast_1d(t).ravel()
        T = self.truncation_T
        out = np.ones(flat.shape)
        inside = (flat > 0.0) & (flat <= T)
        if np.any(inside):
            sig = self._harmonic_coordinate(flat[inside])
            out[inside] = self._interp[1](np.minimum(sig, self._interp[0][-1]))
        beyond = flat > T
        if np.any(beyond):
            tb = flat[beyond]
            w = self.weight
            out[beyond] = (self.g_values[-1] * np.exp(-math.sqrt(self.lam) * (tb - T))
                           * np.sqrt(w(T) / w(tb)))
        return np.clip(out, 0.0, 1.0).reshape(t.shape)

    def to_rows(self):
        return zip(self.t_mesh, self.g_values, self.nodal_flux())


def _zero_profile():
    t = np.linspace(0.0, T_FLOOR, 3)
    return ProfileSolution(
        lam=0.0, t_mesh=t, g_values=np.ones(3), flux_values=np.zeros(2), m_value=0.0,
        energy_value=0.0, truncation_T=T_FLOOR, est_error=0.0,
    )


def solve_profile(w, lam, tol=1e-7, base_cells=BASE_CELLS, max_cells=MAX_CELLS):
    """Converged profile ``g(lambda, .)`` and symbol value ``m(lambda)``.

    Solves on nested graded meshes, doubling the cell count until the
    relative change of the boundary flux falls below ``tol``.  The
    reported ``m_value`` is the Richardson extrapolation of the last two
    flux values (second-order elements); ``est_error`` is their relative
    difference.  Profile, fluxes and ``energy_value`` come from the finest
    mesh.
    """
    lam = float(lam)
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be a nonnegative number, got {lam}")
    if lam == 0.0:
        return _zero_profile()
    cells = base_cells
    coarse = solve_on_mesh(w, lam, profile_mesh(w, lam, cells))
    while True:
        cells *= 2
        fine = solve_on_mesh(w, lam, profile_mesh(w, lam, cells))
        m_rich = fine.m_flux + (fine.m_flux - coarse.m_flux) / 3.0
        est = abs(fine.m_flux - coarse.m_flux) / m_rich
        est = max(est, abs(fine.energy - m_rich) / m_rich)
        if est <= tol:
            break
        if cells >= max_cells:
            raise ProfileConvergenceError(
                f"profile for lambda={lam:g} not converged: est_error={est:.3e} > tol={tol:.1e} "
                f"with {cells} cells"
            )
        coarse = fine
    return ProfileSolution(
        lam=lam,
        t_mesh=fine.t,
        g_values=fine.g,
        flux_values=fine.flux_half,
        m_value=float(m_rich),
        energy_value=fine.energy,
        truncation_T=float(fine.t[-1]),
        est_error=float(est),
        cells=cells,
        closure=fine.closure,
        weight=w,
    )


# ---------------------------------------------------------------------------
# symbol tables


@dataclass(frozen=True)
class SymbolTable:
    """Sampled symbol ``lambda -> m(lambda)`` for one weight.

    Failed entries carry ``nan`` in ``m_values`` and a message in
    ``failures``.  Interpolation is a monotone cubic (PCHIP) of
    ``log m`` against ``log lambda``, which reproduces power laws exactly.
    """

    weight: object
    lambdas: np.ndarray
    m_values: np.ndarray
    est_errors: np.ndarray
    profiles: tuple | None = None
    failures: dict = field(default_factory=dict)
    tol: float = 1e-7
    _interp: object = field(default=None, repr=False, compare=False)

    @property
    def weight_id(self):
        return self.weight.weight_id

    @property
    def ok(self):
        return np.isfinite(self.m_values)

    def profile(self, lam):
        """Stored profile for ``lam`` (exact match) or ``None``."""
        if self.profiles is None:
            return None
        i = np.searchsorted(self.lambdas, lam)
        if i < self.lambdas.size and self.lambdas[i] == lam:
            return self.profiles[i]
        return None

    def _pchip(self):
        if self._interp is None:
            ok = self.ok
            x, y = np.log(self.lambdas[ok]), np.log(self.m_values[ok])
            interp = PchipInterpolator(x, y, extrapolate=False) if x.size >= 2 else None
            object.__setattr__(self, "_interp", (x, y, interp))
        return self._interp

    def evaluate(self, lam, extrapolate=False):
        """Return ``(values, extrapolated_mask)`` at ``lam >= 0``."""
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < 0):
            raise ValueError("lambda must be nonnegative")
        x, y, interp = self._pchip()
        if x.size == 0:
            raise ExtrapolationError("symbol table has no valid entries")
        out = np.zeros(lam.shape)
        flags = np.zeros(lam.shape, dtype=bool)
        pos = lam > 0
        with np.errstate(divide="ignore"):
            xl = np.log(np.where(pos, lam, 1.0))
        if x.size == 1:
            low = pos & (xl <= x[0])
            out[low] = math.exp(y[0])
            high = pos & (xl > x[0])
        else:
            # below the first node: power law of the first segment, -> 0 at 0
            s0 = (y[1] - y[0]) / (x[1] - x[0])
            low = pos & (xl < x[0])
            out[low] = np.exp(y[0] + s0 * (xl[low] - x[0]))
            mid = pos & (xl >= x[0]) & (xl <= x[-1])
            out[mid] = np.exp(interp(xl[mid]))
            high = pos & (xl > x[-1])
        if np.any(high):
            if not extrapolate:
                raise ExtrapolationError(
                    f"lambda={float(lam[high].max()):g} beyond table maximum {math.exp(x[-1]):g}"
                )
            slope = _last_decade_slope(x, y) if x.size > 1 else 0.0
            out[high] = np.exp(y[-1] + slope * (xl[high] - x[-1]))
            flags |= high
        return out, flags

    def __call__(self, lam, extrapolate=False):
        return eval_symbol(self, lam, extrapolate)

    def check_invariants(self, rel_tol=None):
        """Indices violating monotonicity or the discrete Lipschitz bound."""
        tol = self.tol if rel_tol is None else rel_tol
        ok = np.flatnonzero(self.ok)
        lam, m = self.lambdas[ok], self.m_values[ok]
        bad = []
        for j in range(lam.size - 1):
            if not m[j + 1] > m[j]:
                bad.append((int(ok[j + 1]), "not strictly increasing"))
            bound = m[j] / lam[j] * (lam[j + 1] - lam[j]) + tol * m[j + 1]
            if m[j + 1] - m[j] > bound:
                bad.append((int(ok[j + 1]), "Lipschitz bound m(l)/l exceeded"))
        return bad


def _last_decade_slope(x, y):
    sel = x >= x[-1] - math.log(10.0)
    if sel.sum() < 2:
        sel[-2:] = True
    return float(np.polyfit(x[sel], y[sel], 1)[0])


def compute_symbol(w, lambdas, tol=1e-7, keep_profiles=True):
    """Tabulate ``m`` at the sorted positive ``lambdas``.

    Profiles are solved independently (in parallel, up to
    ``WEXT_THREADS`` threads).  A failed solve leaves a ``nan`` gap and an
    entry in ``failures`` instead of aborting the table.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambdas must be a nonempty 1-d sequence")
    if np.any(lambdas <= 0) or np.any(np.diff(lambdas) <= 0):
        raise ValueError("lambdas must be positive and strictly increasing")

    def one(lam):
        try:
            return solve_profile(w, lam, tol)
        except (ProfileConvergenceError, QuadratureError) as exc:
            return exc

    results = _pmap(one, lambdas)
    failures = {}
    m = np.full(lambdas.size, np.nan)
    err = np.full(lambdas.size, np.nan)
    for i, r in enumerate(results):
        if isinstance(r, Exception):
            failures[float(lambdas[i])] = str(r)
        else:
            m[i] = r.m_value
            err[i] = r.est_error
    profiles = None
    if keep_profiles:
        profiles = tuple(None if isinstance(r, Exception) else r for r in results)
    return SymbolTable(w, lambdas, m, err, profiles, failures, tol)


def eval_symbol(tab, lam, extrapolate=False):
    """``m(lam)`` from a table; ``m(0) = 0``.

    Values past the largest tabulated ``lambda`` raise
    :class:`ExtrapolationError` unless ``extrapolate`` is set, in which
    case a power law fitted to the last decade is used and an
    :class:`ExtrapolationWarning` is emitted.
    """
    values, flags = tab.evaluate(lam, extrapolate)
    if np.any(flags):
        warnings.warn(f"{int(flags.sum())} symbol value(s) extrapolated", ExtrapolationWarning, stacklevel=2)
    if np.ndim(values) == 0:
        return float(values)
    return values


def profile_kernel(w, lambdas, t_levels, tol=1e-7, table=None):
    """Matrix ``G[i, j] = g(lambdas[i], t_levels[j])``.

    Profiles already stored in ``table`` are reused; others are solved.
    Rows are clipped to ``[0, 1]`` and the ``t = 0`` column is exactly 1.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    t_levels = np.atleast_1d(np.asarray(t_levels, dtype=float))
    if np.any(t_levels < 0):
        raise ValueError("t levels must be nonnegative")

    def row(lam):
        prof = table.profile(lam) if table is not None else None
        if prof is None:
            prof = solve_profile(w, lam, tol)
        return prof.g_at(t_levels)

    rows = _pmap(row, lambdas)
    G = np.vstack(rows) if rows else np.zeros((0, t_levels.size))
    G = np.clip(G, 0.0, 1.0)
    G[:, t_levels == 0.0] = 1.0
    return G
