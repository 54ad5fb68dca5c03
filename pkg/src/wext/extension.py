"""Half-space extension of periodic traces and the induced trace operator.

The extension multiplies every Fourier mode of the trace by its profile,

    U(x, t) = sum_xi g(|xi|**2, t) c_xi exp(i xi . x),

and the trace operator multiplies by the symbol, ``L_a u = F^-1(m u^)``.
For power weights ``a = t**(1 - 2 s)`` the same extension is also a
convolution with the s-Poisson kernel, which gives an independent
second path (:func:`poisson_convolve`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import beta as beta_fn
from scipy.special import betainc, erfc

from .errors import ProfileConvergenceError, TruncationError
from .fields import HalfSpaceField, TraceField
from .quadrature import _GL_W, _GL_X, cell_moments, flux_abscissae
from .symbol import ExtrapolationWarning, SymbolTable, compute_symbol, profile_kernel, solve_profile
from .weights import Weight, power_weight

ACTIVE_FLOOR = 1e-14
DIRECT_LIMIT = 256
KERNEL_PER_DECADE = 32
SYMBOL_PER_DECADE = 16


def _weight_and_table(symbol):
    if isinstance(symbol, SymbolTable):
        return symbol.weight, symbol
    if isinstance(symbol, Weight):
        return symbol, None
    raise TypeError("expected a Weight or a SymbolTable")


def _active_modes(c):
    scale = np.abs(c).max()
    if scale == 0.0:
        return np.zeros(c.shape, dtype=bool)
    return np.abs(c) > ACTIVE_FLOOR * scale


def mode_kernel(w, lams, t_levels, tol=1e-7, table=None, direct_limit=DIRECT_LIMIT,
                per_decade=KERNEL_PER_DECADE):
    """``g(lams[i], t_levels[j])`` for many positive ``lams``.

    Up to ``direct_limit`` distinct values are solved individually.  Above
    that, profiles are solved on a log-spaced ``lambda`` grid with
    ``per_decade`` nodes per decade and ``log g`` is interpolated with a
    cubic spline in ``log lambda``.
    """
    lams = np.asarray(lams, dtype=float)
    t_levels = np.asarray(t_levels, dtype=float)
    if lams.size == 0:
        return np.zeros((0, t_levels.size))
    lo, hi = math.log10(lams.min()), math.log10(lams.max())
    n_nodes = max(4, int(math.ceil((hi - lo) * per_decade)) + 1)
    if lams.size <= max(direct_limit, n_nodes):
        return profile_kernel(w, lams, t_levels, tol, table)
    nodes = np.logspace(lo, hi, n_nodes)
    nodes[0], nodes[-1] = lams.min(), lams.max()
    G = profile_kernel(w, nodes, t_levels, tol, table)
    spline = CubicSpline(np.log(nodes), np.log(np.maximum(G, 1e-300)), axis=0)
    out = np.clip(np.exp(spline(np.log(lams))), 0.0, 1.0)
    out[:, t_levels == 0.0] = 1.0
    return out


def mode_symbol(symbol, lams, tol=1e-7, extrapolate=False, direct_limit=DIRECT_LIMIT,
                per_decade=SYMBOL_PER_DECADE):
    """``m(lams)`` and a mask of extrapolated entries.

    With a :class:`SymbolTable` the table is interpolated.  With a bare
    weight the symbol is solved directly for up to ``direct_limit``
    distinct values, otherwise on a log-spaced grid that is then
    interpolated.
    """
    lams = np.asarray(lams, dtype=float)
    w, table = _weight_and_table(symbol)
    if table is not None:
        return table.evaluate(lams, extrapolate)
    out = np.zeros(lams.shape)
    flags = np.zeros(lams.shape, dtype=bool)
    pos = lams > 0
    uniq, inv = np.unique(lams[pos], return_inverse=True)
    if uniq.size == 0:
        return out, flags
    lo, hi = math.log10(uniq[0]), math.log10(uniq[-1])
    n_nodes = max(4, int(math.ceil((hi - lo) * per_decade)) + 1)
    if uniq.size <= max(direct_limit, n_nodes):
        tab = compute_symbol(w, uniq, tol, keep_profiles=False)
        _raise_failures(tab)
        out[pos] = tab.m_values[inv]
        return out, flags
    nodes = np.logspace(lo, hi, n_nodes)
    nodes[0], nodes[-1] = uniq[0], uniq[-1]
    tab = compute_symbol(w, nodes, tol, keep_profiles=False)
    _raise_failures(tab)
    out[pos] = tab.evaluate(uniq)[0][inv]
    return out, flags


def _raise_failures(tab):
    if tab.failures:
        lam, msg = next(iter(tab.failures.items()))
        raise ProfileConvergenceError(f"symbol at lambda={lam:g}: {msg}")


# ---------------------------------------------------------------------------
# Fourier path


def extend(u, symbol, t_levels, tol=1e-7):
    """Extension ``U(x, t_j)`` of a periodic trace by the representation formula.

    Parameters
    ----------
    u : TraceField
        Periodic trace; an affine trend is carried over unchanged (affine
        functions of ``x`` solve the extension problem for any weight).
    symbol : Weight or SymbolTable
        Stored profiles of a table are reused when their ``lambda``
        matches a lattice value exactly.
    t_levels : array_like
        Nonnegative increasing levels; ``t = 0`` reproduces ``u`` exactly.

    Returns
    -------
    HalfSpaceField
        Provenance ``"fourier_formula"``.  The zero mode is kept
        (``g(0, .) = 1``), which fixes the free additive constant to 0.
    """
    w, table = _weight_and_table(symbol)
    t_levels = np.asarray(t_levels, dtype=float)
    if t_levels.ndim != 1 or t_levels.size == 0:
        raise ValueError("t_levels must be a nonempty 1-d sequence")
    c = u.spectrum()
    lam = u.lam()
    sel = _active_modes(c) & (lam > 0)
    uniq, inv = np.unique(lam[sel], return_inverse=True)
    G = mode_kernel(w, uniq, t_levels, tol, table)
    zero = lam == 0
    out = np.empty((t_levels.size,) + u.shape)
    for j, t in enumerate(t_levels):
        if t == 0.0:
            out[j] = u.values
            continue
        coef = np.zeros_like(c)
        coef[zero] = c[zero]
        coef[sel] = c[sel] * G[inv, j]
        out[j] = np.real(np.fft.ifftn(coef * c.size))
    return HalfSpaceField(out, u.periods, t_levels, w.weight_id, "fourier_formula", u.slope)


class TraceOperatorResult(NamedTuple):
    field: TraceField
    m_one: float
    extrapolated_modes: int


def apply_trace_operator(u, symbol, tol=1e-7, extrapolate=False):
    """``f = F^-1(m(|xi|**2) u^)``.

    The output is not rescaled; ``m_one = m(1)`` is returned alongside
    (for ``a = t**(1 - 2 s)``, ``f = m(1) (-Delta)**s u``).  An affine
    trend of ``u`` contributes nothing.
    """
    w, table = _weight_and_table(symbol)
    c = u.spectrum()
    lam = u.lam()
    sel = _active_modes(c) & (lam > 0)
    m = np.zeros(lam.shape)
    flags = np.zeros(lam.shape, dtype=bool)
    if np.any(sel):
        m[sel], flags[sel] = mode_symbol(symbol, lam[sel], tol, extrapolate)
    if np.any(flags):
        warnings.warn(f"{int(flags.sum())} symbol value(s) extrapolated", ExtrapolationWarning,
                      stacklevel=2)
    f = np.real(np.fft.ifftn(m * c * c.size))
    if table is not None:
        m_one = float(table.evaluate(1.0, extrapolate=True)[0])
    else:
        m_one = solve_profile(w, 1.0, tol).m_value
    return TraceOperatorResult(TraceField(f, u.periods), m_one, int(flags.sum()))


def neumann_trace(U, w, levels=2):
    """``-lim_{t->0} a(t) d_t U`` from the first levels of ``U``.

    Cell fluxes ``-(U_{j+1} - U_j) / int_{t_j}^{t_{j+1}} 1/a`` are exact
    for a constant flux and are extrapolated to the boundary linearly in
    the accumulated weight ``int_0^t a`` (least squares over ``levels``
    cells).
    """
    t = U.t_levels
    if t.size < levels + 1 or t[0] != 0.0:
        raise ValueError(f"need t_0 = 0 and at least {levels + 1} levels")
    tau, inv_a = flux_abscissae(w, t[:levels], t[1:levels + 1])
    flux = -(U.values[1:levels + 1] - U.values[:levels]) / inv_a.reshape((-1,) + (1,) * U.dim)
    if levels == 1:
        f = flux[0]
    else:
        A = np.vstack([np.ones(levels), tau]).T
        coef = np.linalg.lstsq(A, flux.reshape(levels, -1), rcond=None)[0]
        f = coef[0].reshape(U.shape)
    return TraceField(f, U.periods)


# ---------------------------------------------------------------------------
# Poisson convolution path

WINDOW_PERIODS = 32
SMALL_T_CELLS = 4.0


def _window(r, R):
    """Smooth cutoff, 1 to within 1e-16 below ``R/2`` and 0 above ``R``."""
    return 0.5 * erfc((np.asarray(r, dtype=float) - 0.75 * R) / (R / 24.0))


def poisson_constant(n, s):
    """``c_{n,s}`` making ``c t**(2s) (t**2 + |x|**2)**(-(n+2s)/2)`` a probability density."""
    if n == 1:
        return 1.0 / beta_fn(0.5, s)
    return s / math.pi


def poisson_kernel(y, t, s, n=1):
    """The s-Poisson kernel at ``|y|`` (``y`` is the radius for ``n = 2``)."""
    y = np.asarray(y, dtype=float)
    c = poisson_constant(n, s)
    return c * t ** (2 * s) * (t * t + y * y) ** (-(n + 2 * s) / 2)


def poisson_mass_1d(y, t, s):
    """``int_0^y P_s(z, t) dz`` for the one-dimensional kernel (odd in ``y``)."""
    y = np.asarray(y, dtype=float)
    return 0.5 * np.sign(y) * betainc(0.5, s, y * y / (t * t + y * y))


def _outer_mass(t, s, n, R, panels=24):
    """``int P (1 - window)`` over the whole space."""
    width = 0.75 * R / panels
    nodes = (0.25 * R + width * (np.arange(panels)[:, None] + _GL_X[None, :])).ravel()
    weights = np.tile(_GL_W, panels) * width
    integrand = poisson_kernel(nodes, t, s, n) * (1.0 - _window(nodes, R))
    if n == 1:
        beyond = 1.0 - betainc(0.5, s, R * R / (t * t + R * R))
        return 2.0 * float(np.sum(weights * integrand)) + beyond
    beyond = (t / math.hypot(t, R)) ** (2 * s)
    return 2.0 * math.pi * float(np.sum(weights * integrand * nodes)) + beyond


def _offsets(n, period):
    """Periodic offsets ``k h`` wrapped into ``[-L/2, L/2)``."""
    k = np.arange(n)
    k = np.where(k < (n + 1) // 2, k, k - n)
    return k * (period / n)


def poisson_weights(shape, periods, t, s, tail_tol=1e-5):
    """Periodized discrete s-Poisson kernel on the offset lattice.

    Returns ``(W, residual)`` where ``W`` sums to 1 and ``residual`` is
    the mass defect that was redistributed uniformly.  Images out to
    ``WINDOW_PERIODS`` periods are summed with a smooth window and the
    windowed-out mass is added as a constant, which keeps the lattice
    sum spectrally accurate.  For ``t`` below a few grid spacings the
    near cells use exact cell masses (1-d) or subdivided Gauss rules (2-d).
    """
    shape = tuple(shape)
    periods = tuple(periods)
    n = len(shape)
    h = [L / N for L, N in zip(periods, shape)]
    dv = float(np.prod(h))
    R = WINDOW_PERIODS * max(periods)
    K = WINDOW_PERIODS + 1
    offs = [_offsets(N, L) for N, L in zip(shape, periods)]
    W = np.zeros(shape)
    if n == 1:
        y0 = offs[0]
        for p in range(-K, K + 1):
            y = y0 + p * periods[0]
            W += dv * poisson_kernel(y, t, s, 1) * _window(np.abs(y), R)
        if t < SMALL_T_CELLS * h[0]:
            # exact cell masses on the central period replace the point values
            cells = poisson_mass_1d(y0 + 0.5 * h[0], t, s) - poisson_mass_1d(y0 - 0.5 * h[0], t, s)
            W += cells - dv * poisson_kernel(y0, t, s, 1)
    else:
        y1 = offs[0][:, None]
        y2 = offs[1][None, :]
        for p1 in range(-K, K + 1):
            for p2 in range(-K, K + 1):
                r = np.hypot(y1 + p1 * periods[0], y2 + p2 * periods[1])
                W += dv * poisson_kernel(r, t, s, 2) * _window(r, R)
        if t < SMALL_T_CELLS * max(h):
            _near_cells_2d(W, offs, h, periods, t, s)
    W += _outer_mass(t, s, n, R) * dv / float(np.prod(periods))
    residual = 1.0 - float(W.sum())
    if abs(residual) > tail_tol:
        raise TruncationError(
            f"Poisson kernel mass defect {residual:.3e} exceeds {tail_tol:.1e} at t={t:g}"
        )
    W += residual / W.size
    return W, residual


def _near_cells_2d(W, offs, h, periods, t, s, reach=8):
    """Cell integrals for the part of the kernel near the origin.

    The kernel is split as ``phi P + (1 - phi) P`` with a smooth radial
    cutoff ``phi``; the lattice point sums already in ``W`` are accurate
    for the smooth remainder, so each cell inside the support of ``phi``
    gets ``int_cell phi P - h1 h2 phi(y) P(y)``.  Gauss rules are
    subdivided on the ``reach`` cells closest to the origin.
    """
    centre = min(10.0 * max(h), 0.3 * min(periods))
    sigma = 0.15 * centre
    extent = centre + 6.0 * sigma

    def phi_p(r):
        return 0.5 * erfc((r - centre) / sigma) * poisson_kernel(r, t, s, 2)

    dv = h[0] * h[1]
    gw = _GL_W[:, None] * _GL_W[None, :]
    sub = int(min(64, math.ceil(4 * max(h) / t)))
    gx = (np.arange(sub)[:, None] + _GL_X[None, :]).ravel() / sub - 0.5
    gws = np.tile(_GL_W, sub) / sub
    i1 = np.flatnonzero(np.abs(offs[0]) <= extent + h[0])
    i2 = np.flatnonzero(np.abs(offs[1]) <= extent + h[1])
    for a in i1:
        y1 = offs[0][a]
        for b in i2:
            y2 = offs[1][b]
            r0 = math.hypot(y1, y2)
            if r0 > extent + max(h):
                continue
            if abs(y1) <= reach * h[0] and abs(y2) <= reach * h[1]:
                x1, x2 = y1 + h[0] * gx, y2 + h[1] * gx
                cell = float(gws @ phi_p(np.hypot(x1[:, None], x2[None, :])) @ gws)
            else:
                r = np.hypot(y1 + h[0] * (_GL_X[:, None] - 0.5), y2 + h[1] * (_GL_X[None, :] - 0.5))
                cell = float(np.sum(phi_p(r) * gw))
            W[a, b] += dv * (cell - float(phi_p(r0)))


def poisson_convolve(u, s, t_levels, tail_tol=1e-5):
    """Extension by direct convolution with the periodized s-Poisson kernel.

    ``U(x_i, t) = sum_k W_k(t) u(x_i - y_k)`` with the kernel weights of
    :func:`poisson_weights` (discrete mass exactly 1).  ``t = 0`` returns
    the trace.  Provenance ``"poisson_convolution"``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    t_levels = np.asarray(t_levels, dtype=float)
    if np.any(t_levels < 0):
        raise ValueError("t levels must be nonnegative")
    uhat = np.fft.fftn(u.values)
    out = np.empty((t_levels.size,) + u.shape)
    for j, t in enumerate(t_levels):
        if t == 0.0:
            out[j] = u.values
            continue
        W, _ = poisson_weights(u.shape, u.periods, t, s, tail_tol)
        out[j] = np.real(np.fft.ifftn(uhat * np.fft.fftn(W)))
    return HalfSpaceField(out, u.periods, t_levels, power_weight(s).weight_id,
                          "poisson_convolution", u.slope)


@dataclass(frozen=True)
class PoissonSymbolCheck:
    max_deviation: float
    xi: np.ndarray
    t_levels: np.ndarray
    transform: np.ndarray
    profile: np.ndarray


def verify_poisson_symbol(s, xi_grid=None, t_levels=(0.1, 0.5, 1.0, 2.0), period=2 * math.pi,
                          n_points=4096, tol=1e-7):
    """Compare the DFT of the periodized s-Poisson kernel with ``g(|xi|**2, t)``.

    ``xi_grid`` must lie on the lattice ``(2 pi / period) Z``; by default
    the first 32 nonnegative lattice frequencies.  ``t = 0`` is taken as
    the identity kernel.
    """
    step = 2 * math.pi / period
    if xi_grid is None:
        xi_grid = step * np.arange(32)
    xi = np.abs(np.asarray(xi_grid, dtype=float))
    k = np.rint(xi / step).astype(int)
    if np.any(np.abs(k * step - xi) > 1e-9 * np.maximum(1.0, xi)) or np.any(k >= n_points // 2):
        raise ValueError("xi_grid must lie on the lattice 2 pi Z / period below Nyquist")
    t_levels = np.asarray(t_levels, dtype=float)
    w = power_weight(s)
    transform = np.ones((xi.size, t_levels.size))
    for j, t in enumerate(t_levels):
        if t > 0:
            W, _ = poisson_weights((n_points,), (period,), t, s)
            transform[:, j] = np.real(np.fft.fft(W))[k]
    profile = np.ones_like(transform)
    uniq, inv = np.unique(xi[xi > 0] ** 2, return_inverse=True)
    if uniq.size:
        profile[xi > 0] = profile_kernel(w, uniq, t_levels, tol)[inv]
    dev = float(np.max(np.abs(transform - profile)))
    return PoissonSymbolCheck(dev, xi, t_levels, transform, profile)


# ---------------------------------------------------------------------------
# energy identity and weak form


def _level_spectra(U):
    axes = tuple(range(1, U.values.ndim))
    n = int(np.prod(U.shape))
    return np.fft.fftn(U.values, axes=axes) / n


@dataclass(frozen=True)
class EnergyCheck:
    lhs: float
    rhs: float
    rel_gap: float
    tail: float


def energy_identity_check(u, U, w, symbol=None, tol=1e-7, tail_tol=1e-3):
    """Compare ``int a |grad U|**2`` with ``L**n sum m(|xi|**2) |c_xi|**2``.

    The ``x`` part uses exact Parseval sums; in ``t`` each Fourier
    coefficient is taken piecewise linear between levels and integrated
    against ``a`` exactly (product moments).  ``tail`` estimates the
    energy above the last level, ``a(T) L**n sum sqrt(lambda) |C(T)|**2``,
    and must stay below ``tail_tol * rhs``.
    """
    if u.slope is not None or U.slope is not None:
        raise ValueError("an affine trend has infinite energy")
    t = U.t_levels
    if t[0] != 0.0 or t.size < 2:
        raise ValueError("energy check needs levels starting at t = 0")
    symbol = w if symbol is None else symbol
    lam = u.lam()
    c = u.spectrum()
    sel = _active_modes(c) & (lam > 0)
    m = np.zeros(lam.shape)
    if np.any(sel):
        m[sel] = mode_symbol(symbol, lam[sel], tol, extrapolate=False)[0]
    vol = u.volume
    rhs = vol * float(np.sum(m * np.abs(c) ** 2))

    C = _level_spectra(U)
    m0, m1, m2 = cell_moments(w, t[:-1], t[1:], order=2)
    A, B = C[:-1], C[1:]
    shape = (-1,) + (1,) * U.dim
    m0, m1, m2, dt = (v.reshape(shape) for v in (m0, m1, m2, np.diff(t)))
    grad_x = (np.abs(A) ** 2 * (m0 - 2 * m1 + m2) + 2 * np.real(A * np.conj(B)) * (m1 - m2)
              + np.abs(B) ** 2 * m2)
    d_t = np.abs(B - A) ** 2 * m0 / dt**2
    lhs = vol * float(np.sum(lam * grad_x.sum(axis=0)) + np.sum(d_t))
    tail = vol * float(w(t[-1])) * float(np.sum(np.sqrt(lam) * np.abs(C[-1]) ** 2))
    if rhs > 0 and tail > tail_tol * rhs:
        raise TruncationError(f"energy above t={t[-1]:g} estimated at {tail / rhs:.2e} of the total")
    if rhs == 0.0:
        gap = 0.0 if lhs == 0.0 else math.inf
    else:
        gap = abs(lhs - rhs) / rhs
    return EnergyCheck(lhs, rhs, gap, tail)


@dataclass(frozen=True)
class TestFunction:
    """``phi(x, t) = psi(x) chi(t)`` with ``psi`` sampled on the grid."""

    psi: np.ndarray
    chi: Callable
    dchi: Callable
    label: str = ""


def smooth_cutoff(t_flat, t_zero):
    """``chi`` equal to 1 on ``[0, t_flat]``, 0 beyond ``t_zero``, C-infinity, and its derivative."""
    width = t_zero - t_flat

    def bump(x):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    def dbump(x):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            xs = np.where(x > 0, x, 1.0)
            return np.where(x > 0, np.exp(-1.0 / xs) / xs**2, 0.0)

    def chi(t):
        x = (np.asarray(t, dtype=float) - t_flat) / width
        b, c = bump(1.0 - x), bump(x)
        return b / (b + c)

    def dchi(t):
        x = (np.asarray(t, dtype=float) - t_flat) / width
        b, c = bump(1.0 - x), bump(x)
        db, dc = -dbump(1.0 - x), dbump(x)
        return (db * c - b * dc) / (b + c) ** 2 / width

    return chi, dchi


def default_test_bank(U, t_flat=None, t_zero=None):
    """Products of low Fourier modes / a bump in ``x`` with a smooth cutoff in ``t``."""
    t = U.t_levels
    T = t[-1]
    t_flat = 0.25 * T if t_flat is None else t_flat
    t_zero = 0.75 * T if t_zero is None else t_zero
    t_flat = max(t_flat, t[1] if t.size > 1 else 0.0)
    chi, dchi = smooth_cutoff(t_flat, t_zero)
    mesh = U.coords()
    ks = [2 * math.pi / L for L in U.periods]
    bank = [TestFunction(np.ones(U.shape), chi, dchi, "1")]
    for order in (1, 2):
        for fn, name in ((np.cos, "cos"), (np.sin, "sin")):
            arg = sum(order * k * x for k, x in zip(ks, mesh))
            bank.append(TestFunction(np.broadcast_to(fn(arg), U.shape).copy(), chi, dchi,
                                     f"{name}({order} k.x)"))
        arg = order * ks[0] * mesh[0]
        bank.append(TestFunction(np.broadcast_to(np.sin(arg), U.shape).copy(), chi, dchi,
                                 f"sin({order} k1 x1)"))
    r2 = sum((x / (0.1 * L)) ** 2 for x, L in zip(mesh, U.periods))
    bank.append(TestFunction(np.broadcast_to(np.exp(-r2), U.shape).copy(), chi, dchi, "bump"))
    return bank


def _product_moments(f, t):
    """``(int f (1-x), int f x)`` and ``int f`` on every level interval."""
    m0, m1 = cell_moments(f, t[:-1], t[1:])
    return m0 - m1, m1, m0


def weak_residual(U, w, f, test_bank=None):
    """Largest normalized weak-form defect over a bank of test functions.

    For each ``phi`` the defect is
    ``|int a grad U . grad phi - int f phi(., 0)| / ||phi||`` with
    ``||phi||**2 = int a |grad phi|**2 + int phi(., 0)**2``.  ``U`` is
    taken piecewise linear in ``t`` between levels; the cutoff must be
    flat on the first interval and vanish before the last level.
    """
    t = U.t_levels
    if t[0] != 0.0:
        raise ValueError("weak residual needs levels starting at t = 0")
    bank = default_test_bank(U) if test_bank is None else test_bank
    C = _level_spectra(U)
    lam = U.lam()
    vol = U.volume
    fhat = f.spectrum()
    shape = (-1,) + (1,) * U.dim
    worst = 0.0
    for phi in bank:
        chi, dchi = phi.chi, phi.dchi
        if abs(float(dchi(0.5 * (t[0] + t[1])))) > 0 or float(chi(t[-1])) != 0.0:
            raise ValueError(f"test function {phi.label!r}: cutoff must be flat near 0 and vanish at T")
        psi = np.fft.fftn(phi.psi) / phi.psi.size
        lo, hi, _ = _product_moments(lambda s: w(s) * chi(s), t)
        dmass = np.zeros(t.size - 1)
        inner = t[:-1] > 0
        dmass[inner] = cell_moments(lambda s: w(s) * dchi(s), t[:-1][inner], t[1:][inner], order=0)[0]
        lo, hi, dmass = (v.reshape(shape) for v in (lo, hi, dmass))
        dt = np.diff(t).reshape(shape)
        space = np.sum(C[:-1] * lo + C[1:] * hi, axis=0)
        slope = np.sum((C[1:] - C[:-1]) / dt * dmass, axis=0)
        form = vol * float(np.real(np.sum(np.conj(psi) * (lam * space + slope))))
        load = vol * float(np.real(np.sum(np.conj(psi) * fhat))) * float(chi(0.0))
        a_chi2 = cell_moments(lambda s: w(s) * chi(s) ** 2, t[:-1], t[1:], order=0)[0].sum()
        a_dchi2 = cell_moments(lambda s: w(s) * dchi(s) ** 2, t[:-1][inner], t[1:][inner],
                               order=0)[0].sum()
        psi2 = np.abs(psi) ** 2
        norm2 = vol * float(np.sum(psi2 * (lam * a_chi2 + a_dchi2))) + vol * float(np.sum(psi2)) * float(chi(0.0)) ** 2
        worst = max(worst, abs(form - load) / math.sqrt(norm2))
    return worst
