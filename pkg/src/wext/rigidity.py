"""Angle diagnostics of two-dimensional half-space fields.

With ``Z = d1 U + i d2 U = rho exp(i theta)`` a solution of
``div(a grad U) = 0`` has ``div(a rho**2 grad theta) = 0`` and a one-
dimensional solution ``U = u_t(omega . x)`` has constant ``theta``.
This module measures how far a discrete field is from that picture.

Angles are handled as the full ``atan2(d2 U, d1 U)`` internally; the
reported ``theta`` is the ``arcsin(d2 U / rho)`` value.  Direction
statistics use the doubled angle, so ``omega`` and ``-omega`` count as
the same direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateFieldError, MonotonicityError, TruncationError
from .quadrature import cell_moments, flux_abscissae

TOL_THETA = 1e-6
TOL_OMEGA = 1e-4
EPS_RHO = 1e-8


# ---------------------------------------------------------------------------
# derivatives


def _fd4(f, h, axis):
    """Fourth-order differences along ``axis``, one-sided at the ends."""
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    if n < 5:
        raise ValueError("need at least 5 points per axis for finite differences")
    d = np.empty_like(f)
    d[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return np.moveaxis(d, 0, axis)


def _spectral(f, period, axis):
    n = f.shape[axis]
    xi = 2 * np.pi * np.fft.fftfreq(n, d=period / n)
    if n % 2 == 0:
        xi[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(1j * xi.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis))


def spatial_gradient(U):
    """``(d1 U, d2 U)`` on every level: spectral for periodic fields, else 4th-order."""
    if U.dim != 2:
        raise ValueError("angle diagnostics need a two-dimensional trace grid")
    out = []
    for k in range(2):
        axis = k + 1
        if U.periodic:
            d = _spectral(U.values, U.periods[k], axis)
        else:
            d = _fd4(U.values, U.spacing[k], axis)
        if U.slope is not None:
            d = d + U.slope[k]
        out.append(d)
    return tuple(out)


# ---------------------------------------------------------------------------
# angle fields


@dataclass(frozen=True, eq=False)
class AngleFields:
    """``rho``, ``theta`` and the validity mask on the ``[t, x1, x2]`` grid.

    ``theta`` is the arcsin angle in ``[-pi/2, pi/2]`` (``nan`` where
    masked); ``angle`` is the full ``atan2`` angle used for computations.
    """

    d1: np.ndarray = field(repr=False)
    d2: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    angle: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    eps_rho: float = EPS_RHO

    @property
    def valid_fraction(self):
        return float(self.mask.mean())


def angle_fields(U, eps_rho=EPS_RHO, check_monotone=True):
    """Gradient modulus and angle of ``U``; points with ``rho < eps_rho max(rho)`` are masked.

    Raises
    ------
    DegenerateFieldError
        If every point is masked.
    MonotonicityError
        If ``check_monotone`` and some unmasked point has
        ``d2 U < -eps_rho max(rho)`` (code ``NON_MONOTONE_X2``).
    """
    if U.t_levels.size < 2:
        raise ValueError("angle diagnostics need at least two t levels")
    d1, d2 = spatial_gradient(U)
    rho = np.hypot(d1, d2)
    top = float(rho.max())
    mask = rho >= eps_rho * top if top > 0 else np.zeros(rho.shape, dtype=bool)
    if not mask.any():
        raise DegenerateFieldError("gradient vanishes everywhere; angle undefined")
    if check_monotone:
        bad = mask & (d2 < -eps_rho * top)
        if bad.any():
            raise MonotonicityError(
                f"{MonotonicityError.code}: d2 U < 0 at {int(bad.sum())} unmasked point(s) "
                f"(min d2 U = {float(d2[bad].min()):.3e}); diagnostics assume d2 U > 0"
            )
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.where(mask, np.arcsin(np.clip(d2 / rho, -1.0, 1.0)), np.nan)
    angle = np.arctan2(d2, d1)
    return AngleFields(d1, d2, rho, theta, angle, mask, eps_rho)


def _wrap(x):
    return np.angle(np.exp(1j * x))


# ---------------------------------------------------------------------------
# theta equation


def _dual_cells(t):
    """Dual cells ``[t_{j-1/2}, t_{j+1/2}]`` clipped to ``[t_0, t_N]``."""
    mid = 0.5 * (t[:-1] + t[1:])
    lo = np.concatenate([[t[0]], mid])
    hi = np.concatenate([mid, [t[-1]]])
    return lo, hi


def theta_residual(U, w, fields):
    """Discrete ``div(a rho**2 grad theta)`` and the boundary flux of ``theta``.

    Returns
    -------
    interior_l2 : float
        L2 norm (over interior points whose whole stencil is unmasked) of
        the flux-form divergence.  ``x`` fluxes use face averages of
        ``rho**2`` and the dual-cell mean of ``a``; ``t`` fluxes use the
        interval mean of ``a``.
    boundary_flux : float
        L2 norm over ``x`` of ``lim_{t->0} a rho d_t theta``, from cell
        fluxes ``rho dtheta / int 1/a`` on the first two intervals
        extrapolated to ``t = 0``.
    """
    t = U.t_levels
    if t.size < 3:
        raise ValueError("theta residual needs at least three t levels")
    ang, r2, mask = fields.angle, fields.rho**2, fields.mask
    h1, h2 = U.spacing
    lo, hi = _dual_cells(t)
    dual = hi - lo
    a_dual = cell_moments(w, lo, hi, order=0)[0] / dual
    dt = np.diff(t)
    a_cell = cell_moments(w, t[:-1], t[1:], order=0)[0] / dt

    div = np.zeros(ang.shape)
    ok = mask.copy()
    for axis, h in ((1, h1), (2, h2)):
        nxt = np.roll(ang, -1, axis)
        face = 0.5 * (r2 + np.roll(r2, -1, axis)) * _wrap(nxt - ang) / h
        div += (face - np.roll(face, 1, axis)) / h
        ok &= np.roll(mask, -1, axis) & np.roll(mask, 1, axis)
        if not U.periodic:
            edge = [slice(None)] * 3
            edge[axis] = [0, -1]
            ok[tuple(edge)] = False
    div *= a_dual[:, None, None]
    tface = (a_cell[:, None, None] * 0.5 * (r2[1:] + r2[:-1]) * _wrap(ang[1:] - ang[:-1])
             / dt[:, None, None])
    div[1:-1] += (tface[1:] - tface[:-1]) / dual[1:-1, None, None]
    ok[0] = ok[-1] = False
    ok[1:-1] &= mask[:-2] & mask[2:]
    if not ok.any():
        raise DegenerateFieldError("no interior points with an unmasked stencil")
    vol = h1 * h2 * dual[:, None, None]
    interior = math.sqrt(float(np.sum(np.where(ok, div**2 * vol, 0.0))))

    tau, inv_a = flux_abscissae(w, t[:2], t[1:3])
    rho_face = 0.5 * (fields.rho[1:3] + fields.rho[:2])
    flux = rho_face * _wrap(ang[1:3] - ang[:2]) / inv_a[:, None, None]
    f0 = flux[0] + (flux[0] - flux[1]) * tau[0] / (tau[1] - tau[0])
    bmask = mask[0] & mask[1] & mask[2]
    boundary = math.sqrt(float(np.sum(np.where(bmask, f0**2, 0.0))) * h1 * h2)
    return interior, boundary


# ---------------------------------------------------------------------------
# growth statistic


@dataclass(frozen=True)
class GrowthCurve:
    radii: tuple
    values: tuple
    truncated_fraction: tuple

    @property
    def sup(self):
        return max(self.values) if self.values else 0.0


def _annulus_fraction(x1, x2, tc, hx1, hx2, ht, R, sub=4):
    """Volume fraction of each cell lying in ``R <= |(x, t)| <= 2R``.

    Cells far from both spheres are classified by their centre; cells the
    spheres cut are subsampled on a ``sub**3`` lattice.
    """
    r = np.sqrt(x1**2 + x2**2 + tc**2)
    half = 0.5 * np.sqrt(hx1**2 + hx2**2 + ht**2)
    frac = ((r >= R) & (r <= 2 * R)).astype(float)
    cut = (np.abs(r - R) <= half) | (np.abs(r - 2 * R) <= half)
    if np.any(cut):
        idx = np.nonzero(cut)
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        o1, o2, o3 = np.meshgrid(offs, offs, offs, indexing="ij")
        X1 = np.broadcast_to(x1, r.shape)[idx][:, None] + (np.broadcast_to(hx1, r.shape)[idx][:, None] * o1.ravel())
        X2 = np.broadcast_to(x2, r.shape)[idx][:, None] + (np.broadcast_to(hx2, r.shape)[idx][:, None] * o2.ravel())
        T3 = np.broadcast_to(tc, r.shape)[idx][:, None] + (np.broadcast_to(ht, r.shape)[idx][:, None] * o3.ravel())
        rs = np.sqrt(X1**2 + X2**2 + T3**2)
        frac[idx] = np.mean((rs >= R) & (rs <= 2 * R), axis=1)
    return frac


def _outside_fraction(R, box1, box2, t_max, n=48):
    """Fraction of the half-annulus ``R <= |(x, t)| <= 2R, t > 0`` outside the box.

    Midpoint rule in ``(r**3, cos(polar), azimuth)``, which is uniform in volume.
    """
    q = (np.arange(n) + 0.5) / n
    r = np.cbrt(R**3 + q * 7 * R**3)[:, None, None]
    c = q[None, :, None]
    phi = 2 * np.pi * q[None, None, :]
    sn = np.sqrt(1 - c**2)
    out = (np.abs(r * sn * np.cos(phi)) > box1) | (np.abs(r * sn * np.sin(phi)) > box2) | (r * c > t_max)
    return float(np.mean(out))


def growth_statistic(U, w, radii, fields=None, allow_truncation=False):
    """``E(R) = R**-2 int_{B_2R+ minus B_R+} a(t) (d2 U)**2``.

    Cells are the tensor products of the ``x`` grid cells with the dual
    ``t`` cells; the ``t`` weight is the exact integral of ``a`` over the
    dual cell times the fraction of the cell inside the half-annulus.
    The volume fraction of the half-annulus outside the grid box is
    reported as ``truncated_fraction``; a positive fraction raises unless
    ``allow_truncation``.
    """
    d2 = spatial_gradient(U)[1] if fields is None else fields.d2
    t = U.t_levels
    lo, hi = _dual_cells(t)
    dual = hi - lo
    a_dual = cell_moments(w, lo, hi, order=0)[0]
    centre = 0.5 * (lo + hi)
    h1, h2 = U.spacing
    x1, x2 = U.coords()
    x1 = x1[None]
    x2 = x2[None]
    tc = centre[:, None, None]
    ht = dual[:, None, None]
    values, truncated = [], []
    for R in radii:
        R = float(R)
        if R <= 0:
            raise ValueError("radii must be positive")
        frac = _annulus_fraction(x1, x2, tc, h1, h2, ht, R)
        energy = float(np.sum(frac * (a_dual[:, None, None] * h1 * h2) * d2**2))
        lost = _outside_fraction(R, 0.5 * U.periods[0], 0.5 * U.periods[1], float(t[-1]))
        if lost > 1e-3 and not allow_truncation:
            raise TruncationError(f"half-annulus for R={R:g} leaves the grid ({lost:.1%} outside)")
        values.append(energy / R**2)
        truncated.append(lost)
    return GrowthCurve(tuple(float(r) for r in radii), tuple(values), tuple(truncated))


# ---------------------------------------------------------------------------
# direction


@dataclass(frozen=True)
class Direction:
    omega_per_level: tuple
    angle_per_level: tuple
    omega_global: tuple | None
    angle_global: float
    alpha: float
    circular_variance: float
    level_spread: float
    is_one_dimensional: bool


def _doubled_mean(phi):
    z = np.mean(np.exp(2j * phi))
    ang = 0.5 * float(np.angle(z))
    if ang <= 0.0:
        ang += math.pi
    return ang, 1.0 - float(abs(z))


def extract_direction(fields, tol_theta=TOL_THETA, tol_omega=TOL_OMEGA):
    """Mean direction per level and globally, with the 1D verdict.

    ``omega = (cos theta_bar, sin theta_bar)`` with ``theta_bar`` the
    doubled-angle circular mean, taken in ``(0, pi]``.  The field counts
    as one-dimensional when the circular variance (of the doubled angle)
    over all unmasked points is at most ``tol_theta`` and every level's
    mean is within ``tol_omega`` radians of the global mean.
    """
    ang, mask = fields.angle, fields.mask
    if not mask.any():
        raise DegenerateFieldError("no unmasked points")
    per_level = []
    for j in range(ang.shape[0]):
        if mask[j].any():
            per_level.append(_doubled_mean(ang[j][mask[j]])[0])
        else:
            per_level.append(math.nan)
    glob, var = _doubled_mean(ang[mask])
    diffs = [abs(0.5 * float(np.angle(np.exp(2j * (p - glob))))) for p in per_level if not math.isnan(p)]
    spread = max(diffs) if diffs else 0.0
    agree = spread <= tol_omega
    one_d = bool(var <= tol_theta and agree)
    omegas = tuple((math.cos(p), math.sin(p)) for p in per_level)
    return Direction(
        omega_per_level=omegas,
        angle_per_level=tuple(per_level),
        omega_global=(math.cos(glob), math.sin(glob)) if agree else None,
        angle_global=glob,
        alpha=math.sin(glob) ** 2,
        circular_variance=var,
        level_spread=spread,
        is_one_dimensional=one_d,
    )


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class RigidityReport:
    theta_residual_l2: float
    theta_boundary_flux: float
    growth_curve: list
    growth_sup: float
    omega_global: list | None
    omega_per_level: list
    alpha: float
    is_one_dimensional: bool
    tolerances: dict
    circular_variance: float = 0.0
    level_spread: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, allow_nan=True, default=float)


def default_radii(U):
    """Dyadic radii ``2**k >= 1`` with the half-annulus inside the grid."""
    limit = 0.5 * min(min(U.periods) / 2, float(U.t_levels[-1]))
    radii = []
    R = 1.0
    while R <= limit:
        radii.append(R)
        R *= 2
    return radii


def rigidity_report(U, w, radii=None, eps_rho=EPS_RHO, tol_theta=TOL_THETA, tol_omega=TOL_OMEGA):
    """All diagnostics for one field."""
    fields = angle_fields(U, eps_rho)
    interior, boundary = theta_residual(U, w, fields)
    radii = default_radii(U) if radii is None else list(radii)
    curve = growth_statistic(U, w, radii, fields)
    direction = extract_direction(fields, tol_theta, tol_omega)
    return RigidityReport(
        theta_residual_l2=interior,
        theta_boundary_flux=boundary,
        growth_curve=[[r, e] for r, e in zip(curve.radii, curve.values)],
        growth_sup=curve.sup,
        omega_global=None if direction.omega_global is None else list(direction.omega_global),
        omega_per_level=[list(o) for o in direction.omega_per_level],
        alpha=direction.alpha,
        is_one_dimensional=direction.is_one_dimensional,
        tolerances={"eps_rho": eps_rho, "tol_theta": tol_theta, "tol_omega": tol_omega},
        circular_variance=direction.circular_variance,
        level_spread=direction.level_spread,
    )
