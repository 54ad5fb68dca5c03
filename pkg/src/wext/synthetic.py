"""Reproducible synthetic traces and fields for experiments and tests."""

from __future__ import annotations

import math

import numpy as np

from .fields import HalfSpaceField, TraceField, _axis_coords


def layer_trace(angle, period=64.0, width=2.0, n=256):
    """Monotone layer ``tanh(omega . x / width)`` in direction ``omega = (cos, sin)(angle)``.

    The layer is made periodic-plus-affine: along ``omega`` it is the
    staircase equal to ``tanh(y / width)`` on ``(-period/2, period/2)``
    and shifted by its total rise on every other period.  The torus has
    periods ``period / |cos|`` and ``period / |sin|`` with ``n`` points on
    both axes, so the sampled trace depends on ``i + j`` only and all its
    Fourier modes are parallel to ``omega``.
    """
    c, s = math.cos(angle), math.sin(angle)
    if abs(c) < 1e-3 or abs(s) < 1e-3:
        raise ValueError("angle must not be aligned with an axis")
    periods = (period / abs(c), period / abs(s))
    rise = 2.0 * math.tanh(0.5 * period / width)
    slope_y = rise / period
    x1 = _axis_coords(n, periods[0])[:, None]
    x2 = _axis_coords(n, periods[1])[None, :]
    y = c * x1 + s * x2
    y = (y + 0.5 * period) % period - 0.5 * period
    vals = np.tanh(y / width) - slope_y * y
    return TraceField(vals, periods, slope=(slope_y * c, slope_y * s))


def random_trace(rng, n=64, period=2 * math.pi, modes=6, dim=1):
    """Band-limited trace with ``modes`` random Fourier modes per axis, amplitude ~ 1/k."""
    shape = (n,) * dim
    coef = np.zeros(shape, dtype=complex)
    ks = np.arange(-modes, modes + 1)
    for idx in np.ndindex(*(len(ks),) * dim):
        k = tuple(int(ks[i]) for i in idx)
        if all(v == 0 for v in k):
            continue
        norm = math.sqrt(sum(v * v for v in k))
        coef[k] += (rng.normal() + 1j * rng.normal()) / norm
    vals = np.real(np.fft.ifftn(coef)) * coef.size
    vals /= np.abs(vals).max()
    return TraceField(vals, (period,) * dim)


def polynomial_field(func, shape, half_widths, t_levels):
    """Non-periodic field ``func(x1, x2, t)`` on a centered box (provenance external).

    ``half_widths`` are the box half-sizes; the grid is the centered grid
    of a torus with periods ``2 * half_widths``.
    """
    periods = tuple(2.0 * h for h in half_widths)
    x1 = _axis_coords(shape[0], periods[0])[None, :, None]
    x2 = _axis_coords(shape[1], periods[1])[None, None, :]
    t = np.asarray(t_levels, dtype=float)[:, None, None]
    vals = np.broadcast_to(func(x1, x2, t), (t.shape[0],) + tuple(shape)).astype(float)
    return HalfSpaceField(vals, periods, t_levels, periodic=False)
