"""Grid functions on periodic tori and on half-spaces over them.

Space grids are centered: along an axis of period ``L`` with ``N`` points
the nodes are ``x_k = -L/2 + k L/N``.  A field may carry an affine trend
``slope . x`` on top of its periodic samples, which is how monotone
layers (bounded, but not periodic) are represented: the stored samples
are the periodic part and :meth:`TraceField.full_values` adds the trend
back.

Half-space values are indexed ``[t, x1(, x2)]``.

Grid file layout: one JSON header line followed by the raw
little-endian float64 samples in row-major order (last axis fastest,
``t`` slowest).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROVENANCES = ("fourier_formula", "poisson_convolution", "external")


def _axis_coords(n, period):
    return -0.5 * period + period * np.arange(n) / n


def _wavenumbers(n, period):
    return 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)


@dataclass(frozen=True, eq=False)
class _Grid:
    """Shared spatial-grid metadata."""

    periods: tuple
    slope: tuple | None
    periodic: bool

    @property
    def dim(self):
        return len(self.periods)

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.periods, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.periods))

    def coords(self):
        """Open mesh of node coordinates, one array per axis."""
        axes = [_axis_coords(n, L) for n, L in zip(self.shape, self.periods)]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def wavenumbers(self):
        """Open mesh of angular wavenumbers ``xi`` matching ``numpy.fft``."""
        axes = [_wavenumbers(n, L) for n, L in zip(self.shape, self.periods)]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def lam(self):
        """``|xi|**2`` on the frequency lattice."""
        return sum(k**2 for k in self.wavenumbers())

    def trend(self):
        """The affine part ``slope . x`` on the grid (zeros if none)."""
        out = np.zeros(self.shape)
        if self.slope is not None:
            for c, x in zip(self.slope, self.coords()):
                out = out + c * x
        return out


@dataclass(frozen=True, eq=False)
class TraceField(_Grid):
    """Samples of a trace ``u`` on a periodic grid in one or two dimensions."""

    values: np.ndarray = field(default=None, repr=False)
    _spectrum: object = field(default=None, repr=False, compare=False)

    def __init__(self, values, periods, slope=None, periodic=True):
        values = np.asarray(values, dtype=float)
        periods = tuple(float(p) for p in np.atleast_1d(periods))
        if values.ndim not in (1, 2) or values.ndim != len(periods):
            raise ValueError("trace must be 1-d or 2-d with one period per axis")
        if not np.all(np.isfinite(values)):
            raise ValueError("trace values must be finite")
        if any(p <= 0 for p in periods):
            raise ValueError("periods must be positive")
        if slope is not None:
            slope = tuple(float(c) for c in np.atleast_1d(slope))
            if len(slope) != values.ndim:
                raise ValueError("slope needs one component per axis")
            if not any(slope):
                slope = None
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "periodic", bool(periodic))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_spectrum", None)

    @property
    def shape(self):
        return self.values.shape

    def full_values(self):
        """Periodic samples plus the affine trend."""
        return self.values + self.trend()

    def spectrum(self):
        """Fourier coefficients ``c_xi = fft(values) / N`` of the periodic part."""
        if not self.periodic:
            raise ValueError("spectral operations need a periodic field")
        if self._spectrum is None:
            object.__setattr__(self, "_spectrum", np.fft.fftn(self.values) / self.values.size)
        return self._spectrum

    def parseval_gap(self):
        """Relative gap between ``sum |u|**2 dx`` and ``L**n sum |c|**2``."""
        space = float(np.sum(self.values**2)) * self.cell_volume
        freq = float(np.sum(np.abs(self.spectrum()) ** 2)) * self.volume
        scale = max(space, freq)
        return 0.0 if scale == 0.0 else abs(space - freq) / scale

    @classmethod
    def from_function(cls, func, shape, periods, slope=None):
        """Sample ``func(*coords)`` on the centered grid; the trend is subtracted."""
        shape = tuple(np.atleast_1d(shape))
        periods = tuple(np.atleast_1d(periods))
        axes = [_axis_coords(n, L) for n, L in zip(shape, periods)]
        mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
        vals = np.broadcast_to(func(*mesh), shape).astype(float)
        tmp = cls(np.zeros(shape), periods, slope)
        return cls(vals - tmp.trend(), periods, slope)


@dataclass(frozen=True, eq=False)
class HalfSpaceField(_Grid):
    """Samples ``U(x_k, t_j)`` with values indexed ``[t, x1(, x2)]``."""

    values: np.ndarray = field(default=None, repr=False)
    t_levels: np.ndarray = field(default=None, repr=False)
    weight_id: str | None = None
    provenance: str = "external"

    def __init__(self, values, periods, t_levels, weight_id=None, provenance="external",
                 slope=None, periodic=True):
        values = np.asarray(values, dtype=float)
        periods = tuple(float(p) for p in np.atleast_1d(periods))
        t_levels = np.asarray(t_levels, dtype=float)
        if values.ndim != len(periods) + 1 or values.shape[0] != t_levels.size:
            raise ValueError("values must have shape (len(t_levels), *space_shape)")
        if t_levels.size and (t_levels[0] < 0 or np.any(np.diff(t_levels) <= 0)):
            raise ValueError("t levels must be nonnegative and strictly increasing")
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        if slope is not None:
            slope = tuple(float(c) for c in np.atleast_1d(slope))
            if not any(slope):
                slope = None
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "periodic", bool(periodic))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t_levels", t_levels)
        object.__setattr__(self, "weight_id", weight_id)
        object.__setattr__(self, "provenance", provenance)

    @property
    def shape(self):
        return self.values.shape[1:]

    def full_values(self):
        return self.values + self.trend()[None]

    def level(self, j):
        """Trace of level ``j`` as a :class:`TraceField`."""
        return TraceField(self.values[j], self.periods, self.slope, self.periodic)


def graded_levels(T, n, gamma=2.0):
    """``n + 1`` levels ``T (j/n)**gamma`` starting at 0."""
    return T * (np.arange(n + 1) / n) ** gamma


# ---------------------------------------------------------------------------
# grid files


def _header(dims, periods, t_levels, extra):
    head = {
        "dims": [int(d) for d in dims],
        "periods": [float(p) for p in periods],
        "t_levels": [float(t) for t in t_levels],
        "dtype": "f64-le",
        "order": "row-major",
    }
    head.update(extra)
    return json.dumps(head, separators=(",", ":"))


def write_grid(path, fld):
    """Write a :class:`TraceField` or :class:`HalfSpaceField` to ``path``."""
    extra = {}
    if fld.slope is not None:
        extra["slope"] = list(fld.slope)
    if not fld.periodic:
        extra["periodic"] = False
    if isinstance(fld, TraceField):
        t_levels = [0.0]
        data = fld.values[None]
    else:
        t_levels = fld.t_levels
        data = fld.values
        if fld.weight_id is not None:
            extra["weight_id"] = fld.weight_id
        extra["provenance"] = fld.provenance
    with open(path, "wb") as fh:
        fh.write(_header(fld.shape, fld.periods, t_levels, extra).encode() + b"\n")
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_grid(path):
    """Read a grid file; returns a :class:`HalfSpaceField`."""
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    if end < 0:
        raise ValueError(f"{path}: missing header line")
    try:
        head = json.loads(raw[:end])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: bad header: {exc}") from None
    for key in ("dims", "periods", "t_levels"):
        if key not in head:
            raise ValueError(f"{path}: header lacks {key!r}")
    if head.get("dtype", "f64-le") != "f64-le" or head.get("order", "row-major") != "row-major":
        raise ValueError(f"{path}: only f64-le row-major data is supported")
    dims = tuple(head["dims"])
    nt = len(head["t_levels"])
    data = np.frombuffer(raw[end + 1:], dtype="<f8")
    if data.size != nt * int(np.prod(dims)):
        raise ValueError(f"{path}: expected {nt * int(np.prod(dims))} values, found {data.size}")
    return HalfSpaceField(
        data.reshape((nt,) + dims).astype(float),
        head["periods"],
        head["t_levels"],
        weight_id=head.get("weight_id"),
        provenance=head.get("provenance", "external"),
        slope=head.get("slope"),
        periodic=head.get("periodic", True),
    )


def read_trace(path):
    """Read a trace file (a grid file with a single level)."""
    fld = read_grid(path)
    if fld.t_levels.size != 1:
        raise ValueError(f"{path}: a trace file has exactly one t level")
    return fld.level(0)
