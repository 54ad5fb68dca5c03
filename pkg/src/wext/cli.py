"""Command-line entry point ``wext``.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are
option names (``lmin``, ``weight``, ``tlevels`` ...).  Values given on the
command line win over the file.  Exit codes: 0 success, 1 numerical
failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import extension as ext
from .errors import MonotonicityError, WeightSpecError, WextError
from .fields import graded_levels, read_grid, read_trace, write_grid
from .rigidity import EPS_RHO, TOL_OMEGA, TOL_THETA, rigidity_report
from .symbol import DECAY_LENGTHS, compute_symbol, solve_profile
from .synthetic import random_trace
from .weights import parse_weight

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
ALIASES = {"lambda": "lam", "t_levels": "tlevels"}


class UsageError(Exception):
    """Bad option values or inconsistent configuration."""


def fmt(x):
    """Float with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # repr is the shortest exact representation
        return x if math.isfinite(x) else None
    return obj


def dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class RunConfig:
    """Resolved settings of one invocation."""

    weight: str | None = None
    lmin: float | None = None
    lmax: float | None = None
    num: int | None = None
    log: bool = True
    tol_profile: float = 1e-7
    tol_symbol: float = 1e-4
    tol_rigidity: float = TOL_THETA
    n: int | None = None
    periods: list | None = None
    t_levels: list | None = None
    out: str | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def validate(self):
        for name in ("tol_profile", "tol_symbol", "tol_rigidity"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.lmin is not None and not self.lmin > 0:
            raise UsageError("lambda grid minimum must be positive")
        if self.lmin is not None and self.lmax is not None and self.lmax < self.lmin:
            raise UsageError("lmax must not be below lmin")
        if self.num is not None and self.num < 1:
            raise UsageError("num must be at least 1")
        if self.t_levels is not None:
            t = np.asarray(self.t_levels, dtype=float)
            if t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
                raise UsageError("t levels must be strictly increasing and start at 0")
        return self

    def lambda_grid(self):
        if self.num == 1:
            return np.array([self.lmin])
        if self.log:
            return np.geomspace(self.lmin, self.lmax, self.num)
        return np.linspace(self.lmin, self.lmax, self.num)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# option handling


def _floats(text):
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"expected a list of numbers, got {text!r}") from None


def _merge(args, defaults):
    """Fill options left unset on the command line from the config file, then defaults."""
    conf = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config}: {exc}") from None
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
    opts = vars(args)
    defaults = {"tol": 1e-7, **defaults}
    for key, value in conf.items():
        key = ALIASES.get(key, key.replace("-", "_"))
        if key not in opts:
            raise UsageError(f"unknown config key {key!r}")
        if opts[key] is None:
            opts[key] = value
    for key, value in defaults.items():
        if opts.get(key) is None:
            opts[key] = value
    return args


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _config(args):
    t_levels = None
    tl = getattr(args, "tlevels", None)
    if tl is not None and tl != "auto":
        t_levels = tl if isinstance(tl, list) else _floats(tl)
    return RunConfig(
        weight=getattr(args, "weight", None),
        lmin=getattr(args, "lmin", None),
        lmax=getattr(args, "lmax", None),
        num=getattr(args, "num", None),
        log=bool(getattr(args, "log", True)),
        tol_profile=float(args.tol),
        tol_rigidity=float(getattr(args, "tol_theta", None) or TOL_THETA),
        t_levels=t_levels,
        out=getattr(args, "out", None),
        seed=int(getattr(args, "seed", 0) or 0),
    ).validate()


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _csv(header, rows):
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _auto_levels(u, n_levels):
    """Levels ``T (j/n)**3`` with ``T`` covering 24 decay lengths of the slowest mode."""
    xi_min = 2 * math.pi / max(u.periods)
    return graded_levels(DECAY_LENGTHS / xi_min, n_levels, gamma=3.0)


# ---------------------------------------------------------------------------
# commands


def cmd_symbol(args):
    _merge(args, {"lmin": None, "lmax": None, "num": None, "log": True})
    _require(args, "weight", "lmin", "num")
    if args.lmax is None:
        args.lmax = args.lmin
    cfg = _config(args)
    w = parse_weight(cfg.weight)
    tab = compute_symbol(w, cfg.lambda_grid(), cfg.tol_profile, keep_profiles=False)
    rows = []
    for lam, m, err in zip(tab.lambdas, tab.m_values, tab.est_errors):
        rows.append((lam, m, err))
    _write_text(cfg.out, _csv(("lambda", "m", "est_error"), rows))
    if tab.failures:
        for lam, msg in tab.failures.items():
            print(f"wext: lambda={fmt(lam)}: {msg}", file=sys.stderr)
        if not args.partial:
            return EXIT_NUMERIC
    return EXIT_OK


def cmd_profile(args):
    _merge(args, {})
    _require(args, "weight", "lam")
    w = parse_weight(args.weight)
    prof = solve_profile(w, float(args.lam), float(args.tol))
    body = _csv(("t", "g", "a_dg"), prof.to_rows())
    head = f"# lambda={fmt(prof.lam)} m={fmt(prof.m_value)} est_error={fmt(prof.est_error)}\n"
    _write_text(args.out, head + body)
    return EXIT_OK


def _levels(args, u):
    if args.tlevels == "auto":
        return _auto_levels(u, int(args.nlevels))
    cfg = _config(args)
    return np.asarray(cfg.t_levels, dtype=float)


def cmd_extend(args):
    _merge(args, {"tlevels": "auto", "nlevels": 32, "method": "fourier"})
    _require(args, "weight", "trace", "out")
    w = parse_weight(args.weight)
    u = read_trace(args.trace)
    t = _levels(args, u)
    if args.method == "poisson":
        if w.kind != "power":
            raise UsageError("the poisson method needs a power weight")
        U = ext.poisson_convolve(u, w.s, t)
    else:
        U = ext.extend(u, w, t, float(args.tol))
    write_grid(args.out, U)
    return EXIT_OK


def cmd_trace_op(args):
    _merge(args, {})
    _require(args, "weight", "trace", "out")
    w = parse_weight(args.weight)
    u = read_trace(args.trace)
    res = ext.apply_trace_operator(u, w, float(args.tol), extrapolate=bool(args.extrapolate))
    write_grid(args.out, res.field)
    summary = {"m_one": res.m_one, "extrapolated_modes": res.extrapolated_modes, "weight": w.spec}
    sys.stdout.write(dump_json(summary))
    return EXIT_OK


# verify ---------------------------------------------------------------------


def _verify_poisson(args):
    s = float(args.s)
    thr = 1e-4 if args.threshold is None else float(args.threshold)
    chk = ext.verify_poisson_symbol(s, tol=float(args.tol))
    verdict = {"check": "poisson", "s": s, "max_deviation": chk.max_deviation, "threshold": thr}
    ok = chk.max_deviation <= thr
    if s == 0.5:
        exact = np.exp(-np.outer(chk.xi, chk.t_levels))
        dev = float(np.max(np.abs(chk.transform - exact)))
        verdict["max_deviation_closed_form"] = dev
        verdict["threshold_closed_form"] = 1e-5
        ok = ok and dev <= 1e-5
    verdict["pass"] = ok
    return verdict


def _trace_for(args):
    if args.trace:
        return read_trace(args.trace)
    rng = np.random.default_rng(int(args.seed))
    return random_trace(rng, n=int(args.n), modes=int(args.modes))


def _verify_energy(args):
    w = parse_weight(args.weight)
    u = _trace_for(args)
    n = int(args.nlevels)
    T = float(args.tmax)
    U = ext.extend(u, w, graded_levels(T, n, gamma=3.0), float(args.tol))
    chk = ext.energy_identity_check(u, U, w, tol=float(args.tol))
    thr = 1e-2 if args.threshold is None else float(args.threshold)
    return {"check": "energy", "weight": w.spec, "lhs": chk.lhs, "rhs": chk.rhs,
            "rel_gap": chk.rel_gap, "tail": chk.tail, "threshold": thr, "pass": chk.rel_gap <= thr}


def _verify_scaling(args):
    w = parse_weight(args.weight)
    if w.kind != "power":
        raise UsageError("the scaling check needs a power weight")
    lam = np.geomspace(float(args.lmin), float(args.lmax), int(args.num))
    tab = compute_symbol(w, lam, float(args.tol), keep_profiles=False)
    ratio = tab.m_values / lam**w.s
    spread = float((np.nanmax(ratio) - np.nanmin(ratio)) / np.nanmean(ratio))
    thr = 1e-4 if args.threshold is None else float(args.threshold)
    return {"check": "scaling", "weight": w.spec, "m_one": float(np.nanmean(ratio)),
            "spread": spread, "failures": len(tab.failures), "threshold": thr,
            "pass": bool(spread <= thr and not tab.failures)}


def _verify_weak(args):
    w = parse_weight(args.weight)
    u = _trace_for(args)
    n = int(args.nlevels)
    U = ext.extend(u, w, graded_levels(float(args.tmax), n, gamma=3.0), float(args.tol))
    f = ext.apply_trace_operator(u, w, float(args.tol)).field
    res = ext.weak_residual(U, w, f)
    thr = 1e-2 if args.threshold is None else float(args.threshold)
    return {"check": "weak", "weight": w.spec, "residual": res, "threshold": thr, "pass": res <= thr}


VERIFIERS = {
    "poisson": _verify_poisson,
    "energy": _verify_energy,
    "scaling": _verify_scaling,
    "weak": _verify_weak,
}


def cmd_verify(args):
    _merge(args, {"s": 0.5, "weight": "power:s=0.5", "seed": 0, "n": 64, "modes": 6,
                  "nlevels": 64, "tmax": 12.0, "lmin": 0.1, "lmax": 10.0, "num": 20})
    verdict = VERIFIERS[args.which](args)
    _write_text(args.out, dump_json(verdict))
    return EXIT_OK if verdict["pass"] else EXIT_NUMERIC


def cmd_rigidity(args):
    _merge(args, {"eps_rho": EPS_RHO, "tol_theta": TOL_THETA, "tol_omega": TOL_OMEGA})
    _require(args, "field", "weight")
    w = parse_weight(args.weight)
    U = read_grid(args.field)
    if U.dim != 2:
        raise UsageError("rigidity diagnostics need a two-dimensional field")
    radii = None
    if args.radii is not None:
        radii = args.radii if isinstance(args.radii, list) else _floats(args.radii)
    try:
        rep = rigidity_report(U, w, radii, float(args.eps_rho), float(args.tol_theta),
                              float(args.tol_omega))
    except MonotonicityError as exc:
        _write_text(args.out, dump_json({"error": exc.code, "message": str(exc)}))
        print(f"wext: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_text(args.out, dump_json(rep.to_dict()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="wext", description="Weighted half-space extension toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, tol=1e-7):
        sp.add_argument("--config", help="JSON file with default option values")
        sp.add_argument("--tol", type=float, help=f"profile tolerance (default {tol:g})")
        sp.add_argument("--out", help="output path (default: stdout for text output)")

    sp = sub.add_parser("symbol", help="tabulate m(lambda)")
    common(sp)
    sp.add_argument("--weight")
    sp.add_argument("--lmin", type=float)
    sp.add_argument("--lmax", type=float)
    sp.add_argument("--num", type=int)
    sp.add_argument("--log", action="store_true", default=None, help="log-spaced grid (default)")
    sp.add_argument("--linear", dest="log", action="store_false", help="linearly spaced grid")
    sp.add_argument("--partial", action="store_true", help="exit 0 even if some lambdas fail")
    sp.set_defaults(func=cmd_symbol)

    sp = sub.add_parser("profile", help="profile g(lambda, t) as CSV")
    common(sp)
    sp.add_argument("--weight")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("extend", help="extend a trace file into the half-space")
    common(sp)
    sp.add_argument("--weight")
    sp.add_argument("--trace")
    sp.add_argument("--tlevels", help="comma separated levels starting at 0, or 'auto'")
    sp.add_argument("--nlevels", type=int, help="number of intervals for --tlevels auto")
    sp.add_argument("--method", choices=("fourier", "poisson"))
    sp.set_defaults(func=cmd_extend)

    sp = sub.add_parser("trace-op", help="apply the trace operator to a trace file")
    common(sp)
    sp.add_argument("--weight")
    sp.add_argument("--trace")
    sp.add_argument("--extrapolate", action="store_true")
    sp.set_defaults(func=cmd_trace_op)

    sp = sub.add_parser("verify", help="run a numerical self-check, print a JSON verdict")
    common(sp)
    sp.add_argument("which", choices=sorted(VERIFIERS))
    sp.add_argument("--s", type=float, help="fractional order (poisson)")
    sp.add_argument("--weight")
    sp.add_argument("--trace", help="trace file (energy, weak); default: random trace")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int, help="points of the random trace")
    sp.add_argument("--modes", type=int, help="modes of the random trace")
    sp.add_argument("--nlevels", type=int)
    sp.add_argument("--tmax", type=float)
    sp.add_argument("--lmin", type=float)
    sp.add_argument("--lmax", type=float)
    sp.add_argument("--num", type=int)
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("rigidity", help="angle diagnostics of a 2-d field file")
    common(sp)
    sp.add_argument("--field")
    sp.add_argument("--weight")
    sp.add_argument("--radii", help="comma separated radii for E(R)")
    sp.add_argument("--eps-rho", type=float)
    sp.add_argument("--tol-theta", type=float)
    sp.add_argument("--tol-omega", type=float)
    sp.set_defaults(func=cmd_rigidity)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except WeightSpecError as exc:
        print(f"wext: invalid weight spec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"wext: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WextError as exc:
        print(f"wext: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # malformed files and inconsistent inputs
        print(f"wext: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
