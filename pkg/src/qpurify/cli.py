"""Command-line interface.

Subcommands cover the whole pipeline: ``simulate`` writes snapshot sample
CSVs plus a JSON run manifest, ``density`` emits closed-form curves,
``compare`` scores a sample file against the matching law, ``fp-check``
sweeps the forward-equation residual, ``roots`` tabulates the action's
extremal branches, and ``mean-purity`` tabulates the mean purity with an
optional Monte Carlo join.

Exit codes: 0 success (and statistical pass), 1 statistical comparison
failure, 2 configuration error, 3 runtime/integration failure.

CSV conventions: ``#`` comment lines carry metadata as key=value, curves use
the header ``x,density``, snapshot sample files a single column named after
the recorded variable (q or Q). Floats are written with repr, so identical
runs produce byte-identical files. Times may be given as plain t or as the
dimensionless product eta*t (via the --etat style flags); they are
normalized immediately. The default output directory is taken from
QPURIFY_OUTDIR when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time as _time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import __version__, analytic, stats
from .ensemble import EnsembleSnapshot, IntegrationError, SimConfig, run_ensemble

EXIT_OK = 0
EXIT_STAT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

FP_RESIDUAL_GATE = 1e-9


class ConfigError(Exception):
    """Bad flags, bad config file or bad input data."""


@dataclass
class RunManifest:
    """Provenance record written next to every simulate output."""

    config: dict
    version: str
    timestamp: str
    outputs: list = field(default_factory=list)
    duration_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "version": self.version,
                "timestamp": self.timestamp,
                "outputs": self.outputs,
                "duration_seconds": self.duration_seconds,
            },
            indent=2,
        )


def _fmt(value) -> str:
    return repr(float(value))


def parse_grid(spec: str) -> np.ndarray:
    """Parse 'lo:hi:n' into a uniform grid with n points."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must look like lo:hi:n, got {spec!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad grid {spec!r}: {exc}") from None
    if n < 2 or not hi > lo:
        raise ConfigError(f"grid needs hi > lo and n >= 2, got {spec!r}")
    return np.linspace(lo, hi, n)


def _parse_float_list(spec: str) -> list:
    try:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {spec!r}: {exc}") from None


def _resolve_time(eta: float, t, etat, what: str = "time") -> float:
    if (t is None) == (etat is None):
        raise ConfigError(f"give exactly one of --{what} or --eta{what}")
    return float(t) if t is not None else float(etat) / eta


def _default_outdir() -> str:
    return os.environ.get("QPURIFY_OUTDIR", ".")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit(path, text: str, outputs=None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _write_text(path, text)
        if outputs is not None:
            outputs.append(path)


# ---------------------------------------------------------------- simulate

_SIM_KEYS = {
    "eta": float,
    "dt": float,
    "steps": int,
    "traj": int,
    "seed": int,
    "backend": str,
    "snapshots": list,
    "boundary": str,
    "q0": float,
    "threads": int,
    "out": str,
}


def _load_sim_settings(args) -> dict:
    settings = {
        "eta": 1.0,
        "dt": 1e-3,
        "steps": 1000,
        "traj": 1000,
        "seed": 0,
        "backend": "langevin_q",
        "snapshots": None,
        "boundary": "record_only",
        "q0": 0.0,
        "threads": 1,
        "out": None,
    }
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from None
        for key, value in raw.items():
            if key not in _SIM_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            settings[key] = value
    # flags win over the file
    for key in ("eta", "dt", "steps", "traj", "seed", "backend", "boundary",
                "q0", "threads", "out"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if args.snapshots is not None:
        settings["snapshots"] = _parse_float_list(args.snapshots)
    elif args.snapshots_etat is not None:
        eta = float(settings["eta"])
        settings["snapshots"] = [s / eta for s in _parse_float_list(args.snapshots_etat)]
    if settings["snapshots"] is None:
        raise ConfigError("no snapshot times given (--snapshots or config)")
    if settings["out"] is None:
        settings["out"] = _default_outdir()
    return settings


def _snapshot_filename(index: int, eta: float, t: float) -> str:
    return f"snap_{index:02d}_etat_{eta * t:g}.csv"


def _write_snapshot_csv(path: str, snap: EnsembleSnapshot, cfg: SimConfig) -> None:
    column = "Q" if cfg.backend == "langevin_Q" else "q"
    lines = [
        "# qpurify snapshot samples",
        f"# backend={cfg.backend}",
        f"# eta={_fmt(cfg.eta)}",
        f"# dt={_fmt(cfg.dt)}",
        f"# t={_fmt(snap.time)}",
        f"# etat={_fmt(cfg.eta * snap.time)}",
        f"# seed={cfg.master_seed}",
        f"# q0={_fmt(cfg.q0)}",
        f"# boundary_policy={cfg.boundary_policy}",
        f"# excursion_count={snap.excursion_count}",
        f"# n_traj={cfg.n_traj}",
        column,
    ]
    lines.extend(_fmt(v) for v in snap.values)
    _write_text(path, "\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    started = _time.perf_counter()
    settings = _load_sim_settings(args)
    try:
        cfg = SimConfig(
            eta=float(settings["eta"]),
            dt=float(settings["dt"]),
            n_steps=int(settings["steps"]),
            n_traj=int(settings["traj"]),
            master_seed=int(settings["seed"]),
            backend=str(settings["backend"]),
            snapshot_times=tuple(settings["snapshots"]),
            boundary_policy=str(settings["boundary"]),
            q0=float(settings["q0"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out_dir = str(settings["out"])
    os.makedirs(out_dir, exist_ok=True)
    snapshots = run_ensemble(cfg, n_workers=int(settings["threads"]))
    outputs = []
    for k, snap in enumerate(snapshots):
        path = os.path.join(out_dir, _snapshot_filename(k, cfg.eta, snap.time))
        _write_snapshot_csv(path, snap, cfg)
        outputs.append(path)
    manifest = RunManifest(
        config={key: settings[key] for key in sorted(_SIM_KEYS)},
        version=__version__,
        timestamp=_time.strftime("%Y-%m-%dT%H:%M:%SZ", _time.gmtime()),
        outputs=outputs,
        duration_seconds=round(_time.perf_counter() - started, 6),
    )
    manifest_path = os.path.join(out_dir, "run_manifest.json")
    _write_text(manifest_path, manifest.to_json() + "\n")
    print(f"wrote {len(outputs)} snapshot file(s) and {manifest_path}")
    return EXIT_OK


# ---------------------------------------------------------------- density

def cmd_density(args) -> int:
    t = _resolve_time(args.eta, args.t, args.etat, what="t")
    grid = parse_grid(args.grid)
    try:
        curve = analytic.density_curve(args.which, args.eta, t, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    lines = [
        f"# which={curve.which}",
        f"# eta={_fmt(curve.eta)}",
        f"# t={_fmt(curve.time)}",
        f"# etat={_fmt(curve.eta * curve.time)}",
        "x,density",
    ]
    lines.extend(f"{_fmt(x)},{_fmt(d)}" for x, d in zip(curve.x, curve.density))
    _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- compare

def read_samples_csv(path: str):
    """Read a snapshot CSV back: (metadata dict, column name, values array)."""
    meta = {}
    column = None
    values = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        key, _, val = body.partition("=")
                        meta[key.strip()] = val.strip()
                    continue
                if column is None:
                    column = line
                    continue
                values.append(float(line))
    except OSError as exc:
        raise ConfigError(f"cannot read samples {path!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"malformed sample line in {path!r}: {exc}") from None
    if column is None or not values:
        raise ConfigError(f"samples file {path!r} holds no data")
    return meta, column, np.asarray(values)


def _meta_float(meta: dict, key: str, path: str) -> float:
    if key not in meta:
        raise ConfigError(f"samples file {path!r} is missing metadata {key!r}")
    return float(meta[key])


def _check_meta_match(name: str, flag_value, meta_value: float) -> None:
    if flag_value is None:
        return
    if abs(float(flag_value) - meta_value) > 1e-9 * max(1.0, abs(meta_value)):
        raise ConfigError(
            f"--{name} {flag_value!r} does not match samples metadata {meta_value!r}"
        )


def _samples_on_axis(which: str, column: str, values: np.ndarray, t: float) -> np.ndarray:
    if column == "q":
        if which == "P_q":
            return values
        if which == "P_tau":
            return (1.0 + values * values) / 2.0
        if np.any(np.abs(values) >= 1.0):
            raise ConfigError("cannot map q samples with |q| >= 1 onto the atanh axis")
        Q = np.arctanh(values)
    elif column == "Q":
        Q = values
    else:
        raise ConfigError(f"unknown sample column {column!r}")
    if which == "P_Q":
        return Q
    if which == "P_Omega":
        return Q / t
    q = np.tanh(Q)
    return q if which == "P_q" else (1.0 + q * q) / 2.0


def cmd_compare(args) -> int:
    meta, column, values = read_samples_csv(args.samples)
    t_meta = _meta_float(meta, "t", args.samples)
    eta_meta = _meta_float(meta, "eta", args.samples)
    _check_meta_match("eta", args.eta, eta_meta)
    if args.t is not None or args.etat is not None:
        t_flag = _resolve_time(eta_meta, args.t, args.etat, what="t")
        _check_meta_match("t", t_flag, t_meta)
    eta, t = eta_meta, t_meta
    if not t > 0.0:
        raise ConfigError("comparison requires a snapshot at t > 0")

    axis_samples = _samples_on_axis(args.which, column, values, t)
    cdf = stats.AnalyticCdf(args.which, eta, t)
    ks = stats.ks_distance(axis_samples, cdf)
    hist = stats.build_histogram(axis_samples, stats.default_edges(args.which, eta, t))
    l1 = stats.l1_distance(hist, cdf)

    snapshot = EnsembleSnapshot(
        time=t, values=values, backend=meta.get("backend", "unknown")
    )
    report = stats.moment_report(snapshot, eta)
    report.ks_statistic = ks
    report.l1_distance = l1
    payload = report.to_dict()
    payload["which"] = args.which
    payload["ks_threshold"] = args.ks_threshold
    payload["passed"] = bool(ks < args.ks_threshold)
    _emit(args.out, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK if payload["passed"] else EXIT_STAT_FAIL


# ---------------------------------------------------------------- fp-check

def cmd_fp_check(args) -> int:
    q_grid = parse_grid(args.q_grid)
    t_grid = parse_grid(args.t_grid)
    if np.any(t_grid <= 0.0):
        raise ConfigError("time grid must be strictly positive")
    if not args.eta > 0.0:
        raise ConfigError("eta must be positive")
    worst = analytic.fp_residual_max(args.eta, q_grid, t_grid)
    payload = {
        "eta": args.eta,
        "q_grid": args.q_grid,
        "t_grid": args.t_grid,
        "max_abs_residual": worst,
        "gate": FP_RESIDUAL_GATE,
        "passed": bool(worst < FP_RESIDUAL_GATE),
    }
    _emit(args.out, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK if payload["passed"] else EXIT_STAT_FAIL


# ---------------------------------------------------------------- roots

def cmd_roots(args) -> int:
    if args.t_list is not None:
        times = _parse_float_list(args.t_list)
    elif args.etat_list is not None:
        times = [s / args.eta for s in _parse_float_list(args.etat_list)]
    else:
        raise ConfigError("give --t-list or --etat-list")
    if any(t <= 0.0 for t in times):
        raise ConfigError("times must be positive")
    lines = ["eta_t,omega,omega_over_eta,kind,above_threshold"]
    for t in times:
        report = analytic.extremal_roots(t, args.eta)
        for omega, kind in report.extrema:
            lines.append(
                f"{_fmt(args.eta * t)},{_fmt(omega)},{_fmt(omega / args.eta)},"
                f"{kind},{int(report.threshold_flag)}"
            )
    _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- mean-purity

def _collect_mc_purity(samples_dir: str) -> list:
    rows = []
    try:
        names = sorted(os.listdir(samples_dir))
    except OSError as exc:
        raise ConfigError(f"cannot list {samples_dir!r}: {exc}") from None
    for name in names:
        if not name.endswith(".csv"):
            continue
        path = os.path.join(samples_dir, name)
        meta, column, values = read_samples_csv(path)
        q = np.tanh(values) if column == "Q" else values
        tau = (1.0 + q * q) / 2.0
        n = tau.size
        stderr = float(tau.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        rows.append((_meta_float(meta, "etat", path), float(tau.mean()), stderr, n))
    return rows


def cmd_mean_purity(args) -> int:
    if args.t_list is not None:
        times = _parse_float_list(args.t_list)
    elif args.etat_list is not None:
        times = [s / args.eta for s in _parse_float_list(args.etat_list)]
    else:
        raise ConfigError("give --t-list or --etat-list")
    if any(t < 0.0 for t in times):
        raise ConfigError("times must be nonnegative")
    mc_rows = _collect_mc_purity(args.samples_dir) if args.samples_dir else []
    lines = ["eta_t,tau_analytic,tau_mc,tau_mc_stderr,n_samples"]
    for t in times:
        s = args.eta * t
        ana = analytic.mean_purity(t, args.eta)
        match = next(
            (r for r in mc_rows if abs(r[0] - s) <= 1e-9 * max(1.0, abs(s))), None
        )
        if match is not None:
            lines.append(
                f"{_fmt(s)},{_fmt(ana)},{_fmt(match[1])},{_fmt(match[2])},{match[3]}"
            )
        else:
            lines.append(f"{_fmt(s)},{_fmt(ana)},,,")
    _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpurify",
        description="Monitored-qubit trajectory simulation and exact-law checks",
    )
    parser.add_argument("--version", action="version", version=f"qpurify {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a trajectory ensemble, write snapshot CSVs")
    p.add_argument("--config", help="TOML config file; flags override its keys")
    p.add_argument("--eta", type=float, default=None, help="measurement rate")
    p.add_argument("--dt", type=float, default=None, help="time step")
    p.add_argument("--steps", type=int, default=None, help="number of steps")
    p.add_argument("--traj", type=int, default=None, help="number of trajectories")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--backend", default=None,
                   choices=("langevin_q", "langevin_Q", "collisional"))
    p.add_argument("--snapshots", default=None, help="comma list of snapshot times t")
    p.add_argument("--snapshots-etat", default=None,
                   help="comma list of snapshot times as eta*t")
    p.add_argument("--boundary", default=None, choices=("record_only", "clamp"))
    p.add_argument("--q0", type=float, default=None, help="initial coordinate")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("density", help="write one closed-form density on a grid")
    p.add_argument("--which", required=True, choices=analytic.DENSITY_NAMES)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--etat", type=float, default=None)
    p.add_argument("--grid", required=True, help="lo:hi:n")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("compare", help="score a snapshot CSV against the law")
    p.add_argument("--samples", required=True, help="snapshot CSV from simulate")
    p.add_argument("--which", required=True, choices=analytic.DENSITY_NAMES)
    p.add_argument("--eta", type=float, default=None, help="cross-check against metadata")
    p.add_argument("--t", type=float, default=None, help="cross-check against metadata")
    p.add_argument("--etat", type=float, default=None)
    p.add_argument("--ks-threshold", type=float, default=0.01)
    p.add_argument("--out", default=None, help="JSON path (stdout if omitted)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fp-check", help="sweep the forward-equation residual")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--q-grid", default="-6:6:121", help="lo:hi:n in Q")
    p.add_argument("--t-grid", default="0.1:5:50", help="lo:hi:n in t")
    p.add_argument("--out", default=None, help="JSON path (stdout if omitted)")
    p.set_defaults(func=cmd_fp_check)

    p = sub.add_parser("roots", help="tabulate extremal branches of the action")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--t-list", default=None, help="comma list of times t")
    p.add_argument("--etat-list", default=None, help="comma list of eta*t values")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("mean-purity", help="tabulate mean purity; optional MC join")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--t-list", default=None, help="comma list of times t")
    p.add_argument("--etat-list", default=None, help="comma list of eta*t values")
    p.add_argument("--samples-dir", default=None,
                   help="directory of simulate CSVs to join as a Monte Carlo column")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_mean_purity)

    return parser


_VALUE_FLAGS = ("--grid", "--q-grid", "--t-grid")


def _join_value_flags(argv) -> list:
    """Turn '--grid -3:3:601' into '--grid=-3:3:601' so argparse accepts it."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(_join_value_flags(list(argv)))
    except SystemExit as exc:
        # argparse exits with 2 on bad flags, which matches the config-error code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
