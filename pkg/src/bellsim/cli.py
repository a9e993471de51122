"""Command-line entry point: ``bellsim run|sweep|analyze|oracle|selftest``.

Exit codes: 0 ok, 1 selftest failure, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterator, Sequence

from . import formats
from .coincidence import event_tally, match, pair_by_ground_truth, tally
from .core import (
    OPTION_KEYS,
    BellSimError,
    ConfigError,
    NoiseParams,
    SimConfig,
    config_from_options,
    parse_angle,
    parse_kv,
    validate_config,
)
from .engine import run
from .estimator import EmptyCombo, default_phi_grid, estimate, sweep
from .reference import (
    oracle_app1,
    oracle_app2,
    oracle_app2_stationary,
    p_calibrated,
    p_eq3,
    p_eq4,
    qm_S,
)

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse's own exit code is already 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_sim_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--config", metavar="FILE", help="key=value file; flags override it")
    g.add_argument("--strategy", help="app1 | app2 | table:K (K in 0..15) | qm")
    g.add_argument("--n", help="number of trials")
    g.add_argument("--phi", help="angle, radians or with 'deg' suffix")
    g.add_argument("--seed", help="root seed (default: $BELLSIM_SEED or 0)")
    g.add_argument("--pmap", help="off | paper-eq3 | paper-eq4 | calibrated")
    g.add_argument("--p-delay", help="fixed B2 probability when --pmap off")
    g.add_argument("--period", help="ticks between bullets")
    g.add_argument("--delta-app1", help="apparatus-1 delay in ticks")
    g.add_argument("--delta-app2", help="apparatus-2 slight delay in ticks")
    g.add_argument("--window", help="coincidence half-width in ticks")
    g.add_argument("--noise-dark", help="dark counts per side per trial")
    g.add_argument("--noise-drop", help="record drop probability")
    g.add_argument("--noise-flip", help="outcome flip probability")
    g.add_argument("--b2-nodelay-not", help="apparatus-1 B2 keeps the NOT when not delayed")
    g.add_argument("--allow-slot-overlap", help="skip slot-separation timing checks")


def build_config(args: argparse.Namespace, environ=os.environ) -> SimConfig:
    """Defaults < $BELLSIM_SEED < --config file < flags."""
    opts: dict[str, str] = {}
    if environ.get("BELLSIM_SEED"):
        opts["seed"] = environ["BELLSIM_SEED"]
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError([("config", f"cannot read config file: {exc}")]) from None
        opts.update(parse_kv(text))
    for key in OPTION_KEYS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            opts[key] = val
    return validate_config(config_from_options(opts))


@contextlib.contextmanager
def _open_out(path: str | None) -> Iterator[IO[str]]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _eprint(*a) -> None:
    print(*a, file=sys.stderr)


# -- subcommands ------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    out = run(cfg)
    m = match(out.left, out.right, cfg.timing.window)
    coinc = estimate(tally(m))
    event = estimate(pair_by_ground_truth(out, strict=cfg.noise.drop_prob == 0))
    if args.out:
        with open(args.out, "w") as fh:
            formats.write_events(out, fh)
    if args.matches:
        with open(args.matches, "w") as fh:
            formats.write_match(m, fh)
    if args.tally:
        with open(args.tally, "w", newline="") as fh:
            formats.write_tally(tally(m), fh)
    with _open_out(args.summary) as fh:
        formats.write_summary([("coincidence", coinc), ("event", event)], fh)
    _eprint(f"singles_fraction={coinc.singles_fraction!r}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    lo = parse_angle(args.phi_min)
    hi = parse_angle(args.phi_max)
    if args.steps < 1:
        raise ConfigError([("config", "--steps must be >= 1")])
    grid = default_phi_grid(lo, hi, args.steps)
    for phi in grid:
        validate_config(cfg.with_(phi=phi))
    if hi > math.pi / 4 + 1e-12:
        _eprint("warning: angles beyond 45 deg leave the range where the delay maps are positive")
    t0 = time.perf_counter()
    rows = sweep(cfg, grid)
    with _open_out(args.out) as fh:
        formats.write_sweep(rows, fh)
    if args.figure:
        from .report import plot_sweep
        plot_sweep(rows, args.figure, title=f"{cfg.label}, pmap={cfg.pmap.value}, "
                                            f"n={cfg.n_trials}")
    _eprint(f"sweep: {len(rows)} angles in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def _parse_windows(spec: str) -> list[int]:
    # "lo:hi:step" inclusive, or comma list
    if ":" in spec:
        parts = [int(x) for x in spec.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(lo, hi + 1, step))
    return [int(x) for x in spec.split(",")]


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        with open(args.infile) as fh:
            ev = formats.read_events(fh)
    except OSError as exc:
        _eprint(f"error: {exc}")
        return EXIT_DATA
    except formats.MalformedEvents as exc:
        _eprint(f"error: {args.infile}: {exc}")
        return EXIT_DATA

    window = args.window
    if window is None and ev.config:
        window = ev.config.get("timing", {}).get("window")
    if window is None:
        window = 5
    window = int(window)

    event_est = None
    if ev.has_bullet_ids:
        try:
            event_est = estimate(event_tally(ev.left, ev.right, strict=False))
        except EmptyCombo as exc:
            _eprint(f"warning: event basis unavailable: {exc}")

    if args.window_scan:
        windows = _parse_windows(args.window_scan)
        rows = []
        for w in windows:
            est = estimate(tally(match(ev.left, ev.right, w)))
            rows.append((w, est))
        with _open_out(args.out) as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["window", "S_abs", "stderr", "n_pairs", "n_singles"])
            for w, est in rows:
                wr.writerow([w, repr(est.S_abs), repr(est.stderr_S), est.total_pairs,
                             est.n_singles])
        if args.figure:
            from .report import plot_window_scan
            plot_window_scan([w for w, _ in rows], [e.S_abs for _, e in rows],
                             [e.stderr_S for _, e in rows], args.figure,
                             event_value=event_est.S_abs if event_est else None)
        return EXIT_OK

    coinc = estimate(tally(match(ev.left, ev.right, window)))
    summary = [("coincidence", coinc)]
    if event_est is not None:
        summary.append(("event", event_est))
    with _open_out(args.out) as fh:
        formats.write_summary(summary, fh)
    return EXIT_OK


def _fmt(x) -> str:
    return repr(float(x))


def cmd_oracle(args: argparse.Namespace) -> int:
    which = args.which
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        if which in ("app1", "all"):
            w.writerow(["table", "p", "basis", "E11", "E12", "E21", "E22", "S", "S_abs",
                        "singles_frac"])
            for p in args.p:
                r = oracle_app1(Fraction(p).limit_denominator(10**6))
                for basis, b in (("coincidence", r.coincidence), ("event", r.event)):
                    e = b.E
                    w.writerow(["app1", _fmt(p), basis, *(_fmt(e[c]) for c in sorted(e)),
                                _fmt(b.S), _fmt(b.S_abs), _fmt(r.singles_fraction)])
        if which in ("app2", "all"):
            w.writerow(["table", "L", "basis", "E11", "E12", "E21", "E22", "S", "S_abs",
                        "singles_frac"])
            results = [(str(args.L), oracle_app2(args.L))]
            if args.L >= 4:
                results.append((f"{args.L}-stationary", oracle_app2_stationary(args.L)))
            for label, r in results:
                for basis, b in (("coincidence", r.coincidence), ("event", r.event)):
                    e = b.E
                    w.writerow(["app2", label, basis, *(_fmt(e[c]) for c in sorted(e)),
                                _fmt(b.S), _fmt(b.S_abs), _fmt(r.singles_fraction)])
        if which in ("pmap", "all"):
            w.writerow(["table", "φ_deg", "S_qm", "p_eq3", "p_eq4", "p_calibrated",
                        "S_app1_eq3", "S_app1_calibrated"])
            for phi in default_phi_grid(0.0, math.pi / 4, args.steps):
                w.writerow(["pmap", _fmt(math.degrees(phi)), _fmt(qm_S(phi)),
                            _fmt(p_eq3(phi)), _fmt(p_eq4(phi)), _fmt(p_calibrated(phi)),
                            _fmt(2 + 2 * p_eq3(phi)), _fmt(2 + 2 * p_calibrated(phi))])
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import CHECKS, HEADLINE_NOTE, run_checks

    if args.list:
        for name in CHECKS:
            print(name)
        return EXIT_OK
    names = args.only.split(",") if args.only else None
    if names:
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise ConfigError([("config", f"unknown check(s): {', '.join(unknown)}")])
    noise = NoiseParams(float(args.noise_dark or 0), float(args.noise_drop or 0),
                        float(args.noise_flip or 0))
    t0 = time.perf_counter()
    results = run_checks(names, noise)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:34s} {r.detail}  [{r.seconds:.1f} s]")
    print(HEADLINE_NOTE)
    n_fail = sum(not r.ok for r in results)
    print(f"{len(results) - n_fail}/{len(results)} passed in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK if n_fail == 0 else EXIT_SELFTEST


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bellsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate once, write events and a summary")
    _add_sim_options(r)
    r.add_argument("--out", default="events.jsonl", help="event JSONL path ('' to skip)")
    r.add_argument("--summary", default="-", help="summary CSV path (default stdout)")
    r.add_argument("--matches", help="optional match JSONL path")
    r.add_argument("--tally", help="optional per-combo tally CSV path")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="|S| over a grid of angles")
    _add_sim_options(s)
    s.add_argument("--phi-min", default="0deg")
    s.add_argument("--phi-max", default="45deg")
    s.add_argument("--steps", type=int, default=16)
    s.add_argument("--out", default="-", help="sweep CSV path (default stdout)")
    s.add_argument("--figure", help="write a PNG/PDF plot of the sweep here")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="re-analyse a stored event file")
    a.add_argument("--in", dest="infile", required=True)
    a.add_argument("--window", type=int, help="default: from the file header, else 5")
    a.add_argument("--window-scan", metavar="LO:HI[:STEP]|W1,W2,...",
                   help="emit |S| versus window instead of a summary")
    a.add_argument("--out", default="-")
    a.add_argument("--figure", help="plot for --window-scan")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("oracle", help="print closed-form and enumerated tables")
    o.add_argument("--which", choices=("app1", "app2", "pmap", "all"), default="all")
    o.add_argument("--p", type=float, nargs="+", default=[0, 0.25, 0.5, 0.75, 1])
    o.add_argument("--L", type=int, default=6)
    o.add_argument("--steps", type=int, default=16)
    o.add_argument("--out", default="-")
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("selftest", help="oracle-versus-simulation checks")
    t.add_argument("--list", action="store_true")
    t.add_argument("--only", help="comma-separated check names")
    t.add_argument("--noise-dark")
    t.add_argument("--noise-drop")
    t.add_argument("--noise-flip")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for _, msg in exc.violations:
            _eprint(f"config error: {msg}")
        return EXIT_CONFIG
    except EmptyCombo as exc:
        _eprint(f"data error: {exc} (increase --n or widen --window)")
        return EXIT_DATA
    except BellSimError as exc:
        _eprint(f"error: {exc}")
        return EXIT_DATA
    except ValueError as exc:
        _eprint(f"config error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
