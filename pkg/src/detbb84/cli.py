"""Command-line entry point: ``detbb84 {rates,simulate,crossover}``.

Exit codes: 0 completed (protocol aborts included), 1 internal error,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_config_text
from .protocol import Variant, run_session, write_transcript
from .rates import (NoCrossover, NoSecureRate, RateVariant, crossover_distance,
                    distance_range, optimize_mu, sweep, write_rate_csv)

log = logging.getLogger("detbb84")

TABLE_DISTANCES = [2.0, 4.0, 8.0, 16.0]


class UsageError(Exception):
    pass


def _parse_sweep(text: str):
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
        return distance_range(lo, hi, step)
    except ValueError as err:
        raise UsageError(f"invalid --sweep {text!r} (expected lo:hi:step): {err}") from None


def _parse_bracket(text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"invalid --bracket {text!r} (expected lo:hi)") from None
    if not 0 <= lo < hi:
        raise UsageError(f"invalid --bracket {text!r}: need 0 <= lo < hi")
    return lo, hi


def _load(args):
    overrides = "\n".join(args.set or [])
    cfg = load_config(args.config)
    if overrides:
        cfg = cfg.with_overrides(**{k.replace(".", "__"): v
                                    for k, v in parse_config_text(overrides).items()})
    if args.output_dir:
        cfg = cfg.with_overrides(run__output_dir=args.output_dir)
    out = Path(cfg.output_dir)
    cfg.write_resolved(out)
    return cfg, out


def _fmt(x: float) -> str:
    return f"{x:.5g}"


def cmd_rates(args) -> int:
    cfg, out = _load(args)
    if args.sweep:
        distances = _parse_sweep(args.sweep)
    elif args.distance:
        distances = [float(d) for d in args.distance]
    else:
        distances = TABLE_DISTANCES
    if any(d < 0 for d in distances):
        raise UsageError("distances must be >= 0")
    variants = [RateVariant.BB84, RateVariant.DET] if args.variant == "both" else [RateVariant(args.variant)]
    curves = {v: sweep(cfg.rates, distances, v) for v in variants}
    write_rate_csv(list(curves.values()), out / "rates.csv")

    by_distance = {v: {pt.distance: pt for pt in curves[v].points} for v in variants}
    header = ["distance_km"]
    for v in variants:
        header += [f"mu_opt_{v.value}", f"rate_{v.value}"]
    if len(variants) == 2:
        header.append("ratio_det_bb84")
    rows = []
    for L in distances:
        L = float(L)
        row = [repr(L)]
        pts = [by_distance[v].get(L) for v in variants]
        for pt in pts:
            row += ["nan", "0.0"] if pt is None else [repr(pt.mu_opt), repr(pt.rate)]
        if len(variants) == 2:
            bb, det = pts
            row.append(repr(det.rate / bb.rate) if bb is not None and det is not None else "nan")
        rows.append(row)
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    print("  ".join(f"{h:>14}" for h in header))
    for row in rows:
        print("  ".join(f"{_fmt(float(x)):>14}" for x in row))
    for v in variants:
        if curves[v].omitted:
            print(f"# {v.value}: no secure rate at {', '.join(_fmt(L) for L in curves[v].omitted)} km")
    return 0


def cmd_simulate(args) -> int:
    cfg, out = _load(args)
    changes = {}
    if args.variant:
        changes["session__variant"] = args.variant
    if args.pulses is not None:
        changes["session__pulses"] = args.pulses
    if args.n_target is not None:
        changes["session__n_target"] = args.n_target
    if args.attack:
        changes["attack__kind"] = args.attack
    if args.fraction is not None:
        changes["attack__fraction"] = args.fraction
    if args.seed is not None:
        changes["run__master_seed"] = args.seed
    if changes:
        cfg = cfg.with_overrides(**changes)
        cfg.write_resolved(out)
    try:
        tr = run_session(cfg.session, cfg.fiber, cfg.detector, cfg.timing, cfg.source,
                         cfg.attack, rng=cfg.master_seed)
    except ValueError as err:
        raise UsageError(str(err)) from None
    write_transcript(tr, out / "transcript.csv")
    summary = tr.summary()
    summary["attack"] = cfg.attack.kind.value
    summary["seed"] = cfg.master_seed
    lines = [f"{k}: {v}" for k, v in summary.items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_crossover(args) -> int:
    cfg, out = _load(args)
    lo, hi = _parse_bracket(args.bracket)
    grid = distance_range(lo, hi, args.step)
    with open(out / "crossover.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["distance_km", "rate_det", "rate_bb84", "ratio"])
        for L in grid:
            try:
                r_det = optimize_mu(cfg.rates, float(L), RateVariant.DET)[1]
            except NoSecureRate:
                r_det = 0.0
            try:
                r_bb = optimize_mu(cfg.rates, float(L), RateVariant.BB84)[1]
            except NoSecureRate:
                r_bb = 0.0
            ratio = r_det / r_bb if r_bb > 0 else float("nan")
            w.writerow([repr(float(L)), repr(r_det), repr(r_bb), repr(ratio)])
    try:
        km = crossover_distance(cfg.rates, (lo, hi))
    except NoCrossover:
        if cfg.rates.ideal_memory:
            print("no crossover (ratio constant 2)")
        else:
            print(f"no crossover in [{lo:g}, {hi:g}] km")
        return 0
    print(f"{km:.2f} km")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file (default: reference config)")
    common.add_argument("--output-dir", help="overrides run.output_dir")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="detbb84", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("rates", parents=[common], help="optimised secure rates vs distance")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--distance", nargs="+", type=float, help="one or more distances in km")
    g.add_argument("--sweep", help="inclusive range lo:hi:step in km")
    r.add_argument("--variant", choices=["both", "bb84", "det"], default="both")
    r.set_defaults(func=cmd_rates)

    s = sub.add_parser("simulate", parents=[common], help="run one protocol session")
    s.add_argument("--variant", choices=[v.value for v in Variant])
    s.add_argument("--pulses", type=int, help="number of pulses W")
    s.add_argument("--n-target", type=int, help="N; the check set has 2N bits")
    s.add_argument("--attack", choices=["none", "ir", "delay"])
    s.add_argument("--fraction", type=float, help="fraction of pulses attacked")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("crossover", parents=[common],
                       help="distance where the deterministic variant stops winning")
    c.add_argument("--bracket", default="0.5:30", help="search bracket lo:hi in km")
    c.add_argument("--step", type=float, default=0.5, help="ratio curve spacing in km")
    c.set_defaults(func=cmd_crossover)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as err:
        print(f"detbb84: error: {err}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
