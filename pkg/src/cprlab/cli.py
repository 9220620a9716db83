"""Command line entry points.

Subcommands
-----------
ber-point    one Monte Carlo BER point at a fixed OSNR
sweep-fig2a  penalty grid over (phase, gain) imbalance at fixed skew
sweep-fig2b  penalty versus skew at fixed imbalance, rails on/off
selftest     run the invariant suite

Common flags: ``--config <path> --seed <u64> --out <dir> --scenario <name>
--jobs <n>``.  Any config key can also be overridden through the
environment (``CPRLAB_PLL_KP=0.05``).  Exit code 0 on success; on failure a
single machine-readable line ``cprlab-error: {...}`` goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import config_echo, load_config
from .harness import penalty_csv, points_csv, run_ber_point, sweep_fig2a, sweep_fig2b


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--seed", type=int, help="base seed (overrides config)")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--scenario", help="proposed | conventional | interleaved")
    sub.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def _load(args: argparse.Namespace):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    return load_config(args.config, overrides=overrides)


def _write(out_dir: str, points, rows, cfg) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "points.csv").write_text(points_csv(points), encoding="utf-8")
    if rows is not None:
        (out / "penalty.csv").write_text(penalty_csv(rows), encoding="utf-8")
    (out / "config_echo.txt").write_text(config_echo(cfg), encoding="utf-8")


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="cprlab", description=__doc__)
    subs = ap.add_subparsers(dest="cmd", required=True)

    p_pt = subs.add_parser("ber-point", help="single BER point")
    _common(p_pt)
    p_pt.add_argument("--osnr-db", type=float, required=True)

    p_2a = subs.add_parser("sweep-fig2a", help="imbalance-grid penalty sweep")
    _common(p_2a)

    p_2b = subs.add_parser("sweep-fig2b", help="skew penalty sweep")
    _common(p_2b)

    p_st = subs.add_parser("selftest", help="run the invariant suite")
    _common(p_st)

    args = ap.parse_args(argv)
    try:
        if args.cmd == "selftest":
            from .selftest import run_selftest

            return 0 if run_selftest() else 1

        cfg = _load(args)
        if args.cmd == "ber-point":
            pt = run_ber_point(cfg, args.osnr_db)
            _write(args.out, [pt], None, cfg)
            print(points_csv([pt]), end="")
            return 0
        if args.cmd == "sweep-fig2a":
            points, rows = sweep_fig2a(cfg, jobs=args.jobs)
        else:
            points, rows = sweep_fig2b(cfg, jobs=args.jobs)
        _write(args.out, points, rows, cfg)
        for r in rows:
            print(
                f"{r.scenario} phi={r.phi_e_deg:g} eps={r.eps_g:g} tau={r.tau_over_t:g} "
                f"penalty={r.penalty_db:.3f} dB {r.flag}"
            )
        return 0
    except BrokenPipeError:
        raise
    except Exception as exc:
        print(
            "cprlab-error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
