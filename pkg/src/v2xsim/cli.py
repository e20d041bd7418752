"""Command-line entry point: run a density/radius sweep and write CSV results."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from v2xsim.scenario import ConfigError, config_from_mapping, load_config, parse_document
from v2xsim.sweep import sweep, write_outputs


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="v2x-sim",
        description="Simulate V2X beacon broadcasting with an adaptive, game-theoretic MAC.",
    )
    p.add_argument("--config", type=Path, help="key = value scenario file (defaults otherwise)")
    p.add_argument("--vehicles", type=_int_list, help="vehicle counts, e.g. 20,40,60,80")
    p.add_argument("--radius", type=_float_list, help="arena radii in metres, e.g. 250,500")
    p.add_argument("--seeds", type=_int_list, help="master seeds, e.g. 1,2,3,4,5")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--trace-mobility", action="store_true", help="dump vehicle trajectories")
    p.add_argument("--trace-mac", action="store_true", help="dump per-node MAC events")
    p.add_argument("--dump-pairs", action="store_true", help="dump per-pair delivery outcomes")
    p.add_argument("--no-interference", action="store_true",
                   help="diagnostic: ignore overlapping transmissions at receivers")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = load_config(args.config) if args.config else load_config()
        if args.overrides:
            base = config_from_mapping(parse_document("\n".join(args.overrides)), base)
        if args.no_interference:
            base = base.replace(interference=False)
    except (ConfigError, OSError) as exc:
        print(f"v2x-sim: config error: {exc}", file=sys.stderr)
        return 2

    counts = args.vehicles or [base.n_vehicles]
    radii = args.radius or [base.area_radius]
    seeds = args.seeds or [base.rng_seed]
    try:
        result = sweep(base, counts, radii, seeds, jobs=max(1, args.jobs),
                       trace_mobility=args.trace_mobility, trace_mac=args.trace_mac,
                       keep_pairs=args.dump_pairs)
    except (ConfigError, ValueError) as exc:
        print(f"v2x-sim: {exc}", file=sys.stderr)
        return 2
    write_outputs(result, args.out)

    for c in result.cells:
        flag = "" if c.ok else f"  FAILED {c.failed}/{c.runs}"
        print(f"R={c.radius:g} m  N={c.n_vehicles:3d}  BLR={c.blr_mean:.4%} (sd {c.blr_std:.4%})  "
              f"mean delay={c.delay_mean * 1e3:.3f} ms  F(0.35 s)={c.cdf_035:.3f}{flag}")
    return 1 if result.failed else 0


if __name__ == "__main__":
    sys.exit(main())
