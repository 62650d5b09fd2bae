"""Command-line entry point for Monte Carlo experiments."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from .errors import FormatError, PreconditionError
from .harness import ALGORITHMS, ALIASES, ExperimentSpec, run_experiment
from .network import NetworkConfig
from .wmmse import SolverOptions

KEY_ALIASES = {
    "I": "num_aps", "K": "num_ues", "M": "tx_antennas", "N": "rx_antennas", "L": "cluster_size",
    "P": "power_budget", "alpha": "rate_weights", "snr": "snr_db", "seed": "rng_seed",
}
_INT = {"num_aps", "num_ues", "cluster_size", "rng_seed"}
_INT_LIST = {"tx_antennas", "rx_antennas"}
_FLOAT_LIST = {"power_budget", "rate_weights", "distance_range"}


def _number_list(text: str, cast):
    items = [cast(t) for t in text.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise FormatError(f"empty list {text!r}")
    return items


def parse_config(text: str) -> NetworkConfig:
    """``key = value`` lines mirroring :class:`NetworkConfig`; ``#`` starts a comment."""
    known = {f.name for f in fields(NetworkConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = KEY_ALIASES.get(key, key)
        if key not in known:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _INT:
                values[key] = int(value)
            elif key in _INT_LIST:
                items = _number_list(value, int)
                values[key] = items[0] if len(items) == 1 else tuple(items)
            elif key in _FLOAT_LIST:
                items = _number_list(value, float)
                values[key] = tuple(items) if key == "distance_range" or len(items) > 1 else items[0]
            elif key == "snr_db":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise FormatError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return NetworkConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cellfree-wsr",
                                description="Monte Carlo weighted-sum-rate experiments for cell-free MIMO.")
    p.add_argument("--config", metavar="PATH", help="key=value network configuration file")
    p.add_argument("--algo", action="append", choices=ALGORITHMS + tuple(ALIASES),
                   help="algorithm to run (repeatable; default ezf)")
    p.add_argument("--snr", metavar="LIST", help="comma-separated SNR values in dB")
    p.add_argument("--sweep-m", metavar="LIST", help="comma-separated per-AP antenna counts")
    p.add_argument("--sweep-k", metavar="LIST", help="comma-separated UE counts")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="base seed; trial t uses seed ^ t")
    p.add_argument("--max-iters", type=int, default=SolverOptions.max_iters)
    p.add_argument("--tol", type=float, default=SolverOptions.rel_tol, help="relative WSR stopping tolerance")
    p.add_argument("--dump-channels", metavar="PATH")
    p.add_argument("--load-channels", metavar="PATH")
    p.add_argument("--out", metavar="PATH", default="results.csv")
    p.add_argument("--trace", action="store_true", help="also write per-iteration rows")
    p.add_argument("--timing", action="store_true", help="fill wall_ms / sweep_ms (non-reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    base = NetworkConfig()
    if args.config:
        with open(args.config) as fh:
            base = parse_config(fh.read())
    return ExperimentSpec(
        base=base,
        snr_db=tuple(_number_list(args.snr, float)) if args.snr else (),
        tx_antennas=tuple(_number_list(args.sweep_m, int)) if args.sweep_m else (),
        num_ues=tuple(_number_list(args.sweep_k, int)) if args.sweep_k else (),
        trials=args.trials,
        algorithms=tuple(args.algo or ("ezf",)),
        base_seed=args.seed,
        options=SolverOptions(max_iters=args.max_iters, rel_tol=args.tol),
        out=args.out,
        trace=args.trace,
        timing=args.timing,
        load_channels=args.load_channels,
        dump_channels=args.dump_channels,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        spec = spec_from_args(args)
        result = run_experiment(spec)
    except (PreconditionError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for kind, path in result["paths"].items():
        print(f"{kind}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
