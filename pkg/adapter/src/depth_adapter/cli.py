"""Command line: `depth-adapter [--exchange DIR] [DIR] [--stub ...|--model ...]`.

The harness appends the exchange directory as the last positional argument;
--exchange exists for running the adapter by hand.
"""

import argparse
import sys

from .serve import AdapterConfig, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="depth-adapter")
    parser.add_argument("exchange_pos", nargs="?", help="exchange directory (positional)")
    parser.add_argument("--exchange", help="exchange directory")
    parser.add_argument("--stub", help="echo | constant:<value>")
    parser.add_argument("--model", help="entry point module:function")
    parser.add_argument("--weights", help="weights path handed to the model loader")
    parser.add_argument("--d-max", default="max", help="max | fixed:<v> | preserve")
    parser.add_argument("--poll-interval", type=float, default=0.02)
    args = parser.parse_args(argv)

    exchange = args.exchange or args.exchange_pos
    if not exchange:
        parser.error("an exchange directory is required (positional or --exchange)")
    try:
        config = AdapterConfig(
            exchange_dir=exchange,
            stub=args.stub,
            model=args.model,
            weights=args.weights,
            d_max_policy=args.d_max,
            poll_interval_s=args.poll_interval,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return serve(config)


if __name__ == "__main__":
    sys.exit(main())
