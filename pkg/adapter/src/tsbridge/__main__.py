"""Command-line entry point: serve the demo forecaster over stdio."""

from __future__ import annotations

import argparse

from .demo import seasonal_naive_spec
from .serving import serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tsbridge",
        description="Serve a seasonal-naive demo forecaster over the stdio bridge.",
    )
    parser.add_argument("--period", type=int, default=1, help="season length (default 1)")
    parser.add_argument("--model-id", default="seasonal-naive", help="id declared in the handshake")
    parser.add_argument(
        "--max-batch", type=int, default=None, help="largest accepted batch_predict request"
    )
    args = parser.parse_args(argv)
    serve_stdio(seasonal_naive_spec(args.period, model_id=args.model_id), max_batch=args.max_batch)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
