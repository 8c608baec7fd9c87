import argparse
import logging
import os
import sys
import time

from . import __version__
from .model import DEFAULT_MODEL, ModelLoadError
from .service import DEFAULT_ENDPOINT, ServeConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segserve",
        description="Serve instance-segmentation requests over the graspvis wire protocol.",
        epilog="Each flag falls back to its SEGSERVE_* environment variable, "
               "then to the built-in default.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--endpoint", help=f"bind address (SEGSERVE_ENDPOINT, default {DEFAULT_ENDPOINT})")
    parser.add_argument("--model", help=f"model identifier (SEGSERVE_MODEL, default {DEFAULT_MODEL})")
    parser.add_argument("--threshold", type=float,
                        help="score floor in [0, 1] (SEGSERVE_THRESHOLD, default 0.5)")
    parser.add_argument("--device", help="cpu or cuda (SEGSERVE_DEVICE, default cpu)")
    return parser


def build_config(argv=None, env=os.environ) -> ServeConfig:
    """Resolve flags over environment variables over defaults."""
    args = build_parser().parse_args(argv)

    def pick(flag_value, env_key, default):
        if flag_value is not None:
            return flag_value
        if env_key in env:
            return env[env_key]
        return default

    threshold = pick(args.threshold, "SEGSERVE_THRESHOLD", 0.5)
    return ServeConfig(
        endpoint=pick(args.endpoint, "SEGSERVE_ENDPOINT", DEFAULT_ENDPOINT),
        model=pick(args.model, "SEGSERVE_MODEL", DEFAULT_MODEL),
        threshold=float(threshold),
        device=pick(args.device, "SEGSERVE_DEVICE", "cpu"),
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        config = build_config(argv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        server = serve(config)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        while server.running:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
