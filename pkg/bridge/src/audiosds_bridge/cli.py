"""Bridge CLI: serve a checkpoint (or echo mode) over the wire protocol."""

from __future__ import annotations

import argparse
import logging
import sys

from .model import ModelError
from .server import build_server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="audiosds-bridge")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="run the bridge service")
    p.add_argument("--addr", default="127.0.0.1:9178", help="HOST:PORT to bind")
    p.add_argument("--checkpoint", help="prior checkpoint path")
    p.add_argument("--echo-mode", action="store_true",
                   help="serve the protocol-identity model (no checkpoint)")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if not args.echo_mode and not args.checkpoint:
        print("serve needs --checkpoint or --echo-mode", file=sys.stderr)
        return 2
    try:
        server = build_server(args.addr, checkpoint=args.checkpoint,
                              echo_mode=args.echo_mode, workers=args.workers)
    except (ModelError, OSError) as exc:
        print(f"cannot start bridge: {exc}", file=sys.stderr)
        return 1
    host, port = server.address
    print(f"audiosds-bridge listening on {host}:{port}", flush=True)
    server.serve_forever()
    return 0


if __name__ == "__main__":
    sys.exit(main())
