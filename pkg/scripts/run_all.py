"""Run every shipped config through the CLI and print one status line each.

Usage: python scripts/run_all.py [--out runs] [--threads T] [--only NAME ...]
Exit status is the worst CLI status seen (1 beats 2 beats 0).
"""

import argparse
import sys
import time
from pathlib import Path

from spinlab import cli

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--only", nargs="*", help="config stems to run")
    args = ap.parse_args(argv)
    worst = 0
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        if args.only and cfg.stem not in args.only:
            continue
        argv = ["run", str(cfg), "--out", str(Path(args.out) / cfg.stem)]
        if args.threads:
            argv += ["--threads", str(args.threads)]
        t0 = time.perf_counter()
        code = cli.main(argv)
        print(f"{cfg.stem}: exit {code} in {time.perf_counter() - t0:.1f} s", flush=True)
        worst = code if code == 1 or worst == 0 else worst
    return worst


if __name__ == "__main__":
    sys.exit(main())
