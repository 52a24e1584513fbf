"""Command-line entry point: ``spinlab run | list-models | validate``.

Exit status: 0 when every pass flag holds, 2 on a statistical failure,
1 on a configuration or resource error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import THREADS_ENV, config_echo, load_config, resolve_threads
from .density import DENSITIES, fisher_information, second_fisher
from .ensembles import DISORDER_FAMILIES, PRIOR_FAMILIES, DisorderSpec, PriorSpec
from .errors import SpinlabError
from .experiments import run_experiment

EXIT_PASS, EXIT_ERROR, EXIT_STAT_FAIL = 0, 1, 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def write_outputs(out_dir: Path, echo: dict, result) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config-echo.json").write_text(json.dumps(_jsonable(echo), indent=2, sort_keys=True) + "\n")
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(out_dir / "raw.csv", "w", newline="") as fh:
        fh.write(f"# generated {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_cell(v) for v in row])
    summary = dict(result.summary, passed=result.passed)
    (out_dir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    if seed != cfg.seed:
        cfg = replace(cfg, seed=seed)
    threads = resolve_threads(args.threads, cfg)
    out = Path(args.out or cfg.output or f"runs/{cfg.experiment}-seed{seed}")
    result = run_experiment(cfg, threads)
    write_outputs(out, config_echo(cfg, seed, threads, str(out)), result)
    status = "PASS" if result.passed else "FAIL"
    print(f"{cfg.experiment}: {status} (outputs in {out})")
    return EXIT_PASS if result.passed else EXIT_STAT_FAIL


def catalog() -> dict:
    out = {"disorder": [], "priors": [], "densities": []}
    for fam in DISORDER_FAMILIES:
        if fam == "custom-density":
            out["disorder"].append({"family": fam, "note": "unit-variance density from a table"})
            continue
        spec = DisorderSpec(fam)
        out["disorder"].append({"family": fam, "w_2": spec.w_2, "w_4": spec.w_4, "kappa_4": spec.kappa_4})
    for fam in PRIOR_FAMILIES:
        if fam == "bounded-custom":
            out["priors"].append({"family": fam, "note": "density on [-K, K], rescaled to unit variance"})
            continue
        pr = PriorSpec(fam)
        out["priors"].append({"family": fam, "m_4": pr.m_4, "m_8": pr.m_8,
                              "mu": {d: pr.mu(d) for d in range(0, 9, 2)}})
    for name, make in DENSITIES.items():
        d = make()
        out["densities"].append({"name": name, "F_p": fisher_information(d), "G_p": second_fisher(d),
                                 "tail": d.tail})
    return out


def cmd_list_models(args) -> int:
    cat = catalog()
    if args.json:
        print(json.dumps(_jsonable(cat), indent=2))
        return EXIT_PASS
    print("disorder families:")
    for row in cat["disorder"]:
        extra = row.get("note") or f"w_4={row['w_4']:.6g} kappa_4={row['kappa_4']:.6g} w_2={row['w_2']:g}"
        print(f"  {row['family']:<18} {extra}")
    print("priors:")
    for row in cat["priors"]:
        extra = row.get("note") or f"m_4={row['m_4']:.6g} m_8={row['m_8']:.6g}"
        print(f"  {row['family']:<18} {extra}")
    print("noise densities:")
    for row in cat["densities"]:
        print(f"  {row['name']:<18} F_p={row['F_p']:.10g} G_p={row['G_p']:.10g} tail={row['tail']}")
    return EXIT_PASS


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: valid {cfg.experiment} config")
    return EXIT_PASS


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1, keeping 2 for statistical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--threads", type=int, help=f"worker threads (default: config, then ${THREADS_ENV}, then 1)")
    run.add_argument("--out", help="output directory")
    run.set_defaults(func=cmd_run)
    lm = sub.add_parser("list-models", help="print registered families and their moments")
    lm.add_argument("--json", action="store_true")
    lm.set_defaults(func=cmd_list_models)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpinlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001  any crash still maps onto the exit contract
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
