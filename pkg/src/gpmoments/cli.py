"""Command-line front end: ``gpmoments <subcommand> [--config FILE] ...``.

Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path as FsPath

from gpmoments import bounds as bnd
from gpmoments.errors import InvalidInputError, NumericFailureError
from gpmoments.estimators import estimate_path
from gpmoments.harness import ExperimentConfig, model_from_dict, rows_to_csv, run_experiment
from gpmoments.kernels import kernel_from_dict
from gpmoments.sampler import GridSpec, Origin, Path, SeedSpec

log = logging.getLogger("gpmoments")

OUTPUT_ENV = "GPMOMENTS_OUTPUT_DIR"
DEFAULT_BETAS = (0.1, 0.25, 0.5, 0.6, 0.625, 2 / 3, 0.7, 0.74)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInputError(message, field="arguments")


def _load_config(path, required=True) -> tuple[dict, FsPath | None]:
    if path is None:
        if required:
            raise InvalidInputError("--config is required", field="config")
        return {}, None
    path = FsPath(path)
    text = path.read_text(encoding="utf-8")  # OSError -> exit 3 with the path
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: {exc}", field="config") from None
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: expected a JSON object", field="config")
    return data, path.parent


def _out_dir(args) -> FsPath:
    out = FsPath(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid_from(spec) -> GridSpec:
    if not isinstance(spec, dict) or "delta" not in spec:
        raise InvalidInputError("needs 'delta' and 'n' or 'T'", field="grid")
    if "n" in spec:
        return GridSpec.uniform(int(spec["n"]), float(spec["delta"]))
    if "T" in spec:
        return GridSpec.horizon(float(spec["T"]), float(spec["delta"]))
    raise InvalidInputError("needs 'n' or 'T'", field="grid")


def cmd_simulate(args) -> int:
    cfg, base = _load_config(args.config)
    for key in ("model", "grid"):
        if key not in cfg:
            raise InvalidInputError("required", field=key)
    model = model_from_dict(cfg["model"], base)
    grid = _grid_from(cfg["grid"])
    seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    count = int(cfg.get("paths", 1))
    if count < 1:
        raise InvalidInputError("must be >= 1", field="paths")
    SeedSpec(seed, 0)
    values = model.simulate(grid, seed, range(count))
    out = _out_dir(args)
    origin = Origin(model.origin)
    for i in range(count):
        target = out / f"path_{i:05d}.csv"
        Path(grid, values[i], origin, SeedSpec(seed, i)).to_csv(target)
        log.info("wrote %s", target)
    return 0


def cmd_estimate(args) -> int:
    cfg, _ = _load_config(args.config, required=False)
    f_Z = cfg.get("f_Z")
    if f_Z is not None:
        f_Z = float(f_Z)
    if not args.paths:
        raise InvalidInputError("no input path files given", field="paths")
    rows = []
    for name in args.paths:
        rec = estimate_path(Path.from_csv(name), f_Z)
        rows.append({"file": str(name), **rec.__dict__})
    out = _out_dir(args)
    (out / "estimates.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    with open(out / "estimates.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def bounds_rows(cfg: dict, base_dir=None) -> list[dict]:
    """One row per (kernel, T): every bound term plus the predicted exponent."""
    kernels = cfg.get("kernels")
    if not isinstance(kernels, list) or not kernels:
        raise InvalidInputError("must be a nonempty list", field="kernels")
    horizons = cfg.get("T")
    if not isinstance(horizons, list) or not horizons:
        raise InvalidInputError("must be a nonempty list", field="T")
    delta, gamma = cfg.get("delta"), cfg.get("gamma")
    rows = []
    for spec in kernels:
        kernel = kernel_from_dict(spec, base_dir)
        for T in horizons:
            n = None
            if delta is not None:
                n = GridSpec.horizon(float(T), float(delta)).n
            rep = bnd.bound_report(kernel, T, n=n, delta=delta, gamma=gamma)
            rows.append(rep.to_dict())
    return rows


def cmd_bounds(args) -> int:
    cfg, base = _load_config(args.config)
    rows = bounds_rows(cfg, base)
    (_out_dir(args) / "bounds.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    return 0


def cmd_experiment(args) -> int:
    cfg, base = _load_config(args.config)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    config = ExperimentConfig.from_dict(cfg, base)
    report = run_experiment(config)
    for f in report.write(_out_dir(args)):
        log.info("wrote %s", f)
    return 0


def rates_rows(betas, hursts) -> list[dict]:
    rows = []
    for b in betas:
        tv = bnd.rate_exponent(b, "tv_hat")
        sz = bnd.rate_exponent(b, "sigma_normalized")
        rows.append({"parameter": "beta", "value": b,
                     "tv_hat_exponent": tv.exponent, "tv_hat_log_power": tv.log_power,
                     "sigma_normalized_exponent": sz.exponent,
                     "sigma_normalized_log_power": sz.log_power})
    for h in hursts:
        r = bnd.rate_exponent(h, "ou1")
        rows.append({"parameter": "hurst", "value": h, "ou1_exponent": r.exponent,
                     "ou1_log_power": r.log_power})
    return rows


def cmd_rates(args) -> int:
    cfg, _ = _load_config(args.config, required=False)
    betas = cfg.get("beta", list(DEFAULT_BETAS))
    hursts = cfg.get("hurst", [0.3, 0.5, 0.625, 0.7])
    text = rows_to_csv(rates_rows(betas, hursts))
    sys.stdout.write(text)
    if args.output_dir or os.environ.get(OUTPUT_ENV):
        (_out_dir(args) / "rates.csv").write_text(text, encoding="utf-8")
    return 0


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "bounds": cmd_bounds,
            "experiment": cmd_experiment, "rates": cmd_rates}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gpmoments", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ENV} or .)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name == "estimate":
            p.add_argument("paths", nargs="*", help="path CSV files (t,value)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid configuration value: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
