"""Command-line front end.

Verbs: ``validate``, ``gen``, ``estimate``, ``curve``, ``compare``.  Settings
come from an optional JSON config file with flag overrides.  With ``--out``
each run writes a directory holding ``config.json`` and the outputs
(``report.json``, ``curve.csv``, ``histogram.csv``).  Exit codes: 0 success,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import InputError, RadiusKitError
from .experiments import (
    ExperimentConfig,
    Recipe,
    curves_csv,
    dumps,
    generate_instance,
    run_comparison,
    run_curve,
    run_estimate,
)
from .model import ProblemInstance, validate

log = logging.getLogger("radius_kit")


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def _recipe_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["sec7", "fir2"], help="generator recipe")
    p.add_argument("--m", type=int, help="number of measurements")
    p.add_argument("--n", type=int, help="parameter dimension (sec7)")
    p.add_argument("--s", type=int, help="solution dimension (sec7)")
    p.add_argument("--rho", type=float, help="noise bound")


def _recipe(args, base: Recipe | None) -> Recipe:
    """Recipe from ``base`` (or the kind's defaults) with flag overrides; ``--seed`` seeds the data too."""
    kind = getattr(args, "kind", None)
    if kind is not None and (base is None or base.kind.value != kind):
        base = Recipe.fir2() if kind == "fir2" else Recipe.sec7()
    data = (base or Recipe()).to_dict()
    data.update({k: getattr(args, k) for k in ("m", "n", "s", "rho", "seed")
                 if getattr(args, k, None) is not None})
    return Recipe(**data)


def _config(args) -> ExperimentConfig:
    data = _read_json(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    if args.instance:
        data["instance"] = _read_json(args.instance)
        data.pop("recipe", None)
    overrides = {"epsilon": args.eps, "seed": args.seed, "n_samples": args.samples,
                 "trials": getattr(args, "trials", None), "steps": getattr(args, "steps", None),
                 "r_min": getattr(args, "r_min", None), "r_max": getattr(args, "r_max", None),
                 "iterations": args.iterations}
    if args.method:
        methods = [m.strip() for m in args.method.split(",") if m.strip()]
        data["method"] = methods[0]
        if len(methods) > 1:
            data["methods"] = methods
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig.from_dict(data)
    if cfg.instance is None:
        cfg.recipe = _recipe(args, cfg.recipe)
    return cfg


def _emit(args, files: dict[str, str], stdout_key: str) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)
    sys.stdout.write(files[stdout_key])


def cmd_validate(args) -> int:
    inst = ProblemInstance.from_dict(_read_json(args.instance))
    report = validate(inst)
    sys.stdout.write(dumps(report.to_dict()))
    return 0 if report.passed else 2


def cmd_gen(args) -> int:
    recipe = _recipe(args, None)
    gen = generate_instance(recipe)
    doc = gen.instance.to_dict()
    doc["x_true"] = gen.x_true.tolist()
    text = dumps(doc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_estimate(args) -> int:
    cfg = _config(args)
    report = run_estimate(cfg)
    _emit(args, {"config.json": dumps(cfg.to_dict()), "report.json": dumps(report.to_dict())}, "report.json")
    return 0


def cmd_curve(args) -> int:
    cfg = _config(args)
    curves = run_curve(cfg)
    report = {name: curve.to_dict() for name, curve in curves.items()}
    _emit(args, {"config.json": dumps(cfg.to_dict()), "report.json": dumps(report),
                 "curve.csv": curves_csv(curves)}, "curve.csv")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    summary = run_comparison(cfg)
    _emit(args, {"config.json": dumps(cfg.to_dict()), "report.json": dumps(summary.to_dict()),
                 "histogram.csv": summary.histogram_csv(cfg.bins)}, "report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radius-kit", description="Probabilistic radius of information toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance", help="instance JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen", help="generate an instance from a recipe")
    _recipe_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_gen)

    for verb, func, text in (("estimate", cmd_estimate, "probabilistic radius and estimates"),
                             ("curve", cmd_curve, "violation curve over a radius grid"),
                             ("compare", cmd_compare, "least-squares / worst-case / probabilistic study")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--instance", help="instance JSON (instead of a recipe)")
        _recipe_args(p)
        p.add_argument("--eps", type=float, help="accuracy level epsilon")
        p.add_argument("--seed", type=int)
        p.add_argument("--method", help="exact, spsa or sdp (curve accepts a comma list)")
        p.add_argument("--samples", type=int, help="oracle samples for final evaluations")
        p.add_argument("--iterations", type=int, help="SPSA iterations")
        p.add_argument("--out", help="run directory")
        if verb == "curve":
            p.add_argument("--steps", type=int)
            p.add_argument("--r-min", dest="r_min", type=float)
            p.add_argument("--r-max", dest="r_max", type=float)
        if verb == "compare":
            p.add_argument("--trials", type=int)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RadiusKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (2, 3) else 3


if __name__ == "__main__":
    sys.exit(main())
