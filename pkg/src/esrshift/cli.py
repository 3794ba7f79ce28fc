"""Command-line entry point: ``esrshift <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
3 file-system error. Configs are JSON; flags override config fields.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from importlib import resources
from pathlib import Path

from . import core_types, kmm, learners, pipeline, simulator
from .core_types import WINDOWS
from .errors import ConfigError, ConvergenceWarning, DimensionMismatch

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

DEFAULT_EXPERIMENT = "default_experiment.json"


class UsageError(Exception):
    """Bad input detected by the CLI itself (maps to exit code 2)."""


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def _load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(d, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return d


def bundled_experiment() -> dict:
    return json.loads(resources.files("esrshift.data").joinpath(DEFAULT_EXPERIMENT).read_text())


def _parse_windows(text: str | None) -> tuple:
    if text is None:
        return WINDOWS
    try:
        ws = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError("windows", f"not a comma-separated integer list: {text!r}") from None
    bad = [w for w in ws if w not in WINDOWS]
    if bad:
        raise ConfigError("windows", f"{bad} not in {list(WINDOWS)}")
    return ws


# commands ----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    d = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = simulator.DomainConfig.from_dict(d)
    windows = _parse_windows(args.windows)
    out = Path(args.out)
    events = simulator.simulate_events(cfg)
    (out / "events").mkdir(parents=True, exist_ok=True)
    for e in events:
        core_types.write_event(e, out / "events" / f"{e.event_id}.csv")
    for w in windows:
        ds = simulator.events_to_dataset(events, w, cfg.furnace_id)
        core_types.write_dataset(ds, out / f"dataset_{cfg.furnace_id}_{w}.csv")
    _say(args, f"wrote {len(events)} events and {len(windows)} datasets to {out}")
    return EXIT_OK


def _kmm_config(d: dict) -> kmm.KmmConfig:
    bad = set(d) - set(kmm.KmmConfig.__dataclass_fields__)
    if bad:
        raise ConfigError(sorted(bad)[0], "unknown kmm field")
    return kmm.KmmConfig(**d)


def cmd_weight(args) -> int:
    cfg = _kmm_config(_load_json(args.config)) if args.config else kmm.KmmConfig()
    if args.sigma is not None:
        cfg = kmm.KmmConfig(**{**cfg.to_dict(), "sigma": _sigma_arg(args.sigma)})
    source = core_types.read_dataset(args.source)
    target = core_types.read_dataset(args.target)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        wv = kmm.estimate_weights(source, target.features, cfg, seed=args.seed or 0)
    for w in caught:
        if issubclass(w.category, ConvergenceWarning):
            print(f"warning: {w.message}", file=sys.stderr)
    core_types.write_weights(wv, args.out)
    _say(args, f"wrote {len(wv)} weights (sigma={wv.sigma:.6g}) to {args.out}")
    return EXIT_OK


def _sigma_arg(text: str):
    if text in ("auto", "cv"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError("sigma", f"expected a number, 'auto' or 'cv', got {text!r}") from None


def _learner_params(kind: str, d: dict, seed: int):
    tree_d = d.pop("tree", {})
    if not isinstance(tree_d, dict):
        raise ConfigError("tree", "must be a JSON object")
    try:
        tree = learners.TreeParams(**tree_d)
        if kind == "tree":
            if d:
                raise ConfigError(sorted(d)[0], "unknown parameter for a single tree")
            return tree
        cls = learners.ForestParams if kind == "forest" else learners.BoostParams
        return cls(tree=tree, **{**d, "seed": seed})
    except TypeError as e:
        raise ConfigError("params", str(e)) from None


def cmd_train(args) -> int:
    d = _load_json(args.config) if args.config else {}
    kind = args.learner or d.pop("learner", "forest")
    d.pop("learner", None)
    if kind not in ("tree",) + learners.LEARNERS:
        raise ConfigError("learner", f"unknown learner {kind!r}")
    seed = args.seed if args.seed is not None else int(d.pop("seed", 0))
    d.pop("seed", None)
    params = _learner_params(kind, d, seed)
    ds = core_types.read_dataset(args.data)
    w = core_types.read_weights(args.weights) if args.weights else None
    if w is not None and len(w) != ds.n:
        raise DimensionMismatch(f"{ds.n} rows but {len(w)} weights")
    model = learners.fit_learner(kind, ds.features, ds.labels, w, seed=seed, params=params)
    Path(args.out).write_text(model.to_json())
    _say(args, f"wrote {kind} model with {len(model.trees)} trees to {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        model = learners.TrainedModel.from_json(Path(args.model).read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise UsageError(f"{args.model}: not a model file ({e})") from None
    ds = core_types.read_dataset(args.data)
    pred = learners.predict(model, ds.features)
    lines = ["index,prediction"] + [f"{i},{p!r}" for i, p in enumerate(pred.tolist())]
    Path(args.out).write_text("\n".join(lines) + "\n")
    _say(args, f"MAPE against file labels: {pipeline.mape(ds.labels, pred):.3f}%")
    return EXIT_OK


def load_experiment(d: dict, seed: int | None = None):
    unknown = set(d) - {"source", "target", "sweep"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown experiment field")
    source = simulator.DomainConfig.from_dict(d.get("source", {}))
    target = simulator.DomainConfig.from_dict(d.get("target", {"furnace_id": "B"}))
    sweep_d = dict(d.get("sweep", {}))
    if seed is not None:
        sweep_d["seed"] = seed
    return source, target, pipeline.SweepConfig.from_dict(sweep_d)


def write_tables(report: pipeline.EvaluationReport, out: Path) -> list:
    written = []
    learner_names = sorted({k[1] for k in report.cells})
    for furnace in report.furnaces():
        for kind in learner_names:
            stem = out / f"table_{furnace}_{kind}"
            Path(f"{stem}.txt").write_text(report.render_table(furnace, kind))
            Path(f"{stem}.csv").write_text(report.render_csv(furnace, kind))
            written.append(stem)
    return written


def cmd_sweep(args) -> int:
    d = _load_json(args.config) if args.config else bundled_experiment()
    source, target, sweep = load_experiment(d, args.seed)
    if args.windows:
        sweep = pipeline.SweepConfig.from_dict({**sweep.to_dict(), "windows": list(_parse_windows(args.windows))})
    progress = None if args.quiet else (lambda m: print(m, file=sys.stderr))
    # the whole run completes in memory before anything is written
    report = pipeline.run_adaptive(source, target, sweep, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    tables = write_tables(report, out)
    if not args.quiet:
        for stem in tables:
            print(Path(f"{stem}.txt").read_text())
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = pipeline.EvaluationReport.from_json(Path(args.input).read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise UsageError(f"{args.input}: not a report file ({e})") from None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_tables(report, out)
    learner_names = sorted({k[1] for k in report.cells})
    if not args.quiet:
        for furnace in report.furnaces():
            for kind in learner_names:
                print(report.render_table(furnace, kind))
    return EXIT_OK


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = argparse.ArgumentParser(prog="esrshift", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", parents=[common], help="simulate events and write datasets",
                       description="Simulate a furnace domain (DomainConfig JSON) and write event and dataset CSVs.")
    s.add_argument("--out", required=True, metavar="DIR", help="output directory")
    s.add_argument("--windows", metavar="LIST", help="comma-separated windows, default all")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("weight", parents=[common], help="estimate KMM importance weights",
                       description="KMM weights of source rows against target rows (KmmConfig JSON via --config).")
    s.add_argument("--source", required=True, metavar="CSV", help="source dataset CSV")
    s.add_argument("--target", required=True, metavar="CSV", help="target dataset CSV (labels ignored)")
    s.add_argument("--sigma", metavar="VALUE", help="kernel width: a number, 'auto' or 'cv'")
    s.add_argument("--out", required=True, metavar="CSV", help="weight CSV; a .json sidecar is written next to it")
    s.set_defaults(func=cmd_weight)

    s = sub.add_parser("train", parents=[common], help="train a (weighted) learner",
                       description="Fit a tree, forest or boosted model; parameters come from --config JSON.")
    s.add_argument("--data", required=True, metavar="CSV", help="training dataset CSV")
    s.add_argument("--weights", metavar="CSV", help="weight CSV from 'weight'")
    s.add_argument("--learner", choices=("tree",) + learners.LEARNERS, help="learner kind")
    s.add_argument("--out", required=True, metavar="JSON", help="model file")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="predict with a trained model",
                       description="Write predictions of a model for every row of a dataset CSV.")
    s.add_argument("--model", required=True, metavar="JSON", help="model file from 'train'")
    s.add_argument("--data", required=True, metavar="CSV", help="dataset CSV")
    s.add_argument("--out", required=True, metavar="CSV", help="prediction CSV")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("sweep", parents=[common], help="run the windowed evaluation sweep",
                       description="Run the with/without importance weighting sweep. Without --config the "
                       "bundled default experiment is used.")
    s.add_argument("--out", required=True, metavar="DIR", help="directory for report.json and tables")
    s.add_argument("--windows", metavar="LIST", help="comma-separated windows overriding the config")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", parents=[common], help="render tables from a report JSON",
                       description="Print (and optionally write) the tables of a saved report.")
    s.add_argument("--input", required=True, metavar="JSON", help="report.json from 'sweep'")
    s.add_argument("--out", metavar="DIR", help="directory for the rendered tables")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: config field '{e.field}': {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, DimensionMismatch) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # malformed input files and invalid data
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
