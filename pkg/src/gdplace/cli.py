"""Command-line interface.

Every artifact-producing command writes a ``manifest.json`` next to its
outputs recording the argv, configuration, seeds, input digests, tool
version, output paths and wall-clock time.

Environment:
    GDPLACE_OUT_DIR   default output directory (otherwise ``./runs``)
    GDPLACE_THREADS   thread cap for the numeric backend
"""

from __future__ import annotations

import os
import sys

if os.environ.get("GDPLACE_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["GDPLACE_THREADS"])

import argparse
import csv
import hashlib
import json
import math
import time
from pathlib import Path

from gdplace import __version__
from gdplace.baselines import METHODS, PlacerSpec, run_placer
from gdplace.errors import (
    CheckpointError,
    ContractError,
    GdpError,
    ParameterError,
    ParseError,
    TrainingError,
)
from gdplace.graph import FAMILIES, from_json, gen_family, to_json
from gdplace.model import ModelConfig
from gdplace.simulator import simulate, topology_from_json, topology_to_dict
from gdplace.trainer import (
    VARIANTS,
    TrainConfig,
    Workload,
    ablate,
    finetune,
    train,
    zeroshot,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_CONTRACT = 4
EXIT_TRAINING = 5
EXIT_CHECKPOINT = 6

CONFIG_KEYS = {"train", "model", "workloads", "suite", "checkpoint", "steps", "variants"}


class UsageError(GdpError):
    pass


def _out_dir(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get("GDPLACE_OUT_DIR", "runs")) / default_name


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_default(x):
    if isinstance(x, float) and math.isinf(x):
        return None
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_finite(data), indent=1, sort_keys=True, default=_json_default) + "\n")


def _finite(data):
    """Replace infinities with None so the JSON stays standard."""
    if isinstance(data, float) and not math.isfinite(data):
        return None
    if isinstance(data, dict):
        return {k: _finite(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [_finite(v) for v in data]
    return data


def write_manifest(path: Path, command: str, argv, config, seeds, inputs, outputs,
                   started: float) -> None:
    _write_json(path, {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): _digest(Path(p)) for p in inputs},
        "version": __version__,
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.perf_counter() - started, 3),
    })


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from None


def _load_graph(path: str):
    try:
        return from_json(_read_text(path))
    except ParseError as exc:
        raise ParseError(str(exc), path) from None


def _load_topology(path: str):
    try:
        return topology_from_json(_read_text(path))
    except ParseError as exc:
        raise ParseError(str(exc), path) from None


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _extra_params(extra: list[str]) -> dict:
    """Turn ``--key value`` pairs left over by argparse into generator params."""
    params, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra) and not extra[i + 1].startswith("--"):
            val = extra[i + 1]
            i += 2
        else:
            val, i = "true", i + 1
        params[key] = _coerce(val)
    return params


# -- experiment config ---------------------------------------------------------

def load_experiment(path: str) -> tuple[dict, list[Path]]:
    """Read and validate an experiment config, listing every schema problem at once."""
    base = Path(path).parent
    try:
        data = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg} (line {exc.lineno})", path) from None
    if not isinstance(data, dict):
        raise ParseError("experiment config must be a JSON object", path)
    problems = [f"$.{k}: unknown key" for k in sorted(set(data) - CONFIG_KEYS)]
    if "workloads" not in data and "suite" not in data:
        problems.append("$: one of 'workloads' or 'suite' is required")
    if "suite" in data and data["suite"] != "desk":
        problems.append("$.suite: only 'desk' is available")
    for key in ("train", "model"):
        if key in data and not isinstance(data[key], dict):
            problems.append(f"$.{key}: must be an object")
    for i, w in enumerate(data.get("workloads", []) or []):
        if not isinstance(w, dict):
            problems.append(f"$.workloads[{i}]: must be an object")
            continue
        for req in ("name", "graph", "topology"):
            if not isinstance(w.get(req), str):
                problems.append(f"$.workloads[{i}].{req}: string required")
    if "steps" in data and (not isinstance(data["steps"], int) or data["steps"] < 0):
        problems.append("$.steps: non-negative integer required")
    if problems:
        raise ParseError("; ".join(problems), path)

    inputs = [Path(path)]
    for w in data.get("workloads", []) or []:
        for key in ("graph", "topology"):
            p = Path(w[key])
            w[key] = str(p if p.is_absolute() else base / p)
            inputs.append(Path(w[key]))
    if "checkpoint" in data:
        p = Path(data["checkpoint"])
        data["checkpoint"] = str(p if p.is_absolute() else base / p)
    try:
        data["train"] = TrainConfig.from_dict(data.get("train", {})).to_dict()
        data["model"] = ModelConfig.from_dict(data.get("model", {})).to_dict()
    except (TypeError, ParameterError) as exc:
        raise ParseError(str(exc), path) from None
    return data, inputs


def _workloads(exp: dict) -> list[Workload]:
    if exp.get("suite") == "desk":
        from gdplace.suite import desk_suite
        return desk_suite()
    return [Workload(w["name"], _load_graph(w["graph"]), _load_topology(w["topology"]))
            for w in exp["workloads"]]


def _summaries(result, workloads) -> dict:
    from gdplace.suite import baseline_makespans
    out = {}
    for w in workloads:
        best = result.best[w.name]
        out[w.name] = {
            "gdp": best.makespan,
            "greedy_start": result.greedy_start[w.name].makespan,
            "greedy_final": result.greedy_final[w.name].makespan,
            "placement": best.placement.to_list() if best.placement else None,
            "baselines": baseline_makespans(w),
        }
    return out


def _save_run(out: Path, result, workloads, exp, command, argv, inputs, started) -> None:
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    result.model.save(ckpt)
    result.write_csv(out / "curves.csv")
    _write_json(out / "summary.json", _summaries(result, workloads))
    outputs = [ckpt, ckpt.with_suffix(".json"), out / "curves.csv", out / "summary.json"]
    write_manifest(out / "manifest.json", command, argv, exp, {"train": result.config.seed,
                   "model_init": result.model.config.init_seed}, inputs, outputs, started)
    for w in workloads:
        print(f"{w.name}: best makespan {result.best[w.name].makespan:.6g}")


# -- commands ------------------------------------------------------------------

def cmd_gen(args, extra, argv) -> int:
    started = time.perf_counter()
    if args.family not in FAMILIES:
        raise UsageError(f"unknown family {args.family!r}; choose from {', '.join(FAMILIES)}")
    params = _extra_params(extra)
    graph = gen_family(args.family, params, args.seed)
    out = Path(args.out) if args.out else _out_dir(None, "graphs") / f"{graph.name}_s{args.seed}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(to_json(graph) + "\n")
    write_manifest(out.with_name(out.stem + ".manifest.json"), "gen", argv,
                   {"family": args.family, "params": params}, {"graph": args.seed}, [], [out],
                   started)
    print(f"wrote {out} ({graph.num_nodes} nodes, {len(graph.edges)} edges)")
    return EXIT_OK


def cmd_place(args, extra, argv) -> int:
    started = time.perf_counter()
    if extra:
        raise UsageError(f"unexpected arguments {' '.join(extra)}")
    graph = _load_graph(args.graph)
    topo = _load_topology(args.topology)
    inputs = [Path(args.graph), Path(args.topology)]
    if args.checkpoint:
        inputs.append(Path(args.checkpoint))
        placement, _ = zeroshot(args.checkpoint, Workload(Path(args.graph).stem, graph, topo))
        method = {"checkpoint": args.checkpoint}
    else:
        try:
            params = json.loads(args.params) if args.params else {}
        except json.JSONDecodeError as exc:
            raise UsageError(f"--params is not valid JSON: {exc.msg}") from None
        if not isinstance(params, dict):
            raise UsageError("--params must be a JSON object")
        spec = PlacerSpec(args.method, params, args.seed)
        placement = run_placer(spec, graph, topo)
        method = {"method": spec.method, "params": params, "seed": spec.seed}
    report = simulate(graph, placement, topo)
    out = _out_dir(args.out_dir, "place")
    _write_json(out / "placement.json", {"assignment": placement.to_list()})
    _write_json(out / "report.json", report.to_dict())
    write_manifest(out / "manifest.json", "place", argv,
                   {**method, "topology": topology_to_dict(topo)}, {"placer": args.seed},
                   inputs, [out / "placement.json", out / "report.json"], started)
    print(f"makespan {report.makespan:.6g}")
    print("peak memory " + " ".join(str(m) for m in report.per_device_peak_mem))
    print("valid" if report.valid else f"invalid ({report.violation})")
    return EXIT_OK


def _run_training(args, argv, command: str) -> int:
    started = time.perf_counter()
    exp, inputs = load_experiment(args.config)
    workloads = _workloads(exp)
    cfg = TrainConfig.from_dict(exp["train"])
    model_cfg = ModelConfig.from_dict(exp["model"])
    if command == "finetune":
        ckpt = args.checkpoint or exp.get("checkpoint")
        if not ckpt:
            raise UsageError("finetune needs --checkpoint or a 'checkpoint' config entry")
        steps = args.steps if args.steps is not None else exp.get("steps", cfg.updates)
        if len(workloads) != 1:
            raise UsageError("finetune takes exactly one target workload")
        inputs.append(Path(ckpt))
        exp = {**exp, "checkpoint": str(ckpt), "steps": steps}
        result = finetune(ckpt, workloads[0], steps, cfg.with_(mode="finetune"))
    else:
        if command == "train" and cfg.mode == "one" and len(workloads) != 1:
            raise UsageError("mode 'one' trains on exactly one workload; use mode 'batch'")
        result = train(workloads, cfg, model_config=model_cfg)
    _save_run(_out_dir(args.out_dir, command), result, workloads, exp, command, argv, inputs,
              started)
    return EXIT_OK


def cmd_train(args, extra, argv) -> int:
    return _run_training(args, argv, "train")


def cmd_pretrain(args, extra, argv) -> int:
    return _run_training(args, argv, "pretrain")


def cmd_finetune(args, extra, argv) -> int:
    return _run_training(args, argv, "finetune")


def cmd_ablate(args, extra, argv) -> int:
    started = time.perf_counter()
    exp, inputs = load_experiment(args.config)
    variants = args.variants or exp.get("variants") or list(VARIANTS)
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variants {unknown}; choose from {', '.join(VARIANTS)}")
    workloads = _workloads(exp)
    report = ablate(variants, workloads, TrainConfig.from_dict(exp["train"]),
                    ModelConfig.from_dict(exp["model"]))
    out = _out_dir(args.out_dir, "ablate")
    report.write_csv(out / "ablation.csv")
    medians = {v: report.median_best(v) for v in variants}
    _write_json(out / "medians.json", medians)
    write_manifest(out / "manifest.json", "ablate", argv, {**exp, "variants": variants},
                   {"train": exp["train"]["seed"]}, inputs,
                   [out / "ablation.csv", out / "medians.json"], started)
    for v in variants:
        print(f"{v}: median best makespan {medians[v]:.6g}")
    return EXIT_OK


REPORT_BASELINES = ("random", "topo_blocks", "min_cut")


def report_rows(run_dirs, baselines=REPORT_BASELINES) -> list[dict]:
    rows = []
    for run in run_dirs:
        path = Path(run) / "summary.json"
        try:
            summary = json.loads(_read_text(str(path)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", str(path)) from None
        for graph, entry in sorted(summary.items()):
            gdp = entry.get("gdp")
            row = {"run": str(run), "graph": graph, "gdp": gdp}
            for b in baselines:
                base = entry.get("baselines", {}).get(b)
                if base is None and b not in entry.get("baselines", {}):
                    raise ParseError(f"baseline {b!r} missing", f"{path}:$.{graph}.baselines")
                row[b] = base
                row[f"speedup_{b}"] = (base / gdp) if base is not None and gdp else None
            rows.append(row)
    return rows


def cmd_report(args, extra, argv) -> int:
    started = time.perf_counter()
    baselines = tuple(args.baselines.split(",")) if args.baselines else REPORT_BASELINES
    rows = report_rows(args.runs, baselines)
    out = Path(args.out) if args.out else _out_dir(None, "report") / "report.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    fields = ["run", "graph", "gdp", *baselines, *(f"speedup_{b}" for b in baselines)]
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    write_manifest(out.with_name(out.stem + ".manifest.json"), "report", argv,
                   {"baselines": list(baselines)}, {},
                   [Path(r) / "summary.json" for r in args.runs], [out], started)
    sys.stdout.write(out.read_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdplace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gdplace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic graph; extra --key value pairs are "
                                   "family parameters")
    p.add_argument("family")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("place", help="place a graph with a heuristic or a trained checkpoint")
    p.add_argument("graph")
    p.add_argument("topology")
    p.add_argument("--method", choices=METHODS, default="single_device")
    p.add_argument("--params", help="placer parameters as a JSON object")
    p.add_argument("--checkpoint", help="decode with a trained model instead of a heuristic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_place)

    for name, func, help_ in (("train", cmd_train, "train on one graph or a batch"),
                              ("pretrain", cmd_pretrain, "batch-train a model for transfer"),
                              ("finetune", cmd_finetune, "continue training on a target graph")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="experiment config JSON")
        p.add_argument("--out-dir")
        if name == "finetune":
            p.add_argument("--checkpoint")
            p.add_argument("--steps", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="train model variants identically and compare")
    p.add_argument("config")
    p.add_argument("--variants", nargs="+")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="speedup table over run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--baselines", help=f"comma-separated (default {','.join(REPORT_BASELINES)})")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if extra and args.command not in ("gen",):
        parser.print_usage(sys.stderr)
        print(f"gdplace: error: unrecognized arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, extra, argv)
    except (UsageError, ParameterError) as exc:
        print(f"gdplace: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"gdplace: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CheckpointError as exc:
        print(f"gdplace: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingError as exc:
        print(f"gdplace: training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ContractError, GdpError) as exc:
        print(f"gdplace: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
