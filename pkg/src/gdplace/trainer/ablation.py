"""Paired comparison of model variants trained identically on one suite."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from gdplace.errors import ParameterError
from gdplace.model import ModelConfig
from gdplace.trainer.config import TrainConfig
from gdplace.trainer.loop import TrainResult, Workload, train

VARIANTS = ("full", "no_attention", "no_superposition")
ABLATION_COLUMNS = ("variant", "graph", "best_makespan", "greedy_makespan", "greedy_valid")


def variant_config(variant: str, base: ModelConfig) -> ModelConfig:
    """Model config for an ablation variant; every other field is shared."""
    if variant == "full":
        return base
    if variant == "no_attention":
        return replace(base, attention=False)
    if variant == "no_superposition":
        return replace(base, superposition=False)
    raise ParameterError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")


@dataclass
class AblationReport:
    rows: list[dict]
    results: dict[str, TrainResult]

    def median_best(self, variant: str) -> float:
        return statistics.median(r["best_makespan"] for r in self.rows if r["variant"] == variant)

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({**row, "greedy_valid": int(row["greedy_valid"])})


def ablate(variants: Sequence[str], suite: Sequence[Workload], config: TrainConfig,
           base: ModelConfig | None = None) -> AblationReport:
    """Train each variant on ``suite`` with the same seeds and budget."""
    if not suite:
        raise ParameterError("ablation suite is empty")
    if not variants:
        raise ParameterError("no variants requested")
    base = base or ModelConfig(init_seed=config.seed)
    rows, results = [], {}
    for variant in variants:
        result = train(suite, config, model_config=variant_config(variant, base))
        results[variant] = result
        for w in suite:
            final = result.greedy_final[w.name]
            rows.append({"variant": variant, "graph": w.name,
                         "best_makespan": result.best_makespan(w.name),
                         "greedy_makespan": final.makespan, "greedy_valid": final.valid})
    return AblationReport(rows, results)
