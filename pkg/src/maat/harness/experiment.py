"""End-to-end experiments: many sessions, aggregated metric curves, reports.

Outputs per run directory:

* ``runs.csv``   -- per-examinee per-step metric values
* ``curves.csv`` -- mean +/- standard error per (strategy, model, step, metric)
* ``report.json``-- config echo, aggregates, undefined-metric counts

Reruns with the same config are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..baselines import compatible
from ..cdm import DiagnosisModel, PretrainConfig, UpdateConfig, pretrain
from ..environment import (Record, default_seed, filter_dataset,
                           load_dataset, split_dataset)
from ..errors import ConfigurationError, UndefinedMetricError
from ..importance import (EmbeddingConfig, ImportanceTable, compute_importance,
                          train_embeddings)
from ..strategy import MaatStrategy, Strategy
from .metrics import auc_informativeness
from .session import run_session
from .synthetic import SyntheticDataset, SyntheticSpec, generate_synthetic

REFERENCE_FIT_EPOCHS = 200

PRETRAIN_DEFAULTS = {
    "irt": {"learning_rate": 0.5, "epochs": 60},
    "mirt": {"learning_rate": 0.5, "epochs": 60},
    "ncdm": {"learning_rate": 0.5, "epochs": 120},
}


@dataclass(frozen=True)
class ExperimentConfig:
    strategies: tuple[str, ...] = ("maat", "rand")
    models: tuple[str, ...] = ("irt",)
    n_steps: int = 50
    k_c: int | None = 10            # None = candidate set is the whole pool
    seed: int | None = None
    dataset_path: str | None = None
    synthetic: SyntheticSpec | None = None
    auc_steps: tuple[int, ...] = (5, 10, 15, 20, 25, 50)
    include_administered_in_auc: bool = False
    min_testing_records: int = 100
    max_testing_examinees: int | None = None
    filter_min_questions_per_concept: int = 0
    filter_min_records_per_question: int = 0
    filter_min_records_per_examinee: int = 0
    pretrain_overrides: dict = field(default_factory=dict)
    embedding_dim: int = 20
    embedding_epochs: int = 5
    importance_k_n: int = 10
    importance_gamma: float = 0.1
    update_learning_rate: float = 0.05
    update_epochs: int = 5

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")
        if self.k_c is not None and self.k_c < 1:
            raise ConfigurationError("k_c must be >= 1 (or None for the whole pool)")
        for strategy in self.strategies:
            for model in self.models:
                if not compatible(strategy, model):
                    raise ConfigurationError(
                        f"strategy {strategy!r} is incompatible with model {model!r}")

    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else default_seed()

    def update_config(self) -> UpdateConfig:
        return UpdateConfig(learning_rate=self.update_learning_rate,
                            epochs=self.update_epochs)

    def pretrain_config(self, kind: str) -> PretrainConfig:
        settings = dict(PRETRAIN_DEFAULTS.get(kind, {}))
        settings.update(self.pretrain_overrides.get(kind, {}))
        settings.setdefault("seed", self.resolved_seed())
        return PretrainConfig(**settings)


@dataclass(frozen=True)
class RunRow:
    strategy: str
    model: str
    examinee: int
    step: int
    metric: str
    value: float


@dataclass(frozen=True)
class CurveRow:
    strategy: str
    model: str
    step: int
    metric: str
    mean: float
    stderr: float
    n: int


@dataclass
class ExperimentReport:
    config: dict
    runs: list[RunRow]
    curves: list[CurveRow]
    undefined_auc: dict[str, int]
    n_testing_examinees: int

    def curve(self, strategy: str, model: str, metric: str) -> list[CurveRow]:
        rows = [c for c in self.curves
                if c.strategy == strategy and c.model == model and c.metric == metric]
        return sorted(rows, key=lambda c: c.step)

    def value_at(self, strategy: str, model: str, metric: str, step: int) -> float:
        for c in self.curve(strategy, model, metric):
            if c.step == step:
                return c.mean
        raise KeyError((strategy, model, metric, step))

    def write(self, out_dir: str | Path) -> Path:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "runs.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "model", "examinee", "step", "metric", "value"])
            for r in self.runs:
                writer.writerow([r.strategy, r.model, r.examinee, r.step,
                                 r.metric, repr(r.value)])
        with open(root / "curves.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "model", "step", "metric", "mean", "stderr", "n"])
            for c in self.curves:
                writer.writerow([c.strategy, c.model, c.step, c.metric,
                                 repr(c.mean), repr(c.stderr), c.n])
        summary = {
            "config": self.config,
            "n_testing_examinees": self.n_testing_examinees,
            "undefined_auc": self.undefined_auc,
            "curves": [dataclasses.asdict(c) for c in self.curves],
        }
        (root / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        return root


def build_strategy(name: str, graph, importance_table: ImportanceTable,
                   k_c: int | None, seed: int) -> Strategy:
    from ..baselines import (DOptStrategy, KliStrategy, MfiStrategy,
                             MkliStrategy, RandStrategy)
    if name == "maat":
        return MaatStrategy(graph, importance_table, k_c)
    factory = {"rand": lambda: RandStrategy(seed), "mfi": MfiStrategy,
               "kli": KliStrategy, "dopt": DOptStrategy, "mkli": MkliStrategy}
    if name not in factory:
        raise ConfigurationError(f"unknown strategy {name!r}")
    return factory[name]()


class _PreparedData:
    """Uniform view over synthetic and replayed real data."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        seed = config.resolved_seed()
        if config.dataset_path is not None:
            env = load_dataset(config.dataset_path)
            env = filter_dataset(
                env,
                min_questions_per_concept=config.filter_min_questions_per_concept,
                min_records_per_question=config.filter_min_records_per_question,
                min_records_per_examinee=config.filter_min_records_per_examinee)
            split = split_dataset(env, config.min_testing_records, seed,
                                  max_testing=config.max_testing_examinees)
            self.graph = env.graph
            self.historical_records = split.historical_records
            self.testing_examinees = sorted(split.testing_examinees)
            self._by_examinee: dict[int, dict[int, int]] = {}
            for r in split.testing_records:
                self._by_examinee.setdefault(r.examinee, {})[r.question] = r.answer
            self.synthetic: SyntheticDataset | None = None
        else:
            spec = config.synthetic or SyntheticSpec()
            if spec.seed is None:
                spec = dataclasses.replace(spec, seed=seed)
            ds = generate_synthetic(spec)
            self.graph = ds.graph
            self.historical_records = ds.historical_records
            testing = list(ds.testing_examinees)
            if config.max_testing_examinees is not None:
                testing = testing[:config.max_testing_examinees]
            self.testing_examinees = testing
            self.synthetic = ds

    def oracle(self, examinee: int):
        if self.synthetic is not None:
            return self.synthetic.answer_oracle(examinee)
        known = self._by_examinee.get(examinee, {})
        return lambda q: known[q]

    def selectable(self, examinee: int):
        if self.synthetic is not None:
            return None
        return frozenset(self._by_examinee.get(examinee, {}))

    def eval_records(self, examinee: int) -> list[Record]:
        if self.synthetic is not None:
            return self.synthetic.eval_records(examinee)
        known = self._by_examinee.get(examinee, {})
        return [Record(examinee, q, a) for q, a in sorted(known.items())]

    def reference_state(self, examinee: int, model: DiagnosisModel) -> np.ndarray | None:
        """Ground truth for the estimate-error metric.

        Synthetic data: the generator's ability, available only when the
        model's state has the same shape.  Real data: the state fitted on
        the examinee's entire record set.
        """
        if self.synthetic is not None:
            truth = self.synthetic.true_theta[examinee]
            if truth.shape[0] != model.state_dim:
                return None
            return truth
        records = self.eval_records(examinee)
        if not records:
            return None
        reference_cfg = UpdateConfig(learning_rate=self.config.update_learning_rate,
                                     epochs=REFERENCE_FIT_EPOCHS)
        return model.update(model.init_state(), records, reference_cfg)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    seed = config.resolved_seed()
    data = _PreparedData(config)
    graph = data.graph

    embedding = train_embeddings(
        data.historical_records, graph.n_questions,
        EmbeddingConfig(dim=config.embedding_dim, epochs=config.embedding_epochs,
                        seed=seed))
    importance_table = compute_importance(embedding, graph,
                                          k_n=config.importance_k_n,
                                          gamma=config.importance_gamma)

    models = {kind: pretrain(kind, data.historical_records, graph,
                             config.pretrain_config(kind))
              for kind in config.models}

    update_cfg = config.update_config()
    auc_grid = sorted({s for s in config.auc_steps if s <= config.n_steps}
                      | {config.n_steps})

    runs: list[RunRow] = []
    undefined_auc: dict[str, int] = {}

    for kind in config.models:
        model = models[kind]
        references = {e: data.reference_state(e, model) for e in data.testing_examinees}
        for strategy_name in config.strategies:
            if not compatible(strategy_name, kind):
                continue
            strategy = build_strategy(strategy_name, graph, importance_table,
                                      config.k_c, seed)
            undefined_key = f"{strategy_name}:{kind}"
            undefined_auc.setdefault(undefined_key, 0)
            for examinee in data.testing_examinees:
                result = run_session(strategy, model, examinee,
                                     data.oracle(examinee), config.n_steps,
                                     update_config=update_cfg,
                                     selectable=data.selectable(examinee))
                eval_records = data.eval_records(examinee)
                reference = references[examinee]

                covered: set[int] = set()
                for step_index, question in enumerate(result.questions, start=1):
                    covered |= graph.concepts_of(question)
                    runs.append(RunRow(strategy_name, kind, examinee, step_index,
                                       "cov", len(covered) / graph.n_concepts))
                if reference is not None:
                    for step_index, state in enumerate(result.states, start=1):
                        error = float(np.sum((state - reference) ** 2))
                        runs.append(RunRow(strategy_name, kind, examinee,
                                           step_index, "see", error))
                for step in auc_grid:
                    administered = set(result.questions[:step])
                    if config.include_administered_in_auc:
                        records = eval_records
                    else:
                        records = [r for r in eval_records
                                   if r.question not in administered]
                    try:
                        value = auc_informativeness(model, result.states[step - 1],
                                                    records)
                    except UndefinedMetricError:
                        undefined_auc[undefined_key] += 1
                        continue
                    runs.append(RunRow(strategy_name, kind, examinee, step,
                                       "auc", value))

    runs.sort(key=lambda r: (r.strategy, r.model, r.metric, r.step, r.examinee))
    curves = aggregate_runs(runs)
    return ExperimentReport(
        config=_config_dict(config),
        runs=runs,
        curves=curves,
        undefined_auc=undefined_auc,
        n_testing_examinees=len(data.testing_examinees),
    )


def aggregate_runs(runs: Sequence[RunRow]) -> list[CurveRow]:
    """Mean and standard error per (strategy, model, step, metric) group."""
    groups: dict[tuple, list[tuple[int, float]]] = {}
    for r in runs:
        groups.setdefault((r.strategy, r.model, r.step, r.metric), []).append(
            (r.examinee, r.value))
    curves = []
    for (strategy, model, step, metric), pairs in sorted(groups.items()):
        values = np.array([v for _, v in sorted(pairs)], dtype=np.float64)
        n = len(values)
        mean = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        curves.append(CurveRow(strategy, model, step, metric, mean, stderr, n))
    curves.sort(key=lambda c: (c.strategy, c.model, c.metric, c.step))
    return curves


def _config_dict(config: ExperimentConfig) -> dict:
    raw = dataclasses.asdict(config)
    if config.synthetic is not None:
        raw["synthetic"] = dataclasses.asdict(config.synthetic)
    return raw


def synthetic_spec_from_dict(raw: dict) -> SyntheticSpec:
    known = {f.name for f in dataclasses.fields(SyntheticSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown synthetic spec keys: {sorted(unknown)}")
    if "concepts_per_question" in raw:
        raw = dict(raw, concepts_per_question=tuple(raw["concepts_per_question"]))
    if "a_clamp" in raw:
        raw = dict(raw, a_clamp=tuple(raw["a_clamp"]))
    return SyntheticSpec(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from a parsed TOML table (`k_c = "all"` means the whole pool)."""
    raw = dict(raw)
    raw.pop("out", None)
    if "dataset" in raw:
        raw["dataset_path"] = raw.pop("dataset")
    if raw.get("k_c") == "all":
        raw["k_c"] = None
    if "synthetic" in raw and raw["synthetic"] is not None:
        raw["synthetic"] = synthetic_spec_from_dict(raw["synthetic"])
    if "pretrain" in raw:
        raw["pretrain_overrides"] = raw.pop("pretrain")
    for key in ("strategies", "models", "auc_steps"):
        if key in raw:
            raw[key] = tuple(raw[key])
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown experiment config keys: {sorted(unknown)}")
    return ExperimentConfig(**raw)


def load_experiment_config(path: str | Path) -> tuple[ExperimentConfig, str | None]:
    """Parse an experiment TOML file; returns (config, out_dir from the file)."""
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    out = raw.get("out")
    return config_from_dict(raw), out
