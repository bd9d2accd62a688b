"""Experiment orchestration: pipeline runs, sweeps, and report assembly.

Every command resolves an ExperimentConfig, executes one or more pipelines
per seed over the same dataset, evaluates voted predictions on the test
split, and writes a report bundle. All randomness is derived from the run
seeds, so a command is reproducible from its emitted config echo alone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import report as report_mod
from .augment import (
    EnsembleConfig,
    SyntheticPool,
    build_pool,
    default_classifier_factory,
    predict_labels,
    train_balanced_bagging,
    train_class_weighting,
    train_dare,
    train_gold_only,
)
from .classifier import TrainConfig, DEFAULT_FEATURE_DIM
from .corpus import Dataset, load_dataset, split_dev, subsample_positives
from .generator import BuiltinGenerator, GeneratorParams
from .metrics import EvalResult, aggregate_runs, evaluate, mcnemar
from .protocol import ExternalGeneratorSession
from .util import derive_seed

log = logging.getLogger(__name__)

PIPELINES = ("dare", "balanced_bagging", "class_weighting", "gold_only")
PIPELINE_DEFAULT_MEMBERS = {
    "dare": 20,
    "balanced_bagging": 10,
    "class_weighting": 10,
    "gold_only": 1,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    pipelines: tuple[str, ...] = ("dare",)
    generator: str = "builtin"  # "builtin" or "external"
    generator_cmd: str | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "reports"
    n_members: int | None = None  # None -> per-pipeline default
    ratio: float = 1.0
    threshold_policy: str = "per-member"
    pool_multiplier: float = 5.0
    temperature: float = 1.0
    top_k: int = 5
    max_tokens: int = 100
    min_tokens: int = 8
    order: int = 3
    alpha: float = 0.1
    mix_weight: float = 0.7
    epochs: int = 5
    learning_rate: float = 0.1
    feature_dim: int = DEFAULT_FEATURE_DIM
    dev_fraction: float = 0.1
    dev_seed: int = 13
    base_corpus: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "pipelines", tuple(self.pipelines))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.pipelines:
            raise ConfigError("at least one pipeline is required")
        for pipeline in self.pipelines:
            if pipeline not in PIPELINES:
                raise ConfigError(f"unknown pipeline {pipeline!r} (choose from {PIPELINES})")
        if len(set(self.pipelines)) != len(self.pipelines):
            raise ConfigError("pipelines must be distinct")
        if self.generator not in ("builtin", "external"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.generator == "external" and not self.generator_cmd:
            raise ConfigError("generator 'external' needs generator_cmd")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pipelines"] = list(self.pipelines)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def members_for(self, pipeline: str) -> int:
        return self.n_members if self.n_members is not None else PIPELINE_DEFAULT_MEMBERS[pipeline]

    def generator_params(self, seed: int) -> GeneratorParams:
        return GeneratorParams(
            temperature=self.temperature,
            top_k=self.top_k,
            max_tokens=self.max_tokens,
            min_tokens=self.min_tokens,
            seed=seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate, feature_dim=self.feature_dim
        )


def load_config_file(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def ensure_dev(dataset: Dataset, config: ExperimentConfig) -> Dataset:
    """Carve a dev split off train when the dataset does not ship one."""
    if dataset.dev:
        return dataset
    train, dev = split_dev(dataset.train, config.dev_fraction, config.dev_seed)
    log.info("no dev split; carved %d instances off train (seed %d)", len(dev), config.dev_seed)
    return Dataset(schema=dataset.schema, train=train, dev=dev, test=dataset.test)


def read_token_corpus(path: str | Path) -> list[list[str]]:
    """Read an in-domain corpus file: one JSON array of tokens per line."""
    sequences = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            seq = json.loads(line)
            if not isinstance(seq, list) or not all(isinstance(t, str) for t in seq):
                raise ConfigError(f"{path}:{lineno}: expected a JSON array of token strings")
            sequences.append(seq)
    if not sequences:
        raise ConfigError(f"base corpus {path} is empty")
    return sequences


def base_corpus_for(dataset: Dataset, config: ExperimentConfig) -> list[list[str]]:
    """The first-stage fitting corpus: an explicit file, else the train text."""
    if config.base_corpus:
        return read_token_corpus(config.base_corpus)
    return [list(inst.tokens) for inst in dataset.train]


@dataclass
class RunResult:
    pipeline: str
    seed: int
    result: EvalResult
    predictions: list[str]
    pred_ids: list[str]
    pool_digest: str | None
    member_seeds: list[dict]
    synth_rejected: dict[str, int] = field(default_factory=dict)

    def report_entry(self) -> dict:
        return {
            "seed": self.seed,
            "metrics": self.result.to_dict(),
            "pool_digest": self.pool_digest,
            "member_seeds": self.member_seeds,
            "synth_rejected": self.synth_rejected,
        }


def _train_ensemble(pipeline, dataset, pool, ens_config, classifier_factory):
    if pipeline == "dare":
        return train_dare(dataset, pool, ens_config, classifier_factory)
    if pipeline == "balanced_bagging":
        return train_balanced_bagging(dataset, ens_config, classifier_factory)
    if pipeline == "class_weighting":
        return train_class_weighting(dataset, ens_config, classifier_factory)
    if pipeline == "gold_only":
        return train_gold_only(dataset, ens_config, classifier_factory)
    raise ConfigError(f"unknown pipeline {pipeline!r}")


def run_pipeline_once(
    dataset: Dataset,
    pipeline: str,
    config: ExperimentConfig,
    run_seed: int,
    pool: SyntheticPool | None = None,
    vanilla_base: bool = False,
) -> RunResult:
    """Execute one pipeline for one seed on an already-prepared dataset."""
    classifier_factory = default_classifier_factory(config.train_config())
    ens_config = EnsembleConfig(
        n_members=config.members_for(pipeline),
        ratio=config.ratio,
        seed=derive_seed(run_seed, pipeline, "ensemble"),
        threshold_policy=config.threshold_policy,
    )
    rejected: dict[str, int] = {}
    if pipeline == "dare" and pool is None:
        pool = build_run_pool(dataset, config, run_seed, vanilla_base=vanilla_base)
    if pipeline == "dare":
        rejected = dict(pool.rejected)
    ensemble = _train_ensemble(pipeline, dataset, pool, ens_config, classifier_factory)
    predictions = predict_labels(ensemble, dataset.test)
    gold = [inst.label for inst in dataset.test]
    result = evaluate(predictions, gold, dataset.schema)
    member_seeds = [
        {"subsample_seed": m.info.subsample_seed, "train_seed": m.info.train_seed}
        for m in ensemble.members
    ]
    log.info("%s seed=%d micro-F1 %.4f", pipeline, run_seed, result.micro_f1)
    return RunResult(
        pipeline=pipeline,
        seed=run_seed,
        result=result,
        predictions=predictions,
        pred_ids=[inst.id for inst in dataset.test],
        pool_digest=ensemble.pool_digest,
        member_seeds=member_seeds,
        synth_rejected=rejected,
    )


def build_run_pool(
    dataset: Dataset,
    config: ExperimentConfig,
    run_seed: int,
    vanilla_base: bool = False,
) -> SyntheticPool:
    """Build the synthetic pool for one run seed with the configured backend.

    External generator sessions live exactly as long as the pool build; the
    trained pool is all that later stages need.
    """
    params = config.generator_params(derive_seed(run_seed, "generator"))

    if config.generator == "external":
        with ExternalGeneratorSession(config.generator_cmd) as session:
            session.fit_base(base_corpus_for(dataset, config))
            return build_pool(dataset, lambda: session, params, pool_multiplier=config.pool_multiplier)

    def factory():
        backend = BuiltinGenerator(
            order=config.order, alpha=config.alpha, mix_weight=config.mix_weight
        )
        if not vanilla_base:
            backend.fit_base(base_corpus_for(dataset, config))
        return backend

    return build_pool(dataset, factory, params, pool_multiplier=config.pool_multiplier)


def _aggregate(results: list[RunResult]) -> dict:
    return aggregate_runs([r.result for r in results]).to_dict()


def _mcnemar_entries(by_pipeline: dict[str, list[RunResult]], gold: list[str]) -> list[dict]:
    """Pairwise McNemar over voted outputs, matched seed by seed plus pooled."""
    entries = []
    names = sorted(by_pipeline)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            runs_a = {r.seed: r for r in by_pipeline[a]}
            runs_b = {r.seed: r for r in by_pipeline[b]}
            pooled_a: list[str] = []
            pooled_b: list[str] = []
            pooled_gold: list[str] = []
            for seed in sorted(set(runs_a) & set(runs_b)):
                preds_a = runs_a[seed].predictions
                preds_b = runs_b[seed].predictions
                entries.append(
                    {
                        "pipeline_a": a,
                        "pipeline_b": b,
                        "scope": f"seed {seed}",
                        "result": mcnemar(preds_a, preds_b, gold).to_dict(),
                    }
                )
                pooled_a.extend(preds_a)
                pooled_b.extend(preds_b)
                pooled_gold.extend(gold)
            entries.append(
                {
                    "pipeline_a": a,
                    "pipeline_b": b,
                    "scope": "all seeds",
                    "result": mcnemar(pooled_a, pooled_b, pooled_gold).to_dict(),
                }
            )
    return entries


def _write_predictions(outdir: Path, results: list[RunResult]) -> None:
    for run in results:
        run_dir = outdir / "runs" / run.pipeline / f"seed_{run.seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        with (run_dir / "predictions.jsonl").open("w", encoding="utf-8") as fh:
            for inst_id, label in zip(run.pred_ids, run.predictions):
                fh.write(json.dumps({"id": inst_id, "label": label}) + "\n")
        report_mod.write_json(run_dir / "metrics.json", run.report_entry())


def cmd_run(config: ExperimentConfig, dataset: Dataset | None = None) -> dict:
    """Run the configured pipelines over all seeds and write the report bundle."""
    if dataset is None:
        dataset = load_dataset(config.dataset)
    dataset = ensure_dev(dataset, config)
    outdir = Path(config.output_dir)

    by_pipeline: dict[str, list[RunResult]] = {}
    for pipeline in config.pipelines:
        results = [run_pipeline_once(dataset, pipeline, config, seed) for seed in config.seeds]
        by_pipeline[pipeline] = results

    gold = [inst.label for inst in dataset.test]
    report = {
        "command": "run",
        "config": config.to_dict(),
        "pipelines": {
            pipeline: {
                "per_seed": [r.report_entry() for r in results],
                "aggregate": _aggregate(results),
            }
            for pipeline, results in by_pipeline.items()
        },
    }
    if len(by_pipeline) > 1:
        report["mcnemar"] = _mcnemar_entries(by_pipeline, gold)

    all_results = [r for results in by_pipeline.values() for r in results]
    _write_predictions(outdir, all_results)
    report_mod.write_run_bundle(outdir, report)
    log.info("report written to %s", outdir / "report.json")
    return report


def cmd_imbalance_curve(
    config: ExperimentConfig, positive_counts: list[int | str], dataset: Dataset | None = None
) -> dict:
    """Sweep the number of gold positives; run augmentation vs balanced bagging."""
    if dataset is None:
        dataset = load_dataset(config.dataset)
    dataset = ensure_dev(dataset, config)
    null = dataset.schema.null_label
    available = sum(1 for inst in dataset.train if inst.label != null)
    counts: list[int] = []
    for c in positive_counts:
        counts.append(available if c == "all" else int(c))
    if counts != sorted(counts):
        raise ConfigError(f"positive counts must be ascending, got {counts}")
    if any(c < 1 or c > available for c in counts):
        raise ConfigError(f"positive counts must be in [1, {available}], got {counts}")

    methods = ("dare", "balanced_bagging")
    series: dict[str, list[float]] = {m: [] for m in methods}
    rows = []
    for count in counts:
        sub = subsample_positives(dataset, count, seed=derive_seed(config.dev_seed, "subsample", count))
        row: dict = {"positives": count}
        for method in methods:
            results = [run_pipeline_once(sub, method, config, seed) for seed in config.seeds]
            agg = _aggregate(results)
            series[method].append(agg["mean"]["micro_f1"])
            row[method] = {
                "per_seed": [r.report_entry() for r in results],
                "aggregate": agg,
            }
        rows.append(row)

    report = {
        "command": "imbalance-curve",
        "config": config.to_dict(),
        "positive_counts": counts,
        "rows": rows,
        "mean_micro_f1": series,
    }
    outdir = Path(config.output_dir)
    report_mod.write_sweep_bundle(
        outdir, report, "positives", counts, series, "imbalance_curve.png"
    )
    log.info("imbalance curve written to %s", outdir / "report.json")
    return report


def cmd_ratio_study(
    config: ExperimentConfig, ratios: list[float], dataset: Dataset | None = None
) -> dict:
    """Sweep the synthetic-to-gold ratio against per-seed fixed pools.

    Balanced bagging ignores the ratio, so its row is computed once and
    repeated across the sweep (exactly constant by construction).
    """
    if any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be >= 0, got {ratios}")
    if dataset is None:
        dataset = load_dataset(config.dataset)
    dataset = ensure_dev(dataset, config)

    pools = {seed: build_run_pool(dataset, config, seed) for seed in config.seeds}

    bb_results = [run_pipeline_once(dataset, "balanced_bagging", config, seed) for seed in config.seeds]
    bb_agg = _aggregate(bb_results)

    rows = []
    dare_series: list[float] = []
    for ratio in ratios:
        ratio_config = replace(config, ratio=ratio)
        results = [
            run_pipeline_once(dataset, "dare", ratio_config, seed, pool=pools[seed])
            for seed in config.seeds
        ]
        agg = _aggregate(results)
        dare_series.append(agg["mean"]["micro_f1"])
        rows.append(
            {
                "ratio": ratio,
                "dare": {"per_seed": [r.report_entry() for r in results], "aggregate": agg},
            }
        )

    series = {
        "dare": dare_series,
        "balanced_bagging": [bb_agg["mean"]["micro_f1"]] * len(ratios),
    }
    report = {
        "command": "ratio-study",
        "config": config.to_dict(),
        "ratios": ratios,
        "rows": rows,
        "balanced_bagging": {
            "per_seed": [r.report_entry() for r in bb_results],
            "aggregate": bb_agg,
        },
        "mean_micro_f1": series,
    }
    outdir = Path(config.output_dir)
    report_mod.write_sweep_bundle(outdir, report, "ratio", ratios, series, "ratio_study.png")
    log.info("ratio study written to %s", outdir / "report.json")
    return report


def cmd_generator_study(config: ExperimentConfig, dataset: Dataset | None = None) -> dict:
    """Augmentation with an in-domain fitted base vs an unfitted (vanilla) base."""
    if not config.base_corpus:
        raise ConfigError("generator-study needs base_corpus (an in-domain token corpus file)")
    if config.generator != "builtin":
        raise ConfigError("generator-study compares base fits of the builtin generator")
    if dataset is None:
        dataset = load_dataset(config.dataset)
    dataset = ensure_dev(dataset, config)

    arms = {}
    for arm, vanilla in (("vanilla_base", True), ("adapted_base", False)):
        results = [
            run_pipeline_once(dataset, "dare", config, seed, vanilla_base=vanilla)
            for seed in config.seeds
        ]
        arms[arm] = {
            "per_seed": [r.report_entry() for r in results],
            "aggregate": _aggregate(results),
        }

    report = {
        "command": "generator-study",
        "config": config.to_dict(),
        "pipelines": arms,
    }
    outdir = Path(config.output_dir)
    report_mod.write_run_bundle(outdir, report)
    log.info("generator study written to %s", outdir / "report.json")
    return report


def cmd_generate(config: ExperimentConfig, dataset: Dataset | None = None) -> dict:
    """Build one synthetic pool (no training) and write it out."""
    if dataset is None:
        dataset = load_dataset(config.dataset)
    dataset = ensure_dev(dataset, config)
    pool = build_run_pool(dataset, config, config.seeds[0])
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "pool.jsonl").open("w", encoding="utf-8") as fh:
        for label in dataset.schema.relation_types:
            for inst in pool.per_class.get(label, []):
                fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")
    manifest = {
        "config": config.to_dict(),
        "generator_id": pool.generator_id,
        "sizes": {label: len(v) for label, v in pool.per_class.items()},
        "rejected": pool.rejected,
        "digest": pool.digest(),
    }
    report_mod.write_json(outdir / "pool.json", manifest)
    log.info("pool of %d instances written to %s", pool.size(), outdir / "pool.jsonl")
    return manifest
