"""Augmentation pipelines: synthetic pools, ensembles, and majority voting.

The main path adapts a generator per relation type, fills a pool of filtered
synthetic instances, and trains an ensemble of classifiers on the full gold
data plus independently drawn pool subsets. Baselines for imbalanced data
(balanced bagging, class weighting, plain gold-only training) share the same
ensemble and voting machinery so comparisons isolate the augmentation effect.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from random import Random

from .classifier import (
    LinearTextClassifier,
    PredictionRule,
    TrainConfig,
    compute_class_weights,
    load_classifier,
    predict,
    save_classifier,
    train_classifier,
    tune_threshold,
)
from .corpus import Dataset, RelationInstance, RelationSchema, partition_by_class
from .generator import GenerationBudgetError, GeneratorParams, generate_filtered
from .util import content_digest, derive_seed, round_half_up

log = logging.getLogger(__name__)


class PoolBuildError(RuntimeError):
    """Pool construction failed for one or more classes."""

    def __init__(self, failures: dict[str, str]):
        lines = [f"{label}: {message}" for label, message in failures.items()]
        super().__init__("pool generation failed for some classes:\n  " + "\n  ".join(lines))
        self.failures = failures


@dataclass(frozen=True)
class InstanceProvenance:
    generator_id: str
    seed: int
    params: dict

    def to_dict(self) -> dict:
        return {"generator_id": self.generator_id, "seed": self.seed, "params": self.params}


@dataclass
class SyntheticPool:
    """Per-class synthetic instances plus how each one was produced."""

    per_class: dict[str, list[RelationInstance]]
    provenance: dict[str, InstanceProvenance]
    rejected: dict[str, int]
    generator_id: str

    def size(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    def digest(self) -> str:
        payload = {
            "generator_id": self.generator_id,
            "per_class": {
                label: [inst.to_dict() for inst in instances]
                for label, instances in sorted(self.per_class.items())
            },
        }
        return content_digest(payload)

    @classmethod
    def empty(cls, schema: RelationSchema) -> "SyntheticPool":
        return cls(
            per_class={label: [] for label in schema.relation_types},
            provenance={},
            rejected={},
            generator_id="none",
        )


@dataclass(frozen=True)
class EnsembleConfig:
    n_members: int = 20
    ratio: float = 1.0
    seed: int = 0
    threshold_policy: str = "per-member"  # or "shared"

    def __post_init__(self):
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if self.ratio < 0:
            raise ValueError("ratio must be >= 0")
        if self.threshold_policy not in ("per-member", "shared"):
            raise ValueError(f"unknown threshold policy {self.threshold_policy!r}")

    def to_dict(self) -> dict:
        return {
            "n_members": self.n_members,
            "ratio": self.ratio,
            "seed": self.seed,
            "threshold_policy": self.threshold_policy,
        }


@dataclass
class MemberInfo:
    subsample_seed: int
    train_seed: int
    train_ids: tuple[str, ...]
    synth_counts: dict[str, int]


@dataclass
class EnsembleMember:
    model: LinearTextClassifier
    rule: PredictionRule
    info: MemberInfo


@dataclass
class Ensemble:
    members: list[EnsembleMember]
    config: EnsembleConfig
    schema: RelationSchema
    pipeline: str
    pool_digest: str | None = None


def default_classifier_factory(config: TrainConfig | None = None):
    """Factory over the built-in linear classifier with the given settings."""
    config = config or TrainConfig()

    def factory(train, schema, weights, seed):
        return train_classifier(train, schema, weights=weights, config=config, seed=seed)

    return factory


def build_pool(
    dataset: Dataset,
    generator_factory,
    params: GeneratorParams,
    pool_multiplier: float = 5.0,
) -> SyntheticPool:
    """Adapt the generator per class and fill the synthetic pool.

    Each class contributes round(pool_multiplier * |gold class instances|)
    filtered instances; the default multiplier of 5 leaves room to subsample
    without replacement up to ratio 4. Budget exhaustion is collected per
    class and raised once all classes have been attempted.
    """
    if pool_multiplier <= 0:
        raise ValueError("pool_multiplier must be > 0")
    schema = dataset.schema
    partitions = partition_by_class(dataset.train, schema)
    empty = [label for label, instances in partitions.by_class.items() if not instances]
    if empty:
        raise ValueError(f"classes without gold training instances: {empty}")

    backend = generator_factory()
    generator_id = backend.describe() if hasattr(backend, "describe") else repr(backend)
    per_class: dict[str, list[RelationInstance]] = {}
    provenance: dict[str, InstanceProvenance] = {}
    rejected: dict[str, int] = {}
    failures: dict[str, str] = {}
    for label in schema.relation_types:
        gold = partitions.by_class[label]
        target = round_half_up(pool_multiplier * len(gold))
        class_seed = derive_seed(params.seed, "pool", label)
        class_params = replace(params, seed=class_seed)
        source = backend.adapt(label, [list(inst.tokens) for inst in gold])
        try:
            result = generate_filtered(source, class_params, schema, target, label)
        except GenerationBudgetError as exc:
            failures[label] = str(exc)
            continue
        per_class[label] = list(result)
        rejected[label] = result.rejected
        prov = InstanceProvenance(generator_id=generator_id, seed=class_seed, params=class_params.to_dict())
        for inst in result:
            provenance[inst.id] = prov
        log.info(
            "pool class %s: %d instances (%d rejected draws)", label, len(result), result.rejected
        )
    if failures:
        raise PoolBuildError(failures)
    return SyntheticPool(
        per_class=per_class, provenance=provenance, rejected=rejected, generator_id=generator_id
    )


def subsample_pool(
    pool: SyntheticPool, dataset: Dataset, ratio: float, seed: int
) -> list[RelationInstance]:
    """Draw round(ratio * |gold class|) pool instances per class, seeded.

    Sampling is without replacement while the pool suffices; otherwise it
    falls back to with-replacement and logs a warning.
    """
    if ratio < 0:
        raise ValueError("ratio must be >= 0")
    schema = dataset.schema
    gold_sizes = partition_by_class(dataset.train, schema).sizes()
    rng = Random(seed)
    sampled: list[RelationInstance] = []
    for label in schema.relation_types:
        k = round_half_up(ratio * gold_sizes[label])
        if k == 0:
            continue
        candidates = pool.per_class.get(label, [])
        if k <= len(candidates):
            sampled.extend(rng.sample(candidates, k))
        else:
            if not candidates:
                raise ValueError(f"pool has no instances for class {label!r}")
            log.warning(
                "pool for class %s has %d instances but %d requested; sampling with replacement",
                label,
                len(candidates),
                k,
            )
            sampled.extend(rng.choices(candidates, k=k))
    return sampled


def _tune_rules(members, dev, threshold_policy):
    if threshold_policy == "shared":
        shared = tune_threshold(members[0][0], dev)
        return [shared] * len(members)
    return [tune_threshold(model, dev) for model, _ in members]


def _train_members(
    dataset: Dataset,
    config: EnsembleConfig,
    classifier_factory,
    member_train_fn,
    pipeline: str,
    pool_digest: str | None = None,
) -> Ensemble:
    if not dataset.dev:
        raise ValueError("ensemble training needs a dev split for threshold tuning")
    classifier_factory = classifier_factory or default_classifier_factory()
    rng = Random(config.seed)
    trained = []
    infos = []
    for _ in range(config.n_members):
        subsample_seed = rng.randrange(2**32)
        train_seed = rng.randrange(2**32)
        train_set, weights, synth_counts = member_train_fn(subsample_seed)
        model = classifier_factory(train_set, dataset.schema, weights, train_seed)
        info = MemberInfo(
            subsample_seed=subsample_seed,
            train_seed=train_seed,
            train_ids=tuple(inst.id for inst in train_set),
            synth_counts=synth_counts,
        )
        trained.append((model, info))
        infos.append(info)
    rules = _tune_rules(trained, dataset.dev, config.threshold_policy)
    members = [
        EnsembleMember(model=model, rule=rule, info=info)
        for (model, info), rule in zip(trained, rules)
    ]
    return Ensemble(
        members=members, config=config, schema=dataset.schema, pipeline=pipeline, pool_digest=pool_digest
    )


def train_dare(
    dataset: Dataset,
    pool: SyntheticPool,
    config: EnsembleConfig,
    classifier_factory=None,
) -> Ensemble:
    """Train the augmented ensemble: full gold plus per-member pool draws.

    Members differ only in their subsample seed and training seed; every
    member sees every gold instance exactly once.
    """
    null = dataset.schema.null_label

    def member_train(subsample_seed):
        synth = subsample_pool(pool, dataset, config.ratio, subsample_seed)
        counts: dict[str, int] = {}
        for inst in synth:
            counts[inst.label] = counts.get(inst.label, 0) + 1
        assert all(inst.label != null for inst in synth)
        return list(dataset.train) + synth, None, counts

    return _train_members(
        dataset, config, classifier_factory, member_train, "dare", pool_digest=pool.digest()
    )


def train_gold_only(dataset: Dataset, config: EnsembleConfig, classifier_factory=None) -> Ensemble:
    """Plain classifier path: the augmented pipeline with an empty pool, r=0."""
    config = replace(config, ratio=0.0)
    ensemble = train_dare(
        dataset, SyntheticPool.empty(dataset.schema), config, classifier_factory
    )
    ensemble.pipeline = "gold_only"
    ensemble.pool_digest = None
    return ensemble


def train_balanced_bagging(
    dataset: Dataset, config: EnsembleConfig, classifier_factory=None
) -> Ensemble:
    """Each member undersamples every majority class down to the rarest count."""
    schema = dataset.schema
    by_class: dict[str, list[int]] = {label: [] for label in schema.labels}
    for i, inst in enumerate(dataset.train):
        by_class[inst.label].append(i)
    empty = [label for label, idx in by_class.items() if not idx]
    if empty:
        raise ValueError(f"classes without training instances: {empty}")
    min_count = min(len(idx) for idx in by_class.values())

    def member_train(subsample_seed):
        rng = Random(subsample_seed)
        keep: set[int] = set()
        for label in schema.labels:
            indices = by_class[label]
            if len(indices) > min_count:
                keep.update(rng.sample(indices, min_count))
            else:
                keep.update(indices)
        subset = [dataset.train[i] for i in sorted(keep)]
        return subset, None, {}

    return _train_members(dataset, config, classifier_factory, member_train, "balanced_bagging")


def train_class_weighting(
    dataset: Dataset, config: EnsembleConfig, classifier_factory=None
) -> Ensemble:
    """Full gold data with rarest-over-frequency loss weights per class."""
    weights = compute_class_weights(dataset.train, dataset.schema)

    def member_train(subsample_seed):
        return list(dataset.train), weights, {}

    return _train_members(dataset, config, classifier_factory, member_train, "class_weighting")


def vote(ensemble: Ensemble, instance: RelationInstance) -> str:
    """Majority vote over the members' thresholded decisions.

    Ties go to the null label when it is among the tied labels, otherwise to
    the lowest-indexed relation type.
    """
    if not ensemble.members:
        raise ValueError("cannot vote with an empty ensemble")
    schema = ensemble.schema
    counts: dict[str, int] = {}
    for member in ensemble.members:
        decision = predict(member.model, instance, member.rule)
        counts[decision] = counts.get(decision, 0) + 1
    best = max(counts.values())
    tied = [label for label, c in counts.items() if c == best]
    if schema.null_label in tied:
        return schema.null_label
    return min(tied, key=schema.class_index)


def predict_labels(ensemble: Ensemble, instances: list[RelationInstance]) -> list[str]:
    return [vote(ensemble, inst) for inst in instances]


ENSEMBLE_FORMAT = "ensemble/1"


def save_ensemble(ensemble: Ensemble, path: str | Path) -> None:
    """Write the member models plus a manifest into a directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": ENSEMBLE_FORMAT,
        "pipeline": ensemble.pipeline,
        "config": ensemble.config.to_dict(),
        "schema": ensemble.schema.to_dict(),
        "pool_digest": ensemble.pool_digest,
        "members": [
            {
                "file": f"member_{i:03d}.npz",
                "threshold": member.rule.threshold,
                "subsample_seed": member.info.subsample_seed,
                "train_seed": member.info.train_seed,
                "train_digest": content_digest(list(member.info.train_ids)),
                "synth_counts": member.info.synth_counts,
            }
            for i, member in enumerate(ensemble.members)
        ],
    }
    (root / "ensemble.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for i, member in enumerate(ensemble.members):
        save_classifier(member.model, root / f"member_{i:03d}.npz", rule=member.rule)


def load_ensemble(path: str | Path) -> Ensemble:
    root = Path(path)
    manifest = json.loads((root / "ensemble.json").read_text(encoding="utf-8"))
    if manifest.get("format") != ENSEMBLE_FORMAT:
        raise ValueError(f"unsupported ensemble format {manifest.get('format')!r}")
    schema = RelationSchema.from_dict(manifest["schema"])
    config = EnsembleConfig(**manifest["config"])
    members = []
    for entry in manifest["members"]:
        model, rule = load_classifier(root / entry["file"])
        if rule is None:
            rule = PredictionRule(entry["threshold"])
        info = MemberInfo(
            subsample_seed=entry["subsample_seed"],
            train_seed=entry["train_seed"],
            train_ids=(),
            synth_counts=entry.get("synth_counts", {}),
        )
        members.append(EnsembleMember(model=model, rule=rule, info=info))
    return Ensemble(
        members=members,
        config=config,
        schema=schema,
        pipeline=manifest["pipeline"],
        pool_digest=manifest.get("pool_digest"),
    )
