"""Data model and dataset I/O for masked relation-extraction corpora.

A dataset lives on disk as a directory containing a ``dataset.json`` manifest
(relation types, null label, mask tokens) plus one UTF-8 JSON-lines file per
split: ``train.jsonl``, ``test.jsonl`` and optionally ``dev.jsonl``. Each line
is an object with keys ``id`` (string), ``tokens`` (array of strings) and
``label`` (string). Instances arrive pre-tokenized and entity-masked: every
instance contains the schema's two mask tokens exactly once each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from random import Random

from .util import round_half_up

DEFAULT_MASK_A = "ENTITY_A"
DEFAULT_MASK_B = "ENTITY_B"

MANIFEST_NAME = "dataset.json"
SPLIT_FILES = {"train": "train.jsonl", "dev": "dev.jsonl", "test": "test.jsonl"}


class DatasetError(ValueError):
    """A dataset, schema or instance failed validation.

    ``errors`` holds one message per offending line/instance so callers can
    report everything at once instead of failing on the first bad record.
    """

    def __init__(self, message: str, errors: list[str] | None = None):
        if errors:
            message = message + "\n  " + "\n  ".join(errors)
        super().__init__(message)
        self.errors = list(errors or [])


@dataclass(frozen=True)
class RelationSchema:
    """The ordered relation-type inventory plus the null label and mask pair."""

    relation_types: tuple[str, ...]
    null_label: str
    mask_a: str = DEFAULT_MASK_A
    mask_b: str = DEFAULT_MASK_B

    def __post_init__(self):
        object.__setattr__(self, "relation_types", tuple(self.relation_types))
        types = self.relation_types
        if not types:
            raise DatasetError("schema needs at least one relation type")
        if len(set(types)) != len(types):
            raise DatasetError("relation types must be unique")
        if any(not t for t in types):
            raise DatasetError("relation types must be non-empty strings")
        if self.null_label in types:
            raise DatasetError(f"null label {self.null_label!r} collides with a relation type")
        for mask in (self.mask_a, self.mask_b):
            if not mask or any(ch.isspace() for ch in mask):
                raise DatasetError(f"mask token {mask!r} must be a single non-empty token")
        if self.mask_a == self.mask_b:
            raise DatasetError("mask_a and mask_b must differ")

    @property
    def labels(self) -> tuple[str, ...]:
        """All training labels: relation types in order, null last."""
        return self.relation_types + (self.null_label,)

    def class_index(self, label: str) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict:
        return {
            "relation_types": list(self.relation_types),
            "null_label": self.null_label,
            "mask_a": self.mask_a,
            "mask_b": self.mask_b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationSchema":
        return cls(
            relation_types=tuple(d["relation_types"]),
            null_label=d["null_label"],
            mask_a=d.get("mask_a", DEFAULT_MASK_A),
            mask_b=d.get("mask_b", DEFAULT_MASK_B),
        )


@dataclass(frozen=True)
class RelationInstance:
    """One masked sentence: a token sequence with a relation label.

    The two entity positions are represented by the schema's mask tokens,
    which must each occur exactly once in ``tokens``.
    """

    id: str
    tokens: tuple[str, ...]
    label: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def to_dict(self) -> dict:
        return {"id": self.id, "tokens": list(self.tokens), "label": self.label}


def instance_errors(inst: RelationInstance, schema: RelationSchema) -> list[str]:
    """Validation messages for one instance (empty list when valid)."""
    errors = []
    for mask in (schema.mask_a, schema.mask_b):
        n = inst.tokens.count(mask)
        if n == 0:
            errors.append(f"missing mask token {mask!r}")
        elif n > 1:
            errors.append(f"mask token {mask!r} appears {n} times (expected once)")
    if inst.label not in schema.labels:
        errors.append(f"unknown label {inst.label!r}")
    return errors


def validate_instance(inst: RelationInstance, schema: RelationSchema) -> None:
    errors = instance_errors(inst, schema)
    if errors:
        raise DatasetError(f"invalid instance {inst.id!r}", errors)


def whitespace_instance(id: str, text: str, label: str) -> RelationInstance:
    """Convenience converter for fixtures: whitespace-split text to tokens."""
    return RelationInstance(id=id, tokens=tuple(text.split()), label=label)


@dataclass
class Dataset:
    schema: RelationSchema
    train: list[RelationInstance] = field(default_factory=list)
    dev: list[RelationInstance] = field(default_factory=list)
    test: list[RelationInstance] = field(default_factory=list)

    def splits(self) -> dict[str, list[RelationInstance]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}

    def validate(self) -> None:
        errors = []
        for split_name, instances in self.splits().items():
            seen: set[str] = set()
            for inst in instances:
                for msg in instance_errors(inst, self.schema):
                    errors.append(f"{split_name}: instance {inst.id!r}: {msg}")
                if inst.id in seen:
                    errors.append(f"{split_name}: duplicate id {inst.id!r}")
                seen.add(inst.id)
        if errors:
            raise DatasetError("dataset failed validation", errors)

    def counts(self) -> dict[str, tuple[int, int]]:
        """Per split: (total instances, non-null instances)."""
        out = {}
        for name, instances in self.splits().items():
            positives = sum(1 for i in instances if i.label != self.schema.null_label)
            out[name] = (len(instances), positives)
        return out


def _parse_split_file(
    path: Path, split_name: str, schema: RelationSchema, surface: RelationSchema, errors: list[str]
) -> list[RelationInstance]:
    instances: list[RelationInstance] = []
    seen: set[str] = set()
    # Declared surface masks (from the manifest) are normalized to the
    # schema's canonical pair so one invariant serves every dataset.
    mask_map = {surface.mask_a: schema.mask_a, surface.mask_b: schema.mask_b}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            where = f"{path.name}:{lineno}"
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"{where}: malformed JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict) or not {"id", "tokens", "label"} <= set(obj):
                errors.append(f"{where}: record must have id, tokens and label keys")
                continue
            if not isinstance(obj["tokens"], list) or not all(isinstance(t, str) for t in obj["tokens"]):
                errors.append(f"{where}: tokens must be an array of strings")
                continue
            tokens = tuple(mask_map.get(t, t) for t in obj["tokens"])
            inst = RelationInstance(id=str(obj["id"]), tokens=tokens, label=str(obj["label"]))
            for msg in instance_errors(inst, schema):
                errors.append(f"{where}: instance {inst.id!r}: {msg}")
            if inst.id in seen:
                errors.append(f"{where}: duplicate id {inst.id!r} in {split_name}")
            seen.add(inst.id)
            instances.append(inst)
    return instances


def load_dataset(path: str | Path, schema: RelationSchema | None = None) -> Dataset:
    """Load and validate a dataset directory.

    The manifest's mask tokens are treated as the files' surface masks; they
    are rewritten to the canonical pair of ``schema`` (or the default
    ENTITY_A / ENTITY_B pair when no schema is given). Raises DatasetError
    with one message per offending line when anything fails validation.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetError(f"missing manifest {manifest_path}")
    try:
        surface = RelationSchema.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed manifest {manifest_path}: {exc!r}") from exc
    if schema is None:
        schema = replace(surface, mask_a=DEFAULT_MASK_A, mask_b=DEFAULT_MASK_B)
    if tuple(schema.relation_types) != surface.relation_types or schema.null_label != surface.null_label:
        raise DatasetError(
            "schema labels do not match the dataset manifest "
            f"({schema.labels} vs {surface.labels})"
        )

    errors: list[str] = []
    splits: dict[str, list[RelationInstance]] = {}
    for split_name, filename in SPLIT_FILES.items():
        split_path = root / filename
        if not split_path.is_file():
            if split_name == "dev":
                splits[split_name] = []
                continue
            raise DatasetError(f"missing split file {split_path}")
        splits[split_name] = _parse_split_file(split_path, split_name, schema, surface, errors)
    if errors:
        raise DatasetError(f"dataset {root} failed validation", errors)
    return Dataset(schema=schema, train=splits["train"], dev=splits["dev"], test=splits["test"])


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset directory (manifest plus JSON-lines splits)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = dataset.schema.to_dict()
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for split_name, filename in SPLIT_FILES.items():
        instances = dataset.splits()[split_name]
        if split_name == "dev" and not instances:
            continue
        with (root / filename).open("w", encoding="utf-8") as fh:
            for inst in instances:
                fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")


@dataclass
class ClassPartitions:
    """Per-relation-type partition of a split; null instances counted aside."""

    by_class: dict[str, list[RelationInstance]]
    null_count: int

    def sizes(self) -> dict[str, int]:
        return {label: len(instances) for label, instances in self.by_class.items()}


def partition_by_class(
    split: list[RelationInstance], schema: RelationSchema
) -> ClassPartitions:
    """Split instances by relation type (the per-class subsets of the data).

    Every relation type is present as a key, possibly with an empty list.
    Null-labeled instances are excluded from the partitions and only counted.
    """
    by_class: dict[str, list[RelationInstance]] = {t: [] for t in schema.relation_types}
    null_count = 0
    for inst in split:
        validate_instance(inst, schema)
        if inst.label == schema.null_label:
            null_count += 1
        else:
            by_class[inst.label].append(inst)
    return ClassPartitions(by_class=by_class, null_count=null_count)


def split_dev(
    train: list[RelationInstance], fraction: float, seed: int
) -> tuple[list[RelationInstance], list[RelationInstance]]:
    """Carve a development set off the training split, deterministically.

    The dev size is round-half-up(fraction * len(train)); both returned lists
    preserve the original instance order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"dev fraction must be in (0, 1), got {fraction}")
    n = len(train)
    n_dev = round_half_up(fraction * n)
    if n_dev < 1:
        raise ValueError(f"fraction {fraction} of {n} instances leaves an empty dev set")
    indices = list(range(n))
    Random(seed).shuffle(indices)
    dev_idx = set(indices[:n_dev])
    new_train = [inst for i, inst in enumerate(train) if i not in dev_idx]
    dev = [inst for i, inst in enumerate(train) if i in dev_idx]
    return new_train, dev


def subsample_positives(dataset: Dataset, n_positives: int, seed: int) -> Dataset:
    """Keep a seeded uniform sample of non-null train instances plus all nulls.

    Negative (null) instances are never altered; dev and test are untouched.
    Train order is preserved, so sampling all positives returns the train
    split unchanged.
    """
    null = dataset.schema.null_label
    positive_idx = [i for i, inst in enumerate(dataset.train) if inst.label != null]
    if n_positives > len(positive_idx):
        raise ValueError(
            f"requested {n_positives} positives but the train split has only {len(positive_idx)}"
        )
    chosen = set(Random(seed).sample(positive_idx, n_positives))
    new_train = [
        inst
        for i, inst in enumerate(dataset.train)
        if inst.label == null or i in chosen
    ]
    return Dataset(schema=dataset.schema, train=new_train, dev=dataset.dev, test=dataset.test)
