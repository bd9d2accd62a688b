import json

import pytest

from dare.corpus import (
    Dataset,
    DatasetError,
    RelationInstance,
    RelationSchema,
    load_dataset,
    partition_by_class,
    split_dev,
    subsample_positives,
    whitespace_instance,
    write_dataset,
)
from dare import taskgen


SCHEMA = RelationSchema(relation_types=("induce",), null_label="null")


def make_inst(i, label="induce", extra=("in", "patients", ".")):
    tokens = ("ENTITY_A", "induces", "ENTITY_B") + tuple(extra)
    return RelationInstance(id=f"i{i}", tokens=tokens, label=label)


def write_raw_dataset(root, manifest, train_lines, test_lines=(), dev_lines=None):
    root.mkdir(parents=True, exist_ok=True)
    (root / "dataset.json").write_text(json.dumps(manifest), encoding="utf-8")
    (root / "train.jsonl").write_text("".join(l + "\n" for l in train_lines), encoding="utf-8")
    (root / "test.jsonl").write_text("".join(l + "\n" for l in test_lines), encoding="utf-8")
    if dev_lines is not None:
        (root / "dev.jsonl").write_text("".join(l + "\n" for l in dev_lines), encoding="utf-8")
    return root


MANIFEST = {
    "relation_types": ["induce"],
    "null_label": "null",
    "mask_a": "ENTITY_A",
    "mask_b": "ENTITY_B",
}


class TestSchema:
    def test_rejects_duplicate_types(self):
        with pytest.raises(DatasetError):
            RelationSchema(relation_types=("a", "a"), null_label="null")

    def test_rejects_null_collision(self):
        with pytest.raises(DatasetError):
            RelationSchema(relation_types=("a",), null_label="a")

    def test_rejects_equal_masks(self):
        with pytest.raises(DatasetError):
            RelationSchema(relation_types=("a",), null_label="null", mask_a="X", mask_b="X")

    def test_rejects_multiword_mask(self):
        with pytest.raises(DatasetError):
            RelationSchema(relation_types=("a",), null_label="null", mask_a="two words")

    def test_labels_order_null_last(self):
        schema = RelationSchema(relation_types=("a", "b"), null_label="null")
        assert schema.labels == ("a", "b", "null")
        assert schema.class_index("null") == 2


class TestLoadDataset:
    def test_minimal_record(self, tmp_path):
        line = json.dumps({"id": "x1", "tokens": ["ENTITY_A", "induces", "ENTITY_B"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [line])
        dataset = load_dataset(root)
        assert len(dataset.train) == 1
        assert dataset.train[0].tokens == ("ENTITY_A", "induces", "ENTITY_B")
        assert dataset.counts()["train"] == (1, 1)

    def test_cdr_shaped_counts(self, tmp_path):
        dataset = taskgen.cdr_shaped_dataset(seed=0)
        write_dataset(dataset, tmp_path / "cdr")
        loaded = load_dataset(tmp_path / "cdr")
        # Table-shaped fixture: 3,597 train instances, 1,453 of them positive.
        assert loaded.counts()["train"] == (3597, 1453)

    def test_missing_mask_reports_line_and_token(self, tmp_path):
        good = json.dumps({"id": "a", "tokens": ["ENTITY_A", "x", "ENTITY_B"], "label": "induce"})
        bad = json.dumps({"id": "b", "tokens": ["ENTITY_A", "alone"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [good, bad])
        with pytest.raises(DatasetError) as exc:
            load_dataset(root)
        message = str(exc.value)
        assert "train.jsonl:2" in message
        assert "ENTITY_B" in message

    def test_unknown_label_rejected(self, tmp_path):
        bad = json.dumps({"id": "a", "tokens": ["ENTITY_A", "x", "ENTITY_B"], "label": "bogus"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [bad])
        with pytest.raises(DatasetError, match="bogus"):
            load_dataset(root)

    def test_duplicate_id_rejected(self, tmp_path):
        line = json.dumps({"id": "a", "tokens": ["ENTITY_A", "x", "ENTITY_B"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [line, line])
        with pytest.raises(DatasetError, match="duplicate id"):
            load_dataset(root)

    def test_malformed_line_reports_position(self, tmp_path):
        good = json.dumps({"id": "a", "tokens": ["ENTITY_A", "x", "ENTITY_B"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [good, "{not json"])
        with pytest.raises(DatasetError, match="train.jsonl:2"):
            load_dataset(root)

    def test_missing_split_file(self, tmp_path):
        root = tmp_path / "ds"
        root.mkdir()
        (root / "dataset.json").write_text(json.dumps(MANIFEST), encoding="utf-8")
        (root / "train.jsonl").write_text("", encoding="utf-8")
        with pytest.raises(DatasetError, match="test.jsonl"):
            load_dataset(root)

    def test_dev_optional(self, tmp_path):
        line = json.dumps({"id": "a", "tokens": ["ENTITY_A", "x", "ENTITY_B"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [line])
        assert load_dataset(root).dev == []

    def test_surface_masks_normalized(self, tmp_path):
        manifest = dict(MANIFEST, mask_a="DRUG", mask_b="DISEASE")
        line = json.dumps({"id": "a", "tokens": ["DRUG", "induces", "DISEASE"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", manifest, [line])
        dataset = load_dataset(root)
        assert dataset.train[0].tokens == ("ENTITY_A", "induces", "ENTITY_B")
        assert dataset.schema.mask_a == "ENTITY_A"

    def test_schema_mismatch_rejected(self, tmp_path):
        line = json.dumps({"id": "a", "tokens": ["ENTITY_A", "x", "ENTITY_B"], "label": "induce"})
        root = write_raw_dataset(tmp_path / "ds", MANIFEST, [line])
        other = RelationSchema(relation_types=("other",), null_label="null")
        with pytest.raises(DatasetError, match="manifest"):
            load_dataset(root, schema=other)

    def test_round_trip_bytes_identical(self, tmp_path):
        dataset = taskgen.relation_task(
            n_train_pos=5, n_train_neg=10, n_dev_pos=2, n_dev_neg=4, n_test_pos=3, n_test_neg=6, seed=3
        )
        first = tmp_path / "first"
        second = tmp_path / "second"
        write_dataset(dataset, first)
        write_dataset(load_dataset(first), second)
        for name in ("dataset.json", "train.jsonl", "dev.jsonl", "test.jsonl"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


class TestPartition:
    def test_ddi_shaped_sizes(self):
        schema, train = taskgen.ddi_shaped_train(seed=0)
        partitions = partition_by_class(train, schema)
        # Four-class fixture mirrors the published per-class counts.
        assert partitions.sizes() == {"advise": 153, "effect": 658, "int": 1083, "mechanism": 1353}
        assert partitions.null_count == 500

    def test_all_null_gives_empty_partitions(self):
        schema = RelationSchema(relation_types=("a", "b"), null_label="null")
        split = [make_inst(i, label="null") for i in range(4)]
        partitions = partition_by_class(split, schema)
        assert partitions.sizes() == {"a": 0, "b": 0}
        assert partitions.null_count == 4

    def test_partition_is_disjoint_and_covers(self):
        schema = RelationSchema(relation_types=("a", "b"), null_label="null")
        split = [make_inst(i, label="a") for i in range(5)]
        split += [make_inst(i + 5, label="b") for i in range(5)]
        partitions = partition_by_class(split, schema)
        ids_a = {inst.id for inst in partitions.by_class["a"]}
        ids_b = {inst.id for inst in partitions.by_class["b"]}
        assert len(ids_a) == len(ids_b) == 5
        assert ids_a.isdisjoint(ids_b)
        assert ids_a | ids_b == {inst.id for inst in split}

    def test_partition_validates(self):
        schema = RelationSchema(relation_types=("a",), null_label="null")
        bogus = RelationInstance(id="x", tokens=("no", "masks"), label="a")
        with pytest.raises(DatasetError):
            partition_by_class([bogus], schema)


class TestSplitDev:
    def test_sizes_and_reproducibility(self):
        train = [make_inst(i) for i in range(100)]
        t1, d1 = split_dev(train, 0.10, seed=7)
        t2, d2 = split_dev(train, 0.10, seed=7)
        assert len(t1) == 90 and len(d1) == 10
        assert [i.id for i in t1] == [i.id for i in t2]
        assert [i.id for i in d1] == [i.id for i in d2]

    def test_different_seeds_differ(self):
        train = [make_inst(i) for i in range(100)]
        _, d7 = split_dev(train, 0.10, seed=7)
        _, d8 = split_dev(train, 0.10, seed=8)
        assert len(d7) == len(d8) == 10
        assert {i.id for i in d7} != {i.id for i in d8}

    def test_disjoint_union(self):
        train = [make_inst(i) for i in range(30)]
        t, d = split_dev(train, 0.2, seed=1)
        ids_t = {i.id for i in t}
        ids_d = {i.id for i in d}
        assert ids_t.isdisjoint(ids_d)
        assert ids_t | ids_d == {i.id for i in train}

    def test_small_split_rounds_half_up(self):
        train = [make_inst(i) for i in range(9)]
        _, dev = split_dev(train, 0.1, seed=0)
        assert len(dev) == 1
        _, dev = split_dev([make_inst(i) for i in range(45)], 0.1, seed=0)
        assert len(dev) == 5  # 4.5 rounds up

    def test_fraction_out_of_range(self):
        train = [make_inst(i) for i in range(10)]
        with pytest.raises(ValueError):
            split_dev(train, 1.2, seed=0)
        with pytest.raises(ValueError):
            split_dev(train, 0.0, seed=0)


@pytest.fixture(scope="module")
def cdr():
    return taskgen.cdr_shaped_dataset(seed=0)


class TestSubsamplePositives:
    def test_cdr_counts(self, cdr):
        sub = subsample_positives(cdr, 50, seed=1)
        total, positives = sub.counts()["train"]
        assert positives == 50
        assert total - positives == 2144

    def test_negatives_untouched(self, cdr):
        sub = subsample_positives(cdr, 50, seed=1)
        null = cdr.schema.null_label
        original = [i for i in cdr.train if i.label == null]
        kept = [i for i in sub.train if i.label == null]
        assert original == kept

    def test_all_positives_is_identity(self, cdr):
        sub = subsample_positives(cdr, 1453, seed=5)
        assert sub.train == cdr.train

    def test_deterministic_per_seed(self, cdr):
        a = subsample_positives(cdr, 100, seed=3)
        b = subsample_positives(cdr, 100, seed=3)
        assert [i.id for i in a.train] == [i.id for i in b.train]

    def test_single_positive_exhaustive(self):
        train = [make_inst(i) for i in range(4)] + [make_inst(9, label="null")]
        dataset = Dataset(schema=SCHEMA, train=train)
        seen = set()
        for seed in range(40):
            sub = subsample_positives(dataset, 1, seed=seed)
            chosen = [i for i in sub.train if i.label == "induce"]
            assert len(chosen) == 1
            seen.add(chosen[0].id)
        assert seen == {"i0", "i1", "i2", "i3"}

    def test_too_many_requested(self, cdr):
        with pytest.raises(ValueError):
            subsample_positives(cdr, 1454, seed=0)


def test_whitespace_instance():
    inst = whitespace_instance("w1", "ENTITY_A causes ENTITY_B today", "induce")
    assert inst.tokens == ("ENTITY_A", "causes", "ENTITY_B", "today")
