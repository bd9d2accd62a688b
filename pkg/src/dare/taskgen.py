"""Grammar-based corpora: synthetic tasks, fixtures, in-domain text.

Sentences are composed from phrase banks (subject / verb / object / tail),
so the pattern space is combinatorial: a small gold sample covers only part
of it, negatives are diverse, and "hard" variants reuse causal wording under
negation or hedging. A shared ambiguous sentence family appears under both
labels, putting a ceiling below 1.0 on any classifier. All sentences carry
both entity masks exactly once and are at least eight tokens long.
"""

from __future__ import annotations

from random import Random

from .corpus import Dataset, RelationInstance, RelationSchema

FILLERS: dict[str, tuple[str, ...]] = {
    "adv": ("frequently", "markedly", "rapidly", "consistently", "occasionally", "repeatedly",
            "unexpectedly", "gradually"),
    "adj": ("severe", "acute", "transient", "persistent", "mild", "delayed", "recurrent",
            "dose-dependent"),
    "pop": ("elderly", "adult", "pediatric", "hospitalized", "ambulatory", "diabetic",
            "post-operative"),
    "num": ("two", "three", "four", "several", "eleven", "most"),
    "time": ("days", "weeks", "months"),
    "study": ("retrospective", "randomized", "observational", "multicenter", "double-blind",
              "population-based"),
    "route": ("oral", "renal", "hepatic", "intravenous"),
    "dose": ("high", "low", "repeated", "escalating"),
}

A = "ENTITY_A"
B = "ENTITY_B"

# Phrase banks for the relation-bearing sentences. One sentence is
# subject + verb + object + tail, giving hundreds of distinct skeletons.
POS_SUBJECTS = (
    (A, "therapy"),
    ("treatment", "with", A),
    (A, "administration"),
    ("exposure", "to", A),
    ("{dose}", "doses", "of", A),
    (A, "given", "to", "{pop}", "patients"),
)
POS_VERBS_CLEAR = (
    ("{adv}", "induced"),
    ("caused",),
    ("{adv}", "provoked"),
    ("triggered",),
    ("elicited",),
)
POS_VERBS_SOFT = (
    ("was", "followed", "by"),
    ("preceded",),
    ("was", "linked", "to"),
)
POS_OBJECTS = (
    ("{adj}", B),
    ("{adj}", B, "episodes"),
    (B, "symptoms"),
    (B, "reactions"),
    ("the", "onset", "of", B),
)
POS_TAILS = (
    ("in", "{pop}", "patients", "."),
    ("within", "{num}", "{time}", "."),
    ("during", "{study}", "follow-up", "."),
    ("in", "{num}", "of", "the", "cases", "."),
    ("according", "to", "the", "{study}", "registry", "."),
)

# Neutral co-occurrence structures: both entities mentioned, no causal claim.
NEG_TEMPLATES = (
    (A, "and", B, "were", "recorded", "in", "the", "{study}", "cohort", "."),
    ("patients", "with", B, "received", A, "during", "the", "{study}", "trial", "."),
    (A, "levels", "were", "unrelated", "to", B, "status", "in", "{pop}", "controls", "."),
    ("the", "{study}", "review", "discussed", A, "alongside", B, "findings", "."),
    ("clinicians", "monitored", B, "while", "prescribing", A, "in", "{pop}", "care", "."),
    (A, "dosing", "schedules", "ignored", "prior", B, "history", "in", "{num}", "cases", "."),
    ("baseline", B, "scores", "were", "collected", "before", A, "initiation", "."),
    (A, "was", "administered", "and", B, "was", "assessed", "after", "{num}", "{time}", "."),
    ("the", "{route}", "clearance", "of", A, "was", "measured", "in", B, "subjects", "."),
    (B, "management", "guidelines", "do", "not", "mention", A, "use", "."),
)

# Hard negatives: causal wording under negation or hedging.
NEG_HARD_PREFIXES = (
    ("no", "evidence", "that"),
    ("it", "is", "unclear", "whether"),
    ("the", "{study}", "study", "did", "not", "confirm", "that"),
    ("reviewers", "questioned", "whether"),
)

# The ambiguous family is rendered identically under both labels.
AMBIGUOUS_TEMPLATES = (
    (B, "was", "observed", "after", A, "in", "{num}", "{pop}", "patients", "."),
    ("{adj}", B, "occurred", "in", "patients", "taking", A, "."),
    (A, "use", "and", "{adj}", B, "were", "reported", "together", "."),
    ("cases", "of", B, "among", A, "users", "were", "described", "."),
)

DDI_TEMPLATES: dict[str, tuple[tuple[str, ...], ...]] = {
    "advise": (
        ("caution", "should", "be", "observed", "when", A, "and", B, "are", "coadministered", "."),
        (A, "should", "not", "be", "combined", "with", B, "in", "{pop}", "patients", "."),
    ),
    "effect": (
        (A, "may", "enhance", "the", "{adj}", "effects", "of", B, "."),
        ("the", "sedative", "action", "of", B, "was", "potentiated", "by", A, "."),
    ),
    "int": (
        ("an", "interaction", "between", A, "and", B, "was", "reported", "in", "{num}", "studies", "."),
        (A, "is", "known", "to", "interact", "with", B, "in", "{pop}", "patients", "."),
    ),
    "mechanism": (
        ("coadministration", "of", A, "decreased", "the", "{route}", "bioavailability", "of", B, "."),
        (A, "inhibits", "the", "{route}", "clearance", "of", B, "in", "{num}", "subjects", "."),
    ),
}


def _fill(token: str, rng: Random) -> str:
    if token.startswith("{") and token.endswith("}"):
        options = FILLERS[token[1:-1]]
        return options[rng.randrange(len(options))]
    return token


def _render(template: tuple[str, ...], rng: Random) -> tuple[str, ...]:
    return tuple(_fill(tok, rng) for tok in template)


def _choice(bank, rng: Random):
    return bank[rng.randrange(len(bank))]


def _positive_sentence(rng: Random, hard_fraction: float) -> tuple[str, ...]:
    verbs = POS_VERBS_SOFT if rng.random() < hard_fraction else POS_VERBS_CLEAR
    parts = (
        _choice(POS_SUBJECTS, rng)
        + _choice(verbs, rng)
        + _choice(POS_OBJECTS, rng)
        + _choice(POS_TAILS, rng)
    )
    return _render(parts, rng)


def _negative_sentence(rng: Random, hard_fraction: float) -> tuple[str, ...]:
    if rng.random() < hard_fraction:
        # Causal claim wrapped in negation/hedging.
        parts = (
            _choice(NEG_HARD_PREFIXES, rng)
            + _choice(POS_SUBJECTS, rng)
            + _choice(POS_VERBS_CLEAR, rng)
            + _choice(POS_OBJECTS, rng)
            + _choice(POS_TAILS, rng)
        )
        return _render(parts, rng)
    return _render(_choice(NEG_TEMPLATES, rng), rng)


def _ambiguous_sentence(rng: Random) -> tuple[str, ...]:
    return _render(_choice(AMBIGUOUS_TEMPLATES, rng), rng)


def _split(
    name: str,
    schema: RelationSchema,
    n_pos: int,
    n_neg: int,
    rng: Random,
    hard_fraction: float,
    ambiguous_fraction: float,
) -> list[RelationInstance]:
    label = schema.relation_types[0]
    instances = []
    for i in range(n_pos):
        tokens = (
            _ambiguous_sentence(rng)
            if rng.random() < ambiguous_fraction
            else _positive_sentence(rng, hard_fraction)
        )
        instances.append(RelationInstance(id=f"{name}-pos-{i:05d}", tokens=tokens, label=label))
    for i in range(n_neg):
        tokens = (
            _ambiguous_sentence(rng)
            if rng.random() < ambiguous_fraction
            else _negative_sentence(rng, hard_fraction)
        )
        instances.append(
            RelationInstance(id=f"{name}-neg-{i:05d}", tokens=tokens, label=schema.null_label)
        )
    rng.shuffle(instances)
    return instances


def relation_task(
    n_train_pos: int = 50,
    n_train_neg: int = 2000,
    n_dev_pos: int = 40,
    n_dev_neg: int = 400,
    n_test_pos: int = 120,
    n_test_neg: int = 1200,
    hard_fraction: float = 0.3,
    ambiguous_fraction: float = 0.12,
    seed: int = 0,
) -> Dataset:
    """A single-relation task with configurable imbalance and difficulty."""
    schema = RelationSchema(relation_types=("induce",), null_label="null")
    rng = Random(seed)
    common = (hard_fraction, ambiguous_fraction)
    return Dataset(
        schema=schema,
        train=_split("train", schema, n_train_pos, n_train_neg, rng, *common),
        dev=_split("dev", schema, n_dev_pos, n_dev_neg, rng, *common),
        test=_split("test", schema, n_test_pos, n_test_neg, rng, *common),
    )


def benchmark_task(seed: int = 0) -> Dataset:
    """The imbalance benchmark: 50 gold positives against 2,000 negatives."""
    return relation_task(seed=seed)


def cdr_shaped_dataset(seed: int = 0) -> Dataset:
    """Counts shaped like the chemical-disease corpus: 3,597 train / 1,453 positive."""
    return relation_task(
        n_train_pos=1453,
        n_train_neg=2144,
        n_dev_pos=1000,
        n_dev_neg=2876,
        n_test_pos=950,
        n_test_neg=2856,
        seed=seed,
    )


DDI_CLASS_COUNTS = {"advise": 153, "effect": 658, "int": 1083, "mechanism": 1353}


def ddi_shaped_train(
    seed: int = 0, n_null: int = 500
) -> tuple[RelationSchema, list[RelationInstance]]:
    """A four-class train split with the drug-interaction class counts."""
    schema = RelationSchema(
        relation_types=("advise", "effect", "int", "mechanism"), null_label="null"
    )
    rng = Random(seed)
    instances: list[RelationInstance] = []
    for label, count in DDI_CLASS_COUNTS.items():
        templates = DDI_TEMPLATES[label]
        for i in range(count):
            instances.append(
                RelationInstance(
                    id=f"train-{label}-{i:05d}",
                    tokens=_render(_choice(templates, rng), rng),
                    label=label,
                )
            )
    for i in range(n_null):
        instances.append(
            RelationInstance(
                id=f"train-neg-{i:05d}",
                tokens=_render(_choice(NEG_TEMPLATES, rng), rng),
                label=schema.null_label,
            )
        )
    rng.shuffle(instances)
    return schema, instances


def in_domain_corpus(n: int = 600, seed: int = 0) -> list[list[str]]:
    """Unlabeled in-domain sentences covering the full phrase space.

    Mirrors a large domain corpus: it exercises subject/verb/object/tail
    combinations and fillers that a small gold sample only partially covers.
    """
    rng = Random(seed)
    out: list[list[str]] = []
    for _ in range(n):
        roll = rng.random()
        if roll < 0.4:
            out.append(list(_positive_sentence(rng, hard_fraction=0.3)))
        elif roll < 0.9:
            out.append(list(_negative_sentence(rng, hard_fraction=0.3)))
        else:
            out.append(list(_ambiguous_sentence(rng)))
    return out
