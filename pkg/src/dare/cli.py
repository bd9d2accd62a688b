"""Command-line interface for the augmentation toolkit.

Commands mirror the experiment harness: ``run``, ``imbalance-curve``,
``ratio-study``, ``generator-study``, ``generate`` (pool only), ``mcnemar``
(compare two prediction files), ``validate`` (dataset lint) and ``make-task``
(synthetic fixture datasets). Every experiment flag can also come from a JSON
config file via ``--config``; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import Dataset, DatasetError, load_dataset, write_dataset
from .experiments import (
    ConfigError,
    ExperimentConfig,
    cmd_generate,
    cmd_generator_study,
    cmd_imbalance_curve,
    cmd_ratio_study,
    cmd_run,
)
from .metrics import mcnemar
from . import taskgen

log = logging.getLogger(__name__)


def _add_experiment_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with ExperimentConfig fields")
    parser.add_argument("--dataset", help="dataset directory", default=argparse.SUPPRESS)
    parser.add_argument(
        "--pipeline",
        dest="pipelines",
        action="append",
        choices=["dare", "balanced_bagging", "class_weighting", "gold_only"],
        help="pipeline to run (repeatable; two pipelines get a McNemar comparison)",
        default=argparse.SUPPRESS,
    )
    parser.add_argument(
        "--generator", choices=["builtin", "external"], default=argparse.SUPPRESS
    )
    parser.add_argument(
        "--generator-cmd",
        dest="generator_cmd",
        help="command line of an external generator speaking dare-gen/1",
        default=argparse.SUPPRESS,
    )
    parser.add_argument(
        "--seeds",
        type=lambda s: tuple(int(x) for x in s.split(",")),
        help="comma-separated run seeds (default 0,1,2,3,4)",
        default=argparse.SUPPRESS,
    )
    parser.add_argument("--out", dest="output_dir", default=argparse.SUPPRESS)
    parser.add_argument("--members", dest="n_members", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--ratio", type=float, default=argparse.SUPPRESS)
    parser.add_argument(
        "--threshold-policy",
        dest="threshold_policy",
        choices=["per-member", "shared"],
        default=argparse.SUPPRESS,
    )
    parser.add_argument("--pool-multiplier", dest="pool_multiplier", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--temperature", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--top-k", dest="top_k", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--max-tokens", dest="max_tokens", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--min-tokens", dest="min_tokens", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--order", type=int, help="generator context length", default=argparse.SUPPRESS)
    parser.add_argument("--alpha", type=float, help="generator smoothing", default=argparse.SUPPRESS)
    parser.add_argument(
        "--mix-weight",
        dest="mix_weight",
        type=float,
        help="class-model weight in the adapted mixture",
        default=argparse.SUPPRESS,
    )
    parser.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--feature-dim", dest="feature_dim", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--dev-fraction", dest="dev_fraction", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--dev-seed", dest="dev_seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument(
        "--base-corpus",
        dest="base_corpus",
        help="token corpus file (one JSON token array per line) for the base fit",
        default=argparse.SUPPRESS,
    )


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    skip = {"config", "command", "func", "verbose", "counts", "ratios", "preds_a", "preds_b"}
    for key, value in vars(args).items():
        if key not in skip:
            values[key] = value
    return ExperimentConfig.from_dict(values)


def _cmd_run(args) -> int:
    cmd_run(build_config(args))
    return 0


def _cmd_imbalance_curve(args) -> int:
    counts = [c if c == "all" else int(c) for c in args.counts.split(",")]
    cmd_imbalance_curve(build_config(args), counts)
    return 0


def _cmd_ratio_study(args) -> int:
    ratios = [float(r) for r in args.ratios.split(",")]
    cmd_ratio_study(build_config(args), ratios)
    return 0


def _cmd_generator_study(args) -> int:
    cmd_generator_study(build_config(args))
    return 0


def _cmd_generate(args) -> int:
    cmd_generate(build_config(args))
    return 0


def _read_predictions(path: Path) -> dict[str, str]:
    preds = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            preds[str(obj["id"])] = str(obj["label"])
    return preds


def _cmd_mcnemar(args) -> int:
    dataset = load_dataset(args.dataset)
    preds_a = _read_predictions(Path(args.preds_a))
    preds_b = _read_predictions(Path(args.preds_b))
    gold_by_id = {inst.id: inst.label for inst in dataset.test}
    missing = [i for i in gold_by_id if i not in preds_a or i not in preds_b]
    if missing:
        print(f"error: {len(missing)} test ids missing from the prediction files", file=sys.stderr)
        return 1
    ids = [inst.id for inst in dataset.test]
    result = mcnemar([preds_a[i] for i in ids], [preds_b[i] for i in ids], [gold_by_id[i] for i in ids])
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def _cmd_validate(args) -> int:
    try:
        dataset = load_dataset(args.dataset)
    except DatasetError as exc:
        print(f"invalid dataset: {exc}", file=sys.stderr)
        return 1
    counts = dataset.counts()
    print(f"dataset {args.dataset}: OK")
    print(f"  relation types: {list(dataset.schema.relation_types)}")
    print(f"  null label: {dataset.schema.null_label}")
    print(f"  masks: {dataset.schema.mask_a} / {dataset.schema.mask_b}")
    for split, (total, positives) in counts.items():
        print(f"  {split}: {total} instances ({positives} positive)")
    return 0


def _cmd_make_task(args) -> int:
    if args.kind == "benchmark":
        dataset = taskgen.benchmark_task(seed=args.seed)
    elif args.kind == "cdr-shaped":
        dataset = taskgen.cdr_shaped_dataset(seed=args.seed)
    else:
        schema, train = taskgen.ddi_shaped_train(seed=args.seed)
        dataset = Dataset(schema=schema, train=train, dev=[], test=train[: len(train) // 10])
    write_dataset(dataset, args.out)
    if args.base_corpus_out:
        corpus = taskgen.in_domain_corpus(n=args.base_corpus_size, seed=args.seed)
        with Path(args.base_corpus_out).open("w", encoding="utf-8") as fh:
            for seq in corpus:
                fh.write(json.dumps(seq) + "\n")
    counts = dataset.counts()
    print(f"wrote {args.kind} dataset to {args.out}: " + ", ".join(
        f"{split}={total}({pos} pos)" for split, (total, pos) in counts.items()
    ))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dare",
        description="Relation-extraction data augmentation pipelines and baselines.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run pipelines over seeds and write a report")
    _add_experiment_options(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("imbalance-curve", help="sweep the number of gold positives")
    _add_experiment_options(p)
    p.add_argument(
        "--counts",
        required=True,
        help="ascending comma-separated positive counts; 'all' for every positive",
    )
    p.set_defaults(func=_cmd_imbalance_curve)

    p = sub.add_parser("ratio-study", help="sweep the synthetic-to-gold ratio")
    _add_experiment_options(p)
    p.add_argument("--ratios", default="0.5,1,2,4", help="comma-separated ratios")
    p.set_defaults(func=_cmd_ratio_study)

    p = sub.add_parser("generator-study", help="in-domain base fit vs unfitted base")
    _add_experiment_options(p)
    p.set_defaults(func=_cmd_generator_study)

    p = sub.add_parser("generate", help="build and write a synthetic pool only")
    _add_experiment_options(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("mcnemar", help="compare two prediction files on a dataset's test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("preds_a", help="JSONL predictions ({'id','label'} per line)")
    p.add_argument("preds_b")
    p.set_defaults(func=_cmd_mcnemar)

    p = sub.add_parser("validate", help="lint a dataset directory")
    p.add_argument("dataset")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("make-task", help="write a synthetic template-grammar dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["benchmark", "cdr-shaped", "ddi-shaped"], default="benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-corpus-out", dest="base_corpus_out", help="also write an in-domain corpus file")
    p.add_argument("--base-corpus-size", dest="base_corpus_size", type=int, default=600)
    p.set_defaults(func=_cmd_make_task)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
