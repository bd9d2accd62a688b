import json
import os

import pytest
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

POSITIVE_SENTENCES = [
    "ENTITY_A therapy caused severe ENTITY_B in adult patients .",
    "exposure to ENTITY_A triggered ENTITY_B symptoms within days .",
]
NEGATIVE_SENTENCES = [
    "ENTITY_A and ENTITY_B were recorded in the cohort .",
    "patients with ENTITY_B received ENTITY_A during the trial .",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A word-level causal LM small enough to fine-tune on CPU in seconds."""
    words = sorted({w for s in POSITIVE_SENTENCES + NEGATIVE_SENTENCES for w in s.split()})
    vocab = {w: i for i, w in enumerate(["<pad>", "<eos>", "<unk>"] + words)}
    tokenizer = Tokenizer(models.WordLevel(vocab=vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer, unk_token="<unk>", pad_token="<pad>", eos_token="<eos>"
    )
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=64,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=vocab["<eos>"],
        eos_token_id=vocab["<eos>"],
        pad_token_id=vocab["<pad>"],
    )
    path = tmp_path_factory.mktemp("tiny_model")
    GPT2LMHeadModel(config).save_pretrained(path)
    fast.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def adapter_env(tiny_model_dir):
    """Environment for launching the adapter against the tiny model."""
    env = dict(os.environ)
    env.update(
        DARE_GEN_MODEL=str(tiny_model_dir),
        DARE_GEN_DEVICE="cpu",
        DARE_GEN_BASE_EPOCHS="6",
        DARE_GEN_EPOCHS="30",
        DARE_GEN_LR="5e-3",
        DARE_GEN_BATCH_SIZE="8",
    )
    return env


def _instances(split, n_pos, n_neg):
    lines = []
    for i in range(n_pos):
        tokens = POSITIVE_SENTENCES[i % len(POSITIVE_SENTENCES)].split()
        lines.append({"id": f"{split}-p{i}", "tokens": tokens, "label": "induce"})
    for i in range(n_neg):
        tokens = NEGATIVE_SENTENCES[i % len(NEGATIVE_SENTENCES)].split()
        lines.append({"id": f"{split}-n{i}", "tokens": tokens, "label": "null"})
    return lines


@pytest.fixture(scope="session")
def fixture_corpora():
    return (
        [s.split() for s in POSITIVE_SENTENCES],
        [s.split() for s in NEGATIVE_SENTENCES],
    )


@pytest.fixture(scope="session")
def fixture_dataset_dir(tmp_path_factory):
    """A 100-instance dataset in the documented directory format."""
    root = tmp_path_factory.mktemp("dataset")
    manifest = {
        "relation_types": ["induce"],
        "null_label": "null",
        "mask_a": "ENTITY_A",
        "mask_b": "ENTITY_B",
    }
    (root / "dataset.json").write_text(json.dumps(manifest), encoding="utf-8")
    splits = {
        "train.jsonl": _instances("train", 30, 70),
        "dev.jsonl": _instances("dev", 8, 12),
        "test.jsonl": _instances("test", 10, 20),
    }
    for filename, records in splits.items():
        with (root / filename).open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")
    return root
