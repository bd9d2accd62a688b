"""Transformer-backed generator sessions for the dare-gen/1 protocol.

The backend wraps one causal language model (loaded from a local path or hub
id) and realizes per-class adaptation either by true fine-tuning or by
lightweight prefix conditioning. Everything crossing the protocol boundary
is whitespace word tokens; the model's own subword tokenizer stays internal.

Configuration comes from environment variables:

    DARE_GEN_MODEL            model path or id (required)
    DARE_GEN_DEVICE           torch device, default "cpu"
    DARE_GEN_MODE             "finetune" (default) or "prefix"
    DARE_GEN_BASE_PRETRAINED  "1" -> fit_base is a no-op (in-domain model)
    DARE_GEN_BASE_EPOCHS      base fitting epochs, default 1
    DARE_GEN_EPOCHS           per-class fine-tuning epochs, default 5
    DARE_GEN_LR               Adam learning rate, default 3e-5
    DARE_GEN_BATCH_SIZE       default 4
    DARE_GEN_GRAD_ACCUM       gradient accumulation steps, default 2
    DARE_GEN_MAX_SEQ_LEN      encoder truncation length, default 128
"""

from __future__ import annotations

import copy
import logging
import os
import random
from dataclasses import dataclass

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """Reported to the host as an ok:false response."""


@dataclass
class Settings:
    model: str
    device: str = "cpu"
    mode: str = "finetune"
    base_pretrained: bool = False
    base_epochs: int = 1
    epochs: int = 5
    learning_rate: float = 3e-5
    batch_size: int = 4
    grad_accum: int = 2
    max_seq_len: int = 128

    @classmethod
    def from_env(cls) -> "Settings":
        model = os.environ.get("DARE_GEN_MODEL", "")
        if not model:
            raise BackendError("DARE_GEN_MODEL is not set (model path or id required)")
        mode = os.environ.get("DARE_GEN_MODE", "finetune")
        if mode not in ("finetune", "prefix"):
            raise BackendError(f"unknown DARE_GEN_MODE {mode!r}")
        return cls(
            model=model,
            device=os.environ.get("DARE_GEN_DEVICE", "cpu"),
            mode=mode,
            base_pretrained=os.environ.get("DARE_GEN_BASE_PRETRAINED", "") == "1",
            base_epochs=int(os.environ.get("DARE_GEN_BASE_EPOCHS", "1")),
            epochs=int(os.environ.get("DARE_GEN_EPOCHS", "5")),
            learning_rate=float(os.environ.get("DARE_GEN_LR", "3e-5")),
            batch_size=int(os.environ.get("DARE_GEN_BATCH_SIZE", "4")),
            grad_accum=int(os.environ.get("DARE_GEN_GRAD_ACCUM", "2")),
            max_seq_len=int(os.environ.get("DARE_GEN_MAX_SEQ_LEN", "128")),
        )


class AdapterSession:
    """One protocol session: a base model plus per-class adapter states."""

    def __init__(self, settings: Settings):
        self.settings = settings
        self.tokenizer = AutoTokenizer.from_pretrained(settings.model)
        self.model = AutoModelForCausalLM.from_pretrained(settings.model).to(settings.device)
        self.model.eval()
        if self.tokenizer.pad_token_id is None:
            self.tokenizer.pad_token = self.tokenizer.eos_token
        if self.tokenizer.eos_token_id is None:
            raise BackendError("the model's tokenizer has no end-of-sequence token")
        # Pristine weights so fit_base can always restart from the loaded model.
        self._initial_state = copy.deepcopy(self._cpu_state())
        self._base_state = self._initial_state
        # adapter_id -> fine-tuned state dict, or prefix-mode corpus.
        self._adapters: dict[str, dict] = {}
        self._active: str | None = None

    def _cpu_state(self) -> dict:
        return {k: v.detach().cpu() for k, v in self.model.state_dict().items()}

    def describe(self) -> dict:
        return {
            "model": self.settings.model,
            "mode": self.settings.mode,
            "device": self.settings.device,
            "base_pretrained": self.settings.base_pretrained,
        }

    # -- encoding ------------------------------------------------------------

    def _encode_sentence(self, tokens: list[str]) -> list[int]:
        text = " ".join(tokens)
        eos = self.tokenizer.eos_token_id
        ids = self.tokenizer(
            text, truncation=True, max_length=self.settings.max_seq_len - 2
        ).input_ids
        return [eos] + ids + [eos]

    def _batches(self, corpus: list[list[str]]):
        encoded = [self._encode_sentence(tokens) for tokens in corpus if tokens]
        if not encoded:
            raise BackendError("corpus contains no non-empty sequences")
        size = self.settings.batch_size
        pad = self.tokenizer.pad_token_id
        for start in range(0, len(encoded), size):
            chunk = encoded[start : start + size]
            width = max(len(ids) for ids in chunk)
            input_ids = torch.full((len(chunk), width), pad, dtype=torch.long)
            labels = torch.full((len(chunk), width), -100, dtype=torch.long)
            for row, ids in enumerate(chunk):
                input_ids[row, : len(ids)] = torch.tensor(ids)
                labels[row, : len(ids)] = torch.tensor(ids)
            yield input_ids.to(self.settings.device), labels.to(self.settings.device)

    # -- training ------------------------------------------------------------

    def _train(self, corpus: list[list[str]], epochs: int) -> None:
        self.model.train()
        optimizer = torch.optim.Adam(self.model.parameters(), lr=self.settings.learning_rate)
        accum = max(1, self.settings.grad_accum)
        for epoch in range(epochs):
            total = 0.0
            steps = 0
            optimizer.zero_grad()
            for i, (input_ids, labels) in enumerate(self._batches(corpus)):
                loss = self.model(input_ids=input_ids, labels=labels).loss
                (loss / accum).backward()
                if (i + 1) % accum == 0:
                    optimizer.step()
                    optimizer.zero_grad()
                total += float(loss.detach())
                steps += 1
            optimizer.step()
            optimizer.zero_grad()
            log.info("epoch %d/%d loss %.4f", epoch + 1, epochs, total / max(steps, 1))
        self.model.eval()

    def _activate(self, state: dict) -> None:
        self.model.load_state_dict(state)
        self.model.to(self.settings.device)
        self.model.eval()

    def fit_base(self, corpus: list[list[str]]) -> None:
        if self.settings.base_pretrained:
            log.info("fit_base skipped: model declared in-domain pretrained")
            return
        self._activate(self._initial_state)
        torch.manual_seed(0)
        self._train(corpus, self.settings.base_epochs)
        self._base_state = self._cpu_state()
        self._active = None

    def adapt(self, label: str, corpus: list[list[str]]) -> str:
        if not corpus:
            raise BackendError("adapt needs a non-empty class corpus")
        adapter_id = f"{self.settings.mode}-{len(self._adapters)}-{label}"
        if self.settings.mode == "prefix":
            self._adapters[adapter_id] = {"corpus": [list(t) for t in corpus]}
            return adapter_id
        self._activate(self._base_state)
        torch.manual_seed(1)
        self._train(corpus, self.settings.epochs)
        self._adapters[adapter_id] = {"state": self._cpu_state()}
        self._active = adapter_id
        return adapter_id

    def _ensure_active(self, adapter_id: str) -> dict:
        entry = self._adapters.get(adapter_id)
        if entry is None:
            raise BackendError(f"unknown adapter_id {adapter_id!r}")
        if "state" in entry and self._active != adapter_id:
            self._activate(entry["state"])
            self._active = adapter_id
        return entry

    # -- inference -----------------------------------------------------------

    def sample(
        self,
        adapter_id: str,
        n: int,
        temperature: float,
        top_k: int,
        max_tokens: int,
        seed: int,
    ) -> list[list[str]]:
        if n < 1:
            raise BackendError("n must be >= 1")
        entry = self._ensure_active(adapter_id)
        eos = self.tokenizer.eos_token_id
        rng = random.Random(seed)
        torch.manual_seed(seed)
        samples: list[list[str]] = []
        chunk = 32
        while len(samples) < n:
            batch = min(chunk, n - len(samples))
            if self.settings.mode == "prefix":
                # Condition on a class example; the trailing eos makes the
                # continuation a fresh sentence in the example's style.
                corpus = entry["corpus"]
                prompt = self._encode_sentence(corpus[rng.randrange(len(corpus))])
            else:
                prompt = [eos]
            input_ids = torch.tensor([prompt] * batch, dtype=torch.long, device=self.settings.device)
            with torch.no_grad():
                output = self.model.generate(
                    input_ids,
                    do_sample=True,
                    temperature=float(temperature),
                    top_k=int(top_k),
                    max_new_tokens=int(max_tokens),
                    pad_token_id=self.tokenizer.pad_token_id,
                    eos_token_id=eos,
                )
            for row in output:
                new_ids = row[len(prompt) :]
                text = self.tokenizer.decode(new_ids, skip_special_tokens=True)
                samples.append(text.split())
        return samples[:n]

    def log_likelihood(self, adapter_id: str, corpus: list[list[str]]) -> float:
        self._ensure_active(adapter_id)
        total = 0.0
        with torch.no_grad():
            for tokens in corpus:
                if not tokens:
                    continue
                ids = torch.tensor(
                    [self._encode_sentence(tokens)], dtype=torch.long, device=self.settings.device
                )
                logits = self.model(input_ids=ids).logits
                log_probs = torch.log_softmax(logits[0, :-1], dim=-1)
                targets = ids[0, 1:]
                total += float(log_probs.gather(1, targets.unsqueeze(1)).sum())
        return total
