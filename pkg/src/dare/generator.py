"""Class-conditional n-gram language model with temperature / top-k sampling.

This is the built-in, desk-scale generator backend: an add-alpha smoothed
n-gram model fitted in two stages (a base fit on in-domain text, then a
per-class fit mixed with the base) plus filtered generation of labeled
synthetic instances. Real neural backends plug in through the external
process protocol in :mod:`dare.protocol`; everything downstream only needs
the ``sample_batch`` surface defined here.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from random import Random

import numpy as np

from .corpus import RelationInstance, RelationSchema

log = logging.getLogger(__name__)

BEGIN_TOKEN = "<s>"
END_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
_SENTINELS = (BEGIN_TOKEN, END_TOKEN, UNK_TOKEN)

DISTRIBUTION_TOL = 1e-9


class GenerationBudgetError(RuntimeError):
    """Filtered generation ran out of attempts before producing n samples."""

    def __init__(self, message: str, accepted: int, rejected: int):
        super().__init__(message)
        self.accepted = accepted
        self.rejected = rejected


@dataclass(frozen=True)
class GeneratorParams:
    """Sampling hyperparameters shared by all generator backends."""

    temperature: float = 1.0
    top_k: int = 5
    max_tokens: int = 100
    min_tokens: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.min_tokens > self.max_tokens:
            raise ValueError("min_tokens must be <= max_tokens")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "top_k": self.top_k,
            "max_tokens": self.max_tokens,
            "min_tokens": self.min_tokens,
            "seed": self.seed,
        }


class NGramLM:
    """Add-alpha smoothed n-gram model over whitespace tokens.

    ``order`` is the context length: the model predicts the next token from
    the ``order`` previously seen tokens. Sequences are framed with begin/end
    sentinels during fitting; an unknown-token sentinel keeps every
    conditional finite on out-of-vocabulary input.
    """

    def __init__(self, order: int = 3, alpha: float = 0.1, vocab: tuple[str, ...] = ()):
        if order < 1:
            raise ValueError("order must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be > 0")
        self.order = order
        self.alpha = alpha
        self.vocab: tuple[str, ...] = tuple(sorted(set(vocab) | set(_SENTINELS)))
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        # context tuple -> (total count, {token: count})
        self.counts: dict[tuple[str, ...], tuple[int, dict[str, int]]] = {}

    # -- fitting -----------------------------------------------------------

    def _observe(self, context: tuple[str, ...], token: str) -> None:
        entry = self.counts.get(context)
        if entry is None:
            self.counts[context] = (1, {token: 1})
        else:
            total, by_token = entry
            by_token[token] = by_token.get(token, 0) + 1
            self.counts[context] = (total + 1, by_token)

    def fit(self, corpus: list[list[str]]) -> "NGramLM":
        if not corpus:
            raise ValueError("cannot fit on an empty corpus")
        tokens = set()
        for seq in corpus:
            if not seq:
                raise ValueError("cannot fit on an empty sequence")
            tokens.update(seq)
        self.vocab = tuple(sorted(set(self.vocab) | tokens))
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        pad = (BEGIN_TOKEN,) * self.order
        for seq in corpus:
            framed = pad + tuple(seq) + (END_TOKEN,)
            for i in range(self.order, len(framed)):
                self._observe(framed[i - self.order : i], framed[i])
        return self

    def with_vocab(self, extra_vocab: tuple[str, ...]) -> "NGramLM":
        """Copy of this model whose vocabulary is extended by extra_vocab.

        Counts are shared; only the smoothing denominator changes, so the
        copy's conditionals remain proper distributions over the larger
        vocabulary.
        """
        clone = NGramLM(self.order, self.alpha, vocab=tuple(set(self.vocab) | set(extra_vocab)))
        clone.counts = self.counts
        return clone

    # -- probabilities -----------------------------------------------------

    def _canon_context(self, context: tuple[str, ...]) -> tuple[str, ...]:
        ctx = tuple(t if t in self._index else UNK_TOKEN for t in context)
        if len(ctx) < self.order:
            ctx = (BEGIN_TOKEN,) * (self.order - len(ctx)) + ctx
        return ctx[-self.order :]

    def next_token_dist(self, context: tuple[str, ...]) -> np.ndarray:
        """Smoothed conditional distribution over the vocabulary."""
        total, by_token = self.counts.get(self._canon_context(context), (0, {}))
        dist = np.full(len(self.vocab), self.alpha, dtype=float)
        for token, count in by_token.items():
            dist[self._index[token]] += count
        dist /= total + self.alpha * len(self.vocab)
        return dist

    def token_prob(self, context: tuple[str, ...], token: str) -> float:
        total, by_token = self.counts.get(self._canon_context(context), (0, {}))
        token = token if token in self._index else UNK_TOKEN
        return (by_token.get(token, 0) + self.alpha) / (total + self.alpha * len(self.vocab))

    def to_dict(self) -> dict:
        return {
            "format": "ngram-lm/1",
            "order": self.order,
            "alpha": self.alpha,
            "vocab": list(self.vocab),
            "counts": [[list(ctx), by_token] for ctx, (_, by_token) in sorted(self.counts.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NGramLM":
        if d.get("format") != "ngram-lm/1":
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        model = cls(order=d["order"], alpha=d["alpha"], vocab=tuple(d["vocab"]))
        for ctx, by_token in d["counts"]:
            counts = {tok: int(c) for tok, c in by_token.items()}
            model.counts[tuple(ctx)] = (sum(counts.values()), counts)
        return model


class AdaptedLM:
    """Pointwise mixture of a per-class model and the base model.

    The per-class component is fitted on one class's instances with the base
    vocabulary folded in, so both components rank over the same token
    inventory and the mixture endpoints reproduce them exactly.
    """

    def __init__(self, base: NGramLM, class_model: NGramLM, mix_weight: float):
        if not 0.0 <= mix_weight <= 1.0:
            raise ValueError("mix_weight must be in [0, 1]")
        if base.vocab != class_model.vocab:
            raise ValueError("component models must share a vocabulary")
        self.base = base
        self.class_model = class_model
        self.mix_weight = mix_weight

    @property
    def order(self) -> int:
        return self.class_model.order

    @property
    def vocab(self) -> tuple[str, ...]:
        return self.class_model.vocab

    def next_token_dist(self, context: tuple[str, ...]) -> np.ndarray:
        w = self.mix_weight
        return w * self.class_model.next_token_dist(context) + (1.0 - w) * self.base.next_token_dist(context)

    def token_prob(self, context: tuple[str, ...], token: str) -> float:
        w = self.mix_weight
        return w * self.class_model.token_prob(context, token) + (1.0 - w) * self.base.token_prob(
            context, token
        )

    def to_dict(self) -> dict:
        return {
            "format": "adapted-ngram-lm/1",
            "mix_weight": self.mix_weight,
            "base": self.base.to_dict(),
            "class_model": self.class_model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptedLM":
        if d.get("format") != "adapted-ngram-lm/1":
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls(
            base=NGramLM.from_dict(d["base"]),
            class_model=NGramLM.from_dict(d["class_model"]),
            mix_weight=d["mix_weight"],
        )


def fit_base(
    corpus: list[list[str]], order: int = 3, alpha: float = 0.1, extra_vocab: tuple[str, ...] = ()
) -> NGramLM:
    """Fit the first-stage model on an in-domain corpus of token sequences."""
    return NGramLM(order=order, alpha=alpha, vocab=tuple(extra_vocab)).fit(corpus)


def uniform_base(order: int = 3, alpha: float = 0.1, vocab: tuple[str, ...] = ()) -> NGramLM:
    """An unfitted base model: smoothing alone makes every conditional uniform.

    This is the stand-in for a generator with no in-domain knowledge.
    """
    return NGramLM(order=order, alpha=alpha, vocab=vocab)


def adapt(base: NGramLM, class_corpus: list[list[str]], mix_weight: float = 0.7) -> AdaptedLM:
    """Second-stage fit: specialize the base model to one class's sentences."""
    if not class_corpus:
        raise ValueError("cannot adapt on an empty class corpus")
    class_model = fit_base(class_corpus, base.order, base.alpha, extra_vocab=base.vocab)
    return AdaptedLM(base=base.with_vocab(class_model.vocab), class_model=class_model, mix_weight=mix_weight)


def log_likelihood(model: NGramLM | AdaptedLM, corpus: list[list[str]]) -> float:
    """Sum of log smoothed conditionals over every token of every sequence.

    Unknown tokens fall back to the unknown sentinel, so the result is always
    finite. The end sentinel is a fitting device and contributes no term.
    """
    total = 0.0
    pad = (BEGIN_TOKEN,) * model.order
    for seq in corpus:
        framed = pad + tuple(seq)
        for i in range(model.order, len(framed)):
            total += math.log(model.token_prob(framed[i - model.order : i], framed[i]))
    return total


class _Stepper:
    """One sampling stream: applies temperature and top-k per step.

    Post-processed distributions are cached per context, which makes
    template-heavy corpora cheap to sample from.
    """

    def __init__(self, model, params: GeneratorParams):
        self.model = model
        self.params = params
        self.vocab = model.vocab
        self._cache: dict[tuple[str, ...], tuple[list[str], np.ndarray]] = {}

    def _prepared(self, context: tuple[str, ...]) -> tuple[list[str], np.ndarray]:
        hit = self._cache.get(context)
        if hit is not None:
            return hit
        dist = self.model.next_token_dist(context)
        scaled = np.power(dist, 1.0 / self.params.temperature)
        scaled /= scaled.sum()
        k = min(self.params.top_k, len(scaled))
        # Most probable k tokens, ties broken by vocabulary order.
        keep = np.lexsort((np.arange(len(scaled)), -scaled))[:k]
        probs = scaled[keep]
        probs /= probs.sum()
        prepared = ([self.vocab[i] for i in keep], np.cumsum(probs))
        self._cache[context] = prepared
        return prepared

    def sample(self, rng: Random, prompt: tuple[str, ...] = ()) -> list[str]:
        context = (BEGIN_TOKEN,) * self.model.order + tuple(prompt)
        out: list[str] = []
        while len(out) < self.params.max_tokens:
            tokens, cumulative = self._prepared(context[-self.model.order :])
            i = bisect.bisect_right(cumulative, rng.random())
            token = tokens[min(i, len(tokens) - 1)]
            if token == END_TOKEN:
                break
            out.append(token)
            context = context + (token,)
        return out


def sample(
    model: NGramLM | AdaptedLM,
    params: GeneratorParams,
    rng: Random | None = None,
    prompt: tuple[str, ...] = (),
) -> list[str]:
    """Draw one token sequence; deterministic given (model, params, seed)."""
    if rng is None:
        rng = Random(params.seed)
    return _Stepper(model, params).sample(rng, prompt=prompt)


class ModelSampleSource:
    """Adapts a fitted model to the batch-sampling surface backends share."""

    def __init__(self, model: NGramLM | AdaptedLM):
        self.model = model

    def sample_batch(self, n: int, seed: int, params: GeneratorParams) -> list[list[str]]:
        rng = Random(seed)
        stepper = _Stepper(self.model, params)
        return [stepper.sample(rng) for _ in range(n)]

    def log_likelihood(self, corpus: list[list[str]]) -> float:
        return log_likelihood(self.model, corpus)


def as_sample_source(model_or_source) -> ModelSampleSource:
    if hasattr(model_or_source, "sample_batch"):
        return model_or_source
    return ModelSampleSource(model_or_source)


def passes_filters(tokens: list[str] | tuple[str, ...], schema: RelationSchema, min_tokens: int) -> bool:
    """The generation filter: both masks exactly once, not too short."""
    return (
        len(tokens) >= min_tokens
        and tokens.count(schema.mask_a) == 1
        and tokens.count(schema.mask_b) == 1
    )


class GenerationResult(list):
    """The accepted instances, plus how many draws the filter discarded."""

    def __init__(self, instances: list[RelationInstance], rejected: int, attempts: int):
        super().__init__(instances)
        self.rejected = rejected
        self.attempts = attempts


def generate_filtered(
    model,
    params: GeneratorParams,
    schema: RelationSchema,
    n: int,
    label: str,
    attempt_budget: int | None = None,
    id_prefix: str | None = None,
) -> GenerationResult:
    """Generate exactly n labeled instances that pass the generation filter.

    Samples missing a mask token, repeating one, or shorter than
    ``params.min_tokens`` are discarded and counted. Raises
    GenerationBudgetError after ``attempt_budget`` draws (default 100 * n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if label not in schema.relation_types:
        raise ValueError(f"unknown relation type {label!r}")
    source = as_sample_source(model)
    budget = 100 * n if attempt_budget is None else attempt_budget
    prefix = id_prefix if id_prefix is not None else f"synth-{label}"
    seed_rng = Random(params.seed)

    accepted: list[RelationInstance] = []
    rejected = 0
    attempts = 0
    while len(accepted) < n and attempts < budget:
        chunk = min(budget - attempts, max(n - len(accepted), 16))
        batch = source.sample_batch(chunk, seed_rng.randrange(2**32), params)
        attempts += len(batch)
        for tokens in batch:
            if len(accepted) >= n:
                break
            if passes_filters(tokens, schema, params.min_tokens):
                accepted.append(
                    RelationInstance(id=f"{prefix}-{len(accepted):06d}", tokens=tuple(tokens), label=label)
                )
            else:
                rejected += 1
    if len(accepted) < n:
        raise GenerationBudgetError(
            f"exhausted {budget} draws for class {label!r}: "
            f"{len(accepted)} accepted, {rejected} rejected "
            "(the generator cannot produce enough valid examples)",
            accepted=len(accepted),
            rejected=rejected,
        )
    log.debug("generated %d instances for %s (%d rejected)", n, label, rejected)
    return GenerationResult(accepted, rejected=rejected, attempts=attempts)


class JointConditionalLM:
    """Single model over all classes, steered by per-class control tokens.

    Provided to reproduce the negative finding that one jointly fitted
    generator drifts toward frequent classes; the default pipeline does not
    use it.
    """

    def __init__(self, model: AdaptedLM, control_tokens: dict[str, str]):
        self.model = model
        self.control_tokens = dict(control_tokens)

    @property
    def vocab(self) -> tuple[str, ...]:
        return self.model.vocab

    def next_token_dist(self, context: tuple[str, ...]) -> np.ndarray:
        return self.model.next_token_dist(context)

    def token_prob(self, context: tuple[str, ...], token: str) -> float:
        return self.model.token_prob(context, token)

    @property
    def order(self) -> int:
        return self.model.order

    def sample_for(self, label: str, params: GeneratorParams, rng: Random | None = None) -> list[str]:
        """Sample one sequence prompted with the class's control token."""
        if label not in self.control_tokens:
            raise ValueError(f"unknown control token for label {label!r}")
        if rng is None:
            rng = Random(params.seed)
        prompt = (self.control_tokens[label],)
        return _Stepper(self.model, params).sample(rng, prompt=prompt)

    def to_dict(self) -> dict:
        return {
            "format": "joint-conditional-lm/1",
            "control_tokens": self.control_tokens,
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointConditionalLM":
        if d.get("format") != "joint-conditional-lm/1":
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls(model=AdaptedLM.from_dict(d["model"]), control_tokens=d["control_tokens"])


def control_token(label: str) -> str:
    return f"<{label}>"


def joint_conditional_fit(
    base: NGramLM, train: list[RelationInstance], schema: RelationSchema, mix_weight: float = 0.7
) -> JointConditionalLM:
    """Fit one class-prefixed model over all non-null training instances."""
    positives = [inst for inst in train if inst.label != schema.null_label]
    if not positives:
        raise ValueError("cannot fit a joint conditional model without positive instances")
    controls = {label: control_token(label) for label in schema.relation_types}
    corpus = [[controls[inst.label], *inst.tokens] for inst in positives]
    adapted = adapt(base, corpus, mix_weight=mix_weight)
    return JointConditionalLM(model=adapted, control_tokens=controls)


class BuiltinGenerator:
    """Two-stage built-in backend: base fit, then per-class adapted mixtures.

    Without a base fit, adaptation falls back to a uniform (unfitted) base:
    the stand-in for a generator with no in-domain knowledge.
    """

    def __init__(self, order: int = 3, alpha: float = 0.1, mix_weight: float = 0.7):
        self.order = order
        self.alpha = alpha
        self.mix_weight = mix_weight
        self.base: NGramLM | None = None

    def fit_base(self, corpus: list[list[str]]) -> None:
        self.base = fit_base(corpus, order=self.order, alpha=self.alpha)

    def adapt(self, label: str, class_corpus: list[list[str]]) -> ModelSampleSource:
        if self.base is None:
            vocab = tuple({tok for seq in class_corpus for tok in seq})
            base = uniform_base(self.order, self.alpha, vocab=vocab)
        else:
            base = self.base
        return ModelSampleSource(adapt(base, class_corpus, mix_weight=self.mix_weight))

    def describe(self) -> str:
        stage = "fitted-base" if self.base is not None else "uniform-base"
        return f"builtin-ngram(order={self.order},alpha={self.alpha},mix={self.mix_weight},{stage})"


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    fmt = d.get("format")
    if fmt == "ngram-lm/1":
        return NGramLM.from_dict(d)
    if fmt == "adapted-ngram-lm/1":
        return AdaptedLM.from_dict(d)
    if fmt == "joint-conditional-lm/1":
        return JointConditionalLM.from_dict(d)
    raise ValueError(f"unsupported model format {fmt!r}")
