"""Optimization loop and the two-stage fine-tuning schedule.

Stage 1 trains on generic (query-free) records with no attention bias;
stage 2 starts from the stage-1 weights and trains on query-focused
records whose bias comes from a span scorer. Updates are Adam with
global-norm gradient clipping; everything is seeded and single-threaded
so identical runs produce bit-identical checkpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .data import CorpusRecord, read_corpus
from .inputs import FormattedInput, format_input
from .model import ModelConfig, ModelParams, sequence_loss
from .qa import Scorer, bias_for_input
from .vocab import PAD_ID, Vocab, words

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 3e-4
    steps_stage1: int = 0
    steps_stage2: int = 0
    clip_norm: float = 1.0
    seed: int = 0
    stage1_corpus: str | None = None
    stage2_corpus: str | None = None
    scorer: str = "lexical-overlap"
    scores_path: str | None = None
    vocab_max_size: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.clip_norm < 0:
            raise ValueError(f"clip_norm must be >= 0, got {self.clip_norm}")
        if self.steps_stage1 < 0 or self.steps_stage2 < 0:
            raise ValueError("step counts must be >= 0")


@dataclass
class TrainExample:
    id: str
    fin: FormattedInput
    target_ids: list[int]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(m={k: np.zeros_like(p.data) for k, p in params.items()},
                   v={k: np.zeros_like(p.data) for k, p in params.items()})


def prepare_example(record: CorpusRecord, vocab: Vocab, mcfg: ModelConfig,
                    scorer: Scorer | None = None, use_query: bool = True) -> TrainExample:
    """Format one record; the bias is attached only when a scorer is given
    and the record carries a query."""
    doc_words = words(" ".join(record.documents))
    query_words = words(record.query) if use_query else []
    fin = format_input(doc_words, query_words, vocab, mcfg.max_src_len)
    if scorer is not None and query_words and fin.layout.doc_len > 0:
        fin.bias = bias_for_input(fin, scorer, mcfg.max_tgt_len, example_id=record.id)
    target_ids = vocab.encode(record.summary)[: mcfg.max_tgt_len]
    return TrainExample(id=record.id, fin=fin, target_ids=target_ids)


def _clip_factor(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    if clip_norm == 0.0:
        return 0.0
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm > clip_norm:
        return clip_norm / norm
    return 1.0


def train_step(params: ModelParams, batch: list[TrainExample], config: TrainConfig,
               state: AdamState | None = None) -> tuple[ModelParams, float]:
    """One Adam update on the mean cross entropy over the batch.

    Params are updated in place and also returned. A non-finite loss
    aborts with the offending example id.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    if state is None:
        state = AdamState.for_params(params)

    losses = [sequence_loss(ex.fin, ex.target_ids, params, PAD_ID) for ex in batch]
    for ex, loss in zip(batch, losses):
        if not np.isfinite(loss.data):
            raise RuntimeError(f"non-finite loss on example {ex.id!r}")
    total = losses[0]
    for loss in losses[1:]:
        total = ad.add(total, loss)
    mean = ad.scale(total, 1.0 / len(batch))
    ad.backward(mean)

    grads = {name: p.grad for name, p in params.items()}
    factor = _clip_factor(grads, config.clip_norm)
    lr = config.learning_rate
    state.t += 1
    b1t = 1.0 - ADAM_BETA1 ** state.t
    b2t = 1.0 - ADAM_BETA2 ** state.t
    for name, p in params.items():
        g = grads[name] * factor
        state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = state.m[name] / b1t
        v_hat = state.v[name] / b2t
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, float(mean.data)


def train_on_examples(params: ModelParams, examples: list[TrainExample],
                      config: TrainConfig, steps: int,
                      rng: np.random.Generator | None = None) -> list[float]:
    """Run ``steps`` updates over seeded-shuffled batches; returns the losses."""
    if steps == 0:
        return []
    if not examples:
        raise ValueError("no training examples")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = AdamState.for_params(params)
    losses: list[float] = []
    order: list[int] = []
    pos = 0
    for _ in range(steps):
        if pos + config.batch_size > len(order):
            # drop-last batching; reshuffle per epoch from the run generator
            order = list(rng.permutation(len(examples)))
            pos = 0
        take = order[pos: pos + config.batch_size]
        pos += config.batch_size
        batch = [examples[i] for i in take]
        _, loss = train_step(params, batch, config, state)
        losses.append(loss)
    return losses


@dataclass
class TwoStageResult:
    params: ModelParams
    vocab: Vocab
    config: ModelConfig
    stage1_path: Path | None = None
    stage2_path: Path | None = None
    vocab_path: Path | None = None
    stage1_losses: list[float] = field(default_factory=list)
    stage2_losses: list[float] = field(default_factory=list)


def build_vocab_for_corpora(records1: list[CorpusRecord], records2: list[CorpusRecord],
                            max_size: int | None = None) -> Vocab:
    def texts():
        for rec in list(records1) + list(records2):
            yield from rec.documents
            yield rec.query
            yield rec.summary
    return Vocab.build(texts(), max_size=max_size)


def two_stage_finetune(config: TrainConfig, model_config: ModelConfig,
                       out_dir: str | Path | None = None,
                       scorer: Scorer | None = None) -> TwoStageResult:
    """Generic-summarization stage, then query-focused stage from its weights.

    Both corpora must exist. Stage-1 records are trained with empty
    queries and no bias (records that do carry a query are used query-
    free, with a warning); stage-2 records get scorer-derived biases.
    Both stage checkpoints and the vocabulary are persisted when an
    output directory is given.
    """
    if not config.stage1_corpus or not config.stage2_corpus:
        raise ValueError("both stage corpus paths must be configured")
    records1 = read_corpus(config.stage1_corpus)
    records2 = read_corpus(config.stage2_corpus)
    if not records1 or not records2:
        raise ValueError("both corpora must contain at least one record")

    vocab = build_vocab_for_corpora(records1, records2, config.vocab_max_size)
    mcfg = replace(model_config, vocab_size=len(vocab))
    params = ModelParams.initialize(mcfg)

    if scorer is None:
        from .qa import make_scorer
        scorer = make_scorer(config.scorer, config.scores_path)

    n_queried1 = sum(1 for r in records1 if r.query.strip())
    if n_queried1:
        logger.warning("stage-1 corpus has %d records with queries; queries are ignored "
                       "in the generic stage", n_queried1)
    if not any(r.query.strip() for r in records2):
        logger.warning("stage-2 corpus has no queries; bias degenerates to none")

    stage1 = [prepare_example(r, vocab, mcfg, scorer=None, use_query=False)
              for r in records1]
    stage2 = [prepare_example(r, vocab, mcfg, scorer=scorer) for r in records2]

    result = TwoStageResult(params=params, vocab=vocab, config=mcfg)
    result.stage1_losses = train_on_examples(
        params, stage1, config, config.steps_stage1,
        rng=np.random.default_rng(config.seed))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.stage1_path = out_dir / "stage1.ckpt"
        save_checkpoint(result.stage1_path, params)

    result.stage2_losses = train_on_examples(
        params, stage2, config, config.steps_stage2,
        rng=np.random.default_rng(config.seed + 1))
    if out_dir is not None:
        result.stage2_path = out_dir / "stage2.ckpt"
        save_checkpoint(result.stage2_path, params)
        result.vocab_path = out_dir / "vocab.txt"
        vocab.save(result.vocab_path)
    return result


def grad_check(params: ModelParams, example: TrainExample, h: float = 1e-5,
               n_coords: int = 200, seed: int = 0) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Samples at least ``n_coords`` parameter coordinates; each one costs
    two extra forward passes. 64-bit only.
    """
    if h <= 0:
        raise ValueError(f"finite-difference step h must be > 0, got {h}")

    def loss_value() -> float:
        return float(sequence_loss(example.fin, example.target_ids, params, PAD_ID).data)

    loss = sequence_loss(example.fin, example.target_ids, params, PAD_ID)
    ad.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    names = params.names()
    sizes = np.array([params[n].data.size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    picks = rng.choice(int(offsets[-1]), size=min(n_coords, int(offsets[-1])), replace=False)

    worst = 0.0
    for flat in sorted(int(p) for p in picks):
        t_idx = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[t_idx]
        local = flat - int(offsets[t_idx])
        p = params[name]
        orig = p.data.flat[local]
        p.data.flat[local] = orig + h
        plus = loss_value()
        p.data.flat[local] = orig - h
        minus = loss_value()
        p.data.flat[local] = orig
        fd = (plus - minus) / (2.0 * h)
        a = analytic[name].flat[local]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst
