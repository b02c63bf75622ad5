"""Encoder-decoder transformer with an additive cross-attention bias.

Every decoder layer's encoder-decoder attention adds the same bias
matrix inside the softmax, across all heads. With no bias attached the
model is a plain transformer; a constant bias is equivalent to none by
softmax shift invariance, which the tests rely on.

Cross-attention keys and values come from the final encoder output at
every decoder layer. Layer norm is applied after each residual add, the
feedforward blocks use GELU, and positions are learned embeddings.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .inputs import FormattedInput
from .relevance import AttentionBias
from .vocab import BOS_ID, EOS_ID

NEG_INF = -1e9  # additive mask value; exp underflows to exactly 0.0


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    max_src_len: int = 512
    max_tgt_len: int = 48
    d_ff: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 7:
            raise ValueError("vocab_size must cover the six specials plus content")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.max_tgt_len < 1:
            raise ValueError("max_tgt_len must be >= 1")
        for field in ("d_model", "n_heads", "n_enc_layers", "n_dec_layers",
                      "max_src_len", "d_ff"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


INIT_SCALE = 0.08


def parameter_specs(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Ordered (name, shape, init kind) for every tensor the model owns."""
    d, dff = config.d_model, config.d_ff
    specs: list[tuple[str, tuple[int, ...], str]] = []

    def attn(name: str):
        for p in ("wq", "wk", "wv", "wo"):
            specs.append((f"{name}.{p}", (d, d), "uniform"))
        for p in ("bq", "bk", "bv", "bo"):
            specs.append((f"{name}.{p}", (d,), "uniform"))

    def norm(name: str):
        specs.append((f"{name}.gamma", (d,), "ones"))
        specs.append((f"{name}.beta", (d,), "zeros"))

    def ff(name: str):
        specs.append((f"{name}.w1", (d, dff), "uniform"))
        specs.append((f"{name}.b1", (dff,), "uniform"))
        specs.append((f"{name}.w2", (dff, d), "uniform"))
        specs.append((f"{name}.b2", (d,), "uniform"))

    specs.append(("tok_emb", (config.vocab_size, d), "uniform"))
    specs.append(("enc_pos_emb", (config.max_src_len, d), "uniform"))
    specs.append(("dec_pos_emb", (config.max_tgt_len + 1, d), "uniform"))
    for i in range(config.n_enc_layers):
        attn(f"enc.{i}.attn")
        norm(f"enc.{i}.ln1")
        ff(f"enc.{i}.ff")
        norm(f"enc.{i}.ln2")
    for i in range(config.n_dec_layers):
        attn(f"dec.{i}.self")
        norm(f"dec.{i}.ln1")
        attn(f"dec.{i}.cross")
        norm(f"dec.{i}.ln2")
        ff(f"dec.{i}.ff")
        norm(f"dec.{i}.ln3")
    specs.append(("out.w", (d, config.vocab_size), "uniform"))
    specs.append(("out.b", (config.vocab_size,), "uniform"))
    return specs


class ModelParams:
    """All weight tensors, keyed by name in a fixed order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def names(self) -> list[str]:
        return list(self.tensors)

    def n_values(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config,
                           {k: Tensor(v.data.copy(), name=k) for k, v in self.tensors.items()})

    @classmethod
    def initialize(cls, config: ModelConfig) -> "ModelParams":
        """Seeded uniform(-0.08, 0.08) weights; layer-norm affines at identity."""
        rng = np.random.default_rng(config.seed)
        tensors: dict[str, Tensor] = {}
        for name, shape, kind in parameter_specs(config):
            if kind == "uniform":
                data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
            elif kind == "ones":
                data = np.ones(shape)
            else:
                data = np.zeros(shape)
            tensors[name] = Tensor(data, name=name)
        return cls(config, tensors)


def causal_mask(t: int) -> np.ndarray:
    """Upper-triangular additive mask that zeroes attention to the future."""
    return np.triu(np.full((t, t), NEG_INF), k=1)


def biased_cross_attention(y: Tensor, x: Tensor, bias, wq: Tensor, wk: Tensor,
                           wv: Tensor, bq: Tensor | None = None, bk: Tensor | None = None,
                           bv: Tensor | None = None, *, causal: bool = False
                           ) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention with an additive bias inside the softmax.

    ``y`` (m, d) supplies queries, ``x`` (n, d) keys and values. ``bias``
    may be an AttentionBias, an (m, n) array, or None for no bias.
    Returns the attention map (m, n) and the context (m, d_k).
    """
    q = ad.matmul(y, wq)
    if bq is not None:
        q = ad.add(q, bq)
    k = ad.matmul(x, wk)
    if bk is not None:
        k = ad.add(k, bk)
    v = ad.matmul(x, wv)
    if bv is not None:
        v = ad.add(v, bv)
    d_k = wq.shape[1]
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d_k))
    m, n = logits.shape
    if causal:
        logits = ad.add_const(logits, causal_mask(m))
    if bias is not None:
        mat = bias.matrix(m) if isinstance(bias, AttentionBias) else np.asarray(bias, dtype=np.float64)
        if mat.shape != (m, n):
            raise ad.ShapeError(f"bias shape {mat.shape} does not match attention shape {(m, n)}")
        logits = ad.add_const(logits, mat)
    alpha = ad.softmax_rows(logits)
    context = ad.matmul(alpha, v)
    return alpha, context


def _multi_head(params: ModelParams, name: str, y: Tensor, x: Tensor, bias,
                causal: bool, collect: list | None) -> Tensor:
    """Heads share one bias; per-head weights are column slices."""
    P = params.tensors
    n_heads = params.config.n_heads
    dh = params.config.d_model // n_heads
    heads = []
    alphas = []
    for h in range(n_heads):
        lo, hi = h * dh, (h + 1) * dh
        alpha, ctx = biased_cross_attention(
            y, x, bias,
            ad.slice_cols(P[f"{name}.wq"], lo, hi),
            ad.slice_cols(P[f"{name}.wk"], lo, hi),
            ad.slice_cols(P[f"{name}.wv"], lo, hi),
            ad.slice_cols(P[f"{name}.bq"], lo, hi),
            ad.slice_cols(P[f"{name}.bk"], lo, hi),
            ad.slice_cols(P[f"{name}.bv"], lo, hi),
            causal=causal)
        heads.append(ctx)
        alphas.append(alpha.data)
    if collect is not None:
        collect.append(alphas)
    return ad.add(ad.matmul(ad.concat_cols(heads), P[f"{name}.wo"]), P[f"{name}.bo"])


def _feed_forward(params: ModelParams, name: str, x: Tensor) -> Tensor:
    P = params.tensors
    h = ad.gelu(ad.add(ad.matmul(x, P[f"{name}.w1"]), P[f"{name}.b1"]))
    return ad.add(ad.matmul(h, P[f"{name}.w2"]), P[f"{name}.b2"])


def _ln(params: ModelParams, name: str, x: Tensor) -> Tensor:
    P = params.tensors
    return ad.layer_norm(x, P[f"{name}.gamma"], P[f"{name}.beta"])


def encode(fin: FormattedInput, params: ModelParams) -> Tensor:
    """Run the encoder stack over the formatted input; returns (n, d)."""
    cfg = params.config
    ids = fin.ids
    if ids.size > cfg.max_src_len:
        raise ValueError(f"input of {ids.size} tokens exceeds max_src_len={cfg.max_src_len}")
    if ids.size and int(ids.max()) >= cfg.vocab_size:
        raise IndexError(f"token id {int(ids.max())} out of vocabulary (size {cfg.vocab_size})")
    P = params.tensors
    x = ad.add(ad.embedding(P["tok_emb"], ids),
               ad.embedding(P["enc_pos_emb"], np.arange(ids.size)))
    for i in range(cfg.n_enc_layers):
        attn_out = _multi_head(params, f"enc.{i}.attn", x, x, None, False, None)
        x = _ln(params, f"enc.{i}.ln1", ad.add(x, attn_out))
        x = _ln(params, f"enc.{i}.ln2", ad.add(x, _feed_forward(params, f"enc.{i}.ff", x)))
    return x


def decoder_logits(fin: FormattedInput, dec_input_ids: Sequence[int], params: ModelParams,
                   enc_out: Tensor | None = None, collect_attention: list | None = None,
                   trace: dict | None = None) -> Tensor:
    """Next-token logits at every decoder input position.

    ``dec_input_ids`` starts with <bos>. ``collect_attention`` gathers the
    cross-attention maps as [layer][head] arrays; ``trace`` captures named
    intermediate tensors for gradient inspection.
    """
    cfg = params.config
    ids = np.asarray(dec_input_ids, dtype=np.intp)
    if ids.size < 1:
        raise ValueError("decoder input must contain at least <bos>")
    if ids.size > cfg.max_tgt_len + 1:
        raise ValueError(f"decoder input of {ids.size} exceeds max_tgt_len+1={cfg.max_tgt_len + 1}")
    if int(ids.max()) >= cfg.vocab_size:
        raise IndexError(f"token id {int(ids.max())} out of vocabulary (size {cfg.vocab_size})")
    if enc_out is None:
        enc_out = encode(fin, params)
    P = params.tensors
    bias = fin.bias
    y = ad.add(ad.embedding(P["tok_emb"], ids),
               ad.embedding(P["dec_pos_emb"], np.arange(ids.size)))
    if trace is not None:
        trace["dec_emb"] = y
    for i in range(cfg.n_dec_layers):
        sa = _multi_head(params, f"dec.{i}.self", y, y, None, True, None)
        y = _ln(params, f"dec.{i}.ln1", ad.add(y, sa))
        ca = _multi_head(params, f"dec.{i}.cross", y, enc_out, bias, False, collect_attention)
        y = _ln(params, f"dec.{i}.ln2", ad.add(y, ca))
        y = _ln(params, f"dec.{i}.ln3", ad.add(y, _feed_forward(params, f"dec.{i}.ff", y)))
    return ad.add(ad.matmul(y, P["out.w"]), P["out.b"])


def forward(fin: FormattedInput, target_prefix: Sequence[int], params: ModelParams,
            collect_attention: list | None = None) -> Tensor:
    """Logits (t, vocab) at every position of the target prefix.

    Row i is the next-token distribution after consuming prefix[:i+1];
    the internal <bos> row is dropped.
    """
    prefix = list(target_prefix)
    if len(prefix) > params.config.max_tgt_len:
        raise ValueError(f"prefix of {len(prefix)} exceeds max_tgt_len={params.config.max_tgt_len}")
    logits = decoder_logits(fin, [BOS_ID] + prefix, params,
                            collect_attention=collect_attention)
    return ad.slice_rows(logits, 1, len(prefix) + 1)


def sequence_loss(fin: FormattedInput, target_ids: Sequence[int], params: ModelParams,
                  pad_id: int) -> Tensor:
    """Teacher-forced mean cross entropy for one example (EOS appended)."""
    target = list(target_ids)
    logits = decoder_logits(fin, [BOS_ID] + target, params)
    labels = np.asarray(target + [EOS_ID], dtype=np.intp)
    return ad.cross_entropy(logits, labels, pad_id)


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

StepFn = Callable[[list[int]], np.ndarray]


def _log_softmax(row: np.ndarray) -> np.ndarray:
    z = row - row.max()
    return z - math.log(np.exp(z).sum())


def _make_step_fn(fin: FormattedInput, params: ModelParams) -> StepFn:
    enc_out = encode(fin, params)

    def step(prefix: list[int]) -> np.ndarray:
        logits = decoder_logits(fin, [BOS_ID] + prefix, params, enc_out=enc_out)
        return _log_softmax(logits.data[-1])

    return step


def greedy_steps(step_fn: StepFn, eos_id: int, max_len: int) -> list[int]:
    """Argmax decoding until EOS or the length cap."""
    out: list[int] = []
    for _ in range(max_len):
        tok = int(np.argmax(step_fn(out)))
        if tok == eos_id:
            break
        out.append(tok)
    return out


def beam_search_steps(step_fn: StepFn, eos_id: int, beam_size: int, max_len: int) -> list[int]:
    """Beam search over a step function; scores are length-normalized.

    A hypothesis finishes on EOS (EOS counts toward its length) or at the
    cap. The best normalized finished hypothesis wins; exact ties keep the
    earliest-ranked candidate, which makes beam_size=1 match greedy.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    live: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(max_len):
        candidates: list[tuple[list[int], int, float]] = []
        for toks, lp in live:
            logp = step_fn(toks)
            for tid in np.argsort(-logp, kind="stable")[:beam_size]:
                candidates.append((toks, int(tid), lp + float(logp[tid])))
        candidates.sort(key=lambda c: -c[2])
        live = []
        for toks, tid, lp in candidates:
            if tid == eos_id:
                finished.append((lp / (len(toks) + 1), toks))
            else:
                live.append((toks + [tid], lp))
            if len(live) == beam_size:
                break
        if not live:
            break
    for toks, lp in live:
        finished.append((lp / max(len(toks), 1), toks))
    best = max(finished, key=lambda f: f[0])
    return best[1]


def greedy_decode(fin: FormattedInput, params: ModelParams, max_len: int = 48) -> list[int]:
    max_len = min(max_len, params.config.max_tgt_len)
    return greedy_steps(_make_step_fn(fin, params), EOS_ID, max_len)


def beam_search(fin: FormattedInput, params: ModelParams, beam_size: int = 4,
                max_len: int = 48) -> list[int]:
    """Paper-style decode: beam of 4, stop at EOS, cap at 48 tokens."""
    max_len = min(max_len, params.config.max_tgt_len)
    return beam_search_steps(_make_step_fn(fin, params), EOS_ID, beam_size, max_len)
