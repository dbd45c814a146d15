"""Toy-scale encoder-decoder recognizer over pen-trajectory features.

The encoder stacks bidirectional gated recurrent layers; the top layers
subsample their input sequence (keeping the 1st, 3rd, ... steps) so an
input of length L yields ceil(L / 2^p) annotation vectors. The decoder is
a single gated recurrent layer driven by additive attention with a
convolutional coverage term, and emits a distribution over the vocabulary
at every step. All maths runs in float64 on a small autodiff tape, which
keeps training gradients exact for the implemented forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, concat, log_softmax, no_grad
from .vocab import EOS_INDEX, SOS_INDEX, Vocabulary

MASK_NEG = -1e30  # additive attention bias that zeroes padded positions


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ArchConfig:
    """Architecture sizes plus the preprocessing knobs inference depends on."""

    input_dim: int = 8
    enc_layers: int = 2
    enc_hidden: int = 32          # per direction
    enc_pool: int = 1             # top layers whose input is subsampled
    dec_hidden: int = 64
    embed_dim: int = 32
    att_dim: int = 32
    cov_channels: int = 8
    cov_kernel: int = 5
    resample_spacing: float = 0.05
    max_decode_len: int = 30

    @property
    def annotation_dim(self) -> int:
        return 2 * self.enc_hidden

    def validate(self) -> None:
        sizes = (
            self.input_dim, self.enc_layers, self.enc_hidden, self.dec_hidden,
            self.embed_dim, self.att_dim, self.cov_channels, self.cov_kernel,
            self.max_decode_len,
        )
        if any(s <= 0 for s in sizes):
            raise ModelError("architecture sizes must be positive")
        if not 0 <= self.enc_pool <= self.enc_layers:
            raise ModelError("enc_pool must lie in [0, enc_layers]")
        if self.cov_kernel % 2 != 1:
            raise ModelError("cov_kernel must be odd")
        if self.resample_spacing <= 0:
            raise ModelError("resample_spacing must be positive")


def param_shapes(arch: ArchConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    """Named tensor shapes, in the fixed order they are created and serialized."""
    arch.validate()
    h, a = arch.enc_hidden, arch.annotation_dim
    hd, e, at, c = arch.dec_hidden, arch.embed_dim, arch.att_dim, arch.cov_channels
    shapes: dict[str, tuple[int, ...]] = {"emb": (vocab_size, e)}
    in_dim = arch.input_dim
    for layer in range(arch.enc_layers):
        for d in ("fwd", "bwd"):
            shapes[f"enc{layer}_{d}_wx"] = (in_dim, 3 * h)
            shapes[f"enc{layer}_{d}_wh"] = (h, 3 * h)
            shapes[f"enc{layer}_{d}_b"] = (3 * h,)
        in_dim = a
    shapes["dec_init_w"] = (a, hd)
    shapes["dec_init_b"] = (hd,)
    shapes["dec_wx"] = (e + a, 3 * hd)
    shapes["dec_wh"] = (hd, 3 * hd)
    shapes["dec_b"] = (3 * hd,)
    shapes["att_ws"] = (hd, at)
    shapes["att_ua"] = (a, at)
    shapes["att_b"] = (at,)
    shapes["att_v"] = (at,)
    shapes["cov_k"] = (arch.cov_kernel, c)
    shapes["cov_w"] = (c, at)
    shapes["out_ws"] = (hd, vocab_size)
    shapes["out_wc"] = (a, vocab_size)
    shapes["out_we"] = (e, vocab_size)
    shapes["out_b"] = (vocab_size,)
    return shapes


@dataclass
class ModelParams:
    """All trainable tensors plus the configuration they are shaped by."""

    arch: ArchConfig
    vocab: Vocabulary
    tensors: dict[str, np.ndarray]

    def validate(self) -> None:
        expected = param_shapes(self.arch, self.vocab.size)
        if set(expected) != set(self.tensors):
            raise ModelError("parameter names do not match the architecture")
        for name, shape in expected.items():
            t = self.tensors[name]
            if t.shape != shape:
                raise ModelError(f"tensor {name}: shape {t.shape}, expected {shape}")
            if not np.isfinite(t).all():
                raise ModelError(f"tensor {name}: non-finite values")

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.vocab, {k: v.copy() for k, v in self.tensors.items()})


def init_params(arch: ArchConfig, vocab: Vocabulary, seed: int) -> ModelParams:
    """Seeded init: uniform weights scaled by fan-in/fan-out, zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(arch, vocab.size).items():
        if name.endswith("_b"):
            tensors[name] = np.zeros(shape)
        else:
            fan_in = shape[0]
            fan_out = shape[-1] if len(shape) > 1 else 1
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-lim, lim, size=shape)
    return ModelParams(arch, vocab, tensors)


def zero_params(arch: ArchConfig, vocab: Vocabulary) -> ModelParams:
    """All-zero parameters; every emitted distribution is then uniform."""
    shapes = param_shapes(arch, vocab.size)
    return ModelParams(arch, vocab, {n: np.zeros(s) for n, s in shapes.items()})


@dataclass
class Annotations:
    """Encoder output: one vector per kept time step, plus the input length."""

    vectors: np.ndarray  # (K, annotation_dim)
    source_len: int


@dataclass
class ScoredDecode:
    """Greedy decode result: emitted tokens (end marker excluded) and the
    log-probability the model assigned to each emission."""

    tokens: list[int]
    self_logprobs: np.ndarray
    truncated: bool = False


# -- forward pass internals (batched; single-sample ops use B=1) -----------


def _wrap(params: ModelParams) -> dict[str, Tensor]:
    return {k: Tensor(v) for k, v in params.tensors.items()}


def _gru_cell(x: Tensor, h: Tensor, wx: Tensor, wh: Tensor, b: Tensor, hsize: int,
              mask_col: np.ndarray | None = None) -> Tensor:
    gx = x @ wx + b
    gh = h @ wh
    r = (gx[:, :hsize] + gh[:, :hsize]).sigmoid()
    z = (gx[:, hsize:2 * hsize] + gh[:, hsize:2 * hsize]).sigmoid()
    n = (gx[:, 2 * hsize:] + r * gh[:, 2 * hsize:]).tanh()
    h_new = n + z * (h - n)
    if mask_col is None:
        return h_new
    return mask_col * h_new + (1.0 - mask_col) * h


def _encode_steps(pt: dict[str, Tensor], arch: ArchConfig, steps: list[np.ndarray],
                  lens: list[int]) -> tuple[Tensor, list[int]]:
    """Run the encoder stack over a padded time-major batch.

    Returns the (B, K, annotation_dim) annotation tensor and per-sample
    annotation counts. Padded positions carry junk values; callers mask them.
    """
    batch = steps[0].shape[0]
    h_sz = arch.enc_hidden
    cur: list[Tensor] = [as_tensor(s) for s in steps]
    cur_lens = list(lens)
    for layer in range(arch.enc_layers):
        if layer >= arch.enc_layers - arch.enc_pool:
            cur = cur[::2]
            cur_lens = [(n + 1) // 2 for n in cur_lens]
        t_steps = len(cur)
        if min(cur_lens) == t_steps:
            masks: list[np.ndarray | None] = [None] * t_steps
        else:
            lens_arr = np.asarray(cur_lens)
            masks = [(t < lens_arr)[:, None].astype(np.float64) for t in range(t_steps)]
        outs: dict[str, list[Tensor]] = {}
        for direction, order in (("fwd", range(t_steps)), ("bwd", range(t_steps - 1, -1, -1))):
            wx = pt[f"enc{layer}_{direction}_wx"]
            wh = pt[f"enc{layer}_{direction}_wh"]
            b = pt[f"enc{layer}_{direction}_b"]
            h = Tensor(np.zeros((batch, h_sz)))
            collected: list[Tensor] = [h] * t_steps
            for t in order:
                h = _gru_cell(cur[t], h, wx, wh, b, h_sz, masks[t])
                collected[t] = h
            outs[direction] = collected
        cur = [concat([f, bk], axis=1) for f, bk in zip(outs["fwd"], outs["bwd"])]
    ann = concat([c.reshape(batch, 1, arch.annotation_dim) for c in cur], axis=1)
    return ann, cur_lens


def _attention_mask_bias(klens: list[int], k_max: int) -> np.ndarray | None:
    if min(klens) == k_max:
        return None
    bias = np.zeros((len(klens), k_max))
    for i, n in enumerate(klens):
        bias[i, n:] = MASK_NEG
    return bias


def _init_decoder_state(pt: dict[str, Tensor], arch: ArchConfig, ann: Tensor,
                        klens: list[int]) -> tuple[Tensor, Tensor]:
    batch, k_max, _ = ann.shape
    if min(klens) == k_max:
        mean = ann.sum(axis=1) * (1.0 / k_max)
    else:
        valid = np.zeros((batch, k_max, 1))
        for i, n in enumerate(klens):
            valid[i, :n, 0] = 1.0
        inv = (1.0 / np.asarray(klens, dtype=np.float64))[:, None]
        mean = (ann * valid).sum(axis=1) * inv
    s0 = (mean @ pt["dec_init_w"] + pt["dec_init_b"]).tanh()
    return s0, Tensor(np.zeros((batch, k_max)))


def _coverage_features(pt: dict[str, Tensor], arch: ArchConfig, cov_acc: Tensor) -> Tensor:
    batch, k_max = cov_acc.shape
    width, channels = arch.cov_kernel, arch.cov_channels
    pad = width // 2
    zeros = Tensor(np.zeros((batch, pad)))
    padded = concat([zeros, cov_acc, zeros], axis=1)
    out: Tensor | None = None
    for w in range(width):
        window = padded[:, w:w + k_max].reshape(batch, k_max, 1)
        term = window * pt["cov_k"][w].reshape(1, 1, channels)
        out = term if out is None else out + term
    return out


def _decode_step_core(pt: dict[str, Tensor], arch: ArchConfig, prev_emb: Tensor,
                      s_prev: Tensor, ann: Tensor, keys: Tensor,
                      mask_bias: np.ndarray | None, cov_acc: Tensor):
    batch, k_max, a_dim = ann.shape
    query = (s_prev @ pt["att_ws"]).reshape(batch, 1, arch.att_dim)
    cov = _coverage_features(pt, arch, cov_acc) @ pt["cov_w"]
    act = (keys + query + cov).tanh()
    energy = (act * pt["att_v"]).sum(axis=2)
    if mask_bias is not None:
        energy = energy + mask_bias
    alpha = log_softmax(energy, axis=1).exp()
    ctx = (alpha.reshape(batch, 1, k_max) @ ann).reshape(batch, a_dim)
    x = concat([prev_emb, ctx], axis=1)
    s = _gru_cell(x, s_prev, pt["dec_wx"], pt["dec_wh"], pt["dec_b"], arch.dec_hidden)
    logits = s @ pt["out_ws"] + ctx @ pt["out_wc"] + prev_emb @ pt["out_we"] + pt["out_b"]
    return logits, s, alpha, cov_acc + alpha


def _teacher_forced_steps(pt: dict[str, Tensor], arch: ArchConfig, ann: Tensor,
                          klens: list[int], feed: np.ndarray, targets: np.ndarray,
                          collect_argmax: bool = False):
    """Per-step log-probabilities of ``targets`` when ``feed`` is fed stepwise.

    ``feed``/``targets`` are (B, T) int arrays; returns a (B, T) tensor of
    log P(targets[:, t]) and optionally the per-step argmax indices.
    """
    batch, t_steps = feed.shape
    keys = _attention_keys(pt, ann)
    mask_bias = _attention_mask_bias(klens, ann.shape[1])
    s, cov = _init_decoder_state(pt, arch, ann, klens)
    rows = np.arange(batch)
    cols: list[Tensor] = []
    argmax = np.zeros((batch, t_steps), dtype=np.int64) if collect_argmax else None
    for t in range(t_steps):
        prev_emb = pt["emb"][feed[:, t]]
        logits, s, _, cov = _decode_step_core(pt, arch, prev_emb, s, ann, keys, mask_bias, cov)
        ls = log_softmax(logits, axis=1)
        if collect_argmax:
            argmax[:, t] = ls.data.argmax(axis=1)
        cols.append(ls[rows, targets[:, t]].reshape(batch, 1))
    return concat(cols, axis=1), argmax


def _attention_keys(pt: dict[str, Tensor], ann: Tensor) -> Tensor:
    return ann @ pt["att_ua"] + pt["att_b"]


def _steps_from_feats(feats_list: list[np.ndarray], input_dim: int):
    lens = [f.shape[0] for f in feats_list]
    l_max = max(lens)
    padded = np.zeros((len(feats_list), l_max, input_dim))
    for i, f in enumerate(feats_list):
        padded[i, : lens[i]] = f
    return [np.ascontiguousarray(padded[:, t, :]) for t in range(l_max)], lens


def _batch_tokens(token_seqs: list[list[int]], extra_eos: bool):
    """Feed/target/mask arrays for teacher forcing, optionally with the end token."""
    lens = [len(s) + (1 if extra_eos else 0) for s in token_seqs]
    t_max = max(lens)
    feed = np.full((len(token_seqs), t_max), EOS_INDEX, dtype=np.int64)
    targets = np.full((len(token_seqs), t_max), EOS_INDEX, dtype=np.int64)
    mask = np.zeros((len(token_seqs), t_max))
    for i, seq in enumerate(token_seqs):
        full = list(seq) + ([EOS_INDEX] if extra_eos else [])
        feed[i, : len(full)] = [SOS_INDEX] + full[:-1]
        targets[i, : len(full)] = full
        mask[i, : len(full)] = 1.0
    return feed, targets, mask


# -- public operations ------------------------------------------------------


def encode(params: ModelParams, feats: np.ndarray) -> Annotations:
    """Encode a feature sequence into ceil(L / 2^p) annotation vectors."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ModelError("empty or malformed feature sequence")
    if feats.shape[1] != params.arch.input_dim:
        raise ModelError(f"feature dim {feats.shape[1]}, expected {params.arch.input_dim}")
    with no_grad():
        steps = [feats[t : t + 1] for t in range(feats.shape[0])]
        ann, _ = _encode_steps(_wrap(params), params.arch, steps, [feats.shape[0]])
    return Annotations(vectors=ann.data[0], source_len=feats.shape[0])


def init_decoder_state(params: ModelParams, ann: Annotations) -> tuple[np.ndarray, np.ndarray]:
    """Initial decoder state (projection of the mean annotation) and zero coverage."""
    with no_grad():
        s0, cov = _init_decoder_state(_wrap(params), params.arch, as_tensor(ann.vectors[None]),
                                      [len(ann.vectors)])
    return s0.data[0], cov.data[0]


def decode_step(params: ModelParams, prev_token: int, state: np.ndarray,
                ann: Annotations, coverage_acc: np.ndarray):
    """One decoder step: (symbol distribution, new state, attention, new coverage)."""
    arch = params.arch
    k = len(ann.vectors)
    if not 0 <= prev_token < params.vocab.size:
        raise ModelError(f"token index {prev_token} out of range")
    if np.shape(state) != (arch.dec_hidden,):
        raise ModelError("decoder state has wrong dimension")
    if np.shape(coverage_acc) != (k,):
        raise ModelError("coverage accumulator does not match annotation count")
    if ann.vectors.shape[1] != arch.annotation_dim:
        raise ModelError("annotation vectors do not match the architecture")
    with no_grad():
        pt = _wrap(params)
        ann_t = as_tensor(ann.vectors[None])
        keys = _attention_keys(pt, ann_t)
        prev_emb = pt["emb"][np.asarray([prev_token])]
        logits, s, alpha, cov = _decode_step_core(
            pt, arch, prev_emb, as_tensor(np.asarray(state)[None]), ann_t, keys, None,
            as_tensor(np.asarray(coverage_acc)[None]),
        )
        dist = np.exp(log_softmax(logits, axis=1).data[0])
    return dist, s.data[0], alpha.data[0], cov.data[0]


def greedy_decode(params: ModelParams, ann: Annotations, max_len: int | None = None) -> ScoredDecode:
    """Greedy argmax decoding from the start token; ties break to the lowest index."""
    arch = params.arch
    if max_len is None:
        max_len = arch.max_decode_len
    if max_len < 1:
        raise ModelError("max_len must be at least 1")
    with no_grad():
        pt = _wrap(params)
        ann_t = as_tensor(ann.vectors[None])
        keys = _attention_keys(pt, ann_t)
        s, cov = _init_decoder_state(pt, arch, ann_t, [len(ann.vectors)])
        prev = SOS_INDEX
        tokens: list[int] = []
        logprobs: list[float] = []
        truncated = True
        for _ in range(max_len):
            prev_emb = pt["emb"][np.asarray([prev])]
            logits, s, _, cov = _decode_step_core(pt, arch, prev_emb, s, ann_t, keys, None, cov)
            ls = log_softmax(logits, axis=1).data[0]
            tok = int(ls.argmax())
            if tok == EOS_INDEX:
                truncated = False
                break
            tokens.append(tok)
            logprobs.append(float(ls[tok]))
            prev = tok
    return ScoredDecode(tokens=tokens, self_logprobs=np.asarray(logprobs), truncated=truncated)


def teacher_forced_logprobs(params: ModelParams, ann: Annotations, tokens: list[int]) -> np.ndarray:
    """log P(tokens[i] | annotations, tokens[:i]) with the start token prepended."""
    if len(tokens) == 0:
        raise ModelError("empty token sequence")
    if any(not 0 <= t < params.vocab.size for t in tokens):
        raise ModelError("token index out of range")
    with no_grad():
        feed, targets, _ = _batch_tokens([list(tokens)], extra_eos=False)
        pt = _wrap(params)
        ann_t = as_tensor(ann.vectors[None])
        lp, _ = _teacher_forced_steps(pt, params.arch, ann_t, [len(ann.vectors)], feed, targets)
    return lp.data[0]


def cross_logprob_sums(params: ModelParams, ann: Annotations,
                       token_seqs: list[list[int]]) -> np.ndarray:
    """Batched total teacher-forced log-probability of many sequences against
    one annotation set. Sequences must be non-empty."""
    if any(len(s) == 0 for s in token_seqs):
        raise ModelError("empty token sequence")
    with no_grad():
        pt = _wrap(params)
        batch = len(token_seqs)
        feed, targets, mask = _batch_tokens([list(s) for s in token_seqs], extra_eos=False)
        ann_b = as_tensor(np.ascontiguousarray(np.broadcast_to(
            ann.vectors[None], (batch,) + ann.vectors.shape)))
        lp, _ = _teacher_forced_steps(pt, params.arch, ann_b, [len(ann.vectors)] * batch,
                                      feed, targets)
    return (lp.data * mask).sum(axis=1)


def loss_and_gradients(params: ModelParams, batch: list[tuple[np.ndarray, list[int]]]):
    """Mean token-level cross-entropy (end token included) and exact gradients."""
    if not batch:
        raise ModelError("empty batch")
    pt = _wrap(params)
    arch = params.arch
    steps, lens = _steps_from_feats([np.asarray(f, dtype=np.float64) for f, _ in batch],
                                    arch.input_dim)
    ann, klens = _encode_steps(pt, arch, steps, lens)
    feed, targets, mask = _batch_tokens([list(t) for _, t in batch], extra_eos=True)
    lp, _ = _teacher_forced_steps(pt, arch, ann, klens, feed, targets)
    total_tokens = int(mask.sum())
    loss_t = -((lp * mask).sum() / float(total_tokens))
    loss = float(loss_t.data)
    if not math.isfinite(loss):
        raise ModelError(f"non-finite training loss {loss!r} on batch of {len(batch)}")
    loss_t.backward()
    grads = {name: (pt[name].grad if pt[name].grad is not None else np.zeros_like(arr))
             for name, arr in params.tensors.items()}
    return loss, grads


def teacher_forced_accuracy(params: ModelParams, batch: list[tuple[np.ndarray, list[int]]]) -> float:
    """Fraction of target tokens (end token included) predicted by argmax."""
    if not batch:
        raise ModelError("empty batch")
    with no_grad():
        pt = _wrap(params)
        arch = params.arch
        steps, lens = _steps_from_feats([np.asarray(f, dtype=np.float64) for f, _ in batch],
                                        arch.input_dim)
        ann, klens = _encode_steps(pt, arch, steps, lens)
        feed, targets, mask = _batch_tokens([list(t) for _, t in batch], extra_eos=True)
        _, argmax = _teacher_forced_steps(pt, arch, ann, klens, feed, targets, collect_argmax=True)
    hits = ((argmax == targets) & (mask > 0)).sum()
    return float(hits) / float(mask.sum())
