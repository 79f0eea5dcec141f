"""Acoustic frontend: token encoder and autoregressive mel decoder.

The encoder embeds phoneme/punctuation token IDs and runs one
bidirectional LSTM layer; its output is computed once per utterance and
reused by every decoder step. The decoder emits two 80-bin mel frames per
step through a prenet -> LSTM -> attention -> projection chain, with the
attention variant selectable per run.

Inference is deterministic: prenet dropout is off by default, and when
enabled it is derived from a seed and the step index, so identical runs
stay bitwise-identical. Decoder state serializes to bytes; resuming from
serialized state continues the exact sample stream, which is what the
streaming pipeline's state queue relies on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ntts.attention import (
    AlignmentState,
    AttentionVariant,
    AttentionWeights,
    EncoderMemory,
    attend,
)
from ntts.dsp import MelSpectrogram
from ntts.tensor import DimensionError


class VocabularyError(ValueError):
    """A token ID is outside the embedding table."""


@dataclass(frozen=True)
class FrontendConfig:
    vocab_size: int = 64
    embed_dim: int = 512
    encoder_units: int = 512      # per direction
    decoder_units: int = 512
    prenet_dims: tuple[int, int] = (256, 256)
    attention_dim: int = 128
    location_n_kernels: int = 32
    location_kernel_width: int = 31
    frames_per_step: int = 2
    n_mels: int = 80
    max_steps: Optional[int] = None   # None -> 10 * n_tokens
    stop_threshold: float = 0.99
    stop_patience: int = 3
    prenet_dropout: float = 0.0
    dropout_seed: int = 0

    def __post_init__(self) -> None:
        if self.frames_per_step != 2:
            raise ValueError("decoder emits exactly two frames per step")
        if not 0.0 < self.stop_threshold < 1.0:
            raise ValueError("stop_threshold must be in (0, 1)")
        if self.vocab_size < 1 or self.stop_patience < 1:
            raise ValueError("vocab_size and stop_patience must be positive")

    @property
    def memory_dim(self) -> int:
        return 2 * self.encoder_units

    def effective_max_steps(self, n_tokens: int) -> int:
        return self.max_steps if self.max_steps is not None else 10 * n_tokens


@dataclass
class LstmParams:
    """Gate order [input; forget; cell; output], each `units` wide."""

    wx: np.ndarray  # (4*units, input_dim)
    wh: np.ndarray  # (4*units, units)
    b: np.ndarray   # (4*units,)


@dataclass
class FrontendWeights:
    embedding: np.ndarray            # (vocab, embed_dim)
    enc_fw: LstmParams
    enc_bw: LstmParams
    prenet_w1: np.ndarray            # (prenet1, n_mels)
    prenet_b1: np.ndarray
    prenet_w2: np.ndarray            # (prenet2, prenet1)
    prenet_b2: np.ndarray
    attention: AttentionWeights
    dec: LstmParams                  # input = prenet2 + memory_dim
    out_w: np.ndarray                # (2*n_mels, decoder_units + memory_dim)
    out_b: np.ndarray                # (2*n_mels,)

    @property
    def n_mels(self) -> int:
        return self.prenet_w1.shape[1]


def _lstm_step(p: LstmParams, x: np.ndarray, h: np.ndarray,
               c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    units = h.shape[0]
    gates = np.dot(p.wx, x) + np.dot(p.wh, h) + p.b
    one = np.float32(1.0)
    i = one / (one + np.exp(-gates[:units]))
    f = one / (one + np.exp(-gates[units:2 * units]))
    g = np.tanh(gates[2 * units:3 * units])
    o = one / (one + np.exp(-gates[3 * units:]))
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def encode(tokens: list[int] | np.ndarray, w: FrontendWeights) -> EncoderMemory:
    """Embedding lookup plus one bidirectional LSTM pass.

    Memory row t is [forward state at t; backward state at t], so its
    width is twice the per-direction unit count.
    """
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("token sequence must be a non-empty 1-D list")
    vocab = w.embedding.shape[0]
    if ids.min() < 0 or ids.max() >= vocab:
        bad = int(ids[(ids < 0) | (ids >= vocab)][0])
        raise VocabularyError(f"token ID {bad} outside vocabulary of {vocab}")
    embedded = w.embedding[ids]
    n = ids.shape[0]
    units = w.enc_fw.wh.shape[1]
    out = np.empty((n, 2 * units), dtype=np.float32)
    h = np.zeros(units, dtype=np.float32)
    c = np.zeros(units, dtype=np.float32)
    for t in range(n):
        h, c = _lstm_step(w.enc_fw, embedded[t], h, c)
        out[t, :units] = h
    h[:] = 0.0
    c[:] = 0.0
    for t in range(n - 1, -1, -1):
        h, c = _lstm_step(w.enc_bw, embedded[t], h, c)
        out[t, units:] = h
    return EncoderMemory(out)


_STATE_MAGIC = b"NTTSS01"


@dataclass
class DecoderState:
    """Everything needed to resume decoding exactly where it stopped."""

    h: np.ndarray              # decoder LSTM hidden
    c: np.ndarray              # decoder LSTM cell
    prev_context: np.ndarray   # attention context from the previous step
    att: AlignmentState
    prev_frame: np.ndarray     # last emitted mel frame
    step_index: int = 0
    final_mass_history: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.float32))

    @classmethod
    def initial(cls, memory: EncoderMemory, cfg: FrontendConfig) -> "DecoderState":
        return cls(
            h=np.zeros(cfg.decoder_units, dtype=np.float32),
            c=np.zeros(cfg.decoder_units, dtype=np.float32),
            prev_context=np.zeros(memory.dim, dtype=np.float32),
            att=AlignmentState.initial(memory.n_tokens),
            prev_frame=np.zeros(cfg.n_mels, dtype=np.float32),
        )

    def to_bytes(self) -> bytes:
        arrays = [self.h, self.c, self.prev_context, self.att.alignment,
                  self.att.cumulative, self.prev_frame, self.final_mass_history]
        parts = [_STATE_MAGIC, struct.pack("<I", self.step_index)]
        for a in arrays:
            data = np.ascontiguousarray(a, dtype=np.float32)
            parts.append(struct.pack("<I", data.shape[0]))
            parts.append(data.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DecoderState":
        if blob[:7] != _STATE_MAGIC:
            raise ValueError("not a serialized decoder state")
        off = 7
        (step_index,) = struct.unpack_from("<I", blob, off)
        off += 4
        arrays = []
        for _ in range(7):
            (n,) = struct.unpack_from("<I", blob, off)
            off += 4
            arrays.append(np.frombuffer(blob, dtype="<f4", count=n, offset=off).copy())
            off += 4 * n
        h, c, ctx, alignment, cumulative, prev_frame, history = arrays
        return cls(h, c, ctx, AlignmentState(alignment, cumulative),
                   prev_frame, step_index, history)


def _prenet(frame: np.ndarray, w: FrontendWeights,
            cfg: FrontendConfig | None, step_index: int) -> np.ndarray:
    x = np.maximum(np.dot(w.prenet_w1, frame) + w.prenet_b1, np.float32(0.0))
    x = _prenet_dropout(x, w, cfg, step_index, 0)
    x = np.maximum(np.dot(w.prenet_w2, x) + w.prenet_b2, np.float32(0.0))
    return _prenet_dropout(x, w, cfg, step_index, 1)


def _prenet_dropout(x: np.ndarray, w: FrontendWeights,
                    cfg: FrontendConfig | None, step_index: int,
                    layer: int) -> np.ndarray:
    if cfg is None or cfg.prenet_dropout <= 0.0:
        return x
    # mask depends only on (seed, step, layer): deterministic and resumable
    rng = np.random.default_rng((cfg.dropout_seed, step_index, layer))
    keep = rng.random(x.shape[0]) >= cfg.prenet_dropout
    return x * (keep / np.float32(1.0 - cfg.prenet_dropout)).astype(np.float32)


def decoder_step(
    state: DecoderState,
    memory: EncoderMemory,
    w: FrontendWeights,
    variant: AttentionVariant,
    cfg: FrontendConfig | None = None,
) -> tuple[np.ndarray, DecoderState]:
    """One decoder step: exactly two mel frames and the successor state."""
    if state.prev_context.shape[0] != memory.dim:
        raise DimensionError("state context dim does not match memory")
    pre = _prenet(state.prev_frame, w, cfg, state.step_index)
    x = np.concatenate([pre, state.prev_context])
    h, c = _lstm_step(w.dec, x, state.h, state.c)
    ctx, att = attend(h, memory, state.att, w.attention, variant)
    out = np.dot(w.out_w, np.concatenate([h, ctx])) + w.out_b
    frames = out.reshape(2, -1)
    new_state = DecoderState(
        h=h, c=c, prev_context=ctx, att=att,
        prev_frame=frames[1].copy(),
        step_index=state.step_index + 1,
        final_mass_history=np.append(state.final_mass_history,
                                     att.alignment[-1]).astype(np.float32),
    )
    return frames, new_state


def should_stop(state: DecoderState, cfg: FrontendConfig) -> bool:
    """True once alignment mass sat on the final token above the threshold
    for `stop_patience` consecutive steps, or at the step cap."""
    n_tokens = state.att.alignment.shape[0]
    if state.step_index >= cfg.effective_max_steps(n_tokens):
        return True
    hist = state.final_mass_history
    if hist.shape[0] < cfg.stop_patience:
        return False
    return bool(np.all(hist[-cfg.stop_patience:] > cfg.stop_threshold))


def run_frontend(
    tokens: list[int] | np.ndarray,
    w: FrontendWeights,
    cfg: FrontendConfig,
    variant: AttentionVariant = AttentionVariant.STEPWISE_MONOTONIC,
) -> MelSpectrogram:
    """Serial reference path: encode once, then decode to completion."""
    memory = encode(tokens, w)
    state = DecoderState.initial(memory, cfg)
    chunks = []
    while True:
        frames, state = decoder_step(state, memory, w, variant, cfg)
        chunks.append(frames)
        if should_stop(state, cfg):
            break
    return MelSpectrogram(np.concatenate(chunks, axis=0))
