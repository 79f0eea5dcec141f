"""Split-state autoregressive vocoder.

The hidden state of a single GRU is split in half: the first half predicts
the current sample and the second half the next one, so one recurrent
matrix-vector product (the dominant cost) serves two samples. A naive
reference path that recomputes the product per half-step exists purely as
an equivalence oracle and speed baseline, together with a conventional
one-sample-per-step model.

Output is 8-bit mu-law, sampled from the head logits with the Gumbel-Max
trick; de-emphasis is the final step of waveform synthesis.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ntts import _kernels
from ntts.dsp import (
    AudioBuffer,
    Deemphasizer,
    MelSpectrogram,
    SignalConfig,
    mulaw_decode_array,
)
from ntts.tensor import DimensionError, Matrix, OpCounters


class NoiseExhaustedError(RuntimeError):
    """A sampling step requested more noise than the buffer holds."""


@dataclass(frozen=True)
class VocoderConfig:
    hidden: int = 512
    embed_dim: int = 32
    classes: int = 256
    samples_per_frame: int = 240
    pairs_per_frame: int = 120
    head_hidden: int = 256
    n_mels: int = 80

    def __post_init__(self) -> None:
        if self.hidden % 2:
            raise ValueError("hidden size must be even")
        if self.samples_per_frame != 2 * self.pairs_per_frame:
            raise ValueError("samples_per_frame must be 2 * pairs_per_frame")
        if self.classes != 256:
            raise ValueError("output is 8-bit: classes must be 256")

    @property
    def half(self) -> int:
        return self.hidden // 2


@dataclass
class HeadWeights:
    """relu(w1 x + b1) -> w2 . + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class VocoderWeights:
    """Split-state model parameters.

    The recurrent matrix r is (3*hidden, hidden): gate blocks [z; r; n],
    each with the A-half sublanes first. w_xa / w_xb map the previous-code
    embedding into the A / B sublanes of the three gates.
    """

    embedding: np.ndarray   # (classes, embed_dim)
    w_xa: np.ndarray        # (3*hidden/2, embed_dim)
    w_xb: np.ndarray        # (3*hidden/2, embed_dim)
    r: Matrix               # (3*hidden, hidden), column-major by default
    gate_bias: np.ndarray   # (3*hidden,)
    cond_w: np.ndarray      # (3*hidden, n_mels)
    cond_bias: np.ndarray   # (3*hidden,)
    head_a: HeadWeights
    head_b: HeadWeights

    def validate(self, cfg: VocoderConfig) -> None:
        h, hh = cfg.hidden, cfg.half
        checks = [
            (self.embedding.shape, (cfg.classes, cfg.embed_dim), "embedding"),
            (self.w_xa.shape, (3 * hh, cfg.embed_dim), "w_xa"),
            (self.w_xb.shape, (3 * hh, cfg.embed_dim), "w_xb"),
            ((self.r.rows, self.r.cols), (3 * h, h), "r"),
            (self.gate_bias.shape, (3 * h,), "gate_bias"),
            (self.cond_w.shape, (3 * h, cfg.n_mels), "cond_w"),
            (self.cond_bias.shape, (3 * h,), "cond_bias"),
        ]
        for head, tag in ((self.head_a, "head_a"), (self.head_b, "head_b")):
            checks += [
                (head.w1.shape, (cfg.head_hidden, hh), f"{tag}.w1"),
                (head.b1.shape, (cfg.head_hidden,), f"{tag}.b1"),
                (head.w2.shape, (cfg.classes, cfg.head_hidden), f"{tag}.w2"),
                (head.b2.shape, (cfg.classes,), f"{tag}.b2"),
            ]
        for got, want, name in checks:
            if tuple(got) != tuple(want):
                raise DimensionError(f"{name}: expected shape {want}, got {tuple(got)}")


@dataclass
class BaselineWeights:
    """Conventional per-sample model: full-width input matrix and a single
    head reading the whole hidden state."""

    embedding: np.ndarray   # (classes, embed_dim)
    w_x: np.ndarray         # (3*hidden, embed_dim)
    r: Matrix
    gate_bias: np.ndarray
    cond_w: np.ndarray
    cond_bias: np.ndarray
    head: HeadWeights       # w1: (head_hidden, hidden)


@dataclass
class VocoderState:
    """Per-session autoregressive state.

    cached_l holds the recurrent pre-activation of the most recent pair;
    it is only ever reused within a pair (half B), never across pair
    boundaries, so cached_l_valid is False whenever control is outside a
    pair. cached_cond changes only at frame boundaries.
    """

    h: np.ndarray
    prev_code: int
    cached_l: Optional[np.ndarray] = None
    cached_l_valid: bool = False
    cached_cond: Optional[np.ndarray] = None
    cond_frame_id: int = -1

    @classmethod
    def initial(cls, cfg: VocoderConfig) -> "VocoderState":
        # code 128 is the mu-law encoding of silence
        return cls(np.zeros(cfg.hidden, dtype=np.float32), cfg.classes // 2)

    def copy(self) -> "VocoderState":
        return VocoderState(
            self.h.copy(),
            self.prev_code,
            None if self.cached_l is None else self.cached_l.copy(),
            self.cached_l_valid,
            None if self.cached_cond is None else self.cached_cond.copy(),
            self.cond_frame_id,
        )


@dataclass
class NoiseBuffer:
    """Pre-sampled standard Gumbel values, consumed strictly in order."""

    values: np.ndarray
    cursor: int = 0

    def take(self, n: int) -> np.ndarray:
        if self.cursor + n > self.values.shape[0]:
            raise NoiseExhaustedError(
                f"need {n} noise values, {self.values.shape[0] - self.cursor} left"
            )
        out = self.values[self.cursor:self.cursor + n]
        self.cursor += n
        return out

    @property
    def remaining(self) -> int:
        return self.values.shape[0] - self.cursor


class NoiseSource:
    """Deterministic per-seed stream of per-frame Gumbel noise buffers.

    g = -ln(-ln(u)) with u uniform in (0, 1). Buffers may be generated
    ahead of consumption (even on another thread); output depends only on
    the draw order, which is fixed.
    """

    def __init__(self, seed: int, cfg: VocoderConfig) -> None:
        self._rng = np.random.default_rng(seed)
        self._per_frame = 2 * cfg.pairs_per_frame * cfg.classes

    def frame_noise(self) -> NoiseBuffer:
        u = self._rng.random(self._per_frame, dtype=np.float32)
        np.maximum(u, np.float32(np.finfo(np.float32).tiny), out=u)
        np.log(u, out=u)
        np.negative(u, out=u)
        np.log(u, out=u)
        np.negative(u, out=u)
        return NoiseBuffer(u)


def gumbel_max(logits: np.ndarray, g: np.ndarray) -> int:
    """Sample from softmax(logits) as argmax(logits + g).

    Operates on logits (pre-softmax); adding Gumbel noise to probabilities
    instead does not sample from the softmax (see gumbel_max_probs).
    """
    if logits.shape != g.shape:
        raise DimensionError("logits and noise must have the same length")
    return int(np.argmax(logits.astype(np.float32) + g))


def gumbel_max_probs(probs: np.ndarray, g: np.ndarray) -> int:
    """Literal 'add noise to the softmax outputs' variant.

    Kept only for comparison experiments: its sampling distribution is not
    softmax(logits). Never used on any synthesis path.
    """
    return int(np.argmax(probs.astype(np.float32) + g))


def cdf_sample(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF sampling: smallest index whose cumulative mass exceeds u."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probs must be a distribution summing to 1 within 1e-6")
    c = np.cumsum(p)
    c[-1] = max(c[-1], 1.0)  # guard rounding at the top end
    return int(np.searchsorted(c, u, side="right"))


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float32)


class VocoderSession:
    """Prepared split-state model plus its operation counters.

    The per-code input contributions W_x @ embed[code] are tabulated once
    at construction; every synthesis path reads the same tables, so the
    precomputation cannot change any output.
    """

    def __init__(
        self,
        weights: VocoderWeights,
        cfg: VocoderConfig,
        counters: OpCounters | None = None,
        use_cond_cache: bool = True,
    ) -> None:
        weights.validate(cfg)
        self.cfg = cfg
        self.counters = counters if counters is not None else OpCounters()
        self.use_cond_cache = use_cond_cache
        self._r = _c(weights.r.as_array())
        self._gate_bias = _c(weights.gate_bias)
        self._cond_w = _c(weights.cond_w)
        self._cond_bias = _c(weights.cond_bias)
        self._tab_a = _c(weights.embedding @ weights.w_xa.T)
        self._tab_b = _c(weights.embedding @ weights.w_xb.T)
        ha, hb = weights.head_a, weights.head_b
        self._head_a = (_c(ha.w1), _c(ha.b1), _c(ha.w2), _c(ha.b2))
        self._head_b = (_c(hb.w1), _c(hb.b1), _c(hb.w2), _c(hb.b2))
        _kernels.warmup()

    # -- conditioning ------------------------------------------------------

    def condition_frame(self, frame: np.ndarray) -> np.ndarray:
        """cond = C @ frame + bias_C, one matvec."""
        frame = np.asarray(frame, dtype=np.float32)
        if frame.shape != (self.cfg.n_mels,):
            raise DimensionError(f"frame must have {self.cfg.n_mels} mel bins")
        self.counters.count_matvec(self._cond_w.shape[0], self._cond_w.shape[1])
        return np.dot(self._cond_w, frame) + self._cond_bias

    def _condb(self, cond: np.ndarray) -> np.ndarray:
        # same association order as the in-kernel recomputation
        return _c(cond + self._gate_bias)

    # -- pair-level ops ----------------------------------------------------

    def _pair(self, state: VocoderState, cond: np.ndarray, noise: NoiseBuffer,
              recompute: bool) -> tuple[int, int, VocoderState]:
        classes = self.cfg.classes
        na = _c(noise.take(classes))
        nb = _c(noise.take(classes))
        h = state.h.copy()
        l_out = np.empty(3 * self.cfg.hidden, dtype=np.float32)
        code_t, code_t1 = _kernels.pair_step(
            self._r, self._condb(cond), self._tab_a, self._tab_b,
            *self._head_a, *self._head_b,
            h, state.prev_code, na, nb, recompute, l_out,
        )
        self.counters.count_matvec(3 * self.cfg.hidden, self.cfg.hidden,
                                   2 if recompute else 1)
        self.counters.count_head(2)
        new_state = VocoderState(h, int(code_t1), l_out, False,
                                 state.cached_cond, state.cond_frame_id)
        return int(code_t), int(code_t1), new_state

    def split_state_pair(self, state: VocoderState, cond: np.ndarray,
                         noise: NoiseBuffer) -> tuple[int, int, VocoderState]:
        """Two samples from a single recurrent matvec: the pre-nonlinearity
        product is stored and reused by the second half-step."""
        return self._pair(state, cond, noise, recompute=False)

    def reference_pair(self, state: VocoderState, cond: np.ndarray,
                       noise: NoiseBuffer) -> tuple[int, int, VocoderState]:
        """Oracle path: recomputes the recurrent matvec for the second
        half-step. Identical output; two matvecs instead of one."""
        return self._pair(state, cond, noise, recompute=True)

    # -- frame / utterance synthesis ----------------------------------------

    def synth_frame(self, state: VocoderState, frame: np.ndarray,
                    noise: NoiseBuffer) -> tuple[np.ndarray, VocoderState]:
        """240 mu-law codes for one mel frame; state advances."""
        cfg = self.cfg
        block = _c(noise.take(2 * cfg.pairs_per_frame * cfg.classes))
        h = state.h.copy()
        codes = np.empty(cfg.samples_per_frame, dtype=np.int64)
        l_out = np.empty(3 * cfg.hidden, dtype=np.float32)
        frame = _c(frame)
        frame_id = state.cond_frame_id + 1
        if self.use_cond_cache:
            cond = self.condition_frame(frame)
            last = _kernels.frame_kernel(
                self._r, self._condb(cond), self._tab_a, self._tab_b,
                *self._head_a, *self._head_b,
                h, state.prev_code, block, codes, l_out,
            )
            cached_cond = cond
        else:
            last = _kernels.frame_kernel_nocache(
                self._r, self._cond_w, self._cond_bias, self._gate_bias, frame,
                self._tab_a, self._tab_b,
                *self._head_a, *self._head_b,
                h, state.prev_code, block, codes, l_out,
            )
            self.counters.count_matvec(self._cond_w.shape[0], self._cond_w.shape[1],
                                       cfg.pairs_per_frame)
            cached_cond = state.cached_cond
        self.counters.count_matvec(3 * cfg.hidden, cfg.hidden, cfg.pairs_per_frame)
        self.counters.count_head(2 * cfg.pairs_per_frame)
        new_state = VocoderState(h, int(last), l_out, False, cached_cond, frame_id)
        return codes, new_state


def synth(
    mel: MelSpectrogram,
    weights: VocoderWeights,
    cfg: VocoderConfig,
    sig: SignalConfig,
    seed: int,
    counters: OpCounters | None = None,
    use_cond_cache: bool = True,
    prefetch_noise: bool = False,
) -> AudioBuffer:
    """Full vocoder path: per-frame synthesis, mu-law decode, de-emphasis.

    With prefetch_noise the next frame's Gumbel buffer is generated on a
    helper thread while the current frame synthesizes; consumption order
    is fixed, so the output is identical either way.
    """
    if mel.n_mels != cfg.n_mels:
        raise DimensionError(f"mel has {mel.n_mels} bins, expected {cfg.n_mels}")
    session = VocoderSession(weights, cfg, counters, use_cond_cache)
    state = VocoderState.initial(cfg)
    source = NoiseSource(seed, cfg)
    codes = np.empty(mel.n_frames * cfg.samples_per_frame, dtype=np.int64)

    if prefetch_noise and mel.n_frames:
        buffers: "queue.Queue[NoiseBuffer]" = queue.Queue(maxsize=1)

        def fill() -> None:
            for _ in range(mel.n_frames):
                buffers.put(source.frame_noise())

        t = threading.Thread(target=fill, name="ntts-noise", daemon=True)
        t.start()
        get_noise = buffers.get
    else:
        t = None
        get_noise = source.frame_noise

    for i in range(mel.n_frames):
        frame_codes, state = session.synth_frame(state, mel.frames[i], get_noise())
        codes[i * cfg.samples_per_frame:(i + 1) * cfg.samples_per_frame] = frame_codes
    if t is not None:
        t.join()
    samples = mulaw_decode_array(codes, cfg.classes - 1)
    return AudioBuffer(sig.sample_rate, Deemphasizer(sig.preemphasis).process(samples))


class BaselineSession:
    """Conventional WaveRNN loop: one full GRU update per sample.

    A different model from the split-state one (its own input matrix and
    head); only throughput is ever compared against it.
    """

    def __init__(self, weights: BaselineWeights, cfg: VocoderConfig,
                 counters: OpCounters | None = None) -> None:
        self.cfg = cfg
        self.counters = counters if counters is not None else OpCounters()
        self._r = _c(weights.r.as_array())
        self._static = _c(weights.cond_bias + weights.gate_bias)
        self._cond_w = _c(weights.cond_w)
        self._cond_bias = _c(weights.cond_bias)
        self._gate_bias = _c(weights.gate_bias)
        self._tab = _c(weights.embedding @ weights.w_x.T)
        hd = weights.head
        self._head = (_c(hd.w1), _c(hd.b1), _c(hd.w2), _c(hd.b2))
        _kernels.warmup()

    def synth_frame(self, state: VocoderState, frame: np.ndarray,
                    noise: NoiseBuffer) -> tuple[np.ndarray, VocoderState]:
        cfg = self.cfg
        block = _c(noise.take(cfg.samples_per_frame * cfg.classes))
        frame = _c(frame)
        cond = np.dot(self._cond_w, frame) + self._cond_bias
        self.counters.count_matvec(self._cond_w.shape[0], self._cond_w.shape[1])
        condb = _c(cond + self._gate_bias)
        h = state.h.copy()
        codes = np.empty(cfg.samples_per_frame, dtype=np.int64)
        last = _kernels.baseline_frame_kernel(
            self._r, condb, self._tab, *self._head, h, state.prev_code, block, codes)
        self.counters.count_matvec(3 * cfg.hidden, cfg.hidden, cfg.samples_per_frame)
        self.counters.count_head(cfg.samples_per_frame)
        return codes, VocoderState(h, int(last), None, False, cond,
                                   state.cond_frame_id + 1)


def per_sample_baseline(
    mel: MelSpectrogram,
    weights: BaselineWeights,
    cfg: VocoderConfig,
    sig: SignalConfig,
    seed: int,
    counters: OpCounters | None = None,
) -> AudioBuffer:
    """Synthesize with the per-sample baseline model (speed comparisons)."""
    session = BaselineSession(weights, cfg, counters)
    state = VocoderState.initial(cfg)
    source = NoiseSource(seed, cfg)
    codes = np.empty(mel.n_frames * cfg.samples_per_frame, dtype=np.int64)
    for i in range(mel.n_frames):
        frame_codes, state = session.synth_frame(state, mel.frames[i],
                                                 source.frame_noise())
        codes[i * cfg.samples_per_frame:(i + 1) * cfg.samples_per_frame] = frame_codes
    samples = mulaw_decode_array(codes, cfg.classes - 1)
    return AudioBuffer(sig.sample_rate, Deemphasizer(sig.preemphasis).process(samples))
