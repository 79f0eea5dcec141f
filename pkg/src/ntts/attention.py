"""Alignment mechanisms for the acoustic decoder.

Three variants share one location-sensitive energy function:

- ``location_sensitive``: plain softmax over energies.
- ``monotonic``: soft monotonic recursion; alignment mass can only move
  forward and may leak past the final token, so total mass never grows.
- ``stepwise_monotonic``: each step either stays on the current token or
  advances by exactly one; selection probability is forced to 1 at the
  last token, so mass is conserved exactly and no token can be skipped.

All step functions are pure: callers own the state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ntts.tensor import DimensionError


class AttentionVariant(enum.Enum):
    LOCATION_SENSITIVE = "location_sensitive"
    MONOTONIC = "monotonic"
    STEPWISE_MONOTONIC = "stepwise_monotonic"

    @classmethod
    def parse(cls, name: str) -> "AttentionVariant":
        aliases = {
            "ls": cls.LOCATION_SENSITIVE,
            "mono": cls.MONOTONIC,
            "sma": cls.STEPWISE_MONOTONIC,
        }
        if name in aliases:
            return aliases[name]
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown attention variant {name!r}") from None


@dataclass
class EncoderMemory:
    """Encoder outputs, shape (n_tokens, dim)."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise DimensionError("memory must be (n_tokens >= 1, dim)")

    @property
    def n_tokens(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class AlignmentState:
    """Current alignment plus the running sum of all alignments produced
    so far (the second location-feature channel)."""

    alignment: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self) -> None:
        self.alignment = np.asarray(self.alignment, dtype=np.float32)
        self.cumulative = np.asarray(self.cumulative, dtype=np.float32)
        if self.alignment.shape != self.cumulative.shape:
            raise DimensionError("alignment and cumulative must have equal length")

    @classmethod
    def initial(cls, n_tokens: int) -> "AlignmentState":
        """One-hot on token 0; cumulative starts at zero."""
        a = np.zeros(n_tokens, dtype=np.float32)
        a[0] = 1.0
        return cls(a, np.zeros(n_tokens, dtype=np.float32))

    def advanced(self, alignment: np.ndarray) -> "AlignmentState":
        return AlignmentState(alignment, self.cumulative + alignment)


@dataclass
class AttentionWeights:
    """Parameters of the location-sensitive energy function.

    location_kernels has shape (n_kernels, 2, width): the two input
    channels are the current and the cumulative alignment.
    """

    query_proj: np.ndarray     # (attn_dim, query_dim)
    memory_proj: np.ndarray    # (attn_dim, memory_dim)
    location_proj: np.ndarray  # (attn_dim, n_kernels)
    location_kernels: np.ndarray  # (n_kernels, 2, width)
    score_vector: np.ndarray   # (attn_dim,)
    score_bias: np.ndarray     # (attn_dim,)

    def __post_init__(self) -> None:
        a = self.score_vector.shape[0]
        for name in ("query_proj", "memory_proj", "location_proj"):
            if getattr(self, name).shape[0] != a:
                raise DimensionError(f"{name} output dim must match score_vector")
        if self.score_bias.shape[0] != a:
            raise DimensionError("score_bias must match score_vector length")
        if self.location_kernels.ndim != 3 or self.location_kernels.shape[1] != 2:
            raise DimensionError("location_kernels must be (n_kernels, 2, width)")
        if self.location_kernels.shape[0] != self.location_proj.shape[1]:
            raise DimensionError("location_proj input dim must match n_kernels")


def location_features(state: AlignmentState, kernels: np.ndarray) -> np.ndarray:
    """1-D cross-correlation of [alignment; cumulative] with the kernels.

    Same-length output with zero padding; width should be odd so the
    center tap aligns with the token position. Returns (n_kernels, T).
    """
    width = kernels.shape[2]
    signal = np.stack([state.alignment, state.cumulative])  # (2, T)
    left = width // 2
    padded = np.pad(signal, ((0, 0), (left, width - 1 - left)))
    windows = sliding_window_view(padded, width, axis=1)  # (2, T, width)
    return np.einsum("ctw,kcw->kt", windows, kernels, dtype=np.float32)


def energies(
    query: np.ndarray,
    memory: EncoderMemory,
    state: AlignmentState,
    w: AttentionWeights,
) -> np.ndarray:
    """e_i = v . tanh(Wq q + Wm h_i + Wl f_i + b) for each memory row i."""
    if state.alignment.shape[0] != memory.n_tokens:
        raise DimensionError("alignment length must match n_tokens")
    if query.shape[0] != w.query_proj.shape[1]:
        raise DimensionError("query dim mismatch")
    if memory.dim != w.memory_proj.shape[1]:
        raise DimensionError("memory dim mismatch")
    q = w.query_proj @ query                                  # (A,)
    m = memory.vectors @ w.memory_proj.T                      # (T, A)
    f = location_features(state, w.location_kernels)          # (K, T)
    loc = f.T @ w.location_proj.T                             # (T, A)
    return np.tanh(q[None, :] + m + loc + w.score_bias[None, :]) @ w.score_vector


def step_location_sensitive(e: np.ndarray) -> np.ndarray:
    """Softmax alignment (stabilized by max subtraction)."""
    shifted = e - np.max(e)
    x = np.exp(shifted)
    return (x / np.sum(x)).astype(np.float32)


def step_monotonic(e: np.ndarray, prev_alignment: np.ndarray) -> np.ndarray:
    """Soft monotonic attention recursion.

    p_i = sigmoid(e_i); q_i = (1 - p_{i-1}) q_{i-1} + prev_i with
    q_0 = prev_0; alpha_i = p_i q_i. Mass that moves past the final token
    leaks, so the total never increases.
    """
    p = np.float32(1.0) / (np.float32(1.0) + np.exp(-e.astype(np.float32)))
    prev = prev_alignment.astype(np.float32)
    alpha = np.empty_like(prev)
    q = prev[0]
    alpha[0] = p[0] * q
    for i in range(1, prev.shape[0]):
        q = (np.float32(1.0) - p[i - 1]) * q + prev[i]
        alpha[i] = p[i] * q
    return alpha


def step_stepwise_monotonic(e: np.ndarray, prev_alignment: np.ndarray) -> np.ndarray:
    """Stay-or-advance-one step; conserves probability mass exactly.

    alpha_i = prev_i p_i + prev_{i-1} (1 - p_{i-1}) with p forced to 1 at
    the final token so no mass can exit the sequence.
    """
    p = np.float32(1.0) / (np.float32(1.0) + np.exp(-e.astype(np.float32)))
    p[-1] = np.float32(1.0)
    prev = prev_alignment.astype(np.float32)
    alpha = prev * p
    alpha[1:] += prev[:-1] * (np.float32(1.0) - p[:-1])
    return alpha


def context(alignment: np.ndarray, memory: EncoderMemory) -> np.ndarray:
    """Expected memory row under the alignment distribution."""
    if alignment.shape[0] != memory.n_tokens:
        raise DimensionError("alignment length must match n_tokens")
    return alignment.astype(np.float32) @ memory.vectors


def attend(
    query: np.ndarray,
    memory: EncoderMemory,
    state: AlignmentState,
    w: AttentionWeights,
    variant: AttentionVariant,
) -> tuple[np.ndarray, AlignmentState]:
    """One full attention step: energies, variant-specific alignment
    update, cumulative accumulation, context. Returns (context, new state)."""
    e = energies(query, memory, state, w)
    if variant is AttentionVariant.LOCATION_SENSITIVE:
        alpha = step_location_sensitive(e)
    elif variant is AttentionVariant.MONOTONIC:
        alpha = step_monotonic(e, state.alignment)
    else:
        alpha = step_stepwise_monotonic(e, state.alignment)
    new_state = state.advanced(alpha)
    return context(alpha, memory), new_state
