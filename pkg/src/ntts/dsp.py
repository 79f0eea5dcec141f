"""Audio signal chain: pre/de-emphasis, mu-law companding, mel features,
and 2x bandwidth extension by linear interpolation.

Everything operates on float32 samples in [-1, 1]. The de-emphasis filter
is exposed both as a one-shot function and as a stateful chunk processor;
the two are bitwise-identical for the same input stream (first-order IIR,
sample-sequential evaluation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from ntts.tensor import Matrix


class SampleRateError(ValueError):
    """Audio sample rate does not match what the operation requires."""


@dataclass(frozen=True)
class SignalConfig:
    """Vocoder-side signal parameters."""

    sample_rate: int = 24000
    preemphasis: float = 0.86
    mu: int = 255
    quantization_levels: int = 256

    def __post_init__(self) -> None:
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must be in [0, 1)")
        if self.quantization_levels != self.mu + 1:
            raise ValueError("quantization_levels must equal mu + 1")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass(frozen=True)
class FeatureConfig:
    """Mel analysis parameters. Defaults: 25 ms window / 10 ms hop at 24 kHz."""

    frame_length: int = 600
    hop: int = 240
    fft_size: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0

    def __post_init__(self) -> None:
        if not (0 < self.hop <= self.frame_length <= self.fft_size):
            raise ValueError("need hop <= frame_length <= fft_size")
        if self.fmin < 0 or self.fmax <= self.fmin:
            raise ValueError("need 0 <= fmin < fmax")


@dataclass
class AudioBuffer:
    """Float32 waveform plus its sample rate."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate


@dataclass
class MelSpectrogram:
    """Sequence of log-mel frames, shape (n_frames, n_mels)."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise ValueError("frames must be 2-D (n_frames, n_mels)")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


# ---------------------------------------------------------------------------
# Pre-emphasis / de-emphasis
# ---------------------------------------------------------------------------

def preemphasize_samples(x: np.ndarray, a: float) -> np.ndarray:
    """y[n] = x[n] - a*x[n-1] with x[-1] = 0."""
    x = np.asarray(x, dtype=np.float32)
    if x.size == 0:
        return x.copy()
    y = np.empty_like(x)
    y[0] = x[0]
    np.subtract(x[1:], np.float32(a) * x[:-1], out=y[1:])
    return y


def preemphasize(x: AudioBuffer, a: float) -> AudioBuffer:
    if not 0.0 <= a < 1.0:
        raise ValueError("preemphasis coefficient must be in [0, 1)")
    return AudioBuffer(x.sample_rate, preemphasize_samples(x.samples, a))


class Deemphasizer:
    """Stateful inverse filter x[n] = y[n] + a*x[n-1].

    Chunked processing with carried state is bitwise-identical to filtering
    the concatenated stream in one call, so the streaming pipeline and the
    serial path can share it.
    """

    def __init__(self, a: float) -> None:
        if not 0.0 <= a < 1.0:
            raise ValueError("deemphasis coefficient must be in [0, 1)")
        self._b = np.array([1.0], dtype=np.float32)
        self._a = np.array([1.0, -a], dtype=np.float32)
        self._zi = np.zeros(1, dtype=np.float32)

    def process(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=np.float32)
        if chunk.size == 0:
            return chunk.copy()
        out, self._zi = lfilter(self._b, self._a, chunk, zi=self._zi)
        return out


def deemphasize(y: AudioBuffer, a: float) -> AudioBuffer:
    """Exact inverse of `preemphasize` (stable first-order IIR for a < 1)."""
    return AudioBuffer(y.sample_rate, Deemphasizer(a).process(y.samples))


# ---------------------------------------------------------------------------
# mu-law companding
# ---------------------------------------------------------------------------

def mulaw_encode_array(samples: np.ndarray, mu: int = 255) -> np.ndarray:
    """Vectorized mu-law encoder; out-of-range inputs are clamped first.

    code = clamp(floor((m + 1) * 127.5 + 0.5), 0, 255) where
    m = sign(s) * ln(1 + mu*|s|) / ln(1 + mu).
    """
    s = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    m = np.sign(s) * np.log1p(mu * np.abs(s)) / math.log1p(mu)
    half = (mu + 1) / 2.0  # 128 levels per polarity -> scale 127.5
    codes = np.floor((m + 1.0) * half + 0.5)
    return np.clip(codes, 0, mu).astype(np.int64)


def mulaw_encode(sample: float, mu: int = 255) -> int:
    return int(mulaw_encode_array(np.array([sample]), mu)[0])


def mulaw_decode_table(mu: int = 255) -> np.ndarray:
    """Float32 lookup table decode(0..mu); decode(c) = -decode(mu - c)."""
    codes = np.arange(mu + 1, dtype=np.float64)
    m = codes / ((mu + 1) / 2.0) - 1.0
    s = np.sign(m) * np.expm1(np.abs(m) * math.log1p(mu)) / mu
    return s.astype(np.float32)


def mulaw_decode_array(codes: np.ndarray, mu: int = 255) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() > mu):
        raise ValueError(f"mu-law codes must be in 0..{mu}")
    return mulaw_decode_table(mu)[codes.astype(np.int64)]


def mulaw_decode(code: int, mu: int = 255) -> float:
    if not 0 <= code <= mu:
        raise ValueError(f"mu-law code {code} out of range 0..{mu}")
    return float(mulaw_decode_table(mu)[code])


# ---------------------------------------------------------------------------
# 24 kHz -> 48 kHz bandwidth extension
# ---------------------------------------------------------------------------

def upsample_48k(x: AudioBuffer) -> AudioBuffer:
    """2x upsampling by linear interpolation.

    Even output indices copy the input exactly; odd indices are midpoints,
    with the final midpoint repeating the last sample (no lookahead). The
    spectral images this leaves in the 12-24 kHz band are the intended
    bandwidth extension; no further filtering is applied.
    """
    if x.sample_rate != 24000:
        raise SampleRateError(f"upsample_48k expects 24000 Hz input, got {x.sample_rate}")
    s = x.samples
    n = s.shape[0]
    out = np.empty(2 * n, dtype=np.float32)
    if n:
        out[0::2] = s
        nxt = np.empty_like(s)
        nxt[:-1] = s[1:]
        nxt[-1] = s[-1]
        out[1::2] = (s + nxt) * np.float32(0.5)
    return AudioBuffer(48000, out)


# ---------------------------------------------------------------------------
# Mel features
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(cfg: FeatureConfig) -> np.ndarray:
    """Center frequencies (Hz) of the n_mels triangular filters."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def build_mel_filterbank(cfg: FeatureConfig, sample_rate: int = 24000) -> Matrix:
    """Triangular mel filterbank, shape (n_mels, fft_size/2 + 1).

    Centers are uniformly spaced on the mel scale between fmin and fmax.
    Raises if the FFT resolution leaves any filter without support.
    """
    if cfg.fmax > sample_rate / 2:
        raise ValueError("fmax exceeds Nyquist")
    n_bins = cfg.fft_size // 2 + 1
    fft_freqs = np.arange(n_bins, dtype=np.float64) * sample_rate / cfg.fft_size
    edges = mel_to_hz(
        np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    )
    weights = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for m in range(cfg.n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (fft_freqs - lo) / (center - lo)
        falling = (hi - fft_freqs) / (hi - center)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    if not np.all(weights.max(axis=1) > 0):
        empty = int(np.argmin(weights.max(axis=1)))
        raise ValueError(
            f"mel filter {empty} has no FFT bin support; "
            "reduce n_mels or increase fft_size"
        )
    return Matrix.from_array(weights.astype(np.float32))


def _frame_signal(x: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Centered frames via reflection padding; frame i is centered at i*hop."""
    half = frame_length // 2
    if x.shape[0] >= 2:
        padded = np.pad(x, (half, half), mode="reflect")
    else:
        padded = np.pad(x, (half, half), mode="edge")
    n_frames = math.ceil(x.shape[0] / hop)
    windows = sliding_window_view(padded, frame_length)[::hop]
    return np.ascontiguousarray(windows[:n_frames])


def extract_mel(x: AudioBuffer, cfg: FeatureConfig, sig: SignalConfig) -> MelSpectrogram:
    """Log-mel spectrogram of the pre-emphasized signal.

    STFT with a periodic Hann window (window zero-padded to fft_size),
    magnitude spectra through the mel filterbank, then log with a 1e-5
    floor. Frame count is ceil(len / hop).
    """
    if x.sample_rate != sig.sample_rate:
        raise SampleRateError(
            f"input rate {x.sample_rate} != configured {sig.sample_rate}"
        )
    if x.samples.size == 0:
        raise ValueError("cannot extract features from empty audio")
    emphasized = preemphasize_samples(x.samples, sig.preemphasis)
    frames = _frame_signal(emphasized, cfg.frame_length, cfg.hop)
    n = np.arange(cfg.frame_length, dtype=np.float64)
    window = (0.5 - 0.5 * np.cos(2.0 * np.pi * n / cfg.frame_length)).astype(np.float32)
    spectra = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1))
    fb = build_mel_filterbank(cfg, sig.sample_rate).as_array()
    mel = spectra.astype(np.float32) @ fb.T
    return MelSpectrogram(np.log(np.maximum(mel, np.float32(1e-5))))
