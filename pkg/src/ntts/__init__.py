"""Streaming neural TTS inference runtime.

A self-contained CPU inference stack for a two-network speech synthesizer:
an attention-based sequence-to-sequence acoustic frontend that emits
mel-spectrogram frames from phoneme token IDs, and a split-state
autoregressive RNN vocoder with 8-bit mu-law output. The streaming pipeline
connects the two through bounded queues and reports latency/throughput
metrics. No training code; weights are randomly generated or loaded from
the native container format.
"""

__version__ = "0.1.0"

from ntts.dsp import AudioBuffer, FeatureConfig, MelSpectrogram, SignalConfig
from ntts.frontend import FrontendConfig
from ntts.streaming import StreamConfig
from ntts.vocoder import VocoderConfig

__all__ = [
    "AudioBuffer",
    "FeatureConfig",
    "FrontendConfig",
    "MelSpectrogram",
    "SignalConfig",
    "StreamConfig",
    "VocoderConfig",
    "__version__",
]
