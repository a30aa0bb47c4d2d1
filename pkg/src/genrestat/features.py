"""Log-mel front end: 1024-point frames every 320 samples, 64 Slaney mel bands
between 50 Hz and 14 kHz, natural-log power with a 1e-10 floor.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._io import atomic_write_bytes
from .errors import ContractViolation, FormatError
from .ingest import SAMPLE_RATE, SEGMENT_SAMPLES, Segment

N_FFT = 1024
HOP = 320
N_MELS = 64
N_FRAMES = 496
F_MIN = 50.0
F_MAX = 14000.0
LOG_FLOOR = 1e-10
N_BINS = N_FFT // 2 + 1


@dataclass
class LogMelSpectrogram:
    values: np.ndarray  # (64, 496) float32
    programme_id: str = ""
    segment_index: int = 0

    @property
    def mel_bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_bins)
    f_min: float = F_MIN
    f_max: float = F_MAX


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(f >= min_log_hz,
                    min_log_mel + np.log(np.maximum(f, min_log_hz) / min_log_hz) / logstep,
                    f / f_sp)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel, min_log_hz * np.exp(logstep * (m - min_log_mel)), f_sp * m)


def mel_band_edges(n_mels: int = N_MELS, f_min: float = F_MIN, f_max: float = F_MAX) -> np.ndarray:
    """``n_mels + 2`` frequencies; band ``i`` spans edges ``i .. i+2``, centred on ``i+1``."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))


@lru_cache(maxsize=8)
def _filterbank(n_mels: int, f_min: float, f_max: float, n_fft: int, sr: int) -> np.ndarray:
    fft_freqs = np.linspace(0, sr / 2, n_fft // 2 + 1)
    edges = mel_band_edges(n_mels, f_min, f_max)
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]  # unit area per filter
    weights.flags.writeable = False
    return weights


def mel_filterbank(n_mels: int = N_MELS, f_min: float = F_MIN, f_max: float = F_MAX) -> MelFilterbank:
    return MelFilterbank(_filterbank(n_mels, f_min, f_max, N_FFT, SAMPLE_RATE), f_min, f_max)


@lru_cache(maxsize=1)
def hann_periodic(n: int = N_FFT) -> np.ndarray:
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    w.flags.writeable = False
    return w


def frame_and_window(seg: Segment | np.ndarray) -> np.ndarray:
    """(496, 1024) Hann-windowed frames; frame ``t`` starts at sample ``320 t``, no padding."""
    x = seg.samples if isinstance(seg, Segment) else np.asarray(seg, dtype=np.float64)
    if x.shape != (SEGMENT_SAMPLES,):
        raise ContractViolation(f"segment must have {SEGMENT_SAMPLES} samples, got {x.shape}")
    # 497 full frames fit; the first 496 form the network input.
    frames = np.lib.stride_tricks.sliding_window_view(x, N_FFT)[::HOP][:N_FRAMES]
    return frames * hann_periodic()


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    """|rfft|^2 per frame, bins 0..512."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != N_FFT:
        raise ContractViolation(f"frames must be (n, {N_FFT}), got {frames.shape}")
    spec = np.fft.rfft(frames, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def apply_log_mel(power: np.ndarray, fb: MelFilterbank | None = None,
                  programme_id: str = "", segment_index: int = 0) -> LogMelSpectrogram:
    fb = fb or mel_filterbank()
    if power.ndim != 2 or power.shape[1] != fb.weights.shape[1]:
        raise ContractViolation(f"power must be (frames, {fb.weights.shape[1]}), got {power.shape}")
    mel = fb.weights @ power.T
    values = np.log(np.maximum(mel, LOG_FLOOR)).astype(np.float32)
    return LogMelSpectrogram(values, programme_id, segment_index)


def log_mel(seg: Segment, fb: MelFilterbank | None = None) -> LogMelSpectrogram:
    """Full front end for one segment."""
    return apply_log_mel(power_spectrum(frame_and_window(seg)), fb, seg.programme_id, seg.index)


def log_mel_batch(segments: list[Segment], fb: MelFilterbank | None = None) -> np.ndarray:
    """Stack of spectrograms, shape (S, 64, 496) float32."""
    fb = fb or mel_filterbank()
    return np.stack([log_mel(s, fb).values for s in segments])


# --- LMEL cache -----------------------------------------------------------

LMEL_MAGIC = b"LMEL"
LMEL_VERSION = 1
_LMEL_HEADER = struct.Struct("<4sIIII")


def save_lmel(path: str | os.PathLike, specs: np.ndarray) -> None:
    specs = np.asarray(specs, dtype="<f4")
    if specs.ndim != 3 or specs.shape[1:] != (N_MELS, N_FRAMES):
        raise ContractViolation(f"expected (n, {N_MELS}, {N_FRAMES}), got {specs.shape}")
    header = _LMEL_HEADER.pack(LMEL_MAGIC, LMEL_VERSION, specs.shape[0], N_MELS, N_FRAMES)
    atomic_write_bytes(path, header + specs.tobytes(order="C"))


def load_lmel(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _LMEL_HEADER.size:
        raise FormatError(f"{path}: truncated LMEL header")
    magic, version, n, mels, frames = _LMEL_HEADER.unpack_from(raw)
    if magic != LMEL_MAGIC or version != LMEL_VERSION:
        raise FormatError(f"{path}: not an LMEL v{LMEL_VERSION} file")
    expected = _LMEL_HEADER.size + n * mels * frames * 4
    if len(raw) != expected:
        raise FormatError(f"{path}: payload size {len(raw)} != {expected}")
    return np.frombuffer(raw, dtype="<f4", offset=_LMEL_HEADER.size).reshape(n, mels, frames).copy()
