"""PCM WAV loading, downmix, resampling and 5-second segmentation."""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from ._io import atomic_write_bytes
from .errors import (
    ContractViolation,
    CorruptFileError,
    ProgrammeTooShortError,
    UnsupportedFormatError,
)

SAMPLE_RATE = 32000
SEGMENT_SECONDS = 5
SEGMENT_SAMPLES = SAMPLE_RATE * SEGMENT_SECONDS

RESAMPLER_TAPS = 64
KAISER_BETA = 8.6
# Passband edge as a fraction of the lower Nyquist; 0.95 * 16 kHz clears 14 kHz.
ROLLOFF = 0.95


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ContractViolation("waveform must be mono (1-D)")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Segment:
    samples: np.ndarray
    programme_id: str
    index: int

    def __post_init__(self):
        if len(self.samples) != SEGMENT_SAMPLES:
            raise ContractViolation(
                f"segment must hold {SEGMENT_SAMPLES} samples, got {len(self.samples)}"
            )


def _decode(raw: bytes, source: str) -> tuple[int, np.ndarray]:
    if len(raw) == 0:
        raise CorruptFileError(f"{source}: empty file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.io.wavfile.WavFileWarning)
            rate, data = scipy.io.wavfile.read(io.BytesIO(raw))
    except scipy.io.wavfile.WavFileWarning as exc:
        raise CorruptFileError(f"{source}: {exc}") from exc
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported" in msg:
            raise UnsupportedFormatError(f"{source}: {msg}") from exc
        raise CorruptFileError(f"{source}: {msg}") from exc
    except Exception as exc:  # struct.error, EOFError, ... from a truncated header
        raise CorruptFileError(f"{source}: truncated or malformed header ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{source}: sample type {data.dtype} (only PCM 16-bit and float32 are accepted)"
        )
    if samples.size == 0:
        raise CorruptFileError(f"{source}: no audio frames")
    return int(rate), samples


def load_audio(path: str | os.PathLike) -> Waveform:
    """Read a WAV file as a mono waveform at 32 kHz."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    rate, samples = _decode(raw, path)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    samples = resample(samples, rate, SAMPLE_RATE)
    np.clip(samples, -1.0, 1.0, out=samples)
    source_id = os.path.splitext(os.path.basename(path))[0]
    return Waveform(samples, SAMPLE_RATE, source_id)


def write_wav(path: str | os.PathLike, samples: np.ndarray, sample_rate: int = SAMPLE_RATE,
              pcm16: bool = True) -> None:
    """Write mono or (n, channels) audio as PCM16 (default) or float32."""
    samples = np.asarray(samples, dtype=np.float64)
    if pcm16:
        data = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    else:
        data = samples.astype("<f4")
    buf = io.BytesIO()
    scipy.io.wavfile.write(buf, sample_rate, data)
    atomic_write_bytes(path, buf.getvalue())


def _kaiser(x: np.ndarray, half_width: float, beta: float) -> np.ndarray:
    r = np.clip(x / half_width, -1.0, 1.0)
    return np.i0(beta * np.sqrt(1.0 - r * r)) / np.i0(beta)


def resample(samples: np.ndarray, rate_in: int, rate_out: int = SAMPLE_RATE,
             chunk: int = 1 << 15) -> np.ndarray:
    """Band-limited rate conversion with a 64-tap Kaiser-windowed sinc.

    Output sample ``n`` sits at input position ``n * rate_in / rate_out``
    (computed in exact integer arithmetic); the kernel is re-centred on that
    fractional position and normalised to unit DC gain. Equal rates return
    a copy of the input.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if rate_in <= 0 or rate_out <= 0:
        raise ContractViolation("sample rates must be positive")
    if rate_in == rate_out:
        return samples.copy()

    n_out = len(samples) * rate_out // rate_in
    cutoff = ROLLOFF * min(1.0, rate_out / rate_in)
    half = RESAMPLER_TAPS // 2
    offsets = np.arange(-half + 1, half + 1)  # 64 taps around floor(t)
    padded = np.concatenate([np.zeros(half), samples, np.zeros(half + 1)])

    out = np.empty(n_out)
    for start in range(0, n_out, chunk):
        n = np.arange(start, min(start + chunk, n_out), dtype=np.int64)
        num = n * rate_in
        base = num // rate_out
        frac = (num % rate_out) / rate_out
        idx = base[:, None] + offsets[None, :]
        x = offsets[None, :] - frac[:, None]
        h = cutoff * np.sinc(cutoff * x) * _kaiser(x, half, KAISER_BETA)
        h /= h.sum(axis=1, keepdims=True)
        out[start:start + len(n)] = np.einsum("ij,ij->i", padded[idx + half], h)
    return out


def segment(w: Waveform) -> list[Segment]:
    """Split into non-overlapping 5 s segments; the trailing remainder is dropped."""
    if w.sample_rate != SAMPLE_RATE:
        raise ContractViolation(f"waveform must be at {SAMPLE_RATE} Hz, got {w.sample_rate}")
    n_seg = len(w.samples) // SEGMENT_SAMPLES
    if n_seg < 1:
        raise ProgrammeTooShortError(
            f"{w.source_id or 'programme'}: {len(w.samples)} samples is shorter than one "
            f"{SEGMENT_SECONDS} s segment"
        )
    return [
        Segment(w.samples[s * SEGMENT_SAMPLES:(s + 1) * SEGMENT_SAMPLES], w.source_id, s)
        for s in range(n_seg)
    ]
