"""Audio front end: WAV decode, resampling, silence trimming, framing.

Every function here is pure; clips are never mutated in place.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import DecodeError

DEFAULT_FRAME_LENGTH = 2048
DEFAULT_HOP_LENGTH = 512


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform in [-1, 1] plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if len(self.samples) == 0:
            raise ValueError("clip must contain at least one sample")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FramingConfig:
    """Overlapped analysis frames: frame t covers [t*hop, t*hop + frame_length)."""

    frame_length: int = DEFAULT_FRAME_LENGTH
    hop_length: int = DEFAULT_HOP_LENGTH
    center: bool = False

    def __post_init__(self):
        if not (0 < self.hop_length <= self.frame_length):
            raise ValueError(
                f"need 0 < hop_length <= frame_length, got hop={self.hop_length}, "
                f"frame={self.frame_length}"
            )


def decode_wav(path: str | Path) -> AudioClip:
    """Decode a PCM WAV file to a mono AudioClip.

    Supports 16-bit integer (scaled by 1/32768) and 32-bit IEEE float
    payloads; stereo is downmixed by averaging the channels. Anything
    else raises DecodeError with the byte offset of the problem.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[0:4] != b"RIFF":
        raise DecodeError(f"{path}: not a RIFF container (byte 0)")
    if data[8:12] != b"WAVE":
        raise DecodeError(f"{path}: RIFF form is not WAVE (byte 8)")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        payload_start = pos + 8
        if payload_start + size > len(data):
            raise DecodeError(
                f"{path}: chunk {chunk_id!r} declares {size} bytes but file ends "
                f"at byte {len(data)} (chunk starts at byte {pos})"
            )
        if chunk_id == b"fmt ":
            if size < 16:
                raise DecodeError(f"{path}: fmt chunk too short (byte {pos})")
            fmt = struct.unpack_from("<HHIIHH", data, payload_start)
        elif chunk_id == b"data":
            raw = data[payload_start : payload_start + size]
        pos = payload_start + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise DecodeError(f"{path}: no fmt chunk found")
    if raw is None:
        raise DecodeError(f"{path}: no data chunk found")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels < 1:
        raise DecodeError(f"{path}: fmt chunk declares {n_channels} channels")
    if (audio_format, bits) == (1, 16):
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif (audio_format, bits) == (3, 32):
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise DecodeError(
            f"{path}: unsupported codec (format tag {audio_format}, {bits}-bit); "
            "only 16-bit PCM and 32-bit float are handled"
        )

    block = dtype.itemsize * n_channels
    if len(raw) % block:
        raise DecodeError(
            f"{path}: data chunk holds {len(raw)} bytes, not a multiple of the "
            f"{block}-byte frame size (last whole frame ends at byte "
            f"{len(raw) - len(raw) % block} of the chunk)"
        )
    if not raw:
        raise DecodeError(f"{path}: data chunk is empty")

    frames = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    mono = frames.reshape(-1, n_channels).mean(axis=1) * scale
    return AudioClip(mono, sample_rate)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float samples as 16-bit PCM."""
    ints = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(ints.astype("<i2").tobytes())


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Rational-ratio polyphase resampling with a Kaiser-windowed sinc.

    64 taps per phase, Kaiser beta 8.6. Identity when the rates already
    match. Output duration stays within one sample period of the input.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if clip.sample_rate == target_rate:
        return clip
    g = math.gcd(clip.sample_rate, target_rate)
    up, down = target_rate // g, clip.sample_rate // g
    half = (64 * max(up, down)) // 2
    kernel = sps.firwin(2 * half + 1, 1.0 / max(up, down), window=("kaiser", 8.6))
    out = sps.resample_poly(clip.samples, up, down, window=kernel * up)
    return AudioClip(out, target_rate)


def _frame_rms(samples: np.ndarray, cfg: FramingConfig) -> np.ndarray:
    frames = _frame_array(samples, cfg)
    return np.sqrt(np.mean(frames * frames, axis=1))


def trim_silence(
    clip: AudioClip,
    threshold_db: float = 20.0,
    cfg: FramingConfig | None = None,
) -> AudioClip:
    """Drop leading/trailing frames more than threshold_db below the loudest frame.

    Interior samples are untouched and the result is never empty: if no
    frame clears the threshold the loudest frame's span is kept.
    """
    if threshold_db <= 0:
        raise ValueError(f"threshold_db must be positive, got {threshold_db}")
    cfg = cfg or FramingConfig()
    rms = _frame_rms(clip.samples, cfg)
    keep = rms >= rms.max() * 10.0 ** (-threshold_db / 20.0)
    if keep.any():
        kept = np.flatnonzero(keep)
        first, last = int(kept[0]), int(kept[-1])
    else:
        first = last = int(rms.argmax())
    start = first * cfg.hop_length
    end = min(len(clip.samples), last * cfg.hop_length + cfg.frame_length)
    return AudioClip(clip.samples[start:end], clip.sample_rate)


def _frame_array(samples: np.ndarray, cfg: FramingConfig) -> np.ndarray:
    if cfg.center:
        pad = cfg.frame_length // 2
        samples = np.concatenate([np.zeros(pad), samples, np.zeros(pad)])
    n = len(samples)
    n_frames = -(-n // cfg.hop_length)  # ceil(n / hop)
    padded_len = (n_frames - 1) * cfg.hop_length + cfg.frame_length
    padded = np.concatenate([samples, np.zeros(padded_len - n)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, cfg.frame_length)
    return windows[:: cfg.hop_length][:n_frames].copy()


def frame_signal(clip: AudioClip, cfg: FramingConfig) -> np.ndarray:
    """Slice a clip into overlapping frames, zero-padding the tail.

    Returns a (T, frame_length) array with T = ceil(len / hop) when
    centering is off (the default).
    """
    return _frame_array(np.asarray(clip.samples, dtype=np.float64), cfg)
