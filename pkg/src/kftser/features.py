"""Per-frame acoustic features: 13 MFCCs, their deltas and delta-deltas,
RMS energy, and zero-crossing rate (41 columns per frame), plus the
z-score scaler fitted on training rows only.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .dsp import AudioClip, FramingConfig, frame_signal

N_MFCC = 13
FEATURE_COLUMNS = tuple(
    [f"mfcc_{i}" for i in range(N_MFCC)]
    + [f"delta_{i}" for i in range(N_MFCC)]
    + [f"deltadelta_{i}" for i in range(N_MFCC)]
    + ["rmse", "zcr"]
)
N_FEATURES = len(FEATURE_COLUMNS)

FEATURE_FILE_MAGIC = b"KFTSER01"

_SCALER_EPS = 1e-8


def hz_to_mel(f):
    """2595 * log10(1 + f/700); strictly increasing from 0."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    return 2595.0 * np.log10(1.0 + f / 700.0)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters with unit peak amplitude.

    filters has shape (n_filters, n_fft//2 + 1); center_freqs holds the
    Hz position of each triangle's peak for spectral sanity checks.
    """

    n_filters: int
    filters: np.ndarray
    center_freqs: np.ndarray
    fmin: float
    fmax: float
    n_fft: int
    sample_rate: int


def build_mel_filterbank(
    n_filters: int = 40,
    sample_rate: int = 22050,
    n_fft: int = 2048,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelFilterbank:
    if fmax is None:
        fmax = sample_rate / 2.0
    if not 0 <= fmin < fmax <= sample_rate / 2.0:
        raise ValueError(f"need 0 <= fmin < fmax <= nyquist, got fmin={fmin}, fmax={fmax}")
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")

    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)

    weights = np.zeros((n_filters, len(bin_freqs)))
    for m in range(n_filters):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        weights[m] = np.clip(np.minimum(rising, falling), 0.0, None)

    return MelFilterbank(
        n_filters=n_filters,
        filters=weights,
        center_freqs=edges_hz[1:-1].copy(),
        fmin=fmin,
        fmax=fmax,
        n_fft=n_fft,
        sample_rate=sample_rate,
    )


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_energies(frame: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    """Hann-windowed power spectrum folded through the filterbank."""
    frame = np.asarray(frame, dtype=np.float64)
    if len(frame) != fb.n_fft:
        raise ValueError(f"frame length {len(frame)} != filterbank n_fft {fb.n_fft}")
    spectrum = np.fft.rfft(frame * _hann(fb.n_fft))
    power = spectrum.real**2 + spectrum.imag**2
    return fb.filters @ power


def compute_mfcc(frame: np.ndarray, fb: MelFilterbank,
                 n_mfcc: int = N_MFCC, log_floor: float = 1e-10) -> np.ndarray:
    """First n_mfcc coefficients of the orthonormal DCT-II of the log mel energies."""
    logged = np.log(mel_energies(frame, fb) + log_floor)
    return dct(logged, type=2, norm="ortho")[:n_mfcc]


def compute_delta(coeffs: np.ndarray, width: int = 9) -> np.ndarray:
    """Regression slope over a window of `width` frames, edges replicated.

    delta_t = sum_n n*(c_{t+n} - c_{t-n}) / (2 * sum_n n^2), n = 1..(width-1)/2.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    if coeffs.shape[0] == 0:
        raise ValueError("need at least one frame")
    if width < 3 or width % 2 == 0:
        raise ValueError(f"width must be odd and >= 3, got {width}")
    half = (width - 1) // 2
    padded = np.pad(coeffs, ((half, half), (0, 0)), mode="edge")
    t = coeffs.shape[0]
    num = np.zeros_like(coeffs)
    for n in range(1, half + 1):
        num += n * (padded[half + n : half + n + t] - padded[half - n : half - n + t])
    return num / (2.0 * sum(n * n for n in range(1, half + 1)))


def compute_rmse(frame: np.ndarray) -> float:
    frame = np.asarray(frame, dtype=np.float64)
    if len(frame) == 0:
        raise ValueError("frame must be non-empty")
    return float(np.sqrt(np.mean(frame * frame)))


def compute_zcr(frame: np.ndarray) -> float:
    """Fraction of adjacent pairs with a strict sign change (0 counts as non-negative)."""
    frame = np.asarray(frame, dtype=np.float64)
    if len(frame) < 2:
        raise ValueError("need at least two samples")
    nonneg = frame >= 0
    return float(np.count_nonzero(nonneg[1:] != nonneg[:-1]) / (len(frame) - 1))


@dataclass
class FeatureMatrix:
    """T x 41 per-frame features for one utterance, columns in FEATURE_COLUMNS order."""

    rows: np.ndarray
    utterance_id: str = ""

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != N_FEATURES:
            raise ValueError(f"feature rows must be T x {N_FEATURES}, got {self.rows.shape}")

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]


def extract_features(
    clip: AudioClip,
    cfg: FramingConfig,
    fb: MelFilterbank,
    delta_width: int = 9,
    log_floor: float = 1e-10,
    utterance_id: str = "",
) -> FeatureMatrix:
    """Assemble the 41-column feature matrix for one (resampled, trimmed) clip."""
    if clip.sample_rate != fb.sample_rate:
        raise ValueError(
            f"clip rate {clip.sample_rate} != filterbank rate {fb.sample_rate}; resample first"
        )
    if cfg.frame_length != fb.n_fft:
        raise ValueError(f"frame_length {cfg.frame_length} != filterbank n_fft {fb.n_fft}")

    frames = frame_signal(clip, cfg)
    mfcc = np.stack([compute_mfcc(f, fb, log_floor=log_floor) for f in frames])
    delta = compute_delta(mfcc, delta_width)
    deltadelta = compute_delta(delta, delta_width)
    rmse = np.sqrt(np.mean(frames * frames, axis=1))
    nonneg = frames >= 0
    zcr = np.count_nonzero(nonneg[:, 1:] != nonneg[:, :-1], axis=1) / (frames.shape[1] - 1)

    rows = np.hstack([mfcc, delta, deltadelta, rmse[:, None], zcr[:, None]])
    return FeatureMatrix(rows=rows, utterance_id=utterance_id)


@dataclass(frozen=True)
class ScalerStats:
    """Per-column mean and population std of the training rows."""

    mean: np.ndarray
    std: np.ndarray


def fit_scaler(rows: np.ndarray) -> ScalerStats:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("need at least two rows to fit a scaler")
    return ScalerStats(mean=rows.mean(axis=0), std=rows.std(axis=0))


def apply_scaler(rows: np.ndarray, stats: ScalerStats) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    return (rows - stats.mean) / np.maximum(stats.std, _SCALER_EPS)


def save_features(fm: FeatureMatrix, path: str | Path) -> None:
    """Compact binary form: magic, u32 T, u32 n_cols, row-major f64 LE."""
    t, c = fm.rows.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_FILE_MAGIC)
        fh.write(struct.pack("<II", t, c))
        fh.write(fm.rows.astype("<f8").tobytes())


def load_features(path: str | Path, utterance_id: str | None = None) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if raw[: len(FEATURE_FILE_MAGIC)] != FEATURE_FILE_MAGIC:
        raise ValueError(f"{path}: bad feature-file magic")
    t, c = struct.unpack_from("<II", raw, len(FEATURE_FILE_MAGIC))
    body = raw[len(FEATURE_FILE_MAGIC) + 8 :]
    if len(body) != t * c * 8:
        raise ValueError(f"{path}: expected {t * c * 8} payload bytes, found {len(body)}")
    rows = np.frombuffer(body, dtype="<f8").reshape(t, c)
    if utterance_id is None:
        utterance_id = Path(path).stem
    return FeatureMatrix(rows=rows.copy(), utterance_id=utterance_id)


def save_features_csv(fm: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_COLUMNS)
        writer.writerows(fm.rows.tolist())
