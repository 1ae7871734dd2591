"""Kalman filtering of per-frame class posteriors.

The state is the 4-vector of class probabilities; transition and observation
default to identity, so the filter acts as a tuned temporal low-pass over the
classifier output. A fixed-interval smoother and a q/r grid search ride on top.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve


@dataclass(frozen=True, eq=False)
class KalmanConfig:
    """Noise scales and optional matrix overrides.

    With transition/observation left as None both default to identity, and
    process/measurement noise default to q*I and r*I. r = 0 is legal (full
    trust in the measurement) but can make the innovation covariance
    singular when the state covariance degenerates.
    """

    dim: int = 4
    q: float = 1e-3
    r: float = 0.1
    transition: np.ndarray | None = None
    observation: np.ndarray | None = None
    process_noise: np.ndarray | None = None
    measurement_noise: np.ndarray | None = None
    renormalize: bool = True
    joseph: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if self.transition is not None and np.shape(self.transition) != (self.dim, self.dim):
            raise ValueError(f"transition must be {self.dim}x{self.dim}")
        if self.observation is not None and np.shape(self.observation)[1] != self.dim:
            raise ValueError(f"observation must have {self.dim} columns")
        for name in ("process_noise", "measurement_noise"):
            m = getattr(self, name)
            if m is not None:
                m = np.asarray(m, dtype=np.float64)
                if m.ndim != 2 or m.shape[0] != m.shape[1]:
                    raise ValueError(f"{name} must be square")

    @property
    def F(self) -> np.ndarray:
        if self.transition is None:
            return np.eye(self.dim)
        return np.asarray(self.transition, dtype=np.float64)

    @property
    def H(self) -> np.ndarray:
        if self.observation is None:
            return np.eye(self.dim)
        return np.asarray(self.observation, dtype=np.float64)

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]

    @property
    def Q(self) -> np.ndarray:
        if self.process_noise is None:
            return self.q * np.eye(self.dim)
        return np.asarray(self.process_noise, dtype=np.float64)

    @property
    def R(self) -> np.ndarray:
        if self.measurement_noise is None:
            return self.r * np.eye(self.obs_dim)
        return np.asarray(self.measurement_noise, dtype=np.float64)


@dataclass
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray


def initial_state(cfg: KalmanConfig) -> KalmanState:
    """Uninformative start: uniform probabilities, unit covariance."""
    return KalmanState(mean=np.full(cfg.dim, 1.0 / cfg.dim), cov=np.eye(cfg.dim))


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def _renorm_rows(x: np.ndarray, dim: int) -> np.ndarray:
    """Project rows onto the probability simplex by clamp-and-rescale."""
    x = np.clip(x, 0.0, 1.0)
    s = x.sum(axis=-1, keepdims=True)
    return np.where(s > 0.0, x / np.where(s > 0.0, s, 1.0), 1.0 / dim)


def predict_step(state: KalmanState, cfg: KalmanConfig) -> KalmanState:
    f = cfg.F
    return KalmanState(mean=f @ state.mean, cov=_symmetrize(f @ state.cov @ f.T + cfg.Q))


def correct_step(state: KalmanState, z: np.ndarray, cfg: KalmanConfig):
    """Measurement update; returns (new_state, gain).

    The innovation covariance is symmetric positive definite whenever
    r > 0, so the gain is solved with a Cholesky factorization rather
    than an explicit inverse.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (cfg.obs_dim,):
        raise ValueError(f"measurement must have shape ({cfg.obs_dim},), got {z.shape}")
    h = cfg.H
    pht = state.cov @ h.T
    s = h @ pht + cfg.R
    gain = cho_solve(cho_factor(s, lower=True), pht.T).T
    mean = state.mean + gain @ (z - h @ state.mean)
    if cfg.joseph:
        ikh = np.eye(cfg.dim) - gain @ h
        cov = ikh @ state.cov @ ikh.T + gain @ cfg.R @ gain.T
    else:
        cov = (np.eye(cfg.dim) - gain @ h) @ state.cov
    if cfg.renormalize:
        mean = _renorm_rows(mean, cfg.dim)
    return KalmanState(mean=mean, cov=_symmetrize(cov)), gain


@dataclass
class SmoothedTrajectory:
    """One trajectory's forward pass: measurements in, filtered states out.

    Predicted means/covariances and per-step gains are retained so the
    fixed-interval smoother can run from this object alone.
    """

    raw: np.ndarray
    filtered: np.ndarray
    gains: np.ndarray
    filtered_covs: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.filtered.shape[0]


def filter_trajectory(measurements: np.ndarray, cfg: KalmanConfig) -> SmoothedTrajectory:
    """Run the predict/correct recursion over a (T, obs_dim) sequence.

    Causal: row t of the output depends only on measurements 0..t.
    """
    z = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    if z.size == 0:
        raise ValueError("cannot filter an empty trajectory")
    if z.shape[1] != cfg.obs_dim:
        raise ValueError(f"measurements must be T x {cfg.obs_dim}, got {z.shape}")
    t_steps = z.shape[0]

    fm = np.empty((t_steps, cfg.dim))
    fc = np.empty((t_steps, cfg.dim, cfg.dim))
    pm = np.empty((t_steps, cfg.dim))
    pc = np.empty((t_steps, cfg.dim, cfg.dim))
    gains = np.empty((t_steps, cfg.dim, cfg.obs_dim))

    state = initial_state(cfg)
    for t in range(t_steps):
        pred = predict_step(state, cfg)
        pm[t], pc[t] = pred.mean, pred.cov
        state, gains[t] = correct_step(pred, z[t], cfg)
        fm[t], fc[t] = state.mean, state.cov
    return SmoothedTrajectory(raw=z.copy(), filtered=fm, gains=gains,
                              filtered_covs=fc, predicted_means=pm, predicted_covs=pc)


def gain_schedule(cfg: KalmanConfig, n_steps: int):
    """Precompute gains and covariances for n_steps.

    The covariance recursion never touches the measurements, so one schedule
    serves every trajectory under the same config. Returns (gains,
    predicted_covs, filtered_covs).
    """
    gains = np.empty((n_steps, cfg.dim, cfg.obs_dim))
    pc = np.empty((n_steps, cfg.dim, cfg.dim))
    fc = np.empty((n_steps, cfg.dim, cfg.dim))
    f, h, q, r = cfg.F, cfg.H, cfg.Q, cfg.R
    eye = np.eye(cfg.dim)
    p = np.eye(cfg.dim)
    for t in range(n_steps):
        p = _symmetrize(f @ p @ f.T + q)
        pc[t] = p
        pht = p @ h.T
        gains[t] = cho_solve(cho_factor(h @ pht + r, lower=True), pht.T).T
        if cfg.joseph:
            ikh = eye - gains[t] @ h
            p = ikh @ p @ ikh.T + gains[t] @ r @ gains[t].T
        else:
            p = (eye - gains[t] @ h) @ p
        p = _symmetrize(p)
        fc[t] = p
    return gains, pc, fc


def filter_batch(measurement_list, cfg: KalmanConfig) -> list[np.ndarray]:
    """Filtered means for many trajectories at once.

    Shares one gain schedule across the batch and advances all state vectors
    per time step, so the cost per step is a handful of small matmuls over
    the whole batch instead of a Python-level loop per trajectory. Output
    matches filter_trajectory per trajectory to rounding error.
    """
    arrays = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in measurement_list]
    if not arrays:
        return []
    for a in arrays:
        if a.size == 0:
            raise ValueError("cannot filter an empty trajectory")
        if a.shape[1] != cfg.obs_dim:
            raise ValueError(f"every trajectory must be T x {cfg.obs_dim}, got {a.shape}")
    lengths = np.array([a.shape[0] for a in arrays])
    t_max = int(lengths.max())

    gains, _, _ = gain_schedule(cfg, t_max)
    batch = len(arrays)
    z = np.zeros((batch, t_max, cfg.obs_dim))
    for i, a in enumerate(arrays):
        z[i, : a.shape[0]] = a

    f_t, h_t = cfg.F.T, cfg.H.T
    x = np.full((batch, cfg.dim), 1.0 / cfg.dim)
    out = np.zeros((batch, t_max, cfg.dim))
    for t in range(t_max):
        x_pred = x @ f_t
        x_new = x_pred + (z[:, t] - x_pred @ h_t) @ gains[t].T
        if cfg.renormalize:
            x_new = _renorm_rows(x_new, cfg.dim)
        active = t < lengths
        x = np.where(active[:, None], x_new, x)
        out[:, t] = x
    return [out[i, : arrays[i].shape[0]].copy() for i in range(batch)]


def rts_smooth(st: SmoothedTrajectory, cfg: KalmanConfig) -> np.ndarray:
    """Backward fixed-interval pass; returns the (T, dim) smoothed means.

    Operates on raw filter quantities (no simplex projection), so the final
    smoothed step equals the final filtered step exactly.
    """
    means = st.filtered.copy()
    covs = st.filtered_covs.copy()
    f = cfg.F
    for t in range(st.n_steps - 2, -1, -1):
        p_pred = st.predicted_covs[t + 1]
        # C = P_f F' P_pred^{-1}, solved against the SPD predicted covariance
        c = cho_solve(cho_factor(p_pred, lower=True), f @ st.filtered_covs[t]).T
        means[t] = st.filtered[t] + c @ (means[t + 1] - st.predicted_means[t + 1])
        covs[t] = _symmetrize(st.filtered_covs[t] + c @ (covs[t + 1] - p_pred) @ c.T)
    return means


def write_trajectory_csv(st: SmoothedTrajectory, path: str | Path, class_names) -> None:
    """Plot-ready CSV: frame_index, raw posteriors (z_*), filtered states (x_*)."""
    if len(class_names) != st.raw.shape[1] or len(class_names) != st.filtered.shape[1]:
        raise ValueError("class_names length must match the trajectory width")
    header = (["frame_index"] + [f"z_{c}" for c in class_names]
              + [f"x_{c}" for c in class_names])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(st.n_steps):
            writer.writerow([t] + list(st.raw[t]) + list(st.filtered[t]))


@dataclass
class TuneResult:
    best_ratio: float
    best_q: float
    accuracies: dict = field(default_factory=dict)


DEFAULT_RATIO_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def tune_qr_ratio(measurement_list, labels, cfg: KalmanConfig,
                  ratios=DEFAULT_RATIO_GRID) -> TuneResult:
    """Grid-search q as ratio*r (r held fixed) by fused utterance accuracy.

    Ties between ratios go to the smaller ratio, i.e. the more smoothed
    filter.
    """
    from .evaluation import fuse_utterance

    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) != len(measurement_list):
        raise ValueError("one label per trajectory required")
    if len(measurement_list) == 0:
        raise ValueError("nothing to tune on")
    ratios = [float(x) for x in ratios]
    if not ratios:
        raise ValueError("ratio grid is empty")
    accuracies = {}
    best_ratio, best_acc = None, -1.0
    for ratio in sorted(ratios):
        cand = replace(cfg, q=ratio * cfg.r, process_noise=None)
        filtered = filter_batch(measurement_list, cand)
        preds = np.array([fuse_utterance(m)[0] for m in filtered])
        acc = float(np.mean(preds == labels))
        accuracies[ratio] = acc
        if acc > best_acc:
            best_ratio, best_acc = ratio, acc
    return TuneResult(best_ratio=best_ratio, best_q=best_ratio * cfg.r,
                      accuracies=accuracies)
