"""Local training and evaluation for the federated threat-detection model.

The model is a logistic regression over d-dimensional feature vectors with
binary labels (0 = benign, 1 = malicious).  Clients exchange parameter
deltas (post-training minus pre-training), which keeps the aggregation rules
agnostic to learning rate and epoch count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(eq=False)
class Dataset:
    features: np.ndarray  # (m, d) float64
    labels: np.ndarray  # (m,) ints in {0, 1}

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {f.shape}")
        if y.shape != (f.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {f.shape[0]} rows")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (benign) or 1 (malicious)")
        self.features, self.labels = f, y

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(eq=False)
class ModelParams:
    weights: np.ndarray  # (d,)
    bias: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be 1-D")
        if not (np.isfinite(w).all() and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        self.weights = w
        self.bias = float(self.bias)

    @classmethod
    def zeros(cls, d: int) -> "ModelParams":
        return cls(np.zeros(d), 0.0)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "ModelParams":
        v = np.asarray(vec, dtype=np.float64)
        return cls(v[:-1], float(v[-1]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.bias]])

    @property
    def d(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float
    local_epochs: int = 1
    batch_size: int = 32

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be >= 1")


@dataclass(eq=False)
class GradientUpdate:
    """One client's model delta for one round, with its norm cached."""

    client_id: int
    round: int
    delta: np.ndarray  # (d+1,) weights then bias
    norm: float

    def __post_init__(self) -> None:
        d = np.asarray(self.delta, dtype=np.float64)
        if d.ndim != 1:
            raise ValueError("delta must be 1-D")
        if not np.isfinite(d).all():
            raise ValueError("delta entries must be finite")
        true_norm = float(np.linalg.norm(d))
        if abs(self.norm - true_norm) > 1e-9 * max(1.0, true_norm):
            raise ValueError(f"cached norm {self.norm} != recomputed {true_norm}")
        self.delta = d

    @classmethod
    def from_delta(cls, client_id: int, round: int, delta: np.ndarray) -> "GradientUpdate":
        d = np.asarray(delta, dtype=np.float64)
        return cls(client_id, round, d, float(np.linalg.norm(d)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def generate_synthetic_threat_data(
    seed: int,
    n_clients: int,
    samples_per_client: int,
    d: int,
    separation: float,
) -> list[Dataset]:
    """Per-client Gaussian blobs: benign at -mu, malicious at +mu with
    ||2*mu|| = separation, shifted by a per-client mean jitter (the non-IID
    knob, sigma = 0.15 * separation)."""
    if n_clients < 1 or samples_per_client < 1:
        raise ValueError("n_clients and samples_per_client must be >= 1")
    if d < 2:
        raise ValueError(f"feature dimension must be >= 2, got {d}")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.default_rng(seed)
    direction = np.ones(d) / np.sqrt(d)
    mu = (separation / 2.0) * direction
    shards = []
    for _ in range(n_clients):
        center = rng.normal(0.0, 0.15 * separation, d) if separation > 0 else np.zeros(d)
        n_benign = samples_per_client // 2
        labels = np.concatenate(
            [np.zeros(n_benign, dtype=np.int64),
             np.ones(samples_per_client - n_benign, dtype=np.int64)]
        )
        means = np.where(labels[:, None] == 0, center - mu, center + mu)
        features = means + rng.normal(0.0, 1.0, (samples_per_client, d))
        order = rng.permutation(samples_per_client)
        shards.append(Dataset(features[order], labels[order]))
    return shards


def loss_gradient(params: ModelParams, data: Dataset) -> np.ndarray:
    """Full-batch gradient of the mean binary cross-entropy, (d+1,)-shaped."""
    if data.d != params.d:
        raise ValueError(f"dimension mismatch: data d={data.d}, model d={params.d}")
    residual = _sigmoid(data.features @ params.weights + params.bias) - data.labels
    grad_w = data.features.T @ residual / len(data)
    return np.concatenate([grad_w, [residual.mean()]])


def local_train_step(
    params: ModelParams,
    data: Dataset,
    cfg: TrainingConfig,
    rng_seed: int,
    client_id: int = 0,
    round: int = 0,
) -> GradientUpdate:
    """Mini-batch SGD with seeded shuffling; returns params_after - params_before."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.d != params.d:
        raise ValueError(f"dimension mismatch: data d={data.d}, model d={params.d}")
    rng = np.random.default_rng(rng_seed)
    w = params.weights.copy()
    b = params.bias
    m = len(data)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = data.features[idx], data.labels[idx]
            residual = _sigmoid(xb @ w + b) - yb
            w -= cfg.learning_rate * (xb.T @ residual) / len(idx)
            b -= cfg.learning_rate * residual.mean()
    delta = np.concatenate([w - params.weights, [b - params.bias]])
    return GradientUpdate.from_delta(client_id, round, delta)


def apply_global_update(params: ModelParams, agg: np.ndarray) -> ModelParams:
    agg = np.asarray(agg, dtype=np.float64)
    if agg.shape != (params.d + 1,):
        raise ValueError(f"aggregate must have shape ({params.d + 1},), got {agg.shape}")
    if not np.isfinite(agg).all():
        raise ValueError("aggregate entries must be finite")
    return ModelParams(params.weights + agg[:-1], params.bias + agg[-1])


def evaluate(params: ModelParams, data: Dataset) -> tuple[float, float]:
    """(accuracy, mean BCE loss); sigma >= 0.5 predicts malicious."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if data.d != params.d:
        raise ValueError(f"dimension mismatch: data d={data.d}, model d={params.d}")
    p = _sigmoid(data.features @ params.weights + params.bias)
    accuracy = float(np.mean((p >= 0.5).astype(np.int64) == data.labels))
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    loss = float(-np.mean(data.labels * np.log(p) + (1 - data.labels) * np.log(1.0 - p)))
    return accuracy, loss


def dataset_to_csv(data: Dataset, path: str | Path) -> None:
    header = ",".join(f"f{i}" for i in range(data.d)) + ",label"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, label in zip(data.features, data.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def dataset_from_csv(path: str | Path) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[-1] != "label" or any(h != f"f{i}" for i, h in enumerate(header[:-1])):
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError("empty dataset file")
    values = np.array([[float(v) for v in row] for row in rows])
    return Dataset(values[:, :-1], values[:, -1].astype(np.int64))
