"""Linear-classification protocol over frozen features and checkpoint selection.

Features arrive as `.agft` files (see read_agft for the byte layout) and are
mean-pooled over the patch grid before probing.  The probe is multinomial
logistic regression trained by deterministic full-batch gradient descent, so a
fixed seed and data order reproduce bit-identical parameters.
"""

from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, IntegrityError, TrainingError

AGFT_MAGIC = b"AGFT"
_HEADER = struct.Struct("<4sBBHIII")   # magic, version, dtype, reserved, gh, gw, dim


@dataclass
class FeatureTensor:
    grid_h: int
    grid_w: int
    dim: int
    values: np.ndarray        # (grid_h, grid_w, dim) float32
    source: str = ""


def write_agft(path, values: np.ndarray) -> None:
    """Write a (grid_h, grid_w, dim) float32 array in the .agft layout."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 3:
        raise DomainError("agft values must be (grid_h, grid_w, dim)")
    gh, gw, dim = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(AGFT_MAGIC, 1, 1, 0, gh, gw, dim))
        fh.write(arr.tobytes())


def read_agft(path) -> FeatureTensor:
    """Read an .agft feature file.

    Layout, little-endian: magic "AGFT"; u8 version = 1; u8 dtype = 1
    (32-bit float); u16 reserved = 0; u32 grid_h, grid_w, dim; then
    grid_h*grid_w*dim floats row-major (row, col, channel).
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise IntegrityError(f"{path}: truncated header")
    magic, version, dtype, reserved, gh, gw, dim = _HEADER.unpack_from(data)
    if magic != AGFT_MAGIC:
        raise IntegrityError(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise IntegrityError(f"{path}: unsupported version {version}")
    if dtype != 1:
        raise IntegrityError(f"{path}: unsupported dtype {dtype}")
    if reserved != 0:
        raise IntegrityError(f"{path}: reserved field must be 0")
    expected = _HEADER.size + gh * gw * dim * 4
    if len(data) != expected:
        raise IntegrityError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(gh, gw, dim)
    if not np.isfinite(values).all():
        raise IntegrityError(f"{path}: non-finite feature values")
    return FeatureTensor(grid_h=gh, grid_w=gw, dim=dim,
                         values=values.copy(), source=str(path))


def pool_mean(features: FeatureTensor) -> np.ndarray:
    """Mean over the patch grid: one dim-vector per tensor."""
    return features.values.reshape(-1, features.dim).mean(axis=0)


@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 500
    seed: int = 0
    max_halvings: int = 20
    holdout_frac: float = 0.2


@dataclass
class ProbeModel:
    weights: np.ndarray          # K x dim
    bias: np.ndarray             # K
    feat_mean: np.ndarray        # dim
    feat_std: np.ndarray         # dim
    classes: list[str]
    config: ProbeConfig
    loss_curve: list[float] = field(default_factory=list)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.feat_mean) / self.feat_std

    def logits(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.weights.shape[1]:
            raise DomainError(f"feature dim {X.shape[1]} != model dim "
                              f"{self.weights.shape[1]}")
        return self.standardize(X) @ self.weights.T + self.bias

    def predict(self, X: np.ndarray) -> list[str]:
        # argmax takes the first maximum, i.e. ties go to the lowest class index
        idx = np.argmax(self.logits(X), axis=1)
        return [self.classes[i] for i in idx]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(w: np.ndarray, b: np.ndarray, z: np.ndarray, y: np.ndarray,
                  l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + l2 * ||W||^2 / 2 and its analytic gradient.

    z is the standardized N x dim design matrix, y integer class indices.
    """
    n = z.shape[0]
    probs = _softmax(z @ w.T + b)
    nll = -np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean()
    loss = nll + 0.5 * l2 * float((w * w).sum())
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grad_w = delta.T @ z / n + l2 * w
    grad_b = delta.mean(axis=0)
    return float(loss), grad_w, grad_b


def train_probe(X: np.ndarray, labels, config: ProbeConfig = ProbeConfig(),
                classes=None) -> ProbeModel:
    """Fit the linear probe on pooled features.

    Features are standardized per dimension on the training fold (stored in
    the model).  Optimization is full-batch gradient descent from zero init;
    if a step would increase the loss the step size is halved, up to
    config.max_halvings times in total.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = list(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DomainError("features must be (n_samples, dim) matching labels")
    if classes is None:
        classes = sorted(set(labels))
    else:
        classes = list(classes)
    if len(classes) < 2:
        raise DomainError("probe needs at least 2 classes")
    index = {c: i for i, c in enumerate(classes)}
    missing = sorted(set(classes) - set(labels))
    if missing:
        raise DomainError(f"classes with zero samples: {missing}")
    unknown = sorted(set(labels) - set(classes))
    if unknown:
        raise DomainError(f"labels outside the class list: {unknown}")
    y = np.array([index[l] for l in labels], dtype=np.int64)

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0, 1.0, std)     # constant dims carry no signal
    z = (X - mean) / std

    k, dim = len(classes), X.shape[1]
    w = np.zeros((k, dim))
    b = np.zeros(k)
    lr = config.learning_rate
    halvings = 0

    loss, grad_w, grad_b = loss_and_grad(w, b, z, y, config.l2)
    curve = [loss]
    for epoch in range(config.epochs):
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        while True:
            w_new = w - lr * grad_w
            b_new = b - lr * grad_b
            loss_new, gw_new, gb_new = loss_and_grad(w_new, b_new, z, y, config.l2)
            if np.isfinite(loss_new) and loss_new <= loss:
                break
            halvings += 1
            if halvings > config.max_halvings:
                raise TrainingError(f"loss still increasing after "
                                    f"{config.max_halvings} halvings at epoch {epoch}")
            lr *= 0.5
        w, b, loss, grad_w, grad_b = w_new, b_new, loss_new, gw_new, gb_new
        curve.append(loss)

    return ProbeModel(weights=w, bias=b, feat_mean=mean, feat_std=std,
                      classes=classes, config=config, loss_curve=curve)


def evaluate_probe(model: ProbeModel, X: np.ndarray, labels) -> float:
    """Top-1 accuracy of the probe on a labeled holdout."""
    X = np.asarray(X, dtype=np.float64)
    labels = list(labels)
    if X.size == 0 or not labels:
        raise DomainError("empty holdout")
    if X.shape[0] != len(labels):
        raise DomainError("feature rows and labels differ in length")
    predictions = model.predict(X)
    hits = sum(p == t for p, t in zip(predictions, labels))
    return hits / len(labels)


def stratified_holdout(labels, frac: float, seed: int) -> tuple[list[int], list[int]]:
    """Per-class seeded holdout split; every class keeps at least one train sample."""
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    train_idx: list[int] = []
    hold_idx: list[int] = []
    for cls in sorted(by_class):
        idx = sorted(by_class[cls])
        rng = random.Random(f"{seed}:{cls}")
        rng.shuffle(idx)
        n_hold = min(int(len(idx) * frac), len(idx) - 1)
        hold_idx.extend(idx[:n_hold])
        train_idx.extend(idx[n_hold:])
    return sorted(train_idx), sorted(hold_idx)


def select_checkpoint(runs) -> int:
    """Epoch with the highest accuracy; ties resolve to the smallest epoch."""
    runs = list(runs)
    if not runs:
        raise DomainError("no probe runs to select from")
    return min(runs, key=lambda r: (-r[1], r[0]))[0]


def load_labeled_features(features_dir, labels_path) -> tuple[np.ndarray, list[str], list[str]]:
    """Load pooled features plus labels from a directory of .agft files.

    The labels file is JSONL with {"file": <agft name>, "label": <class>}.
    Returns (pooled matrix, labels, file names) in sorted file order.
    """
    features_dir = Path(features_dir)
    label_map: dict[str, str] = {}
    with open(labels_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            label_map[row["file"]] = str(row["label"])
    files = sorted(p.relative_to(features_dir).as_posix()
                   for p in features_dir.rglob("*.agft"))
    if not files:
        raise ConfigError(f"no .agft files under {features_dir}")

    def label_of(name: str):
        # a primitives index labels the source crops, so stripping the
        # .agft suffix makes it usable as-is
        return label_map.get(name, label_map.get(name[:-len(".agft")]))

    missing = [f for f in files if label_of(f) is None]
    if missing:
        raise ConfigError(f"{len(missing)} feature files missing labels "
                          f"(first: {missing[0]})")
    pooled = []
    labels = []
    for name in files:
        pooled.append(pool_mean(read_agft(features_dir / name)))
        labels.append(label_of(name))
    return np.stack(pooled), labels, files
