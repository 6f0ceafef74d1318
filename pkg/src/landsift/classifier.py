"""Multi-label linear classifier with hashed text features.

The reference backend is a bag of hashed word unigrams and character
3-5-grams, TF-weighted and L2-normalized, feeding independent
sigmoid outputs trained with full-batch gradient descent on per-label
binary cross-entropy. One model per label space; the two spaces never
share parameters.

Everything is deterministic: crc32 feature hashing, zero cold-start
parameters, full-batch updates. Identical data and config produce
bitwise-identical snapshots.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .labels import DEFAULT_SCHEMA, LabelSchema

FEATURE_DIM = 1 << 18
BACKEND_ID = "linear-ref"

_WORD_RE = re.compile(r"\w+")

# crc32 namespace prefixes, precomputed so hashing can stream
_NS_WORD = zlib.crc32(b"w|")
_NS_CHAR = {n: zlib.crc32(f"c{n}|".encode()) for n in (3, 4, 5)}


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 40
    learning_rate: float = 5e-5
    # the base rate is a transformer fine-tuning rate; the linear
    # backend runs at learning_rate * lr_scale
    lr_scale: float = 1000.0
    patience: int = 5
    improvement: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ClassifierError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 0:
            raise ClassifierError(f"patience must be >= 0, got {self.patience}")
        if self.learning_rate < 0 or self.lr_scale < 0:
            raise ClassifierError("learning_rate and lr_scale must be >= 0")

    @property
    def effective_lr(self) -> float:
        return self.learning_rate * self.lr_scale

    def to_json(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "learning_rate": self.learning_rate,
            "lr_scale": self.lr_scale,
            "patience": self.patience,
            "improvement": self.improvement,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrainConfig":
        return cls(**{k: obj[k] for k in cls().to_json() if k in obj})


def featurize(sentence: str, dim: int = FEATURE_DIM) -> dict[int, float]:
    """Hash a sentence into a sparse TF vector with unit L2 norm."""
    if not sentence:
        raise ClassifierError("cannot featurize an empty sentence")
    low = sentence.lower()
    counts: dict[int, float] = {}
    for tok in _WORD_RE.findall(low):
        idx = zlib.crc32(tok.encode(), _NS_WORD) % dim
        counts[idx] = counts.get(idx, 0.0) + 1.0
    raw = low.encode()
    for n, ns in _NS_CHAR.items():
        for i in range(len(raw) - n + 1):
            idx = zlib.crc32(raw[i : i + n], ns) % dim
            counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        raise ClassifierError(f"sentence produced no features: {sentence!r}")
    norm = float(np.sqrt(sum(v * v for v in counts.values())))
    return {i: v / norm for i, v in counts.items()}


def to_csr(features: Sequence[Mapping[int, float]], dim: int = FEATURE_DIM) -> sp.csr_matrix:
    """Stack sparse feature maps into one CSR design matrix."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for fv in features:
        for i in sorted(fv):
            if not 0 <= i < dim:
                raise ClassifierError(f"feature index {i} outside dimension {dim}")
            indices.append(i)
            data.append(fv[i])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(features), dim),
    )


@dataclass(frozen=True)
class FeaturePool:
    """Featurized sentence collection with O(1) row lookup by id.

    Featurizing is the expensive step, so pools are built once and
    sliced per subsample/training set.
    """

    ids: tuple[str, ...]
    matrix: sp.csr_matrix
    index: dict[str, int]

    @classmethod
    def build(cls, texts_by_id: Mapping[str, str], dim: int = FEATURE_DIM) -> "FeaturePool":
        ids = tuple(sorted(texts_by_id))
        matrix = to_csr([featurize(texts_by_id[i], dim) for i in ids], dim)
        return cls(ids=ids, matrix=matrix, index={sid: i for i, sid in enumerate(ids)})

    def rows(self, ids: Sequence[str]) -> sp.csr_matrix:
        try:
            picks = [self.index[sid] for sid in ids]
        except KeyError as exc:
            raise ClassifierError(f"sentence {exc.args[0]!r} not in feature pool") from None
        return self.matrix[picks]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


@dataclass(frozen=True)
class ModelSnapshot:
    backend: str
    label_space: str
    labels: tuple[str, ...]
    dim: int
    version: int
    weights: np.ndarray  # (dim, n_labels)
    bias: np.ndarray  # (n_labels,)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.weights.shape != (self.dim, len(self.labels)):
            raise ClassifierError(
                f"weights shape {self.weights.shape} does not match "
                f"(dim={self.dim}, labels={len(self.labels)})"
            )
        if self.bias.shape != (len(self.labels),):
            raise ClassifierError(f"bias shape {self.bias.shape} invalid")
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    def save(self, path: str | Path) -> Path:
        # np.savez appends .npz on its own; normalize so callers can
        # reference the file they asked for
        path = Path(path)
        if path.suffix != ".npz":
            path = path.with_suffix(path.suffix + ".npz")
        meta = {
            "backend": self.backend,
            "label_space": self.label_space,
            "labels": list(self.labels),
            "dim": self.dim,
            "version": self.version,
            "provenance": self.provenance,
        }
        np.savez_compressed(
            path,
            weights=self.weights,
            bias=self.bias,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ModelSnapshot":
        with np.load(path, allow_pickle=False) as npz:
            meta = json.loads(str(npz["meta"]))
            return cls(
                backend=meta["backend"],
                label_space=meta["label_space"],
                labels=tuple(meta["labels"]),
                dim=int(meta["dim"]),
                version=int(meta["version"]),
                weights=npz["weights"].copy(),
                bias=npz["bias"].copy(),
                provenance=meta.get("provenance", {}),
            )


def cold_snapshot(
    label_space: str,
    schema: LabelSchema = DEFAULT_SCHEMA,
    dim: int = FEATURE_DIM,
) -> ModelSnapshot:
    """All-zero model: every probability 0.5, a defensible blank slate."""
    labels = schema.space(label_space)
    return ModelSnapshot(
        backend=BACKEND_ID,
        label_space=label_space,
        labels=labels,
        dim=dim,
        version=0,
        weights=np.zeros((dim, len(labels))),
        bias=np.zeros(len(labels)),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean per-label binary cross-entropy, clipped away from log(0)."""
    p = np.clip(probs, 1e-12, 1.0 - 1e-12)
    return float(np.mean(-(targets * np.log(p) + (1.0 - targets) * np.log1p(-p))))


def _data_hash(x: sp.csr_matrix, y: np.ndarray) -> str:
    h = zlib.crc32(x.indices.tobytes())
    h = zlib.crc32(x.data.tobytes(), h)
    h = zlib.crc32(y.tobytes(), h)
    return f"{h:08x}"


def train(
    warm_start: ModelSnapshot,
    labeled: tuple[sp.csr_matrix, np.ndarray],
    validation: tuple[sp.csr_matrix, np.ndarray] | None,
    config: TrainConfig = TrainConfig(),
) -> ModelSnapshot:
    """Gradient descent from the warm-start parameters.

    Early stopping watches validation loss (training loss when no
    validation set is given), starting from the warm-start evaluation
    at epoch 0, and returns the parameters of the best epoch. Version
    increments even when training brings no improvement.
    """
    x, y = labeled
    if x.shape[0] == 0:
        raise ClassifierError("empty labeled set")
    if x.shape[0] != y.shape[0]:
        raise ClassifierError(f"{x.shape[0]} feature rows vs {y.shape[0]} label rows")
    if x.shape[1] != warm_start.dim or y.shape[1] != len(warm_start.labels):
        raise ClassifierError(
            f"data dims {x.shape[1]}x{y.shape[1]} do not match model "
            f"{warm_start.dim}x{len(warm_start.labels)}"
        )
    if validation is not None and validation[0].shape[0] == 0:
        validation = None
    if validation is not None:
        xv, yv = validation
        if xv.shape[1] != warm_start.dim or yv.shape[1] != len(warm_start.labels):
            raise ClassifierError("validation dims do not match model")

    y = y.astype(float)
    n, n_labels = y.shape
    w = warm_start.weights.copy()
    b = warm_start.bias.copy()
    lr = config.effective_lr
    xt = x.T.tocsr()

    def monitor(wc: np.ndarray, bc: np.ndarray) -> float:
        if validation is None:
            return bce_loss(_sigmoid(x @ wc + bc), y)
        return bce_loss(_sigmoid(validation[0] @ wc + bc), validation[1].astype(float))

    best_loss = monitor(w, b)
    best_w, best_b = w.copy(), b.copy()
    best_epoch = 0
    since_improved = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        probs = _sigmoid(x @ w + b)
        resid = probs - y
        grad_w = (xt @ resid) / (n * n_labels)
        grad_b = resid.sum(axis=0) / (n * n_labels)
        w -= lr * grad_w
        b -= lr * grad_b
        epochs_run = epoch
        loss = monitor(w, b)
        if loss < best_loss - config.improvement:
            best_loss = loss
            best_w, best_b = w.copy(), b.copy()
            best_epoch = epoch
            since_improved = 0
        else:
            since_improved += 1
        if since_improved > config.patience:
            break

    return ModelSnapshot(
        backend=warm_start.backend,
        label_space=warm_start.label_space,
        labels=warm_start.labels,
        dim=warm_start.dim,
        version=warm_start.version + 1,
        weights=best_w,
        bias=best_b,
        provenance={
            "data_hash": _data_hash(x, y),
            "config": config.to_json(),
            "n_train": n,
            "epochs_run": epochs_run,
            "best_epoch": best_epoch,
            "monitor_loss": best_loss,
        },
    )


def predict(model: ModelSnapshot, batch: sp.csr_matrix) -> np.ndarray:
    """Per-label probabilities, one row per input sentence."""
    if batch.shape[1] != model.dim:
        raise ClassifierError(
            f"batch dimension {batch.shape[1]} does not match model {model.dim}"
        )
    return _sigmoid(batch @ model.weights + model.bias)


def predict_texts(model: ModelSnapshot, texts: Sequence[str]) -> np.ndarray:
    return predict(model, to_csr([featurize(t, model.dim) for t in texts], model.dim))


def decide(prediction: np.ndarray, threshold: float = 0.5) -> tuple[int, ...]:
    """Threshold one probability vector into a multi-hot assignment."""
    if not 0.0 < threshold < 1.0:
        raise ClassifierError(f"threshold must be in (0,1), got {threshold}")
    return tuple(int(p >= threshold) for p in np.asarray(prediction).ravel())


def bce_gradients(
    x: sp.csr_matrix, y: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the mean per-label BCE at (w, b)."""
    y = y.astype(float)
    n, n_labels = y.shape
    resid = _sigmoid(x @ w + b) - y
    return (x.T @ resid) / (n * n_labels), resid.sum(axis=0) / (n * n_labels)
