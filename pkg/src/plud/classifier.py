"""Classifier head over embeddings: ranked class probabilities, a top-prob
confidence score, and a hidden-layer feature map for re-clustering.

Two architectures: LINEAR (softmax regression) and MLP1 (one tanh hidden
layer). Training is plain minibatch SGD on mean cross-entropy plus an L2
penalty on the weight matrices, done entirely in float64 so the analytic
gradients check out against central differences and runs reproduce
bit-for-bit for a fixed seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .validation import check_embedding_matrix, check_fitted

CHECKPOINT_MAGIC = b"PLUDMDL1"

LINEAR = "linear"
MLP1 = "mlp1"


@dataclass
class Prediction:
    item_id: str
    ranked: list[tuple[str, float]]  # (label, probability), descending
    confidence: float
    features: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for shift invariance."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _encode_labels(y, classes: list[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.asarray([index[label] for label in y], dtype=int)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in the class list") from exc


class EmbeddingClassifier(ClassifierMixin, BaseEstimator):
    """Softmax head (optionally with one hidden layer) over embedding rows.

    Parameters mirror the campaign's training config. ``fit`` accepts an
    explicit ``classes`` list so the model can rank every registered class
    even when some have no training rows yet, and ``warm_start_from``
    continues from an earlier model, zero-initializing columns for classes
    registered since.
    """

    def __init__(
        self,
        architecture=MLP1,
        hidden=128,
        learning_rate=0.05,
        epochs=50,
        batch_size=64,
        weight_decay=1e-4,
        seed=0,
        patience=5,
        val_fraction=0.1,
    ):
        self.architecture = architecture
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.seed = seed
        self.patience = patience
        self.val_fraction = val_fraction

    # -- parameter plumbing -------------------------------------------------

    def _init_params(self, d: int, n_classes: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng([self.seed, 0])
        if self.architecture == LINEAR:
            # zero start: the objective is convex, and the untrained model
            # then predicts the uniform distribution by construction
            return {
                "W": np.zeros((d, n_classes)),
                "b": np.zeros(n_classes),
            }
        if self.architecture == MLP1:
            h = int(self.hidden)
            return {
                "W1": rng.standard_normal((d, h)) / np.sqrt(d),
                "b1": np.zeros(h),
                "W2": rng.standard_normal((h, n_classes)) / np.sqrt(h),
                "b2": np.zeros(n_classes),
            }
        raise ValueError(f"unknown architecture {self.architecture!r}")

    @staticmethod
    def _grow_params(
        params: dict[str, np.ndarray], n_classes: int
    ) -> dict[str, np.ndarray]:
        """Zero-init output columns for classes added since the warm model."""
        out = {k: v.copy() for k, v in params.items()}
        out_w = "W2" if "W2" in out else "W"
        out_b = "b2" if "b2" in out else "b"
        have = out[out_w].shape[1]
        if n_classes < have:
            raise ValueError("class list shrank; registries only grow")
        if n_classes > have:
            pad = n_classes - have
            out[out_w] = np.hstack([out[out_w], np.zeros((out[out_w].shape[0], pad))])
            out[out_b] = np.concatenate([out[out_b], np.zeros(pad)])
        return out

    def _forward(self, params: dict, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (logits, hidden activations or X for LINEAR)."""
        if "W1" in params:
            H = np.tanh(X @ params["W1"] + params["b1"])
            return H @ params["W2"] + params["b2"], H
        return X @ params["W"] + params["b"], X

    def _loss_and_grads(
        self, params: dict, X: np.ndarray, y_idx: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        n = X.shape[0]
        logits, H = self._forward(params, X)
        probs = softmax(logits)
        eps = 1e-300  # guards log(0) for a confidently wrong row
        ce = -np.log(probs[np.arange(n), y_idx] + eps).mean()
        reg = sum(
            float(np.sum(params[k] ** 2)) for k in params if k.startswith("W")
        )
        loss = ce + self.weight_decay * reg
        dlogits = probs
        dlogits[np.arange(n), y_idx] -= 1.0
        dlogits /= n
        grads: dict[str, np.ndarray] = {}
        if "W1" in params:
            grads["W2"] = H.T @ dlogits + 2 * self.weight_decay * params["W2"]
            grads["b2"] = dlogits.sum(axis=0)
            dH = (dlogits @ params["W2"].T) * (1.0 - H**2)
            grads["W1"] = X.T @ dH + 2 * self.weight_decay * params["W1"]
            grads["b1"] = dH.sum(axis=0)
        else:
            grads["W"] = X.T @ dlogits + 2 * self.weight_decay * params["W"]
            grads["b"] = dlogits.sum(axis=0)
        return loss, grads

    def _loss_only(self, params: dict, X: np.ndarray, y_idx: np.ndarray) -> float:
        n = X.shape[0]
        logits, _ = self._forward(params, X)
        probs = softmax(logits)
        ce = -np.log(probs[np.arange(n), y_idx] + 1e-300).mean()
        reg = sum(
            float(np.sum(params[k] ** 2)) for k in params if k.startswith("W")
        )
        return ce + self.weight_decay * reg

    # -- training -----------------------------------------------------------

    def fit(
        self,
        X,
        y,
        classes: list[str] | None = None,
        warm_start_from: "EmbeddingClassifier | None" = None,
        registry_version: int | None = None,
        iteration: int = 0,
    ):
        X = check_embedding_matrix(X).astype(np.float64)
        y = np.asarray(y)
        if classes is None:
            classes = [str(c) for c in np.unique(y)]
        if np.unique(y).size < 2:
            raise ValueError("training set holds a single class; need at least two")
        y_idx = _encode_labels([str(v) for v in y], classes)
        n, d = X.shape
        C = len(classes)

        if warm_start_from is not None:
            check_fitted(warm_start_from, "params_")
            if warm_start_from.d_ != d:
                raise ValueError(
                    f"warm start dimension {warm_start_from.d_} != data dimension {d}"
                )
            if list(warm_start_from.classes_) != classes[: len(warm_start_from.classes_)]:
                raise ValueError("warm start class list is not a prefix of the new one")
            params = self._grow_params(warm_start_from.params_, C)
        else:
            params = self._init_params(d, C)

        # deterministic validation split keyed off the seed
        n_val = int(round(n * self.val_fraction))
        if 0 < n_val < n:
            order = np.random.default_rng([self.seed, 1]).permutation(n)
            val_rows, train_rows = order[:n_val], order[n_val:]
        else:
            val_rows, train_rows = np.empty(0, dtype=int), np.arange(n)
        Xt, yt = X[train_rows], y_idx[train_rows]
        Xv, yv = X[val_rows], y_idx[val_rows]

        def monitor(p: dict) -> float:
            if len(val_rows):
                return self._loss_only(p, Xv, yv)
            return self._loss_only(p, Xt, yt)

        best_loss = monitor(params)
        best_params = {k: v.copy() for k, v in params.items()}
        best_epoch = -1
        history = [best_loss]
        since_best = 0
        for epoch in range(int(self.epochs)):
            perm = np.random.default_rng([self.seed, 2, epoch]).permutation(len(Xt))
            for start in range(0, len(Xt), int(self.batch_size)):
                rows = perm[start : start + int(self.batch_size)]
                _, grads = self._loss_and_grads(params, Xt[rows], yt[rows])
                for key, g in grads.items():
                    params[key] -= self.learning_rate * g
            loss = monitor(params)
            history.append(loss)
            if loss < best_loss:
                best_loss = loss
                best_params = {k: v.copy() for k, v in params.items()}
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best >= int(self.patience):
                    break

        self.params_ = best_params
        self.classes_ = np.asarray(classes, dtype=object)
        self.d_ = d
        self.registry_version_ = (
            registry_version if registry_version is not None else C
        )
        self.trained_at_iteration_ = iteration
        self.train_size_ = n
        self.best_epoch_ = best_epoch
        self.monitor_history_ = history
        return self

    # -- inference ----------------------------------------------------------

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self, "params_")
        X = check_embedding_matrix(X)
        if X.shape[1] != self.d_:
            raise ValueError(f"dimension mismatch: model d={self.d_}, data d={X.shape[1]}")
        logits, _ = self._forward(self.params_, X.astype(np.float64))
        return softmax(logits)

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]

    def predict_ranked(self, item_ids, X) -> list[Prediction]:
        """One Prediction per row: full descending ranking plus features."""
        probs = self.predict_proba(X)
        feats = self.feature_embed(X)
        out = []
        for i, item_id in enumerate(item_ids):
            order = np.argsort(-probs[i], kind="stable")
            ranked = [(str(self.classes_[j]), float(probs[i, j])) for j in order]
            out.append(
                Prediction(
                    item_id=item_id,
                    ranked=ranked,
                    confidence=ranked[0][1],
                    features=feats[i],
                )
            )
        return out

    def feature_embed(self, X) -> np.ndarray:
        """Hidden activations for MLP1; the input itself for LINEAR."""
        check_fitted(self, "params_")
        X = check_embedding_matrix(X)
        if X.shape[1] != self.d_:
            raise ValueError(f"dimension mismatch: model d={self.d_}, data d={X.shape[1]}")
        if "W1" not in self.params_:
            return np.asarray(X)
        return np.tanh(X.astype(np.float64) @ self.params_["W1"] + self.params_["b1"])

    # -- verification -------------------------------------------------------

    def grad_check(self, X, y, eps: float = 1e-3) -> float:
        """Max relative error of analytic vs central-difference gradients."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        check_fitted(self, "params_")
        X = check_embedding_matrix(X).astype(np.float64)
        y_idx = _encode_labels([str(v) for v in y], list(self.classes_))
        params = {k: v.copy() for k, v in self.params_.items()}
        _, grads = self._loss_and_grads(
            {k: v.copy() for k, v in params.items()}, X, y_idx
        )
        worst = 0.0
        for key in params:
            flat = params[key].reshape(-1)
            gflat = grads[key].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                hi = self._loss_only(params, X, y_idx)
                flat[j] = orig - eps
                lo = self._loss_only(params, X, y_idx)
                flat[j] = orig
                numeric = (hi - lo) / (2 * eps)
                denom = max(abs(gflat[j]), abs(numeric))
                if denom < 1e-12:
                    continue
                worst = max(worst, abs(gflat[j] - numeric) / denom)
        return worst

    # -- checkpointing ------------------------------------------------------

    _ARRAY_ORDER = {LINEAR: ["W", "b"], MLP1: ["W1", "b1", "W2", "b2"]}

    def save(self, path: str) -> None:
        check_fitted(self, "params_")
        order = self._ARRAY_ORDER[self.architecture]
        header = {
            "architecture": self.architecture,
            "hidden": int(self.hidden) if self.architecture == MLP1 else None,
            "dimension": self.d_,
            "classes": [str(c) for c in self.classes_],
            "registry_version": self.registry_version_,
            "trained_at_iteration": self.trained_at_iteration_,
            "train_size": self.train_size_,
            "arrays": [[k, list(self.params_[k].shape)] for k in order],
            "hyperparams": self.get_params(),
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            for key in order:
                fh.write(np.ascontiguousarray(self.params_[key], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "EmbeddingClassifier":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise ValueError("not a classifier checkpoint")
        (head_len,) = struct.unpack_from("<I", blob, len(CHECKPOINT_MAGIC))
        start = len(CHECKPOINT_MAGIC) + 4
        header = json.loads(blob[start : start + head_len].decode("utf-8"))
        model = cls(**header["hyperparams"])
        offset = start + head_len
        params = {}
        for key, shape in header["arrays"]:
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            params[key] = arr.reshape(shape).copy()
            offset += count * 8
        if offset != len(blob):
            raise ValueError("checkpoint payload size mismatch")
        model.params_ = params
        model.classes_ = np.asarray(header["classes"], dtype=object)
        model.d_ = header["dimension"]
        model.registry_version_ = header["registry_version"]
        model.trained_at_iteration_ = header["trained_at_iteration"]
        model.train_size_ = header["train_size"]
        model.best_epoch_ = None
        model.monitor_history_ = []
        return model
