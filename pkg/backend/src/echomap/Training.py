import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from echomap.Adam import Adam
from echomap.EchoMapException import FingerprintMismatchException, InvalidSpecException, NonFiniteLossException
from echomap.Neural import (LstmParams, ModelConfig, backward, check_shapes, clip_by_global_norm, forward,
                            init_params, loss)
from echomap.SequenceData import TEST, TRAIN, Normalization, SequenceDataset

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
# SeedSequence stream indices.
INIT_STREAM, SHUFFLE_STREAM, DROPOUT_STREAM = 0, 1, 2


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class TrainHistory:
    """
    Per-epoch metrics. Entry 0 is the untrained model; ``wall_time_s`` is for logs only
    and is never persisted.
    """
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0

    def record(self, train_loss: float, train_accuracy: float, test_accuracy: float):
        self.train_loss.append(train_loss)
        self.train_accuracy.append(train_accuracy)
        self.test_accuracy.append(test_accuracy)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": range(len(self.train_loss)), "train_loss": self.train_loss,
                             "train_accuracy": self.train_accuracy, "test_accuracy": self.test_accuracy})

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "TrainHistory":
        return cls([float(v) for v in df["train_loss"]], [float(v) for v in df["train_accuracy"]],
                   [float(v) for v in df["test_accuracy"]])


@dataclass(eq=False)
class TrainedModel:
    config: ModelConfig
    params: LstmParams
    normalization: Normalization
    seed: int

    @property
    def fingerprint(self) -> str:
        return self.normalization.fingerprint


@dataclass(eq=False)
class Prediction:
    labels: np.ndarray
    confidence: np.ndarray
    probs: np.ndarray

    def __len__(self):
        return len(self.labels)


def init_model(config: ModelConfig) -> LstmParams:
    return init_params(config, stream(config.seed, INIT_STREAM))


def inverse_frequency_weights(labels: np.ndarray, classes: int) -> np.ndarray:
    """
    Per-class weights ``n / (k * n_c)`` over the ``k`` classes present; absent classes
    get weight 0.
    """
    counts = np.bincount(labels, minlength=classes).astype(np.float64)
    present = counts > 0
    weights = np.zeros(classes)
    weights[present] = len(labels) / (np.count_nonzero(present) * counts[present])
    return weights


def infer_probs(params: LstmParams, x: np.ndarray, config: ModelConfig) -> np.ndarray:
    """
    Inference-mode probabilities for ``(n, time, features)`` inputs, in batches.
    """
    if len(x) == 0:
        return np.zeros((0, config.classes))
    return np.concatenate([forward(params, x[i:i + config.batch_size], config)[0]
                           for i in range(0, len(x), config.batch_size)])


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def train(params: LstmParams, ds: SequenceDataset, config: ModelConfig) -> tuple[TrainedModel, TrainHistory]:
    """
    Mini-batch training with Adam on the train split of a normalized dataset. The
    shuffle order and dropout masks come from streams derived from ``config.seed``, so
    a repeated run reproduces the parameters bit for bit.

    :raises NonFiniteLossException: when a batch loss is NaN or infinite.
    """
    if ds.normalization is None:
        raise InvalidSpecException("train needs a normalized dataset")
    x_train, y_train = ds.arrays(TRAIN)
    x_test, y_test = ds.arrays(TEST)
    if len(y_train) == 0:
        raise InvalidSpecException("train needs a non-empty train split")
    check_shapes(params, config)
    params = params.copy()
    weights = inverse_frequency_weights(y_train, config.classes) if config.class_weighted else None
    optimizer = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    shuffle_rng = stream(config.seed, SHUFFLE_STREAM)
    dropout_rng = stream(config.seed, DROPOUT_STREAM)

    history = TrainHistory()
    start = time.perf_counter()
    train_probs = infer_probs(params, x_train, config)
    history.record(loss(train_probs, y_train), accuracy(train_probs, y_train),
                   accuracy(infer_probs(params, x_test, config), y_test))

    last_norm = 0.0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(y_train))
        total_loss, correct = 0.0, 0
        for batch_start in range(0, len(order), config.batch_size):
            idx = order[batch_start:batch_start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            wb = weights[yb] if weights is not None else None
            probs, cache = forward(params, xb, config, "train", dropout_rng)
            batch_loss = loss(probs, yb, wb)
            if not np.isfinite(batch_loss):
                raise NonFiniteLossException(
                    f"Loss became {batch_loss} at epoch {epoch}, batch {batch_start // config.batch_size}; "
                    f"last gradient norm {last_norm:.3g} (clipped at {config.grad_clip}). "
                    f"Try a learning rate below {config.learning_rate}.")
            grads, last_norm = clip_by_global_norm(backward(params, cache, yb, wb), config.grad_clip)
            optimizer.step(params.arrays, grads)
            total_loss += batch_loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == yb))
        test_acc = accuracy(infer_probs(params, x_test, config), y_test)
        history.record(total_loss / len(y_train), correct / len(y_train), test_acc)
        logger.info("epoch %d/%d: loss %.4f, train accuracy %.3f, test accuracy %.3f", epoch, config.epochs,
                    history.train_loss[-1], history.train_accuracy[-1], test_acc)
    history.wall_time_s = time.perf_counter() - start
    logger.info("Trained %d epochs in %.1f s", config.epochs, history.wall_time_s)
    if not params.all_finite():
        raise NonFiniteLossException("Training produced non-finite parameters")
    return TrainedModel(config, params, ds.normalization, config.seed), history


def _predict_arrays(model: TrainedModel, x: np.ndarray) -> Prediction:
    probs = infer_probs(model.params, x, model.config)
    if len(probs) == 0:
        return Prediction(np.zeros(0, dtype=np.int64), np.zeros(0), probs)
    return Prediction(np.argmax(probs, axis=1), np.max(probs, axis=1), probs)


def predict(model: TrainedModel, ds: SequenceDataset, split: str | None = None) -> Prediction:
    """
    Labels and confidences for already-normalized sequences.

    :raises FingerprintMismatchException: if the sequences were not normalized with the
        model's stored parameters.
    """
    if ds.normalization is None or ds.normalization.fingerprint != model.fingerprint:
        got = ds.normalization.fingerprint if ds.normalization else "none"
        raise FingerprintMismatchException(f"Sequences normalized with {got}, model expects {model.fingerprint}")
    x, _ = ds.arrays(split)
    return _predict_arrays(model, x)


def predict_raw(model: TrainedModel, values: np.ndarray) -> Prediction:
    """
    Labels and confidences for raw (kHz) sequences of shape ``(n, time)``, normalized
    with the model's stored parameters.
    """
    x = model.normalization.apply(np.asarray(values, dtype=np.float64))
    if x.ndim == 1:
        x = x[None]
    return _predict_arrays(model, x.reshape(len(x), -1, 1) if len(x) else np.zeros((0, model.config.seq_len, 1)))


def save_model(model: TrainedModel, path: str):
    doc = {"format_version": MODEL_FORMAT_VERSION,
           "config": model.config.to_dict(),
           "params": {name: {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}
                      for name, a in sorted(model.params.arrays.items())},
           "normalization": model.normalization.to_dict(),
           "seed": model.seed}
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_model(path: str) -> TrainedModel:
    """
    :raises InvalidSpecException: on an unknown format version.
    :raises FingerprintMismatchException: if the stored normalization fingerprint does
        not match the stored mean and standard deviation.
    """
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise InvalidSpecException(f"Unsupported model format version {doc.get('format_version')}")
    config = ModelConfig.from_dict(doc["config"])
    arrays = {name: np.array(p["data"], dtype=config.dtype).reshape(p["shape"]) for name, p in doc["params"].items()}
    params = LstmParams(arrays)
    check_shapes(params, config)
    normalization = Normalization.from_dict(doc["normalization"])
    if normalization.fingerprint != doc["normalization"].get("fingerprint"):
        raise FingerprintMismatchException(f"Model {path} has a normalization fingerprint that does not match "
                                           f"its stored parameters")
    return TrainedModel(config, params, normalization, int(doc["seed"]))
