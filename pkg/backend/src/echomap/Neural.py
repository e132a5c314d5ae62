"""
A stacked LSTM sequence classifier written directly in numpy: two recurrent layers,
a tanh dense layer and a softmax output, with inverted dropout after each of the first
three. Gradients are computed by backpropagation through time. All gate blocks are
laid out in the order input, forget, cell candidate, output.
"""
import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from echomap.DefectClass import NUM_CLASSES
from echomap.EchoMapException import InvalidSpecException, MissingCacheException, ShapeMismatchException

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
PARAM_NAMES = ("W1", "U1", "b1", "W2", "U2", "b2", "Wd", "bd", "Wo", "bo")


@dataclass(frozen=True)
class ModelConfig:
    layer1_units: int = 64
    layer2_units: int = 32
    dense_units: int = 16
    dropout_rates: tuple[float, float, float] = (0.3, 0.3, 0.2)
    classes: int = NUM_CLASSES
    input_dim: int = 1
    seq_len: int = 20
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    grad_clip: float = 5.0
    class_weighted: bool = False
    precision: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "dropout_rates", tuple(float(r) for r in self.dropout_rates))
        if len(self.dropout_rates) != 3 or not all(0 <= r < 1 for r in self.dropout_rates):
            raise InvalidSpecException(f"Need three dropout rates in [0, 1), got {self.dropout_rates}")
        for name in ("layer1_units", "layer2_units", "dense_units", "input_dim", "seq_len", "batch_size"):
            if getattr(self, name) <= 0:
                raise InvalidSpecException(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise InvalidSpecException(f"epochs must be non-negative, got {self.epochs}")
        if self.classes != NUM_CLASSES:
            raise InvalidSpecException(f"The classifier has {NUM_CLASSES} classes, got {self.classes}")
        if self.learning_rate <= 0:
            raise InvalidSpecException(f"learning_rate must be positive, got {self.learning_rate}")
        if self.precision not in ("float64", "float32"):
            raise InvalidSpecException(f"precision must be float64 or float32, got {self.precision}")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dropout_rates"] = list(self.dropout_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidSpecException(f"Unknown model config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "dropout_rates" in kwargs:
            kwargs["dropout_rates"] = tuple(kwargs["dropout_rates"])
        return cls(**kwargs)


@dataclass(eq=False)
class LstmParams:
    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "LstmParams":
        return LstmParams({k: v.copy() for k, v in self.arrays.items()})

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays.values())

    def equals(self, other: "LstmParams") -> bool:
        return self.arrays.keys() == other.arrays.keys() and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h1, h2, d = config.layer1_units, config.layer2_units, config.dense_units
    return {"W1": (config.input_dim, 4 * h1), "U1": (h1, 4 * h1), "b1": (4 * h1,),
            "W2": (h1, 4 * h2), "U2": (h2, 4 * h2), "b2": (4 * h2,),
            "Wd": (h2, d), "bd": (d,), "Wo": (d, config.classes), "bo": (config.classes,)}


def init_params(config: ModelConfig, rng: np.random.Generator) -> LstmParams:
    """
    Uniform ``+-1/sqrt(fan_in)`` weights, forget-gate biases of 1 and a zero output
    layer, so an untrained model predicts the uniform distribution.
    """
    shapes = expected_shapes(config)
    dtype = config.dtype

    def uniform(name):
        bound = 1.0 / np.sqrt(shapes[name][0])
        return rng.uniform(-bound, bound, shapes[name]).astype(dtype)

    def lstm_bias(units):
        b = np.zeros(4 * units, dtype=dtype)
        b[units:2 * units] = 1.0
        return b

    arrays = {"W1": uniform("W1"), "U1": uniform("U1"), "b1": lstm_bias(config.layer1_units),
              "W2": uniform("W2"), "U2": uniform("U2"), "b2": lstm_bias(config.layer2_units),
              "Wd": uniform("Wd"), "bd": np.zeros(shapes["bd"], dtype=dtype),
              "Wo": np.zeros(shapes["Wo"], dtype=dtype), "bo": np.zeros(shapes["bo"], dtype=dtype)}
    return LstmParams(arrays)


def check_shapes(params: LstmParams, config: ModelConfig):
    for name, shape in expected_shapes(config).items():
        if name not in params.arrays:
            raise ShapeMismatchException(f"Parameter {name} is missing")
        if params.arrays[name].shape != shape:
            raise ShapeMismatchException(f"Parameter {name} has shape {params.arrays[name].shape}, expected {shape}")


def _gates(z: np.ndarray, units: int):
    i = expit(z[..., :units])
    f = expit(z[..., units:2 * units])
    g = np.tanh(z[..., 2 * units:3 * units])
    o = expit(z[..., 3 * units:])
    return i, f, g, o


def lstm_cell_forward(x: np.ndarray, h: np.ndarray, c: np.ndarray, W: np.ndarray, U: np.ndarray,
                      b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    One LSTM step: ``c' = f * c + i * g`` and ``h' = o * tanh(c')``. Works on single
    vectors or on batches along the leading axis.
    """
    units = U.shape[0]
    if (x.shape[-1] != W.shape[0] or h.shape[-1] != units or c.shape[-1] != units
            or W.shape[1] != 4 * units or U.shape[1] != 4 * units or b.shape[-1] != 4 * units):
        raise ShapeMismatchException(f"LSTM cell shapes do not agree: x {x.shape}, h {h.shape}, c {c.shape}, "
                                     f"W {W.shape}, U {U.shape}, b {b.shape}")
    i, f, g, o = _gates(x @ W + h @ U + b, units)
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


@dataclass(eq=False)
class LayerCache:
    inputs: np.ndarray
    steps: list[tuple[np.ndarray, ...]] = field(default_factory=list)


def lstm_layer_forward(X: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, LayerCache]:
    """
    Runs a layer over ``X`` of shape ``(batch, time, features)`` from zero state and
    returns the full hidden sequence.
    """
    batch, steps, _ = X.shape
    units = U.shape[0]
    h = np.zeros((batch, units), dtype=X.dtype)
    c = np.zeros((batch, units), dtype=X.dtype)
    hs = np.empty((batch, steps, units), dtype=X.dtype)
    cache = LayerCache(X)
    for t in range(steps):
        i, f, g, o = _gates(X[:, t] @ W + h @ U + b, units)
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.steps.append((h, c, i, f, g, o, tc))
        h, c = o * tc, c_new
        hs[:, t] = h
    return hs, cache


def lstm_layer_backward(dhs: np.ndarray, cache: LayerCache, W: np.ndarray,
                        U: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Backpropagation through time for one layer, given the loss gradient with respect to
    every hidden output. Returns gradients for the inputs, ``W``, ``U`` and ``b``.
    """
    X = cache.inputs
    batch, steps, _ = X.shape
    units = U.shape[0]
    dX = np.zeros_like(X)
    dW, dU = np.zeros_like(W), np.zeros_like(U)
    db = np.zeros(4 * units, dtype=W.dtype)
    dh_next = np.zeros((batch, units), dtype=X.dtype)
    dc_next = np.zeros((batch, units), dtype=X.dtype)
    for t in reversed(range(steps)):
        h_prev, c_prev, i, f, g, o, tc = cache.steps[t]
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1 - tc * tc)
        dz = np.concatenate([dc * g * i * (1 - i),
                             dc * c_prev * f * (1 - f),
                             dc * i * (1 - g * g),
                             dh * tc * o * (1 - o)], axis=1)
        dW += X[:, t].T @ dz
        dU += h_prev.T @ dz
        db += dz.sum(axis=0)
        dX[:, t] = dz @ W.T
        dh_next = dz @ U.T
        dc_next = dc * f
    return dX, dW, dU, db


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """
    Inverted dropout: kept units are scaled by ``1 / (1 - rate)``.
    """
    return ((rng.random(shape) >= rate) / (1.0 - rate)).astype(dtype)


@dataclass(eq=False)
class ForwardCache:
    layer1: LayerCache
    layer2: LayerCache
    h2: np.ndarray
    dense: np.ndarray
    dense_out: np.ndarray
    masks: tuple[np.ndarray | None, np.ndarray | None, np.ndarray | None]
    probs: np.ndarray


def forward(params: LstmParams, x: np.ndarray, config: ModelConfig, mode: str = "infer",
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardCache]:
    """
    Class probabilities for a sequence of shape ``(time, features)`` or a batch of shape
    ``(batch, time, features)``. ``mode="train"`` applies dropout drawn from ``rng``.

    :returns: The probabilities (``(classes,)`` or ``(batch, classes)``) and the cache
        needed by :func:`backward`.
    """
    if mode not in ("train", "infer"):
        raise InvalidSpecException(f"mode must be train or infer, got {mode}")
    X = np.asarray(x, dtype=config.dtype)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != config.input_dim:
        raise ShapeMismatchException(f"Expected input of shape (batch, time, {config.input_dim}), got {np.shape(x)}")
    if not np.all(np.isfinite(X)):
        raise InvalidSpecException("Input sequence contains non-finite values")
    train = mode == "train"
    if train and rng is None:
        raise InvalidSpecException("Training mode needs a dropout RNG")
    r1, r2, r3 = config.dropout_rates
    p = params.arrays

    hs1, cache1 = lstm_layer_forward(X, p["W1"], p["U1"], p["b1"])
    m1 = dropout_mask(hs1.shape, r1, rng, X.dtype) if train else None
    hs2, cache2 = lstm_layer_forward(hs1 * m1 if train else hs1, p["W2"], p["U2"], p["b2"])
    h2 = hs2[:, -1]
    m2 = dropout_mask(h2.shape, r2, rng, X.dtype) if train else None
    h2d = h2 * m2 if train else h2
    dense = np.tanh(h2d @ p["Wd"] + p["bd"])
    m3 = dropout_mask(dense.shape, r3, rng, X.dtype) if train else None
    dense_out = dense * m3 if train else dense
    probs = softmax(dense_out @ p["Wo"] + p["bo"], axis=1)
    cache = ForwardCache(cache1, cache2, h2d, dense, dense_out, (m1, m2, m3), probs)
    return (probs[0] if single else probs), cache


def loss(probs: np.ndarray, labels, weights: np.ndarray | None = None) -> float:
    """
    Sparse categorical cross-entropy ``-log(p_label)``, with probabilities clamped at
    1e-12, averaged over the batch. Optional per-sample weights scale each term.
    """
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    picked = np.maximum(probs[np.arange(len(labels)), labels], PROB_FLOOR)
    per_sample = -np.log(picked)
    if weights is not None:
        per_sample = per_sample * weights
    return float(np.sum(per_sample) / len(labels))


def backward(params: LstmParams, cache: ForwardCache | None, labels,
             weights: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """
    Gradients of :func:`loss` with respect to every parameter, from the activations
    cached by the last :func:`forward` call.

    :raises MissingCacheException: if no forward cache is supplied.
    """
    if cache is None or not cache.layer1.steps:
        raise MissingCacheException("backward needs the cache of a forward pass")
    p = params.arrays
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch = len(labels)
    m1, m2, m3 = cache.masks

    dlogits = cache.probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    if weights is not None:
        dlogits *= weights[:, None]
    dlogits /= batch

    grads = {"Wo": cache.dense_out.T @ dlogits, "bo": dlogits.sum(axis=0)}
    d_dense = dlogits @ p["Wo"].T
    if m3 is not None:
        d_dense = d_dense * m3
    d_pre = d_dense * (1 - cache.dense ** 2)
    grads["Wd"] = cache.h2.T @ d_pre
    grads["bd"] = d_pre.sum(axis=0)
    dh2 = d_pre @ p["Wd"].T
    if m2 is not None:
        dh2 = dh2 * m2

    dhs2 = np.zeros(cache.layer2.inputs.shape[:2] + (p["U2"].shape[0],), dtype=dh2.dtype)
    dhs2[:, -1] = dh2
    dhs1, grads["W2"], grads["U2"], grads["b2"] = lstm_layer_backward(dhs2, cache.layer2, p["W2"], p["U2"])
    if m1 is not None:
        dhs1 = dhs1 * m1
    _, grads["W1"], grads["U1"], grads["b1"] = lstm_layer_backward(dhs1, cache.layer1, p["W1"], p["U1"])
    return grads


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm
