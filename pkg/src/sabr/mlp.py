"""Two-hidden-layer tanh MLPs with hand-written backprop and Adam.

Weights follow the ``out x in`` convention; inputs are batched row-wise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

OBS_DIM = 48
HIDDEN = 64
N_ACTIONS = 6
FORMAT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class NonFiniteInput(ValueError):
    pass


class NonFiniteGrad(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class ModelFileError(DataError):
    pass


@dataclass
class MLPParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def arch(self) -> list[int]:
        return [self.W1.shape[1], self.W1.shape[0], self.W2.shape[0], self.W3.shape[0]]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self) -> "MLPParams":
        return MLPParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "MLPParams":
        return MLPParams(*(np.zeros_like(a) for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec) -> None:
        i = 0
        for a in self.arrays():
            a.ravel()[...] = vec[i:i + a.size]
            i += a.size

    def __eq__(self, other):
        if not isinstance(other, MLPParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(arch=(OBS_DIM, HIDDEN, HIDDEN, N_ACTIONS), seed: int = 0) -> MLPParams:
    """Fan-balanced uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers += [rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)]
    return MLPParams(*layers)


def zero_params(arch=(OBS_DIM, HIDDEN, HIDDEN, N_ACTIONS)) -> MLPParams:
    layers = []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        layers += [np.zeros((fan_out, fan_in)), np.zeros(fan_out)]
    return MLPParams(*layers)


def _as_batch(params: MLPParams, obs) -> np.ndarray:
    x = np.asarray(obs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.W1.shape[1]:
        raise ShapeMismatch(f"expected observations of width {params.W1.shape[1]}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("observation contains non-finite values")
    return x


def forward(params: MLPParams, obs):
    """Raw network output plus the hidden activations needed by ``backward``."""
    x = _as_batch(params, obs)
    h1 = np.tanh(x @ params.W1.T + params.b1)
    h2 = np.tanh(h1 @ params.W2.T + params.b2)
    out = h2 @ params.W3.T + params.b3
    return out, (x, h1, h2)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def actor_forward(params: MLPParams, obs):
    """Action probabilities and logits; a single observation gives 1-D outputs."""
    logits, _ = forward(params, obs)
    probs = softmax(logits)
    if np.ndim(obs) == 1:
        return probs[0], logits[0]
    return probs, logits


def critic_forward(params: MLPParams, obs):
    value, _ = forward(params, obs)
    value = value[:, 0]
    return float(value[0]) if np.ndim(obs) == 1 else value


def backward(params: MLPParams, cache, d_out) -> MLPParams:
    """Gradient of a loss given its gradient ``d_out`` w.r.t. the network output."""
    x, h1, h2 = cache
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.ndim == 1:
        d_out = d_out[:, None]
    if d_out.shape != (x.shape[0], params.W3.shape[0]):
        raise ShapeMismatch(f"upstream gradient shape {d_out.shape} does not match the output")
    dW3 = d_out.T @ h2
    db3 = d_out.sum(axis=0)
    d_a2 = (d_out @ params.W3) * (1.0 - h2 ** 2)
    dW2 = d_a2.T @ h1
    db2 = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ params.W2) * (1.0 - h1 ** 2)
    dW1 = d_a1.T @ x
    db1 = d_a1.sum(axis=0)
    return MLPParams(dW1, db1, dW2, db2, dW3, db3)


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: MLPParams | None = field(default=None, repr=False)
    v: MLPParams | None = field(default=None, repr=False)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         None if self.m is None else self.m.copy(),
                         None if self.v is None else self.v.copy())


def adam_step(params: MLPParams, grads: MLPParams, state: AdamState) -> tuple[MLPParams, AdamState]:
    """Bias-corrected Adam update; returns new params and optimizer state."""
    if not all(np.all(np.isfinite(g)) for g in grads.arrays()):
        raise NonFiniteGrad("gradient contains non-finite values")
    new = state.copy()
    if new.m is None:
        new.m, new.v = params.zeros_like(), params.zeros_like()
    new.step += 1
    c1 = 1.0 - new.beta1 ** new.step
    c2 = 1.0 - new.beta2 ** new.step
    out = []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), new.m.arrays(), new.v.arrays()):
        m *= new.beta1
        m += (1.0 - new.beta1) * g
        v *= new.beta2
        v += (1.0 - new.beta2) * g * g
        out.append(p - new.lr * (m / c1) / (np.sqrt(v / c2) + new.eps))
    return MLPParams(*out), new


# --- model files --------------------------------------------------------------

def params_to_dict(params: MLPParams, meta: dict | None = None) -> dict:
    return {
        "version": FORMAT_VERSION,
        "arch": params.arch,
        "activation": "tanh",
        "weights": {n: a.tolist() for n, a in zip(PARAM_NAMES, params.arrays())},
        "meta": meta or {},
    }


def params_from_dict(doc: dict) -> tuple[MLPParams, dict]:
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model version {doc.get('version')!r}")
    if doc.get("activation") != "tanh":
        raise ModelFileError(f"unsupported activation {doc.get('activation')!r}")
    try:
        arrays = [np.array(doc["weights"][n], dtype=np.float64) for n in PARAM_NAMES]
    except KeyError as exc:
        raise ModelFileError(f"missing weight {exc}") from None
    params = MLPParams(*arrays)
    ref = zero_params(doc["arch"])
    if any(a.shape != b.shape for a, b in zip(params.arrays(), ref.arrays())):
        raise ModelFileError("weight shapes do not match the declared architecture")
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise ModelFileError("non-finite weight")
    return params, doc.get("meta", {})


def dumps_model(params: MLPParams, meta: dict | None = None) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(params_to_dict(params, meta), sort_keys=True)


def save_model(params: MLPParams, path, meta: dict | None = None) -> None:
    Path(path).write_text(dumps_model(params, meta) + "\n", encoding="utf-8")


def load_model(path) -> tuple[MLPParams, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelFileError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: invalid JSON ({exc})") from None
    return params_from_dict(doc)
