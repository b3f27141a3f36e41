"""Dense numeric kernels for the regressor: matmul/activations with shape
contracts, parameter containers, seeded initialization, and ADAM.

Matrices are plain 2-D float64 numpy arrays; the operations here add the
shape/finiteness checking and the deterministic-behaviour contract the
training stack relies on.  Everything is value-semantics: functions
return fresh arrays and never mutate their inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

Matrix = np.ndarray


class NonFiniteError(FloatingPointError):
    def __init__(self, where: str):
        super().__init__(f"non-finite values in {where}")
        self.where = where


def check_finite(name: str, a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(name)
    return a


def as_matrix(a, name: str = "matrix") -> Matrix:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != upstream.shape:
        raise ValueError(f"relu_grad shapes differ: {x.shape} vs {upstream.shape}")
    return np.where(x > 0.0, upstream, 0.0)  # subgradient 0 at x == 0


def softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"softmax expects a vector, got shape {v.shape}")
    check_finite("softmax input", v)
    e = np.exp(v - v.max())
    return e / e.sum()


INIT_SCHEMES = ("uniform_glorot", "gaussian")


@dataclass
class ParamStore:
    """Ordered named parameter arrays; iteration order is fixed."""

    arrays: dict  # name -> np.ndarray, insertion-ordered

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self):
        return list(self.arrays)

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ParamStore":
        return ParamStore({k: np.zeros_like(v) for k, v in self.arrays.items()})

    def check_shapes(self, other: "ParamStore"):
        if self.names() != other.names():
            raise ValueError(f"parameter names differ: {self.names()} vs {other.names()}")
        for k in self.arrays:
            if self.arrays[k].shape != other.arrays[k].shape:
                raise ValueError(f"shape mismatch for {k!r}: "
                                 f"{self.arrays[k].shape} vs {other.arrays[k].shape}")


def _draw(rng, scheme: str, shape, fan_in: int, fan_out: int) -> np.ndarray:
    if scheme == "uniform_glorot":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)
    if scheme == "gaussian":
        std = np.sqrt(2.0 / (fan_in + fan_out))
        return rng.normal(0.0, std, size=shape)
    raise ValueError(f"unknown init scheme {scheme!r} (choose from {INIT_SCHEMES})")


def init_params(feature_dim: int, hidden_dims, scheme: str = "uniform_glorot",
                seed: int = 0) -> ParamStore:
    """Parameters for the 2-stage conv + attention readout architecture.

    conv<l>: (dims[l], dims[l+1]); feat: (h_last,); gate: (1,).
    """
    rng = np.random.default_rng(seed)
    dims = [feature_dim] + list(hidden_dims)
    arrays = {}
    for l in range(len(hidden_dims)):
        arrays[f"conv{l}"] = _draw(rng, scheme, (dims[l], dims[l + 1]),
                                   dims[l], dims[l + 1])
    h_last = dims[-1]
    arrays["feat"] = _draw(rng, scheme, (h_last,), h_last, 1)
    arrays["gate"] = _draw(rng, scheme, (1,), 1, 1)
    return ParamStore(arrays)


@dataclass
class AdamState:
    m: ParamStore
    v: ParamStore
    t: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like(), 0, lr, beta1, beta2, eps)


def adam_step(params: ParamStore, grads: ParamStore,
              state: AdamState) -> tuple[ParamStore, AdamState]:
    """One bias-corrected ADAM descent step; returns fresh params/state.

    A non-finite gradient is reported as a warning and the step is
    skipped entirely (parameters, moments and t unchanged).
    """
    params.check_shapes(grads)
    for k in grads.arrays:
        if not np.all(np.isfinite(grads.arrays[k])):
            warnings.warn(f"non-finite gradient for {k!r}; ADAM step skipped",
                          RuntimeWarning, stacklevel=2)
            return params, state
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    b1, b2 = state.beta1, state.beta2
    for k, g in grads.arrays.items():
        m = b1 * state.m.arrays[k] + (1 - b1) * g
        v = b2 * state.v.arrays[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[k] = params.arrays[k] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return ParamStore(new_p), replace(state, m=ParamStore(new_m), v=ParamStore(new_v), t=t)


def params_to_doc(params: ParamStore) -> dict:
    """Shape-tagged JSON-safe dict (row-major value lists)."""
    return {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
            for k, v in params.arrays.items()}


def params_from_doc(doc: dict) -> ParamStore:
    arrays = {}
    for k, spec in doc.items():
        arrays[k] = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
    return ParamStore(arrays)
