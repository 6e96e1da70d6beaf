"""Dense layers shared by the selection and extrapolation networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class Dense:
    """One fully connected layer, optionally followed by a ReLU."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"  # "relu" or "linear"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("dense layer needs (out,in) weights and a length-out bias")
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]


def glorot_uniform(out_dim: int, in_dim: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def init_dense(out_dim: int, in_dim: int, rng: np.random.Generator, activation: str = "relu") -> Dense:
    return Dense(W=glorot_uniform(out_dim, in_dim, rng), b=np.zeros(out_dim), activation=activation)


def init_stack(dims: list[int], rng: np.random.Generator, final_activation: str = "linear") -> list[Dense]:
    """Dense stack through the given dims; hidden layers ReLU, last as told."""
    layers = []
    for i in range(len(dims) - 1):
        act = final_activation if i == len(dims) - 2 else "relu"
        layers.append(init_dense(dims[i + 1], dims[i], rng, activation=act))
    return layers


def apply_dense(layer_leaves, x):
    """Run a tape node through (W, b, activation) leaf triples.

    ``x`` may be a vector node or an (in_dim, batch) matrix node; biases
    broadcast over columns in the matrix case.
    """
    for W, b, activation in layer_leaves:
        y = ad.matmul(W, x)
        if y.value.ndim == 2:
            y = ad.add_colvec(y, b)
        else:
            y = ad.add(y, b)
        x = ad.relu(y) if activation == "relu" else y
    return x


def stack_leaves(tape, layers: list[Dense]):
    """Create parameter leaves for a dense stack; returns (triples, leaves)."""
    triples = []
    leaves = []
    for layer in layers:
        W = tape.leaf(layer.W)
        b = tape.leaf(layer.b)
        triples.append((W, b, layer.activation))
        leaves.extend([W, b])
    return triples, leaves


def stack_params(layers: list[Dense]) -> list[np.ndarray]:
    out = []
    for layer in layers:
        out.extend([layer.W, layer.b])
    return out


def set_stack_params(layers: list[Dense], flat: list[np.ndarray]):
    """Write a flat parameter list (as from stack_params) back into layers."""
    if len(flat) != 2 * len(layers):
        raise ValueError("parameter list does not match the stack")
    for i, layer in enumerate(layers):
        layer.W = flat[2 * i]
        layer.b = flat[2 * i + 1]
