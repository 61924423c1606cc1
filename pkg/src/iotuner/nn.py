"""Chain neural networks: layers, softmax/cross-entropy loss, SGD with momentum.

Models are plain layer chains operating on column vectors (one sample at a
time, matching the streaming flow of the tuning loop).  A fully-connected
layer with weights W (out x in) and bias b computes W @ x + b.

Training walks the chain forward (each layer caching what its backward rule
needs), pushes the loss gradient back through the chain, then applies a
momentum SGD step.  Inference uses a cache-free forward path, so a frozen
model can serve predictions from several threads at once.
"""

from __future__ import annotations

import math

import numpy as np

from . import matrix as mx
from .errors import ShapeError, StateError
from .matrix import DTYPE, Matrix


class FullyConnectedLayer:
    """Affine layer: forward computes weights @ x + bias.

    Backward, given d_out = dL/d_output and the cached input x:
        grad_weights += d_out @ x^T
        grad_bias    += d_out
        d_in          = weights^T @ d_out
    """

    kind = "fc"

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            w = np.zeros((out_dim, in_dim), dtype=DTYPE)
        else:
            # Uniform +-sqrt(6 / (fan_in + fan_out)); bias starts at zero.
            limit = math.sqrt(6.0 / (in_dim + out_dim))
            w = rng.uniform(-limit, limit, size=(out_dim, in_dim)).astype(DTYPE)
        self.weights = Matrix(w)
        self.bias = Matrix.zeros(out_dim, 1)
        self.grad_weights = Matrix.zeros(out_dim, in_dim)
        self.grad_bias = Matrix.zeros(out_dim, 1)
        self.cached_input: Matrix | None = None

    def forward(self, x: Matrix, cache: bool) -> Matrix:
        if x.rows != self.in_dim or x.cols != 1:
            raise ShapeError(
                f"fc layer expects {self.in_dim}x1 input, got {x.rows}x{x.cols}"
            )
        if cache:
            self.cached_input = x
        return mx.add(mx.matmul(self.weights, x), self.bias)

    def backward(self, d_out: Matrix) -> Matrix:
        if self.cached_input is None:
            raise StateError("fc backward called without a cached forward input")
        x = self.cached_input
        self.grad_weights = mx.add(self.grad_weights, mx.matmul(d_out, mx.transpose(x)))
        self.grad_bias = mx.add(self.grad_bias, d_out)
        d_in = mx.matmul(mx.transpose(self.weights), d_out)
        self.cached_input = None
        return d_in

    def parameters(self) -> list[tuple[str, Matrix, Matrix]]:
        return [("weights", self.weights, self.grad_weights),
                ("bias", self.bias, self.grad_bias)]

    def zero_grad(self) -> None:
        self.grad_weights = Matrix.zeros(self.out_dim, self.in_dim)
        self.grad_bias = Matrix.zeros(self.out_dim, 1)

    def dynamic_bytes(self) -> int:
        per = self.weights.data.nbytes + self.bias.data.nbytes
        return 3 * per  # parameters + gradients + optimizer velocity


class ActivationLayer:
    """Elementwise sigmoid or relu; caches what its backward rule needs."""

    def __init__(self, kind: str, dim: int):
        if kind not in ("sigmoid", "relu"):
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind
        self.in_dim = dim
        self.out_dim = dim
        self.cached: Matrix | None = None  # output for sigmoid, input for relu

    def forward(self, x: Matrix, cache: bool) -> Matrix:
        if x.rows != self.in_dim or x.cols != 1:
            raise ShapeError(
                f"{self.kind} layer expects {self.in_dim}x1 input, got {x.rows}x{x.cols}"
            )
        if self.kind == "sigmoid":
            out = Matrix(1.0 / (1.0 + np.exp(-x.data.astype(np.float64))))
            if cache:
                self.cached = out
        else:
            out = Matrix(np.maximum(x.data, 0))
            if cache:
                self.cached = x
        return out

    def backward(self, d_out: Matrix) -> Matrix:
        if self.cached is None:
            raise StateError(f"{self.kind} backward called without a cached forward")
        if self.kind == "sigmoid":
            y = self.cached.data
            d_in = Matrix(d_out.data * y * (1.0 - y))
        else:
            d_in = Matrix(d_out.data * (self.cached.data > 0))
        self.cached = None
        return d_in

    def parameters(self) -> list:
        return []

    def zero_grad(self) -> None:
        pass

    def dynamic_bytes(self) -> int:
        return 0


class CrossEntropyLoss:
    """Softmax + negative log likelihood fused for the stable combined gradient."""

    def __init__(self):
        self.cached_probabilities: Matrix | None = None

    def loss_and_grad(self, logits: Matrix, label: int) -> tuple[float, Matrix]:
        """Return (-ln softmax(logits)[label], softmax(logits) - one_hot(label))."""
        if logits.cols != 1:
            raise ShapeError(f"logits must be a column vector, got {logits.rows}x{logits.cols}")
        if not 0 <= label < logits.rows:
            raise ValueError(f"label {label} out of range for {logits.rows} classes")
        probs = mx.softmax(logits)
        self.cached_probabilities = probs
        # log on the shifted double-precision path avoids log(0) for sane logits
        p = max(float(probs.data[label, 0]), 1e-30)
        loss = -math.log(p)
        grad = probs.data.astype(DTYPE).copy()
        grad[label, 0] -= 1.0
        return loss, Matrix(grad)


class SgdOptimizer:
    """SGD with classical momentum.

    Per parameter matrix: v <- momentum * v - lr * grad; p <- p + v.
    Gradients are cleared after every step.
    """

    def __init__(self, learning_rate: float = 0.01, momentum: float = 0.99):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity: dict[tuple[int, str], np.ndarray] = {}

    def step(self, model: "Model") -> None:
        lr = DTYPE(self.learning_rate)
        mom = DTYPE(self.momentum)
        for li, layer in enumerate(model.layers):
            for name, param, grad in layer.parameters():
                key = (li, name)
                v = self._velocity.get(key)
                if v is None:
                    v = np.zeros_like(param.data)
                v = mom * v - lr * grad.data
                self._velocity[key] = v
                param.data += v
            layer.zero_grad()

    def velocity_bytes(self) -> int:
        return sum(v.nbytes for v in self._velocity.values())


class Model:
    """An ordered chain of layers plus a loss and an optimizer."""

    def __init__(self, layers: list, loss: CrossEntropyLoss, optimizer: SgdOptimizer,
                 class_count: int):
        if not layers:
            raise ValueError("model needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(
                    f"layer chain mismatch: {a.out_dim} out feeds {b.in_dim} in"
                )
        if layers[-1].out_dim != class_count:
            raise ShapeError(
                f"last layer emits {layers[-1].out_dim} values for {class_count} classes"
            )
        self.layers = layers
        self.loss = loss
        self.optimizer = optimizer
        self.class_count = class_count
        self._forward_done = False

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def forward(self, x: Matrix) -> Matrix:
        """Training-path forward: returns logits, caching per-layer state."""
        for layer in self.layers:
            x = layer.forward(x, cache=True)
        self._forward_done = True
        return x

    def backward(self, loss_grad: Matrix) -> None:
        if not self._forward_done:
            raise StateError("backward called without a prior forward pass")
        d = loss_grad
        for layer in reversed(self.layers):
            d = layer.backward(d)
        self._forward_done = False

    def train_iteration(self, features: Matrix, label: int) -> float:
        """One forward/loss/backward/step cycle; returns the pre-step loss."""
        if not 0 <= label < self.class_count:
            raise ValueError(f"label {label} out of range for {self.class_count} classes")
        logits = self.forward(features)
        loss, grad = self.loss.loss_and_grad(logits, label)
        self.backward(grad)
        self.optimizer.step(self)
        return loss

    def predict(self, features: Matrix) -> tuple[int, Matrix]:
        """Cache-free inference: (argmax class, softmax probabilities).

        Ties break toward the lowest class index.  Safe to call concurrently
        on a frozen model; nothing on this path mutates layer state.
        """
        x = features
        for layer in self.layers:
            x = layer.forward(x, cache=False)
        probs = mx.softmax(x)
        return int(np.argmax(probs.data)), probs

    def dynamic_bytes(self) -> int:
        """Bytes of mutable model state (parameters, gradients, velocities)."""
        return sum(layer.dynamic_bytes() for layer in self.layers)


def build_classifier(input_dim: int, hidden: tuple[int, ...], class_count: int,
                     seed: int, activation: str = "sigmoid",
                     learning_rate: float = 0.01, momentum: float = 0.99) -> Model:
    """Linear chain input -> hidden... -> classes with activations in between."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, class_count]
    layers: list = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        layers.append(FullyConnectedLayer(a, b, rng))
        if i < len(dims) - 2:
            layers.append(ActivationLayer(activation, b))
    return Model(layers, CrossEntropyLoss(), SgdOptimizer(learning_rate, momentum),
                 class_count)


def readahead_classifier(seed: int, input_dim: int = 4, class_count: int = 4) -> Model:
    """The block-readahead architecture: three linear layers, hidden 5 and 15."""
    return build_classifier(input_dim, (5, 15), class_count, seed)


def nfs_classifier(seed: int, input_dim: int = 8, class_count: int = 4) -> Model:
    """The NFS read-size architecture: four linear layers, hidden 25, 10 and 5."""
    return build_classifier(input_dim, (25, 10, 5), class_count, seed)
