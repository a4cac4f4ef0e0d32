"""Minimal feedforward network engine for the three benchmarked models.

Supports exactly the pieces those models need: a weight-sharing input layer
(each of d neurons applies one scalar weight and bias elementwise to the
whole d-vector, giving a d x d activation map that is flattened downstream),
dense layers, batch normalization, inverted dropout, softmax/cross-entropy
and the Adadelta update rule.  Everything runs in float64 numpy with
reverse-mode gradients written out by hand.

Blocks are ordered affine -> batch norm -> activation -> dropout.  Training
is deterministic given the initialization seed and the training seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import XoshiroLanes

ADADELTA_RHO = 0.95
ADADELTA_EPS = 1e-6
BN_MOMENTUM = 0.99
BN_EPS = 1e-5
PROB_FLOOR = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probabilities: np.ndarray, target_onehot: np.ndarray) -> float:
    """-log p_target, with the probability floored at 1e-12 before the log."""
    p = (probabilities * target_onehot).sum(axis=-1)
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


class SharedInputLayer:
    """d neurons, each mapping the whole d-vector with one weight and bias.

    Forward of a batch (B, d) is (B, d*d): entry (i, j) of the per-sample
    map is act(w[i] * x[j] + b[i]), flattened row-major over (i, j).
    """

    def __init__(self, d: int, activation: str = "identity"):
        if activation not in ("identity", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.d = d
        self.activation = activation
        self.w = np.zeros(d)
        self.b = np.zeros(d)
        self._cache = None

    def init_params(self, rng: XoshiroLanes) -> None:
        limit = np.sqrt(6.0)  # fan-in of one scalar per neuron
        self.w = rng.uniform(-limit, limit, self.d)
        self.b = np.zeros(self.d)

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        z = self.w[None, :, None] * x[:, None, :] + self.b[None, :, None]
        a = _relu(z) if self.activation == "relu" else z
        self._cache = (x, z)
        return a.reshape(x.shape[0], self.d * self.d)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x, z = self._cache
        g = grad.reshape(x.shape[0], self.d, self.d)
        if self.activation == "relu":
            g = g * (z > 0)
        self.dw = np.einsum("bij,bj->i", g, x)
        self.db = g.sum(axis=(0, 2))
        return np.einsum("bij,i->bj", g, self.w)

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]


def forward_shared(layer: SharedInputLayer, x: np.ndarray) -> np.ndarray:
    """Single-vector forward: the (d, d) activation matrix for one sample."""
    return layer.forward(x[None, :], train=False, rng=None).reshape(layer.d, layer.d)


class Dense:
    def __init__(self, n_in: int, n_out: int):
        self.n_in = n_in
        self.n_out = n_out
        self.weight = np.zeros((n_out, n_in))
        self.bias = np.zeros(n_out)
        self._cache = None

    def init_params(self, rng: XoshiroLanes) -> None:
        limit = np.sqrt(6.0 / self.n_in)
        self.weight = rng.uniform(-limit, limit, (self.n_out, self.n_in))
        self.bias = np.zeros(self.n_out)

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        self._cache = x
        return x @ self.weight.T + self.bias

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._cache
        self.dweight = grad.T @ x
        self.dbias = grad.sum(axis=0)
        return grad @ self.weight

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grads(self):
        return [self.dweight, self.dbias]


class Relu:
    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        self._cache = x
        return _relu(x)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * (self._cache > 0)

    def params(self):
        return []

    def grads(self):
        return []


class BatchNorm:
    """Per-unit batch normalization with learned scale and shift.

    Train mode normalizes by batch statistics (population variance) and
    updates the running stats by momentum; inference mode uses the running
    stats only.
    """

    def __init__(self, units: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.units = units
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(units)
        self.beta = np.zeros(units)
        self.running_mean = np.zeros(units)
        self.running_var = np.ones(units)
        self._cache = None

    def init_params(self, rng) -> None:
        self.gamma = np.ones(self.units)
        self.beta = np.zeros(self.units)
        self.running_mean = np.zeros(self.units)
        self.running_var = np.ones(self.units)

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs a batch of >= 2 in train mode")
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            ivar = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * ivar
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            self._cache = (x - mu, ivar, xhat, True)
        else:
            ivar = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * ivar
            self._cache = (None, ivar, xhat, False)
        return self.gamma * xhat + self.beta

    def backward(self, grad: np.ndarray) -> np.ndarray:
        xmu, ivar, xhat, trained = self._cache
        self.dgamma = (grad * xhat).sum(axis=0)
        self.dbeta = grad.sum(axis=0)
        dxhat = grad * self.gamma
        if not trained:
            return dxhat * ivar
        m = grad.shape[0]
        dvar = (dxhat * xmu).sum(axis=0) * (-0.5) * ivar**3
        dmu = -(dxhat.sum(axis=0) * ivar) + dvar * (-2.0 / m) * xmu.sum(axis=0)
        return dxhat * ivar + dvar * (2.0 / m) * xmu + dmu / m

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def grads(self):
        return [self.dgamma, self.dbeta]


class Dropout:
    """Inverted dropout: zero with probability ``rate`` and rescale survivors."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = rng.doubles(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return grad
        return grad * self._mask

    def params(self):
        return []

    def grads(self):
        return []


def batch_norm_forward(state: BatchNorm, batch: np.ndarray, mode: str) -> np.ndarray:
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    return state.forward(batch, train=(mode == "train"), rng=None)


def dropout_apply(rate: float, mode: str, batch: np.ndarray, seed: int) -> np.ndarray:
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    layer = Dropout(rate)
    return layer.forward(batch, train=(mode == "train"), rng=XoshiroLanes(seed))


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 200
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


class Network:
    """Ordered layer stack ending in a 4-unit softmax output."""

    def __init__(self, layers: list, name: str = "custom"):
        self.layers = layers
        self.name = name

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return softmax(x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).argmax(axis=1)

    def parameters(self) -> list[np.ndarray]:
        return [array for layer in self.layers for _, array in layer.params()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def init_params(self, seed: int) -> None:
        rng = XoshiroLanes(seed)
        for layer in self.layers:
            if hasattr(layer, "init_params"):
                layer.init_params(rng)


def backprop(model: Network, batch: np.ndarray, target_onehot: np.ndarray,
             train: bool = True, rng=None):
    """Mean cross-entropy loss and exact gradients for every parameter.

    Dropout masks are drawn once during the forward pass and reused by the
    backward pass; reseeding ``rng`` reproduces them exactly.
    """
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    probs = model.forward(batch, train=train, rng=rng)
    loss = cross_entropy(probs, target_onehot)
    grad = (probs - target_onehot) / batch.shape[0]
    for layer in reversed(model.layers):
        grad = layer.backward(grad)
    return loss, model.gradients()


@dataclass
class AdadeltaState:
    """Decaying accumulators of squared gradients and squared updates."""

    shapes: list
    rho: float = ADADELTA_RHO
    eps: float = ADADELTA_EPS
    acc_grad: list = field(default_factory=list)
    acc_delta: list = field(default_factory=list)

    def __post_init__(self):
        if not self.acc_grad:
            self.acc_grad = [np.zeros(s) for s in self.shapes]
            self.acc_delta = [np.zeros(s) for s in self.shapes]


def adadelta_step(state: AdadeltaState, gradients: list) -> list:
    """One Adadelta update; returns the per-parameter deltas to add."""
    deltas = []
    for i, g in enumerate(gradients):
        state.acc_grad[i] = state.rho * state.acc_grad[i] + (1 - state.rho) * g * g
        delta = -np.sqrt(state.acc_delta[i] + state.eps) / np.sqrt(
            state.acc_grad[i] + state.eps
        ) * g
        state.acc_delta[i] = state.rho * state.acc_delta[i] + (1 - state.rho) * delta * delta
        deltas.append(delta)
    return deltas


PRESET_NAMES = ("FNN1", "DFNN3", "DFNN_WS")


def build_preset(name: str, input_width: int, dropout: float = 0.1,
                 init_seed: int = 0) -> Network:
    """One of the three benchmarked feedforward architectures.

    FNN1:    dense 16 -> softmax(4)
    DFNN3:   dense 16 -> 8 -> 4 -> softmax(4)
    DFNN_WS: shared input layer (d neurons over the d-vector) -> flatten ->
             dense 16 -> 8 -> 4 -> softmax(4), with batch normalization and
             dropout in every block (affine -> norm -> relu -> dropout).
    """
    key = name.upper()
    d = input_width
    if key == "FNN1":
        layers = [Dense(d, 16), Relu(), Dense(16, 4)]
    elif key == "DFNN3":
        layers = [Dense(d, 16), Relu(), Dense(16, 8), Relu(), Dense(8, 4), Relu(),
                  Dense(4, 4)]
    elif key == "DFNN_WS":
        layers = [SharedInputLayer(d), BatchNorm(d * d), Relu(), Dropout(dropout)]
        n_in = d * d
        for n_out in (16, 8, 4):
            layers += [Dense(n_in, n_out), BatchNorm(n_out), Relu(), Dropout(dropout)]
            n_in = n_out
        layers.append(Dense(4, 4))
    else:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    net = Network(layers, name=key)
    net.init_params(init_seed)
    return net


def train_network(model: Network, features: np.ndarray, labels: np.ndarray,
                  config: TrainConfig, log=None) -> Network:
    """Seeded mini-batch training with Adadelta on mean cross-entropy.

    ``features`` are expected to be standardized already.  ``config.dropout``
    overrides the rate of every dropout layer in the model.  The returned
    model is left in inference mode (prediction uses running batch-norm
    statistics).  Bit-identical results for identical (model, data, config).
    """
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    for layer in model.layers:
        if isinstance(layer, Dropout):
            layer.rate = config.dropout
    onehot = (labels[:, None] == np.arange(4)[None, :]).astype(np.float64)
    rng = XoshiroLanes(config.seed)
    state = AdadeltaState(shapes=[p.shape for p in model.parameters()])
    has_bn = any(isinstance(layer, BatchNorm) for layer in model.layers)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        hits = 0
        seen = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            # a singleton remainder batch cannot be batch-normalized; skip it
            if idx.shape[0] == 1 and has_bn and n > 1:
                continue
            x, y = features[idx], onehot[idx]
            probs = model.forward(x, train=True, rng=rng)
            loss_sum += cross_entropy(probs, y) * idx.shape[0]
            hits += int((probs.argmax(axis=1) == labels[idx]).sum())
            seen += idx.shape[0]
            grad = (probs - y) / idx.shape[0]
            for layer in reversed(model.layers):
                grad = layer.backward(grad)
            params = model.parameters()
            for p, delta in zip(params, adadelta_step(state, model.gradients())):
                p += delta
        if log is not None:
            log.write(f"epoch={epoch + 1} loss={loss_sum / seen:.6f} acc={hits / seen:.4f}\n")
    return model
