"""Feed-forward Q-networks with an optional dueling head.

Plain numpy, no autograd: all parameters live in one flat float64 vector
and the forward/backward passes unpack views into it. Training minimizes
the squared error on each sample's selected action only, with vanilla SGD,
so a single update step is easy to reproduce by hand in tests.

Networks are values: ``grad_step`` returns a new instance and never mutates
its input, which makes snapshots free (keep the old reference).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import substream


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of one Q-network.

    Hidden layers use rectified-linear activations; heads are linear. With
    ``dueling`` the output is Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a'),
    the mean-centered combination that makes V and A identifiable.
    """

    input_dim: int
    hidden_layers: tuple[int, ...]
    action_count: int
    dueling: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.action_count < 2:
            raise ValueError(f"action_count must be >= 2, got {self.action_count}")
        if len(self.hidden_layers) == 0:
            raise ValueError("at least one hidden layer is required")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_layers}")

    def shapes(self) -> list[tuple[int, ...]]:
        """Parameter block shapes, in flat-vector order: (W, b) per layer, then heads."""
        dims = (self.input_dim, *self.hidden_layers)
        out: list[tuple[int, ...]] = []
        for i in range(len(self.hidden_layers)):
            out.append((dims[i], dims[i + 1]))
            out.append((dims[i + 1],))
        last = self.hidden_layers[-1]
        if self.dueling:
            out.extend([(last, 1), (1,), (last, self.action_count), (self.action_count,)])
        else:
            out.extend([(last, self.action_count), (self.action_count,)])
        return out

    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.shapes()))


@dataclass
class QNetwork:
    """A spec plus its flat parameter vector."""

    spec: NetworkSpec
    params: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.param_count(),):
            raise ValueError(
                f"expected {self.spec.param_count()} parameters, got {self.params.shape}"
            )
        if not np.all(np.isfinite(self.params)):
            raise ValueError("network parameters must be finite")

    @property
    def param_count(self) -> int:
        return self.params.size


@dataclass(frozen=True)
class TrainTarget:
    """One regression sample: push Q(input)[action_index] toward target_value."""

    input: np.ndarray
    action_index: int
    target_value: float


def _views(spec: NetworkSpec, params: np.ndarray) -> list[np.ndarray]:
    views = []
    offset = 0
    for shape in spec.shapes():
        size = int(np.prod(shape))
        views.append(params[offset : offset + size].reshape(shape))
        offset += size
    return views


def init_network(spec: NetworkSpec, seed: int) -> QNetwork:
    """Deterministic initialization: every block uniform in +-1/sqrt(fan_in)."""
    gen = substream(seed, "net-init")
    params = np.zeros(spec.param_count(), dtype=np.float64)
    views = _views(spec, params)
    for i, block in enumerate(views):
        # blocks alternate (W, b); a bias shares its weight matrix's fan_in
        fan_in = block.shape[0] if block.ndim == 2 else views[i - 1].shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        block[...] = gen.uniform(-bound, bound, size=block.shape)
    return QNetwork(spec=spec, params=params)


def clone(net: QNetwork) -> QNetwork:
    """Independent copy: mutating one side never affects the other."""
    return QNetwork(spec=net.spec, params=net.params.copy())


def _forward_batch(spec: NetworkSpec, params: np.ndarray, x: np.ndarray):
    """Q-values for a (batch, input_dim) matrix, plus the activation cache."""
    views = _views(spec, params)
    n_hidden = len(spec.hidden_layers)
    h = x
    hs = [x]  # layer inputs, hs[i] feeds layer i
    zs = []  # pre-activations
    for i in range(n_hidden):
        w, b = views[2 * i], views[2 * i + 1]
        z = h @ w + b
        h = np.maximum(z, 0.0)
        zs.append(z)
        hs.append(h)
    if spec.dueling:
        wv, bv, wa, ba = views[2 * n_hidden :]
        v = h @ wv + bv
        a = h @ wa + ba
        q = v + a - a.mean(axis=1, keepdims=True)
    else:
        wo, bo = views[2 * n_hidden :]
        q = h @ wo + bo
    return q, (views, hs, zs)


def forward(net: QNetwork, x: np.ndarray) -> np.ndarray:
    """Q-values for a single input vector or a (batch, input_dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.spec.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != spec input_dim {net.spec.input_dim}")
    q, _ = _forward_batch(net.spec, net.params, x)
    return q[0] if single else q


def loss_on(net: QNetwork, batch: list[TrainTarget]) -> float:
    """Mean squared error on each sample's selected action."""
    x = np.stack([np.asarray(t.input, dtype=np.float64) for t in batch])
    q, _ = _forward_batch(net.spec, net.params, x)
    idx = np.array([t.action_index for t in batch])
    y = np.array([t.target_value for t in batch], dtype=np.float64)
    err = q[np.arange(len(batch)), idx] - y
    return float(np.mean(err * err))


def gradient(net: QNetwork, batch: list[TrainTarget]) -> np.ndarray:
    """Backprop gradient of ``loss_on`` with respect to the flat parameter vector."""
    spec = net.spec
    if not batch:
        raise ValueError("batch must be nonempty")
    x = np.stack([np.asarray(t.input, dtype=np.float64) for t in batch])
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != spec input_dim {spec.input_dim}")
    idx = np.array([t.action_index for t in batch])
    y = np.array([t.target_value for t in batch], dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("train targets must be finite")
    if np.any(idx < 0) or np.any(idx >= spec.action_count):
        raise ValueError("action_index out of range")

    n = len(batch)
    q, (views, hs, zs) = _forward_batch(spec, net.params, x)
    grad = np.zeros_like(net.params)
    gviews = _views(spec, grad)
    n_hidden = len(spec.hidden_layers)

    # dL/dq: only selected actions carry error, mean reduction over the batch
    err = q[np.arange(n), idx] - y
    gq = np.zeros_like(q)
    gq[np.arange(n), idx] = 2.0 * err / n

    h_last = hs[-1]
    if spec.dueling:
        wv, _bv, wa, _ba = views[2 * n_hidden :]
        gwv, gbv, gwa, gba = gviews[2 * n_hidden :]
        # q = v + a - mean(a): dq/dv = 1 per action, dq/da = I - 1/A
        gv = gq.sum(axis=1, keepdims=True)
        ga = gq - gq.sum(axis=1, keepdims=True) / spec.action_count
        gwv[...] = h_last.T @ gv
        gbv[...] = gv.sum(axis=0)
        gwa[...] = h_last.T @ ga
        gba[...] = ga.sum(axis=0)
        gh = gv @ wv.T + ga @ wa.T
    else:
        wo, _bo = views[2 * n_hidden :]
        gwo, gbo = gviews[2 * n_hidden :]
        gwo[...] = h_last.T @ gq
        gbo[...] = gq.sum(axis=0)
        gh = gq @ wo.T

    for i in range(n_hidden - 1, -1, -1):
        gz = gh * (zs[i] > 0.0)
        gviews[2 * i][...] = hs[i].T @ gz
        gviews[2 * i + 1][...] = gz.sum(axis=0)
        if i > 0:
            gh = gz @ views[2 * i].T
    return grad


def grad_step(net: QNetwork, batch: list[TrainTarget], learning_rate: float) -> QNetwork:
    """One SGD step on the batch loss; returns the updated network."""
    if learning_rate <= 0.0:
        raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
    grad = gradient(net, batch)
    return QNetwork(spec=net.spec, params=net.params - learning_rate * grad)
