"""Small feed-forward networks with hand-written reverse-mode gradients.

Parameters of an :class:`Mlp` live in one flat float64 vector; per-layer
weights and biases are views into it. That keeps Adam, Polyak averaging
and checkpointing to a handful of vector operations.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDENTITY = "identity"
TANH = "tanh"
_ACTIVATIONS = (IDENTITY, TANH)

CHECKPOINT_MAGIC = b"OFFGPI-MLP\x00"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Input, gradient or parameter shapes do not line up."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf showed up where only finite values are allowed."""


@dataclass
class GradientBundle:
    param_grads: np.ndarray | None
    input_grad: np.ndarray | None


@dataclass
class _Cache:
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    output: np.ndarray


class Mlp:
    """Dense ReLU network ``input -> hidden... -> output``.

    ``output_activation`` is either a single tag applied to every output
    unit or one tag per unit, so a policy head can squash part of its
    output and leave the rest linear.
    """

    def __init__(self, layer_sizes, output_activation=IDENTITY, rng=None, params=None):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ShapeError(f"layer_sizes must hold >= 2 positive ints, got {layer_sizes}")
        if isinstance(output_activation, str):
            output_activation = (output_activation,) * sizes[-1]
        acts = tuple(output_activation)
        if len(acts) != sizes[-1] or any(a not in _ACTIVATIONS for a in acts):
            raise ShapeError(f"bad output_activation {output_activation!r} for {sizes[-1]} outputs")
        self.layer_sizes = sizes
        self.output_activation = acts
        self._tanh_mask = np.array([a == TANH for a in acts])
        self._any_tanh = bool(self._tanh_mask.any())
        self._all_tanh = bool(self._tanh_mask.all())

        self.n_params = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        if params is None:
            params = np.empty(self.n_params)
            self.params = params
            self._bind_views()
            rng = np.random.default_rng() if rng is None else rng
            # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
            for w, b in zip(self.weights, self.biases):
                bound = 1.0 / np.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)
        else:
            params = np.array(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ShapeError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params
            self._bind_views()

    def _bind_views(self):
        self.weights, self.biases = [], []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.params[offset:offset + fan_out]
            offset += fan_out
            self.weights.append(w)
            self.biases.append(b)

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    def copy(self):
        return Mlp(self.layer_sizes, self.output_activation, params=self.params.copy())

    def __call__(self, x):
        return forward(self, x)

    def __repr__(self):
        sizes = ":".join(map(str, self.layer_sizes))
        return f"Mlp({sizes}, out={'/'.join(sorted(set(self.output_activation)))})"


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise ShapeError(f"{net!r} expects inputs of size {net.input_size}, got shape {x.shape}")
    return x, single


def _run(net, x):
    pre, post = [], []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
        elif net._all_tanh:
            h = np.tanh(z)
        elif net._any_tanh:
            h = np.where(net._tanh_mask, np.tanh(z), z)
        else:
            h = z
        post.append(h)
    return _Cache(x, pre, post, h)


def forward(net: Mlp, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector or a ``(batch, input)`` array."""
    x, single = _as_batch(net, x)
    out = _run(net, x).output
    return out[0] if single else out


def forward_cached(net: Mlp, x):
    """Forward pass that also returns the activations ``backward`` needs."""
    x, single = _as_batch(net, x)
    cache = _run(net, x)
    return (cache.output[0] if single else cache.output), cache


def backward(net: Mlp, x, upstream_grad, cache=None, param_grads=True, input_grad=True):
    """Gradients of ``sum(upstream_grad * net(x))``.

    For a batch the per-sample contributions are summed; callers that want
    a mean loss fold the ``1/N`` into ``upstream_grad``. ``param_grads`` is
    a flat vector laid out like ``net.params``.
    """
    x, single = _as_batch(net, x)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if single:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != (x.shape[0], net.output_size):
        raise ShapeError(f"upstream gradient shape {g.shape} != {(x.shape[0], net.output_size)}")
    if cache is None:
        cache = _run(net, x)

    if net._any_tanh:
        out = cache.output
        g = np.where(net._tanh_mask, g * (1.0 - out * out), g)

    grads = np.empty(net.n_params) if param_grads else None
    offsets = []
    if param_grads:
        off = 0
        for w in net.weights:
            offsets.append(off)
            off += w.size + w.shape[1]

    for i in range(len(net.weights) - 1, -1, -1):
        h_in = cache.post[i - 1] if i > 0 else cache.inputs
        w = net.weights[i]
        if param_grads:
            off = offsets[i]
            grads[off:off + w.size] = (h_in.T @ g).ravel()
            grads[off + w.size:off + w.size + w.shape[1]] = g.sum(axis=0)
        if i > 0:
            # ReLU derivative at exactly 0 is taken as 0
            g = (g @ w.T) * (cache.pre[i - 1] > 0.0)
        elif input_grad:
            g = g @ w.T

    dx = None
    if input_grad:
        dx = g[0] if single else g
    return GradientBundle(grads, dx)


@dataclass
class AdamState:
    n_params: int
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default=None, repr=False)
    second_moment: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.n_params)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.n_params)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, name="params"):
    """Bias-corrected Adam descent step, applied to ``params`` in place."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ShapeError(f"{name}: gradient shape {grads.shape} != parameter shape {params.shape}")
    if not np.isfinite(grads).all():
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NonFiniteError(f"{name}: non-finite gradient at flat index {bad}")
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grads
    v *= state.beta2
    v += (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def ema_update(target_params: np.ndarray, online_params: np.ndarray, tau: float):
    """Polyak averaging: ``target <- (1 - tau) * target + tau * online`` in place."""
    if target_params.shape != online_params.shape:
        raise ShapeError(f"target {target_params.shape} vs online {online_params.shape}")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if tau == 1.0:
        target_params[...] = online_params
    else:
        target_params *= 1.0 - tau
        target_params += tau * online_params
    return target_params


def check_finite(net: Mlp, name="network"):
    if not np.isfinite(net.params).all():
        raise NonFiniteError(f"{name} holds non-finite parameters")


# -- checkpoints -------------------------------------------------------------
#
# magic | u32 format version | u32 header length | JSON header | float64 LE params
# The header records layer sizes and per-unit output activation tags; the
# parameters are the flat vector, i.e. each weight matrix row-major
# (fan_in x fan_out) followed by its bias.

def dumps(net: Mlp) -> bytes:
    header = json.dumps(
        {"layer_sizes": list(net.layer_sizes), "output_activation": list(net.output_activation)},
        separators=(",", ":"),
    ).encode()
    return (
        CHECKPOINT_MAGIC
        + struct.pack("<II", CHECKPOINT_VERSION, len(header))
        + header
        + net.params.astype("<f8").tobytes()
    )


def loads(blob: bytes) -> Mlp:
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a network checkpoint (bad magic)")
    pos = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", blob, pos)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos += 8
    header = json.loads(blob[pos:pos + hlen])
    pos += hlen
    params = np.frombuffer(blob, dtype="<f8", offset=pos).astype(np.float64)
    return Mlp(header["layer_sizes"], tuple(header["output_activation"]), params=params)


def save(net: Mlp, path):
    Path(path).write_bytes(dumps(net))


def load(path) -> Mlp:
    return loads(Path(path).read_bytes())
