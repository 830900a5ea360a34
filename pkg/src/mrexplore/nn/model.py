"""Recurrent Q-networks over map features plus scalar features.

One architecture serves both the centralized (joint-action) and the
decentralized (per-robot) policy; they differ only in scalar input width,
hidden layer width, and output count. The map side is a fixed conv backbone
(the map feature extractor) on a 4-channel 20x20 canvas:

    4x20x20 -> 8x9x9 -> 16x4x4 -> 16x2x2 -> 64 -> 32 -> 10

Smaller worlds are embedded into the canvas at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    leaky_relu,
    leaky_relu_backward,
    lstm_cell_backward,
    lstm_cell_forward,
)

CANVAS = 20
MAP_CHANNELS = 4
MFE_OUT = 10
LSTM_HIDDEN = 64

# (kernel, stride, out_channels) for the three conv stages, then dense sizes
MFE_CONVS = ((4, 2, 8), (3, 2, 16), (2, 2, 16))
MFE_F1 = 32


@dataclass(frozen=True)
class NetSpec:
    scalar_dim: int
    width: int        # F3-F6 width
    n_actions: int

    @property
    def concat_dim(self) -> int:
        return MFE_OUT + self.width


def dep_spec(team_size: int) -> NetSpec:
    """Per-robot net: own pose/coverage/candidates plus teammate ledger."""
    scalar_dim = 2 + 1 + 1 + 8 + 7 * (team_size - 1)
    return NetSpec(scalar_dim=scalar_dim, width=64, n_actions=4)


def cep_spec(team_size: int) -> NetSpec:
    """Joint net: all robots' blocks, one Q value per joint macro action."""
    scalar_dim = 15 * team_size + 1
    return NetSpec(scalar_dim=scalar_dim, width=128, n_actions=4 ** team_size)


def _uniform(rng: np.random.Generator, shape: tuple, fan_in: int,
             dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(spec: NetSpec, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases, LSTM forget bias +1."""
    p: dict[str, np.ndarray] = {}
    cin = MAP_CHANNELS
    for idx, (k, _, cout) in enumerate(MFE_CONVS, start=1):
        p[f"c{idx}.w"] = _uniform(rng, (cout, cin, k, k), cin * k * k, dtype)
        p[f"c{idx}.b"] = np.zeros(cout, dtype=dtype)
        cin = cout
    flat = MFE_CONVS[-1][2] * 2 * 2
    p["f1.w"] = _uniform(rng, (MFE_F1, flat), flat, dtype)
    p["f1.b"] = np.zeros(MFE_F1, dtype=dtype)
    p["f2.w"] = _uniform(rng, (MFE_OUT, MFE_F1), MFE_F1, dtype)
    p["f2.b"] = np.zeros(MFE_OUT, dtype=dtype)
    p["f3.w"] = _uniform(rng, (spec.width, spec.scalar_dim), spec.scalar_dim, dtype)
    p["f3.b"] = np.zeros(spec.width, dtype=dtype)
    p["f4.w"] = _uniform(rng, (spec.width, spec.concat_dim), spec.concat_dim, dtype)
    p["f4.b"] = np.zeros(spec.width, dtype=dtype)
    p["f5.w"] = _uniform(rng, (spec.width, spec.width), spec.width, dtype)
    p["f5.b"] = np.zeros(spec.width, dtype=dtype)
    p["lstm.wx"] = _uniform(rng, (4 * LSTM_HIDDEN, spec.width), spec.width, dtype)
    p["lstm.wh"] = _uniform(rng, (4 * LSTM_HIDDEN, LSTM_HIDDEN), LSTM_HIDDEN, dtype)
    p["lstm.b"] = np.zeros(4 * LSTM_HIDDEN, dtype=dtype)
    p["lstm.b"][LSTM_HIDDEN:2 * LSTM_HIDDEN] = 1.0
    p["f6.w"] = _uniform(rng, (spec.width, LSTM_HIDDEN), LSTM_HIDDEN, dtype)
    p["f6.b"] = np.zeros(spec.width, dtype=dtype)
    p["f7.w"] = _uniform(rng, (spec.n_actions, spec.width), spec.width, dtype)
    p["f7.b"] = np.zeros(spec.n_actions, dtype=dtype)
    return p


def mfe_forward(params: dict, maps: np.ndarray):
    """Map feature extractor on (N, 4, 20, 20) input; returns (N, 10)."""
    if maps.ndim != 4 or maps.shape[1:] != (MAP_CHANNELS, CANVAS, CANVAS):
        raise ShapeError(f"map input {maps.shape}, expected "
                         f"(N, {MAP_CHANNELS}, {CANVAS}, {CANVAS})")
    caches = []
    x = maps
    for idx, (_, stride, _) in enumerate(MFE_CONVS, start=1):
        y, cache = conv2d_forward(x, params[f"c{idx}.w"], params[f"c{idx}.b"], stride)
        caches.append((cache, y))
        x = leaky_relu(y)
    conv_shape = x.shape
    x = x.reshape(x.shape[0], -1)
    y1, cache1 = dense_forward(x, params["f1.w"], params["f1.b"])
    a1 = leaky_relu(y1)
    y2, cache2 = dense_forward(a1, params["f2.w"], params["f2.b"])
    out = leaky_relu(y2)
    return out, (caches, conv_shape, cache1, y1, cache2, y2)


def mfe_backward(dout: np.ndarray, cache, params: dict, grads: dict) -> np.ndarray:
    caches, conv_shape, cache1, y1, cache2, y2 = cache
    d = leaky_relu_backward(dout, y2)
    d, dw, db = dense_backward(d, cache2)
    grads["f2.w"] += dw
    grads["f2.b"] += db
    d = leaky_relu_backward(d, y1)
    d, dw, db = dense_backward(d, cache1)
    grads["f1.w"] += dw
    grads["f1.b"] += db
    d = d.reshape(conv_shape)
    for idx in range(len(MFE_CONVS), 0, -1):
        conv_cache, pre = caches[idx - 1]
        d = leaky_relu_backward(d, pre)
        d, dw, db = conv2d_backward(d, conv_cache)
        grads[f"c{idx}.w"] += dw
        grads[f"c{idx}.b"] += db
    return d


def step_forward(params: dict, maps: np.ndarray, scalars: np.ndarray,
                 h: np.ndarray, c: np.ndarray):
    """One decision step: MFE || F3 -> F4 -> F5 -> LSTM -> F6 -> F7."""
    feat, mfe_cache = mfe_forward(params, maps)
    y3, cache3 = dense_forward(scalars, params["f3.w"], params["f3.b"])
    a3 = leaky_relu(y3)
    z = np.concatenate([feat, a3], axis=1)
    y4, cache4 = dense_forward(z, params["f4.w"], params["f4.b"])
    a4 = leaky_relu(y4)
    y5, cache5 = dense_forward(a4, params["f5.w"], params["f5.b"])
    a5 = leaky_relu(y5)
    h2, c2, lstm_cache = lstm_cell_forward(a5, h, c, params["lstm.wx"],
                                           params["lstm.wh"], params["lstm.b"])
    y6, cache6 = dense_forward(h2, params["f6.w"], params["f6.b"])
    a6 = leaky_relu(y6)
    q, cache7 = dense_forward(a6, params["f7.w"], params["f7.b"])
    cache = (mfe_cache, cache3, y3, cache4, y4, cache5, y5,
             lstm_cache, cache6, y6, cache7)
    return q, h2, c2, cache


def step_backward(dq: np.ndarray, dh_next: np.ndarray, dc_next: np.ndarray,
                  cache, params: dict, grads: dict):
    """Backward for one step; returns (dh_prev, dc_prev)."""
    (mfe_cache, cache3, y3, cache4, y4, cache5, y5,
     lstm_cache, cache6, y6, cache7) = cache
    d, dw, db = dense_backward(dq, cache7)
    grads["f7.w"] += dw
    grads["f7.b"] += db
    d = leaky_relu_backward(d, y6)
    dh2, dw, db = dense_backward(d, cache6)
    grads["f6.w"] += dw
    grads["f6.b"] += db
    dh2 = dh2 + dh_next
    dx, dh_prev, dc_prev, dwx, dwh, db = lstm_cell_backward(dh2, dc_next, lstm_cache)
    grads["lstm.wx"] += dwx
    grads["lstm.wh"] += dwh
    grads["lstm.b"] += db
    d = leaky_relu_backward(dx, y5)
    d, dw, db = dense_backward(d, cache5)
    grads["f5.w"] += dw
    grads["f5.b"] += db
    d = leaky_relu_backward(d, y4)
    d, dw, db = dense_backward(d, cache4)
    grads["f4.w"] += dw
    grads["f4.b"] += db
    dfeat, da3 = d[:, :MFE_OUT], d[:, MFE_OUT:]
    d3 = leaky_relu_backward(da3, y3)
    _, dw, db = dense_backward(d3, cache3)
    grads["f3.w"] += dw
    grads["f3.b"] += db
    mfe_backward(dfeat, mfe_cache, params, grads)
    return dh_prev, dc_prev


def sequence_forward(params: dict, maps: np.ndarray, scalars: np.ndarray,
                     h0: np.ndarray | None = None, c0: np.ndarray | None = None,
                     keep_cache: bool = True):
    """Unroll over a (N, T, ...) observation sequence from zero (or given) state.

    Returns (qs (N, T, A), (h, c), caches). Hidden state is zero-initialized
    at the start of every sequence unless an explicit state is passed.
    """
    n, t = maps.shape[0], maps.shape[1]
    dtype = params["f7.w"].dtype
    h = np.zeros((n, LSTM_HIDDEN), dtype=dtype) if h0 is None else h0
    c = np.zeros((n, LSTM_HIDDEN), dtype=dtype) if c0 is None else c0
    qs = []
    caches = []
    for step in range(t):
        q, h, c, cache = step_forward(params, maps[:, step], scalars[:, step], h, c)
        qs.append(q)
        if keep_cache:
            caches.append(cache)
    return np.stack(qs, axis=1), (h, c), caches


def sequence_backward(params: dict, caches: list, dqs: np.ndarray) -> dict:
    """Backpropagation through time given per-step upstream gradients."""
    t = len(caches)
    n = dqs.shape[0]
    dtype = dqs.dtype
    grads = {k: np.zeros_like(v, dtype=dtype) for k, v in params.items()}
    dh = np.zeros((n, LSTM_HIDDEN), dtype=dtype)
    dc = np.zeros((n, LSTM_HIDDEN), dtype=dtype)
    for step in range(t - 1, -1, -1):
        dh, dc = step_backward(dqs[:, step], dh, dc, caches[step], params, grads)
    return grads


def zero_hidden(n: int, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    return (np.zeros((n, LSTM_HIDDEN), dtype=dtype),
            np.zeros((n, LSTM_HIDDEN), dtype=dtype))


class RecurrentQNet:
    """Estimation/target parameter pair plus the spec they were built for."""

    def __init__(self, spec: NetSpec, seed: int, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.params = init_params(spec, rng, dtype)
        self.target = {k: v.copy() for k, v in self.params.items()}

    def sync_target(self) -> None:
        self.target = {k: v.copy() for k, v in self.params.items()}

    def step(self, maps: np.ndarray, scalars: np.ndarray, h: np.ndarray,
             c: np.ndarray, use_target: bool = False):
        params = self.target if use_target else self.params
        q, h2, c2, _ = step_forward(params, maps, scalars, h, c)
        return q, h2, c2
