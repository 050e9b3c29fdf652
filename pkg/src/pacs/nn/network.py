"""Layer-list networks: the regularizer net and the residual U-net.

A network is an ordered list of layers, each consuming the output of the
previous one.  ``Concat(src)`` additionally appends the output of layer
``src`` along the channel axis; ``AddInput`` adds the network input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers as L


@dataclass
class Conv:
    cin: int
    cout: int
    k: int = 3
    relu: bool = True
    weight: np.ndarray | None = field(default=None, repr=False)
    bias: np.ndarray | None = field(default=None, repr=False)

    def descriptor(self) -> str:
        return f"conv {self.cin} {self.cout} {self.k} {int(self.relu)}"


@dataclass
class Pool:
    def descriptor(self) -> str:
        return "pool"


@dataclass
class Up:
    def descriptor(self) -> str:
        return "up"


@dataclass
class Concat:
    src: int

    def descriptor(self) -> str:
        return f"concat {self.src}"


@dataclass
class AddInput:
    def descriptor(self) -> str:
        return "add-input"


class Network:
    def __init__(self, layers: list, dtype=np.float32):
        self.layers = layers
        self.dtype = np.dtype(dtype)
        for i, layer in enumerate(layers):
            if isinstance(layer, Concat) and not 0 <= layer.src < i:
                raise ValueError(f"layer {i}: concat source {layer.src} is not an earlier layer")
        self._check_channels()

    # -- parameters -------------------------------------------------------

    @property
    def convs(self) -> list[Conv]:
        return [layer for layer in self.layers if isinstance(layer, Conv)]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in declaration order (weight, bias per conv)."""
        out = []
        for conv in self.convs:
            out += [conv.weight, conv.bias]
        return out

    def set_params(self, params) -> None:
        it = iter(params)
        for conv in self.convs:
            conv.weight = np.asarray(next(it), dtype=self.dtype).reshape(conv.cout, conv.cin, conv.k, conv.k)
            conv.bias = np.asarray(next(it), dtype=self.dtype).reshape(conv.cout)

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    @property
    def pool_count(self) -> int:
        return sum(isinstance(layer, Pool) for layer in self.layers)

    def init_weights(self, seed: int = 0) -> "Network":
        """He-normal kernels, zero biases."""
        rng = np.random.default_rng(seed)
        for conv in self.convs:
            std = np.sqrt(2.0 / (conv.cin * conv.k * conv.k))
            conv.weight = (std * rng.standard_normal((conv.cout, conv.cin, conv.k, conv.k))).astype(self.dtype)
            conv.bias = np.zeros(conv.cout, dtype=self.dtype)
        return self

    def zero_weights(self) -> "Network":
        for conv in self.convs:
            conv.weight = np.zeros((conv.cout, conv.cin, conv.k, conv.k), dtype=self.dtype)
            conv.bias = np.zeros(conv.cout, dtype=self.dtype)
        return self

    def astype(self, dtype) -> "Network":
        net = Network([_copy_layer(layer) for layer in self.layers], dtype)
        net.set_params([p.copy() for p in self.params()])
        return net

    def copy(self) -> "Network":
        return self.astype(self.dtype)

    def _check_channels(self):
        ch = [1]  # channels after each layer; the input has one channel
        cur = 1
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if layer.cin != cur:
                    raise ValueError(f"layer {i}: conv expects {layer.cin} channels, gets {cur}")
                cur = layer.cout
            elif isinstance(layer, Concat):
                cur += ch[layer.src + 1]
            elif isinstance(layer, AddInput) and cur != 1:
                raise ValueError(f"layer {i}: add-input needs 1 channel, gets {cur}")
            ch.append(cur)
        if cur != 1:
            raise ValueError(f"network output has {cur} channels, expected 1")

    # -- passes -----------------------------------------------------------

    def forward(self, x, keep: bool = False, residual_only: bool = False):
        """Apply the network to ``(C, H, W)`` or ``(B, C, H, W)`` input.

        With ``keep=True`` also returns the cache needed by :meth:`backward`.
        ``residual_only`` skips ``AddInput`` layers.
        """
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4:
            raise ValueError(f"expected (C,H,W) or (B,C,H,W) input, got shape {x.shape}")
        step = 2**self.pool_count
        if x.shape[2] % step or x.shape[3] % step:
            raise ValueError(f"spatial size {x.shape[2:]} must be divisible by {step}")
        outs, caches = [], []
        cur = x
        for layer in self.layers:
            cache = None
            if isinstance(layer, Conv):
                cur, cache = L.conv_forward(cur, layer.weight, layer.bias, layer.relu)
            elif isinstance(layer, Pool):
                cur, cache = L.pool_forward(cur)
            elif isinstance(layer, Up):
                cur = L.upsample_forward(cur)
            elif isinstance(layer, Concat):
                cache = cur.shape[1]
                cur = np.concatenate([cur, outs[layer.src]], axis=1)
            elif isinstance(layer, AddInput) and not residual_only:
                cur = cur + x
            outs.append(cur)
            caches.append(cache)
        y = cur[0] if single else cur
        if keep:
            if residual_only:
                raise ValueError("residual_only forward passes cannot be reversed")
            return y, (caches, x.shape, single)
        return y

    def backward(self, state, cotangent):
        """Reverse pass: ``(param_grads, input_grad)`` of ``<cotangent, forward(x)>``."""
        caches, xshape, single = state
        g = np.asarray(cotangent, dtype=self.dtype)
        if single:
            g = g[None]
        pending = [None] * len(self.layers)  # extra gradient flowing into layer outputs via skips
        dx = np.zeros(xshape, dtype=self.dtype)
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            layer, cache = self.layers[i], caches[i]
            if pending[i] is not None:
                g = g + pending[i]
            if isinstance(layer, Conv):
                g, dw, db = L.conv_backward(g, layer.weight, cache)
                grads += [db, dw]
            elif isinstance(layer, Pool):
                g = L.pool_backward(g, cache)
            elif isinstance(layer, Up):
                g = L.upsample_backward(g)
            elif isinstance(layer, Concat):
                skip = g[:, cache:]
                pending[layer.src] = skip if pending[layer.src] is None else pending[layer.src] + skip
                g = g[:, :cache]
            elif isinstance(layer, AddInput):
                dx = dx + g
        dx = dx + g
        grads.reverse()
        return grads, (dx[0] if single else dx)

    def __call__(self, x):
        return self.forward(x)

    # -- serialization ----------------------------------------------------

    def save(self, path) -> None:
        """Write the NETW1 format: magic, layer count, descriptors, float32 parameters."""
        lines = ["NETW1", str(len(self.layers))] + [layer.descriptor() for layer in self.layers]
        blob = b"".join(np.asarray(p, dtype="<f4").tobytes(order="C") for p in self.params())
        Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii") + blob)

    @classmethod
    def load(cls, path) -> "Network":
        buf = Path(path).read_bytes()
        pos = 0

        def line():
            nonlocal pos
            end = buf.index(b"\n", pos)
            text = buf[pos:end].decode("ascii")
            pos = end + 1
            return text

        if line() != "NETW1":
            raise ValueError(f"{path}: not a NETW1 file")
        layers = [_parse_descriptor(line()) for _ in range(int(line()))]
        net = cls(layers, np.float32)
        params = []
        for conv in net.convs:
            for shape in ((conv.cout, conv.cin, conv.k, conv.k), (conv.cout,)):
                count = int(np.prod(shape))
                params.append(np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32))
                pos += 4 * count
        if pos != len(buf):
            raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
        net.set_params(params)
        return net


def _copy_layer(layer):
    if isinstance(layer, Conv):
        return Conv(layer.cin, layer.cout, layer.k, layer.relu)
    return type(layer)(**{k: getattr(layer, k) for k in getattr(layer, "__dataclass_fields__", {})})


def _parse_descriptor(text: str):
    parts = text.split()
    kind = parts[0]
    if kind == "conv":
        cin, cout, k, act = (int(v) for v in parts[1:5])
        return Conv(cin, cout, k, bool(act))
    if kind == "pool":
        return Pool()
    if kind == "up":
        return Up()
    if kind == "concat":
        return Concat(int(parts[1]))
    if kind == "add-input":
        return AddInput()
    raise ValueError(f"unknown layer descriptor {text!r}")


def network_forward(net: Network, x) -> np.ndarray:
    return net.forward(x)


def backprop(net: Network, x, cotangent):
    """``(param_grads, input_grad)`` of ``<cotangent, net(x)>``."""
    y, state = net.forward(x, keep=True)
    if np.shape(cotangent) != y.shape:
        raise ValueError(f"cotangent shape {np.shape(cotangent)} != output shape {y.shape}")
    return net.backward(state, cotangent)


def build_regularizer_net(hidden_channels: int = 32, seed: int = 0, dtype=np.float32) -> Network:
    """Three 3x3 convolutions: two with ReLU, a linear one back to a single channel."""
    C = hidden_channels
    layers = [Conv(1, C, 3, True), Conv(C, C, 3, True), Conv(C, 1, 3, False)]
    return Network(layers, dtype).init_weights(seed)


def build_residual_unet(depth: int = 3, base_channels: int = 16, seed: int = 0, dtype=np.float32) -> Network:
    """U-net with ``depth`` resolution levels whose output is added to its input.

    Level ``i`` has ``base_channels * 2**i`` channels and two 3x3 conv+ReLU;
    decoding uses nearest upsampling + 3x3 conv, concatenation with the
    matching encoder level, then two 3x3 conv+ReLU.  A linear 1x1 conv maps
    to one channel before the residual addition.
    """
    if depth < 1:
        raise ValueError(f"depth must be at least 1, got {depth}")
    chans = [base_channels * 2**i for i in range(depth)]
    layers: list = []
    skips = []
    cin = 1
    for i, ch in enumerate(chans):
        layers += [Conv(cin, ch, 3, True), Conv(ch, ch, 3, True)]
        cin = ch
        if i < depth - 1:
            skips.append(len(layers) - 1)
            layers.append(Pool())
    for i in range(depth - 2, -1, -1):
        ch = chans[i]
        layers += [Up(), Conv(cin, ch, 3, True), Concat(skips[i]), Conv(2 * ch, ch, 3, True), Conv(ch, ch, 3, True)]
        cin = ch
    layers += [Conv(cin, 1, 1, False), AddInput()]
    return Network(layers, dtype).init_weights(seed)
