"""Small convolutional classifier with analytic backpropagation to the input.

Supports exactly the layer menu the attack experiments need: conv2d
(stride 1, zero-padded "same"), relu, 2x2 max pooling, flatten, and dense.
The engine is inference-only: weights are fixed, and the backward pass
produces the gradient of the cross-entropy loss (or any logit direction)
with respect to the input image.

Conventions that make the backward pass deterministic:
  * maxpool ties route the full gradient to the first maximum in row-major
    window scan order;
  * relu passes gradient only where the forward input was strictly > 0;
  * argmax over logits breaks ties toward the lowest class index.

Weights live in float32 (the serialized truth); all arithmetic runs in
float64 and results are rounded back to float32 at the public boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError, ValidationError
from .tensor import Tensor

LOCN_MAGIC = b"LOCN"
LOCN_VERSION = 1

CONV2D, RELU, MAXPOOL2, FLATTEN, DENSE = range(5)

_KIND_NAMES = {
    CONV2D: "conv2d",
    RELU: "relu",
    MAXPOOL2: "maxpool2",
    FLATTEN: "flatten",
    DENSE: "dense",
}
_KIND_CODES = {name: code for code, name in _KIND_NAMES.items()}


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind plus whatever float32 parameters that kind carries.

    conv2d: kernel (kh, kw, in_ch, out_ch) and bias (out_ch).
    dense:  weight (in_dim, out_dim) and bias (out_dim).
    relu / maxpool2 / flatten carry no parameters.
    """

    kind: str
    kernel: np.ndarray | None = None
    bias: np.ndarray | None = None
    weight: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        for name in ("kernel", "bias", "weight"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{self.kind} {name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.kind == "conv2d":
            if self.kernel is None or self.kernel.ndim != 4:
                raise ValueError("conv2d needs a (kh, kw, in_ch, out_ch) kernel")
            if self.bias is None or self.bias.shape != (self.kernel.shape[3],):
                raise ValueError("conv2d bias must have one value per output channel")
        elif self.kind == "dense":
            if self.weight is None or self.weight.ndim != 2:
                raise ValueError("dense needs an (in_dim, out_dim) weight")
            if self.bias is None or self.bias.shape != (self.weight.shape[1],):
                raise ValueError("dense bias must have one value per output unit")


@dataclass(frozen=True)
class Prediction:
    """Classifier output for one image."""

    logits: np.ndarray
    probabilities: np.ndarray
    label: int
    confidence: float


class Network:
    """Ordered layer stack with a fixed input shape, validated end to end."""

    def __init__(self, layers: list[LayerSpec], input_shape: tuple[int, int, int]):
        if len(input_shape) != 3 or any(d < 1 for d in input_shape):
            raise ValueError(f"input shape must be positive (H, W, C), got {input_shape}")
        self.layers = tuple(layers)
        self.input_shape = tuple(input_shape)
        self.num_classes = self._validate_chain()
        # float64 copies of the weights so the hot loops skip per-call casts
        self._params64 = [
            {
                name: getattr(l, name).astype(np.float64)
                for name in ("kernel", "bias", "weight")
                if getattr(l, name) is not None
            }
            for l in self.layers
        ]

    def _validate_chain(self) -> int:
        shape: tuple = self.input_shape
        for i, layer in enumerate(self.layers):
            kind = layer.kind
            if kind == "conv2d":
                if len(shape) != 3:
                    raise ValidationError(f"layer {i} (conv2d): expected an image input, got {shape}")
                h, w, c = shape
                kh, kw, in_ch, out_ch = layer.kernel.shape
                if in_ch != c:
                    raise ValidationError(
                        f"layer {i} (conv2d): kernel expects {in_ch} input channels, got {c}"
                    )
                shape = (h, w, out_ch)
            elif kind == "relu":
                pass
            elif kind == "maxpool2":
                if len(shape) != 3:
                    raise ValidationError(f"layer {i} (maxpool2): expected an image input, got {shape}")
                h, w, c = shape
                if h % 2 or w % 2:
                    raise ValidationError(
                        f"layer {i} (maxpool2): input {h}x{w} not divisible by 2"
                    )
                shape = (h // 2, w // 2, c)
            elif kind == "flatten":
                if len(shape) != 3:
                    raise ValidationError(f"layer {i} (flatten): expected an image input, got {shape}")
                shape = (shape[0] * shape[1] * shape[2],)
            elif kind == "dense":
                if len(shape) != 1:
                    raise ValidationError(f"layer {i} (dense): expected a flat input, got {shape}")
                in_dim, out_dim = layer.weight.shape
                if in_dim != shape[0]:
                    raise ValidationError(
                        f"layer {i} (dense): weight expects {in_dim} features, got {shape[0]}"
                    )
                shape = (out_dim,)
        if len(shape) != 1:
            raise ValidationError(f"network must end with a vector output, got {shape}")
        return int(shape[0])


# ---------------------------------------------------------------------------
# layer forward/backward kernels (float64 in, float64 out)

def _conv_pads(kh: int, kw: int) -> tuple[int, int]:
    return (kh - 1) // 2, (kw - 1) // 2


def _conv_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    h, w, _ = x.shape
    kh, kw, in_ch, out_ch = kernel.shape
    pt, pl = _conv_pads(kh, kw)
    xp = np.zeros((h + kh - 1, w + kw - 1, in_ch), dtype=np.float64)
    xp[pt : pt + h, pl : pl + w] = x
    y = np.broadcast_to(bias, (h, w, out_ch)).copy()
    for dh in range(kh):
        for dw in range(kw):
            y += xp[dh : dh + h, dw : dw + w] @ kernel[dh, dw]
    return y


def _conv_backward(dy: np.ndarray, kernel: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    h, w, _ = dy.shape
    kh, kw, in_ch, _ = kernel.shape
    pt, pl = _conv_pads(kh, kw)
    dxp = np.zeros((in_h + kh - 1, in_w + kw - 1, in_ch), dtype=np.float64)
    for dh in range(kh):
        for dw in range(kw):
            dxp[dh : dh + h, dw : dw + w] += dy @ kernel[dh, dw].T
    return dxp[pt : pt + in_h, pl : pl + in_w]


def _maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    # windows laid out in row-major scan order (0,0), (0,1), (1,0), (1,1)
    win = x.reshape(h2, 2, w2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2, w2, 4, c)
    idx = win.argmax(axis=2)  # argmax picks the first maximum
    y = np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return y, idx


def _maxpool_backward(dy: np.ndarray, idx: np.ndarray) -> np.ndarray:
    h2, w2, c = dy.shape
    dwin = np.zeros((h2, w2, 4, c), dtype=np.float64)
    np.put_along_axis(dwin, idx[:, :, None, :], dy[:, :, None, :], axis=2)
    return dwin.reshape(h2, w2, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2 * 2, w2 * 2, c)


def _run_layers(net: Network, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass returning the logits and the per-layer state for backward."""
    trace = []
    a = x
    for layer, p64 in zip(net.layers, net._params64):
        kind = layer.kind
        if kind == "conv2d":
            trace.append(a.shape)
            a = _conv_forward(a, p64["kernel"], p64["bias"])
        elif kind == "relu":
            trace.append(a)
            a = np.maximum(a, 0.0)
        elif kind == "maxpool2":
            a, idx = _maxpool_forward(a)
            trace.append(idx)
        elif kind == "flatten":
            trace.append(a.shape)
            a = a.reshape(-1)
        else:  # dense
            trace.append(None)
            a = a @ p64["weight"] + p64["bias"]
    return a, trace


def _backward(net: Network, trace: list, dlogits: np.ndarray) -> np.ndarray:
    d = dlogits
    for layer, p64, saved in zip(
        reversed(net.layers), reversed(net._params64), reversed(trace)
    ):
        kind = layer.kind
        if kind == "conv2d":
            in_h, in_w, _ = saved
            d = _conv_backward(d, p64["kernel"], in_h, in_w)
        elif kind == "relu":
            d = d * (saved > 0.0)
        elif kind == "maxpool2":
            d = _maxpool_backward(d, saved)
        elif kind == "flatten":
            d = d.reshape(saved)
        else:  # dense
            d = d @ p64["weight"].T
    return d


# ---------------------------------------------------------------------------
# public operations

def _check_input(net: Network, x: Tensor) -> np.ndarray:
    if x.shape != net.input_shape:
        raise ValueError(f"input shape {x.shape} does not match network {net.input_shape}")
    return x.data.astype(np.float64)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def forward(net: Network, x: Tensor) -> Prediction:
    """Run the network on one image in [0, 1] and return its prediction."""
    logits, _ = _run_layers(net, _check_input(net, x))
    probs = _softmax(logits)
    label = int(np.argmax(logits))
    return Prediction(
        logits=logits,
        probabilities=probs,
        label=label,
        confidence=float(probs[label]),
    )


def loss(net: Network, x: Tensor, y: int) -> float:
    """Cross-entropy -log p(y|x), computed via log-sum-exp."""
    if not 0 <= y < net.num_classes:
        raise ValueError(f"class index {y} out of range [0, {net.num_classes})")
    logits, _ = _run_layers(net, _check_input(net, x))
    zmax = logits.max()
    return float(zmax + np.log(np.exp(logits - zmax).sum()) - logits[y])


def input_gradient(net: Network, x: Tensor, y: int) -> Tensor:
    """Gradient of the cross-entropy loss at (x, y) with respect to x."""
    if not 0 <= y < net.num_classes:
        raise ValueError(f"class index {y} out of range [0, {net.num_classes})")
    logits, trace = _run_layers(net, _check_input(net, x))
    d = _softmax(logits)
    d[y] -= 1.0  # d(-log p_y)/dz = p - onehot(y)
    return Tensor(_backward(net, trace, d).astype(np.float32), copy=False)


def logit_gradient(net: Network, x: Tensor, weights: np.ndarray) -> Tensor:
    """Gradient of sum_i weights[i] * Z(x)_i with respect to x.

    Used for margin objectives that differentiate a logit difference rather
    than the loss.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (net.num_classes,):
        raise ValueError(f"weights must have shape ({net.num_classes},), got {w.shape}")
    _, trace = _run_layers(net, _check_input(net, x))
    return Tensor(_backward(net, trace, w).astype(np.float32), copy=False)


def seeded_random_network(
    input_shape: tuple[int, int, int], num_classes: int, seed: int
) -> Network:
    """Deterministic random classifier for experiments without trained weights.

    Architecture: conv3x3(C->8), relu, maxpool2, conv3x3(8->16), relu,
    maxpool2, flatten, dense(num_classes). Weights are drawn from NumPy's
    PCG64 stream seeded with `seed` (uniform in [-1, 1) scaled by
    1/sqrt(fan_in), layer by layer, kernel before bias); biases are zero.
    The same seed always yields bit-identical float32 weights.
    """
    h, w, c = input_shape
    if h % 4 or w % 4:
        raise ValueError(f"input {h}x{w} must be divisible by 4 (two maxpools)")
    if num_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)

    def draw(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        u = rng.uniform(-1.0, 1.0, size=shape)
        return (u / np.sqrt(fan_in)).astype(np.float32)

    flat_dim = (h // 4) * (w // 4) * 16
    layers = [
        LayerSpec("conv2d", kernel=draw((3, 3, c, 8), 3 * 3 * c), bias=np.zeros(8, np.float32)),
        LayerSpec("relu"),
        LayerSpec("maxpool2"),
        LayerSpec("conv2d", kernel=draw((3, 3, 8, 16), 3 * 3 * 8), bias=np.zeros(16, np.float32)),
        LayerSpec("relu"),
        LayerSpec("maxpool2"),
        LayerSpec("flatten"),
        LayerSpec("dense", weight=draw((flat_dim, num_classes), flat_dim),
                  bias=np.zeros(num_classes, np.float32)),
    ]
    return Network(layers, input_shape)


# ---------------------------------------------------------------------------
# weight file I/O
#
# Layout: magic "LOCN", version byte, input dims H W C (u32 LE), layer count
# (u32 LE), then per layer a kind byte followed by that kind's shape dims
# (u32 LE) and float32-LE parameters, weights before biases, row-major in
# the same index order as LayerSpec.

def save_weights(path: str | Path, net: Network) -> None:
    with open(path, "wb") as f:
        f.write(LOCN_MAGIC)
        f.write(struct.pack("<B", LOCN_VERSION))
        f.write(struct.pack("<3I", *net.input_shape))
        f.write(struct.pack("<I", len(net.layers)))
        for layer in net.layers:
            f.write(struct.pack("<B", _KIND_CODES[layer.kind]))
            if layer.kind == "conv2d":
                f.write(struct.pack("<4I", *layer.kernel.shape))
                f.write(layer.kernel.astype("<f4").tobytes())
                f.write(layer.bias.astype("<f4").tobytes())
            elif layer.kind == "dense":
                f.write(struct.pack("<2I", *layer.weight.shape))
                f.write(layer.weight.astype("<f4").tobytes())
                f.write(layer.bias.astype("<f4").tobytes())


def _read_exact(f, n: int, path, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) < n:
        raise TruncatedFileError(f"{path}: truncated while reading {what}")
    return buf


def load_weights(path: str | Path) -> Network:
    """Load a weight file and return the validated Network.

    Raises FormatError on a bad magic/version/kind byte, TruncatedFileError
    when the file ends early, and ValidationError when the declared layer
    shapes do not chain.
    """
    with open(path, "rb") as f:
        magic = f.read(4)
        if len(magic) < 4 or magic != LOCN_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {LOCN_MAGIC!r}")
        (version,) = struct.unpack("<B", _read_exact(f, 1, path, "version"))
        if version != LOCN_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        ih, iw, ic = struct.unpack("<3I", _read_exact(f, 12, path, "input shape"))
        (count,) = struct.unpack("<I", _read_exact(f, 4, path, "layer count"))
        layers = []
        for i in range(count):
            (code,) = struct.unpack("<B", _read_exact(f, 1, path, f"layer {i} kind"))
            if code not in _KIND_NAMES:
                raise FormatError(f"{path}: layer {i} has unknown kind byte {code}")
            kind = _KIND_NAMES[code]
            if kind == "conv2d":
                kh, kw, cin, cout = struct.unpack(
                    "<4I", _read_exact(f, 16, path, f"layer {i} dims")
                )
                kbytes = _read_exact(f, 4 * kh * kw * cin * cout, path, f"layer {i} kernel")
                bbytes = _read_exact(f, 4 * cout, path, f"layer {i} bias")
                kernel = np.frombuffer(kbytes, "<f4").reshape(kh, kw, cin, cout)
                bias = np.frombuffer(bbytes, "<f4")
                layers.append(LayerSpec(kind, kernel=kernel.copy(), bias=bias.copy()))
            elif kind == "dense":
                din, dout = struct.unpack("<2I", _read_exact(f, 8, path, f"layer {i} dims"))
                wbytes = _read_exact(f, 4 * din * dout, path, f"layer {i} weight")
                bbytes = _read_exact(f, 4 * dout, path, f"layer {i} bias")
                weight = np.frombuffer(wbytes, "<f4").reshape(din, dout)
                bias = np.frombuffer(bbytes, "<f4")
                layers.append(LayerSpec(kind, weight=weight.copy(), bias=bias.copy()))
            else:
                layers.append(LayerSpec(kind))
    return Network(layers, (ih, iw, ic))
