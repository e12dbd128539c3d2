"""Trainable convolution layers: conv2d, transposed conv2d, average pooling.

Convolution is cross-correlation (no kernel flip). All routines share one
loop-over-kernel-taps formulation: each of the kh*kw taps contributes a
strided slice of the (padded) input times one weight column, realized as a
batched matmul. Stride, dilation and both padding modes fall out of the
slice arithmetic, and the backward passes reuse the same geometry.

The transposed convolution is defined as the linear adjoint of the
same-spec convolution: its forward pass is the convolution's input
gradient, so output spatial extent = input * stride.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .tensor import Tensor


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


@dataclass
class ConvSpec:
    """Static description of one convolution layer."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    padding: str = "same"
    transposed: bool = False

    def __post_init__(self):
        self.kernel = _pair(self.kernel)
        self.stride = _pair(self.stride)
        self.dilation = _pair(self.dilation)
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.dilation) < 1:
            raise ValueError("kernel, stride and dilation must be >= 1")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding mode {self.padding!r}")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        kh, kw = self.kernel
        if self.transposed:
            return (self.in_channels, self.out_channels, kh, kw)
        return (self.out_channels, self.in_channels, kh, kw)

    @property
    def bias_shape(self) -> tuple[int]:
        return (self.out_channels,)

    def param_count(self) -> int:
        return int(np.prod(self.weight_shape)) + self.out_channels


@dataclass
class LayerParams:
    """Named trainable tensors of one layer."""

    name: str
    spec: ConvSpec
    weight: Tensor
    bias: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}


def glorot_bound(spec: ConvSpec) -> float:
    kh, kw = spec.kernel
    fan_in = spec.in_channels * kh * kw
    fan_out = spec.out_channels * kh * kw
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(spec: ConvSpec, rng_seed: int, name: str = "", dtype=np.float32) -> LayerParams:
    """Glorot-uniform weights, zero bias, fully determined by the seed."""
    bound = glorot_bound(spec)
    n = int(np.prod(spec.weight_shape))
    w = (rng.uniform(rng_seed, n) * 2.0 - 1.0) * bound
    weight = Tensor(w.reshape(spec.weight_shape).astype(dtype), requires_grad=True)
    bias = Tensor(np.zeros(spec.bias_shape, dtype=dtype), requires_grad=True)
    return LayerParams(name=name, spec=spec, weight=weight, bias=bias)


# --------------------------------------------------------------- geometry

def conv_output_size(in_size: int, kernel: int, stride: int, dilation: int, padding: str) -> int:
    eff = (kernel - 1) * dilation + 1
    if padding == "same":
        return -(-in_size // stride)
    out = (in_size - eff) // stride + 1
    if out < 1:
        raise ValueError(
            f"valid padding leaves no output: input {in_size}, effective kernel {eff}")
    return out


def _geometry(h: int, w: int, spec: ConvSpec):
    """Output extents and (top, bottom, left, right) padding."""
    kh, kw = spec.kernel
    sh, sw = spec.stride
    dh, dw = spec.dilation
    out_h = conv_output_size(h, kh, sh, dh, spec.padding)
    out_w = conv_output_size(w, kw, sw, dw, spec.padding)
    if spec.padding == "same":
        eff_h = (kh - 1) * dh + 1
        eff_w = (kw - 1) * dw + 1
        ph = max((out_h - 1) * sh + eff_h - h, 0)
        pw = max((out_w - 1) * sw + eff_w - w, 0)
        # odd totals put the extra row/column at bottom/right
        pads = (ph // 2, ph - ph // 2, pw // 2, pw - pw // 2)
    else:
        pads = (0, 0, 0, 0)
    return out_h, out_w, pads


def _pad(x: np.ndarray, pads) -> np.ndarray:
    pt, pb, pl, pr = pads
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))


def _tap_slice(i: int, j: int, out_h: int, out_w: int, spec: ConvSpec):
    sh, sw = spec.stride
    dh, dw = spec.dilation
    return (
        slice(i * dh, i * dh + (out_h - 1) * sh + 1, sh),
        slice(j * dw, j * dw + (out_w - 1) * sw + 1, sw),
    )


# ----------------------------------------------------- raw numpy kernels

def _conv2d_raw(x: np.ndarray, weight: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation without bias. x [N,C,H,W], weight [O,C,kh,kw]."""
    n, c, h, w = x.shape
    out_c = weight.shape[0]
    kh, kw = spec.kernel
    out_h, out_w, pads = _geometry(h, w, spec)
    xp = _pad(x, pads)
    y = np.zeros((n, out_c, out_h * out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            si, sj = _tap_slice(i, j, out_h, out_w, spec)
            xs = xp[:, :, si, sj].reshape(n, c, out_h * out_w)
            y += np.matmul(weight[:, :, i, j], xs)
    return y.reshape(n, out_c, out_h, out_w)


def _conv2d_grad_w(x: np.ndarray, g: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Gradient of the conv output w.r.t. weight. g [N,O,out_h,out_w]."""
    n, c, h, w = x.shape
    out_c = g.shape[1]
    kh, kw = spec.kernel
    out_h, out_w, pads = _geometry(h, w, spec)
    xp = _pad(x, pads)
    g2 = g.reshape(n, out_c, out_h * out_w)
    gw = np.zeros((out_c, c, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            si, sj = _tap_slice(i, j, out_h, out_w, spec)
            xs = xp[:, :, si, sj].reshape(n, c, out_h * out_w)
            gw[:, :, i, j] = np.matmul(g2, xs.transpose(0, 2, 1)).sum(axis=0)
    return gw


def _conv2d_grad_x(g: np.ndarray, weight: np.ndarray, x_shape, spec: ConvSpec) -> np.ndarray:
    """Gradient of the conv output w.r.t. input: the adjoint map."""
    n, c, h, w = x_shape
    out_c = g.shape[1]
    kh, kw = spec.kernel
    out_h, out_w, pads = _geometry(h, w, spec)
    pt, pb, pl, pr = pads
    g2 = g.reshape(n, out_c, out_h * out_w)
    gxp = np.zeros((n, c, h + pt + pb, w + pl + pr), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            si, sj = _tap_slice(i, j, out_h, out_w, spec)
            contrib = np.matmul(weight[:, :, i, j].T, g2)
            gxp[:, :, si, sj] += contrib.reshape(n, c, out_h, out_w)
    return np.ascontiguousarray(gxp[:, :, pt:pt + h, pl:pl + w])


# ------------------------------------------------------------ tensor ops

def _check_layer_input(x: Tensor, spec: ConvSpec, params: LayerParams) -> None:
    if x.ndim != 4:
        raise ValueError(f"expected [N,C,H,W] input, got shape {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ValueError(
            f"channel mismatch: input has {x.shape[1]} channels, layer "
            f"{params.name or '<anon>'} expects {spec.in_channels}")
    if params.weight.shape != spec.weight_shape:
        raise ValueError(
            f"weight shape {params.weight.shape} does not match spec {spec.weight_shape}")
    if params.weight.dtype != x.dtype or params.bias.dtype != x.dtype:
        raise ValueError("input and parameter dtypes must match")


def conv2d(x: Tensor, spec: ConvSpec, params: LayerParams) -> Tensor:
    """Strided/dilated 2-D convolution with per-channel bias."""
    if spec.transposed:
        raise ValueError("conv2d called with a transposed spec")
    _check_layer_input(x, spec, params)
    weight, bias = params.weight, params.bias
    y = _conv2d_raw(x.data, weight.data, spec)
    y += bias.data[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(_conv2d_grad_x(g, weight.data, x.shape, spec))
        if weight.requires_grad:
            weight.accumulate_grad(_conv2d_grad_w(x.data, g, spec))
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
    return Tensor._make(y, (x, weight, bias), backward)


def _adjoint_spec(spec: ConvSpec) -> ConvSpec:
    """The plain convolution a transposed layer is the adjoint of."""
    return ConvSpec(
        in_channels=spec.out_channels,
        out_channels=spec.in_channels,
        kernel=spec.kernel,
        stride=spec.stride,
        dilation=spec.dilation,
        padding="same",
    )


def transposed_conv2d(x: Tensor, spec: ConvSpec, params: LayerParams) -> Tensor:
    """Learned upsampling: output spatial extent = input extent * stride."""
    if not spec.transposed:
        raise ValueError("transposed_conv2d called with a non-transposed spec")
    _check_layer_input(x, spec, params)
    weight, bias = params.weight, params.bias
    n, _, h, w = x.shape
    sh, sw = spec.stride
    conv_spec = _adjoint_spec(spec)
    out_shape = (n, spec.out_channels, h * sh, w * sw)
    y = _conv2d_grad_x(x.data, weight.data, out_shape, conv_spec)
    y += bias.data[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(_conv2d_raw(g, weight.data, conv_spec))
        if weight.requires_grad:
            weight.accumulate_grad(_conv2d_grad_w(g, x.data, conv_spec))
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
    return Tensor._make(y, (x, weight, bias), backward)


def avg_pool2d(x: Tensor, window: tuple[int, int] = (2, 2),
               stride: tuple[int, int] = (2, 2)) -> Tensor:
    """Non-overlapping average pooling; backward spreads gradient uniformly."""
    window = _pair(window)
    stride = _pair(stride)
    if window != stride:
        raise ValueError("avg_pool2d supports window == stride only")
    if x.ndim != 4:
        raise ValueError(f"expected [N,C,H,W] input, got shape {x.shape}")
    n, c, h, w = x.shape
    wh, ww = window
    if h % wh or w % ww:
        raise ValueError(f"spatial extents {h}x{w} not divisible by window {wh}x{ww}")
    oh, ow = h // wh, w // ww
    y = x.data.reshape(n, c, oh, wh, ow, ww).mean(axis=(3, 5))
    inv = 1.0 / (wh * ww)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            gx = np.repeat(np.repeat(g * inv, wh, axis=2), ww, axis=3)
            x.accumulate_grad(gx)
    return Tensor._make(y.astype(x.dtype, copy=False), (x,), backward)
