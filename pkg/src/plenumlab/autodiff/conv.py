"""Spatial network primitives: 2D/3D convolution and group normalization.

Convolution is cross-correlation (no kernel flip), evaluated by looping
over kernel taps and matmul-ing channel blocks over strided input windows.
This keeps anisotropic dilation, stride, and padding in plain slice
arithmetic while the heavy lifting stays in BLAS.
"""

import numpy as np

from .tensor import ShapeMismatch, Tensor, _accum, _as_tensor, _make, sqrt


class BadGroupCount(ValueError):
    pass


def _tuplify(value, rank, name):
    if np.isscalar(value):
        return (int(value),) * rank
    value = tuple(int(v) for v in value)
    if len(value) != rank:
        raise ShapeMismatch(f"{name} must have {rank} entries, got {value}")
    return value


def conv_output_shape(spatial, kernel, stride, padding, dilation):
    out = []
    for s, k, st, p, d in zip(spatial, kernel, stride, padding, dilation):
        eff = d * (k - 1) + 1
        o = (s + 2 * p - eff) // st + 1
        if o < 1:
            raise ShapeMismatch(
                f"conv output collapsed: size {s}, kernel {k}, stride {st}, "
                f"padding {p}, dilation {d}")
        out.append(o)
    return tuple(out)


def conv(x, weight, bias=None, stride=1, padding=0, dilation=1, rank=None):
    """Cross-correlation of x (N, Cin, *S) with weight (Cout, Cin, *K).

    stride / padding / dilation are scalars or per-spatial-axis tuples.
    Returns (N, Cout, *O) with O from the standard output-size formula.
    """
    x = _as_tensor(x, None)
    weight = _as_tensor(weight, x.dtype)
    if rank is None:
        rank = weight.data.ndim - 2
    if rank not in (1, 2, 3):
        raise ShapeMismatch(f"conv rank must be 1, 2 or 3, got {rank}")
    if x.data.ndim != rank + 2:
        raise ShapeMismatch(
            f"conv{rank}d expects input rank {rank + 2}, got {x.data.ndim}")
    if weight.data.ndim != rank + 2:
        raise ShapeMismatch(
            f"conv{rank}d expects weight rank {rank + 2}, got {weight.data.ndim}")
    n, cin = x.shape[:2]
    cout, cin_w = weight.shape[:2]
    if cin != cin_w:
        raise ShapeMismatch(f"conv channels: input {cin} vs weight {cin_w}")
    kernel = weight.shape[2:]
    stride = _tuplify(stride, rank, "stride")
    padding = _tuplify(padding, rank, "padding")
    dilation = _tuplify(dilation, rank, "dilation")
    spatial = x.shape[2:]
    out_spatial = conv_output_shape(spatial, kernel, stride, padding, dilation)

    if bias is not None:
        bias = _as_tensor(bias, x.dtype)
        if bias.shape != (cout,):
            raise ShapeMismatch(f"conv bias {bias.shape} vs {cout} channels")

    pad_width = [(0, 0), (0, 0)] + [(p, p) for p in padding]
    length = int(np.prod(out_spatial))
    taps = list(np.ndindex(*kernel))
    n_taps = len(taps)
    w2 = weight.data.reshape(cout, cin * n_taps)

    def window_slices(tap_idx):
        sl = [slice(None), slice(None)]
        for ax in range(rank):
            start = tap_idx[ax] * dilation[ax]
            stop = start + (out_spatial[ax] - 1) * stride[ax] + 1
            sl.append(slice(start, stop, stride[ax]))
        return tuple(sl)

    def gather_patches(data):
        padded = np.pad(data, pad_width) if any(padding) else data
        patches = np.empty((n, cin, n_taps, length), dtype=data.dtype)
        for t_i, tap in enumerate(taps):
            patches[:, :, t_i, :] = \
                padded[window_slices(tap)].reshape(n, cin, length)
        return patches.reshape(n, cin * n_taps, length)

    # one stacked matmul over the im2col patches keeps the work in BLAS;
    # patches are rebuilt in backward instead of being retained
    patches = gather_patches(x.data)
    y = (w2 @ patches).reshape((n, cout) + out_spatial)
    if bias is not None:
        y = y + bias.data.reshape((1, cout) + (1,) * rank)

    def backward(g):
        g2 = np.ascontiguousarray(g.reshape(n, cout, length))
        if bias is not None:
            _accum(bias, g.sum(axis=(0,) + tuple(range(2, 2 + rank))))
        back_patches = gather_patches(x.data) if weight.requires_grad \
            or x.requires_grad else None
        if weight.requires_grad:
            dw = np.tensordot(g2, back_patches, axes=([0, 2], [0, 2]))
            _accum(weight, dw.reshape(weight.shape))
        if x.requires_grad:
            dpatches = (w2.T @ g2).reshape(n, cin, n_taps, length)
            padded_shape = [n, cin] + [s + 2 * p
                                       for s, p in zip(spatial, padding)]
            dxp = np.zeros(padded_shape, dtype=g.dtype)
            for t_i, tap in enumerate(taps):
                dxp[window_slices(tap)] += \
                    dpatches[:, :, t_i].reshape((n, cin) + out_spatial)
            if any(padding):
                sl = [slice(None), slice(None)]
                sl += [slice(p, p + s) for p, s in zip(padding, spatial)]
                dxp = dxp[tuple(sl)]
            _accum(x, dxp)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(y, parents, backward)


def group_norm(x, groups, gamma, beta, eps_gn=1e-5):
    """Per-group standardization followed by a per-channel affine map.

    x is (N, C, *spatial); statistics use the population variance over each
    (sample, group) block.
    """
    x = _as_tensor(x, None)
    if x.data.ndim < 2:
        raise ShapeMismatch("group_norm expects (N, C, ...) input")
    n, c = x.shape[:2]
    if groups < 1 or c % groups != 0:
        raise BadGroupCount(f"{c} channels not divisible into {groups} groups")
    gamma = _as_tensor(gamma, x.dtype)
    beta = _as_tensor(beta, x.dtype)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch("group_norm affine parameters must be (C,)")
    spatial = x.shape[2:]

    from . import tensor as T

    xg = T.reshape(x, (n, groups, -1))
    mu = T.tensor_mean(xg, axis=2, keepdims=True)
    centered = T.sub(xg, mu)
    var = T.tensor_mean(T.mul(centered, centered), axis=2, keepdims=True)
    norm = T.div(centered, sqrt(T.add(var, eps_gn)))
    norm = T.reshape(norm, (n, c) + spatial)
    shape = (1, c) + (1,) * len(spatial)
    return T.add(T.mul(norm, T.reshape(gamma, shape)),
                 T.reshape(beta, shape))


def init_conv_weight(shape, seed, *tags, dtype=np.float32):
    """Fan-in-scaled uniform init for conv/dense kernels."""
    fan_in = int(np.prod(shape[1:]))
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    gen = _init_gen(seed, *tags)
    return Tensor(gen.uniform(-bound, bound, size=shape).astype(dtype),
                  requires_grad=True)


def _init_gen(seed, *tags):
    from .. import rng
    return rng.generator(seed, "init", *tags)
