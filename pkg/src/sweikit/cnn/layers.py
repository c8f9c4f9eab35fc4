"""Layer primitives with exact analytic gradients.

Convolutions are computed as a sum over kernel offsets of channel-mixing
tensordots on strided slices: same FLOPs as im2col without the giant
column buffer, and the backward pass reuses the identical slicing.
"""

import numpy as np

from ..errors import ShapeMismatchError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _triple(v):
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise ValueError("expected an int or a 3-tuple")
    return t


def conv3_forward(x, w, b, stride=1, pad=1):
    """3D cross-correlation over the trailing (depth, lateral, time) axes.

    x: (N, Cin, D, L, T); w: (Cout, Cin, kd, kl, kt); b: (Cout,).
    Zero padding `pad` per axis, stride per axis.
    """
    stride = _triple(stride)
    pad = _triple(pad)
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeMismatchError("conv3 expects 5D input and kernel")
    n, cin, d, l, t = x.shape
    cout, cin_w, kd, kl, kt = w.shape
    if cin != cin_w:
        raise ShapeMismatchError(f"input has {cin} channels, kernel expects {cin_w}")
    xp = np.pad(
        x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1]), (pad[2], pad[2]))
    )
    od = (d + 2 * pad[0] - kd) // stride[0] + 1
    ol = (l + 2 * pad[1] - kl) // stride[1] + 1
    ot = (t + 2 * pad[2] - kt) // stride[2] + 1
    if od < 1 or ol < 1 or ot < 1:
        raise ShapeMismatchError("kernel does not fit the padded input")
    out = np.zeros((cout, n, od, ol, ot), dtype=x.dtype)
    for a in range(kd):
        for bb in range(kl):
            for c in range(kt):
                xs = xp[
                    :,
                    :,
                    a : a + od * stride[0] : stride[0],
                    bb : bb + ol * stride[1] : stride[1],
                    c : c + ot * stride[2] : stride[2],
                ]
                # (Cout, Cin) x (N, Cin, od, ol, ot) -> (Cout, N, od, ol, ot)
                out += np.tensordot(w[:, :, a, bb, c], xs, axes=([1], [1]))
    out = out.transpose(1, 0, 2, 3, 4)
    out += b.reshape(1, -1, 1, 1, 1)
    cache = (x.shape, xp, w, stride, pad, (od, ol, ot))
    return out, cache


def conv3_backward(dout, cache):
    """Gradients of conv3 w.r.t. input, weights and bias."""
    x_shape, xp, w, stride, pad, (od, ol, ot) = cache
    cout, cin, kd, kl, kt = w.shape
    n = x_shape[0]
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    db = dout.sum(axis=(0, 2, 3, 4))
    for a in range(kd):
        for bb in range(kl):
            for c in range(kt):
                sl = (
                    slice(None),
                    slice(None),
                    slice(a, a + od * stride[0], stride[0]),
                    slice(bb, bb + ol * stride[1], stride[1]),
                    slice(c, c + ot * stride[2], stride[2]),
                )
                xs = xp[sl]
                # dw[:, :, a, b, c] = sum over batch+space of dout * xs
                dw[:, :, a, bb, c] = np.tensordot(
                    dout, xs, axes=([0, 2, 3, 4], [0, 2, 3, 4])
                )
                # dx slice accumulates w^T applied to dout
                dxp[sl] += np.tensordot(w[:, :, a, bb, c], dout, axes=([0], [1])).transpose(
                    1, 0, 2, 3, 4
                )
    pd, pl, pt = pad
    d, l, t = x_shape[2], x_shape[3], x_shape[4]
    dx = dxp[:, :, pd : pd + d, pl : pl + l, pt : pt + t]
    return dx, dw, db


def bn_forward(x, gamma, beta, running_mean, running_var, training):
    """Per-channel batch normalization over (batch, depth, lateral, time).

    Training mode standardizes with batch statistics and updates the
    running statistics in place with momentum 0.9; inference mode uses the
    stored running statistics.
    """
    axes = (0, 2, 3, 4)
    if training:
        count = x.shape[0] * x.shape[2] * x.shape[3] * x.shape[4]
        if count <= 1:
            raise ShapeMismatchError("batch norm needs more than one sample per channel")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= BN_MOMENTUM
        running_mean += (1.0 - BN_MOMENTUM) * mean
        running_var *= BN_MOMENTUM
        running_var += (1.0 - BN_MOMENTUM) * var
    else:
        mean = running_mean
        var = running_var
    shape = (1, -1, 1, 1, 1)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    cache = (xhat, gamma, inv_std, training)
    return out, cache


def bn_backward(dout, cache):
    xhat, gamma, inv_std, training = cache
    shape = (1, -1, 1, 1, 1)
    axes = (0, 2, 3, 4)
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma.reshape(shape)
    if training:
        m = dout.shape[0] * dout.shape[2] * dout.shape[3] * dout.shape[4]
        dx = (
            inv_std.reshape(shape)
            / m
            * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(shape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape)
            )
        )
    else:
        dx = dxhat * inv_std.reshape(shape)
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def avgpool3_forward(x, size=2):
    """Non-overlapping average pooling; trailing remainders are dropped."""
    size = _triple(size)
    n, c, d, l, t = x.shape
    od, ol, ot = d // size[0], l // size[1], t // size[2]
    if od < 1 or ol < 1 or ot < 1:
        raise ShapeMismatchError(f"cannot pool {x.shape[2:]} by {size}")
    xv = x[:, :, : od * size[0], : ol * size[1], : ot * size[2]]
    xv = xv.reshape(n, c, od, size[0], ol, size[1], ot, size[2])
    out = xv.mean(axis=(3, 5, 7))
    return out, (x.shape, size)


def avgpool3_backward(dout, cache):
    x_shape, size = cache
    n, c, d, l, t = x_shape
    od, ol, ot = dout.shape[2:]
    scale = 1.0 / (size[0] * size[1] * size[2])
    dx = np.zeros(x_shape, dtype=dout.dtype)
    block = (
        dout[:, :, :, None, :, None, :, None]
        * scale
        * np.ones((1, 1, 1, size[0], 1, size[1], 1, size[2]), dtype=dout.dtype)
    )
    dx[:, :, : od * size[0], : ol * size[1], : ot * size[2]] = block.reshape(
        n, c, od * size[0], ol * size[1], ot * size[2]
    )
    return dx


def global_avgpool_forward(x):
    out = x.mean(axis=(2, 3, 4))
    return out, x.shape


def global_avgpool_backward(dout, x_shape):
    n, c, d, l, t = x_shape
    return np.broadcast_to(
        dout[:, :, None, None, None] / (d * l * t), x_shape
    ).astype(dout.dtype, copy=True)


def affine_forward(x, w, b):
    """(N, C) @ (C,) + b -> (N,) regression head."""
    return x @ w + b, x


def affine_backward(dout, cache, w):
    x = cache
    dx = np.outer(dout, w)
    dw = x.T @ dout
    db = dout.sum()
    return dx, dw, db


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. the predictions."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError("prediction and target shapes differ")
    diff = pred - target
    n = pred.size
    loss = float(np.dot(diff.ravel(), diff.ravel()) / n)
    return loss, 2.0 * diff / n
