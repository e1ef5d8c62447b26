"""
Forward and backward passes of the few layers the embedder needs.

Tensors are single samples shaped (channels, height, width). Convolutions
are stride 1 with zero "same" padding and run as im2col matrix products.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _columns(x, kernel):
    pad = kernel // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (kernel, kernel), axis=(1, 2))
    channels, height, width = x.shape
    # (H*W, C*k*k), ordered to match weight.reshape(out, -1)
    return windows.transpose(1, 2, 0, 3, 4).reshape(height * width, channels * kernel * kernel)


def conv2d(x, weight, bias):
    out_channels, _, kernel, _ = weight.shape
    _, height, width = x.shape
    out = _columns(x, kernel) @ weight.reshape(out_channels, -1).T
    return out.T.reshape(out_channels, height, width) + bias[:, None, None]


def conv2d_backward(x, weight, grad_out, need_input_grad=True):
    out_channels, in_channels, kernel, _ = weight.shape
    _, height, width = x.shape
    grad_flat = grad_out.reshape(out_channels, height * width)
    grad_weight = (grad_flat @ _columns(x, kernel)).reshape(weight.shape)
    grad_bias = grad_flat.sum(axis=1)
    if not need_input_grad:
        return None, grad_weight, grad_bias
    grad_cols = (grad_flat.T @ weight.reshape(out_channels, -1)).reshape(
        height, width, in_channels, kernel, kernel)
    pad = kernel // 2
    grad_padded = np.zeros((in_channels, height + 2 * pad, width + 2 * pad), dtype=grad_out.dtype)
    for i in range(kernel):
        for j in range(kernel):
            grad_padded[:, i:i + height, j:j + width] += grad_cols[:, :, :, i, j].transpose(2, 0, 1)
    return grad_padded[:, pad:pad + height, pad:pad + width], grad_weight, grad_bias


def leaky_relu(x, slope):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(x, grad_out, slope):
    return grad_out * np.where(x > 0, 1.0, slope)


def max_pool2(x):
    """2x2 max pool, stride 2. Returns the output and the in-window argmax."""
    channels, height, width = x.shape
    blocks = x.reshape(channels, height // 2, 2, width // 2, 2).transpose(0, 1, 3, 2, 4)
    blocks = blocks.reshape(channels, height // 2, width // 2, 4)
    index = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, index[..., None], axis=-1)[..., 0], index


def max_pool2_backward(index, grad_out):
    channels, out_h, out_w = grad_out.shape
    blocks = np.zeros((channels, out_h, out_w, 4), dtype=grad_out.dtype)
    np.put_along_axis(blocks, index[..., None], grad_out[..., None], axis=-1)
    blocks = blocks.reshape(channels, out_h, out_w, 2, 2).transpose(0, 1, 3, 2, 4)
    return blocks.reshape(channels, out_h * 2, out_w * 2)
