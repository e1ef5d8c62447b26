"""
Set-pooled gait embedder with Horizontal Pyramid Pooling.

Each silhouette goes through three convolution stages on its own; the
frame-level maps are max-pooled over the set and sliced into horizontal
bands at every pyramid scale. Each band gets its own projection.

Max operations (pooling windows, set pooling, band maxima) send their
gradient to the first maximal element in (frame, row, column) order.
"""

import numpy as np
from joblib import Parallel, delayed

from partialgait import settings
from partialgait.exceptions import DimensionMismatch, EmptySet, IndivisibleHeight, ShapeMismatch

from .layers import (
    conv2d, conv2d_backward, leaky_relu, leaky_relu_backward, max_pool2,
    max_pool2_backward,
)
from .models import Embedding, GaitModel, fan_in

STAGES = (
    ('stage1.conv1', 'stage1.conv2'),
    ('stage2.conv1', 'stage2.conv2'),
    ('stage3.conv1', 'stage3.conv2'),
)
GLOBAL_CONVS = ('global.conv1', 'global.conv2')


def init_model(config):
    rng = np.random.default_rng(config.seed)
    shapes = config.weight_shapes()
    weights = {}
    for name, shape in shapes.items():
        fan = fan_in(name, shape)
        if fan is None:
            fan = fan_in(name.replace('.bias', '.weight'), shapes[name.replace('.bias', '.weight')])
        bound = 1.0 / np.sqrt(fan)
        weights[name] = rng.uniform(-bound, bound, size=shape)
    return GaitModel(config, weights)


def _as_frame(frame):
    pixels = np.asarray(getattr(frame, 'pixels', frame), dtype=np.float64)
    expected = (settings.SILHOUETTE_HEIGHT, settings.SILHOUETTE_WIDTH)
    if pixels.shape != expected:
        raise DimensionMismatch(f'frames must be {expected}, got {pixels.shape}')
    return pixels[None]


def _conv_block(model, name, x, cache):
    pre = conv2d(x, model.weights[f'{name}.weight'], model.weights[f'{name}.bias'])
    if cache is not None:
        cache.append((name, x, pre))
    return leaky_relu(pre, model.config.leaky_slope)


def _frame_forward(model, frame, cache=None):
    """Stage-2 and stage-3 maps of one frame; ``cache`` collects backward state."""
    x = _as_frame(frame)
    outputs = []
    for stage, names in enumerate(STAGES):
        for name in names:
            x = _conv_block(model, name, x, cache)
        if stage < 2:
            x, index = max_pool2(x)
            if cache is not None:
                cache.append(('pool', index, None))
        outputs.append(x)
    return outputs[1], outputs[2]


def frame_features(model, frame):
    return _frame_forward(model, frame)[1]


def set_pool(features):
    if len(features) == 0:
        raise EmptySet('set pooling needs at least one feature map')
    return np.max(np.stack(features), axis=0)


def _set_pool_with_index(features):
    stacked = np.stack(features)
    index = stacked.argmax(axis=0)
    return np.take_along_axis(stacked, index[None], axis=0)[0], index


def _bands(height, scales):
    for scale in scales:
        if height % scale:
            raise IndivisibleHeight(f'feature height {height} is not divisible by scale {scale}')
        band = height // scale
        for b in range(scale):
            yield b * band, (b + 1) * band


def hpp(set_feature, scales, projections):
    """Strips x D matrix; band pooling is global max + global mean."""
    channels, height, width = set_feature.shape
    bands = list(_bands(height, scales))
    if projections.shape[:2] != (len(bands), channels):
        raise ShapeMismatch(
            f'projections {projections.shape} do not fit {len(bands)} strips of {channels} channels')
    strips = []
    for (top, bottom), projection in zip(bands, projections):
        region = set_feature[:, top:bottom, :].reshape(channels, -1)
        pooled = region.max(axis=1) + region.mean(axis=1)
        strips.append(pooled @ projection)
    return np.stack(strips)


def _hpp_backward(set_feature, scales, projections, grad_strips):
    channels, height, width = set_feature.shape
    grad_feature = np.zeros_like(set_feature)
    grad_projections = np.zeros_like(projections)
    for s, (top, bottom) in enumerate(_bands(height, scales)):
        region = set_feature[:, top:bottom, :].reshape(channels, -1)
        pooled = region.max(axis=1) + region.mean(axis=1)
        grad_projections[s] = np.outer(pooled, grad_strips[s])
        grad_pooled = projections[s] @ grad_strips[s]
        grad_region = np.repeat((grad_pooled / region.shape[1])[:, None], region.shape[1], axis=1)
        grad_region[np.arange(channels), region.argmax(axis=1)] += grad_pooled
        grad_feature[:, top:bottom, :] += grad_region.reshape(channels, bottom - top, width)
    return grad_feature, grad_projections


def _global_branch(model, pooled_stage2, main, cache=None):
    x = pooled_stage2
    for name in GLOBAL_CONVS:
        x = _conv_block(model, name, x, cache)
    return x + main


def _forward(model, frames, keep_cache=False):
    if len(frames) == 0:
        raise EmptySet('embedding needs at least one frame')
    config = model.config
    stage2, stage3 = [], []
    for frame in frames:
        f2, f3 = _frame_forward(model, frame)
        stage2.append(f2)
        stage3.append(f3)
    main, main_index = _set_pool_with_index(stage3)
    strips = [hpp(main, config.pyramid_scales, model.weights['hpp.main.projection'])]
    state = {'main': main, 'main_index': main_index}
    if config.branches == 2:
        pooled2, pooled2_index = _set_pool_with_index(stage2)
        global_cache = [] if keep_cache else None
        glob = _global_branch(model, pooled2, main, global_cache)
        strips.append(hpp(glob, config.pyramid_scales, model.weights['hpp.global.projection']))
        state.update(pooled2=pooled2, pooled2_index=pooled2_index, glob=glob,
                     global_cache=global_cache)
    return Embedding(np.concatenate(strips)), state


def forward(model, frames):
    """Embedding plus the set-level state ``backward`` needs."""
    return _forward(model, frames, keep_cache=True)


def embed(model, frames):
    return _forward(model, frames)[0]


def embed_many(model, frame_sets, n_jobs=1):
    """One Embedding per frame set, in input order."""
    return Parallel(n_jobs=n_jobs)(delayed(embed)(model, frames) for frames in frame_sets)


def _conv_chain_backward(model, cache, grad, grads, need_last_input=True):
    slope = model.config.leaky_slope
    for position in range(len(cache) - 1, -1, -1):
        name, first, second = cache[position]
        if name == 'pool':
            grad = max_pool2_backward(first, grad)
            continue
        x, pre = first, second
        grad = leaky_relu_backward(pre, grad, slope)
        need_input = position > 0 or need_last_input
        grad, grad_weight, grad_bias = conv2d_backward(
            x, model.weights[f'{name}.weight'], grad, need_input)
        grads[f'{name}.weight'] += grad_weight
        grads[f'{name}.bias'] += grad_bias
    return grad


def backward(model, frames, upstream, state=None):
    """
    Exact weight gradients of ``<embed(model, frames), upstream>``.

    ``upstream`` is the gradient on the Embedding, shaped strips x D or flat.
    Frame-level activations are recomputed one frame at a time, so only the
    set-level state is held in memory.
    """
    config = model.config
    upstream = np.asarray(upstream, dtype=np.float64)
    expected = (config.strip_count, config.strip_dim)
    if upstream.size != expected[0] * expected[1] or upstream.ndim not in (1, 2) \
            or (upstream.ndim == 2 and upstream.shape != expected):
        raise ShapeMismatch(f'upstream gradient shape {upstream.shape}, expected {expected}')
    upstream = upstream.reshape(expected)
    if state is None:
        _, state = forward(model, frames)
    grads = {name: np.zeros_like(w) for name, w in model.weights.items()}
    per_branch = config.strips_per_branch

    grad_main, grads['hpp.main.projection'] = _hpp_backward(
        state['main'], config.pyramid_scales, model.weights['hpp.main.projection'],
        upstream[:per_branch])
    grad_pooled2 = None
    if config.branches == 2:
        grad_glob, grads['hpp.global.projection'] = _hpp_backward(
            state['glob'], config.pyramid_scales, model.weights['hpp.global.projection'],
            upstream[per_branch:])
        grad_main = grad_main + grad_glob
        grad_pooled2 = _conv_chain_backward(model, state['global_cache'], grad_glob, grads)

    for f, frame in enumerate(frames):
        grad3 = np.where(state['main_index'] == f, grad_main, 0.0)
        grad2 = None
        if grad_pooled2 is not None:
            grad2 = np.where(state['pooled2_index'] == f, grad_pooled2, 0.0)
        if not grad3.any() and (grad2 is None or not grad2.any()):
            continue
        cache = []
        _frame_forward(model, frame, cache)
        # cache: stage1 (2 convs, pool), stage2 (2 convs, pool), stage3 (2 convs)
        grad = _conv_chain_backward(model, cache[6:], grad3, grads)
        if grad2 is not None:
            grad = grad + grad2
        _conv_chain_backward(model, cache[:6], grad, grads, need_last_input=False)
    return grads
