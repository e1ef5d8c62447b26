"""
The optimisation loop.

One step samples a p x k batch, embeds every sample, scores the batch with
the Batch-All loss and applies Adam to the summed per-sample gradients. The
validation set is scored every ``checkpoint_every`` steps and at the last
step; the model with the best validation mAP is the one returned.
"""

import logging
import math

import numpy as np

from gaitset.network import backward, embed_many, forward
from partialgait.exceptions import InvalidConfig, NoValidQueries
from retrieval.metrics import cross_camera_eval
from retrieval.models import GalleryEntry, GallerySet

from .losses import batch_all_triplet_loss
from .models import LossConfig, TrainConfig, TrainResult
from .optim import Adam
from .sampler import sample_batch

logger = logging.getLogger(__name__)


def validation_map(model, tracklets, n_jobs=1):
    """Cross-camera mAP of the validation tracklets, NaN when it is undefined."""
    embeddings = embed_many(model, [t.frames for t in tracklets], n_jobs=n_jobs)
    gallery = GallerySet([
        GalleryEntry(t.tracklet_id, t.person_id, t.camera_id, e.flat)
        for t, e in zip(tracklets, embeddings)
    ])
    try:
        return cross_camera_eval(gallery).mAP
    except (NoValidQueries, InvalidConfig) as exc:
        logger.warning('validation mAP undefined', extra={'reason': exc.code})
        return math.nan


def train_step(model, batch, loss_config):
    states, strips = [], []
    for frames in batch.samples:
        embedding, state = forward(model, frames)
        states.append(state)
        strips.append(embedding.strips)
    result = batch_all_triplet_loss(np.stack(strips), batch.labels, loss_config)
    grads = {name: np.zeros_like(w) for name, w in model.weights.items()}
    for frames, state, upstream in zip(batch.samples, states, result.grad):
        for name, grad in backward(model, frames, upstream, state).items():
            grads[name] += grad
    return result, grads


def train(model, index, spec, loss_config=None, train_config=None, validation=(), n_jobs=1):
    loss_config = loss_config or LossConfig()
    train_config = train_config or TrainConfig()
    validation = list(validation)
    rng = np.random.default_rng([train_config.seed, spec.seed])
    model = model.copy()
    optimizer = Adam(model.weights, train_config.learning_rate, train_config.betas,
                     train_config.eps)
    result = TrainResult(model)

    for iteration in range(1, train_config.iterations + 1):
        batch = sample_batch(index, spec, rng)
        loss, grads = train_step(model, batch, loss_config)
        optimizer.step(model.weights, grads)

        val_map = math.nan
        last = iteration == train_config.iterations
        if validation and (iteration % train_config.checkpoint_every == 0 or last):
            val_map = validation_map(model, validation, n_jobs)
            if not math.isnan(val_map) and (math.isnan(result.best_map) or val_map > result.best_map):
                result.model = model.copy()
                result.best_map = val_map
                result.best_iteration = iteration
        result.history.append({
            'iteration': iteration,
            'loss': loss.loss,
            'nonzero_fraction': loss.nonzero_fraction,
            'val_mAP': val_map,
        })
        logger.info('training step', extra=result.history[-1])

    if result.best_iteration is None:
        result.model = model.copy()
        result.best_iteration = train_config.iterations
    return result
