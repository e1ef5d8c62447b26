import numpy as np

from partialgait.exceptions import InsufficientIdentities, InvalidConfig

from .models import Batch


def flip_tracklet(frames):
    """Mirror every frame left to right."""
    return np.ascontiguousarray(np.asarray(frames)[..., ::-1])


def sample_frame_indices(length, c, rng):
    return rng.choice(length, size=c, replace=length < c)


def sample_batch(index, spec, rng):
    identities = index.identities
    if len(identities) < spec.p:
        raise InsufficientIdentities(
            f'batch needs {spec.p} identities, index has {len(identities)}',
            available=len(identities))
    samples, labels, flipped = [], [], []
    for i in rng.choice(len(identities), size=spec.p, replace=False):
        person_id = identities[i]
        tracklets = index.tracklets[person_id]
        for t in rng.choice(len(tracklets), size=spec.k, replace=len(tracklets) < spec.k):
            stack = tracklets[t]
            sample = stack[sample_frame_indices(len(stack), spec.c, rng)]
            flip = bool(rng.random() < spec.flip_prob)
            samples.append(flip_tracklet(sample) if flip else sample)
            labels.append(person_id)
            flipped.append(flip)
    return Batch(samples, labels, flipped)


def split_identities(person_ids, fraction=0.6, seed=0):
    """Disjoint (train, validation) identity lists; ``fraction`` goes to train."""
    identities = sorted(set(person_ids))
    if not 0 < fraction < 1:
        raise InvalidConfig('split fraction must lie strictly between 0 and 1')
    if len(identities) < 2:
        raise InsufficientIdentities('splitting needs at least two identities')
    order = np.random.default_rng(seed).permutation(len(identities))
    cut = min(max(int(round(fraction * len(identities))), 1), len(identities) - 1)
    train = sorted(identities[i] for i in order[:cut])
    validation = sorted(identities[i] for i in order[cut:])
    return train, validation
