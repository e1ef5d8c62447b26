import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from gaitset.models import ModelConfig
from gaitset.network import init_model
from partialgait.exceptions import InsufficientIdentities, InvalidConfig, NoValidTriplets

from .losses import batch_all_triplet_loss
from .loop import train
from .models import BatchSpec, LabelledTracklet, LossConfig, TrackletIndex, TrainConfig
from .optim import Adam
from .sampler import flip_tracklet, sample_batch, sample_frame_indices, split_identities

SMALL_MODEL = ModelConfig(conv_channels=(4, 6, 8), pyramid_scales=(1, 2), strip_dim=8, seed=1)


def brute_force_loss(embeddings, labels, margin):
    n, strips, _ = embeddings.shape
    totals = []
    for s in range(strips):
        losses = []
        for a in range(n):
            for p in range(n):
                for q in range(n):
                    if a == p or labels[a] != labels[p] or labels[q] == labels[a]:
                        continue
                    d_ap = np.linalg.norm(embeddings[a, s] - embeddings[p, s])
                    d_an = np.linalg.norm(embeddings[a, s] - embeddings[q, s])
                    losses.append(max(0.0, margin + d_ap - d_an))
        totals.append(np.mean(losses))
    return float(np.mean(totals))


def bar_tracklet(person, camera, rng, length=4):
    """Identity-specific vertical bar with a little per-frame noise."""
    frames = np.zeros((length, 64, 44), np.uint8)
    column = 4 + 9 * int(person)
    frames[:, 8:56, column:column + 4 + int(person)] = 1
    frames |= (rng.random(frames.shape) < 0.02).astype(np.uint8)
    return LabelledTracklet(f'{person}-{camera}', str(person), camera, frames)


class BatchSpecTests(unittest.TestCase):

    def test_validation(self):
        for bad in ({'p': 1}, {'k': 1}, {'c': 0}, {'flip_prob': 1.5}):
            with self.assertRaises(InvalidConfig):
                BatchSpec(**bad)
        with self.assertRaises(InvalidConfig):
            LossConfig(margin=-0.1)
        with self.assertRaises(InvalidConfig):
            TrainConfig(learning_rate=0)


class SamplerTests(unittest.TestCase):

    def index(self, identities, tracklets=2, length=40):
        rng = np.random.default_rng(0)
        items = []
        for person in range(identities):
            for t in range(tracklets):
                frames = rng.integers(0, 2, (length, 64, 44), dtype=np.uint8)
                items.append(LabelledTracklet(f'{person}-{t}', str(person), f'c{t}', frames))
        return TrackletIndex(items)

    def test_default_batch_size(self):
        batch = sample_batch(self.index(9), BatchSpec(p=8, k=4, c=30), np.random.default_rng(1))
        self.assertEqual(len(batch.samples), 32)
        self.assertEqual(batch.frame_count, 960)
        self.assertEqual(len(set(batch.labels)), 8)
        self.assertTrue(all(s.shape == (30, 64, 44) for s in batch.samples))

    def test_insufficient_identities(self):
        with self.assertRaises(InsufficientIdentities):
            sample_batch(self.index(2), BatchSpec(p=3, k=2, c=1), np.random.default_rng(0))

    def test_short_tracklets_and_lone_tracklet(self):
        index = self.index(2, tracklets=1, length=3)
        batch = sample_batch(index, BatchSpec(p=2, k=3, c=5, flip_prob=0.0), np.random.default_rng(2))
        self.assertEqual(len(batch.samples), 6)
        stacks = {pid: index.tracklets[pid][0] for pid in index.identities}
        for sample, label in zip(batch.samples, batch.labels):
            for frame in sample:
                self.assertTrue(any(np.array_equal(frame, f) for f in stacks[label]))

    def test_uniform_frame_frequency(self):
        rng = np.random.default_rng(3)
        counts = np.zeros(5)
        for _ in range(10000):
            picks = sample_frame_indices(5, 2, rng)
            self.assertEqual(len(set(picks.tolist())), 2)
            counts[picks] += 1
        np.testing.assert_allclose(counts / 10000, 0.4, atol=0.02)

    def test_flip_whole_tracklet(self):
        index = self.index(2, tracklets=2, length=1)
        batch = sample_batch(index, BatchSpec(p=2, k=2, c=1, flip_prob=1.0), np.random.default_rng(0))
        self.assertTrue(all(batch.flipped))
        originals = [f[0] for pid in index.identities for f in index.tracklets[pid]]
        for sample in batch.samples:
            self.assertTrue(any(np.array_equal(sample[0][:, ::-1], f) for f in originals))

    def test_same_seed_same_batches(self):
        index = self.index(4)
        spec = BatchSpec(p=2, k=2, c=3)
        a = sample_batch(index, spec, np.random.default_rng(5))
        b = sample_batch(index, spec, np.random.default_rng(5))
        self.assertEqual(a.labels, b.labels)
        for x, y in zip(a.samples, b.samples):
            np.testing.assert_array_equal(x, y)


class FlipTests(unittest.TestCase):

    def test_flip(self):
        frames = np.random.default_rng(0).integers(0, 2, (3, 64, 44), dtype=np.uint8)
        flipped = flip_tracklet(frames)
        np.testing.assert_array_equal(flip_tracklet(flipped), frames)
        for j in range(44):
            np.testing.assert_array_equal(flipped[:, :, j], frames[:, :, 43 - j])
        symmetric = np.zeros((1, 64, 44), np.uint8)
        symmetric[0, 10:50, 12:32] = 1
        np.testing.assert_array_equal(flip_tracklet(symmetric), symmetric)


class TripletLossTests(unittest.TestCase):

    def test_identical_embeddings(self):
        result = batch_all_triplet_loss(np.ones((4, 3, 5)), ['a', 'a', 'b', 'b'])
        self.assertAlmostEqual(result.loss, 0.2, places=15)

    def test_hand_case(self):
        embeddings = np.array([0.0, 2.0, 1.0, 3.0]).reshape(4, 1, 1)
        result = batch_all_triplet_loss(embeddings, ['A', 'A', 'B', 'B'], LossConfig(margin=0.2))
        self.assertAlmostEqual(result.loss, 0.9)
        self.assertEqual((result.triplets, result.nonzero), (8, 6))
        nonzero_only = batch_all_triplet_loss(embeddings, ['A', 'A', 'B', 'B'],
                                              LossConfig(averaging='nonzero-only'))
        self.assertAlmostEqual(nonzero_only.loss, 1.2)

    def test_separated_clusters(self):
        embeddings = np.array([[0.0], [0.1], [5.0], [5.1]]).reshape(4, 1, 1)
        result = batch_all_triplet_loss(embeddings, [0, 0, 1, 1])
        self.assertEqual(result.loss, 0.0)
        self.assertFalse(result.grad.any())

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 100:
            n = int(rng.integers(4, 13))
            labels = list(rng.integers(0, 3, n))
            if len(set(labels)) < 2 or all(labels.count(x) < 2 for x in set(labels)):
                continue
            embeddings = rng.standard_normal((n, int(rng.integers(1, 4)), int(rng.integers(1, 4))))
            margin = float(rng.choice([0.0, 0.2, 1.0]))
            result = batch_all_triplet_loss(embeddings, labels, LossConfig(margin=margin))
            self.assertGreaterEqual(result.loss, 0.0)
            self.assertAlmostEqual(result.loss, brute_force_loss(embeddings, labels, margin), delta=1e-10)
            checked += 1

    def test_gradient(self):
        rng = np.random.default_rng(8)
        embeddings = rng.standard_normal((6, 2, 3))
        labels = [0, 0, 1, 1, 2, 2]
        grad = batch_all_triplet_loss(embeddings, labels).grad
        eps = 1e-6
        for index in np.ndindex(embeddings.shape):
            shifted = embeddings.copy()
            shifted[index] += eps
            plus = batch_all_triplet_loss(shifted, labels).loss
            shifted[index] -= 2 * eps
            minus = batch_all_triplet_loss(shifted, labels).loss
            self.assertAlmostEqual(grad[index], (plus - minus) / (2 * eps), delta=1e-6)

    def test_no_valid_triplets(self):
        with self.assertRaises(NoValidTriplets):
            batch_all_triplet_loss(np.zeros((3, 1, 2)), ['a', 'a', 'a'])
        with self.assertRaises(NoValidTriplets):
            batch_all_triplet_loss(np.zeros((3, 1, 2)), ['a', 'b', 'c'])


class AdamTests(unittest.TestCase):

    def test_scalar_reference(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        params = {'x': np.zeros(1)}
        optimizer = Adam(params, lr, (b1, b2), eps)
        x, m, v = 0.0, 0.0, 0.0
        for t in range(1, 51):
            g = 2.0 * (x - 3.0)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
            optimizer.step(params, {'x': 2.0 * (params['x'] - 3.0)})
            self.assertAlmostEqual(params['x'][0], x, delta=1e-12)


class SplitTests(unittest.TestCase):

    def test_split(self):
        ids = [f'p{i}' for i in range(10)] * 2
        train_ids, val_ids = split_identities(ids, 0.6, seed=3)
        self.assertEqual((len(train_ids), len(val_ids)), (6, 4))
        self.assertFalse(set(train_ids) & set(val_ids))
        self.assertEqual(split_identities(ids, 0.6, seed=3), (train_ids, val_ids))


class TrainTests(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.train_set = [bar_tracklet(p, c, rng) for p in range(4) for c in ('c1', 'c2')]
        self.validation = [bar_tracklet(p, c, rng) for p in (0, 3) for c in ('c3', 'c4')]

    def test_same_seed_same_history(self):
        spec = BatchSpec(p=2, k=2, c=2, seed=4)
        config = TrainConfig(iterations=4, checkpoint_every=2, seed=1)
        runs = [
            train(init_model(SMALL_MODEL), TrackletIndex(self.train_set), spec,
                  train_config=config, validation=self.validation)
            for _ in range(2)
        ]
        self.assertTrue(runs[0].history_frame().equals(runs[1].history_frame()))
        self.assertEqual(runs[0].history_frame()['val_mAP'].notna().sum(), 2)
        self.assertIn(runs[0].best_iteration, (2, 4))

    def test_history_csv(self):
        result = train(init_model(SMALL_MODEL), TrackletIndex(self.train_set),
                       BatchSpec(p=2, k=2, c=1), train_config=TrainConfig(iterations=2))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'history.csv'
            result.write_history(path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['iteration', 'loss', 'nonzero_fraction', 'val_mAP'])
        self.assertEqual(frame['iteration'].tolist(), [1, 2])

    def test_overfit_smoke(self):
        result = train(
            init_model(ModelConfig.desk(seed=2)), TrackletIndex(self.train_set),
            BatchSpec(p=2, k=2, c=2, flip_prob=0.0, seed=0),
            train_config=TrainConfig(iterations=200, learning_rate=1e-3, checkpoint_every=200),
        )
        losses = result.history_frame()['loss']
        self.assertLess(losses.tail(20).mean(), losses.head(20).mean())
