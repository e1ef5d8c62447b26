import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from partialgait.exceptions import (
    BadMagic, DimensionMismatch, EmptySet, IndivisibleHeight, InvalidConfig, NonFiniteEmbedding,
    ShapeMismatch,
)

from .checkpoint import dumps_model, load_checkpoint, loads_model, save_checkpoint
from .layers import conv2d, max_pool2
from .models import Embedding, ModelConfig
from .network import (
    backward, embed, frame_features, hpp, init_model, set_pool,
)

GOLDEN = Path(__file__).parent / 'golden' / 'desk_embedding.npy'

TINY = ModelConfig(conv_channels=(2, 3, 4), pyramid_scales=(1, 2), strip_dim=3, branches=2, seed=7)


def random_frames(rng, count, binary=True):
    frames = rng.random((count, 64, 44))
    return list((frames < 0.5).astype(np.uint8)) if binary else list(frames)


class ModelConfigTests(unittest.TestCase):

    def test_strip_counts(self):
        self.assertEqual(ModelConfig.desk().strip_count, 7)
        self.assertEqual(ModelConfig.large().strip_count, 62)
        self.assertEqual(ModelConfig.large().flat_dim, 62 * 256)

    def test_invalid(self):
        with self.assertRaises(InvalidConfig):
            ModelConfig(pyramid_scales=())
        with self.assertRaises(InvalidConfig):
            ModelConfig(conv_channels=(8, 0, 32))
        with self.assertRaises(InvalidConfig):
            ModelConfig(branches=3)

    def test_from_dict(self):
        config = ModelConfig.from_dict({'preset': 'large', 'seed': 4})
        self.assertEqual((config.strip_dim, config.seed), (256, 4))
        with self.assertRaises(InvalidConfig):
            ModelConfig.from_dict({'width': 3})


class InitTests(unittest.TestCase):

    def test_same_seed_same_weights(self):
        a = init_model(ModelConfig.desk(seed=3))
        b = init_model(ModelConfig.desk(seed=3))
        self.assertEqual(list(a.weights), list(b.weights))
        for name in a.weights:
            self.assertEqual(a.weights[name].tobytes(), b.weights[name].tobytes())

    def test_shapes_follow_config(self):
        model = init_model(ModelConfig.large())
        self.assertEqual(model.weights['hpp.main.projection'].shape, (31, 128, 256))
        self.assertEqual(model.weights['hpp.global.projection'].shape, (31, 128, 256))
        self.assertEqual(model.weights['stage1.conv1.weight'].shape, (32, 1, 5, 5))

    def test_fan_in_bounds(self):
        model = init_model(ModelConfig.desk())
        weight = model.weights['stage2.conv1.weight']
        self.assertLessEqual(np.abs(weight).max(), 1 / np.sqrt(8 * 9))


class LayerTests(unittest.TestCase):

    def test_convolution_matches_loops(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 4, 5))
        kernel = rng.standard_normal((1, 1, 3, 3))
        bias = np.array([0.25])
        out = conv2d(x, kernel, bias)
        padded = np.pad(x[0], 1)
        for r in range(4):
            for c in range(5):
                expected = bias[0]
                for i in range(3):
                    for j in range(3):
                        expected += kernel[0, 0, i, j] * padded[r + i, c + j]
                self.assertAlmostEqual(out[0, r, c], expected, places=12)

    def test_max_pool(self):
        x = np.arange(16, dtype=float).reshape(1, 4, 4)
        out, _ = max_pool2(x)
        np.testing.assert_array_equal(out[0], [[5, 7], [13, 15]])


class FrameFeatureTests(unittest.TestCase):

    def test_output_shape(self):
        model = init_model(ModelConfig.desk())
        features = frame_features(model, np.ones((64, 44), np.uint8))
        self.assertEqual(features.shape, (32, 16, 11))

    def test_zero_frame_ignores_first_kernel(self):
        model = init_model(ModelConfig.desk())
        zero = np.zeros((64, 44), np.uint8)
        before = frame_features(model, zero)
        model.weights['stage1.conv1.weight'] = np.random.default_rng(1).standard_normal(
            model.weights['stage1.conv1.weight'].shape)
        np.testing.assert_array_equal(frame_features(model, zero), before)


class SetPoolTests(unittest.TestCase):

    def test_laws(self):
        rng = np.random.default_rng(2)
        maps = [rng.standard_normal((3, 4, 2)) for _ in range(4)]
        np.testing.assert_array_equal(set_pool(maps[:1]), maps[0])
        np.testing.assert_array_equal(set_pool(maps[:1] * 2), maps[0])
        np.testing.assert_array_equal(set_pool(maps), set_pool(maps[::-1]))
        with self.assertRaises(EmptySet):
            set_pool([])


class HorizontalPyramidPoolingTests(unittest.TestCase):

    def test_strip_count(self):
        feature = np.random.default_rng(0).standard_normal((5, 16, 11))
        projections = np.ones((7, 5, 2))
        self.assertEqual(hpp(feature, (1, 2, 4), projections).shape, (7, 2))

    def test_constant_map(self):
        feature = np.full((3, 8, 4), 1.5)
        projections = np.stack([np.eye(3)] * 3)
        np.testing.assert_allclose(hpp(feature, (1, 2), projections), np.full((3, 3), 3.0))

    def test_bands_match_enumeration(self):
        feature = np.array([[[1.0, 4.0], [2.0, -1.0], [0.5, 0.5], [3.0, -2.0]]])
        projections = np.ones((2, 1, 1))
        strips = hpp(feature, (2,), projections)
        top = [1.0, 4.0, 2.0, -1.0]
        bottom = [0.5, 0.5, 3.0, -2.0]
        self.assertAlmostEqual(strips[0, 0], max(top) + sum(top) / 4)
        self.assertAlmostEqual(strips[1, 0], max(bottom) + sum(bottom) / 4)

    def test_indivisible_height(self):
        with self.assertRaises(IndivisibleHeight):
            hpp(np.zeros((1, 6, 2)), (4,), np.zeros((4, 1, 1)))


class EmbedTests(unittest.TestCase):

    def test_shape_law(self):
        for config in (ModelConfig.desk(), TINY):
            emb = embed(init_model(config), random_frames(np.random.default_rng(0), 2))
            self.assertEqual(emb.strips.shape, (config.strip_count, config.strip_dim))
            self.assertEqual(emb.flat.size, config.flat_dim)

    def test_permutation_and_duplication_invariance(self):
        rng = np.random.default_rng(4)
        model = init_model(TINY)
        for _ in range(100):
            frames = random_frames(rng, int(rng.integers(1, 4)))
            reference = embed(model, frames).flat
            order = rng.permutation(len(frames))
            np.testing.assert_array_equal(embed(model, [frames[i] for i in order]).flat, reference)
            np.testing.assert_array_equal(embed(model, frames + frames).flat, reference)

    def test_empty(self):
        with self.assertRaises(EmptySet):
            embed(init_model(TINY), [])

    def test_golden_vector(self):
        # channel 0 passes through every conv; band (max + mean) lands in column 0
        model = init_model(ModelConfig.desk(seed=0))
        for name, weight in model.weights.items():
            weight[...] = 0
            if name.endswith('.weight'):
                weight[0, 0, weight.shape[2] // 2, weight.shape[3] // 2] = 1
        model.weights['hpp.main.projection'][:, 0, 0] = 1
        upper, lower = np.zeros((64, 44), np.uint8), np.zeros((64, 44), np.uint8)
        upper[:32, :8] = 1
        lower[48:, 40:] = 1

        flat = embed(model, [upper, lower]).flat
        self.assertTrue(GOLDEN.exists(), f'{GOLDEN} is missing')
        np.testing.assert_allclose(flat, np.load(GOLDEN), rtol=1e-12, atol=0)

        pooled = np.maximum(upper, lower).reshape(16, 4, 11, 4).max(axis=(1, 3))
        column = [pooled[top:top + size].max() + pooled[top:top + size].mean()
                  for size in (16, 8, 4) for top in range(0, 16, size)]
        np.testing.assert_allclose(flat.reshape(7, 32)[:, 0], column, rtol=1e-12)

    def test_frames_must_be_aligned(self):
        model = init_model(TINY)
        for shape in ((128, 96), (64, 45), (44, 64)):
            with self.assertRaises(DimensionMismatch):
                embed(model, [np.ones(shape, np.uint8)])
        with self.assertRaises(DimensionMismatch):
            embed(model, [np.ones((64, 44), np.uint8), np.ones((32, 22), np.uint8)])

    def test_non_finite_embedding(self):
        with self.assertRaises(NonFiniteEmbedding):
            Embedding(np.array([[0.0, np.nan]]))
        with self.assertRaises(NonFiniteEmbedding):
            Embedding(np.array([[np.inf]]))


class BackwardTests(unittest.TestCase):

    def loss(self, model, frames, upstream):
        return float(np.sum(embed(model, frames).strips * upstream))

    def test_zero_upstream(self):
        model = init_model(TINY)
        frames = random_frames(np.random.default_rng(0), 2, binary=False)
        grads = backward(model, frames, np.zeros((TINY.strip_count, TINY.strip_dim)))
        for grad in grads.values():
            self.assertFalse(grad.any())

    def test_finite_differences(self):
        rng = np.random.default_rng(9)
        model = init_model(TINY)
        frames = random_frames(rng, 3, binary=False)
        upstream = rng.standard_normal((TINY.strip_count, TINY.strip_dim))
        grads = backward(model, frames, upstream)
        names = list(model.weights)
        eps = 1e-6
        for _ in range(24):
            name = names[int(rng.integers(len(names)))]
            weight = model.weights[name]
            index = tuple(int(rng.integers(d)) for d in weight.shape)
            original = weight[index]
            weight[index] = original + eps
            plus = self.loss(model, frames, upstream)
            weight[index] = original - eps
            minus = self.loss(model, frames, upstream)
            weight[index] = original
            numeric = (plus - minus) / (2 * eps)
            analytic = grads[name][index]
            error = abs(numeric - analytic) / max(abs(numeric) + abs(analytic), 1e-4)
            self.assertLess(error, 1e-4, f'{name}{index}: {analytic} vs {numeric}')

    def test_duplicated_frames_same_gradients(self):
        rng = np.random.default_rng(1)
        model = init_model(TINY)
        frames = random_frames(rng, 2)
        upstream = rng.standard_normal((TINY.strip_count, TINY.strip_dim))
        single = backward(model, frames, upstream)
        doubled = backward(model, frames + frames, upstream)
        for name in single:
            np.testing.assert_array_equal(single[name], doubled[name])

    def test_shape_mismatch(self):
        model = init_model(TINY)
        with self.assertRaises(ShapeMismatch):
            backward(model, random_frames(np.random.default_rng(0), 1), np.zeros(5))


class CheckpointTests(unittest.TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_roundtrip(self):
        model = init_model(ModelConfig.desk(seed=2, branches=2))
        path = self.tmp / 'model.gbm'
        save_checkpoint(path, model)
        loaded = load_checkpoint(path)
        self.assertEqual(loaded.config, model.config)
        for name, weight in model.weights.items():
            np.testing.assert_array_equal(loaded.weights[name], weight.astype(np.float32))
        self.assertEqual(dumps_model(loaded), path.read_bytes())

    def test_bad_magic(self):
        with self.assertRaises(BadMagic):
            loads_model(b'XXXX' + b'\0' * 16)
