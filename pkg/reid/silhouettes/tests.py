import math
import unittest

import numpy as np

from partialgait.exceptions import (
    AllFramesDropped, DimensionMismatch, EmptySilhouette, InvalidConfig,
    InvalidLabelMap,
)

from .models import (
    FULL_BODY, PARTIAL, InstanceMaskSet, InstanceSource, LabelMap,
    PartSubset, PipelineConfig, SilhouetteSource,
)
from .pipeline import (
    apply_alignment, compose_silhouette, compute_alignment,
    connected_component_instances, process_tracklet, subtract_torso,
)


def reference_rescale(grid, scale):
    """Per-pixel bilinear resampling with clamped edges."""
    height, width = len(grid), len(grid[0])
    out_width = max(1, int(math.floor(width * scale + 0.5)))
    out = [[0.0] * out_width for _ in range(64)]
    for i in range(64):
        y = min(max((i + 0.5) / scale - 0.5, 0.0), height - 1)
        y0 = int(math.floor(y))
        y1 = min(y0 + 1, height - 1)
        wy = y - y0
        for j in range(out_width):
            x = min(max((j + 0.5) / scale - 0.5, 0.0), width - 1)
            x0 = int(math.floor(x))
            x1 = min(x0 + 1, width - 1)
            wx = x - x0
            out[i][j] = ((1 - wy) * ((1 - wx) * grid[y0][x0] + wx * grid[y0][x1])
                         + wy * ((1 - wx) * grid[y1][x0] + wx * grid[y1][x1]))
    return out


def person_map(height=96, width=64, top=10, arm_offset=0):
    labels = np.zeros((height, width), dtype=np.uint8)
    labels[top:top + 8, 28:36] = 1
    labels[top + 8:top + 38, 24:40] = 2
    labels[top + 10:top + 24, 20:24] = 3
    labels[top + 24:top + 34, 20 + arm_offset:24 + arm_offset] = 4
    labels[top + 38:top + 58, 25:31] = 5
    labels[top + 38:top + 58, 33:39] = 5
    labels[top + 58:top + 78, 25:31] = 6
    labels[top + 58:top + 78, 33:39] = 6
    return LabelMap(labels)


class LabelMapTests(unittest.TestCase):

    def test_rejects_out_of_range_labels(self):
        with self.assertRaises(InvalidLabelMap):
            LabelMap(np.full((4, 4), 7, dtype=np.uint8))

    def test_part_subset_parsing(self):
        self.assertEqual(PartSubset.parse('full'), FULL_BODY)
        self.assertEqual(PartSubset.parse('partial').included, frozenset({1, 3, 4, 5, 6}))
        self.assertEqual(PartSubset.parse('1,3').included, frozenset({1, 3}))
        with self.assertRaises(InvalidConfig):
            PartSubset.parse('0,1')
        with self.assertRaises(InvalidConfig):
            PartSubset(frozenset())


class ComposeSilhouetteTests(unittest.TestCase):

    def test_background_only(self):
        grid = compose_silhouette(LabelMap(np.zeros((10, 8), np.uint8)), FULL_BODY)
        self.assertFalse(grid.any())

    def test_partial_excludes_torso(self):
        labels = np.zeros((20, 20), dtype=np.uint8)
        labels[0:5, 0:10] = 2
        labels[10:13, 0:10] = 4
        grid = compose_silhouette(LabelMap(labels), PARTIAL)
        self.assertEqual(int(grid.sum()), 30)
        np.testing.assert_array_equal(grid, (labels == 4).astype(np.uint8))

    def test_largest_instance_gates_output(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 7, size=(20, 20)).astype(np.uint8)
        big = np.zeros((20, 20), bool)
        big.flat[:120] = True
        small = np.zeros((20, 20), bool)
        small.flat[200:280] = True
        instances = InstanceMaskSet((small, big), InstanceSource.EXTERNAL_FILE)
        grid = compose_silhouette(LabelMap(labels), FULL_BODY, instances)
        for r in range(20):
            for c in range(20):
                expected = 1 if (labels[r, c] > 0 and big[r, c]) else 0
                self.assertEqual(grid[r, c], expected)

    def test_equal_instances_pick_lowest_index(self):
        first = np.zeros((4, 4), bool)
        first[0, :] = True
        second = np.zeros((4, 4), bool)
        second[3, :] = True
        instances = InstanceMaskSet((first, second))
        np.testing.assert_array_equal(instances.largest(), first)

    def test_instance_size_mismatch(self):
        instances = InstanceMaskSet((np.ones((3, 3), bool),))
        with self.assertRaises(DimensionMismatch):
            compose_silhouette(LabelMap(np.ones((4, 4), np.uint8)), FULL_BODY, instances)

    def test_connected_components(self):
        labels = np.zeros((10, 10), dtype=np.uint8)
        labels[0:2, 0:2] = 1
        labels[5:9, 5:9] = 2
        labels[2, 2] = 3  # diagonal neighbour only, separate under 4-connectivity
        instances = connected_component_instances(LabelMap(labels))
        self.assertEqual(len(instances.masks), 3)
        self.assertEqual(int(instances.largest().sum()), 16)


class AlignmentTests(unittest.TestCase):

    def test_empty_grid(self):
        with self.assertRaises(EmptySilhouette):
            compute_alignment(np.zeros((64, 44), np.uint8))

    def test_canonical_identity(self):
        ones = np.ones((64, 44), dtype=np.uint8)
        frame = compute_alignment(ones)
        self.assertEqual((frame.row_top, frame.row_bottom), (0, 63))
        self.assertEqual(frame.scale, 1.0)
        self.assertEqual(frame.center_x, 21.5)
        np.testing.assert_array_equal(apply_alignment(ones, frame).pixels, ones)

    def test_canonical_silhouette_maps_to_itself(self):
        grid = np.zeros((64, 44), dtype=np.uint8)
        grid[:, 12:32] = 1
        frame = compute_alignment(grid)
        self.assertEqual(frame.center_x, 21.5)
        np.testing.assert_array_equal(apply_alignment(grid, frame).pixels, grid)

    def test_block_frame_and_output(self):
        grid = np.zeros((32, 32), dtype=np.uint8)
        grid[5:15, 10:16] = 1
        frame = compute_alignment(grid)
        self.assertEqual((frame.row_top, frame.row_bottom), (5, 14))
        self.assertAlmostEqual(frame.scale, 6.4)
        self.assertAlmostEqual(frame.center_x, 82.5)
        expected = np.zeros((64, 44), dtype=np.uint8)
        expected[:, 3:41] = 1
        np.testing.assert_array_equal(apply_alignment(grid, frame).pixels, expected)

    def test_matches_reference_resampling(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            height, width = rng.integers(6, 30), rng.integers(6, 30)
            grid = (rng.random((height, width)) < 0.5).astype(np.uint8)
            grid[0, 0] = grid[-1, -1] = 1
            frame = compute_alignment(grid)
            reference = reference_rescale(grid.tolist(), frame.scale)
            center = int(math.floor(frame.center_x + 0.5))
            output = apply_alignment(grid, frame).pixels
            for i in range(64):
                for j in range(44):
                    col = center - 22 + j
                    if 0 <= col < len(reference[0]):
                        value = reference[i][col]
                        if abs(value - 0.5) < 1e-9:
                            continue
                        self.assertEqual(output[i, j], int(value >= 0.5))
                    else:
                        self.assertEqual(output[i, j], 0)

    def test_partial_is_pixelwise_below_full(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            labels = rng.integers(0, 7, size=(40, 30)).astype(np.uint8)
            label_map = LabelMap(labels)
            full = compose_silhouette(label_map, FULL_BODY)
            frame = compute_alignment(full)
            full_sil = apply_alignment(full, frame).pixels
            partial = compose_silhouette(label_map, PARTIAL)
            try:
                partial_sil = apply_alignment(partial, frame).pixels
            except EmptySilhouette:
                continue
            self.assertTrue(np.all(partial_sil <= full_sil))

    def test_target_shape_must_match(self):
        frame = compute_alignment(np.ones((10, 10), np.uint8))
        with self.assertRaises(DimensionMismatch):
            apply_alignment(np.ones((12, 10), np.uint8), frame)


class ProcessTrackletTests(unittest.TestCase):

    def sequence(self, count=30):
        return [(person_map(top=5 + t % 4, arm_offset=t % 3), None) for t in range(count)]

    def test_full_parts_equal_full_body_processing(self):
        frames = self.sequence(5)
        result = process_tracklet(frames, PartSubset.parse('1,2,3,4,5,6'))
        for (label_map, _), silhouette in zip(frames, result.silhouettes):
            full = compose_silhouette(label_map, FULL_BODY)
            expected = apply_alignment(full, compute_alignment(full))
            np.testing.assert_array_equal(silhouette.pixels, expected.pixels)

    def test_background_frame_dropped(self):
        frames = self.sequence(3)
        frames.insert(1, (LabelMap(np.zeros((96, 64), np.uint8)), None))
        result = process_tracklet(frames, PARTIAL)
        self.assertEqual(len(result.silhouettes), 3)
        self.assertEqual([d.index for d in result.dropped], [1])
        self.assertEqual(result.dropped[0].reason, 'empty-full-body')
        self.assertEqual(result.kept, [0, 2, 3])

    def test_min_foreground_filter(self):
        labels = np.zeros((96, 64), dtype=np.uint8)
        labels[10:80, 20:40] = 2
        labels[40:42, 41:43] = 4
        with self.assertRaises(AllFramesDropped):
            process_tracklet([(LabelMap(labels), None)], PARTIAL,
                             PipelineConfig(min_foreground=1000))

    def test_deterministic(self):
        first = process_tracklet(self.sequence(), PARTIAL)
        second = process_tracklet(self.sequence(), PARTIAL, PipelineConfig(n_jobs=2))
        self.assertEqual(len(first.silhouettes), 30)
        self.assertEqual(first.stack().tobytes(), second.stack().tobytes())

    def test_partial_monotone_per_frame(self):
        frames = self.sequence(6)
        full = process_tracklet(frames, FULL_BODY)
        partial = process_tracklet(frames, PARTIAL)
        for a, b in zip(partial.silhouettes, full.silhouettes):
            self.assertTrue(np.all(a.pixels <= b.pixels))

    def test_instance_source_uses_mask(self):
        label_map = person_map()
        mask = np.zeros(label_map.shape, bool)
        mask[5:90, 10:50] = True
        instances = InstanceMaskSet((mask,), InstanceSource.EXTERNAL_FILE)
        config = PipelineConfig(source=SilhouetteSource.INSTANCE)
        result = process_tracklet([(label_map, instances)], PARTIAL, config)
        self.assertEqual(result.silhouettes[0].foreground_count, 64 * 30)


class SubtractTorsoTests(unittest.TestCase):

    def test_identity_and_annihilation(self):
        rng = np.random.default_rng(0)
        sil = (rng.random((64, 44)) < 0.4).astype(np.uint8)
        np.testing.assert_array_equal(subtract_torso(sil, np.zeros_like(sil)), sil)
        self.assertFalse(subtract_torso(sil, sil).any())

    def test_matches_pixel_loop(self):
        rng = np.random.default_rng(1)
        sil = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        torso = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        out = subtract_torso(sil, torso)
        for r in range(8):
            for c in range(8):
                self.assertEqual(out[r, c], int(sil[r, c] == 1 and torso[r, c] == 0))

    def test_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            subtract_torso(np.ones((4, 4)), np.ones((4, 5)))
