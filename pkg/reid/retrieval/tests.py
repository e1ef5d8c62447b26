import itertools
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from gaitdata.models import EmbeddingEntry
from partialgait import settings
from partialgait.exceptions import (
    DimensionMismatch, DuplicateId, EmptyInput, IdMismatch, InvalidConfig, MissingView,
    NoPositives, NoValidQueries, ZeroVector,
)

from .aggregate import aggregate_external_features, read_frame_features
from .casia import casia_b_eval, group_views
from .fusion import fuse, fuse_stores
from .metrics import (
    average_precision, cross_camera_eval, distance_matrix, l2_normalize, top_matches,
)
from .models import CasiaMeta, GalleryEntry, GallerySet
from .reports import casia_text, metrics_json


def gallery(rows):
    return GallerySet([GalleryEntry(f't{i}', pid, cam, vec) for i, (pid, cam, vec) in enumerate(rows)])


def oracle_ap(flags):
    hits = [r for r, flag in enumerate(flags) if flag]
    return sum(sum(flags[:r + 1]) / (r + 1) for r in hits) / len(hits)


def oracle_cross_camera(rows):
    """Per-query AP and first-hit rank by explicit loops."""
    results = []
    for q, (pid, cam, vec) in enumerate(rows):
        candidates = [
            (float(np.sqrt(np.sum((np.asarray(vec) - np.asarray(other)) ** 2))), i, other_pid)
            for i, (other_pid, other_cam, other) in enumerate(rows) if other_cam != cam
        ]
        candidates.sort(key=lambda c: (c[0], c[1]))
        flags = [other_pid == pid for _, _, other_pid in candidates]
        if any(flags):
            results.append((oracle_ap(flags), flags.index(True) + 1))
    return results


class NormalizeAndFuseTests(unittest.TestCase):

    def test_normalize(self):
        np.testing.assert_allclose(l2_normalize([3, 4]), [0.6, 0.8])
        np.testing.assert_array_equal(l2_normalize([0.0, 1.0]), [0.0, 1.0])
        v = np.random.default_rng(0).standard_normal(50)
        self.assertAlmostEqual(np.linalg.norm(l2_normalize(v)), 1.0, delta=1e-12)
        with self.assertRaises(ZeroVector):
            l2_normalize([0, 0])

    def test_fuse(self):
        np.testing.assert_allclose(fuse([3, 4], [0, 5]), [0.6, 0.8, 0, 1])
        with self.assertRaises(ZeroVector):
            fuse([1, 2], [0, 0])

    def test_fused_distance_splits(self):
        rng = np.random.default_rng(1)
        a1, a2, b1, b2 = rng.standard_normal((4, 6))
        fused = np.sum((fuse(a1, b1) - fuse(a2, b2)) ** 2)
        parts = np.sum((l2_normalize(a1) - l2_normalize(a2)) ** 2) + \
            np.sum((l2_normalize(b1) - l2_normalize(b2)) ** 2)
        self.assertAlmostEqual(fused, parts, places=12)

    def test_scaling_inputs_leaves_fused_distances(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((2, 5, 4))
        base = distance_matrix([fuse(x, y) for x, y in zip(a, b)], [fuse(x, y) for x, y in zip(a, b)])
        scaled = [fuse(3.5 * x, 0.25 * y) for x, y in zip(a, b)]
        np.testing.assert_allclose(distance_matrix(scaled, scaled), base, atol=1e-12)

    def test_self_fusion_keeps_order(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((6, 4))
        plain = distance_matrix([l2_normalize(x) for x in a], [l2_normalize(x) for x in a])
        doubled = distance_matrix([fuse(x, x) for x in a], [fuse(x, x) for x in a])
        np.testing.assert_array_equal(np.argsort(plain, axis=1, kind='stable'),
                                      np.argsort(doubled, axis=1, kind='stable'))

    def test_fuse_stores(self):
        first = [EmbeddingEntry('a', [3, 4]), EmbeddingEntry('b', [1, 0])]
        second = [EmbeddingEntry('b', [0, 2]), EmbeddingEntry('a', [0, 5])]
        fused = fuse_stores(first, second)
        self.assertEqual([e.tracklet_id for e in fused], ['a', 'b'])
        np.testing.assert_allclose(fused[0].vector, [0.6, 0.8, 0, 1])
        with self.assertRaises(IdMismatch) as caught:
            fuse_stores(first, second[:1])
        self.assertEqual(caught.exception.detail['tracklet_ids'], ['a'])
        with self.assertRaises(IdMismatch):
            fuse_stores(first[:1], second)
        with self.assertRaises(DuplicateId):
            fuse_stores(first, second + second[:1])


class DistanceTests(unittest.TestCase):

    def test_cases(self):
        self.assertEqual(distance_matrix([[0.0]], [[3.0]])[0, 0], 3.0)
        points = np.random.default_rng(0).standard_normal((4, 3))
        d = distance_matrix(points, points)
        np.testing.assert_array_equal(np.diag(d), np.zeros(4))
        np.testing.assert_allclose(d, d.T)

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(5)
        queries, items = rng.standard_normal((5, 4)), rng.standard_normal((4, 4))
        d = distance_matrix(queries, items)
        for i in range(5):
            for j in range(4):
                expected = sum((queries[i, k] - items[j, k]) ** 2 for k in range(4)) ** 0.5
                self.assertAlmostEqual(d[i, j], expected, delta=1e-10)

    def test_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            distance_matrix(np.zeros((2, 3)), np.zeros((2, 4)))


class AveragePrecisionTests(unittest.TestCase):

    def test_examples(self):
        self.assertEqual(average_precision([1, 1, 1]), 1.0)
        self.assertAlmostEqual(average_precision([1, 0, 1, 0]), (1 + 2 / 3) / 2)
        self.assertAlmostEqual(average_precision([0, 0, 0, 0, 1]), 1 / 5)
        with self.assertRaises(NoPositives):
            average_precision([0, 0])

    def test_exhaustive(self):
        for length in range(1, 9):
            for flags in itertools.product((0, 1), repeat=length):
                if any(flags):
                    self.assertAlmostEqual(average_precision(flags), oracle_ap(list(flags)),
                                           delta=1e-12)


class CrossCameraTests(unittest.TestCase):

    def test_perfect_features(self):
        eye = np.eye(3)
        rows = [(str(p), cam, eye[p]) for p in range(3) for cam in ('c1', 'c2')]
        report = cross_camera_eval(gallery(rows))
        self.assertEqual(report.mAP, 1.0)
        self.assertEqual(report.ranks[1], 1.0)
        self.assertEqual((report.valid, report.excluded), (6, 0))

    def test_handcrafted_against_oracle(self):
        rows = [
            ('a', 'c1', [0.0, 0.0]), ('a', 'c2', [1.0, 0.5]),
            ('b', 'c1', [0.9, 0.4]), ('b', 'c2', [2.0, 2.0]),
            ('c', 'c1', [1.5, 1.5]), ('c', 'c2', [0.2, 0.1]),
        ]
        report = cross_camera_eval(gallery(rows))
        expected = oracle_cross_camera(rows)
        np.testing.assert_allclose([ap for _, ap in report.per_query_ap], [ap for ap, _ in expected])
        for k in (1, 5, 10):
            self.assertAlmostEqual(report.ranks[k], np.mean([r <= k for _, r in expected]))

    def test_random_against_oracle(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 50:
            rows = [(str(rng.integers(4)), f'c{rng.integers(3)}', rng.integers(0, 3, 2).astype(float))
                    for _ in range(12)]
            expected = oracle_cross_camera(rows)
            if len({cam for _, cam, _ in rows}) < 2 or not expected:
                continue
            report = cross_camera_eval(gallery(rows))
            self.assertAlmostEqual(report.mAP, np.mean([ap for ap, _ in expected]), delta=1e-12)
            self.assertEqual(report.valid, len(expected))
            self.assertEqual(report.valid + report.excluded, 12)
            for k in (1, 5, 10):
                self.assertAlmostEqual(report.ranks[k], np.mean([r <= k for _, r in expected]))
            checked += 1

    def test_same_camera_items_ignored(self):
        # the query's twin in its own camera is closer than any cross-camera match
        rows = [('a', 'c1', [0.0]), ('b', 'c1', [0.0]), ('a', 'c2', [5.0]), ('b', 'c2', [9.0])]
        report = cross_camera_eval(gallery(rows))
        self.assertEqual(dict(report.per_query_ap)['t1'], 0.5)

    def test_single_camera_identity_excluded(self):
        rows = [('a', 'c1', [0.0]), ('a', 'c2', [0.1]), ('solo', 'c1', [3.0])]
        report = cross_camera_eval(gallery(rows))
        self.assertEqual((report.valid, report.excluded), (2, 1))

    def test_errors(self):
        with self.assertRaises(NoValidQueries):
            cross_camera_eval(gallery([('a', 'c1', [0.0]), ('b', 'c2', [1.0])]))
        with self.assertRaises(InvalidConfig):
            cross_camera_eval(gallery([('a', 'c1', [0.0]), ('a', 'c1', [1.0])]))

    def test_top_matches(self):
        rows = [('a', 'c1', [0.0]), ('a', 'c2', [2.0]), ('b', 'c2', [1.0]), ('b', 'c1', [0.5])]
        matches = top_matches(gallery(rows), 0, k=5)
        self.assertEqual([m['tracklet_id'] for m in matches], ['t2', 't1'])
        self.assertEqual([m['correct'] for m in matches], [False, True])

    def test_json_report(self):
        eye = np.eye(2)
        rows = [(str(p), cam, eye[p]) for p in range(2) for cam in ('c1', 'c2')]
        data = json.loads(metrics_json(cross_camera_eval(gallery(rows)), per_query=True))
        self.assertEqual(data['rank-1'], 1.0)
        self.assertEqual(len(data['per_query_ap']), 4)


def casia_set(identities, vector_for, conditions=settings.CASIA_CONDITIONS, skip_view=None):
    features, meta = [], []
    for pid in identities:
        for condition, count in conditions.items():
            for sequence in range(1, count + 1):
                for view in settings.CASIA_VIEWS:
                    if view == skip_view and condition == 'BG':
                        continue
                    meta.append(CasiaMeta(pid, view, condition, sequence))
                    features.append(vector_for(pid, view, condition, sequence))
    return np.array(features), meta


class CasiaTests(unittest.TestCase):

    def test_perfect_features(self):
        eye = np.eye(3)
        features, meta = casia_set(['001', '002', '003'], lambda pid, *_: eye[int(pid) - 1])
        for condition in ('NM', 'BG', 'CL'):
            report = casia_b_eval(features, meta, condition)
            self.assertTrue(np.all(np.isnan(np.diag(report.matrix))))
            self.assertEqual(np.nanmin(report.matrix), 100.0)
            self.assertEqual(report.mean, 100.0)

    def test_grouping(self):
        per_view = {view: float(i) for i, view in enumerate(settings.CASIA_VIEWS)}
        frontal, oblique, lateral, mean = group_views(per_view)
        self.assertEqual(frontal, (0 + 10) / 2)
        self.assertEqual(lateral, 5.0)
        self.assertEqual(oblique, np.mean([1, 2, 3, 4, 6, 7, 8, 9]))
        self.assertEqual(mean, 5.0)

    def test_random_against_brute_force(self):
        rng = np.random.default_rng(4)
        probe_sequences = {'NM': (5, 6), 'BG': (1, 2), 'CL': (1, 2)}
        for instance in range(50):
            condition = ('NM', 'BG', 'CL')[instance % 3]
            identities = [f'{p:03d}' for p in range(1, int(rng.integers(2, 5)) + 1)]
            dim = int(rng.integers(2, 5))
            features, meta = casia_set(identities, lambda *_: rng.standard_normal(dim))
            report = casia_b_eval(features, meta, condition)
            probes = {v: [n for n, m in enumerate(meta) if m.condition == condition
                          and m.sequence in probe_sequences[condition] and m.view == v]
                      for v in settings.CASIA_VIEWS}
            items = {v: [n for n, m in enumerate(meta)
                         if m.condition == 'NM' and m.sequence <= 4 and m.view == v]
                     for v in settings.CASIA_VIEWS}
            for i, probe_view in enumerate(settings.CASIA_VIEWS):
                for j, gallery_view in enumerate(settings.CASIA_VIEWS):
                    if i == j:
                        self.assertTrue(np.isnan(report.matrix[i, j]))
                        continue
                    correct = 0
                    for p in probes[probe_view]:
                        best = min(items[gallery_view],
                                   key=lambda g: (np.linalg.norm(features[p] - features[g]), g))
                        correct += meta[best].person_id == meta[p].person_id
                    self.assertAlmostEqual(report.matrix[i, j],
                                           100.0 * correct / len(probes[probe_view]))
                self.assertAlmostEqual(report.per_view[probe_view],
                                       np.mean([report.matrix[i, j] for j in range(11) if j != i]))

    def test_missing_view(self):
        features, meta = casia_set(['001', '002'], lambda *_: np.ones(2), skip_view=90)
        with self.assertRaises(MissingView):
            casia_b_eval(features, meta, 'BG')
        casia_b_eval(features, meta, 'NM')

    def test_invalid_meta(self):
        with self.assertRaises(InvalidConfig):
            CasiaMeta('001', 45, 'NM', 1)
        with self.assertRaises(InvalidConfig):
            CasiaMeta('001', 0, 'BG', 3)

    def test_text_table(self):
        eye = np.eye(2)
        features, meta = casia_set(['001', '002'], lambda pid, *_: eye[int(pid) - 1])
        text = casia_text([casia_b_eval(features, meta, c) for c in ('NM', 'BG', 'CL')])
        self.assertIn('Frontal', text)
        self.assertIn('100.0', text)


class AggregateTests(unittest.TestCase):

    def test_single_and_constant(self):
        for mode in ('frame-mean', 'chunk-mean'):
            np.testing.assert_array_equal(
                aggregate_external_features([[1.0, 2.0]], mode, chunk_size=3), [1.0, 2.0])
            np.testing.assert_allclose(
                aggregate_external_features(np.full((5, 3), 0.7), mode, chunk_size=2), [0.7] * 3)

    def test_incomplete_chunk_dropped(self):
        frames = np.arange(7, dtype=float)[:, None]
        result = aggregate_external_features(frames, 'chunk-mean', chunk_size=3)
        self.assertEqual(result[0], ((0 + 1 + 2) / 3 + (3 + 4 + 5) / 3) / 2)

    def test_errors(self):
        with self.assertRaises(EmptyInput):
            aggregate_external_features([])
        with self.assertRaises(InvalidConfig):
            aggregate_external_features([[1.0]], 'median')

    def test_read_table(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'features.csv'
            path.write_text('tracklet_id,frame,f0,f1\nb,0,1,1\na,1,3,4\na,0,1,2\n', encoding='utf-8')
            table = read_frame_features(path)
        self.assertEqual(sorted(table), ['a', 'b'])
        np.testing.assert_array_equal(table['a'], [[1, 2], [3, 4]])
