import hashlib
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from gaitdata.serializers import parse_manifest
from partialgait.exceptions import InvalidCanvas, InvalidConfig
from silhouettes.models import PARTIAL, BodyPart

from .dataset import gen_dataset
from .generator import gen_identity, render_frame, render_sequence
from .models import RANGES, CameraSpec


def tree_digest(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob('*')):
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


class IdentityTests(unittest.TestCase):

    def test_deterministic(self):
        self.assertEqual(gen_identity(5), gen_identity(5))

    def test_ranges(self):
        for seed in range(1000):
            params = gen_identity(seed).to_dict()
            for name, (low, high) in RANGES.items():
                self.assertTrue(low <= params[name] <= high, (seed, name))
            self.assertTrue(10 <= params['period_frames'] <= 18)

    def test_amplitudes_differ(self):
        amplitudes = {gen_identity(seed).arm_amplitude for seed in range(100)}
        self.assertEqual(len(amplitudes), 100)

    def test_camera_validation(self):
        with self.assertRaises(InvalidConfig):
            CameraSpec(dropout=0.3)
        with self.assertRaises(InvalidConfig):
            CameraSpec(view='overhead')
        with self.assertRaises(InvalidConfig):
            CameraSpec(scale=0)


class RenderTests(unittest.TestCase):

    def test_static_figure(self):
        params = gen_identity(1).with_changes(arm_amplitude=0.0, leg_amplitude=0.0)
        frames = render_sequence(params, CameraSpec(), 12)
        for frame in frames[1:]:
            np.testing.assert_array_equal(frame.labels, frames[0].labels)

    def test_every_label_present(self):
        for seed in range(10):
            params = gen_identity(seed)
            for frame in render_sequence(params, CameraSpec(), params.period_frames):
                present = set(np.unique(frame.labels).tolist())
                self.assertTrue(set(range(1, 7)) <= present, (seed, present))

    def test_periodic(self):
        params = gen_identity(3)
        for view in ('frontal', 'oblique', 'lateral'):
            camera = CameraSpec(view=view)
            for t in range(params.period_frames):
                np.testing.assert_array_equal(
                    render_frame(params, camera, t).labels,
                    render_frame(params, camera, t + params.period_frames).labels)

    def test_deterministic_with_dropout(self):
        params = gen_identity(2)
        camera = CameraSpec(view='oblique', dropout=0.1, seed=9)
        a = render_sequence(params, camera, 4)
        b = render_sequence(params, camera, 4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.labels, y.labels)

    def test_mirror(self):
        params = gen_identity(4)
        plain = render_frame(params, CameraSpec(view='lateral'), 3).labels
        mirrored = render_frame(params, CameraSpec(view='lateral', mirror=True), 3).labels
        np.testing.assert_array_equal(mirrored, plain[:, ::-1])

    def test_invalid_canvas(self):
        with self.assertRaises(InvalidCanvas):
            render_frame(gen_identity(0), CameraSpec(scale=3.0), 0)
        with self.assertRaises(InvalidConfig):
            render_sequence(gen_identity(0), CameraSpec(), 0)

    def test_torso_hides_arm_swing(self):
        """Removing the torso makes the frontal foreground count swing with the arms."""
        parts = PARTIAL.as_array()
        for seed in range(20):
            params = gen_identity(seed).with_changes(arm_amplitude=1.0)
            full, partial = [], []
            for frame in render_sequence(params, CameraSpec(), params.period_frames):
                full.append(np.count_nonzero(frame.labels))
                partial.append(np.count_nonzero(np.isin(frame.labels, parts)))
            self.assertGreater(np.var(partial), np.var(full), seed)

    def test_forearm_behind_torso_is_hidden(self):
        params = gen_identity(6).with_changes(arm_amplitude=1.0)
        swing = [abs(math.sin(params.cadence * f + params.phase_offset))
                 for f in range(params.period_frames)]

        def forearm_pixels(f):
            labels = render_frame(params, CameraSpec(), f).labels
            return np.count_nonzero(labels == BodyPart.LOWER_ARMS)

        # hanging arms show both forearms, a full swing puts one behind the torso
        self.assertGreater(forearm_pixels(int(np.argmin(swing))), forearm_pixels(int(np.argmax(swing))))


class DatasetTests(unittest.TestCase):

    def test_records_and_splits(self):
        with tempfile.TemporaryDirectory() as tmp:
            records = gen_dataset(tmp, 4, tracklets_per_camera=1, frames=3, seed=1)
            self.assertEqual(len(records), 8)
            self.assertEqual(parse_manifest(Path(tmp) / 'manifest.jsonl'), records)
            for record in records:
                self.assertEqual(len(record.frames), 3)
                self.assertTrue((Path(tmp) / record.frames[0]).exists())
        by_split = {}
        for record in records:
            by_split.setdefault(record.split, set()).add(record.person_id)
        ids = [pid for pids in by_split.values() for pid in pids]
        self.assertEqual(len(ids), len(set(ids)))
        self.assertIn('train', by_split)

    def test_byte_identical_regeneration(self):
        cameras = [CameraSpec(), CameraSpec(view='lateral', dropout=0.05)]
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            gen_dataset(a, 3, cameras, frames=2, seed=7)
            gen_dataset(b, 3, cameras, frames=2, seed=7, n_jobs=2)
            self.assertEqual(tree_digest(a), tree_digest(b))

    def test_too_few_identities(self):
        with tempfile.TemporaryDirectory() as tmp, self.assertRaises(InvalidConfig):
            gen_dataset(tmp, 1)
