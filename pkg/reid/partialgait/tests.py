import contextlib
import io
import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
import yaml

from gaitdata.codecs import read_silhouette, write_mask
from gaitdata.models import EmbeddingEntry, TrackletRecord
from gaitdata.serializers import parse_manifest, write_manifest
from gaitdata.store import read_embeddings, write_embeddings
from gaitset.checkpoint import save_checkpoint
from gaitset.models import ModelConfig
from gaitset.network import init_model
from trainer.models import BatchSpec, LossConfig, TrainConfig

from . import settings
from .cli import (
    EXIT_DATA, EXIT_OK, EXIT_USAGE, checkpoint_cadence, resolve_model_config, run,
)
from .exceptions import InvalidConfig
from .experiments import run_experiment, summarize


def invoke(*args):
    """Exit code, stdout and stderr of one command line run."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = run([str(a) for a in args])
    return code, out.getvalue(), err.getvalue()


def tree_bytes(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob('*')) if p.is_file()}


class CommandLineTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.synth = cls.root / 'synth'
        code, _, err = invoke('synth', '--out', cls.synth, '--identities', 4,
                              '--tracklets-per-camera', 1, '--frames', 6, '--seed', 3)
        if code != EXIT_OK:
            raise RuntimeError(err)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_help(self):
        code, out, _ = invoke('--help')
        self.assertEqual(code, EXIT_OK)
        self.assertIn('casia-eval', out)

    def test_unknown_subcommand(self):
        code, _, err = invoke('frobnicate')
        self.assertEqual(code, EXIT_USAGE)
        self.assertEqual(json.loads(err.strip().splitlines()[-1])['error'], 'UsageError')

    def test_bad_option_value(self):
        code, _, _ = invoke('prep', '--root', self.synth, '--out', self.root / 'x',
                            '--source', 'radar')
        self.assertEqual(code, EXIT_USAGE)

    def test_root_from_environment(self):
        out_dir = self.root / 'env-prep'
        with mock.patch.dict(os.environ, {settings.DATA_ROOT_ENV: str(self.synth)}):
            code, _, err = invoke('prep', '--out', out_dir)
        self.assertEqual(code, EXIT_OK, err)
        self.assertTrue((out_dir / 'manifest.jsonl').exists())

    def test_partial_prep_drops_torso(self):
        full_dir, partial_dir = self.root / 'full', self.root / 'partial'
        self.assertEqual(invoke('prep', '--root', self.synth, '--out', full_dir)[0], EXIT_OK)
        self.assertEqual(
            invoke('prep', '--root', self.synth, '--out', partial_dir, '--parts', 'partial')[0],
            EXIT_OK)
        report = json.loads((partial_dir / 'prep_report.json').read_text())
        self.assertEqual(report['parts'], [1, 3, 4, 5, 6])

        full = {r.tracklet_id: r for r in parse_manifest(full_dir / 'manifest.jsonl')}
        for record in parse_manifest(partial_dir / 'manifest.jsonl'):
            for path in record.frames:
                # same head-to-feet extent, so the missing torso shows as fewer pixels
                partial_pixels = read_silhouette(partial_dir / path)
                full_pixels = read_silhouette(full_dir / path)
                self.assertEqual(partial_pixels.shape, (64, 44))
                self.assertLess(np.count_nonzero(partial_pixels), np.count_nonzero(full_pixels))
            self.assertEqual(len(record.frames), len(full[record.tracklet_id].frames))

    def test_data_error_is_one_json_line(self):
        store = self.root / 'broken.gbe'
        store.write_bytes(b'not an embedding store at all, just text')
        code, _, err = invoke('eval', '--manifest', self.synth / 'manifest.jsonl', '--store', store)
        self.assertEqual(code, EXIT_DATA)
        payload = json.loads(err.strip().splitlines()[-1])
        self.assertEqual(payload['error'], 'BadMagic')

    def test_config_file_sets_defaults(self):
        config = self.root / 'run.yaml'
        config.write_text(yaml.safe_dump({'synth': {'identities': 3, 'frames': 2,
                                                    'tracklets-per-camera': 1}}))
        out_dir = self.root / 'configured'
        code, _, err = invoke('--config', config, 'synth', '--out', out_dir, '--frames', 1)
        self.assertEqual(code, EXIT_OK, err)
        records = parse_manifest(out_dir / 'manifest.jsonl')
        self.assertEqual(len(records), 6)
        # flags override the file
        self.assertTrue(all(len(r.frames) == 1 for r in records))

    def test_unknown_config_section(self):
        config = self.root / 'bad.yaml'
        config.write_text(yaml.safe_dump({'trian': {'iterations': 3}}))
        code, _, err = invoke('--config', config, 'synth', '--out', self.root / 'unused')
        self.assertEqual(code, EXIT_DATA)
        self.assertEqual(json.loads(err.strip().splitlines()[-1])['error'], 'InvalidConfig')

    def test_subtract_torso(self):
        full_dir, torso_dir, out_dir = self.root / 'st-full', self.root / 'st-torso', self.root / 'st-out'
        self.assertEqual(invoke('prep', '--root', self.synth, '--out', full_dir)[0], EXIT_OK)
        band = np.zeros((64, 44), np.uint8)
        band[20:36] = 1
        full = {r.tracklet_id: r for r in parse_manifest(full_dir / 'manifest.jsonl')}
        for record in full.values():
            for path in record.frames:
                write_mask(torso_dir / path, band)

        code, _, err = invoke('prep', '--root', full_dir, '--out', out_dir, '--subtract-torso', torso_dir)
        self.assertEqual(code, EXIT_OK, err)
        records = parse_manifest(out_dir / 'manifest.jsonl')
        self.assertTrue(records)
        for record in records:
            for path in record.frames:
                source = full[record.tracklet_id].frames[int(Path(path).stem)]
                expected = read_silhouette(full_dir / source) & (1 - band)
                np.testing.assert_array_equal(read_silhouette(out_dir / path), expected)

    def misaligned_dataset(self, name):
        root = self.root / name
        pixels = np.zeros((128, 96), np.uint8)
        pixels[10:120, 30:60] = 1
        write_mask(root / 'big' / '000.pgm', pixels)
        write_manifest(root / 'manifest.jsonl',
                       [TrackletRecord('t0', 'p0', 'c0', 'test', ('big/000.pgm',))])
        return root

    def test_misaligned_silhouettes_are_data_errors(self):
        root = self.misaligned_dataset('misaligned')
        checkpoint = self.root / 'misaligned.gbm'
        save_checkpoint(checkpoint, init_model(ModelConfig.desk()))
        (self.root / 'empty-torso').mkdir(exist_ok=True)
        for args in (('embed', '--root', root, '--checkpoint', checkpoint,
                      '--out', self.root / 'misaligned.gbe'),
                     ('prep', '--root', root, '--out', self.root / 'misaligned-prep',
                      '--subtract-torso', self.root / 'empty-torso')):
            code, _, err = invoke(*args)
            self.assertEqual(code, EXIT_DATA, (args[0], err))
            self.assertEqual(json.loads(err.strip().splitlines()[-1])['error'], 'DimensionMismatch')
        self.assertFalse((self.root / 'misaligned.gbe').exists())

    def test_deterministic_reruns_are_identical(self):
        runs = []
        for name in ('run-a', 'run-b'):
            base = self.root / name
            steps = [
                ('synth', '--out', base / 'synth', '--identities', 3, '--tracklets-per-camera', 1,
                 '--frames', 3, '--seed', 9, '--n-jobs', 2, '--deterministic'),
                ('prep', '--root', base / 'synth', '--out', base / 'prep', '--parts', 'partial',
                 '--n-jobs', 2, '--deterministic'),
                ('embed', '--root', base / 'prep', '--checkpoint', base / 'model.gbm',
                 '--out', base / 'store.gbe', '--n-jobs', 2, '--deterministic'),
            ]
            save_checkpoint(base / 'model.gbm', init_model(ModelConfig.desk(seed=1)))
            for step in steps:
                before = tree_bytes(base / 'synth')
                code, _, err = invoke(*step)
                self.assertEqual(code, EXIT_OK, (step[0], err))
                if step[0] != 'synth':
                    # inputs are never touched
                    self.assertEqual(tree_bytes(base / 'synth'), before)
            runs.append(tree_bytes(base))
        self.assertEqual(sorted(runs[0]), sorted(runs[1]))
        for path, payload in runs[0].items():
            self.assertEqual(payload, runs[1][path], path)

    def test_casia_eval(self):
        manifest, store = self.root / 'casia.jsonl', self.root / 'casia.gbe'
        eye = np.eye(2)
        records, entries = [], []
        for index, pid in enumerate(('075', '076')):
            for condition, count in settings.CASIA_CONDITIONS.items():
                for sequence in range(1, count + 1):
                    for view in settings.CASIA_VIEWS:
                        tid = f'{pid}-{condition.lower()}-{sequence:02d}-{view:03d}'
                        records.append(TrackletRecord(tid, pid, f'{view:03d}', 'test',
                                                      (f'{tid}.png',), view, condition, sequence))
                        # coats make the second identity look like the first
                        wrong = condition == 'CL' and pid == '076'
                        entries.append(EmbeddingEntry(tid, eye[0] if wrong else eye[index]))
        write_manifest(manifest, records)
        write_embeddings(store, entries)

        code, out, err = invoke('casia-eval', '--manifest', manifest, '--store', store, '--json')
        self.assertEqual(code, EXIT_OK, err)
        reports = {r['condition']: r for r in json.loads(out)}
        self.assertEqual(reports['NM']['mean'], 100.0)
        self.assertEqual(reports['BG']['mean'], 100.0)
        self.assertEqual(reports['CL']['mean'], 50.0)
        self.assertIsNone(reports['CL']['matrix'][0][0])

        code, out, err = invoke('casia-eval', '--manifest', manifest, '--store', store,
                                '--conditions', 'CL')
        self.assertEqual(code, EXIT_OK, err)
        self.assertIn('Frontal', out)
        self.assertIn('50.0', out)

    def test_aggregate(self):
        table = pd.DataFrame({
            'tracklet_id': ['a', 'a', 'b', 'a', 'a', 'a'],
            'frame': [3, 0, 0, 1, 2, 4],
            'f0': [7.0, 1.0, 9.0, 3.0, 5.0, 100.0],
            'f1': [8.0, 2.0, -1.0, 4.0, 6.0, 100.0],
        })
        features, store = self.root / 'frames.csv', self.root / 'aggregated.gbe'
        table.to_csv(features, index=False)
        code, _, err = invoke('aggregate', '--features', features, '--out', store,
                              '--mode', 'chunk-mean', '--chunk-size', 2)
        self.assertEqual(code, EXIT_OK, err)
        vectors = {e.tracklet_id: e.vector for e in read_embeddings(store)}
        # frame 4 is an incomplete chunk; b is shorter than a chunk and kept whole
        np.testing.assert_allclose(vectors['a'], [4.0, 5.0])
        np.testing.assert_allclose(vectors['b'], [9.0, -1.0])

        code, _, err = invoke('aggregate', '--features', features, '--out', store,
                              '--mode', 'chunk-mean')
        self.assertEqual(code, EXIT_DATA)
        self.assertEqual(json.loads(err.strip().splitlines()[-1])['error'], 'InvalidConfig')

    def test_end_to_end(self):
        prepared = self.root / 'e2e'
        checkpoint = self.root / 'e2e.gbm'
        store = self.root / 'e2e.gbe'
        steps = [
            ('prep', '--root', self.synth, '--out', prepared),
            ('train', '--root', prepared, '--out', checkpoint, '--iterations', 2,
             '--p', 2, '--k', 2, '--c', 4, '--checkpoint-every', 1,
             '--history', self.root / 'e2e.csv'),
            ('embed', '--root', prepared, '--checkpoint', checkpoint, '--out', store),
        ]
        for step in steps:
            code, _, err = invoke(*step)
            self.assertEqual(code, EXIT_OK, (step[0], err))

        entries = read_embeddings(store)
        self.assertEqual(len(entries), len(parse_manifest(prepared / 'manifest.jsonl')))
        self.assertTrue(all(np.all(np.isfinite(e.vector)) for e in entries))

        code, out, err = invoke('eval', '--manifest', prepared / 'manifest.jsonl',
                                '--store', store, '--json', '--matches', 1)
        self.assertEqual(code, EXIT_OK, err)
        report = json.loads(out)
        self.assertTrue(0.0 <= report['mAP'] <= 1.0)
        self.assertEqual(report['valid_queries'] + report['excluded_queries'], len(entries))
        self.assertEqual(len(report['matches']), 1)

        fused = self.root / 'fused.gbe'
        code, _, err = invoke('fuse', '--first', store, '--second', store, '--out', fused)
        self.assertEqual(code, EXIT_OK, err)
        self.assertEqual(read_embeddings(fused)[0].vector.size, 2 * entries[0].vector.size)


class TrainDefaultsTests(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, data):
        path = Path(self.tmp.name) / 'model.yaml'
        path.write_text(yaml.safe_dump(data))
        return path

    def test_preset_flag(self):
        config, preset = resolve_model_config(None, 'large', 3)
        self.assertEqual((config.strip_dim, config.seed, preset), (256, 3, 'large'))
        self.assertEqual(checkpoint_cadence(preset), settings.LARGE_CHECKPOINT_EVERY)
        self.assertEqual(checkpoint_cadence('desk'), settings.CHECKPOINT_EVERY)

    def test_model_file_names_its_preset(self):
        config, preset = resolve_model_config(self.write({'preset': 'large', 'seed': 2}), 'desk', 0)
        self.assertEqual((config.branches, config.seed, preset), (2, 2, 'large'))
        self.assertEqual(checkpoint_cadence(preset), settings.LARGE_CHECKPOINT_EVERY)
        self.assertEqual(checkpoint_cadence(preset, 50), 50)

    def test_model_file_without_preset_is_desk(self):
        config, preset = resolve_model_config(self.write({'strip_dim': 16}), 'large', 0)
        self.assertEqual((config.strip_dim, preset), (16, 'desk'))
        self.assertEqual(checkpoint_cadence(preset), settings.CHECKPOINT_EVERY)

    def test_model_file_must_be_a_mapping(self):
        with self.assertRaises(InvalidConfig):
            resolve_model_config(self.write([1, 2]), 'desk', 0)


@unittest.skipUnless(os.environ.get('GAITREID_SLOW') == '1', 'set GAITREID_SLOW=1 for the experiment')
class PartialSilhouetteExperimentTests(unittest.TestCase):

    def test_partial_beats_full_on_frontal_views(self):
        with tempfile.TemporaryDirectory() as tmp:
            table = run_experiment(
                tmp, ModelConfig.desk(), BatchSpec(p=4, k=2, c=8), LossConfig(),
                TrainConfig(iterations=300, learning_rate=1e-3, checkpoint_every=100),
                seeds=(0, 1, 2, 3, 4))
            self.assertTrue((Path(tmp) / 'results.csv').exists())
        means = summarize(table).xs('mean', axis=1, level=1)
        self.assertGreater(means.loc['partial', 'rank-1'], means.loc['full', 'rank-1'])
        self.assertGreaterEqual(means.loc['partial', 'mAP'], means.loc['full', 'mAP'] + 0.02)
        # fusing must not cost more than one mAP point against the better single model
        best_single = max(means.loc['full', 'mAP'], means.loc['partial', 'mAP'])
        self.assertGreaterEqual(means.loc['fused', 'mAP'], best_single - 0.01)
