import json
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from partialgait.exceptions import (
    BadMagic, DimensionMismatch, DimMismatch, DuplicateId, LayoutError, MalformedLine, Truncated,
)
from silhouettes.models import LabelMap

from .casia import build_casia_manifest
from .codecs import (
    read_label_map, read_mask, read_silhouette, read_tracklet, write_label_map,
    write_silhouette,
)
from .models import EmbeddingEntry, TrackletRecord
from .serializers import parse_manifest, write_manifest
from .store import read_embeddings, read_header, write_embeddings


class TempDirMixin:

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp)


class ManifestTests(TempDirMixin, unittest.TestCase):

    def records(self):
        return [
            TrackletRecord('t1', 'p1', 'cam0', 'train', ('a/0.png', 'a/1.png')),
            TrackletRecord('t2', 'p2', 'cam1', 'test', ('b/0.png',), view=90,
                           condition='NM', sequence=5),
        ]

    def test_empty_file(self):
        path = self.tmp / 'empty.jsonl'
        path.write_text('')
        self.assertEqual(parse_manifest(path), [])

    def test_roundtrip_preserves_order(self):
        path = self.tmp / 'manifest.jsonl'
        write_manifest(path, self.records())
        self.assertEqual(parse_manifest(path), self.records())

    def test_missing_person_id_reports_line(self):
        path = self.tmp / 'bad.jsonl'
        good = json.dumps(self.records()[0].to_dict())
        bad = json.dumps({'tracklet_id': 'x', 'camera_id': 'c', 'split': 'train',
                          'frames': ['f.png']})
        path.write_text(good + '\n' + bad + '\n')
        with self.assertRaises(MalformedLine) as ctx:
            parse_manifest(path)
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn('person_id', ctx.exception.message)

    def test_invalid_json_reports_line(self):
        path = self.tmp / 'broken.jsonl'
        path.write_text('{not json\n')
        with self.assertRaises(MalformedLine) as ctx:
            parse_manifest(path)
        self.assertEqual(ctx.exception.line, 1)

    def test_duplicate_ids_rejected(self):
        path = self.tmp / 'dup.jsonl'
        line = json.dumps(self.records()[0].to_dict())
        path.write_text(line + '\n' + line + '\n')
        with self.assertRaises(DuplicateId):
            parse_manifest(path)


class EmbeddingStoreTests(TempDirMixin, unittest.TestCase):

    def entries(self, count=3, dim=224, seed=0):
        rng = np.random.default_rng(seed)
        return [EmbeddingEntry(f'tracklet-{i}', rng.standard_normal(dim).astype(np.float32))
                for i in range(count)]

    def test_roundtrip_is_bit_exact(self):
        path = self.tmp / 'store.gbe'
        entries = self.entries()
        write_embeddings(path, entries)
        loaded = read_embeddings(path)
        self.assertEqual([e.tracklet_id for e in loaded], [e.tracklet_id for e in entries])
        for a, b in zip(entries, loaded):
            self.assertEqual(a.vector.tobytes(), b.vector.tobytes())

    def test_header(self):
        path = self.tmp / 'store.gbe'
        write_embeddings(path, self.entries())
        self.assertEqual(read_header(path), {'version': 1, 'dim': 224, 'count': 3})

    def test_bad_magic(self):
        path = self.tmp / 'store.gbe'
        write_embeddings(path, self.entries())
        payload = bytearray(path.read_bytes())
        payload[0:4] = b'XXXX'
        path.write_bytes(bytes(payload))
        with self.assertRaises(BadMagic):
            read_embeddings(path)

    def test_truncated(self):
        path = self.tmp / 'store.gbe'
        write_embeddings(path, self.entries())
        path.write_bytes(path.read_bytes()[:-5])
        with self.assertRaises(Truncated):
            read_embeddings(path)

    def test_dims_must_agree(self):
        entries = self.entries(2, 8) + self.entries(1, 4, seed=1)
        entries[-1].tracklet_id = 'other'
        with self.assertRaises(DimMismatch):
            write_embeddings(self.tmp / 'x.gbe', entries)
        write_embeddings(self.tmp / 'y.gbe', self.entries(2, 8))
        with self.assertRaises(DimMismatch):
            read_embeddings(self.tmp / 'y.gbe', expected_dim=16)


class CodecTests(TempDirMixin, unittest.TestCase):

    def test_label_map_roundtrip(self):
        labels = np.random.default_rng(2).integers(0, 7, size=(12, 9)).astype(np.uint8)
        for name in ('map.png', 'map.pgm'):
            write_label_map(self.tmp / name, LabelMap(labels))
            np.testing.assert_array_equal(read_label_map(self.tmp / name).labels, labels)

    def test_silhouette_is_binary_p5(self):
        pixels = np.zeros((64, 44), dtype=np.uint8)
        pixels[10:50, 5:30] = 1
        path = self.tmp / 'sil.pgm'
        write_silhouette(path, pixels)
        payload = path.read_bytes()
        self.assertTrue(payload.startswith(b'P5'))
        self.assertIn(b'44 64', payload[:20])
        np.testing.assert_array_equal(read_silhouette(path), pixels)
        self.assertEqual(set(np.unique(np.frombuffer(payload[-64 * 44:], np.uint8))), {0, 255})

    def test_mask_shape_check(self):
        write_silhouette(self.tmp / 'm.png', np.ones((4, 4)))
        self.assertTrue(read_mask(self.tmp / 'm.png', (4, 4)).all())

    def test_tracklet_paths_stay_inside_root(self):
        write_silhouette(self.tmp / 's' / '000.pgm', np.ones((64, 44)))
        record = TrackletRecord('t', 'p', 'c', 'train', ['s/000.pgm'])
        self.assertEqual(read_tracklet(self.tmp, record).shape, (1, 64, 44))
        with self.assertRaises(LayoutError):
            read_tracklet(self.tmp, record.with_frames(['../outside.pgm']))

    def test_tracklet_frames_must_be_aligned(self):
        write_silhouette(self.tmp / 's' / '000.pgm', np.ones((64, 44)))
        write_silhouette(self.tmp / 's' / '001.pgm', np.ones((128, 96)))
        write_silhouette(self.tmp / 's' / '002.pgm', np.ones((64, 45)))
        for frames in (['s/001.pgm'], ['s/000.pgm', 's/002.pgm']):
            record = TrackletRecord('t', 'p', 'c', 'train', frames)
            with self.assertRaises(DimensionMismatch) as caught:
                read_tracklet(self.tmp, record)
            self.assertEqual(caught.exception.detail['tracklet_id'], 't')


class CasiaLayoutTests(TempDirMixin, unittest.TestCase):

    def make_layout(self, identities):
        for person in identities:
            for condition, count in (('nm', 6), ('bg', 2), ('cl', 2)):
                for sequence in range(1, count + 1):
                    for view in range(0, 181, 18):
                        folder = self.tmp / person / f'{condition}-{sequence:02d}' / f'{view:03d}'
                        folder.mkdir(parents=True)
                        (folder / '001.png').write_bytes(b'')

    def test_complete_layout(self):
        self.make_layout(['001', '075'])
        records = build_casia_manifest(self.tmp)
        self.assertEqual(len(records), 220)
        splits = {r.person_id: r.split for r in records}
        self.assertEqual(splits, {'001': 'train', '075': 'test'})
        self.assertEqual({r.condition for r in records}, {'NM', 'BG', 'CL'})
        self.assertEqual(len({r.view for r in records}), 11)

    def test_missing_view_named(self):
        self.make_layout(['002'])
        shutil.rmtree(self.tmp / '002' / 'bg-02' / '090')
        with self.assertRaises(LayoutError) as ctx:
            build_casia_manifest(self.tmp)
        self.assertEqual(ctx.exception.paths, ['002/bg-02/090'])
        self.assertEqual(len(build_casia_manifest(self.tmp, allow_incomplete=True)), 109)
