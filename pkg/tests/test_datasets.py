import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np
import torch

from spectralseq import NoiseSpec, TrajectoryDataset, add_noise, batch_iter, load, make_windows, save, split
from spectralseq.datasets import HEADER
from spectralseq.errors import (
    BadMagicError,
    ConfigError,
    DatasetFormatError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)


def ramp_dataset(n_sims=5, n_frames=6, n=4, dtype=np.float64):
    frames = np.arange(n_sims * n_frames * n * n, dtype=dtype).reshape(n_sims, n_frames, n, n) / 7.0
    return TrajectoryDataset(frames, {"pde": "wave", "nu": 1.0, "seed": 3})


class TestTrajectoryDataset(unittest.TestCase):
    def test_shape_properties(self):
        ds = ramp_dataset()
        self.assertEqual((ds.n_sims, ds.n_frames, ds.grid_shape), (5, 6, (4, 4)))

    def test_rejects_bad_frames(self):
        with self.assertRaises(ShapeError):
            TrajectoryDataset(np.zeros((2, 3, 4)))
        bad = np.zeros((1, 1, 2, 2))
        bad[0, 0, 1, 1] = np.inf
        with self.assertRaises(ValueError):
            TrajectoryDataset(bad)

    def test_subsample(self):
        ds = ramp_dataset(n=8)
        half = ds.subsample(2)
        self.assertEqual(half.grid_shape, (4, 4))
        np.testing.assert_array_equal(half.frames, ds.frames[:, :, ::2, ::2])
        self.assertEqual(half.meta["subsample"], 2)
        with self.assertRaises(ConfigError):
            ds.subsample(3)

    def test_check_task(self):
        ds = ramp_dataset(n_frames=6)
        ds.check_task(4, 2)
        with self.assertRaises(ConfigError):
            ds.check_task(4, 3)


class TestNoise(unittest.TestCase):
    def test_moments(self):
        x = np.zeros(1_000_000)
        noisy = add_noise(x, NoiseSpec(0.25, seed=0))
        self.assertAlmostEqual(noisy.mean(), 0.0, delta=3e-3)
        self.assertAlmostEqual(noisy.var(), 0.25, delta=3e-3)

    def test_zero_noise_is_identity(self):
        x = np.random.default_rng(0).normal(size=(3, 4, 4))
        self.assertIs(add_noise(x, NoiseSpec(0.0, seed=9)), x)

    def test_seeded_and_typed(self):
        x = torch.zeros(2, 4, 4, 3, dtype=torch.float32)
        a = add_noise(x, NoiseSpec(1.0, seed=5))
        b = add_noise(x, NoiseSpec(1.0, seed=5))
        self.assertIsInstance(a, torch.Tensor)
        self.assertEqual(a.dtype, torch.float32)
        self.assertTrue(torch.equal(a, b))
        self.assertFalse(torch.equal(a, add_noise(x, NoiseSpec(1.0, seed=6))))

    def test_negative_variance(self):
        with self.assertRaises(ConfigError):
            NoiseSpec(-0.1)


class TestSplitAndWindows(unittest.TestCase):
    def test_split_takes_head_and_tail(self):
        ds = ramp_dataset(n_sims=5)
        train, test = split(ds, 3, 1)
        np.testing.assert_array_equal(train.frames, ds.frames[:3])
        np.testing.assert_array_equal(test.frames, ds.frames[4:])
        self.assertEqual(train.meta["split"], "train")

    def test_split_too_large(self):
        with self.assertRaises(ConfigError):
            split(ramp_dataset(n_sims=5), 4, 2)
        with self.assertRaises(ConfigError):
            split(ramp_dataset(n_sims=5), 0, 2)

    def test_windows(self):
        ds = ramp_dataset(n_sims=2, n_frames=6)
        inputs, targets = make_windows(ds.frames, 2, 3)
        self.assertEqual(inputs.shape, (2, 4, 4, 2))
        self.assertEqual(targets.shape, (2, 4, 4, 3))
        np.testing.assert_array_equal(inputs[1, :, :, 1], ds.frames[1, 1])
        np.testing.assert_array_equal(targets[0, :, :, 2], ds.frames[0, 4])
        with self.assertRaises(ConfigError):
            make_windows(ds.frames, 4, 3)


class TestBatches(unittest.TestCase):
    def test_partial_last_batch(self):
        x = torch.arange(10.0).reshape(10, 1)
        sizes = [len(bx) for bx, _ in batch_iter(x, x, batch_size=4, seed=0, epoch=0)]
        self.assertEqual(sizes, [4, 4, 2])

    def test_full_batch(self):
        x = torch.zeros(16, 2)
        batches = list(batch_iter(x, x, batch_size=16))
        self.assertEqual(len(batches), 1)
        self.assertEqual(len(batches[0][0]), 16)

    def test_every_sample_once_and_pairs_kept(self):
        x = torch.arange(10.0).reshape(10, 1)
        seen = torch.cat([bx for bx, by in batch_iter(x, 2 * x, batch_size=3, seed=1, epoch=2) if torch.equal(by, 2 * bx)])
        self.assertEqual(sorted(seen.flatten().tolist()), list(np.arange(10.0)))

    def test_order_depends_on_seed_and_epoch(self):
        x = torch.arange(32.0).reshape(32, 1)

        def order(seed, epoch):
            return torch.cat([bx for bx, _ in batch_iter(x, x, 8, seed, epoch)]).flatten().tolist()

        self.assertEqual(order(0, 0), order(0, 0))
        self.assertNotEqual(order(0, 0), order(0, 1))
        self.assertNotEqual(order(0, 0), order(1, 0))

    def test_bad_batch_size(self):
        x = torch.zeros(4, 1)
        for size in (0, 5):
            with self.assertRaises(ConfigError):
                batch_iter(x, x, batch_size=size)
        with self.assertRaises(ShapeError):
            batch_iter(x, torch.zeros(3, 1), batch_size=2)


class TestFileFormat(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        for dtype in (np.float32, np.float64):
            with self.subTest(dtype=dtype.__name__):
                ds = ramp_dataset(dtype=dtype)
                back = load(save(ds, self.dir / "d.frnn"))
                self.assertTrue(ds.equals(back))
                self.assertEqual(back.frames.dtype, dtype)

    def test_header_layout(self):
        path = save(ramp_dataset(n_sims=2, n_frames=3, n=4), self.dir / "d.frnn")
        magic, version, n_sims, n_frames, nx, ny, tag = HEADER.unpack_from(path.read_bytes())
        self.assertEqual((magic, version, n_sims, n_frames, nx, ny, tag), (b"FRNNDATA", 1, 2, 3, 4, 4, 2))

    def damaged(self, mutate):
        raw = bytearray(save(ramp_dataset(), self.dir / "good.frnn").read_bytes())
        raw = mutate(raw)
        path = self.dir / "bad.frnn"
        path.write_bytes(bytes(raw))
        return path

    def test_truncated(self):
        with self.assertRaises(TruncatedFileError):
            load(self.damaged(lambda raw: raw[: len(raw) // 2]))
        with self.assertRaises(TruncatedFileError):
            load(self.damaged(lambda raw: raw[:5]))
        with self.assertRaises(TruncatedFileError):
            load(self.damaged(lambda raw: raw[:-3]))

    def test_header_disagrees_with_payload(self):
        for n_sims in (4, 6, 50):
            def resize(raw):
                struct.pack_into("<Q", raw, 9, n_sims)
                return raw

            with self.subTest(n_sims=n_sims):
                with self.assertRaises(DatasetFormatError) as ctx:
                    load(self.damaged(resize))
                self.assertNotIsInstance(ctx.exception, TruncatedFileError)
                self.assertIn("header dimensions", str(ctx.exception))

    def test_larger_frames_than_stored(self):
        def wider(raw):
            struct.pack_into("<Q", raw, 33, 5)
            return raw

        with self.assertRaises(DatasetFormatError) as ctx:
            load(self.damaged(wider))
        self.assertNotIsInstance(ctx.exception, TruncatedFileError)

    def test_bad_magic(self):
        with self.assertRaises(BadMagicError):
            load(self.damaged(lambda raw: b"XXXXXXXX" + raw[8:]))

    def test_bad_version(self):
        def bump(raw):
            raw[8] = 2
            return raw

        with self.assertRaises(UnsupportedVersionError):
            load(self.damaged(bump))

    def test_bad_dtype_tag(self):
        def retag(raw):
            raw[HEADER.size - 1] = 9
            return raw

        with self.assertRaises(DatasetFormatError):
            load(self.damaged(retag))

    def test_trailing_garbage(self):
        with self.assertRaises(DatasetFormatError):
            load(self.damaged(lambda raw: raw + b"\x00\x00"))

    def test_malformed_metadata(self):
        def scramble(raw):
            raw[-1:] = b"!"
            return raw

        with self.assertRaises(DatasetFormatError):
            load(self.damaged(scramble))


if __name__ == "__main__":
    unittest.main()
