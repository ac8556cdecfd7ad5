import unittest

import numpy as np
import torch
from torch import nn

from spectralseq import (
    ModelConfig,
    TrainConfig,
    TrajectoryDataset,
    build_crnn,
    build_fno2d,
    build_frnn,
    build_model,
    build_rnn,
    count_params,
    rollout,
)
from spectralseq.errors import ConfigError, ShapeError
from spectralseq.models import crnn_stages
from spectralseq.training import train

F64 = torch.float64


def within(value, reference, rel):
    return abs(value - reference) / reference <= rel


class LastFrameModel(nn.Module):
    """Sliding-window stub that returns the newest frame plus a constant."""

    recurrent = False

    def __init__(self, T_in, offset=0.0):
        super().__init__()
        self.config = ModelConfig(arch="fno2d", T_in=T_in, T_out=1)
        self.offset = offset

    def forward(self, window):
        return window[..., -1:] + self.offset


class CountingRecurrentModel(nn.Module):
    """Recurrent stub: output = input + 1, state counts the frames seen."""

    recurrent = True

    def __init__(self, T_in):
        super().__init__()
        self.config = ModelConfig(arch="rnn", T_in=T_in, T_out=1)
        self.seen = []

    def init_state(self, window):
        return 0

    def step(self, frame, state):
        self.seen.append(frame[0, 0, 0, 0].item())
        return frame + 1.0, state + 1


class TestParameterCounts(unittest.TestCase):
    def test_fno_reference_configuration(self):
        n = count_params(build_model(ModelConfig(arch="fno2d", width=32, modes=(16, 16), T_in=20)))
        self.assertEqual(n, 4_203_617)
        self.assertTrue(within(n, 4_203_873, 1e-3))

    def test_fno_short_window(self):
        n = count_params(build_model(ModelConfig(arch="fno2d", width=32, modes=(16, 16), T_in=10, T_out=10)))
        self.assertEqual(n, 4_203_297)
        self.assertTrue(within(n, 4_203_553, 1e-3))

    def test_frnn_reference_configuration(self):
        n = count_params(build_model(ModelConfig(arch="frnn", width=32, modes=(16, 16), T_in=20)))
        self.assertEqual(n, 4_198_689)
        self.assertTrue(within(n, 4_201_665, 1e-3))
        self.assertTrue(within(n, 4_201_345, 1e-3))

    def test_frnn_count_does_not_depend_on_window(self):
        a = count_params(build_frnn(ModelConfig(arch="frnn", width=8, modes=(2, 2), T_in=20)))
        b = count_params(build_frnn(ModelConfig(arch="frnn", width=8, modes=(2, 2), T_in=10)))
        self.assertEqual(a, b)

    def test_hand_counted_fno(self):
        # lifting 3*2+2, four layers of (2*2*2*1*1*2 + 2*2+2), projection 2*128+128 and 128+1
        cfg = ModelConfig(arch="fno2d", width=2, modes=(1, 1), T_in=1, T_out=1)
        self.assertEqual(count_params(build_fno2d(cfg)), 609)

    def test_crnn_band(self):
        small = count_params(build_crnn(ModelConfig(arch="crnn", grid=(32, 32))))
        large = count_params(build_crnn(ModelConfig(arch="crnn", grid=(64, 64))))
        self.assertEqual(small, 1_180_865)
        self.assertEqual(large, 1_385_793)
        for n in (small, large):
            self.assertTrue(1_000_000 <= n <= 1_700_000)

    def test_frozen_parameters_not_counted(self):
        model = build_frnn(ModelConfig(arch="frnn", width=4, modes=(2, 2)))
        full = count_params(model)
        model.cells[0].rx.pos.requires_grad_(False)
        self.assertEqual(count_params(model), full - model.cells[0].rx.pos.numel())


class TestConfig(unittest.TestCase):
    def test_defaults_by_arch(self):
        self.assertEqual(ModelConfig(arch="fno2d").n_layers, 4)
        self.assertEqual(ModelConfig(arch="frnn").n_layers, 2)
        self.assertEqual(ModelConfig(arch="fno2d").activation, "identity")
        self.assertEqual(ModelConfig(arch="rnn").activation, "tanh")

    def test_round_trip_dict(self):
        cfg = ModelConfig(arch="crnn", grid=(32, 32), conv_channels=[8, 16])
        self.assertEqual(ModelConfig.from_dict(cfg.to_dict()), cfg)

    def test_rejections(self):
        for kwargs in (
            {"arch": "lstm"},
            {"arch": "fno2d", "step": 2},
            {"arch": "fno2d", "T_in": 0},
            {"arch": "fno2d", "modes": (0, 4)},
            {"arch": "frnn", "width": 2},
            {"arch": "fno2d", "activation": "gelu"},
        ):
            with self.subTest(**{k: str(v) for k, v in kwargs.items()}):
                with self.assertRaises(ConfigError):
                    ModelConfig(**kwargs)

    def test_builder_arch_mismatch(self):
        with self.assertRaises(ConfigError):
            build_frnn(ModelConfig(arch="rnn"))

    def test_crnn_grid_must_reduce_to_bottleneck(self):
        self.assertEqual(crnn_stages(ModelConfig(arch="crnn", grid=(64, 64))), 4)
        with self.assertRaises(ConfigError):
            crnn_stages(ModelConfig(arch="crnn", grid=(48, 48)))
        with self.assertRaises(ConfigError):
            crnn_stages(ModelConfig(arch="crnn", grid=(4, 4)))


class TestForwardShapes(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_fno_step(self):
        model = build_fno2d(ModelConfig(arch="fno2d", width=6, modes=(3, 3), T_in=4, T_out=2))
        self.assertEqual(tuple(model(torch.zeros(2, 16, 16, 4)).shape), (2, 16, 16, 1))
        with self.assertRaises(ShapeError):
            model(torch.zeros(2, 16, 16, 3))

    def test_fno_accepts_other_resolutions(self):
        model = build_fno2d(ModelConfig(arch="fno2d", width=6, modes=(3, 3), T_in=2, T_out=2))
        self.assertEqual(tuple(model(torch.zeros(1, 32, 32, 2)).shape), (1, 32, 32, 1))

    def test_recurrent_rollouts(self):
        for arch in ("frnn", "rnn"):
            model = build_model(ModelConfig(arch=arch, width=5, modes=(2, 2), T_in=3, T_out=4))
            out = rollout(model, torch.randn(2, 8, 8, 3), T_out=4)
            self.assertEqual(tuple(out.shape), (2, 8, 8, 4))

    def test_crnn_rollout(self):
        model = build_crnn(ModelConfig(arch="crnn", grid=(16, 16), hidden=12, conv_channels=(4, 8), T_in=3, T_out=2))
        out = rollout(model, torch.randn(3, 16, 16, 3), T_out=2)
        self.assertEqual(tuple(out.shape), (3, 16, 16, 2))
        with self.assertRaises(ShapeError):
            rollout(model, torch.randn(1, 32, 32, 3), T_out=2)

    def test_dtype_follows_request(self):
        model = build_model(ModelConfig(arch="crnn", grid=(8, 8), hidden=4, conv_channels=(2,), T_in=1), dtype=F64)
        self.assertTrue(all(p.dtype == F64 for p in model.parameters()))

    def test_seed_fixes_weights(self):
        cfg = ModelConfig(arch="frnn", width=4, modes=(2, 2))
        a = build_model(cfg, seed=11).state_dict()
        b = build_model(cfg, seed=11).state_dict()
        self.assertTrue(all(torch.equal(a[k], b[k]) for k in a))


class TestRollout(unittest.TestCase):
    def test_identity_stub_repeats_last_frame(self):
        window = torch.arange(3.0).reshape(1, 1, 1, 3).expand(1, 2, 2, 3)
        out = rollout(LastFrameModel(T_in=3), window, T_out=4)
        self.assertTrue(torch.equal(out, torch.full((1, 2, 2, 4), 2.0)))

    def test_increment_stub_feeds_back(self):
        window = torch.zeros(1, 2, 2, 2)
        out = rollout(LastFrameModel(T_in=2, offset=1.0), window, T_out=3)
        self.assertEqual(out[0, 0, 0].tolist(), [1.0, 2.0, 3.0])

    def test_teacher_forcing_uses_given_frames(self):
        window = torch.zeros(1, 2, 2, 2)
        forcing = torch.full((1, 2, 2, 2), 10.0)
        out = rollout(LastFrameModel(T_in=2, offset=1.0), window, T_out=3, forcing=forcing)
        self.assertEqual(out[0, 0, 0].tolist(), [1.0, 11.0, 11.0])

    def test_recurrent_warm_up_then_feedback(self):
        model = CountingRecurrentModel(T_in=3)
        window = torch.arange(3.0).reshape(1, 1, 1, 3).expand(1, 2, 2, 3)
        out = rollout(model, window, T_out=3)
        self.assertEqual(model.seen, [0.0, 1.0, 2.0, 3.0, 4.0])
        self.assertEqual(out[0, 0, 0].tolist(), [3.0, 4.0, 5.0])

    def test_fno_two_steps_by_hand(self):
        torch.manual_seed(4)
        model = build_fno2d(ModelConfig(arch="fno2d", width=4, modes=(2, 2), T_in=3, T_out=2), dtype=F64)
        window = torch.randn(1, 8, 8, 3, dtype=F64)
        with torch.no_grad():
            p1 = model(window)
            p2 = model(torch.cat([window[..., 1:], p1], dim=-1))
            out = rollout(model, window, T_out=2)
        self.assertTrue(torch.allclose(out, torch.cat([p1, p2], dim=-1), atol=1e-12))

    def test_sliding_window_sees_only_the_newest_frames(self):
        model = LastFrameModel(T_in=2, offset=1.0)
        a = torch.zeros(1, 2, 2, 2)
        b = a.clone()
        b[..., 0] = 100.0
        self.assertTrue(torch.equal(rollout(model, a, 3), rollout(model, b, 3)))

    def test_rollout_is_repeatable(self):
        torch.manual_seed(5)
        model = build_fno2d(ModelConfig(arch="fno2d", width=4, modes=(2, 2), T_in=2, T_out=2), dtype=F64)
        base = torch.randn(1, 8, 8, 2, dtype=F64)
        with torch.no_grad():
            a = rollout(model, base, T_out=2)
            b = rollout(model, base.clone(), T_out=2)
        self.assertTrue(torch.equal(a, b))

    def test_recurrent_state_remembers_early_frames(self):
        torch.manual_seed(6)
        model = build_frnn(ModelConfig(arch="frnn", width=4, modes=(2, 2), T_in=4, T_out=1), dtype=F64)
        a = torch.randn(1, 8, 8, 4, dtype=F64)
        b = a.clone()
        b[..., 1] += 1.0
        with torch.no_grad():
            diff = (rollout(model, a, 1) - rollout(model, b, 1)).abs().max().item()
        self.assertGreater(diff, 1e-6)

    def perturbed_first_frame_rollouts(self, model, T_in, T_out):
        a = torch.randn(1, 8, 8, T_in, dtype=F64)
        b = a.clone()
        b[..., 0] += 1.0
        truth = torch.randn(1, 8, 8, T_out - 1, dtype=F64)
        with torch.no_grad():
            return rollout(model, a, T_out, forcing=truth), rollout(model, b, T_out, forcing=truth)

    def test_fno_forgets_frames_that_left_the_window(self):
        # ground-truth feedback isolates the window from earlier predictions
        torch.manual_seed(7)
        model = build_fno2d(ModelConfig(arch="fno2d", width=4, modes=(2, 2), T_in=3, T_out=6), dtype=F64)
        pa, pb = self.perturbed_first_frame_rollouts(model, T_in=3, T_out=6)
        self.assertGreater((pa[..., 0] - pb[..., 0]).abs().max().item(), 1e-8)
        self.assertTrue(torch.equal(pa[..., 1:], pb[..., 1:]))
        self.assertTrue(torch.equal(pa[..., 3:], pb[..., 3:]))

    def test_frnn_remembers_frames_beyond_any_window(self):
        torch.manual_seed(7)
        model = build_frnn(ModelConfig(arch="frnn", width=4, modes=(2, 2), T_in=3, T_out=6), dtype=F64)
        pa, pb = self.perturbed_first_frame_rollouts(model, T_in=3, T_out=6)
        for k in (3, 5):
            self.assertGreater((pa[..., k] - pb[..., k]).abs().max().item(), 1e-10, f"prediction {k}")

    def test_bad_arguments(self):
        model = LastFrameModel(T_in=2)
        with self.assertRaises(ShapeError):
            rollout(model, torch.zeros(1, 2, 2, 3), T_out=1)
        with self.assertRaises(ConfigError):
            rollout(model, torch.zeros(1, 2, 2, 2), T_out=0)
        with self.assertRaises(ShapeError):
            rollout(model, torch.zeros(1, 2, 2, 2), T_out=4, forcing=torch.zeros(1, 2, 2, 2))


class TestCRNN(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(8)
        cfg = ModelConfig(arch="crnn", grid=(16, 16), hidden=12, conv_channels=(4, 8), T_in=2, T_out=2)
        self.model = build_crnn(cfg, dtype=F64)
        with torch.no_grad():
            for name, p in self.model.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
        self.zero = torch.zeros(1, 16, 16, 1, dtype=F64)

    def test_zero_input_gives_zero_output(self):
        with torch.no_grad():
            self.assertEqual(self.model.decode(self.model.encode(self.zero)).abs().max().item(), 0.0)
            out, _ = self.model.step(self.zero, self.model.init_state(self.zero))
        self.assertEqual(tuple(out.shape), (1, 16, 16, 1))
        self.assertEqual(out.abs().max().item(), 0.0)

    def test_state_changes_only_for_nonzero_input(self):
        state = self.model.init_state(self.zero)
        with torch.no_grad():
            _, after_zero = self.model.step(self.zero, state)
            _, after_frame = self.model.step(torch.randn(1, 16, 16, 1, dtype=F64), state)
        for before, same, moved in zip(state, after_zero, after_frame):
            self.assertTrue(torch.equal(before, same))
            self.assertGreater((moved - before).abs().max().item(), 0.0)


class TestDegenerateFRNN(unittest.TestCase):
    def test_frozen_zero_spectral_weights_train_like_rnn(self):
        rnn_cfg = ModelConfig(arch="rnn", width=4, modes=(2, 2), T_in=2, T_out=2)
        frnn_cfg = ModelConfig(arch="frnn", width=4, modes=(2, 2), T_in=2, T_out=2)
        rnn = build_rnn(rnn_cfg, dtype=F64)
        torch.manual_seed(9)
        frnn = build_frnn(frnn_cfg, dtype=F64)
        missing, unexpected = frnn.load_state_dict(rnn.state_dict(), strict=False)
        self.assertEqual(unexpected, [])
        self.assertTrue(all(".rx." in k or ".rh." in k for k in missing))
        for cell in frnn.cells:
            for R in (cell.rx, cell.rh):
                with torch.no_grad():
                    R.pos.zero_()
                    R.neg.zero_()
                R.pos.requires_grad_(False)
                R.neg.requires_grad_(False)

        rng = np.random.default_rng(0)
        train_set = TrajectoryDataset(rng.normal(size=(4, 4, 8, 8)))
        test_set = TrajectoryDataset(rng.normal(size=(2, 4, 8, 8)))
        cfg = TrainConfig(epochs=5, lr=1e-2, batch_size=2, step_size=2, precision="float64")
        _, rnn_hist = train(rnn, train_set, test_set, cfg)
        _, frnn_hist = train(frnn, train_set, test_set, cfg)

        for a, b in zip(rnn_hist, frnn_hist):
            self.assertAlmostEqual(a.train_loss, b.train_loss, places=10)
            self.assertAlmostEqual(a.test_mse, b.test_mse, places=10)
        frnn_state = frnn.state_dict()
        for name, value in rnn.state_dict().items():
            self.assertTrue(torch.allclose(value, frnn_state[name], atol=1e-10), name)
        self.assertEqual(frnn.cells[0].rx.pos.abs().max().item(), 0.0)


if __name__ == "__main__":
    unittest.main()
