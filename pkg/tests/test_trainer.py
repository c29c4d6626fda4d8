import numpy as np
import pytest

import semhash.trainer as trainer_mod
from semhash.benchmark import balanced_taxonomy
from semhash.data import RngState, generate_synthetic
from semhash.errors import ConfigError, DivergedLoss, ShapeMismatch
from semhash.model import checkpoint_bytes
from semhash.trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    apply_variant,
    format_config,
    parse_config,
    train,
)


class TestAdamStep:
    def test_first_step_closed_form(self):
        g = np.array([0.3, -2.0, 1e-4])
        p = np.zeros(3)
        state = AdamState.zeros_like([p])
        lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
        (new_p,), _ = adam_step([p], [g], state, 1, lr, b1, b2, eps)
        # bias correction makes m_hat = g and v_hat = g^2 at step one
        expected = -lr * g / (np.abs(g) + eps)
        np.testing.assert_allclose(new_p, expected, rtol=1e-12)

    def test_zero_gradient_keeps_params_and_decays_moments(self):
        p = np.array([1.0, -2.0])
        state = AdamState(m=[np.array([0.5, 0.5])], v=[np.array([0.25, 0.25])])
        (new_p,), new_state = adam_step([p], [np.zeros(2)], state, 3, 0.0, 0.9, 0.999, 1e-8)
        np.testing.assert_array_equal(new_p, p)  # lr 0 isolates the moment update
        np.testing.assert_allclose(new_state.m[0], 0.9 * 0.5)
        np.testing.assert_allclose(new_state.v[0], 0.999 * 0.25)
        fresh = AdamState.zeros_like([p])
        (same_p,), _ = adam_step([p], [np.zeros(2)], fresh, 1, 1e-3, 0.9, 0.999, 1e-8)
        np.testing.assert_array_equal(same_p, p)

    def test_three_step_scalar_trace_matches_hand_unroll(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        grads = [0.4, -0.2, 0.1]
        p = np.array([0.5])
        state = AdamState.zeros_like([p])
        for t, g in enumerate(grads, start=1):
            (p,), state = adam_step([p], [np.array([g])], state, t, lr, b1, b2, eps)
        # independent unroll of the recurrence
        theta, m, v = 0.5, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert p[0] == pytest.approx(theta, rel=1e-14)

    def test_shape_mismatch(self):
        state = AdamState.zeros_like([np.zeros(2)])
        with pytest.raises(ShapeMismatch):
            adam_step([np.zeros(2)], [np.zeros(3)], state, 1, 1e-3, 0.9, 0.999, 1e-8)


class TestConfig:
    def test_roundtrip_through_text(self):
        cfg = TrainConfig(code_length=8, hidden_sizes=(32, 16), lambda2=0.0, variant="shrewd",
                          seed=17, epochs=3)
        assert parse_config(format_config(cfg)) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("code_length = 8\nbogus = 1\n")

    def test_variant_consistency_enforced(self):
        with pytest.raises(ConfigError):
            TrainConfig(variant="shrewd", lambda2=0.5)
        with pytest.raises(ConfigError):
            TrainConfig(variant="shred", lambda2=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(variant="other")

    def test_batch_size_floor(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=1)

    def test_apply_variant_forces_lambda2(self):
        cfg = TrainConfig()
        forced, warning = apply_variant(cfg, "shrewd")
        assert forced.lambda2 == 0.0
        assert forced.variant == "shrewd"
        assert warning is not None


def tiny_setup(seed=0, epochs=4):
    tax = balanced_taxonomy((4, 2))  # 8 leaves
    ds = generate_synthetic(tax, per_class=8, dim=8, diffusion=1.0, noise=0.3,
                            rng=RngState.from_seed(100 + seed))
    cfg = TrainConfig(
        code_length=8, hidden_sizes=(16,), batch_size=8, epochs=epochs,
        learning_rate=1e-3, seed=seed,
    )
    return tax, ds, cfg


class TestTrain:
    def test_same_seed_gives_bit_identical_checkpoints(self):
        tax, ds, cfg = tiny_setup()
        e1, c1, log1 = train(cfg, ds, tax)
        e2, c2, log2 = train(cfg, ds, tax)
        assert checkpoint_bytes(e1, c1) == checkpoint_bytes(e2, c2)
        assert log1.params_digest == log2.params_digest
        assert log1.to_csv() == log2.to_csv()

    def test_loss_decreases_over_training(self):
        # mean total over the final 10 steps beats the first 10, every seed
        tax = balanced_taxonomy((4, 2))
        for seed in range(5):
            ds = generate_synthetic(tax, per_class=8, dim=8, diffusion=1.0, noise=0.3,
                                    rng=RngState.from_seed(200 + seed))
            cfg = TrainConfig(code_length=8, hidden_sizes=(16,), batch_size=8,
                              epochs=50, learning_rate=1e-3, seed=seed)
            _, _, log = train(cfg, ds, tax)
            totals = [r.total for r in log.records]
            assert np.mean(totals[-10:]) < np.mean(totals[:10])

    def test_component_accounting_identity(self):
        tax, ds, cfg = tiny_setup()
        _, _, log = train(cfg, ds, tax)
        for r in log.records:
            assert r.total == r.sim + cfg.lambda1 * r.kl + cfg.lambda2 * r.cls

    def test_step_counter_and_record_count(self):
        tax, ds, cfg = tiny_setup(epochs=3)
        _, _, log = train(cfg, ds, tax)
        steps_per_epoch = ds.n_samples // cfg.batch_size
        assert [r.step for r in log.records] == list(range(1, 3 * steps_per_epoch + 1))

    def test_ragged_batch_dropped(self):
        tax = balanced_taxonomy((4, 2))
        ds = generate_synthetic(tax, per_class=9, dim=8, diffusion=1.0, noise=0.3,
                                rng=RngState.from_seed(5))  # 72 samples
        cfg = TrainConfig(code_length=8, hidden_sizes=(16,), batch_size=16, epochs=1,
                          learning_rate=1e-3, seed=0)
        _, _, log = train(cfg, ds, tax)
        assert len(log.records) == 72 // 16

    def test_dataset_smaller_than_batch_rejected(self):
        tax, ds, cfg = tiny_setup()
        small = type(ds)(features=ds.features[:4], labels=ds.labels[:4],
                         label_universe=ds.label_universe)
        cfg2 = TrainConfig(**{**cfg.__dict__, "batch_size": 8})
        with pytest.raises(ConfigError):
            train(cfg2, small, tax)

    def test_diverged_loss_aborts_with_step_info(self, monkeypatch):
        tax, ds, cfg = tiny_setup()
        real = trainer_mod.total_loss

        def poisoned(*args, **kwargs):
            out = real(*args, **kwargs)
            out.total = float("nan")
            return out

        monkeypatch.setattr(trainer_mod, "total_loss", poisoned)
        with pytest.raises(DivergedLoss, match="step 1"):
            train(cfg, ds, tax)

    def test_nonfinite_params_abort(self, monkeypatch):
        tax, ds, cfg = tiny_setup()
        real = trainer_mod.adam_step

        def poisoned(params, *args, **kwargs):
            new_params, state = real(params, *args, **kwargs)
            new_params[0] = new_params[0].copy()
            new_params[0].flat[0] = np.inf
            return new_params, state

        monkeypatch.setattr(trainer_mod, "adam_step", poisoned)
        with pytest.raises(DivergedLoss, match="non-finite"):
            train(cfg, ds, tax)

    def test_csv_header_and_shape(self):
        tax, ds, cfg = tiny_setup(epochs=1)
        _, _, log = train(cfg, ds, tax)
        lines = log.to_csv().splitlines()
        assert lines[0] == "step,sim,kl,cls,total"
        assert len(lines) == 1 + len(log.records)
