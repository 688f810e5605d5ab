import numpy as np
import pytest

from koopgait import koopman, training
from koopgait.exceptions import (
    BadSpecError,
    EmptyInputError,
    InconsistentShapesError,
)

from conftest import small_cycles


def quick_cfg(**kw):
    base = dict(epochs=60, seed=11, batch_size=4)
    base.update(kw)
    return training.TrainConfig(**base)


class TestTrainConfig:
    def test_defaults_match_published_table(self):
        cfg = training.TrainConfig()
        assert cfg.batch_size == 4
        assert cfg.lr == pytest.approx(1e-3)
        assert cfg.epochs == 2000
        assert cfg.loss_weights == (0.0, 1.0, 0.0)

    def test_invalid_configs(self):
        with pytest.raises(BadSpecError):
            training.TrainConfig(lr=0).validate()
        with pytest.raises(BadSpecError):
            training.TrainConfig(epochs=0).validate()
        with pytest.raises(BadSpecError):
            training.TrainConfig(loss_weights=(0, 0, 0)).validate()
        with pytest.raises(BadSpecError):
            training.TrainConfig(loss_weights=(1, -1, 0)).validate()

    def test_k_init_default_is_scaled(self):
        assert training.default_k_init(64) == (1.0 / 64, 2.0 / 64)
        assert training.default_k_init(64, mode="paper") == (1.0, 2.0)
        with pytest.raises(BadSpecError):
            training.default_k_init(64, mode="bogus")


class TestStackCycles:
    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            training.stack_cycles([])

    def test_inconsistent_shapes(self):
        with pytest.raises(InconsistentShapesError):
            training.stack_cycles([np.zeros((3, 4, 4)), np.zeros((3, 6, 6))])


class TestTrainCoder:
    def test_deterministic_given_seed(self, walker_cycles_w16):
        a = training.train_coder(walker_cycles_w16, quick_cfg(epochs=8))
        b = training.train_coder(walker_cycles_w16, quick_cfg(epochs=8))
        for pa, pb in zip(a[0].parameters().values(), b[0].parameters().values()):
            assert np.array_equal(pa, pb)
        assert np.array_equal(a[1], b[1])
        assert a[2].loss1 == b[2].loss1

    def test_loss_decreases(self, walker_cycles_w16):
        _, _, trace = training.train_coder(walker_cycles_w16,
                                           quick_cfg(epochs=100))
        assert trace.loss1[-1] <= 0.1 * trace.loss1[0]

    def test_loss0_reported_and_tiny(self, walker_cycles_w16):
        _, _, trace = training.train_coder(walker_cycles_w16,
                                           quick_cfg(epochs=10))
        assert len(trace.loss0) == 10
        assert max(trace.loss0) <= 1e-8
        assert len(trace.seconds) == len(trace.total) == 10

    def test_all_loss_weight_combinations_run(self, walker_cycles_w16):
        # the ablation grid: any combination with at least one active loss
        for weights in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0),
                        (1, 0, 1), (0, 1, 1), (1, 1, 1)]:
            _, _, trace = training.train_coder(
                walker_cycles_w16[:4], quick_cfg(epochs=2,
                                                 loss_weights=weights))
            assert np.isfinite(trace.total).all()
            assert max(trace.loss0) <= 1e-8

    def test_fixed_point_cycles_crush_loss(self):
        frames = np.stack([small_cycles(w=16)[0].frames[0]] * 12)
        cycles = [frames.copy() for _ in range(8)]
        _, _, trace = training.train_coder(
            cycles, quick_cfg(epochs=500, lr=3e-3, seed=2))
        assert trace.loss1[-1] <= 1e-4 * trace.loss1[0]

    def test_coder_frozen_after_training(self, walker_cycles_w16):
        model, _, _ = training.train_coder(walker_cycles_w16,
                                           quick_cfg(epochs=2))
        assert not model.training_mode


class TestFitAllMatrices:
    def test_paths_agree_on_linear_cycles(self):
        from test_koopman import linear_cycles

        cycles = linear_cycles(seed=2, n=8)
        proto = koopman.fit_closed_form_pooled(None, cycles)
        from conftest import identity_coder

        ident = identity_coder(16)
        gd = training.fit_all_matrices(ident, proto, cycles, method="gd")
        cf = training.fit_all_matrices(ident, proto, cycles, method="analytic")
        for (i, kg), (j, kc) in zip(gd, cf):
            assert i == j
            assert np.linalg.norm(kg - kc) / np.linalg.norm(kc) <= 1e-3

    def test_identical_cycles_identical_operators(self, random_coder_w16,
                                                  walker_cycles_w16):
        c = walker_cycles_w16[0]
        out = training.fit_all_matrices(random_coder_w16, None, [c, c],
                                        method="analytic")
        assert np.array_equal(out[0][1], out[1][1])

    def test_empty_list(self, random_coder_w16):
        assert training.fit_all_matrices(random_coder_w16, np.eye(16), [],
                                         method="gd") == []

    def test_gd_requires_prototype(self, random_coder_w16, walker_cycles_w16):
        with pytest.raises(BadSpecError):
            training.fit_all_matrices(random_coder_w16, None,
                                      walker_cycles_w16, method="gd")

    def test_unknown_method(self, random_coder_w16, walker_cycles_w16):
        with pytest.raises(BadSpecError):
            training.fit_all_matrices(random_coder_w16, np.eye(16),
                                      walker_cycles_w16, method="magic")


class TestWarmStart:
    def test_prototype_not_slower_than_random_init(self, walker_cycles_w16):
        # epochs to close 95% of the random-init loss gap: the trained
        # prototype should not need more than a cold random start (median
        # over the cycle set)
        model, proto, _ = training.train_coder(walker_cycles_w16,
                                               quick_cfg(epochs=80))
        rng = np.random.default_rng(9)
        wins = []
        for cycle in walker_cycles_w16:
            emb = koopman.encode_cycle(model, cycle)
            loss_min = koopman.loss1_from_embedding(
                emb, koopman.fit_closed_form(model, cycle))
            cold = rng.normal(1.0 / 16, 2.0 / 16, (16, 16))
            _, warm_trace = koopman.fit_gradient_descent(
                model, cycle, proto, return_trace=True)
            _, cold_trace = koopman.fit_gradient_descent(
                model, cycle, cold, return_trace=True)
            target = loss_min + 0.05 * (cold_trace[0] - loss_min)

            def first_at(trace):
                for i, v in enumerate(trace):
                    if v <= target:
                        return i
                return len(trace)

            wins.append(first_at(warm_trace) - first_at(cold_trace))
        assert np.median(wins) <= 0
