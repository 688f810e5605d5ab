import numpy as np
import pytest

from koopgait import coder
from koopgait.exceptions import (
    DimMismatchError,
    NonFiniteLossError,
    OddResolutionError,
)

from conftest import identity_coder


def randomized_coder(w, seed, dtype=np.float64):
    rng = np.random.default_rng(seed)
    model = coder.init_coder(w, rng=rng, dtype=dtype)
    for blk in (model.et_f, model.et_g):
        blk.bn_gamma[:] = rng.uniform(0.5, 1.5, blk.half)
        blk.bn_beta[:] = rng.normal(0.0, 0.5, blk.half)
        blk.bn_mean[:] = rng.normal(0.0, 1.0, blk.half)
        blk.bn_var[:] = rng.uniform(0.5, 2.0, blk.half)
        blk.bias[:] = rng.normal(0.0, 0.2, blk.half)
    return model


class TestCheckerboard:
    def test_parity_definition_w2(self):
        u1, u2 = coder.checkerboard_split(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert u1.tolist() == [1.0, 4.0]
        assert u2.tolist() == [2.0, 3.0]

    def test_split_merge_round_trip(self):
        rng = np.random.default_rng(0)
        for w in (2, 4, 8, 16):
            frame = rng.random((w, w))
            u1, u2 = coder.checkerboard_split(frame)
            assert u1.shape == u2.shape == (w * w // 2,)
            assert np.array_equal(coder.checkerboard_merge(u1, u2, w), frame)

    def test_all_ones(self):
        u1, u2 = coder.checkerboard_split(np.ones((64, 64)))
        assert u1.shape == (2048,) and u2.shape == (2048,)
        assert np.all(u1 == 1.0) and np.all(u2 == 1.0)

    def test_odd_resolution_rejected(self):
        with pytest.raises(OddResolutionError):
            coder.checkerboard_split(np.ones((5, 5)))


class TestEtApply:
    def test_identity_configuration(self):
        model = identity_coder(4)
        blk = model.et_f
        blk.weight[:] = np.eye(blk.half)
        x = np.arange(blk.half, dtype=float)
        assert np.allclose(coder.et_apply(blk, x), x, atol=1e-12)

    def test_zero_weight_constant_output(self):
        model = identity_coder(4)
        blk = model.et_f
        blk.bias[:] = np.arange(blk.half, dtype=float)
        rng = np.random.default_rng(1)
        out1 = coder.et_apply(blk, rng.random(blk.half))
        out2 = coder.et_apply(blk, rng.random(blk.half))
        assert np.allclose(out1, blk.bias) and np.allclose(out2, blk.bias)

    def test_affinity_in_eval_mode(self):
        # out(2x) - out(x) == gamma * (W x) / sqrt(var + eps), exactly the
        # linear part of the eval-mode map
        model = randomized_coder(4, seed=3)
        blk = model.et_f
        rng = np.random.default_rng(4)
        x = rng.random(blk.half)
        diff = coder.et_apply(blk, 2 * x) - coder.et_apply(blk, x)
        expected = blk.bn_gamma * (blk.weight @ x) / np.sqrt(blk.bn_var + blk.bn_eps)
        assert np.allclose(diff, expected, atol=1e-10)

    def test_dim_mismatch(self):
        model = identity_coder(4)
        with pytest.raises(DimMismatchError):
            coder.et_apply(model.et_f, np.ones(5))


class TestEncodeDecode:
    def test_zero_ets_are_identity(self):
        model = identity_coder(8)
        rng = np.random.default_rng(5)
        x = rng.random((8, 8))
        assert np.allclose(coder.encode(model, x), x, atol=1e-12)
        assert np.allclose(coder.decode(model, x), x, atol=1e-12)

    def test_hand_evaluated_w2_coupling(self):
        # f = identity ET, g = 0: u1=(1,1), u2=(0,0), y1=u1+f(u2)=u1,
        # y2=u2, so the frame is unchanged
        model = identity_coder(2)
        model.et_f.weight[:] = np.eye(2)
        frame = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = coder.encode(model, frame)
        assert np.allclose(out, frame, atol=1e-12)

    def test_round_trip_float64(self):
        model = randomized_coder(8, seed=7)
        rng = np.random.default_rng(8)
        x = rng.random((5, 8, 8))
        rec = coder.decode(model, coder.encode(model, x))
        assert np.abs(rec - x).max() <= 1e-10

    def test_round_trip_float32(self):
        model = randomized_coder(8, seed=9, dtype=np.float32)
        rng = np.random.default_rng(10)
        x = rng.random((5, 8, 8)).astype(np.float32)
        rec = coder.decode(model, coder.encode(model, x))
        assert np.abs(rec - x).max() <= 1e-5

    def test_surjectivity_direction(self):
        model = randomized_coder(8, seed=11)
        rng = np.random.default_rng(12)
        y = rng.normal(0, 2, (4, 8, 8))
        back = coder.encode(model, coder.decode(model, y))
        assert np.abs(back - y).max() <= 1e-10

    def test_dim_mismatch(self):
        model = randomized_coder(8, seed=13)
        with pytest.raises(DimMismatchError):
            coder.encode(model, np.ones((6, 6)))


class TestParameterCount:
    def test_trainable_count_formula(self):
        for w in (4, 8, 16):
            half = w * w // 2
            model = coder.init_coder(w, rng=0)
            assert model.num_trainable() == 2 * (half * half + 3 * half)


class TestCheckpoint:
    def test_save_load_round_trip(self, tmp_path):
        model = randomized_coder(8, seed=20)
        coder.save_coder(model, tmp_path / "coder")
        back = coder.load_coder(tmp_path / "coder")
        assert back.w == 8
        assert not back.training_mode
        rng = np.random.default_rng(21)
        x = rng.random((3, 8, 8))
        # float32 storage: the reloaded map matches to float32 precision
        assert np.abs(coder.encode(back, x) - coder.encode(model, x)).max() < 1e-4
        rec = coder.decode(back, coder.encode(back, x))
        assert np.abs(rec - x).max() <= 1e-10


def relative_grad_errors(model, cycles, k, weights, step=1e-4, n_probe=30):
    """Max relative error per parameter tensor between analytic gradients
    and central finite differences; the floor is scaled to the largest
    gradient entry so zero-gradient tensors (the dense biases, which
    train-mode batch norm cancels exactly) compare against noise honestly."""
    losses, grads, _ = coder.coupled_losses(model, cycles, k, weights,
                                            want_grads=True)
    params = dict(model.parameters())
    params["k"] = k

    def total():
        ls, _, _ = coder.coupled_losses(model, cycles, k, weights,
                                        want_grads=False)
        return weights[0] * ls[0] + weights[1] * ls[1] + weights[2] * ls[2]

    global_scale = max(np.abs(g).max() for g in grads.values())
    rng = np.random.default_rng(0)
    errors = {}
    for name, arr in params.items():
        flat = arr.ravel()
        idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        numeric = np.zeros(len(idx))
        for j, i in enumerate(idx):
            keep = flat[i]
            flat[i] = keep + step
            up = total()
            flat[i] = keep - step
            down = total()
            flat[i] = keep
            numeric[j] = (up - down) / (2 * step)
        analytic = grads[name].ravel()[idx]
        denom = max(np.abs(analytic).max(), np.abs(numeric).max(),
                    1e-6 * global_scale)
        errors[name] = np.abs(analytic - numeric).max() / denom
    return errors


class TestGradients:
    def test_matches_finite_differences_training_mode(self):
        rng = np.random.default_rng(42)
        model = randomized_coder(8, seed=42).train()
        cycles = rng.random((2, 3, 8, 8))
        k = rng.normal(0, 0.3, (8, 8)) + np.eye(8)
        errors = relative_grad_errors(model, cycles, k, (0.4, 1.0, 0.7))
        assert max(errors.values()) <= 1e-4, errors

    def test_matches_finite_differences_eval_mode(self):
        rng = np.random.default_rng(43)
        model = randomized_coder(8, seed=43)
        cycles = rng.random((1, 3, 8, 8))
        k = rng.normal(0, 0.3, (8, 8))
        errors = relative_grad_errors(model, cycles, k, (0.2, 1.0, 0.5))
        assert max(errors.values()) <= 1e-4, errors

    def test_zero_loss1_gives_zero_gradients(self):
        # build a cycle that satisfies enc(G_{t+1}) = K enc(G_t) exactly:
        # rotation blocks with K^T = I close the wraparound
        w, t_len = 8, 4
        model = randomized_coder(w, seed=44)
        angle = 2 * np.pi / t_len
        k = np.eye(w)
        for i in range(w // 2):
            c, s = np.cos(angle), np.sin(angle)
            k[2 * i:2 * i + 2, 2 * i:2 * i + 2] = [[c, -s], [s, c]]
        rng = np.random.default_rng(45)
        emb = [rng.normal(0, 1, (w, w))]
        for _ in range(t_len - 1):
            emb.append(k @ emb[-1])
        frames = coder.decode(model, np.stack(emb))
        _, grads, _ = coder.coupled_losses(model, frames[None], k,
                                           (0.0, 1.0, 0.0), want_grads=True)
        scale = np.abs(k).max()
        for name, g in grads.items():
            assert np.abs(g).max() <= 1e-8 * scale, name

    def test_loss1_k_gradient_symbolic(self):
        # d loss1 / dK = sum_t (K X_t - X_{t+1}) X_t^T on a frozen coder
        rng = np.random.default_rng(46)
        model = randomized_coder(8, seed=46)
        frames = rng.random((1, 5, 8, 8))
        k = rng.normal(0, 0.5, (8, 8))
        _, grads, _ = coder.coupled_losses(model, frames, k, (0.0, 1.0, 0.0),
                                           want_grads=True)
        emb = coder.encode(model, frames[0])
        res = np.matmul(k, emb) - np.roll(emb, -1, axis=0)
        expected = np.einsum("tij,tkj->ik", res, emb)
        assert np.allclose(grads["k"], expected, rtol=1e-10, atol=1e-10)

    def test_non_finite_loss_raises(self):
        model = randomized_coder(4, seed=47)
        frames = np.full((1, 2, 4, 4), np.inf)
        with pytest.raises(NonFiniteLossError):
            coder.coupled_losses(model, frames, np.eye(4), (0, 1, 0))

    def test_coder_backward_covers_all_parameters(self):
        rng = np.random.default_rng(48)
        model = randomized_coder(4, seed=48).train()
        frames = rng.random((1, 3, 4, 4))
        grads = coder.coder_backward(model, frames, np.eye(4), (0.5, 1.0, 0.5))
        assert set(grads) == set(coder.PARAM_KEYS) | {"k"}
        assert all(np.all(np.isfinite(g)) for g in grads.values())


class TestLossIdentities:
    def test_loss0_is_structurally_zero(self):
        rng = np.random.default_rng(50)
        for seed in range(5):
            model = randomized_coder(8, seed=seed)
            frames = rng.random((1, 4, 8, 8))
            (l0, _, _), _, _ = coder.coupled_losses(model, frames, np.eye(8),
                                                    (1, 1, 1), want_grads=False)
            assert l0 <= 1e-8

    def test_loss1_zero_implies_loss2_zero(self):
        w, t_len = 8, 4
        model = randomized_coder(w, seed=51)
        angle = 2 * np.pi / t_len
        k = np.eye(w)
        for i in range(w // 2):
            c, s = np.cos(angle), np.sin(angle)
            k[2 * i:2 * i + 2, 2 * i:2 * i + 2] = [[c, -s], [s, c]]
        rng = np.random.default_rng(52)
        emb = [rng.normal(0, 1, (w, w))]
        for _ in range(t_len - 1):
            emb.append(k @ emb[-1])
        frames = coder.decode(model, np.stack(emb))
        (l0, l1, l2), _, _ = coder.coupled_losses(model, frames[None], k,
                                                  (1, 1, 1), want_grads=False)
        assert l0 <= 1e-8
        assert l1 <= 1e-8
        assert l2 <= 1e-6
