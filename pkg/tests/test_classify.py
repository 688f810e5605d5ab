import numpy as np
import pytest

from koopgait import classify, dataio
from koopgait.exceptions import (
    DimMismatchError,
    EmptyInputError,
    SingleClassError,
    UnfittedModelError,
)


def separable_samples(n_per_class=10, w=8, offset=5.0, seed=0):
    rng = np.random.default_rng(seed)
    samples = []
    for label in (0, 1):
        for _ in range(n_per_class):
            k = rng.normal(0, 0.5, (w, w)) + label * offset
            samples.append((k, label))
    return samples


class TestFitLogreg:
    def test_separable_data_perfect_training_accuracy(self):
        samples = separable_samples()
        model = classify.fit_logreg(samples)
        assert classify.rank1_accuracy(model, samples) == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            classify.fit_logreg([(np.eye(4), 3), (np.eye(4), 3)])

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            classify.fit_logreg([])

    def test_duplicating_samples_leaves_weights_unchanged(self):
        samples = separable_samples(n_per_class=5)
        a = classify.fit_logreg(samples, max_iter=300)
        b = classify.fit_logreg(samples + samples, max_iter=300)
        assert np.allclose(a.weights, b.weights, atol=1e-10)
        assert np.allclose(a.biases, b.biases, atol=1e-10)

    def test_loss_is_non_increasing(self):
        # the Armijo line search guarantees descent at every iteration
        samples = separable_samples(n_per_class=6, offset=1.0)
        model = classify.fit_logreg(samples, max_iter=200)
        trace = np.asarray(model.loss_trace)
        assert len(trace) >= 2
        assert np.all(np.diff(trace) <= 0)

    def test_one_vs_rest_flag(self):
        samples = separable_samples()
        model = classify.fit_logreg(samples, one_vs_rest=True)
        assert model.one_vs_rest
        assert classify.rank1_accuracy(model, samples) == 1.0


class TestPredict:
    def test_zero_model_uniform_probabilities(self):
        model = classify.ClassifierModel(classes=[2, 5, 9],
                                         weights=np.zeros((3, 16)),
                                         biases=np.zeros(3))
        label, probs = classify.predict(model, np.zeros((4, 4)))
        assert label == 2  # tie breaks toward the first class
        assert np.allclose(probs, 1.0 / 3)

    def test_training_samples_map_to_own_labels(self):
        samples = separable_samples()
        model = classify.fit_logreg(samples)
        for k, lab in samples:
            assert classify.predict(model, k)[0] == lab

    def test_bias_shift_invariance(self):
        samples = separable_samples(n_per_class=4)
        model = classify.fit_logreg(samples, max_iter=100)
        shifted = classify.ClassifierModel(classes=model.classes,
                                           weights=model.weights,
                                           biases=model.biases + 3.7)
        for k, _ in samples:
            assert classify.predict(model, k)[0] == classify.predict(shifted, k)[0]

    def test_positive_rescaling_invariance(self):
        samples = separable_samples(n_per_class=4)
        model = classify.fit_logreg(samples, max_iter=100)
        scaled = classify.ClassifierModel(classes=model.classes,
                                          weights=2.5 * model.weights,
                                          biases=2.5 * model.biases)
        for k, _ in samples:
            assert classify.predict(model, k)[0] == classify.predict(scaled, k)[0]

    def test_dim_mismatch(self):
        model = classify.fit_logreg(separable_samples(n_per_class=3))
        with pytest.raises(DimMismatchError):
            classify.predict(model, np.zeros((5, 5)))


class TestRank1:
    def test_constant_prediction_on_balanced_set(self):
        model = classify.ClassifierModel(classes=[0, 1, 2, 3],
                                         weights=np.zeros((4, 4)),
                                         biases=np.zeros(4))
        samples = [(np.zeros((2, 2)), lab) for lab in (0, 1, 2, 3)]
        assert classify.rank1_accuracy(model, samples) == 0.25

    def test_empty(self):
        model = classify.ClassifierModel(classes=[0, 1],
                                         weights=np.zeros((2, 4)),
                                         biases=np.zeros(2))
        with pytest.raises(EmptyInputError):
            classify.rank1_accuracy(model, [])


class TestWeightMaps:
    def test_zero_model_zero_maps(self):
        model = classify.ClassifierModel(classes=[0, 1],
                                         weights=np.zeros((2, 16)),
                                         biases=np.zeros(2))
        maps = classify.export_weight_maps(model)
        assert set(maps) == {0, 1}
        assert all(np.all(m == 0) and m.shape == (4, 4) for m in maps.values())

    def test_flatten_reshape_round_trip(self):
        rng = np.random.default_rng(1)
        weight_map = rng.random((6, 6))
        assert np.array_equal(weight_map.ravel().reshape(6, 6), weight_map)
        model = classify.ClassifierModel(classes=[0, 1],
                                         weights=np.stack([weight_map.ravel(),
                                                           -weight_map.ravel()]),
                                         biases=np.zeros(2))
        maps = classify.export_weight_maps(model)
        assert np.allclose(maps[0], np.abs(weight_map))
        assert np.allclose(maps[1], np.abs(weight_map))

    def test_unfitted_model(self):
        model = classify.ClassifierModel(classes=[0, 1], weights=None,
                                         biases=None)
        with pytest.raises(UnfittedModelError):
            classify.export_weight_maps(model)

    def test_non_square_dim_rejected(self):
        model = classify.ClassifierModel(classes=[0, 1],
                                         weights=np.zeros((2, 10)),
                                         biases=np.zeros(2))
        with pytest.raises(DimMismatchError):
            classify.export_weight_maps(model)

    def test_files_written(self, tmp_path):
        model = classify.fit_logreg(separable_samples(n_per_class=3))
        written = classify.save_weight_maps(model, tmp_path)
        assert (tmp_path / "weight_map_class0.pgm").exists()
        assert (tmp_path / "weight_map_class1.ika1").exists()
        assert len(written) == 4
        back = dataio.load_tensor(tmp_path / "weight_map_class0.ika1")
        assert back.shape == (8, 8)
        assert back.min() >= 0.0

    def test_amplitude_classes_weight_diagonal(self):
        # classes that differ only in global swing amplitude: the decision
        # weight should sit mainly on the operator diagonal
        from koopgait import koopman, ovs
        from conftest import identity_coder

        w, period = 32, 12
        samples = []
        for cls, amp in enumerate([0.26, 0.31, 0.36, 0.41]):
            params = dataio.WalkerParams(amp_left=amp, amp_right=amp * 0.75,
                                         phase=1.3)
            frames = np.stack([dataio.render_walker_frame(params, t, period, w)
                               for t in range(6 * period + period // 2)])
            seq = dataio.SilhouetteSequence(frames, f"amp{cls}", cls)
            for cyc in ovs.segment_sequence(seq, period):
                samples.append((cyc, cls))
        ident = identity_coder(w)
        ops = [(koopman.fit_closed_form(ident, cyc), lab)
               for cyc, lab in samples]
        model = classify.fit_logreg(ops)
        for weight_map in classify.export_weight_maps(model).values():
            diag_mean = np.abs(np.diag(weight_map)).mean()
            off_mean = ((np.abs(weight_map).sum()
                         - np.abs(np.diag(weight_map)).sum())
                        / (weight_map.size - w))
            assert diag_mean > off_mean
