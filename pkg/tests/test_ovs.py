import numpy as np
import pytest

from koopgait import dataio, ovs
from koopgait.exceptions import (
    NonBinaryInputError,
    NoPeriodicityError,
    SequenceTooShortError,
    ShapeMismatchError,
)

from conftest import assert_acf_peak_at


def walker_sequences(w=32, noise=0.0, seed=7, subjects=10):
    spec = dataio.SyntheticSpec(n_subjects=subjects, cycles_per_subject=6,
                                period=12, w=w, noise=noise, seed=seed)
    return dataio.generate_synthetic_dataset(spec)


class TestSimilarity:
    def test_identical_frames_zero(self):
        f = (np.arange(16).reshape(4, 4) % 2).astype(float)
        assert ovs.similarity(f, f) == 0.0

    def test_total_mismatch_one(self):
        assert ovs.similarity(np.ones((6, 6)), np.zeros((6, 6))) == 1.0

    def test_xor_popcount_oracle(self):
        m = np.array([[1.0, 0.0], [0.0, 1.0]])
        f = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert ovs.similarity(m, f) == 0.5  # 2 mismatches / 4 pixels

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = (rng.random((8, 8)) > 0.5).astype(float)
            b = (rng.random((8, 8)) > 0.5).astype(float)
            s = ovs.similarity(a, b)
            assert s == ovs.similarity(b, a)
            assert 0.0 <= s <= 1.0
            assert (s == 0.0) == np.array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ovs.similarity(np.ones((4, 4)), np.ones((6, 6)))

    def test_non_binary_rejected(self):
        with pytest.raises(NonBinaryInputError):
            ovs.similarity(np.full((4, 4), 0.5), np.ones((4, 4)))

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(3)
        frames = (rng.random((9, 6, 6)) > 0.5).astype(float)
        mat = ovs.pairwise_similarity_matrix(frames)
        for i in range(9):
            for j in range(9):
                assert mat[i, j] == pytest.approx(
                    ovs.similarity(frames[i], frames[j]), abs=1e-12)

    def test_op_counter_within_factor_two_of_estimate(self):
        seq = walker_sequences(w=16, subjects=1)[0]
        counter = ovs.new_op_counter()
        ovs.select_benchmark(seq, 12, op_counter=counter)
        nominal = ovs.pairwise_cost_estimate(len(seq), seq.w)
        assert nominal / 2 <= counter["madds"] <= nominal * 2


class TestSelectBenchmark:
    def test_constant_sequence_ties_to_index_zero(self):
        frames = np.ones((24, 8, 8), dtype=np.float32)
        seq = dataio.SilhouetteSequence(frames, "const", 0)
        series = ovs.select_benchmark(seq, 12)
        assert series.benchmark_index == 0
        assert np.all(series.values == 0.0)

    def test_series_zero_at_benchmark(self):
        seq = walker_sequences(w=16, subjects=1)[0]
        series = ovs.select_benchmark(seq, 12)
        assert series.values[series.benchmark_index] == 0.0
        assert series.values.min() >= 0.0 and series.values.max() <= 1.0

    def test_periodic_series_on_walker(self):
        for seq in walker_sequences(w=32, subjects=4):
            series = ovs.select_benchmark(seq, 12)
            assert_acf_peak_at(series.values, 12)

    def test_length_boundary(self):
        frames = np.ones((24, 8, 8), dtype=np.float32)
        seq = dataio.SilhouetteSequence(frames, "ok", 0)
        ovs.select_benchmark(seq, 12)  # exactly 2T frames: fine
        short = dataio.SilhouetteSequence(frames[:23], "short", 0)
        with pytest.raises(SequenceTooShortError):
            ovs.select_benchmark(short, 12)


class TestFindSegments:
    def test_constant_series_no_peaks(self):
        with pytest.raises(NoPeriodicityError):
            ovs.find_segments(np.zeros(40), 12)

    def test_equal_peaks_all_kept(self):
        series = np.zeros(50)
        for p in (6, 18, 30, 42):
            series[p] = 1.0
        assert ovs.find_segments(series, 12) == [6, 18, 30, 42]

    def test_close_peaks_suppressed_by_value(self):
        # peaks at 10 (0.9) and 13 (0.8) are 3 apart: only 10 survives
        series = np.zeros(60)
        series[10] = 0.9
        series[13] = 0.8
        series[30] = 0.7
        series[45] = 0.6
        cuts = ovs.find_segments(series, 12)
        assert 10 in cuts and 13 not in cuts
        assert cuts == [10, 30, 45]

    def test_plateau_takes_leftmost(self):
        series = np.zeros(40)
        series[8:11] = 1.0   # plateau 8..10
        series[25] = 0.5
        cuts = ovs.find_segments(series, 12)
        assert cuts == [8, 25]

    def test_gap_rule(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            series = rng.random(80)
            try:
                cuts = ovs.find_segments(series, 12)
            except NoPeriodicityError:
                continue
            gaps = np.diff(cuts)
            assert np.all(gaps >= 6)

    def test_use_minima_flag(self):
        series = np.ones(40)
        for p in (6, 18, 30):
            series[p] = 0.0
        series[0] = 0.9
        assert ovs.find_segments(series, 12, use_minima=True) == [6, 18, 30]

    def test_too_short_series(self):
        with pytest.raises(SequenceTooShortError):
            ovs.find_segments(np.zeros(23), 12)


class TestExtractCycles:
    def test_boundary_arithmetic(self):
        frames = np.zeros((30, 8, 8), dtype=np.float32)
        seq = dataio.SilhouetteSequence(frames, "x", 3)
        cycles = ovs.extract_cycles(seq, [0, 12, 24], 12)
        assert [c.start_index for c in cycles] == [0, 12]
        assert all(c.frames.shape == (12, 8, 8) for c in cycles)
        assert all(c.subject_id == 3 for c in cycles)

    def test_empty_cuts(self):
        frames = np.zeros((30, 8, 8), dtype=np.float32)
        seq = dataio.SilhouetteSequence(frames, "x", 0)
        assert ovs.extract_cycles(seq, [], 12) == []

    def test_wraparound_property_on_walker(self):
        # noiseless walker: the source frame one period after a cycle start
        # equals the start frame exactly
        for seq in walker_sequences(w=16, subjects=3):
            series = ovs.select_benchmark(seq, 12)
            cuts = ovs.find_segments(series, 12)
            for cycle in ovs.extract_cycles(seq, cuts, 12):
                if cycle.start_index + 12 < len(seq):
                    assert np.array_equal(seq.frames[cycle.start_index],
                                          seq.frames[cycle.start_index + 12])


class TestEndToEndSpacing:
    def test_noiseless_spacing_exact(self):
        for seq in walker_sequences(w=32, subjects=10, seed=7):
            cycles = ovs.segment_sequence(seq, 12)
            starts = [c.start_index for c in cycles]
            assert np.all(np.diff(starts) == 12)
