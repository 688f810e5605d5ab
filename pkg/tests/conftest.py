import numpy as np
import pytest

from koopgait import coder, dataio, ovs


def unbiased_acf(series):
    """Autocorrelation normalized per-lag; lags 1..n//2."""
    x = np.asarray(series, dtype=np.float64)
    x = x - x.mean()
    n = len(x)
    return np.array([np.dot(x[: n - k], x[k:]) / (n - k)
                     for k in range(1, n // 2)])


def assert_acf_peak_at(series, period):
    """The ACF must peak at `period` in the fundamental-period sense: the
    period lag beats every non-multiple lag outright, and only its own
    multiples (genuine ties for an exactly periodic signal, separated just
    by per-lag estimator noise) may match it."""
    acf = unbiased_acf(series)
    lags = np.arange(1, len(acf) + 1)
    peak = acf[period - 1]
    multiple = lags % period == 0
    assert np.all(acf[~multiple] < peak), \
        f"ACF peak not at lag {period}: argmax {lags[np.argmax(acf)]}"
    assert peak >= 0.95 * acf.max()


def identity_coder(w):
    """Coder whose ET blocks are exactly zero, so encode is the identity."""
    model = coder.init_coder(w, rng=0)
    model.et_f.weight[:] = 0.0
    model.et_g.weight[:] = 0.0
    return model


def small_cycles(w=16, n_subjects=4, cycles_per_subject=3, seed=5, noise=0.0,
                 period=12):
    spec = dataio.SyntheticSpec(n_subjects=n_subjects,
                                cycles_per_subject=cycles_per_subject,
                                period=period, w=w, noise=noise, seed=seed)
    cycles = []
    for seq in dataio.generate_synthetic_dataset(spec):
        cycles += ovs.segment_sequence(seq, period)
    return cycles


@pytest.fixture(scope="session")
def walker_cycles_w16():
    return small_cycles(w=16)


@pytest.fixture(scope="session")
def random_coder_w16():
    return coder.init_coder(16, rng=7)
