import numpy as np
import pytest

from contrastsurv.data_model import Scale
from contrastsurv.metrics import concordance_index
from contrastsurv.pipeline.synthetic import synthetic_cohort


def test_censor_zero_gives_all_events():
    ds, truth = synthetic_cohort(50, 10, 3, 1.0, 0.0, seed=1)
    assert np.all(ds.events == 1) and truth.censor_horizon is None


@pytest.mark.parametrize("rate", [0.2, 0.4, 0.7])
def test_censor_rate_hit(rate):
    ds, _ = synthetic_cohort(300, 10, 3, 1.0, rate, seed=2)
    assert abs((1 - ds.events.mean()) - rate) <= 0.1


def test_null_signal_constant_hazard_band():
    scores = []
    for seed in range(10):
        ds, truth = synthetic_cohort(100, 20, 3, 0.0, 0.3, seed=seed)
        assert np.all(truth.log_hazard == 0)
        scores.append(concordance_index(ds.x[:, 0], ds.times, ds.events))
        assert 0.35 <= scores[-1] <= 0.65


def test_oracle_cindex_high():
    ds, truth = synthetic_cohort(300, 50, 5, 2.0, 0.4, seed=0)
    assert concordance_index(truth.log_hazard, ds.times, ds.events) > 0.8


def test_deterministic_and_log_scale():
    a, ta = synthetic_cohort(40, 12, 2, 1.5, 0.3, seed=9)
    b, tb = synthetic_cohort(40, 12, 2, 1.5, 0.3, seed=9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.times, b.times)
    assert a.expression.scale is Scale.LOG2 and np.all(a.x >= 0)
    assert abs(np.linalg.norm(ta.beta) - 1) < 1e-12


def test_shared_geometry():
    _, ta = synthetic_cohort(30, 12, 2, 1.0, 0.3, seed=1)
    _, tb = synthetic_cohort(30, 12, 2, 1.0, 0.3, seed=2, mixing=ta.mixing, beta=ta.beta)
    assert np.array_equal(ta.mixing, tb.mixing)


def test_errors():
    with pytest.raises(ValueError):
        synthetic_cohort(10, 3, 4, 1.0, 0.3, seed=0)
    with pytest.raises(ValueError):
        synthetic_cohort(10, 3, 2, 1.0, 1.0, seed=0)
