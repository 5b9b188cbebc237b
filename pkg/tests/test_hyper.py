import numpy as np
import pytest

from polytrack.hyper import ModelHyperparams, n_new_rows, new_topic_costs, popularity_log_odds


def test_defaults_per_model():
    assert ModelHyperparams.defaults("sdm").to_dict()["tau0"] == 2.0
    d = ModelHyperparams.defaults("sddm")
    assert (d.tau0, d.tau1, d.gamma0) == (4.0, 2.0, 2.0)
    d = ModelHyperparams.defaults("dm", gamma0=3.0)
    assert (d.tau1, d.gamma0) == (2.0, 3.0)


@pytest.mark.parametrize("bad", [dict(tau0=-1), dict(tau1=-0.1), dict(gamma0=0), dict(new_topic_cap_c=0),
                                 dict(saturation=0), dict(popularity_cap=0)])
def test_validation(bad):
    with pytest.raises(ValueError):
        ModelHyperparams(**bad)


def test_odds_cap_and_floor():
    h = ModelHyperparams(popularity_cap=10)
    # m = t would divide by zero; the floor keeps it finite
    assert popularity_log_odds([3], 3, h)[0] == pytest.approx(np.log(3 / 0.5))
    # counts above the cap are truncated
    assert popularity_log_odds([50], 60, h)[0] == pytest.approx(np.log(10 / 50))
    assert popularity_log_odds([0], 4, h, plus_one=True)[0] == pytest.approx(np.log(1 / 4))
    uncapped = ModelHyperparams(popularity_cap=None)
    assert popularity_log_odds([50], 60, uncapped)[0] == pytest.approx(np.log(50 / 10))


def test_new_rows_and_saturation():
    h = ModelHyperparams(saturation=5, new_topic_cap_c=1)
    assert n_new_rows(5, 3, h) == 3
    assert n_new_rows(6, 3, h) == 1
    # rows never fall below the number of estimates
    assert n_new_rows(6, 9, h) == 3
    assert n_new_rows(100, 3, ModelHyperparams(saturation=None)) == 3


def test_new_topic_costs():
    np.testing.assert_allclose(new_topic_costs(3, 1.0, 1.0, 1), 1 - np.log([1, 2, 3]))
