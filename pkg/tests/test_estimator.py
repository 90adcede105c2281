import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mvmdp.estimator import MeasureMDPApproximator
from mvmdp.library import get_model, switch_grid
from mvmdp.core_model import ActionGrid
from mvmdp.mdp_build import build
from mvmdp.solver import value_iteration


def test_params_and_clone():
    est = MeasureMDPApproximator(model="switch-2state", population=3, tol=1e-9)
    params = est.get_params()
    assert params["population"] == 3 and params["tol"] == 1e-9
    twin = clone(est)
    assert twin.get_params() == params and not hasattr(twin, "solved_")
    est.set_params(population=2)
    assert est.population == 2


def test_predict_matches_direct_solve():
    est = MeasureMDPApproximator(model="switch-2state", population=2).fit()
    mdp = build(get_model("switch-2state"), switch_grid(), ActionGrid([0.0, 1.0]), "finite", 2)
    values = value_iteration(mdp).values
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    pred = est.predict(X)
    idx = mdp.index()
    expect = [values[idx[(2, 0)]], values[idx[(1, 1)]], values[idx[(1, 1)]], values[idx[(0, 2)]]]
    assert np.allclose(pred, expect, atol=1e-12)
    assert pred[1] == pred[2]


def test_transform_and_action_proba():
    est = MeasureMDPApproximator(model="crowd-1d", cells=3, population=2).fit(np.zeros((1, 2)))
    X = np.array([[0.1, 0.9], [0.5, 0.5]])
    counts = est.transform(X)
    assert counts.shape == (2, 3) and np.all(counts.sum(axis=1) == 2)
    proba = est.action_proba(X)
    assert proba.shape == (2, 2, est.action_grid_.size)
    assert np.allclose(proba.sum(axis=-1), 1.0)


def test_infinite_population_variant_accepts_any_cloud_size():
    est = MeasureMDPApproximator(model="crowd-1d", cells=2, variant="aggregation",
                                 population=2).fit()
    pred = est.predict(np.random.default_rng(0).uniform(0, 1, size=(3, 7)))
    assert pred.shape == (3,) and np.all(np.isfinite(pred))


def test_unfitted_and_validation_errors():
    est = MeasureMDPApproximator(model="switch-2state")
    with pytest.raises(NotFittedError):
        est.predict([[0.0, 1.0]])
    with pytest.raises(ValueError):
        MeasureMDPApproximator(variant="bogus").fit()
    with pytest.raises(ValueError):
        MeasureMDPApproximator(tol=0).fit()
    est.fit(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        est.predict([[0.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        est.predict([[np.nan, 1.0]])
