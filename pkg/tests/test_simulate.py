import numpy as np
import pytest

from mvmdp.core_model import ActionGrid, FiniteNoise, StateGrid
from mvmdp.exceptions import CapExceeded, UnreachableState
from mvmdp.library import (crowd_1d, default_action_grid, paper_example, switch_grid,
                           switch_model)
from mvmdp.mdp_build import build
from mvmdp.measures import enumerate_PN
from mvmdp.simulate import (RolloutConfig, brute_force_oracle, initial_cloud, regret,
                            rollout_team, truncation_bound)
from mvmdp.solver import ConstantPolicy, policy_evaluation, to_agent_policy, value_iteration

from conftest import make_model

ZERO = ActionGrid([0.0])
NOOP = ConstantPolicy([1.0])


def paper_run(start, T=40, beta=0.25, N=3):
    m = paper_example(beta=beta, horizon=T)
    grid = StateGrid.uniform(m.state_bounds, 1)
    return rollout_team(m, grid, ZERO, NOOP, np.full((N, 1), start),
                        RolloutConfig(agents=N, horizon=T))


def test_paper_example_values():
    est = paper_run(1.0)
    assert est.truncation_bound <= 1e-11
    assert abs(est.mean - 2.0) <= est.truncation_bound
    assert est.stderr == 0.0
    assert paper_run(0.0).mean == 0.0


def test_paper_example_diverges_past_one_half():
    sums = [paper_run(1.0, T=T, beta=0.55).mean for T in (10, 20, 40)]
    assert sums[0] < sums[1] < sums[2] and sums[2] > 100


def test_truncation_doubling_on_deterministic_model():
    for T in (5, 10, 20):
        short, long = paper_run(1.0, T=T), paper_run(1.0, T=2 * T)
        assert abs(long.mean - short.mean) <= short.truncation_bound + 3 * short.stderr


def test_zero_cost_model():
    m = make_model(lambda x, u, mf, wi, w0: np.clip(x + wi, 0, 1),
                   cost=lambda x, u, mf: np.zeros(len(x)),
                   idio=FiniteNoise([[-0.1], [0.1]], [0.5, 0.5]))
    est = rollout_team(m, StateGrid.uniform([[0, 1]], 2), ZERO, NOOP, np.full((4, 1), 0.5),
                       RolloutConfig(agents=4, horizon=10, rollouts=20), cost_bound=0.0)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_rollouts_reproducible():
    model, grid, agrid = crowd_1d(), StateGrid.uniform([[0, 1]], 3), ActionGrid([-1.0, 1.0])
    mdp = build(model, grid, agrid, "finite", 2)
    pol = to_agent_policy(mdp, value_iteration(mdp).policy)
    cfg = RolloutConfig(agents=2, horizon=15, rollouts=30, seed=5)
    a = rollout_team(model, grid, agrid, pol, [[0.2], [0.7]], cfg)
    b = rollout_team(model, grid, agrid, pol, [[0.2], [0.7]], cfg)
    assert np.array_equal(a.samples, b.samples)
    c = rollout_team(model, grid, agrid, pol, [[0.2], [0.7]],
                     RolloutConfig(agents=2, horizon=15, rollouts=30, seed=6))
    assert not np.array_equal(a.samples, c.samples)


def test_common_noise_shared_idiosyncratic_independent():
    # x' = w_i + w_0 with equal noise variances: states of two agents have correlation 1/2
    m = make_model(lambda x, u, mf, wi, w0: 0.5 + wi + w0,
                   idio=FiniteNoise([[-0.2], [0.2]], [0.5, 0.5]),
                   common=FiniteNoise([[-0.2], [0.2]], [0.5, 0.5]))
    cfg = RolloutConfig(agents=3, horizon=3, rollouts=3000, seed=0)
    _, traj = rollout_team(m, StateGrid.uniform([[0, 1]], 2), ZERO, NOOP, np.full((3, 1), 0.5),
                           cfg, cost_bound=1.0, return_trajectory=True)
    x = np.array([x[:, 0] for t, r, x, u, c in traj if t == 1])
    corr = np.corrcoef(x.T)
    off = corr[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off - 0.5) < 0.06)


def test_feedback_channels():
    model, grid, agrid = crowd_1d(), StateGrid.uniform([[0, 1]], 3), ActionGrid([-1.0, 1.0])
    agg = build(model, grid, agrid, "aggregation", 2)
    pol = to_agent_policy(agg, value_iteration(agg).policy)
    cloud = initial_cloud(model, 7, seed=1)
    for fb, extra in (("aggregated", {}), ("sampled", {}), ("sampled", {"resample": False})):
        est = rollout_team(model, grid, agrid, pol, cloud,
                           RolloutConfig(agents=7, horizon=8, rollouts=5, feedback=fb, n=2, **extra))
        assert np.isfinite(est.mean)
    with pytest.raises(UnreachableState):
        rollout_team(model, grid, agrid, pol, cloud, RolloutConfig(agents=7, horizon=3))


def test_rollout_config_validation():
    with pytest.raises(ValueError):
        RolloutConfig(agents=2, horizon=5, feedback="sampled", n=3)
    with pytest.raises(ValueError):
        RolloutConfig(agents=2, horizon=5, feedback="aggregated")
    with pytest.raises(ValueError):
        RolloutConfig(agents=2, horizon=0)


def test_truncation_bound_formula():
    assert truncation_bound(0.5, 3, 2.0) == 0.125 * 2.0 / 0.5


# -- oracle ----------------------------------------------------------------------

def test_oracle_single_agent_matches_mdp():
    model, grid = switch_model(states=3), switch_grid(3)
    agrid = default_action_grid(model)
    orc = brute_force_oracle(model, grid, agrid, 1)
    res = value_iteration(build(model, grid, agrid, "finite", 1), tol=1e-10)
    for counts, v in zip(enumerate_PN(3, 1), res.values):
        assert abs(orc.value_at(counts) - v) <= 2e-10


def test_oracle_permutation_invariance():
    model = switch_model(states=3)
    orc = brute_force_oracle(model, switch_grid(3), default_action_grid(model), 3)
    index = {tuple(v): i for i, v in enumerate(orc.vector_states.tolist())}
    for (a, b, c), i in index.items():
        assert abs(orc.values[index[(c, a, b)]] - orc.values[i]) <= 1e-9
    assert orc.spread <= 1e-9


def test_oracle_matches_deterministic_toy():
    # 2 cells, the action picks the next cell; cost penalizes crowding in cell 1
    m = make_model(lambda x, u, mf, wi, w0: 0.25 + 0.5 * u,
                   cost=lambda x, u, mf: x[:, 0] * (0.5 + mf.mean()[0]) + 0.1 * u[:, 0],
                   K_f=0.0, K_c=2.0)
    grid, agrid = StateGrid([[0.0, 0.5, 1.0]]), ActionGrid([0.0, 1.0])
    orc = brute_force_oracle(m, grid, agrid, 2, tol=1e-10)
    res = value_iteration(build(m, grid, agrid, "finite", 2), tol=1e-10)
    for counts, v in zip(enumerate_PN(2, 2), res.values):
        assert abs(orc.value_at(counts) - v) <= 2e-10


def test_oracle_cap():
    model = switch_model(states=3)
    with pytest.raises(CapExceeded):
        brute_force_oracle(model, switch_grid(3), default_action_grid(model), 3, cap=1000)


# -- regret ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def switch_solved():
    model, grid = switch_model(), switch_grid()
    agrid = default_action_grid(model)
    mdp = build(model, grid, agrid, "finite", 2)
    return model, grid, agrid, mdp, value_iteration(mdp, tol=1e-10)


def test_optimal_policy_regret_is_zero(switch_solved):
    model, grid, agrid, mdp, res = switch_solved
    x0 = np.array([[0.0], [1.0]])
    base = res.values[mdp.index()[(1, 1)]]
    cfg = RolloutConfig(agents=2, horizon=40, rollouts=2000, seed=3)
    r = regret(model, grid, agrid, to_agent_policy(mdp, res.policy), x0, cfg, base,
               baseline_tol=1e-10)
    assert abs(r.regret) <= r.tolerance


def test_bad_constant_policy_regret_matches_policy_evaluation(switch_solved):
    model, grid, agrid, mdp, res = switch_solved
    # everybody always pushes: pick the joint action with all mass on atom 1
    pushes = np.array([next(p - mdp.offsets[s] for p in range(mdp.offsets[s], mdp.offsets[s + 1])
                            if mdp.payload[p][:, 0].sum() == 0) for s in range(mdp.n_states)])
    gap = policy_evaluation(mdp, pushes, 1e-12) - res.values
    s = mdp.index()[(2, 0)]
    assert gap[s] > 0.05
    cfg = RolloutConfig(agents=2, horizon=40, rollouts=2000, seed=4)
    r = regret(model, grid, agrid, ConstantPolicy([0.0, 1.0]), np.zeros((2, 1)), cfg,
               res.values[s], baseline_tol=1e-10)
    assert abs(r.regret - gap[s]) <= r.tolerance


def test_initial_cloud():
    m = crowd_1d()
    assert initial_cloud(m, 3, "center").tolist() == [[0.5]] * 3
    a = initial_cloud(m, 5, seed=2)
    assert np.array_equal(a, initial_cloud(m, 5, seed=2)) and np.all((a >= 0) & (a <= 1))
    assert initial_cloud(m, 2, points=[0.1, 0.2]).shape == (2, 1)
    with pytest.raises(ValueError):
        initial_cloud(m, 2, "gaussian")
