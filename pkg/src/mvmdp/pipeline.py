"""Glue shared by the command line and the estimator: build, solve, look up
the state matching a point cloud, and compare against a finer reference."""
from dataclasses import dataclass

import numpy as np

from .core_model import cost_sup, horizon_for, validate_contraction
from .diagnostics import bound_discretization, bound_regret
from .mdp_build import MCConfig, WeightScheme, build
from .measures import nearest_index, project_to_grid
from .simulate import RolloutConfig, regret
from .solver import to_agent_policy, value_iteration


@dataclass
class Solved:
    mdp: object
    result: object
    grid: object
    action_grid: object

    @property
    def values(self):
        return self.result.values

    def policy(self):
        return to_agent_policy(self.mdp, self.result.policy)

    def state_of_cloud(self, cloud):
        return state_of_cloud(self.mdp, self.grid, cloud)

    def value_at(self, cloud):
        return float(self.values[self.state_of_cloud(cloud)])


def solve_model(model, grid, action_grid, variant="finite", population=2, scheme=WeightScheme(),
                mc=MCConfig(), tol=1e-8, threads=1):
    mdp = build(model, grid, action_grid, variant, population, scheme, mc, threads)
    return Solved(mdp, value_iteration(mdp, tol), grid, action_grid)


def state_of_cloud(mdp, grid, cloud):
    """Index of the MDP state standing for ``cloud``.

    Finite-population models need exactly ``N`` points and use their cell
    counts; infinite-population models snap the cell distribution of any
    cloud to the nearest n-agent measure.
    """
    counts = np.asarray(project_to_grid(cloud, grid).counts)
    if mdp.kind == "joint":
        if counts.sum() != mdp.population:
            raise ValueError(f"cloud has {counts.sum()} points, model has {mdp.population}")
        return mdp.index()[tuple(int(c) for c in counts)]
    return int(nearest_index(counts / counts.sum(), mdp.states / mdp.population)[0])


def reference_value(model, ref_grid, action_grid, cloud, scheme=WeightScheme(), mc=MCConfig(),
                    tol=1e-10, threads=1):
    """Optimal finite-population value of ``cloud`` on a (finer) reference grid."""
    n = len(np.atleast_2d(cloud))
    ref = solve_model(model, ref_grid, action_grid, "finite", n, scheme, mc, tol, threads)
    return ref.value_at(cloud), ref


def discretization_errors(coarse, reference):
    """``|V_coarse(s) - V_ref(project(reps of s))|`` for every coarse state."""
    grid, mdp = coarse.grid, coarse.mdp
    out = np.empty(mdp.n_states)
    for s, counts in enumerate(mdp.states):
        cloud = np.repeat(grid.representatives, counts, axis=0)
        out[s] = abs(coarse.values[s] - reference.value_at(cloud))
    return out


def evaluate_regret(model, solved, cloud, baseline, rollouts, seed, feedback="full", n=0,
                    horizon=None, truncation_tol=1e-6, resample=True):
    """Regret of the solved policy from ``cloud`` together with the matching bound."""
    grid, agrid = solved.grid, solved.action_grid
    bound_c = cost_sup(model, grid, agrid)
    T = horizon or horizon_for(model.beta, bound_c, truncation_tol)
    cfg = RolloutConfig(agents=len(cloud), horizon=T, rollouts=rollouts, seed=seed,
                        feedback=feedback, n=n, resample=resample)
    res = regret(model, grid, agrid, solved.policy(), cloud, cfg, baseline, cost_bound=bound_c)
    bounds = {}
    if validate_contraction(model).ok:
        bounds = dict(bound_discretization=bound_discretization(model.K_c, model.K_f, model.beta,
                                                                grid.L_X),
                      bound_regret=bound_regret(model.K_c, model.K_f, model.beta, grid.L_X))
    return res, T, bounds
