"""Value iteration, policy evaluation and agent-level policy extraction."""
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import UnreachableState
from .measures import disintegrate, state_index


@dataclass
class SolveResult:
    values: np.ndarray
    policy: np.ndarray  # per-state index into that state's action block
    iterations: int
    gaps: np.ndarray
    converged: bool

    @property
    def gap_ratios(self):
        g = self.gaps
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(g[:-1] > 0, g[1:] / g[:-1], 0.0)


def _segment_min(q, offsets):
    return np.minimum.reduceat(q, offsets[:-1])


TIE_TOL = 1e-12
# slack for the per-sweep contraction check; increments carry relative rounding ~1e-16
CONTRACTION_SLACK = 1e-9


def _first_minimizers(resid, offsets):
    """Lowest action index per state whose residual is within TIE_TOL of 0."""
    hit = np.flatnonzero(resid <= TIE_TOL)
    starts = offsets[:-1]
    return hit[np.searchsorted(hit, starts)] - starts


def value_iteration(mdp, tol=1e-8, max_iter=100_000):
    """Synchronous Bellman sweeps from zero.

    Stops once the sup-norm change between sweeps drops to
    ``tol * (1 - beta) / beta``, which puts the returned values within
    ``tol`` of the fixed point.

    The sweeps are carried out on increments: with ``Q_k = c + beta P v_k``,
    each action keeps its residual ``Q_k - min Q_k`` and the update
    ``d_k = v_{k+1} - v_k`` is obtained as the segment minimum of
    ``residual + beta P d_{k-1}``. This is the same iteration as the direct
    form, but rounding stays proportional to ``|d_k|`` rather than ``|v|``,
    so the recorded gaps contract by ``beta`` down to tiny tolerances.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mdp.check_stochastic()
    beta, offsets = mdp.beta, mdp.offsets
    owner = mdp.pair_state()
    threshold = tol * (1 - beta) / beta
    q = mdp.cost.astype(float)
    d = _segment_min(q, offsets)
    resid = q - d[owner]
    v = d.copy()
    gaps = [float(np.max(np.abs(d)))]
    converged = gaps[-1] <= threshold
    it = 1
    while not converged and it < max_iter:
        t = resid + beta * (mdp.kernel @ d)
        d = _segment_min(t, offsets)
        resid = t - d[owner]
        v = v + d
        gap = float(np.max(np.abs(d)))
        if gap > beta * gaps[-1] * (1 + CONTRACTION_SLACK) + 1e-300:
            raise RuntimeError(f"sweep {it} gap {gap!r} exceeds beta times previous {gaps[-1]!r}")
        gaps.append(gap)
        it += 1
        converged = gaps[-1] <= threshold
    if not converged:
        warnings.warn(f"value iteration stopped at max_iter={max_iter} with gap {gaps[-1]:.3g}")
    return SolveResult(values=v, policy=_first_minimizers(resid, offsets), iterations=it,
                       gaps=np.array(gaps), converged=converged)


def policy_evaluation(mdp, policy, tol=1e-8, max_iter=100_000):
    """Discounted cost of a stationary measure policy, to sup-norm ``tol``."""
    mdp.check_stochastic()
    policy = np.asarray(policy, dtype=np.int64)
    width = np.diff(mdp.offsets)
    if np.any(policy < 0) or np.any(policy >= width):
        raise IndexError("policy picks an action outside some state's action list")
    rows = mdp.offsets[:-1] + policy
    P, beta = mdp.kernel[rows], mdp.beta
    threshold = tol * (1 - beta) / beta
    d = mdp.cost[rows].astype(float)
    v = d.copy()
    for _ in range(max_iter):
        if np.max(np.abs(d)) <= threshold:
            return v
        d = beta * (P @ d)
        v = v + d
    warnings.warn("policy evaluation hit max_iter")
    return v


class AgentPolicy:
    """Symmetric randomized agent rule ``gamma(atom | cell, measure state)``.

    ``rules[s, i]`` is the action distribution for an agent in cell ``i`` when
    the observed measure state is ``states[s]``.
    """

    needs_feedback = True

    def __init__(self, states, rules, population=None):
        self.states = np.asarray(states, dtype=np.int64)
        self.rules = np.asarray(rules, dtype=float)
        if not np.allclose(self.rules.sum(axis=-1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("every agent rule must sum to 1")
        self.population = int(self.states[0].sum()) if population is None else population
        self._index = state_index(self.states)

    @property
    def n_cells(self):
        return self.states.shape[1]

    @property
    def n_actions(self):
        return self.rules.shape[-1]

    def state_of(self, counts):
        key = tuple(int(c) for c in counts)
        try:
            return self._index[key]
        except KeyError:
            raise UnreachableState(f"no policy entry for measure state {key}") from None

    def probs(self, counts, cells):
        return self.rules[self.state_of(counts)][np.asarray(cells)]


class ConstantPolicy:
    """Same action distribution for every agent regardless of feedback."""

    needs_feedback = False

    def __init__(self, probs):
        self.p = np.asarray(probs, dtype=float).ravel()

    @property
    def n_actions(self):
        return len(self.p)

    def probs(self, counts, cells):
        return np.broadcast_to(self.p, (len(cells), len(self.p)))


def to_agent_policy(mdp, policy):
    """Agent rules induced by the chosen actions.

    Joint count actions are disintegrated into per-cell conditionals; rule
    actions are returned unchanged.
    """
    rows = mdp.offsets[:-1] + np.asarray(policy, dtype=np.int64)
    chosen = mdp.payload[rows]
    if mdp.kind == "rule":
        rules = chosen
    else:
        rules = np.stack([disintegrate(np.rint(c).astype(np.int64)) for c in chosen])
    return AgentPolicy(mdp.states, rules)
