"""Monte Carlo rollouts of the N-agent team and a brute-force centralized oracle."""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core_model import DiscreteMeasure, cost_sup
from .exceptions import CapExceeded
from .measures import enumerate_PN, nearest_index

FEEDBACKS = ("full", "aggregated", "sampled")


@dataclass(frozen=True)
class RolloutConfig:
    """Simulation settings.

    ``feedback`` picks what the policy sees: the full grid distribution of all
    agents, that distribution snapped to the nearest ``n``-agent measure, or
    the distribution of ``n`` agents picked at random. With ``resample`` the
    observed agents are redrawn every step; otherwise they are drawn once per
    rollout.
    """

    agents: int
    horizon: int
    rollouts: int = 1
    seed: int = 0
    feedback: str = "full"
    n: int = 0
    resample: bool = True

    def __post_init__(self):
        if self.rollouts < 1 or self.horizon < 1 or self.agents < 1:
            raise ValueError("agents, horizon and rollouts must be positive")
        if self.feedback not in FEEDBACKS:
            raise ValueError(f"feedback must be one of {FEEDBACKS}")
        if self.feedback != "full" and self.n < 1:
            raise ValueError("aggregated and sampled feedback need n >= 1")
        if self.feedback == "sampled" and self.n > self.agents:
            raise ValueError("cannot observe more agents than there are")


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    stderr: float
    truncation_bound: float
    samples: np.ndarray = None


def truncation_bound(beta, horizon, cost_bound):
    return beta ** horizon * cost_bound / (1 - beta)


def _feedback_counts(cells, grid_size, cfg, rng, targets, watched):
    if cfg.feedback == "full":
        return np.bincount(cells, minlength=grid_size)
    if cfg.feedback == "aggregated":
        w = np.bincount(cells, minlength=grid_size) / len(cells)
        return np.rint(targets[nearest_index(w, targets)[0]] * cfg.n).astype(np.int64)
    if cfg.resample:
        watched = rng.choice(len(cells), size=cfg.n, replace=False)
    return np.bincount(cells[watched], minlength=grid_size)


def _draw_actions(probs, r):
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((r[:, None] * cdf[:, -1:] >= cdf).sum(axis=1), probs.shape[1] - 1)


def rollout_team(model, grid, action_grid, policy, init, cfg, cost_bound=None,
                 return_trajectory=False):
    """Discounted team cost of a symmetric agent policy, estimated by rollouts.

    Every rollout uses its own generator seeded by ``(cfg.seed, rollout)``.
    It first draws the whole horizon of idiosyncratic noise (agent order
    within each step), then the common shocks, then the uniforms used to
    pick actions; sampled feedback draws its observed agents as it goes.
    The truncation bound uses ``cost_bound`` (default: the model's declared
    bound, else the largest |c| seen on representatives).
    """
    x0 = np.asarray(getattr(init, "points", init), dtype=float).reshape(cfg.agents, model.state_dim)
    beta, N, T = model.beta, cfg.agents, cfg.horizon
    if cost_bound is None:
        cost_bound = cost_sup(model, grid, action_grid)
    targets = None
    if cfg.feedback == "aggregated":
        targets = enumerate_PN(grid.size, cfg.n) / cfg.n
    totals = np.empty(cfg.rollouts)
    traj = []
    for r in range(cfg.rollouts):
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), r]))
        w_i = model.idio_noise.sample(rng, T * N).reshape(T, N, -1)
        w_0 = model.common_noise.sample(rng, T)
        pick = rng.random((T, N))
        watched = None
        if cfg.feedback == "sampled" and not cfg.resample:
            watched = rng.choice(N, size=cfg.n, replace=False)
        x = x0.copy()
        total, disc = 0.0, 1.0
        for t in range(T):
            mf = DiscreteMeasure.from_points(x)
            if policy.needs_feedback:
                cells = grid.quantize(x)
                counts = _feedback_counts(cells, grid.size, cfg, rng, targets, watched)
                probs = policy.probs(counts, cells)
            else:
                probs = policy.probs(None, np.zeros(N, dtype=np.int64))
            u = action_grid.atoms[_draw_actions(np.asarray(probs), pick[t])]
            c = model.cost(x, u, mf)
            total += disc * float(np.mean(c))
            if return_trajectory:
                traj.append((t, r, x.copy(), u.copy(), c.copy()))
            disc *= beta
            x = model.step(x, u, mf, w_i[t], np.repeat(w_0[t:t + 1], N, axis=0))
        totals[r] = total
    stderr = float(totals.std(ddof=1) / math.sqrt(cfg.rollouts)) if cfg.rollouts > 1 else 0.0
    est = CostEstimate(mean=float(totals.mean()), stderr=stderr,
                       truncation_bound=truncation_bound(beta, T, cost_bound),
                       samples=totals)
    return (est, traj) if return_trajectory else est


@dataclass
class OracleResult:
    vector_states: np.ndarray  # (|X|^N, N) cell indices
    values: np.ndarray
    reduced: dict  # count tuple -> value
    spread: float  # worst value gap between permutations of one vector state
    iterations: int

    def value_at(self, counts):
        return self.reduced[tuple(int(c) for c in counts)]


def brute_force_oracle(model, grid, action_grid, N, beta=None, tol=1e-10, cap=10**7,
                       max_iter=100_000):
    """Centralized team MDP over vector states with joint actions.

    Agents live on the grid representatives; every agent's next cell is
    obtained by enumerating the full product of idiosyncratic noise values,
    for each common-noise atom. Solved by plain value iteration.
    """
    if not (model.idio_noise.finite and model.common_noise.finite):
        raise ValueError("the oracle needs finite-support noise")
    beta = model.beta if beta is None else beta
    m, k = grid.size, action_grid.size
    n_x, n_u = m ** N, k ** N
    entries = n_x * n_u * n_x
    if entries > cap:
        raise CapExceeded("oracle kernel entries", entries, cap)
    xs = np.array(list(itertools.product(range(m), repeat=N)), dtype=np.int64)
    us = np.array(list(itertools.product(range(k), repeat=N)), dtype=np.int64)
    radix = m ** np.arange(N - 1, -1, -1)
    idio, common = model.idio_noise, model.common_noise
    P = np.zeros((n_x, n_u, n_x))
    C = np.zeros((n_x, n_u))
    for i, xv in enumerate(xs):
        pts = grid.representatives[xv]
        mf = DiscreteMeasure.from_points(pts)
        for j, uv in enumerate(us):
            acts = action_grid.atoms[uv]
            C[i, j] = float(np.mean(model.cost(pts, acts, mf)))
            for w0, p0 in zip(common.atoms, common.probs):
                for combo in itertools.product(range(len(idio.probs)), repeat=N):
                    combo = list(combo)
                    nxt = model.step(pts, acts, mf, idio.atoms[combo],
                                     np.repeat(np.atleast_2d(w0), N, axis=0))
                    dest = int(grid.quantize(nxt) @ radix)
                    P[i, j, dest] += p0 * math.prod(idio.probs[combo])
    v = np.zeros(n_x)
    threshold = tol * (1 - beta) / beta
    for it in range(1, max_iter + 1):
        nv = (C + beta * P @ v).min(axis=1)
        gap = np.max(np.abs(nv - v))
        v = nv
        if gap <= threshold:
            break
    reduced, spread = {}, 0.0
    groups = {}
    for xv, val in zip(xs, v):
        key = tuple(int(c) for c in np.bincount(xv, minlength=m))
        groups.setdefault(key, []).append(val)
    for key, vals in groups.items():
        spread = max(spread, max(vals) - min(vals))
        reduced[key] = float(np.mean(vals))
    return OracleResult(vector_states=xs, values=v, reduced=reduced, spread=spread,
                        iterations=it)


@dataclass(frozen=True)
class RegretResult:
    regret: float
    estimate: CostEstimate
    baseline: float
    tolerance: float


def regret(model, grid, action_grid, policy, init, cfg, baseline, baseline_tol=0.0,
           cost_bound=None):
    """Simulated cost of ``policy`` minus a baseline optimal value.

    ``tolerance`` combines three standard errors, the truncation bound and the
    baseline's own accuracy.
    """
    est = rollout_team(model, grid, action_grid, policy, init, cfg, cost_bound=cost_bound)
    return RegretResult(regret=est.mean - float(baseline), estimate=est,
                        baseline=float(baseline),
                        tolerance=3 * est.stderr + est.truncation_bound + baseline_tol)


def initial_cloud(model, agents, dist="uniform", seed=0, points=None):
    """Explicit points, or i.i.d. draws (``uniform`` over the box or ``center``)."""
    if points is not None:
        return np.asarray(points, dtype=float).reshape(agents, model.state_dim)
    lo, hi = model.state_bounds[:, 0], model.state_bounds[:, 1]
    if dist == "center":
        return np.tile(0.5 * (lo + hi), (agents, 1))
    if dist != "uniform":
        raise ValueError(f"unknown initial distribution {dist!r}")
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((agents, model.state_dim))
