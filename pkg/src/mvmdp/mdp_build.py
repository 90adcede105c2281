"""Finite measure-valued MDPs built from an agent model.

Three constructions share one container, :class:`FiniteMeasureMDP`:

* ``finite``: N-agent distributions on the grid, joint state-action count
  matrices as actions, cost and kernel averaged over a weight scheme;
* ``aggregation``: n-agent distributions standing in for the infinite
  population, randomized agent rules as actions, next state obtained by
  snapping the mean-field flow to the nearest n-agent distribution;
* ``sampling``: same states and actions, next state distributed as an
  n-draw empirical measure of the flow.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .core_model import DiscreteMeasure
from .exceptions import CapExceeded, NonStochasticKernel
from .measures import (DEFAULT_CAP, EmpiricalMeasure, JointEmpiricalMeasure,
                       admissible_actions, agent_rules, check_action, enumerate_PN,
                       multinomial_pmf, nearest_index, state_index)

log = logging.getLogger(__name__)

PRUNE = 1e-12


@dataclass(frozen=True)
class WeightScheme:
    """How agent positions inside a cell are chosen when averaging.

    ``dirac`` puts every agent on its cell representative. ``uniform`` draws
    ``samples`` independent clouds with each agent uniform in its cell and
    averages cost and kernel over them.
    """

    variant: str = "dirac"
    samples: int = 1

    def __post_init__(self):
        if self.variant not in ("dirac", "uniform"):
            raise ValueError(f"unknown weight scheme {self.variant!r}")
        if self.samples < 1:
            raise ValueError("weight scheme needs at least one sample")


@dataclass(frozen=True)
class MCConfig:
    samples: int = 10_000
    seed: int = 0
    cap: int = DEFAULT_CAP


@dataclass(eq=False)
class FiniteMeasureMDP:
    """Finite MDP over measure states with a flat (state, action) layout.

    Actions of state ``s`` occupy rows ``offsets[s]:offsets[s + 1]`` of
    ``payload``, ``cost`` and ``kernel``. For the finite-population variant a
    payload row is a joint count matrix; for the infinite-population variants
    it is an agent rule ``gamma[cell, atom]``.
    """

    states: np.ndarray
    offsets: np.ndarray
    payload: np.ndarray
    kind: str
    kernel: sparse.csr_matrix
    cost: np.ndarray
    beta: float
    meta: dict = field(default_factory=dict)

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_pairs(self):
        return len(self.cost)

    @property
    def population(self):
        return int(self.states[0].sum())

    def actions_of(self, s):
        return slice(int(self.offsets[s]), int(self.offsets[s + 1]))

    def pair_state(self):
        return np.repeat(np.arange(self.n_states), np.diff(self.offsets))

    def index(self):
        return state_index(self.states)

    def check_stochastic(self, tol=1e-9):
        sums = np.asarray(self.kernel.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if len(bad):
            raise NonStochasticKernel(int(bad[0]), float(sums[bad[0]]))
        if np.any(self.kernel.data < 0):
            raise NonStochasticKernel(int(np.flatnonzero(self.kernel.data < 0)[0]), float("nan"))
        if not np.all(np.isfinite(self.cost)):
            raise ValueError("non-finite cost entry")
        if np.any(np.diff(self.offsets) < 1):
            raise ValueError("every state needs at least one action")


def _prune(row):
    row = np.where(row < PRUNE, 0.0, row)
    return row / row.sum()


def _pair_rng(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _map_ordered(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _assemble(states, per_state, kind, beta, meta):
    payload, cost, rows, counts = [], [], [], [0]
    for pl, cs, ks in per_state:
        payload.extend(pl)
        cost.extend(cs)
        rows.extend(ks)
        counts.append(len(cs))
    offsets = np.cumsum(counts)
    nz = [np.flatnonzero(r) for r in rows]
    indptr = np.concatenate([[0], np.cumsum([len(z) for z in nz])])
    kernel = sparse.csr_matrix(
        (np.concatenate([r[z] for r, z in zip(rows, nz)]), np.concatenate(nz), indptr),
        shape=(len(rows), len(states)))
    mdp = FiniteMeasureMDP(states=np.asarray(states), offsets=offsets,
                           payload=np.asarray(payload, dtype=float), kind=kind,
                           kernel=kernel, cost=np.asarray(cost, dtype=float),
                           beta=float(beta), meta=meta)
    mdp.check_stochastic()
    return mdp


def representative_cloud(grid, action_grid, theta):
    """Agent positions and actions realizing a joint count matrix, in
    (cell, atom) order."""
    counts = np.asarray(theta.counts if isinstance(theta, JointEmpiricalMeasure) else theta)
    cells, atoms = np.nonzero(counts)
    reps = np.repeat(cells, counts[cells, atoms])
    acts = np.repeat(atoms, counts[cells, atoms])
    return reps, acts


def _agent_cell_probs(model, grid, x, u, mf, w0):
    """Per-agent next-cell distribution for one common-noise value (finite
    idiosyncratic noise)."""
    noise = model.idio_noise
    k, kw = len(x), len(noise.probs)
    xs = np.repeat(x, kw, axis=0)
    us = np.repeat(u, kw, axis=0)
    ws = np.tile(noise.atoms, (k, 1))
    w0s = np.repeat(np.atleast_2d(w0), k * kw, axis=0)
    cells = grid.quantize(model.step(xs, us, mf, ws, w0s)).reshape(k, kw)
    out = np.zeros((k, grid.size))
    for j in range(kw):
        np.add.at(out, (np.arange(k), cells[:, j]), noise.probs[j])
    return out


def _convolve(agent_probs):
    """Distribution of the count vector of independent categorical agents."""
    m = agent_probs.shape[1]
    dist = {(0,) * m: 1.0}
    for p in agent_probs:
        support = np.flatnonzero(p)
        nxt = {}
        for counts, q in dist.items():
            for c in support:
                key = counts[:c] + (counts[c] + 1,) + counts[c + 1:]
                nxt[key] = nxt.get(key, 0.0) + q * p[c]
        dist = nxt
    return dist


def _cloud_kernel(model, grid, x, u, index, mc, rng):
    """Next empirical-measure distribution for agents at ``x`` playing ``u``."""
    mf = DiscreteMeasure.from_points(x)
    row = np.zeros(len(index))
    if model.idio_noise.finite and model.common_noise.finite:
        for w0, p0 in zip(model.common_noise.atoms, model.common_noise.probs):
            probs = _agent_cell_probs(model, grid, x, u, mf, w0)
            for counts, q in _convolve(probs).items():
                row[index[counts]] += p0 * q
        return row
    n, s = len(x), mc.samples
    w0 = model.common_noise.sample(rng, s)
    wi = model.idio_noise.sample(rng, s * n)
    nxt = model.step(np.tile(x, (s, 1)), np.tile(u, (s, 1)), mf, wi, np.repeat(w0, n, axis=0))
    cells = grid.quantize(nxt).reshape(s, n)
    counts = np.zeros((s, grid.size), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(s), n), cells.ravel()), 1)
    uniq, hits = np.unique(counts, axis=0, return_counts=True)
    for c, h in zip(uniq, hits):
        row[index[tuple(int(v) for v in c)]] += h
    return row / s


def exact_measure_kernel(model, grid, action_grid, mu, theta, mc=MCConfig(), states=None):
    """Distribution of the next N-agent empirical measure on the grid.

    Agents sit on their cell representatives and play the atoms prescribed by
    ``theta``. With finite noise the result is exact; otherwise it is a Monte
    Carlo estimate with ``mc.samples`` draws seeded by ``mc.seed``.
    """
    mu = mu if isinstance(mu, EmpiricalMeasure) else EmpiricalMeasure(mu)
    check_action(mu, theta)
    if states is None:
        states = enumerate_PN(grid.size, mu.total, mc.cap)
    cells, atoms = representative_cloud(grid, action_grid, theta)
    x, u = grid.representatives[cells], action_grid.atoms[atoms]
    return _cloud_kernel(model, grid, x, u, state_index(states), mc, _pair_rng(mc.seed, 0))


def measure_cost(model, x, u):
    """Population-averaged stage cost of the cloud ``x`` playing ``u``."""
    return float(np.mean(model.cost(x, u, DiscreteMeasure.from_points(x))))


def build_finite_population_mdp(model, grid, action_grid, N, scheme=WeightScheme(),
                                mc=MCConfig(), threads=1):
    """Finite MDP over N-agent distributions on the grid."""
    states = enumerate_PN(grid.size, N, mc.cap)
    index = state_index(states)
    n_atoms = action_grid.size

    def work(s):
        mu = EmpiricalMeasure(states[s])
        thetas = admissible_actions(mu, n_atoms, mc.cap)
        payload, cost, rows = [], [], []
        for a, theta in enumerate(thetas):
            cells, atoms = representative_cloud(grid, action_grid, theta)
            u = action_grid.atoms[atoms]
            rng = _pair_rng(mc.seed, s, a)
            if scheme.variant == "dirac":
                clouds = [grid.representatives[cells]]
            else:
                lo, hi = grid.lows[cells], grid.highs[cells]
                clouds = [lo + (hi - lo) * rng.random(lo.shape) for _ in range(scheme.samples)]
            row = sum(_cloud_kernel(model, grid, x, u, index, mc, rng) for x in clouds)
            payload.append(theta.counts)
            cost.append(np.mean([measure_cost(model, x, u) for x in clouds]))
            rows.append(_prune(row / len(clouds)))
        return payload, cost, rows

    per_state = _map_ordered(work, range(len(states)), threads)
    meta = dict(variant="finite", population=N, scheme=scheme.variant,
                scheme_samples=scheme.samples, seed=mc.seed, mc_samples=mc.samples,
                exact=bool(model.idio_noise.finite and model.common_noise.finite),
                model=model.name)
    return _assemble(states, per_state, "joint", model.beta, meta)


def cell_transitions(model, grid, action_grid, mu, w0, mc=MCConfig(), rng=None, cells=None):
    """Cell-to-cell transition probabilities ``T[cell, atom, next_cell]``.

    Evaluated at the representatives with mean field ``mu`` (weights over the
    cells) and common noise ``w0``; only rows listed in ``cells`` are filled.
    """
    m, k = grid.size, action_grid.size
    mu = np.asarray(mu, dtype=float)
    mf = DiscreteMeasure.from_weighted(grid.representatives, mu)
    if cells is None:
        cells = np.arange(m)
    x = np.repeat(grid.representatives[cells], k, axis=0)
    u = np.tile(action_grid.atoms, (len(cells), 1))
    out = np.zeros((m, k, m))
    if model.idio_noise.finite:
        probs = _agent_cell_probs(model, grid, x, u, mf, w0)
    else:
        rng = rng if rng is not None else np.random.default_rng(mc.seed)
        s = mc.samples
        w = model.idio_noise.sample(rng, s * len(x))
        nxt = model.step(np.repeat(x, s, axis=0), np.repeat(u, s, axis=0), mf, w,
                         np.repeat(np.atleast_2d(w0), s * len(x), axis=0))
        hits = grid.quantize(nxt).reshape(len(x), s)
        probs = np.stack([np.bincount(h, minlength=m) / s for h in hits])
    out[np.asarray(cells)] = probs.reshape(len(cells), k, m)
    return out


def measure_flow(model, grid, action_grid, mu, gamma, w0, mc=MCConfig(), rng=None):
    """One step of the population distribution under agent rule ``gamma``."""
    mu = np.asarray(getattr(mu, "weights", mu), dtype=float)
    occupied = np.flatnonzero(mu > 0)
    T = cell_transitions(model, grid, action_grid, mu, w0, mc, rng, cells=occupied)
    nxt = np.einsum("j,jk,jki->i", mu, np.asarray(gamma, dtype=float), T)
    return nxt / nxt.sum()


def rule_cost(model, grid, action_grid, mu, rules):
    """Stage cost of each rule in ``rules`` (shape ``(R, M, K)``) at weights ``mu``."""
    m, k = grid.size, action_grid.size
    mf = DiscreteMeasure.from_weighted(grid.representatives, mu)
    x = np.repeat(grid.representatives, k, axis=0)
    u = np.tile(action_grid.atoms, (m, 1))
    c = model.cost(x, u, mf).reshape(m, k)
    return np.einsum("j,rjk,jk->r", mu, rules, c)


def _common_draws(model, mc, rng):
    noise = model.common_noise
    if noise.finite:
        return noise.atoms, noise.probs
    return noise.sample(rng, mc.samples), np.full(mc.samples, 1.0 / mc.samples)


def _build_infinite(model, grid, action_grid, n, mc, threads, variant):
    states = enumerate_PN(grid.size, n, mc.cap)
    targets = states / n
    k = action_grid.size

    def work(s):
        mu = targets[s]
        rules = agent_rules(states[s], k, n, mc.cap)
        rng = _pair_rng(mc.seed, s)
        occupied = np.flatnonzero(mu > 0)
        rows = np.zeros((len(rules), len(states)))
        atoms, probs = _common_draws(model, mc, rng)
        for w0, p0 in zip(atoms, probs):
            T = cell_transitions(model, grid, action_grid, mu, w0, mc, rng, cells=occupied)
            flows = np.einsum("j,rjk,jki->ri", mu, rules, T)
            flows /= flows.sum(axis=1, keepdims=True)
            if variant == "aggregation":
                hit = nearest_index(flows, targets)
                np.add.at(rows, (np.arange(len(rules)), hit), p0)
            else:
                for r, nu in enumerate(flows):
                    rows[r] += p0 * multinomial_pmf(states, nu)
        cost = rule_cost(model, grid, action_grid, mu, rules)
        return list(rules), list(cost), [_prune(r) for r in rows]

    per_state = _map_ordered(work, range(len(states)), threads)
    meta = dict(variant=variant, population=n, rule_resolution=n, seed=mc.seed,
                mc_samples=mc.samples, scheme="dirac",
                exact=bool(model.idio_noise.finite and model.common_noise.finite),
                model=model.name)
    return _assemble(states, per_state, "rule", model.beta, meta)


def build_aggregation_mdp(model, grid, action_grid, n, mc=MCConfig(), threads=1):
    """Infinite-population MDP aggregated onto n-agent distributions by the
    nearest-neighbour map."""
    return _build_infinite(model, grid, action_grid, n, mc, threads, "aggregation")


def build_sampling_mdp(model, grid, action_grid, n, mc=MCConfig(), threads=1):
    """Infinite-population MDP observed through n sampled agents."""
    return _build_infinite(model, grid, action_grid, n, mc, threads, "sampling")


def build(model, grid, action_grid, variant, population, scheme=WeightScheme(),
          mc=MCConfig(), threads=1):
    if variant == "finite":
        return build_finite_population_mdp(model, grid, action_grid, population, scheme, mc,
                                           threads)
    if variant == "aggregation":
        return build_aggregation_mdp(model, grid, action_grid, population, mc, threads)
    if variant == "sampling":
        return build_sampling_mdp(model, grid, action_grid, population, mc, threads)
    raise ValueError(f"unknown MDP variant {variant!r}")


__all__ = [
    "CapExceeded", "FiniteMeasureMDP", "MCConfig", "WeightScheme", "build",
    "build_aggregation_mdp", "build_finite_population_mdp", "build_sampling_mdp",
    "cell_transitions", "exact_measure_kernel", "measure_flow", "rule_cost",
]
