"""Empirical and simplex measures over a finite indexed support.

The discrete Wasserstein distance used throughout is the plain sum of
coordinate gaps, ``sum_i |a_i - b_i|``; under the 0/1 ground metric this is
twice the usual optimal-transport value, and every bound in
:mod:`mvmdp.diagnostics` is stated against this convention.
"""
import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import CapExceeded, InvalidAction, SizeMismatch, SupportMismatch

DEFAULT_CAP = 5_000_000
TIE_TOL = 1e-12


def multiset_count(support_size, agents):
    """Number of count vectors of length ``support_size`` summing to ``agents``."""
    return math.comb(agents + support_size - 1, support_size - 1)


@dataclass(frozen=True)
class EmpiricalMeasure:
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in np.asarray(self.counts).ravel())
        if any(c < 0 for c in counts) or sum(counts) == 0:
            raise ValueError("counts must be non-negative with a positive total")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self):
        return sum(self.counts)

    @property
    def size(self):
        return len(self.counts)

    @property
    def array(self):
        return np.array(self.counts, dtype=np.int64)

    @property
    def weights(self):
        return self.array / self.total


@dataclass(frozen=True, eq=False)
class SimplexMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("simplex weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return len(self.weights)

    def __eq__(self, other):
        return isinstance(other, SimplexMeasure) and np.array_equal(self.weights, other.weights)


@dataclass(frozen=True, eq=False)
class JointEmpiricalMeasure:
    """Counts of agents over (state cell, action atom) pairs."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or np.any(c < 0) or c.sum() == 0:
            raise ValueError("joint counts must be a non-negative, non-empty matrix")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def marginal(self):
        return EmpiricalMeasure(self.counts.sum(axis=1))

    def __eq__(self, other):
        return isinstance(other, JointEmpiricalMeasure) and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash((self.counts.shape, self.counts.tobytes()))


@dataclass(frozen=True, eq=False)
class PointCloudMeasure:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        p = p.reshape(-1, 1) if p.ndim <= 1 else p
        if len(p) == 0:
            raise ValueError("a point cloud needs at least one point")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


def _weights_of(m):
    if isinstance(m, (EmpiricalMeasure, SimplexMeasure)):
        return m.weights
    return np.asarray(m, dtype=float).ravel()


def _points_of(m):
    if isinstance(m, PointCloudMeasure):
        return m.points
    p = np.asarray(m, dtype=float)
    return p.reshape(-1, 1) if p.ndim <= 1 else p


@lru_cache(maxsize=256)
def _compositions(support_size, agents):
    if support_size == 1:
        return np.array([[agents]], dtype=np.int64)
    blocks = []
    for first in range(agents, -1, -1):
        rest = _compositions(support_size - 1, agents - first)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    out = np.concatenate(blocks)
    out.setflags(write=False)
    return out


def enumerate_PN(support_size, agents, cap=DEFAULT_CAP):
    """All count vectors over ``support_size`` atoms summing to ``agents``.

    Rows are in lexicographically decreasing order, so ``(N, 0, ..., 0)`` comes
    first. Returns a read-only ``(count, support_size)`` integer array.
    """
    if support_size < 1 or agents < 1:
        raise ValueError("support size and number of agents must be positive")
    count = multiset_count(support_size, agents)
    if count > cap:
        raise CapExceeded(f"P_{agents} over {support_size} atoms", count, cap)
    return _compositions(support_size, agents)


def state_index(states):
    """Map each count tuple to its row index."""
    return {tuple(int(v) for v in row): i for i, row in enumerate(states)}


def w1_discrete(a, b):
    """Sum of coordinate gaps between two measures on the same finite support."""
    wa, wb = _weights_of(a), _weights_of(b)
    if wa.shape != wb.shape:
        raise SupportMismatch(f"supports of size {wa.size} and {wb.size} differ")
    return float(np.abs(wa - wb).sum())


def w1_matching(a, b):
    """Minimal average matching cost between two equal-size point clouds."""
    pa, pb = _points_of(a), _points_of(b)
    if len(pa) != len(pb):
        raise SizeMismatch(f"clouds of size {len(pa)} and {len(pb)}")
    if pa.shape[1] == 1:
        return float(np.mean(np.abs(np.sort(pa[:, 0]) - np.sort(pb[:, 0]))))
    cost = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def nearest_index(weights, candidates):
    """Row index in ``candidates`` closest to each row of ``weights``.

    Both arguments are probability arrays over the same support. Ties (within
    1e-12) go to the lowest candidate index.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    candidates = np.asarray(candidates, dtype=float)
    out = np.empty(len(weights), dtype=np.int64)
    step = max(1, 2_000_000 // max(1, candidates.size))
    for lo in range(0, len(weights), step):
        d = np.abs(weights[lo:lo + step, None, :] - candidates[None, :, :]).sum(axis=-1)
        best = d.min(axis=1, keepdims=True)
        out[lo:lo + step] = np.argmax(d <= best + TIE_TOL, axis=1)
    return out


def nearest_empirical(mu, n, cap=DEFAULT_CAP):
    """Closest n-agent empirical measure to ``mu`` under :func:`w1_discrete`."""
    w = _weights_of(mu)
    states = enumerate_PN(len(w), n, cap)
    return EmpiricalMeasure(states[nearest_index(w, states / n)[0]])


def project_to_grid(cloud, grid):
    """Counts of cloud points per grid cell."""
    cells = grid.quantize(_points_of(cloud))
    return EmpiricalMeasure(np.bincount(cells, minlength=grid.size))


def admissible_action_count(mu, n_actions):
    return math.prod(multiset_count(n_actions, c) for c in _counts_of(mu) if c > 0)


def _counts_of(mu):
    return mu.counts if isinstance(mu, EmpiricalMeasure) else tuple(int(c) for c in mu)


def admissible_actions(mu, n_actions, cap=DEFAULT_CAP):
    """Every joint count matrix whose row sums reproduce ``mu``'s counts."""
    counts = _counts_of(mu)
    total = admissible_action_count(counts, n_actions)
    if total > cap:
        raise CapExceeded("admissible joint actions", total, cap)
    occupied = [i for i, c in enumerate(counts) if c > 0]
    rows = [enumerate_PN(n_actions, counts[i]) for i in occupied]
    out = []
    for choice in itertools.product(*rows):
        mat = np.zeros((len(counts), n_actions), dtype=np.int64)
        for i, row in zip(occupied, choice):
            mat[i] = row
        out.append(JointEmpiricalMeasure(mat))
    return out


def check_action(mu, theta):
    if tuple(theta.counts.sum(axis=1)) != _counts_of(mu):
        raise InvalidAction("joint action marginal does not match the state counts")


def disintegrate(theta):
    """Conditional action distribution per cell; empty cells get the uniform row."""
    counts = theta.counts if isinstance(theta, JointEmpiricalMeasure) else np.asarray(theta)
    counts = np.asarray(counts, dtype=float)
    rows = counts.sum(axis=1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / counts.shape[1])
    return np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), uniform)


def agent_rules(mu, n_actions, resolution, cap=DEFAULT_CAP):
    """Randomized agent rules with probabilities in multiples of 1/resolution.

    Returns an array ``(R, M, n_actions)``; cells where ``mu`` is empty carry
    the uniform row.
    """
    counts = _counts_of(mu)
    occupied = [i for i, c in enumerate(counts) if c > 0]
    per_row = multiset_count(n_actions, resolution)
    total = per_row ** len(occupied)
    if total > cap:
        raise CapExceeded("agent rules", total, cap)
    grid = enumerate_PN(n_actions, resolution) / resolution
    out = np.full((total, len(counts), n_actions), 1.0 / n_actions)
    for r, choice in enumerate(itertools.product(range(per_row), repeat=len(occupied))):
        for i, c in zip(occupied, choice):
            out[r, i] = grid[c]
    return out


def multinomial_pmf(states, probs):
    """Probability of each count row in ``states`` for draws from ``probs``."""
    states = np.asarray(states, dtype=np.int64)
    n = int(states[0].sum())
    coef = np.array([math.factorial(n) // math.prod(math.factorial(int(c)) for c in row)
                     for row in states], dtype=float)
    return coef * np.prod(np.asarray(probs, dtype=float)[None, :] ** states, axis=1)


def to_text(measure):
    """Newline-delimited ``index,value`` record with a one-line header."""
    buf = io.StringIO()
    if isinstance(measure, EmpiricalMeasure):
        buf.write(f"# empirical total={measure.total} size={measure.size}\n")
        vals = [str(c) for c in measure.counts]
    else:
        w = _weights_of(measure)
        buf.write(f"# simplex size={len(w)}\n")
        vals = [repr(float(v)) for v in w]
    for i, v in enumerate(vals):
        buf.write(f"{i},{v}\n")
    return buf.getvalue()


def from_text(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header, body = lines[0], lines[1:]
    vals = [ln.split(",")[1] for ln in body]
    if header.startswith("# empirical"):
        return EmpiricalMeasure([int(v) for v in vals])
    if header.startswith("# simplex"):
        return SimplexMeasure([float(v) for v in vals])
    raise ValueError(f"unknown measure header {header!r}")
