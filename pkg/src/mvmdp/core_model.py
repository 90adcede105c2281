"""Agent model description and quantization of agent state/action spaces.

Model callables are vectorized over a leading agent axis::

    dynamics(x, u, mf, w_i, w_0) -> x_next      # (k, l), (k, m), mf, (k, di), (k, d0) -> (k, l)
    stage_cost(x, u, mf) -> cost               # (k, l), (k, m), mf -> (k,)

``mf`` is a :class:`DiscreteMeasure`, the empirical distribution the agents see.
"""
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import EmptyActionGrid, OutOfBounds
from .measures import w1_matching


def _as_2d(a, dim=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if dim in (None, 1) else a.reshape(1, -1)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on R^l.

    Build it with :meth:`from_points` or :meth:`from_weighted`; both produce a
    canonical form (duplicates merged, zero weights dropped, rows sorted) so
    that equal measures give bit-identical model evaluations.
    """

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_points(cls, points):
        pts = _as_2d(points)
        if pts.shape[1] == 1:
            uniq, counts = np.unique(pts[:, 0], return_counts=True)
            return cls(uniq[:, None], counts / pts.shape[0])
        uniq, counts = np.unique(pts, axis=0, return_counts=True)
        return cls(uniq, counts / pts.shape[0])

    @classmethod
    def from_weighted(cls, points, weights):
        pts = _as_2d(points)
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        pts, w = pts[keep], w[keep]
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv.ravel(), w)
        return cls(uniq, merged)

    def mean(self):
        return self.weights @ self.points

    def expect(self, fn):
        """Integrate ``fn`` (vectorized over rows) against the measure."""
        return self.weights @ np.asarray(fn(self.points), dtype=float)

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class FiniteNoise:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = _as_2d(self.atoms)
        probs = np.asarray(self.probs, dtype=float).ravel()
        if len(probs) != len(atoms):
            raise ValueError("noise atoms and probabilities differ in length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("noise probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def none(cls, dim=1):
        return cls(np.zeros((1, dim)), [1.0])

    @property
    def finite(self):
        return True

    @property
    def dim(self):
        return self.atoms.shape[1]

    def sample(self, rng, size):
        if len(self.probs) == 1:
            return np.repeat(self.atoms, size, axis=0)
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return self.atoms[np.minimum(idx, len(self.probs) - 1)]


@dataclass(frozen=True, eq=False)
class SampledNoise:
    """Noise given only through a sampler ``sampler(rng, size) -> (size, dim)``."""

    sampler: Callable
    dim: int = 1

    @property
    def finite(self):
        return False

    def sample(self, rng, size):
        return _as_2d(self.sampler(rng, size)).reshape(size, self.dim)


@dataclass(frozen=True, eq=False)
class AgentModel:
    name: str
    state_dim: int
    action_dim: int
    dynamics: Callable
    stage_cost: Callable
    idio_noise: object
    common_noise: object
    K_f: float
    K_c: float
    beta: float
    state_bounds: np.ndarray
    action_bounds: np.ndarray
    cost_bound: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.K_f < 0 or self.K_c < 0:
            raise ValueError("Lipschitz constants must be non-negative")
        sb = np.asarray(self.state_bounds, dtype=float).reshape(self.state_dim, 2)
        ab = np.asarray(self.action_bounds, dtype=float).reshape(self.action_dim, 2)
        if np.any(sb[:, 0] > sb[:, 1]) or np.any(ab[:, 0] > ab[:, 1]):
            raise ValueError("box bounds must satisfy lower <= upper")
        object.__setattr__(self, "state_bounds", sb)
        object.__setattr__(self, "action_bounds", ab)

    def with_beta(self, beta):
        return replace(self, beta=float(beta))

    def step(self, x, u, mf, w_i, w_0):
        k = len(x)
        out = self.dynamics(x, u, mf, np.reshape(w_i, (k, -1)), np.reshape(w_0, (k, -1)))
        return np.asarray(out, dtype=float).reshape(k, self.state_dim)

    def cost(self, x, u, mf):
        return np.asarray(self.stage_cost(x, u, mf), dtype=float).reshape(len(x))

    def in_bounds(self, x, atol=1e-12):
        x = np.asarray(x, dtype=float)
        lo, hi = self.state_bounds[:, 0], self.state_bounds[:, 1]
        return np.all((x >= lo - atol) & (x <= hi + atol), axis=-1)


class StateGrid:
    """Tensor-product partition of the state box into axis-aligned cells.

    Cells are half-open on their upper faces except on the outer boundary of
    the box. Cell ``i`` is addressed in C order over the per-dimension
    interval indices.
    """

    def __init__(self, edges, representatives=None):
        self.edges = [np.asarray(e, dtype=float) for e in edges]
        for e in self.edges:
            if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
                raise ValueError("edges must be strictly increasing with at least two entries")
        self.shape = tuple(len(e) - 1 for e in self.edges)
        self.dim = len(self.edges)
        lows, highs = [], []
        for idx in itertools.product(*(range(s) for s in self.shape)):
            lows.append([e[i] for e, i in zip(self.edges, idx)])
            highs.append([e[i + 1] for e, i in zip(self.edges, idx)])
        self.lows = np.array(lows)
        self.highs = np.array(highs)
        if representatives is None:
            reps = 0.5 * (self.lows + self.highs)
        else:
            reps = _as_2d(representatives, self.dim).reshape(-1, self.dim)
            if len(reps) != len(self.lows):
                raise ValueError("one representative per cell is required")
        self.representatives = reps
        if representatives is not None and np.any(self.quantize(reps) != np.arange(self.size)):
            raise ValueError("every representative must lie in its own cell")
        self.L_X = compute_L_X(self)

    @classmethod
    def uniform(cls, bounds, cells):
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if np.isscalar(cells):
            cells = [int(cells)] * len(bounds)
        return cls([np.linspace(lo, hi, c + 1) for (lo, hi), c in zip(bounds, cells)])

    @property
    def size(self):
        return len(self.lows)

    @property
    def bounds(self):
        return np.array([[e[0], e[-1]] for e in self.edges])

    def quantize(self, x):
        """Cell index of every row of ``x``; raises OutOfBounds outside the box."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        idx = np.zeros(len(x), dtype=np.int64)
        for d, e in enumerate(self.edges):
            col = x[:, d]
            if np.any((col < e[0]) | (col > e[-1])) or np.any(np.isnan(col)):
                bad = x[(col < e[0]) | (col > e[-1]) | np.isnan(col)][0]
                raise OutOfBounds(f"point {bad.tolist()} outside state bounds")
            idx = idx * (len(e) - 1) + np.searchsorted(e[1:-1], col, side="right")
        return idx

    def describe(self):
        return {"edges": [e.tolist() for e in self.edges],
                "representatives": self.representatives.tolist()}

    def __eq__(self, other):
        return (isinstance(other, StateGrid) and self.shape == other.shape
                and all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges))
                and np.array_equal(self.representatives, other.representatives))

    def __repr__(self):
        return f"StateGrid(shape={self.shape}, L_X={self.L_X:.6g})"


def quantize_state(grid, x):
    """Index of the unique cell containing the single point ``x``."""
    return int(grid.quantize(np.asarray(x, dtype=float).reshape(1, grid.dim))[0])


def compute_L_X(grid):
    """Largest Euclidean cell diameter of the grid."""
    return float(np.max(np.linalg.norm(grid.highs - grid.lows, axis=1)))


@dataclass(frozen=True, eq=False)
class ActionGrid:
    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        atoms = atoms.reshape(-1, 1) if atoms.ndim <= 1 else atoms
        if len(atoms) == 0:
            raise EmptyActionGrid("action grid needs at least one atom")
        if len(np.unique(atoms, axis=0)) != len(atoms):
            raise ValueError("action atoms must be distinct")
        object.__setattr__(self, "atoms", atoms)

    @property
    def size(self):
        return len(self.atoms)

    @classmethod
    def uniform(cls, bounds, per_dim):
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        axes = [np.linspace(lo, hi, per_dim) if per_dim > 1 else np.array([(lo + hi) / 2])
                for lo, hi in bounds]
        return cls(np.array(list(itertools.product(*axes))))


def compute_L_U(grid, action_box, resolution=201):
    """Worst-case distance from a point of the action box to its nearest atom.

    Exact in one dimension (box endpoints and atom midpoints are the only
    candidates). In higher dimensions the supremum is searched on a regular
    lattice with ``resolution`` points per axis, so the result can undershoot
    the true value by at most half a lattice diagonal.
    """
    atoms = np.asarray(grid.atoms if isinstance(grid, ActionGrid) else grid, dtype=float)
    if atoms.size == 0:
        raise EmptyActionGrid("action grid needs at least one atom")
    box = np.asarray(action_box, dtype=float).reshape(-1, 2)
    atoms = atoms.reshape(-1, len(box))
    if len(box) == 1:
        a = np.sort(atoms[:, 0])
        cand = np.concatenate([[box[0, 0], box[0, 1]], 0.5 * (a[1:] + a[:-1])])
    else:
        axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
        cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    cand = cand.reshape(-1, len(box))
    best = 0.0
    for chunk in np.array_split(cand, max(1, len(cand) // 4096)):
        d = np.linalg.norm(chunk[:, None, :] - atoms[None, :, :], axis=-1).min(axis=1)
        best = max(best, float(d.max()))
    return best


@dataclass(frozen=True)
class ContractionReport:
    value: float
    ok: bool


def validate_contraction(model):
    """Report ``2 K_f beta`` and whether it is strictly below one."""
    value = 2.0 * model.K_f * model.beta
    return ContractionReport(value=value, ok=value < 1.0)


def _random_cloud(rng, bounds, size):
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + (hi - lo) * rng.random((size, len(bounds)))


def estimate_lipschitz(model, samples=200, seed=0, cloud_size=4):
    """Sampled lower bounds on the Lipschitz constants of dynamics and cost.

    Each sample perturbs state, action, mean-field argument, or all three at
    once, keeps the noise fixed, and records the difference quotient against
    ``|x - x'| + |u - u'| + W1(mu, mu')``. Warns when a quotient exceeds the
    declared constant.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    sb, ab = model.state_bounds, model.action_bounds
    best_f = best_c = 0.0
    for s in range(samples):
        mode = s % 4
        x = _random_cloud(rng, sb, 1)
        u = _random_cloud(rng, ab, 1)
        cloud = _random_cloud(rng, sb, cloud_size)
        x2, u2, cloud2 = x.copy(), u.copy(), cloud.copy()
        if mode in (0, 3):
            x2 = _random_cloud(rng, sb, 1)
        if mode in (1, 3):
            u2 = _random_cloud(rng, ab, 1)
        if mode in (2, 3):
            cloud2 = _random_cloud(rng, sb, cloud_size)
        denom = (np.linalg.norm(x - x2) + np.linalg.norm(u - u2)
                 + w1_matching(cloud, cloud2))
        if denom <= 0:
            continue
        mf, mf2 = DiscreteMeasure.from_points(cloud), DiscreteMeasure.from_points(cloud2)
        wi = model.idio_noise.sample(rng, 1)
        w0 = model.common_noise.sample(rng, 1)
        df = np.linalg.norm(model.step(x, u, mf, wi, w0) - model.step(x2, u2, mf2, wi, w0))
        dc = abs(model.cost(x, u, mf)[0] - model.cost(x2, u2, mf2)[0])
        best_f = max(best_f, df / denom)
        best_c = max(best_c, dc / denom)
    if best_f > model.K_f * (1 + 1e-9):
        warnings.warn(f"sampled Lipschitz ratio of dynamics {best_f:.4g} exceeds K_f={model.K_f}")
    if best_c > model.K_c * (1 + 1e-9):
        warnings.warn(f"sampled Lipschitz ratio of cost {best_c:.4g} exceeds K_c={model.K_c}")
    return best_f, best_c


def check_model_outputs(model, samples=256, seed=0):
    """Fraction of sampled transitions that stay inside the state box."""
    rng = np.random.default_rng(seed)
    x = _random_cloud(rng, model.state_bounds, samples)
    u = _random_cloud(rng, model.action_bounds, samples)
    mf = DiscreteMeasure.from_points(_random_cloud(rng, model.state_bounds, 8))
    nxt = model.step(x, u, mf, model.idio_noise.sample(rng, samples),
                     np.repeat(model.common_noise.sample(rng, 1), samples, axis=0))
    return float(np.mean(model.in_bounds(nxt)))


def cost_sup(model, grid, action_grid):
    """Largest |c| over representatives, atoms and Dirac/uniform mean fields.

    Uses the model's declared ``cost_bound`` when it has one.
    """
    if model.cost_bound is not None:
        return float(model.cost_bound)
    reps, atoms = grid.representatives, action_grid.atoms
    fields = [DiscreteMeasure.from_points(r[None, :]) for r in reps]
    fields.append(DiscreteMeasure.from_points(reps))
    x = np.repeat(reps, len(atoms), axis=0)
    u = np.tile(atoms, (len(reps), 1))
    return max(float(np.max(np.abs(model.cost(x, u, mf)))) for mf in fields)


def horizon_for(beta, cost_bound, tol):
    """Smallest T with beta**T * cost_bound / (1 - beta) <= tol."""
    if cost_bound <= 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - beta) / cost_bound) / math.log(beta)))
