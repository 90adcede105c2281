"""Closed-form error bounds, aggregation/sampling error constants, and
inequality checks against solved models."""
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapExceeded, ContractionViolated
from .measures import (enumerate_PN, multinomial_pmf, multiset_count, nearest_index,
                       w1_matching)


def _require_contraction(K_f, beta):
    if 2 * K_f * beta >= 1:
        raise ContractionViolated(f"2*K_f*beta = {2 * K_f * beta:.6g} is not below 1")


def bound_action(K_c, K_f, beta, L_U):
    """Value loss from restricting actions to a finite grid with covering radius L_U."""
    _require_contraction(K_f, beta)
    return K_c / ((1 - 2 * K_f * beta) * (1 - beta)) * L_U


def bound_discretization(K_c, K_f, beta, L_X):
    """Gap between finite-model and true optimal values for cell diameter L_X."""
    _require_contraction(K_f, beta)
    return 2 * K_c / ((1 - beta) * (1 - 2 * beta * K_f)) * L_X


def bound_regret(K_c, K_f, beta, L_X):
    """Regret of the finite-model policy applied to the original team."""
    _require_contraction(K_f, beta)
    return 4 * K_c / ((1 - beta) ** 2 * (1 - 2 * beta * K_f)) * L_X


def bound_value_lipschitz(K_c, K_f, beta):
    """Lipschitz constant of the optimal value in the W1 distance."""
    _require_contraction(K_f, beta)
    return 2 * K_c / (1 - 2 * K_f * beta)


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    inputs: dict = field(default_factory=dict)
    witness: tuple = None

    def row(self):
        out = {"name": self.name, "lhs": repr(float(self.lhs)), "rhs": repr(float(self.rhs)),
               "satisfied": self.satisfied}
        out.update({k: repr(v) if isinstance(v, float) else v for k, v in self.inputs.items()})
        return out


def simplex_lattice(support_size, denominator, cap=5_000_000):
    """All points of the simplex whose coordinates are multiples of 1/denominator."""
    return enumerate_PN(support_size, denominator, cap) / denominator


def _aggregation_gaps(points, n):
    cand = enumerate_PN(points.shape[1], n) / n
    out = np.empty(len(points))
    step = max(1, 2_000_000 // cand.size)
    for lo in range(0, len(points), step):
        chunk = points[lo:lo + step]
        hit = nearest_index(chunk, cand)
        out[lo:lo + step] = np.abs(chunk - cand[hit]).sum(axis=1)
    return out


@dataclass(frozen=True)
class SearchEstimate:
    value: float
    argmax: np.ndarray
    searched: int
    method: str
    resolution: float = None
    seed: int = None
    stderr: float = None


def estimate_m_n(support_size, n, search="grid", resolution=1e-3, samples=10_000, seed=0,
                 cap=5_000_000):
    """Largest distance from a simplex point to its nearest n-agent measure.

    ``grid`` searches the lattice with spacing ``resolution`` (rounded to
    ``1/D`` with ``D`` a multiple of ``2 n`` so that midpoints are included);
    ``sampled`` draws Dirichlet(1) points. Either way the result is a lower
    bound on the supremum.
    """
    if search == "grid":
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        denom = 2 * n * max(1, math.ceil(1.0 / (resolution * 2 * n)))
        if multiset_count(support_size, denom) > cap:
            raise CapExceeded("simplex lattice", multiset_count(support_size, denom), cap)
        pts = simplex_lattice(support_size, denom, cap)
        res = 1.0 / denom
    elif search == "sampled":
        if samples < 1:
            raise ValueError("need at least one sample")
        pts = np.random.default_rng(seed).dirichlet(np.ones(support_size), size=samples)
        res = None
    else:
        raise ValueError(f"unknown search {search!r}")
    gaps = _aggregation_gaps(pts, n)
    i = int(np.argmax(gaps))
    return SearchEstimate(value=float(gaps[i]), argmax=pts[i], searched=len(pts),
                          method=search, resolution=res, seed=seed if search == "sampled" else None)


def expected_sampling_error(mu, n, samples, rng):
    """Monte Carlo mean and standard error of ``W1(mu, empirical of n draws)``."""
    mu = np.asarray(mu, dtype=float)
    draws = rng.multinomial(n, mu, size=samples) / n
    d = np.abs(draws - mu[None, :]).sum(axis=1)
    se = float(d.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return float(d.mean()), se


def exact_sampling_error(mu, n):
    """``E[W1(mu, empirical of n draws)]`` by summing over all count outcomes."""
    mu = np.asarray(mu, dtype=float)
    states = enumerate_PN(len(mu), n)
    return float(multinomial_pmf(states, mu) @ np.abs(states / n - mu).sum(axis=1))


def estimate_M_n(support_size, n, samples=2_000, seed=0, points=None, denominator=None):
    """Largest Monte Carlo sampling error over a set of simplex points.

    The search set is ``points`` if given, else the lattice with spacing
    ``1/denominator`` (default ``2 n``). Each point gets its own stream so the
    result does not depend on evaluation order.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if points is None:
        points = simplex_lattice(support_size, denominator or 2 * n)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    best, arg, best_se = -1.0, None, None
    for i, mu in enumerate(points):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        val, se = expected_sampling_error(mu, n, samples, rng)
        if val > best:
            best, arg, best_se = val, mu, se
    return SearchEstimate(value=best, argmax=arg, searched=len(points), method="sampled",
                          seed=seed, stderr=best_se)


def _state_distance(mdp, grid, a, b):
    if mdp.kind == "rule":
        n = mdp.population
        return float(np.abs(mdp.states[a] - mdp.states[b]).sum() / n)
    reps = grid.representatives
    cloud_a = np.repeat(reps, mdp.states[a], axis=0)
    cloud_b = np.repeat(reps, mdp.states[b], axis=0)
    return w1_matching(cloud_a, cloud_b)


def check_value_lipschitz(mdp, values, grid, K_c, K_f, pairs=500, seed=0):
    """Worst value-gap to distance ratio over sampled pairs of distinct states.

    Finite-population states are compared through the minimal matching
    distance of their representative clouds; infinite-population states
    through the coordinate-gap distance on the simplex.
    """
    beta = mdp.beta
    _require_contraction(K_f, beta)
    rhs = bound_value_lipschitz(K_c, K_f, beta)
    values = np.asarray(getattr(values, "values", values), dtype=float)
    s = mdp.n_states
    rng = np.random.default_rng(seed)
    all_pairs = s * (s - 1) // 2
    if all_pairs <= pairs:
        cand = [(i, j) for i in range(s) for j in range(i + 1, s)]
    else:
        cand = []
        while len(cand) < pairs:
            i, j = rng.integers(s, size=2)
            if i != j:
                cand.append((int(i), int(j)))
    worst, witness = 0.0, None
    for i, j in cand:
        d = _state_distance(mdp, grid, i, j)
        ratio = abs(values[i] - values[j]) / d
        if ratio > worst:
            worst, witness = ratio, (i, j)
    return BoundReport(name="value_lipschitz", lhs=worst, rhs=rhs,
                       satisfied=bool(worst <= rhs * (1 + 1e-12)),
                       inputs=dict(K_c=K_c, K_f=K_f, beta=beta, pairs=len(cand),
                                   variant=mdp.meta.get("variant", mdp.kind)),
                       witness=witness)


def report_rows(reports):
    return [r.row() for r in reports]


__all__ = [
    "BoundReport", "SearchEstimate", "bound_action", "bound_discretization", "bound_regret",
    "bound_value_lipschitz", "check_value_lipschitz", "estimate_M_n", "estimate_m_n",
    "exact_sampling_error", "expected_sampling_error", "simplex_lattice",
]
