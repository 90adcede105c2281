"""scikit-learn style wrapper around build + solve.

``fit`` builds the finite measure-valued MDP for a named model and solves
it. Each row of ``X`` is one flattened agent cloud
``(x_1, ..., x_k)`` with ``k * state_dim`` columns: ``transform`` maps it to
cell counts and ``predict`` to the approximate optimal team cost.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .library import default_action_grid, default_grid, get_model
from .mdp_build import MCConfig, WeightScheme
from .measures import project_to_grid
from .pipeline import solve_model, state_of_cloud


class MeasureMDPApproximator(TransformerMixin, BaseEstimator):
    """Finite-model approximation of the optimal team cost.

    Parameters mirror the build options: ``variant`` is ``finite``,
    ``aggregation`` or ``sampling``, ``population`` is N (finite) or n
    (infinite-population variants), ``cells`` the grid cells per dimension
    (``None`` for the model default).
    """

    def __init__(self, model="crowd-1d", model_params=None, cells=None, action_atoms=None,
                 variant="finite", population=2, scheme="dirac", scheme_samples=1,
                 mc_samples=10_000, tol=1e-8, seed=0, threads=1):
        self.model = model
        self.model_params = model_params
        self.cells = cells
        self.action_atoms = action_atoms
        self.variant = variant
        self.population = population
        self.scheme = scheme
        self.scheme_samples = scheme_samples
        self.mc_samples = mc_samples
        self.tol = tol
        self.seed = seed
        self.threads = threads

    def _validate_params(self):
        if self.variant not in ("finite", "aggregation", "sampling"):
            raise ValueError(f"variant must be finite, aggregation or sampling, got {self.variant!r}")
        if int(self.population) < 1:
            raise ValueError("population must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.seed is None:
            raise ValueError("seed is required")

    def fit(self, X=None, y=None):
        """Build and solve. ``X``, if given, only fixes the expected input width."""
        self._validate_params()
        self.model_ = get_model(self.model, **(self.model_params or {}))
        self.grid_ = default_grid(self.model_, self.cells)
        self.action_grid_ = default_action_grid(self.model_, self.action_atoms)
        self.solved_ = solve_model(
            self.model_, self.grid_, self.action_grid_, self.variant, int(self.population),
            WeightScheme(self.scheme, self.scheme_samples),
            MCConfig(samples=self.mc_samples, seed=self.seed), self.tol, self.threads)
        self.mdp_ = self.solved_.mdp
        self.values_ = self.solved_.values
        self.policy_ = self.solved_.policy()
        if X is not None:
            self.n_features_in_ = self._clouds(X).shape[1] * self.model_.state_dim
        return self

    def _clouds(self, X):
        X = check_array(X, dtype=float)
        dim = self.model_.state_dim
        if X.shape[1] % dim:
            raise ValueError(f"rows must hold whole points of dimension {dim}")
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        clouds = X.reshape(len(X), -1, dim)
        if self.variant == "finite" and clouds.shape[1] != self.mdp_.population:
            raise ValueError(f"finite model needs clouds of {self.mdp_.population} agents, "
                             f"got {clouds.shape[1]}")
        return clouds

    def transform(self, X):
        """Cell counts of each cloud, shape ``(n_samples, n_cells)``."""
        check_is_fitted(self, "solved_")
        return np.stack([project_to_grid(c, self.grid_).array for c in self._clouds(X)])

    def predict(self, X):
        """Optimal finite-model value of the state standing for each cloud."""
        check_is_fitted(self, "solved_")
        return np.array([self.values_[state_of_cloud(self.mdp_, self.grid_, c)]
                         for c in self._clouds(X)])

    def action_proba(self, X):
        """Per-agent action distributions, shape ``(n_samples, agents, n_atoms)``.

        The agents of a cloud observe the cell distribution of the cloud
        itself (full feedback for finite models, its nearest n-agent
        measure otherwise).
        """
        check_is_fitted(self, "solved_")
        out = []
        for c in self._clouds(X):
            s = state_of_cloud(self.mdp_, self.grid_, c)
            out.append(self.policy_.rules[s][self.grid_.quantize(c)])
        return np.stack(out)
