"""Run configuration read from an INI file (see docs/config.md for the schema)."""
import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .core_model import StateGrid
from .exceptions import ConfigError
from .library import REGISTRY, default_action_grid, default_grid, get_model
from .mdp_build import MCConfig, WeightScheme


@dataclass(frozen=True)
class RunConfig:
    model: str = "crowd-1d"
    model_params: tuple = ()  # sorted (key, value) pairs
    beta: float = None
    cells: tuple = None
    edges: tuple = None
    representatives: tuple = None
    reference_cells: tuple = None
    atoms: tuple = None
    variant: str = "finite"
    population: int = 2
    scheme: str = "dirac"
    scheme_samples: int = 1
    mc_samples: int = 10_000
    seed: int = None
    tol: float = 1e-8
    agents: int = None
    rollouts: int = 200
    horizon: int = None
    truncation_tol: float = 1e-6
    feedback: str = None
    n: int = None
    resample: bool = True
    init: str = "uniform"
    init_seed: int = 0
    init_points: tuple = None
    trajectory: bool = False
    baseline: str = "reference"
    sweep_param: str = None
    sweep_values: tuple = ()
    lipschitz_pairs: int = 500
    oracle_cap: int = 10_000_000
    out: str = "out"

    def __post_init__(self):
        if self.model not in REGISTRY:
            raise ConfigError(f"unknown model {self.model!r}; available: {sorted(REGISTRY)}")
        if self.variant not in ("finite", "aggregation", "sampling"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        for name in ("tol", "truncation_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.population < 1 or self.rollouts < 1 or self.mc_samples < 1:
            raise ConfigError("population, rollouts and mc_samples must be positive")
        if self.feedback not in (None, "full", "aggregated", "sampled"):
            raise ConfigError(f"unknown feedback {self.feedback!r}")
        if self.init not in ("uniform", "center", "points"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.init == "points" and self.init_points is None:
            raise ConfigError("init = points needs init_points")
        if self.baseline != "reference":
            try:
                float(self.baseline)
            except ValueError:
                raise ConfigError("baseline must be 'reference' or a number") from None
        if self.sweep_param not in (None, "M", "n"):
            raise ConfigError("sweep param must be M or n")

    # -- derived objects ------------------------------------------------------

    def build_model(self):
        params = dict(self.model_params)
        if self.beta is not None:
            params["beta"] = self.beta
        try:
            return get_model(self.model, **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {self.model}: {exc}") from None

    def build_grid(self, model, cells=None):
        if cells is None and self.edges is not None:
            reps = None if self.representatives is None else np.array(self.representatives)
            return StateGrid([list(e) for e in self.edges], representatives=reps)
        cells = cells if cells is not None else self.cells
        return default_grid(model, None if cells is None else list(cells))

    def build_actions(self, model):
        return default_action_grid(model, None if self.atoms is None else list(self.atoms))

    def weight_scheme(self):
        return WeightScheme(self.scheme, self.scheme_samples)

    def mc(self):
        return MCConfig(samples=self.mc_samples, seed=self.require_seed())

    def require_seed(self):
        if self.seed is None:
            raise ConfigError("a seed is required ([run] seed or --seed)")
        return self.seed

    @property
    def n_agents(self):
        return self.agents if self.agents is not None else self.population

    @property
    def feedback_channel(self):
        if self.feedback is not None:
            return self.feedback
        return {"finite": "full", "aggregation": "aggregated", "sampling": "sampled"}[self.variant]

    @property
    def feedback_n(self):
        return self.n if self.n is not None else self.population

    def build_hash(self):
        """Digest of every field a built MDP depends on."""
        keys = ("model", "model_params", "beta", "cells", "edges", "representatives", "atoms",
                "variant", "population", "scheme", "scheme_samples", "mc_samples", "seed")
        blob = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


SCHEMA = {
    "run": {"seed": "int", "out": "str"},
    "model": {"name": "str", "beta": "float"},  # other keys go to the model factory
    "grid": {"cells": "ints", "edges": "edges", "representatives": "floats",
             "reference_cells": "ints"},
    "actions": {"atoms": "floats"},
    "mdp": {"variant": "str", "population": "int", "scheme": "str", "scheme_samples": "int",
            "mc_samples": "int"},
    "solve": {"tol": "float"},
    "simulate": {"agents": "int", "rollouts": "int", "horizon": "int",
                 "truncation_tol": "float", "feedback": "str", "n": "int", "resample": "bool",
                 "init": "str", "init_seed": "int", "init_points": "floats",
                 "trajectory": "bool", "baseline": "str"},
    "sweep": {"param": "str", "values": "ints"},
    "check": {"lipschitz_pairs": "int", "oracle_cap": "int"},
}

_FIELD = {("run", "out"): "out", ("model", "name"): "model", ("sweep", "param"): "sweep_param",
          ("sweep", "values"): "sweep_values"}


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _convert(kind, raw, where):
    try:
        if kind == "str":
            return raw.strip()
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "edges":
            return tuple(tuple(float(v) for v in part.replace(",", " ").split())
                         for part in raw.split(";") if part.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from None
    raise AssertionError(kind)


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    kw, params = {}, {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"[{section}] {key}"
            if section == "model" and key not in SCHEMA["model"]:
                try:
                    params[key] = _number(raw)
                except ValueError:
                    raise ConfigError(f"{where}: model parameters must be numbers") from None
                continue
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {where}")
            if raw.strip() == "":
                continue
            kw[_FIELD.get((section, key), key)] = _convert(SCHEMA[section][key], raw, where)
    kw["model_params"] = tuple(sorted(params.items()))
    return RunConfig(**kw)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, source=str(path))
