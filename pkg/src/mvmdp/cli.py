"""Command-line front end: ``mvmdp {build,solve,simulate,regret,sweep,check}``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 an artifact does not match the config or is malformed.
"""
import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as aio
from .config import RunConfig, load_config
from .core_model import cost_sup, horizon_for, validate_contraction
from .diagnostics import (bound_discretization, bound_regret, check_value_lipschitz,
                          estimate_M_n, estimate_m_n)
from .exceptions import (ArtifactMismatch, CapExceeded, ConfigError, NonStochasticKernel,
                         UnreachableState)
from .mdp_build import build
from .pipeline import (discretization_errors, evaluate_regret, reference_value, solve_model,
                       state_of_cloud)
from .simulate import RolloutConfig, brute_force_oracle, initial_cloud, regret, rollout_team
from .solver import to_agent_policy, value_iteration

log = logging.getLogger("mvmdp")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_ARTIFACT = 0, 1, 2, 3


# -- helpers --------------------------------------------------------------------

def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _need_config(args):
    if args.cfg is None:
        raise ConfigError(f"'{args.command}' needs --config")
    return args.cfg


def _objects(cfg):
    model = cfg.build_model()
    return model, cfg.build_grid(model), cfg.build_actions(model)


def _init_cloud(cfg, model, agents=None):
    agents = agents or cfg.n_agents
    if cfg.init == "points":
        pts = np.asarray(cfg.init_points, dtype=float)
        if pts.size != agents * model.state_dim:
            raise ConfigError(f"init_points has {pts.size} numbers, need {agents * model.state_dim}")
        return pts.reshape(agents, model.state_dim)
    return initial_cloud(model, agents, cfg.init, seed=cfg.init_seed)


def _reference_grid(cfg, model, grid, finest=None):
    if cfg.reference_cells is not None:
        return cfg.build_grid(model, cfg.reference_cells)
    if cfg.cells is None and cfg.edges is None:
        return grid  # the model's own grid is already exact
    base = finest if finest is not None else np.array(grid.shape)
    return cfg.build_grid(model, [int(4 * c) for c in np.broadcast_to(base, (len(grid.shape),))])


def _baseline(cfg, model, ref_grid, agrid, cloud, threads):
    if cfg.baseline != "reference":
        return float(cfg.baseline)
    try:
        value, _ = reference_value(model, ref_grid, agrid, cloud, cfg.weight_scheme(), cfg.mc(),
                                   tol=min(cfg.tol, 1e-10), threads=threads)
    except CapExceeded as exc:
        raise ConfigError(f"reference model too large ({exc}); set [simulate] baseline") from None
    return value


def _load_policy(cfg, path, grid, agrid):
    pol, pgrid, pactions, header = aio.policy_from_text(_read(path))
    if header["config_hash"] not in ("-", cfg.build_hash()):
        raise ArtifactMismatch(f"{path} was built from a different config "
                               f"({header['config_hash']} vs {cfg.build_hash()})")
    if pgrid != grid or not np.array_equal(pactions.atoms, agrid.atoms):
        raise ArtifactMismatch(f"grid or action atoms in {path} differ from the config")
    return pol


def _rollout_config(cfg, model, grid, agrid, agents):
    T = cfg.horizon or horizon_for(model.beta, cost_sup(model, grid, agrid), cfg.truncation_tol)
    fb = cfg.feedback_channel
    return RolloutConfig(agents=agents, horizon=T, rollouts=cfg.rollouts,
                         seed=cfg.require_seed(), feedback=fb,
                         n=0 if fb == "full" else cfg.feedback_n, resample=cfg.resample)


# -- commands -------------------------------------------------------------------

def cmd_build(args):
    cfg = _need_config(args)
    model, grid, agrid = _objects(cfg)
    t0 = time.perf_counter()
    mdp = _build(cfg, model, grid, agrid, args.threads)
    log.info("built %d states / %d pairs in %.2fs", mdp.n_states, mdp.n_pairs,
             time.perf_counter() - t0)
    out = Path(cfg.out)
    _write(out / "mdp.txt", aio.mdp_to_text(mdp, grid, agrid, cfg.build_hash()))
    _write(out / "build.log", aio.records_csv([dict(
        config_hash=cfg.build_hash(), model=model.name, variant=cfg.variant,
        population=cfg.population, cells=grid.size, atoms=agrid.size, states=mdp.n_states,
        pairs=mdp.n_pairs, nnz=mdp.kernel.nnz, beta=model.beta, L_X=grid.L_X,
        contraction=validate_contraction(model).value)]))
    print(f"built {cfg.variant} MDP: {mdp.n_states} states, {mdp.n_pairs} actions -> {out / 'mdp.txt'}")
    return EXIT_OK


def _build(cfg, model, grid, agrid, threads):
    return build(model, grid, agrid, cfg.variant, cfg.population, cfg.weight_scheme(), cfg.mc(),
                 threads)


def cmd_solve(args):
    cfg = args.cfg
    path = Path(args.artifact) if args.artifact else Path(cfg.out if cfg else ".") / "mdp.txt"
    text = _read(path)
    header = aio.mdp_header(text)
    if cfg is not None and header["config_hash"] not in ("-", cfg.build_hash()):
        raise ArtifactMismatch(f"{path} was built from a different config")
    try:
        mdp = aio.mdp_from_text(text)
    except NonStochasticKernel as exc:
        raise ArtifactMismatch(f"{path}: {exc}") from None
    tol = args.tol or (cfg.tol if cfg else 1e-8)
    res = value_iteration(mdp, tol)
    out = Path(args.out) if args.out else (Path(cfg.out) if cfg else path.parent)
    sha = aio.digest(text)
    _write(out / "solution.txt", aio.solution_to_text(res, sha, header["config_hash"], tol))
    _write(out / "values.csv", aio.values_csv(mdp, res))
    if header["grid"] != "-":
        grid, agrid = aio.grid_from_json(header["grid"]), aio.actions_from_json(header["actions"])
        pol = to_agent_policy(mdp, res.policy)
        _write(out / "policy.txt", aio.policy_to_text(pol, grid, agrid, sha, header["config_hash"],
                                                      meta=mdp.meta))
    print(f"solved in {res.iterations} sweeps (converged={res.converged}); "
          f"value range [{float(res.values.min())!r}, {float(res.values.max())!r}]")
    return EXIT_OK


def _policy_path(args, cfg):
    return Path(args.artifact) if args.artifact else Path(cfg.out) / "policy.txt"


def _check_agents(cfg, pol):
    if cfg.feedback_channel == "full" and cfg.n_agents != pol.population:
        raise ConfigError(f"full feedback needs agents = {pol.population}, got {cfg.n_agents}")


def cmd_simulate(args):
    cfg = _need_config(args)
    model, grid, agrid = _objects(cfg)
    pol = _load_policy(cfg, _policy_path(args, cfg), grid, agrid)
    _check_agents(cfg, pol)
    cloud = _init_cloud(cfg, model)
    rc = _rollout_config(cfg, model, grid, agrid, len(cloud))
    est = rollout_team(model, grid, agrid, pol, cloud, rc, return_trajectory=cfg.trajectory)
    if cfg.trajectory:
        est, traj = est
    out = Path(cfg.out)
    _write(out / "estimate.csv", aio.estimate_csv(est, rollouts=rc.rollouts, horizon=rc.horizon,
                                                  agents=rc.agents, feedback=rc.feedback))
    if cfg.trajectory:
        _write(out / "trajectory.csv", aio.trajectory_csv(traj))
    print(f"cost {est.mean!r} +- {est.stderr!r} (truncation {est.truncation_bound!r})")
    return EXIT_OK


def cmd_regret(args):
    cfg = _need_config(args)
    model, grid, agrid = _objects(cfg)
    pol = _load_policy(cfg, _policy_path(args, cfg), grid, agrid)
    _check_agents(cfg, pol)
    cloud = _init_cloud(cfg, model)
    base = _baseline(cfg, model, _reference_grid(cfg, model, grid), agrid, cloud, args.threads)
    rc = _rollout_config(cfg, model, grid, agrid, len(cloud))
    res = regret(model, grid, agrid, pol, cloud, rc, base)
    rec = dict(cells=grid.size, L_X=grid.L_X, agents=rc.agents, rollouts=rc.rollouts,
               horizon=rc.horizon, feedback=rc.feedback, cost=res.estimate.mean,
               stderr=res.estimate.stderr, truncation_bound=res.estimate.truncation_bound,
               baseline=res.baseline, regret=res.regret, tolerance=res.tolerance)
    if validate_contraction(model).ok and cfg.variant == "finite":
        rec["bound_regret"] = bound_regret(model.K_c, model.K_f, model.beta, grid.L_X)
    _write(Path(cfg.out) / "regret.csv", aio.records_csv([rec]))
    print(f"regret {res.regret!r} (tolerance {res.tolerance!r})")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _need_config(args)
    param = args.param or cfg.sweep_param
    values = tuple(args.values) if args.values is not None else cfg.sweep_values
    if param is None:
        raise ConfigError("sweep needs a parameter (--param or [sweep] param)")
    if not values:
        raise ConfigError("sweep needs at least one value")
    model = cfg.build_model()
    agrid = cfg.build_actions(model)
    mc = cfg.mc()
    records, base = [], None
    for v in values:
        sub = (cfg.replace(cells=(int(v),) * model.state_dim, edges=None) if param == "M"
               else cfg.replace(population=int(v), n=int(v)))
        grid = sub.build_grid(model)
        solved = solve_model(model, grid, agrid, sub.variant, sub.population, sub.weight_scheme(),
                             mc, sub.tol, args.threads)
        cloud = _init_cloud(sub, model)
        if base is None:
            ref_grid = _reference_grid(cfg, model, grid, finest=max(values) if param == "M" else None)
            base = _baseline(cfg, model, ref_grid, agrid, cloud, args.threads)
        fb = sub.feedback_channel
        res, T, bounds = evaluate_regret(
            model, solved, cloud, base, sub.rollouts, sub.require_seed(), fb,
            0 if fb == "full" else sub.feedback_n, sub.horizon, sub.truncation_tol, sub.resample)
        rec = dict(param=param, value=int(v), cells=grid.size, population=sub.population,
                   states=solved.mdp.n_states, pairs=solved.mdp.n_pairs, L_X=grid.L_X,
                   value_at_init=float(solved.values[state_of_cloud(solved.mdp, grid, cloud)])
                   if sub.variant != "finite" or len(cloud) == sub.population else "",
                   cost=res.estimate.mean, stderr=res.estimate.stderr,
                   truncation_bound=res.estimate.truncation_bound, baseline=base,
                   regret=res.regret, tolerance=res.tolerance, horizon=T)
        if sub.variant == "finite":
            rec.update(bounds)
        if param == "n":
            m_n = estimate_m_n(grid.size, int(v), resolution=1e-2)
            M_n = estimate_M_n(grid.size, int(v), samples=2000, seed=sub.require_seed())
            rec.update(m_n=m_n.value, M_n=M_n.value, M_n_stderr=M_n.stderr)
        records.append(rec)
        log.info("sweep %s=%s regret %.6g", param, v, res.regret)
    _write(Path(cfg.out) / f"sweep_{param}.csv", aio.records_csv(records))
    print(aio.records_csv(records), end="")
    return EXIT_OK


# -- check ----------------------------------------------------------------------

DEFAULT_SUITE = (
    ("switch k=2 N=2", RunConfig(model="switch-2state", model_params=(("states", 2),),
                                 population=2, seed=0)),
    ("switch k=3 N=3", RunConfig(model="switch-2state", model_params=(("states", 3),),
                                 population=3, seed=0)),
    ("crowd M=4 N=2", RunConfig(model="crowd-1d", cells=(4,), reference_cells=(16,),
                                population=2, seed=0)),
    ("crowd aggregation M=3 n=2", RunConfig(model="crowd-1d", cells=(3,), variant="aggregation",
                                            population=2, seed=0)),
    ("crowd sampling M=3 n=2", RunConfig(model="crowd-1d", cells=(3,), variant="sampling",
                                         population=2, seed=0)),
)


class _Report:
    def __init__(self, label=""):
        self.label = label
        self.failed = 0

    def line(self, status, name, detail):
        if status == "FAIL":
            self.failed += 1
        prefix = f"[{self.label}] " if self.label else ""
        print(f"{status} {prefix}{name}: {detail}")


def _check_kernel(rep, mdp):
    try:
        mdp.check_stochastic()
    except NonStochasticKernel as exc:
        rep.line("FAIL", "kernel_stochastic", f"row {exc.row} sums to {exc.total!r}")
        return False
    except ValueError as exc:
        rep.line("FAIL", "kernel_stochastic", str(exc))
        return False
    rep.line("PASS", "kernel_stochastic", f"{mdp.n_pairs} rows sum to 1 within 1e-9")
    return True


def check_mdp_file(path):
    rep = _Report(str(path))
    try:
        mdp = aio.mdp_from_text(_read(path), validate=False)
    except ArtifactMismatch as exc:
        rep.line("FAIL", "parse", str(exc))
        return rep
    if _check_kernel(rep, mdp) and 0 <= mdp.beta < 1:
        res = value_iteration(mdp)
        worst = float(res.gap_ratios.max()) if len(res.gaps) > 1 else 0.0
        status = "PASS" if worst <= mdp.beta + 1e-12 else "FAIL"
        rep.line(status, "solver_contraction", f"max gap ratio {worst!r} vs beta {mdp.beta!r}")
    return rep


def check_config(cfg, label="", threads=1):
    rep = _Report(label)
    model, grid, agrid = _objects(cfg)
    mdp = _build(cfg, model, grid, agrid, threads)
    if not _check_kernel(rep, mdp):
        return rep
    res = value_iteration(mdp, cfg.tol)
    worst = float(res.gap_ratios.max()) if len(res.gaps) > 1 else 0.0
    rep.line("PASS" if worst <= model.beta + 1e-12 else "FAIL", "solver_contraction",
             f"max gap ratio {worst!r} vs beta {model.beta!r}")

    finite_noise = model.idio_noise.finite and model.common_noise.finite
    m, k, N = grid.size, agrid.size, cfg.population
    if cfg.variant != "finite":
        rep.line("SKIP", "oracle_equivalence", "oracle applies to finite-population models")
    elif not finite_noise:
        rep.line("SKIP", "oracle_equivalence", "noise has infinite support")
    elif (m ** N) ** 2 * k ** N > cfg.oracle_cap:
        rep.line("SKIP", "oracle_equivalence", f"oracle size exceeds cap {cfg.oracle_cap}")
    else:
        orc = brute_force_oracle(model, grid, agrid, N, tol=min(cfg.tol, 1e-10))
        gap = max(abs(orc.value_at(s) - v) for s, v in zip(mdp.states, res.values))
        rep.line("PASS" if gap <= 1e-6 else "FAIL", "oracle_equivalence",
                 f"max |oracle - model| = {float(gap)!r} (tol 1e-6)")
        rep.line("PASS" if orc.spread <= 1e-9 else "FAIL", "exchangeability",
                 f"max spread over permutations {float(orc.spread)!r} (tol 1e-9)")

    contraction = validate_contraction(model)
    if not contraction.ok:
        why = f"2*K_f*beta = {contraction.value!r} >= 1"
        rep.line("SKIP", "value_lipschitz", why)
        rep.line("SKIP", "discretization_bound", why)
        return rep
    lip = check_value_lipschitz(mdp, res.values, grid, model.K_c, model.K_f,
                                pairs=cfg.lipschitz_pairs, seed=cfg.require_seed())
    rep.line("PASS" if lip.satisfied else "FAIL", "value_lipschitz",
             f"worst ratio {float(lip.lhs)!r} <= {float(lip.rhs)!r} over {lip.inputs['pairs']} pairs")
    if cfg.variant != "finite":
        rep.line("SKIP", "discretization_bound", "bound is stated for finite-population models")
        return rep
    ref_grid = _reference_grid(cfg, model, grid)
    if ref_grid == grid:
        rep.line("SKIP", "discretization_bound", "grid is exact for this model")
        return rep
    coarse = solve_model(model, grid, agrid, "finite", N, cfg.weight_scheme(), cfg.mc(),
                         cfg.tol, threads)
    ref = solve_model(model, ref_grid, agrid, "finite", N, cfg.weight_scheme(), cfg.mc(),
                      min(cfg.tol, 1e-10), threads)
    err = float(discretization_errors(coarse, ref).max())
    bound = bound_discretization(model.K_c, model.K_f, model.beta, grid.L_X)
    rep.line("PASS" if err <= bound else "FAIL", "discretization_bound",
             f"max error {err!r} <= {bound!r} against {ref_grid.size} reference cells")
    return rep


def cmd_check(args):
    failed = 0
    if args.artifact:
        failed += check_mdp_file(Path(args.artifact)).failed
    elif args.cfg is not None:
        failed += check_config(args.cfg, threads=args.threads).failed
    else:
        for label, cfg in DEFAULT_SUITE:
            failed += check_config(cfg, label, args.threads).failed
    print(f"{'FAILED' if failed else 'OK'}: {failed} failing check(s)")
    return EXIT_CHECK if failed else EXIT_OK


# -- entry point ----------------------------------------------------------------

COMMANDS = {"build": cmd_build, "solve": cmd_solve, "simulate": cmd_simulate,
            "regret": cmd_regret, "sweep": cmd_sweep, "check": cmd_check}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--out", help="output directory (overrides [run] out)")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    common.add_argument("--tol", type=float, help="solver tolerance (overrides [solve] tol)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="mvmdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build the finite MDP described by the config")
    for name, what in (("solve", "MDP file (default OUT/mdp.txt)"),
                       ("simulate", "policy file (default OUT/policy.txt)"),
                       ("regret", "policy file (default OUT/policy.txt)"),
                       ("check", "MDP file to validate instead of building")):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("artifact", nargs="?", help=what)
    sw = sub.add_parser("sweep", parents=[common], help="vary M or n and tabulate the results")
    sw.add_argument("--param", choices=("M", "n"))
    sw.add_argument("--values", type=lambda s: [int(v) for v in s.split(",") if v.strip()])
    return p


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.tol is not None and not args.tol > 0:
            raise ConfigError("--tol must be positive")
        args.cfg = None
        if args.config is not None:
            cfg = load_config(args.config)
            over = {k: v for k, v in (("seed", args.seed), ("tol", args.tol), ("out", args.out))
                    if v is not None}
            args.cfg = cfg.replace(**over) if over else cfg
        return COMMANDS[args.command](args)
    except ArtifactMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (ConfigError, CapExceeded, UnreachableState, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
