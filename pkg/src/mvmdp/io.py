"""Plain-text artifacts: built MDPs, solutions, agent policies and CSV exports.

Every artifact is newline-delimited text. A header of ``key value`` lines
is followed by ``== section`` blocks of comma-separated decimal rows and a
closing ``== end``. Floats are written with ``repr`` so they round-trip
exactly.

MDP file::

    mvmdp-mdp 1
    kind joint|rule
    beta <float>
    states <S>  cells <M>  pairs <P>  payload_shape <a> <b>
    config_hash <hex or ->
    meta <json>   grid <json>   actions <json>
    == states      one line per state: counts
    == pairs       one line per (state, action): state,cost,payload...
    == kernel      one line per nonzero: pair,next_state,probability
    == end
"""
import csv
import hashlib
import io
import json

import numpy as np
from scipy import sparse

from .core_model import ActionGrid, StateGrid
from .exceptions import ArtifactMismatch
from .mdp_build import FiniteMeasureMDP
from .solver import AgentPolicy, SolveResult


def fmt(x):
    """Round-trip decimal text for a scalar."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _row(values):
    return ",".join(fmt(v) for v in values)


def digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _split(text, magic):
    lines = text.splitlines()
    if not lines or lines[0] != magic:
        raise ArtifactMismatch(f"not a {magic.split()[0]} file (first line {lines[:1]!r})")
    header, sections, current = {}, {}, None
    for ln in lines[1:]:
        if ln.startswith("== "):
            current = ln[3:].strip()
            if current == "end":
                return header, sections
            sections[current] = []
        elif current is None:
            key, _, val = ln.partition(" ")
            header[key] = val
        elif ln:
            sections[current].append(ln)
    raise ArtifactMismatch("artifact is truncated (no '== end' line)")


def grid_from_json(text):
    d = json.loads(text)
    return StateGrid(d["edges"], representatives=d["representatives"])


def actions_from_json(text):
    return ActionGrid(np.array(json.loads(text), dtype=float))


# -- MDP ----------------------------------------------------------------------

def mdp_to_text(mdp, grid=None, action_grid=None, config_hash="-"):
    pshape = mdp.payload.shape[1:]
    out = [
        "mvmdp-mdp 1",
        f"kind {mdp.kind}",
        f"beta {fmt(mdp.beta)}",
        f"states {mdp.n_states}",
        f"cells {mdp.states.shape[1]}",
        f"pairs {mdp.n_pairs}",
        "payload_shape " + " ".join(str(d) for d in pshape),
        f"config_hash {config_hash}",
        f"meta {_dumps(mdp.meta)}",
        f"grid {_dumps(grid.describe()) if grid is not None else '-'}",
        f"actions {_dumps(action_grid.atoms.tolist()) if action_grid is not None else '-'}",
        "== states",
    ]
    out.extend(_row(s) for s in mdp.states)
    out.append("== pairs")
    owner = mdp.pair_state()
    as_int = mdp.kind == "joint"
    for p in range(mdp.n_pairs):
        flat = mdp.payload[p].ravel()
        flat = flat.astype(np.int64) if as_int else flat
        out.append(_row([int(owner[p]), float(mdp.cost[p]), *flat]))
    out.append("== kernel")
    K = mdp.kernel.tocsr()
    for p in range(mdp.n_pairs):
        lo, hi = K.indptr[p], K.indptr[p + 1]
        for j, v in zip(K.indices[lo:hi], K.data[lo:hi]):
            out.append(f"{p},{int(j)},{fmt(v)}")
    out.append("== end")
    return "\n".join(out) + "\n"


def mdp_from_text(text, validate=True):
    """Parse an MDP file. With ``validate`` the kernel rows are checked."""
    h, sec = _split(text, "mvmdp-mdp 1")
    try:
        S, M, P = int(h["states"]), int(h["cells"]), int(h["pairs"])
        pshape = tuple(int(d) for d in h["payload_shape"].split())
        states = np.array([[int(c) for c in ln.split(",")] for ln in sec["states"]],
                          dtype=np.int64).reshape(S, M)
        owner, cost, payload = [], [], []
        for ln in sec["pairs"]:
            f = ln.split(",")
            owner.append(int(f[0]))
            cost.append(float(f[1]))
            payload.append([float(v) for v in f[2:]])
        if len(owner) != P:
            raise ArtifactMismatch(f"header says {P} pairs, found {len(owner)}")
        trip = [ln.split(",") for ln in sec["kernel"]]
        rows = np.array([int(t[0]) for t in trip], dtype=np.int64)
        cols = np.array([int(t[1]) for t in trip], dtype=np.int64)
        vals = np.array([float(t[2]) for t in trip])
    except (KeyError, ValueError, IndexError) as exc:
        raise ArtifactMismatch(f"malformed MDP file: {exc}") from None
    if np.any(np.diff(owner) < 0):
        raise ArtifactMismatch("pairs are not grouped by state")
    offsets = np.concatenate([[0], np.cumsum(np.bincount(owner, minlength=S))])
    kernel = sparse.csr_matrix((vals, (rows, cols)), shape=(P, S))
    mdp = FiniteMeasureMDP(states=states, offsets=offsets,
                           payload=np.array(payload).reshape((P,) + pshape),
                           kind=h["kind"], kernel=kernel, cost=np.array(cost),
                           beta=float(h["beta"]), meta=json.loads(h["meta"]))
    if validate:
        mdp.check_stochastic()
    return mdp


def mdp_header(text):
    return _split(text, "mvmdp-mdp 1")[0]


# -- solutions and policies ---------------------------------------------------

def solution_to_text(result, mdp_sha, config_hash="-", tol=None):
    out = [
        "mvmdp-solution 1",
        f"mdp_sha256 {mdp_sha}",
        f"config_hash {config_hash}",
        f"tol {fmt(tol) if tol is not None else '-'}",
        f"iterations {result.iterations}",
        f"converged {fmt(result.converged)}",
        f"states {len(result.values)}",
        "== values",
    ]
    out.extend(f"{s},{fmt(v)},{int(a)}"
               for s, (v, a) in enumerate(zip(result.values, result.policy)))
    out.append("== gaps")
    out.extend(f"{k},{fmt(g)}" for k, g in enumerate(result.gaps))
    out.append("== end")
    return "\n".join(out) + "\n"


def solution_from_text(text):
    h, sec = _split(text, "mvmdp-solution 1")
    vals = [ln.split(",") for ln in sec["values"]]
    res = SolveResult(values=np.array([float(v[1]) for v in vals]),
                      policy=np.array([int(v[2]) for v in vals], dtype=np.int64),
                      iterations=int(h["iterations"]),
                      gaps=np.array([float(ln.split(",")[1]) for ln in sec["gaps"]]),
                      converged=h["converged"] == "1")
    return res, h


def policy_to_text(policy, grid, action_grid, mdp_sha="-", config_hash="-", meta=None):
    out = [
        "mvmdp-policy 1",
        f"mdp_sha256 {mdp_sha}",
        f"config_hash {config_hash}",
        f"population {policy.population}",
        f"cells {policy.n_cells}",
        f"atoms {policy.n_actions}",
        f"meta {_dumps(meta or {})}",
        f"grid {_dumps(grid.describe())}",
        f"actions {_dumps(action_grid.atoms.tolist())}",
        "== rules",
    ]
    for s, r in zip(policy.states, policy.rules):
        out.append(_row(s) + "|" + _row(r.ravel()))
    out.append("== end")
    return "\n".join(out) + "\n"


def policy_from_text(text):
    """Returns ``(policy, grid, action_grid, header)``."""
    h, sec = _split(text, "mvmdp-policy 1")
    m, k = int(h["cells"]), int(h["atoms"])
    states, rules = [], []
    for ln in sec["rules"]:
        left, right = ln.split("|")
        states.append([int(c) for c in left.split(",")])
        rules.append(np.array([float(v) for v in right.split(",")]).reshape(m, k))
    pol = AgentPolicy(np.array(states), np.array(rules), population=int(h["population"]))
    return pol, grid_from_json(h["grid"]), actions_from_json(h["actions"]), h


# -- CSV ----------------------------------------------------------------------

def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v
                    for v in r])
    return buf.getvalue()


def values_csv(mdp, result):
    m = mdp.states.shape[1]
    header = [f"c{i}" for i in range(m)] + ["value", "action"]
    return _csv(header, ([*s, v, a] for s, v, a in
                         zip(mdp.states, result.values, result.policy)))


def records_csv(records):
    """Long-form CSV of dict records; columns are the union of keys in first-seen order."""
    cols = []
    for r in records:
        cols.extend(k for k in r if k not in cols)
    return _csv(cols, ([r.get(c, "") for c in cols] for r in records))


def reports_csv(reports):
    return records_csv([r.row() for r in reports])


def estimate_csv(est, **extra):
    rec = dict(mean=est.mean, stderr=est.stderr, truncation_bound=est.truncation_bound)
    rec.update(extra)
    return records_csv([rec])


def trajectory_csv(traj):
    """``traj`` as returned by ``rollout_team(..., return_trajectory=True)``."""
    if not traj:
        return "t,rollout,agent,cost\n"
    _, _, x, u, _ = traj[0]
    header = (["t", "rollout", "agent"] + [f"x{i}" for i in range(x.shape[1])]
              + [f"u{i}" for i in range(u.shape[1])] + ["cost"])
    rows = ([t, r, i, *x[i], *u[i], c[i]]
            for t, r, x, u, c in traj for i in range(len(x)))
    return _csv(header, rows)


__all__ = [
    "actions_from_json", "digest", "estimate_csv", "fmt", "grid_from_json", "mdp_from_text",
    "mdp_header", "mdp_to_text", "policy_from_text", "policy_to_text", "records_csv",
    "reports_csv", "solution_from_text", "solution_to_text", "trajectory_csv", "values_csv",
]
