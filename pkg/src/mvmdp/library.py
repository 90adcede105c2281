"""Built-in agent models addressed by name.

``paper-example``
    Control-free growth ``x' = x + E_mu[X]`` with cost ``x``. Lipschitz
    constant of the dynamics is 1, so values blow up once ``beta >= 1/2``.
``crowd-1d``
    Agents on [0, 1] steer toward a target whose position depends on the
    crowd, with a quadratic effort penalty and a congestion term.
``switch-2state``
    Finite toy on the atoms {0, ..., k-1}: each agent climbs one step when
    it pushes, an idiosyncratic slip knocks it one step down, moves saturate
    at the ends, and a common shock resets everybody to 0. Meant for exact
    oracle comparisons; the declared constants hold on the atoms (the
    rounding makes the dynamics discontinuous between them).
"""
import numpy as np

from .core_model import ActionGrid, AgentModel, FiniteNoise, StateGrid

REGISTRY = {}


def register(name):
    def deco(fn):
        REGISTRY[name] = fn
        return fn
    return deco


def get_model(name, **params):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(REGISTRY)}") from None
    return factory(**params)


@register("paper-example")
def paper_example(beta=0.25, horizon=40):
    """Growth model; the box is sized to hold a unit start for ``horizon`` steps."""
    top = 2.0 ** (horizon + 1)

    def dynamics(x, u, mf, w_i, w_0):
        return x + mf.mean()

    def stage_cost(x, u, mf):
        return x[:, 0]

    return AgentModel(
        name="paper-example", state_dim=1, action_dim=1,
        dynamics=dynamics, stage_cost=stage_cost,
        idio_noise=FiniteNoise.none(), common_noise=FiniteNoise.none(),
        K_f=1.0, K_c=1.0, beta=beta,
        state_bounds=[[0.0, top]], action_bounds=[[0.0, 0.0]],
        cost_bound=top, params={"beta": beta, "horizon": horizon},
    )


@register("crowd-1d")
def crowd_1d(beta=0.5, drift=0.25, pull=0.6, herd=0.2, target=0.8, effort=0.1,
             congestion=0.5, idio=0.1, common=0.05):
    """Congestion toy on [0, 1] with actions in [-1, 1]."""

    def dynamics(x, u, mf, w_i, w_0):
        m = mf.mean()[0]
        nxt = pull * x + herd * m + drift * u + (1 - pull - herd) * 0.5 + w_i + w_0
        return np.clip(nxt, 0.0, 1.0)

    def stage_cost(x, u, mf):
        m = mf.mean()[0]
        xs = x[:, 0]
        return (xs - target) ** 2 + effort * u[:, 0] ** 2 + congestion * (1.0 - np.abs(xs - m))

    # |d/dx| <= 2 max(target, 1 - target) + congestion; |d/du| <= 2 effort;
    # the mean-field term moves with W1 at rate <= congestion.
    K_c = max(2 * max(target, 1 - target) + congestion, 2 * effort, congestion)
    K_f = max(pull, drift, herd)
    return AgentModel(
        name="crowd-1d", state_dim=1, action_dim=1,
        dynamics=dynamics, stage_cost=stage_cost,
        idio_noise=FiniteNoise([[-idio], [0.0], [idio]], [1 / 3, 1 / 3, 1 / 3]),
        common_noise=FiniteNoise([[-common], [common]], [0.5, 0.5]),
        K_f=K_f, K_c=K_c, beta=beta,
        state_bounds=[[0.0, 1.0]], action_bounds=[[-1.0, 1.0]],
        params=dict(beta=beta, drift=drift, pull=pull, herd=herd, target=target,
                    effort=effort, congestion=congestion, idio=idio, common=common),
    )


@register("switch-2state")
def switch_model(states=2, beta=0.4, flip=0.3, reset=0.2, crowding=0.8, effort=0.2):
    """Saturating climb toy; its natural grid is :func:`switch_grid`."""
    k = int(states)

    def dynamics(x, u, mf, w_i, w_0):
        nxt = np.clip(np.rint(x) + np.rint(u) - w_i, 0, k - 1)
        return np.where(w_0 > 0.5, 0.0, nxt)

    def stage_cost(x, u, mf):
        m = mf.mean()[0]
        xs = x[:, 0] / (k - 1)
        return (1.0 - xs) + crowding * xs * m / (k - 1) + effort * u[:, 0]

    return AgentModel(
        name="switch-2state", state_dim=1, action_dim=1,
        dynamics=dynamics, stage_cost=stage_cost,
        idio_noise=FiniteNoise([[0.0], [1.0]], [1 - flip, flip]),
        common_noise=FiniteNoise([[0.0], [1.0]], [1 - reset, reset]),
        K_f=1.0, K_c=1.0, beta=beta,
        state_bounds=[[0.0, k - 1.0]], action_bounds=[[0.0, 1.0]],
        params=dict(states=k, beta=beta, flip=flip, reset=reset, crowding=crowding,
                    effort=effort),
    )


def switch_grid(states=2):
    """Grid whose cells each hold exactly one atom of the switch toy, with the
    atom as representative."""
    k = int(states)
    edges = np.concatenate([[0.0], np.arange(k - 1) + 0.5, [k - 1.0]])
    return StateGrid([edges], representatives=np.arange(k, dtype=float))


def default_action_grid(model, atoms=None):
    if atoms is not None:
        return ActionGrid(np.asarray(atoms, dtype=float))
    if model.name == "switch-2state":
        return ActionGrid([0.0, 1.0])
    if model.name == "paper-example":
        return ActionGrid([0.0])
    return ActionGrid(model.action_bounds[:, 0:2].T.copy())


def default_grid(model, cells=None):
    """The switch toy's atom grid when no cell count is given, else a uniform
    grid with ``cells`` per dimension (default 4)."""
    if cells is None and model.name == "switch-2state":
        return switch_grid(model.params["states"])
    return StateGrid.uniform(model.state_bounds, 4 if cells is None else cells)
