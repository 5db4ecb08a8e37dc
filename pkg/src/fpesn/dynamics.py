"""Ground-truth trajectory generators for the benchmark systems.

All deterministic systems are integrated with fixed-step RK4 on an inner grid
finer than the sampling interval; the forced oscillator additionally consumes
an exactly discretized Ornstein-Uhlenbeck path.  Generators are pure
functions of their parameters (and seed, where applicable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import _kernels
from .errors import BlowUpError

__all__ = [
    "MackeyGlassParams",
    "Lorenz63Params",
    "Lorenz96Params",
    "VdpParams",
    "Trajectory",
    "gen_mackey_glass",
    "gen_lorenz63",
    "gen_lorenz96",
    "gen_ou",
    "gen_vdp",
]


@dataclass(frozen=True)
class Trajectory:
    """Equidistantly sampled series: ``y`` (T+1, n_targets) at t = 0..T*dt,
    ``u`` (T+1, n_exo) exogenous samples (zero columns when autonomous)."""

    y: np.ndarray
    u: np.ndarray
    dt: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.u))):
            raise ValueError("trajectory contains non-finite values")
        if self.y.shape[0] != self.u.shape[0]:
            raise ValueError("y and u must have the same number of rows")

    @property
    def n_samples(self) -> int:
        return self.y.shape[0] - 1


@dataclass(frozen=True)
class MackeyGlassParams:
    """Delay-feedback system dy/dt = g1 y(t-delay)/(1 + y(t-delay)**g2) - g3 y.

    The default parameter set is chaotic with a characteristic period of
    roughly 50 sampling intervals.
    """

    gamma1: float = 0.2
    gamma2: float = 10.0
    gamma3: float = 0.1
    delay: float = 17.0
    dt_sample: float = 1.0
    inner_steps_per_sample: int = 10
    history_value: float = 1.2
    transient_samples: int = 1000

    def __post_init__(self):
        if self.delay <= 0:
            raise ValueError("delay must be positive")
        if self.inner_steps_per_sample < 1:
            raise ValueError("inner_steps_per_sample must be >= 1")
        if self.delay / self.inner_step < 2.0:
            raise ValueError("delay must span at least two inner steps")

    @property
    def inner_step(self) -> float:
        return self.dt_sample / self.inner_steps_per_sample


@dataclass(frozen=True)
class Lorenz63Params:
    """Classic three-variable convection model in its chaotic regime."""

    sigma: float = 10.0
    rho: float = 28.0
    beta_l: float = 8.0 / 3.0
    dt_sample: float = 0.02
    inner_steps_per_sample: int = 10
    transient_samples: int = 1000
    initial_state: tuple = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class Lorenz96Params:
    """Cyclic lattice model; node i couples to neighbours i-2, i-1, i+1.

    ``initial_state`` defaults to the uniform equilibrium at the forcing
    value with a small perturbation on node 0, which kicks the system onto
    its attractor.
    """

    n_nodes: int = 6
    forcing: float = 8.0
    dt_sample: float = 0.02
    inner_steps_per_sample: int = 10
    transient_samples: int = 1000
    initial_state: tuple | None = None
    perturbation: float = 0.01


@dataclass(frozen=True)
class VdpParams:
    """Van der Pol oscillator driven by an Ornstein-Uhlenbeck forcing.

    The forcing path lives on the inner integration grid (``dt_inner``) and
    is held constant across each inner interval; only its value at the
    sampling instants is exposed to the observer.  ``integrator_substeps``
    subdivides each forcing interval for step-halving checks without
    changing the forcing path.
    """

    mu: float = 2.0
    ou_theta: float = 0.2
    ou_sigma: float = 5.0 * math.sqrt(2.0 * 0.2)
    dt_inner: float = 2.5e-3
    dt_sample: float = 0.5
    initial_state: tuple = (1.0, 0.0)
    integrator_substeps: int = 1

    def __post_init__(self):
        ratio = self.dt_sample / self.dt_inner
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_sample must be an integer multiple of dt_inner")

    @property
    def inner_steps_per_sample(self) -> int:
        return int(round(self.dt_sample / self.dt_inner))


def gen_mackey_glass(params: MackeyGlassParams, n_samples: int) -> Trajectory:
    """Integrate the delay equation and emit n_samples + 1 samples.

    The delayed term is evaluated by cubic Hermite interpolation of the
    stored inner-grid history; history is the constant ``history_value`` for
    t <= 0, and ``transient_samples`` leading samples are discarded.
    """
    p = params
    inner = p.inner_steps_per_sample
    h = p.inner_step
    n_steps = (p.transient_samples + n_samples) * inner
    y = np.empty(n_steps + 1)
    f = np.empty(n_steps + 1)
    status = _kernels.mackey_glass_path(
        n_steps, h, p.delay / h, p.gamma1, p.gamma2, p.gamma3,
        p.history_value, y, f)
    if status:
        raise BlowUpError(
            f"delay-system integration left [-1e6, 1e6] at inner step {status}")
    samples = y[p.transient_samples * inner::inner][:n_samples + 1]
    return Trajectory(y=samples[:, None].copy(), u=np.zeros((n_samples + 1, 0)),
                      dt=p.dt_sample)


def gen_lorenz63(params: Lorenz63Params, n_samples: int) -> Trajectory:
    p = params
    inner = p.inner_steps_per_sample
    h = p.dt_sample / inner
    skip = p.transient_samples * inner
    total = skip + n_samples * inner
    out = np.empty((n_samples + 1, 3))
    x0, y0, z0 = (float(v) for v in p.initial_state)
    status = _kernels.lorenz63_path(x0, y0, z0, p.sigma, p.rho, p.beta_l,
                                    h, total, inner, skip, out)
    if status:
        raise BlowUpError(f"integration went non-finite at inner step {status}")
    return Trajectory(y=out, u=np.zeros((n_samples + 1, 0)), dt=p.dt_sample)


def gen_lorenz96(params: Lorenz96Params, n_samples: int) -> Trajectory:
    p = params
    if p.initial_state is None:
        y0 = np.full(p.n_nodes, float(p.forcing))
        y0[0] += p.perturbation
    else:
        y0 = np.asarray(p.initial_state, dtype=float)
        if y0.shape != (p.n_nodes,):
            raise ValueError(f"initial_state must have length {p.n_nodes}")
    inner = p.inner_steps_per_sample
    h = p.dt_sample / inner
    skip = p.transient_samples * inner
    total = skip + n_samples * inner
    out = np.empty((n_samples + 1, p.n_nodes))
    status = _kernels.lorenz96_path(y0, p.forcing, h, total, inner, skip, out)
    if status:
        raise BlowUpError(f"integration went non-finite at inner step {status}")
    return Trajectory(y=out, u=np.zeros((n_samples + 1, 0)), dt=p.dt_sample)


def gen_ou(theta: float, sigma: float, dt_inner: float, n_inner: int,
           seed: int) -> np.ndarray:
    """Ornstein-Uhlenbeck path by exact discretization, starting at zero.

    u_{n+1} = u_n exp(-theta dt) + sigma sqrt((1 - exp(-2 theta dt)) / (2 theta)) xi_n
    with standard normal xi_n; returns n_inner + 1 values.  The update is the
    exact conditional distribution, so the path statistics do not depend on
    the step size.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n_inner)
    if theta == 0.0:
        decay, scale = 1.0, sigma * math.sqrt(dt_inner)
    else:
        decay = math.exp(-theta * dt_inner)
        scale = sigma * math.sqrt((1.0 - math.exp(-2.0 * theta * dt_inner))
                                  / (2.0 * theta))
    u = np.empty(n_inner + 1)
    u[0] = 0.0
    u[1:] = lfilter([scale], [1.0, -decay], xi)
    return u


def gen_vdp(params: VdpParams, n_samples: int, seed: int) -> Trajectory:
    """Forced oscillator; emits the position and the downsampled forcing.

    The velocity is withheld (partial observation).  The forcing is the
    Ornstein-Uhlenbeck path held piecewise constant on the inner grid.
    """
    p = params
    inner = p.inner_steps_per_sample
    n_inner = n_samples * inner
    u = gen_ou(p.ou_theta, p.ou_sigma, p.dt_inner, n_inner, seed)
    state, u_sampled = _integrate_vdp(p, u, n_samples)
    return Trajectory(y=state[:, :1].copy(), u=u_sampled[:, None], dt=p.dt_sample)


def _integrate_vdp(p: VdpParams, u: np.ndarray, n_samples: int):
    """Full (position, velocity) path; split out for diagnostics/tests."""
    inner = p.inner_steps_per_sample
    n_inner = n_samples * inner
    if u.shape[0] != n_inner + 1:
        raise ValueError(f"forcing path must have {n_inner + 1} values")
    out = np.empty((n_samples + 1, 2))
    h = p.dt_inner / p.integrator_substeps
    status = _kernels.vdp_path(float(p.initial_state[0]), float(p.initial_state[1]),
                               p.mu, h, p.integrator_substeps, n_inner, inner,
                               u, out)
    if status:
        raise BlowUpError(f"integration went non-finite at inner step {status}")
    return out, u[::inner].copy()
