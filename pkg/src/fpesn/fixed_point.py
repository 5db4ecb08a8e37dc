"""Under-relaxed fixed-point iteration for trajectory reconstruction.

A trajectory consistent with both the observed samples and the teacher-forced
network is a fixed point of the map that (a) re-fits the linear readout
against the observed entries, (b) re-synthesizes the whole series from the
current iterate, and (c) blends the result with the previous iterate while
pinning observed entries to their observed values.  The iteration starts
from the linear interpolant and stops when the root-mean-square change
between iterates drops below the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NoObservationsError
from .readout import NormalEquationAccumulator, ReadoutMap
from .reservoir import Reservoir, iter_state_blocks, state_matrix
from .sparsity import interp_linear

__all__ = [
    "ObservationSet",
    "FixedPointConfig",
    "FixedPointRun",
    "initialize_linear",
    "esn_operator",
    "relax_update",
    "l2_improvement",
    "reconstruct",
]

# Above this many matrix elements the state history is re-streamed twice per
# iteration instead of being cached (keeps peak memory around one gigabyte).
_STATE_CACHE_CAP = 120_000_000


@dataclass
class ObservationSet:
    """Sparse observation of a sampled series.

    ``y_obs`` is (T+1, n_targets) with NaN at unobserved entries; ``mask`` is
    the boolean observation indicator (True = observed).  The mask is
    authoritative: NaN is only a guard against accidentally reading missing
    entries.  Row 0 must be fully observed because the reconstruction
    operator passes it through unchanged.  ``u`` holds fully known exogenous
    forcing (zero columns if none).
    """

    y_obs: np.ndarray
    mask: np.ndarray
    u: np.ndarray = None
    dt: float = 1.0

    def __post_init__(self):
        self.y_obs = np.array(self.y_obs, dtype=float)
        if self.y_obs.ndim == 1:
            self.y_obs = self.y_obs[:, None]
        self.mask = np.array(self.mask, dtype=bool)
        if self.mask.ndim == 1:
            self.mask = self.mask[:, None]
        if self.mask.shape != self.y_obs.shape:
            raise ValueError("mask and y_obs must have the same shape")
        if self.u is None:
            self.u = np.zeros((self.y_obs.shape[0], 0))
        else:
            self.u = np.array(self.u, dtype=float)
            if self.u.ndim == 1:
                self.u = self.u[:, None]
        if self.u.shape[0] != self.y_obs.shape[0]:
            raise ValueError("u must have the same number of rows as y_obs")
        if not self.mask[0].all():
            raise ValueError("row 0 must be fully observed")
        if np.isnan(self.y_obs[self.mask]).any():
            raise ValueError("observed entries must be finite")
        if not np.isnan(self.y_obs[~self.mask]).all():
            raise ValueError("unobserved entries must carry the NaN marker")

    @classmethod
    def from_dense(cls, y, mask, u=None, dt=1.0):
        """Build from a dense series by blanking the masked-out entries."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[:, None]
        return cls(y_obs=np.where(mask, y, np.nan), mask=mask, u=u, dt=dt)

    @property
    def n_targets(self) -> int:
        return self.y_obs.shape[1]

    @property
    def missing_fraction(self) -> float:
        """Fraction of unobserved entries over rows 1..T (row 0 is pinned)."""
        m = self.mask[1:]
        return float((1.0 - m).sum() / m.size)


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration controls.

    ``relaxation`` is the blend weight kept on the previous iterate (must be
    strictly inside (0, 1)); ``ridge`` regularizes the readout fit;
    ``washout`` rows are excluded from the fit and from the improvement
    norm; ``normalize_inputs`` standardizes each target/forcing variable to
    zero mean and unit variance (statistics from observed entries only)
    around the whole iteration.

    ``stall_window`` guards against the late-phase drift of a plateaued
    iteration (the readout refit keeps perturbing an iterate that no longer
    improves): when no new improvement minimum has appeared for that many
    iterations, the run stops and returns the most self-consistent iterate
    seen.  Set it to 0 to disable.
    """

    relaxation: float
    ridge: float
    washout: int = 200
    tol: float = 1e-6
    max_iter: int = 500
    normalize_inputs: bool = False
    stall_window: int = 80

    def __post_init__(self):
        if not 0.0 < self.relaxation < 1.0:
            raise ValueError("relaxation must lie strictly inside (0, 1)")
        if self.ridge <= 0.0:
            raise ValueError("ridge must be positive")
        if self.washout < 0:
            raise ValueError("washout must be nonnegative")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.stall_window < 0:
            raise ValueError("stall_window must be nonnegative")


@dataclass(frozen=True)
class FixedPointRun:
    """Result of one reconstruction.

    ``y_r`` equals the observations bit-exactly at every observed entry.
    ``improvements`` holds the root-mean-square change of the iterate per
    iteration (length = ``iterations``); ``theta`` is the readout of the
    last completed iteration.  A run that hits the iteration cap without
    meeting the tolerance simply reports ``converged=False``; a run stopped
    by the stall guard additionally sets ``stalled`` and carries the iterate
    with the smallest recorded improvement.
    """

    y_r: np.ndarray
    theta: ReadoutMap
    improvements: np.ndarray
    iterations: int
    converged: bool
    stalled: bool = False


def initialize_linear(obs: ObservationSet) -> np.ndarray:
    """Linear interpolation of the observed entries (the iteration's start)."""
    return interp_linear(np.where(obs.mask, obs.y_obs, 0.0), obs.mask)


def esn_operator(res: Reservoir, theta: ReadoutMap, y_r: np.ndarray,
                 u: np.ndarray = None, states: np.ndarray = None) -> np.ndarray:
    """Re-synthesize the whole series from the current iterate.

    Row 0 passes through unchanged; row t (t >= 1) is the readout applied to
    the teacher-forced state S_t driven by rows 0..t-1 of ``y_r`` (and
    ``u``).  Passing precomputed ``states`` (from ``state_matrix`` on the
    same inputs) skips the second pass over the series.
    """
    y_r = np.asarray(y_r, dtype=float)
    if y_r.ndim == 1:
        y_r = y_r[:, None]
    out = np.empty((y_r.shape[0], theta.weights.shape[1]))
    out[0] = y_r[0]
    if states is not None:
        out[1:] = states @ theta.weights
        return out
    u_in = None if u is None else np.asarray(u, dtype=float)[:-1]
    for start, blk in iter_state_blocks(res, y_r[:-1], u_in):
        out[start:start + blk.shape[0]] = blk @ theta.weights
    return out


def relax_update(y_prev: np.ndarray, e_out: np.ndarray, obs: ObservationSet,
                 relaxation: float, washout: int = 0) -> np.ndarray:
    """Blend previous iterate with the operator output at unobserved entries;
    observed entries are overwritten with the observations bit-exactly.

    Rows 0..washout keep their previous values: the re-synthesized series is
    not trustworthy while the latent state still carries its arbitrary
    initial condition, and blending those rows feeds the transient error
    back into the next teacher-forced pass.
    """
    blend = relaxation * y_prev + (1.0 - relaxation) * e_out
    out = np.where(obs.mask, obs.y_obs, blend)
    if washout:
        out[:washout + 1] = np.where(obs.mask[:washout + 1],
                                     obs.y_obs[:washout + 1],
                                     y_prev[:washout + 1])
    return out


def l2_improvement(y_next: np.ndarray, y_prev: np.ndarray, washout: int) -> float:
    """Root-mean-square change between iterates over rows after the washout,
    averaged over variables."""
    y_next = np.atleast_2d(np.asarray(y_next, dtype=float).T).T
    y_prev = np.atleast_2d(np.asarray(y_prev, dtype=float).T).T
    if y_next.shape != y_prev.shape:
        raise ValueError("iterates must have the same shape")
    if washout >= y_next.shape[0] - 1:
        raise ValueError("washout must leave at least one row")
    diff = y_next[washout + 1:] - y_prev[washout + 1:]
    return float(np.sqrt(np.mean(diff ** 2)))


def reconstruct(res: Reservoir, obs: ObservationSet, cfg: FixedPointConfig,
                callback=None) -> FixedPointRun:
    """Run the fixed-point iteration until tolerance or the iteration cap.

    Each iteration: teacher-force the network on the current iterate, fit the
    readout against the observed entries (masked ridge), re-synthesize the
    series, under-relax, pin observed entries, and measure the change.
    Non-convergence is not an error; the run reports its history either way.
    ``callback(k, y_r)`` (if given) receives the de-normalized iterate after
    every iteration.
    """
    n_rows, n_y = obs.y_obs.shape
    if obs.u.shape[1] != res.spec.n_exo or n_y != res.spec.n_target:
        raise ValueError(
            f"reservoir expects {res.spec.n_target} targets / "
            f"{res.spec.n_exo} exogenous columns, observation set has "
            f"{n_y} / {obs.u.shape[1]}")
    if cfg.washout >= n_rows - 1:
        raise ValueError("washout must be smaller than the series length")

    norm = _Normalizer.fit(obs) if cfg.normalize_inputs else None
    work = obs if norm is None else norm.encode(obs)
    y_r = initialize_linear(work)
    washout_fit = max(cfg.washout, 1)
    cache_states = n_rows * (res.spec.n_latent + 1) <= _STATE_CACHE_CAP
    yv = np.where(work.mask, work.y_obs, 0.0)

    theta = None
    improvements = []
    converged = False
    stalled = False
    best_e = np.inf
    best_k = -1
    best_y = None
    for k in range(cfg.max_iter):
        if cache_states:
            states = state_matrix(res, y_r[:-1], work.u[:-1])
            theta = _fit(states[washout_fit - 1:], yv[washout_fit:],
                         work.mask[washout_fit:], cfg.ridge)
            e_out = esn_operator(res, theta, y_r, states=states)
            del states
        else:
            acc = NormalEquationAccumulator(res.spec.n_latent + 1, n_y)
            for start, blk in iter_state_blocks(res, y_r[:-1], work.u[:-1]):
                stop = start + blk.shape[0]
                if stop <= washout_fit:
                    continue
                lo = max(washout_fit - start, 0)
                acc.add(blk[lo:], yv[start + lo:stop], work.mask[start + lo:stop])
            theta = acc.solve(cfg.ridge)
            e_out = esn_operator(res, theta, y_r, work.u)
        y_next = relax_update(y_r, e_out, work, cfg.relaxation, cfg.washout)
        e_k = l2_improvement(y_next, y_r, cfg.washout)
        improvements.append(e_k)
        y_r = y_next
        if e_k < best_e:
            best_e, best_k, best_y = e_k, k, y_r.copy()
        if callback is not None:
            callback(k, _finalize(y_r, obs, norm))
        if e_k <= cfg.tol:
            converged = True
            break
        if not np.isfinite(e_k):
            break  # diverged; further iterations cannot recover
        if cfg.stall_window and best_k > 0 and k - best_k >= cfg.stall_window:
            stalled = True
            break
    if (stalled or not np.isfinite(improvements[-1])) and best_y is not None:
        y_r = best_y
    return FixedPointRun(
        y_r=_finalize(y_r, obs, norm), theta=theta,
        improvements=np.asarray(improvements), iterations=len(improvements),
        converged=converged, stalled=stalled)


def _fit(states, targets, mask, ridge) -> ReadoutMap:
    acc = NormalEquationAccumulator(states.shape[1], targets.shape[1])
    acc.add(states, targets, mask)
    return acc.solve(ridge)


def _finalize(y_r, obs, norm):
    out = y_r.copy() if norm is None else norm.decode_targets(y_r)
    out[obs.mask] = obs.y_obs[obs.mask]
    return out


class _Normalizer:
    """Per-variable affine standardization fitted on observed entries only."""

    def __init__(self, y_mean, y_scale, u_mean, u_scale):
        self.y_mean, self.y_scale = y_mean, y_scale
        self.u_mean, self.u_scale = u_mean, u_scale

    @classmethod
    def fit(cls, obs: ObservationSet):
        n_y = obs.n_targets
        y_mean = np.empty(n_y)
        y_scale = np.empty(n_y)
        for j in range(n_y):
            vals = obs.y_obs[obs.mask[:, j], j]
            if vals.size == 0:
                raise NoObservationsError(f"variable {j} has no observed samples")
            y_mean[j] = vals.mean()
            std = vals.std()
            y_scale[j] = std if std > 0 else 1.0
        if obs.u.shape[1]:
            u_mean = obs.u.mean(axis=0)
            u_std = obs.u.std(axis=0)
            u_scale = np.where(u_std > 0, u_std, 1.0)
        else:
            u_mean = np.zeros(0)
            u_scale = np.ones(0)
        return cls(y_mean, y_scale, u_mean, u_scale)

    def encode(self, obs: ObservationSet) -> ObservationSet:
        y = (obs.y_obs - self.y_mean) / self.y_scale
        u = (obs.u - self.u_mean) / self.u_scale
        return ObservationSet(y_obs=y, mask=obs.mask.copy(), u=u, dt=obs.dt)

    def decode_targets(self, y: np.ndarray) -> np.ndarray:
        return y * self.y_scale + self.y_mean
