"""Linear readout fitted by (masked) ridge regression.

The readout maps the augmented latent state (1, s) to the physical variables.
With missing data the normal equations differ per target column because each
column has its own observation mask, so the accumulator keeps one Gram matrix
and one moment vector per column.  Memory is O(n_targets * n_features**2),
which avoids storing the full state history.

The ridge penalty weights the MEAN squared misfit: the normal equations are
(gram / n + ridge I) w = moment / n with n the number of samples entering
the column.  This keeps a given ridge value meaningful across series lengths
and observation densities (the data term is an average, akin to an ensemble
expectation over the observed samples).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FactorizationError, InsufficientObservationsError

__all__ = [
    "ReadoutMap",
    "NormalEquationAccumulator",
    "fit_ridge_full",
    "fit_ridge_masked",
    "predict",
]


@dataclass(frozen=True)
class ReadoutMap:
    """Linear map from augmented latent state to physical space.

    ``weights`` has shape (n_latent + 1, n_targets); the first row is the
    bias matched against the constant 1 of the augmented state.  ``ridge``
    records the regularization actually used for the fit (it may exceed the
    requested value after a conditioning retry).
    """

    weights: np.ndarray
    ridge: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("readout weights must be finite")


def predict(readout: ReadoutMap, state: np.ndarray) -> np.ndarray:
    """Project augmented state(s) to physical space.

    ``state`` may be a single augmented state of length n_latent + 1 or a
    matrix of such rows.
    """
    return np.asarray(state, dtype=float) @ readout.weights


class NormalEquationAccumulator:
    """Streaming accumulator of per-column masked ridge normal equations.

    ``add`` consumes a block of augmented state rows together with their
    target rows (and optionally a per-column observation mask); ``solve``
    returns the fitted readout.  Rows must already be washout-filtered by
    the caller.
    """

    def __init__(self, n_features: int, n_targets: int):
        self.gram = np.zeros((n_targets, n_features, n_features))
        self.moment = np.zeros((n_targets, n_features))
        self.count = np.zeros(n_targets, dtype=int)

    @property
    def n_targets(self) -> int:
        return self.gram.shape[0]

    def add(self, states, targets, mask=None):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        targets = np.asarray(targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        for j in range(self.n_targets):
            if mask is None:
                x, t = states, targets[:, j]
            else:
                sel = np.asarray(mask)[:, j].astype(bool)
                x, t = states[sel], targets[sel, j]
            if x.shape[0] == 0:
                continue
            self.gram[j] += x.T @ x
            self.moment[j] += x.T @ t
            self.count[j] += x.shape[0]

    def solve(self, ridge: float, variable_names=None) -> ReadoutMap:
        n_features = self.gram.shape[1]
        weights = np.empty((n_features, self.n_targets))
        used = ridge
        for j in range(self.n_targets):
            n = self.count[j]
            if n == 0:
                name = variable_names[j] if variable_names else f"variable {j}"
                raise InsufficientObservationsError(
                    f"{name} has no observed samples after the washout; "
                    "cannot fit its readout column")
            weights[:, j], used_j = _solve_ridge(self.gram[j] / n,
                                                 self.moment[j] / n, ridge)
            used = max(used, used_j)
        return ReadoutMap(weights=weights, ridge=used)


def _solve_ridge(gram, moment, ridge):
    """SPD solve of (gram + ridge I) w = moment with one conditioning retry."""
    n = gram.shape[0]
    eye = np.eye(n)
    for attempt, r in enumerate((ridge, ridge * 10.0)):
        try:
            c, low = scipy.linalg.cho_factor(gram + r * eye, check_finite=False)
            w = scipy.linalg.cho_solve((c, low), moment, check_finite=False)
            if not np.all(np.isfinite(w)):
                raise np.linalg.LinAlgError("non-finite solution")
            if attempt:
                warnings.warn(
                    f"ridge normal equations failed at ridge={ridge:g}; "
                    f"solved with ridge={r:g} instead", RuntimeWarning)
            return w, r
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            continue
    cond = float(np.linalg.cond(gram + ridge * eye))
    raise FactorizationError(
        f"normal equations not positive definite at ridge={ridge:g} "
        f"(condition estimate {cond:.3e})", condition_estimate=cond)


def fit_ridge_full(states, targets, ridge: float, washout: int = 0) -> ReadoutMap:
    """Fit the readout on fully observed targets.

    ``states`` holds the augmented states S_1..S_T (a (T, n+1) array or any
    iterable of rows); ``targets`` the matching physical rows y_1..y_T.
    Rows with time index t >= washout enter the normal equations (time
    indices start at 1 here, matching the state sequence).
    """
    states, targets = _aligned(states, targets)
    keep = slice(max(washout, 1) - 1, None)
    x, t = states[keep], targets[keep]
    if x.shape[0] == 0:
        raise InsufficientObservationsError("washout leaves no samples to fit on")
    n = x.shape[0]
    gram = (x.T @ x) / n
    weights = np.empty((states.shape[1], t.shape[1]))
    used = ridge
    for j in range(t.shape[1]):
        weights[:, j], used_j = _solve_ridge(gram, (x.T @ t[:, j]) / n, ridge)
        used = max(used, used_j)
    return ReadoutMap(weights=weights, ridge=used)


def fit_ridge_masked(states, obs, ridge: float, washout: int = 0) -> ReadoutMap:
    """Fit the readout against observed entries only.

    ``obs`` is an ``ObservationSet`` whose rows 1..T align with the state
    sequence S_1..S_T.  Column j uses only rows where its mask is set and
    t >= washout; each column therefore has its own Gram matrix.
    """
    states = _as_matrix(states)
    n_rows = states.shape[0] + 1
    if obs.y_obs.shape[0] != n_rows:
        raise ValueError(
            f"observation set has {obs.y_obs.shape[0]} rows; expected "
            f"{n_rows} for {states.shape[0]} states")
    acc = NormalEquationAccumulator(states.shape[1], obs.y_obs.shape[1])
    lo = max(washout, 1)
    y = np.where(obs.mask, obs.y_obs, 0.0)  # masked-out entries never read
    acc.add(states[lo - 1:], y[lo:], obs.mask[lo:])
    return acc.solve(ridge)


def _as_matrix(states):
    if isinstance(states, np.ndarray) and states.ndim == 2:
        return np.asarray(states, dtype=float)
    return np.vstack([np.asarray(row, dtype=float) for row in states])


def _aligned(states, targets):
    states = _as_matrix(states)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape[0] != states.shape[0]:
        raise ValueError("states and targets must have the same length")
    return states, targets
