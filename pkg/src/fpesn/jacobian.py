"""Local-convergence diagnostics for the fixed-point update map.

The update map's Jacobian at a candidate trajectory is lower triangular in
time: zero above the diagonal (the re-synthesis is causal), the relaxation
weight on the diagonal, and products of the linearized latent update below
it.  The column-sum (l1) norm yields a sufficient condition for local
convergence; this module evaluates it for one target variable at a time
(cross-variable coupling blocks are out of scope, so multivariate readouts
are diagnosed per column with the remaining inputs frozen).

Cost is O(n_latent**2 * window**2) in time; windows beyond a couple of
thousand samples get slow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .readout import ReadoutMap
from .reservoir import Reservoir, preactivation

__all__ = [
    "JacobianReport",
    "tanh_gain",
    "trajectory_gains",
    "k_product",
    "jacobian_entry",
    "l1_report",
    "monotone_decay_diag_bounds",
]

_WINDOW_WARN = 2000


@dataclass(frozen=True)
class JacobianReport:
    """Column-sum norm of the update-map Jacobian and the convergence test.

    ``sufficient_condition_lhs`` is the worst column's sum of re-synthesis
    sensitivities; local convergence is guaranteed when it stays below
    1/(1 - leak).  ``z_identity_bound_lhs`` is the simplified variant with
    all tanh gains replaced by one, kept for comparison.
    """

    l1_norm: float
    argmax_column: int
    sufficient_condition_lhs: float
    sufficient_condition_satisfied: bool
    leak: float
    relaxation: float
    z_identity_bound_lhs: float
    target: int
    window: int


def tanh_gain(res: Reservoir, s, y, u=None) -> np.ndarray:
    """Diagonal of the latent update's tanh gain: sech**2 of the
    pre-activation, computed from the same pre-activation as the forward
    pass.  Entries lie in (0, 1] and underflow to zero when saturated."""
    return _sech2(preactivation(res, s, y, u))


def _sech2(z):
    # 4 e^{-2|z|} / (1 + e^{-2|z|})^2, immune to cosh overflow
    w = np.exp(-2.0 * np.abs(z))
    return 4.0 * w / (1.0 + w) ** 2


def trajectory_gains(res: Reservoir, y_seq, u_seq=None, s0=None) -> np.ndarray:
    """Tanh gains along a teacher-forced pass.

    Row k holds the gain of the transition consuming row k of ``y_seq``
    (the step producing latent state k+1).  Shape (len(y_seq), n_latent).
    """
    y = np.asarray(y_seq, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    u = None if u_seq is None else np.asarray(u_seq, dtype=float)
    s = np.zeros(res.spec.n_latent) if s0 is None else np.asarray(s0, dtype=float)
    lam = res.spec.leak
    out = np.empty((y.shape[0], res.spec.n_latent))
    for t in range(y.shape[0]):
        z = preactivation(res, s, y[t], None if u is None else u[t])
        out[t] = _sech2(z)
        s = lam * s + (1.0 - lam) * np.tanh(z)
    return out


def k_product(res: Reservoir, gains: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Product of linearized latent updates over transitions lo..hi.

    Each factor is (leak I + (1 - leak) diag(gain_k) A); factors are applied
    in chain-rule order (later transitions to the left).  Identity when
    hi < lo.
    """
    n = res.spec.n_latent
    out = np.eye(n)
    lam = res.spec.leak
    for k in range(lo, hi + 1):
        # left-multiply by the factor of transition k
        out = lam * out + (1.0 - lam) * (np.asarray(gains[k])[:, None] * (res.a @ out))
    return out


def jacobian_entry(res: Reservoir, theta_tilde, gains, i: int, j: int,
                   relaxation: float, target: int = 0) -> float:
    """Entry (i, j) of the update-map Jacobian at the trajectory.

    Zero above the diagonal, the relaxation weight on it, and
    (1-relaxation)(1-leak) theta_tilde' K Z_j b_y below.  ``theta_tilde`` is
    the readout column for ``target`` without its bias row; ``gains`` are
    ``trajectory_gains`` rows, indexed by transition time.
    """
    if i < j:
        return 0.0
    if i == j:
        return relaxation
    lam = res.spec.leak
    v = (1.0 - lam) * np.asarray(gains[j]) * res.b_y[:, target]
    for k in range(j + 1, i):
        v = lam * v + (1.0 - lam) * np.asarray(gains[k]) * (res.a @ v)
    return float((1.0 - relaxation) * np.dot(np.asarray(theta_tilde), v))


def l1_report(res: Reservoir, theta: ReadoutMap, y_seq, u_seq=None,
              relaxation: float = 0.2, target: int = 0) -> JacobianReport:
    """Column-sum norm of the Jacobian over a trajectory window.

    Columns are evaluated by forward propagation of the perturbation vector
    (never materializing the product matrices), so the cost is one sparse
    matrix-vector product per (column, row) pair.
    """
    y = np.asarray(y_seq, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    horizon = y.shape[0]  # transitions 0..horizon-1, states 1..horizon
    if horizon > _WINDOW_WARN:
        warnings.warn(
            f"jacobian window of {horizon} samples is quadratic-cost; "
            "expect a long run", RuntimeWarning)
    gains = trajectory_gains(res, y, u_seq)
    lam = res.spec.leak
    theta_tilde = theta.weights[1:, target]
    b = res.b_y[:, target]
    best_sum = -1.0
    best_col = 1
    # column j of the Jacobian covers rows i = j+1 .. horizon; the leading
    # (1 - leak) of the first-transition sensitivity stays outside the sum
    for j in range(1, horizon):
        v = gains[j] * b
        total = abs(float(theta_tilde @ v))
        for k in range(j + 1, horizon):
            v = lam * v + (1.0 - lam) * gains[k] * (res.a @ v)
            total += abs(float(theta_tilde @ v))
        if total > best_sum:
            best_sum = total
            best_col = j
    l1 = relaxation + (1.0 - relaxation) * (1.0 - lam) * best_sum
    simplified = (1.0 - lam ** (horizon - best_col)) * abs(float(theta_tilde @ b))
    return JacobianReport(
        l1_norm=float(l1),
        argmax_column=best_col,
        sufficient_condition_lhs=float(best_sum),
        sufficient_condition_satisfied=bool(best_sum < 1.0 / (1.0 - lam)),
        leak=lam,
        relaxation=relaxation,
        z_identity_bound_lhs=float(simplified),
        target=target,
        window=horizon,
    )


def monotone_decay_diag_bounds(leak: float) -> tuple:
    """Bounds on the recurrent matrix diagonal under which the linearized
    update factors shrink monotonically: ((leak+1)/(leak-1), 1)."""
    return ((leak + 1.0) / (leak - 1.0), 1.0)
