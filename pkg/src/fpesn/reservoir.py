"""Random reservoir construction and the leaky-tanh latent dynamics.

The reservoir is a sparse random recurrent matrix ``a`` rescaled to a target
spectral radius, plus dense input weight blocks ``b_y`` (driving signal) and
``b_u`` (exogenous forcing).  All randomness comes from NumPy's PCG64
generator seeded from ``ReservoirSpec.seed``; the generator identity is part
of the reproducibility contract, so the same spec yields bit-identical
matrices on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DegenerateSpectrumError, SpectralRadiusError

_BUILD_ATTEMPTS = 5
_BLOCK = 2048


@dataclass(frozen=True)
class ReservoirSpec:
    """Hyperparameters of a randomly generated reservoir.

    ``n_latent`` latent units, recurrent matrix with exactly
    ``round(sparsity * n_latent**2)`` stored entries drawn from
    U(-scale_a, scale_a) and rescaled so its spectral radius equals
    ``spectral_radius``; input weights drawn from U(-scale_b, scale_b).
    ``leak`` blends the previous state into the update (0 = memoryless
    nonlinearity, values near 1 = slow relaxation).
    """

    n_latent: int
    n_target: int
    n_exo: int = 0
    leak: float = 0.6
    sparsity: float = 0.01
    spectral_radius: float = 0.9
    scale_a: float = 1.0
    scale_b: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.n_latent < 1:
            raise ValueError("n_latent must be a positive integer")
        if self.n_target < 1:
            raise ValueError("n_target must be a positive integer")
        if self.n_exo < 0:
            raise ValueError("n_exo must be nonnegative")
        if not 0.0 <= self.leak < 1.0:
            raise ValueError("leak must lie in [0, 1)")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in (0, 1]")
        if self.spectral_radius <= 0.0:
            raise ValueError("spectral_radius must be positive")
        if self.scale_a <= 0.0:
            raise ValueError("scale_a must be positive")
        if self.scale_b <= 0.0:
            raise ValueError("scale_b must be positive")
        if self.n_nonzero < 1:
            raise ValueError("sparsity * n_latent**2 rounds to zero entries")

    @property
    def n_nonzero(self) -> int:
        return int(round(self.sparsity * self.n_latent ** 2))


@dataclass(frozen=True)
class Reservoir:
    """Realized random matrices; immutable and shareable across threads."""

    a: sp.csr_matrix
    b_y: np.ndarray
    b_u: np.ndarray
    spec: ReservoirSpec


def build_reservoir(spec: ReservoirSpec) -> Reservoir:
    """Draw a reservoir from ``spec``, deterministic given ``spec.seed``.

    Nonzero positions of the recurrent matrix are sampled as distinct linear
    indices (uniform, without replacement), filled i.i.d. uniform, then the
    whole matrix is rescaled by a scalar so its spectral radius hits the
    target.  A draw whose spectral radius is numerically zero (e.g. a
    nilpotent pattern) is retried a bounded number of times.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_latent
    a = None
    for _ in range(_BUILD_ATTEMPTS):
        flat = rng.choice(n * n, size=spec.n_nonzero, replace=False)
        rows, cols = np.divmod(flat, n)
        vals = rng.uniform(-spec.scale_a, spec.scale_a, size=spec.n_nonzero)
        cand = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        rho = spectral_radius(cand)
        if rho > 1e-12 * spec.scale_a:
            a = cand
            break
    if a is None:
        raise DegenerateSpectrumError(
            f"recurrent matrix had numerically zero spectral radius in "
            f"{_BUILD_ATTEMPTS} attempts (n_latent={n}, "
            f"n_nonzero={spec.n_nonzero})")
    a.data *= spec.spectral_radius / rho
    b_y = rng.uniform(-spec.scale_b, spec.scale_b, size=(n, spec.n_target))
    b_u = rng.uniform(-spec.scale_b, spec.scale_b, size=(n, spec.n_exo))
    return Reservoir(a=a, b_y=b_y, b_u=b_u, spec=spec)


def spectral_radius(a, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest absolute eigenvalue of a square (sparse or dense) matrix.

    Power iteration extended with a two-term recurrence fit: each sweep
    computes w1 = a v and w2 = a w1 and solves the least-squares recurrence
    w2 = alpha w1 + beta v.  The dominant eigenvalues are roots of
    x**2 - alpha x - beta, which converges for a real dominant eigenvalue,
    a complex-conjugate dominant pair, a +/- rho pair, and a defective
    dominant block alike.  Raises after ``max_iter`` sweeps with the last
    estimate attached.
    """
    n, m = a.shape
    if n != m:
        raise ValueError("matrix must be square")
    if n == 1:
        return float(abs(a[0, 0]))
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = np.inf
    stable = 0
    for _ in range(max_iter):
        w1 = a @ v
        n1 = np.linalg.norm(w1)
        if n1 == 0.0:
            return 0.0
        w2 = a @ w1
        n2 = np.linalg.norm(w2)
        if n2 == 0.0:
            return 0.0
        basis = np.column_stack((w1, v))
        coef, *_ = np.linalg.lstsq(basis, w2, rcond=None)
        alpha, beta = coef
        new = float(np.max(np.abs(np.roots([1.0, -alpha, -beta]))))
        residual = np.linalg.norm(w2 - basis @ coef)
        if new > 0.0 and abs(new - estimate) <= tol * new:
            stable += 1
            if stable >= 2 and residual <= 1e-7 * n2:
                return new
        else:
            stable = 0
        estimate = new
        v = w2 / n2
    raise SpectralRadiusError(
        f"spectral radius iteration did not converge in {max_iter} sweeps "
        f"(last estimate {estimate:.6e})", last_estimate=estimate)


def augment(s: np.ndarray) -> np.ndarray:
    """Augmented latent state (1, s) used by the linear readout."""
    return np.concatenate(([1.0], np.asarray(s, dtype=float)))


def preactivation(res: Reservoir, s, y, u=None) -> np.ndarray:
    """Argument of the tanh in the latent update; shared with the Jacobian
    diagnostics so forward pass and tanh-gain stay consistent."""
    z = res.a @ np.asarray(s, dtype=float) + res.b_y @ np.atleast_1d(np.asarray(y, dtype=float))
    if res.spec.n_exo:
        z = z + res.b_u @ np.atleast_1d(np.asarray(u, dtype=float))
    return z


def step(res: Reservoir, s, y, u=None) -> np.ndarray:
    """One latent update: leak * s + (1 - leak) * tanh(a s + b_y y + b_u u)."""
    lam = res.spec.leak
    return lam * np.asarray(s, dtype=float) + (1.0 - lam) * np.tanh(preactivation(res, s, y, u))


def iter_state_blocks(res: Reservoir, y_seq, u_seq=None, s0=None, block: int = _BLOCK):
    """Teacher-forced state evolution in blocks.

    Feeding rows (y_{t-1}, u_{t-1}) produces the augmented states S_1..S_T
    where T = len(y_seq).  Yields (t_start, states) pairs with ``states`` of
    shape (block_len, n_latent + 1); the first column is the constant 1.
    Streaming by blocks keeps memory flat when the caller reduces each block
    on the fly instead of materializing the full history.
    """
    y = _as_2d(y_seq, res.spec.n_target, "y_seq")
    n_rows = y.shape[0]
    u = _as_2d(u_seq, res.spec.n_exo, "u_seq", n_rows)
    if u.shape[0] != n_rows:
        raise ValueError("y_seq and u_seq must have the same length")
    n = res.spec.n_latent
    s = np.zeros(n) if s0 is None else np.array(s0, dtype=float, copy=True)
    if s.shape != (n,):
        raise ValueError(f"s0 must have shape ({n},)")
    indptr, indices, data = res.a.indptr, res.a.indices, res.a.data
    for start in range(0, n_rows, block):
        yb = y[start:start + block]
        drive = yb @ res.b_y.T
        if res.spec.n_exo:
            drive += u[start:start + block] @ res.b_u.T
        out = np.empty((yb.shape[0], n + 1))
        out[:, 0] = 1.0
        _kernels.leaky_tanh_chain(indptr, indices, data, res.spec.leak, s,
                                  np.ascontiguousarray(drive), out[:, 1:])
        yield start + 1, out


def run_teacher_forced(res: Reservoir, y_seq, u_seq=None, s0=None):
    """Generator over augmented states S_1..S_T (see ``iter_state_blocks``)."""
    for _, blk in iter_state_blocks(res, y_seq, u_seq, s0):
        yield from blk


def state_matrix(res: Reservoir, y_seq, u_seq=None, s0=None) -> np.ndarray:
    """Materialized (T, n_latent + 1) matrix of augmented states S_1..S_T."""
    y = _as_2d(y_seq, res.spec.n_target, "y_seq")
    out = np.empty((y.shape[0], res.spec.n_latent + 1))
    for start, blk in iter_state_blocks(res, y_seq, u_seq, s0):
        out[start - 1:start - 1 + blk.shape[0]] = blk
    return out


def _as_2d(arr, n_cols, name, n_rows=None):
    if arr is None:
        if n_cols:
            raise ValueError(f"{name} is required (n_cols={n_cols})")
        return np.zeros((n_rows or 0, 0))
    out = np.asarray(arr, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2 or out.shape[1] != n_cols:
        raise ValueError(f"{name} must have shape (T, {n_cols}), got {out.shape}")
    return out
