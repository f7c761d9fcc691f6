"""Domain types and the joint negative-log-posterior criterion.

Hierarchical model for the linear inverse problem g = H f + eps:

    indirect sparsity       f = D z + xi,  z sparse
        g | f, v_eps   ~ N(H f, V_eps),    v_eps_i ~ IG(alpha_eps, beta_eps)
        f | z, v_xi    ~ N(D z, V_xi),     v_xi_j  ~ IG(alpha_xi,  beta_xi)
        z | v_z        ~ N(0,   V_z),      v_z_j   ~ IG(alpha_z,   beta_z)

    direct sparsity         f itself sparse (no D, no z)
        g | f, v_eps   ~ N(H f, V_eps),    v_eps_i ~ IG(alpha_eps, beta_eps)
        f | v_f        ~ N(0,   V_f),      v_f_j   ~ IG(alpha_f,   beta_f)

All V are diagonal with per-component variances.  Minus the log of the
joint posterior, up to an additive constant, is the criterion

    L = 1/2 (g - Hf)' Veps^-1 (g - Hf) + (alpha_eps + 3/2) sum ln v_eps_i
        + sum beta_eps / v_eps_i
      + 1/2 (f - Dz)' Vxi^-1 (f - Dz)  + (alpha_xi + 3/2) sum ln v_xi_j
        + sum beta_xi / v_xi_j
      + 1/2 z' Vz^-1 z                 + (alpha_z + 3/2) sum ln v_z_j
        + sum beta_z / v_z_j

with the xi-block replaced by the (f, v_f, alpha_f, beta_f) block in the
direct model.  L is defined only up to a state-independent constant, so
consumers must compare L differences or argmins, never absolute values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .vba import IgFamily


class DimensionMismatch(ValueError):
    """Shapes of g, H, D or state vectors are mutually inconsistent."""


class NonFinite(ValueError):
    """A NaN or infinity was found where a finite value is required."""


class NonPositiveHyper(ValueError):
    """A hyperparameter is zero, negative or non-finite."""


class NonPositiveVariance(ValueError):
    """A variance entry is zero or negative."""


class SingularSystem(RuntimeError):
    """A symmetric positive-definite solve failed at working precision."""


class ModelMismatch(ValueError):
    """Operation requires the other sparsity model (direct vs indirect)."""


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ForwardProblem:
    """Observations g (length N), operator H (N x M), optional transform D (M x M).

    D absent selects the direct-sparsity model (f itself sparse); D present
    selects the indirect model (z sparse, f = D z + xi).
    """

    g: np.ndarray
    H: np.ndarray
    D: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float).reshape(-1))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        if self.D is not None:
            object.__setattr__(self, "D", np.asarray(self.D, dtype=float))

    @property
    def n_obs(self) -> int:
        return self.g.shape[0]

    @property
    def n_coef(self) -> int:
        return self.H.shape[1] if self.H.ndim == 2 else 0

    @property
    def is_direct(self) -> bool:
        return self.D is None


@dataclass(frozen=True)
class HyperParams:
    """Inverse-Gamma hyperparameters, one (shape, scale) pair per variance family.

    (alpha_eps, beta_eps, alpha_xi, beta_xi, alpha_z, beta_z) drive the
    indirect model; (alpha_eps, beta_eps, alpha_f, beta_f) the direct one.
    Values are validated by :func:`validate_problem`, not at construction.
    """

    alpha_eps: float = 1.0
    beta_eps: float = 1.0
    alpha_xi: float = 1.0
    beta_xi: float = 1.0
    alpha_z: float = 1.0
    beta_z: float = 1.0
    alpha_f: float = 1.0
    beta_f: float = 1.0

    def as_dict(self) -> dict:
        return {
            "alpha_eps": self.alpha_eps, "beta_eps": self.beta_eps,
            "alpha_xi": self.alpha_xi, "beta_xi": self.beta_xi,
            "alpha_z": self.alpha_z, "beta_z": self.beta_z,
            "alpha_f": self.alpha_f, "beta_f": self.beta_f,
        }


@dataclass(frozen=True)
class SolverState:
    """Current iterates of either solver.

    JMAP fills the point variances (v_eps plus v_xi/v_z or v_f); VBA
    additionally carries the Normal covariances and the Inverse-Gamma
    family parameters, with v_* holding the point values 1/<v^-1> =
    beta_hat/alpha_hat actually used by the updates.
    """

    f_hat: np.ndarray
    z_hat: Optional[np.ndarray] = None
    v_eps: Optional[np.ndarray] = None
    v_xi: Optional[np.ndarray] = None
    v_f: Optional[np.ndarray] = None
    v_z: Optional[np.ndarray] = None
    Sigma_f: Optional[np.ndarray] = None
    Sigma_z: Optional[np.ndarray] = None
    ig_eps: Optional["IgFamily"] = None
    ig_xi: Optional["IgFamily"] = None
    ig_z: Optional["IgFamily"] = None
    ig_f: Optional["IgFamily"] = None


@dataclass
class IterationRecord:
    """One solver iteration: criterion value, iterate changes and wall time.

    Iteration 0 is the initial state; its relative changes are None.
    """

    iteration: int
    criterion: float
    rel_change_f: Optional[float]
    rel_change_z: Optional[float]
    seconds: float


@dataclass
class RunTrace:
    """Per-iteration history of a solver run.

    ``update_order`` documents the fixed block-update cycle; ``converged``
    is False when the run stopped at max_iter (not an error).
    """

    update_order: tuple
    records: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = "max_iter"

    def append(self, criterion, rel_change_f=None, rel_change_z=None, seconds=0.0):
        index = self.records[-1].iteration + 1 if self.records else 0
        self.records.append(
            IterationRecord(index, float(criterion), rel_change_f, rel_change_z, seconds)
        )

    def criterion_values(self) -> np.ndarray:
        return np.array([r.criterion for r in self.records])

    @property
    def iterations(self) -> int:
        """Number of completed update sweeps (record 0 is the initial state)."""
        return len(self.records) - 1 if self.records else 0


def validate_problem(problem: ForwardProblem, hyper: HyperParams) -> None:
    """Check type invariants and mutual shape consistency.

    Raises DimensionMismatch, NonFinite or NonPositiveHyper; returns None
    when the pair is usable by the solvers.
    """
    g, H, D = problem.g, problem.H, problem.D
    if H.ndim != 2:
        raise DimensionMismatch(f"H must be a matrix, got array of ndim {H.ndim}")
    n, m = H.shape
    if n < 1 or m < 1:
        raise DimensionMismatch(f"H must be at least 1x1, got {n}x{m}")
    if g.shape != (n,):
        raise DimensionMismatch(f"g has length {g.shape[0]}, H has {n} rows")
    if D is not None:
        if D.ndim != 2 or D.shape != (m, m):
            raise DimensionMismatch(
                f"D must be {m}x{m} to match H, got shape {D.shape}"
            )
        if not np.all(np.isfinite(D)):
            raise NonFinite("D contains NaN or Inf entries")
    if not np.all(np.isfinite(H)):
        raise NonFinite("H contains NaN or Inf entries")
    if not np.all(np.isfinite(g)):
        raise NonFinite("g contains NaN or Inf entries")
    for name, value in hyper.as_dict().items():
        if not np.isfinite(value) or value <= 0.0:
            raise NonPositiveHyper(f"hyperparameter {name} must be finite and > 0, got {value}")


def _check_positive(v: np.ndarray, name: str) -> np.ndarray:
    v = _as_vector(v, name)
    if v.size and (not np.all(np.isfinite(v)) or np.any(v <= 0.0)):
        raise NonPositiveVariance(f"{name} must be strictly positive and finite")
    return v


def _ig_block(v, alpha, beta, residual):
    """Quadratic + log-barrier terms of one variance family of L."""
    return float(
        0.5 * np.sum(residual * residual / v)
        + (alpha + 1.5) * np.sum(np.log(v))
        + np.sum(beta / v)
    )


def neg_log_posterior(state: SolverState, problem: ForwardProblem, hyper: HyperParams) -> float:
    """Joint negative-log-posterior L at a state (constants dropped).

    Compare L differences or argmins only; the absolute level depends on
    the dropped normalization constants.
    """
    f = _as_vector(state.f_hat, "f_hat")
    v_eps = _check_positive(state.v_eps, "v_eps")
    r_eps = problem.g - problem.H @ f
    total = _ig_block(v_eps, hyper.alpha_eps, hyper.beta_eps, r_eps)
    if problem.is_direct:
        v_f = _check_positive(state.v_f, "v_f")
        total += _ig_block(v_f, hyper.alpha_f, hyper.beta_f, f)
    else:
        z = _as_vector(state.z_hat, "z_hat")
        v_xi = _check_positive(state.v_xi, "v_xi")
        v_z = _check_positive(state.v_z, "v_z")
        r_xi = f - problem.D @ z
        total += _ig_block(v_xi, hyper.alpha_xi, hyper.beta_xi, r_xi)
        total += _ig_block(v_z, hyper.alpha_z, hyper.beta_z, z)
    return total
