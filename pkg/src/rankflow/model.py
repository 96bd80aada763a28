"""Model parameters of the rank-based diffusion and its closed-form constants.

The particle system is

    dX_i = delta_{rank(i)} dt + sigma_{rank(i)} dW_i,   i = 1..n,

where rank(i) is the ascending rank of X_i.  The spacings
Y_j = X_(j+1) - X_(j) form a reflected Brownian motion in the orthant with
drift ``gamma``, covariance ``xi`` and reflection matrix ``r``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateDrift,
    DimensionMismatch,
    DimensionTooSmall,
    FactorizationFailure,
    NonPositiveSigma,
    UnstableModel,
)

MATRIX_TOL = 1e-10
CONDITION_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Dimension, rank drifts and rank volatilities of the particle system."""

    n: int
    delta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        delta = np.array(self.delta, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if len(delta) != self.n or len(sigma) != self.n:
            raise DimensionMismatch(
                f"expected {self.n} drifts and volatilities, got {len(delta)} and {len(sigma)}"
            )
        delta.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def atlas(cls, n: int, delta: float = 1.0, sigma: float = 1.0) -> "ModelParams":
        """Atlas model: only the lowest particle has drift ``delta``."""
        d = np.zeros(n)
        if n:
            d[0] = delta
        return cls(n, d, np.full(n, float(sigma)))

    def to_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelParams":
        return cls(int(obj["n"]), obj["delta"], obj["sigma"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.sigma, other.sigma)
        )

    def __hash__(self):
        return hash((self.n, self.delta.tobytes(), self.sigma.tobytes()))


def validate(params: ModelParams) -> ModelParams:
    if params.n < 2:
        raise DimensionTooSmall(f"need n >= 2 particles, got n={params.n}")
    if not np.all(params.sigma > 0):
        raise NonPositiveSigma(f"volatilities must be positive, got {params.sigma.tolist()}")
    return params


def _centered_drifts(delta) -> list:
    exact = [Fraction(float(d)) for d in delta]
    mean = sum(exact) / len(exact)
    return [d - mean for d in exact]


def compute_alphas(params: ModelParams) -> tuple[np.ndarray, bool]:
    """Return ``alpha_k = 2 * sum_{i<=k} (delta_i - mean(delta))`` and the stability flag.

    Partial sums are carried out in exact rational arithmetic, so each alpha_k
    is the correctly rounded value of the true partial sum.
    """
    centered = _centered_drifts(params.delta)
    alpha = np.empty(params.n - 1)
    acc = Fraction(0)
    for k in range(params.n - 1):
        acc += centered[k]
        alpha[k] = float(2 * acc)
    return alpha, bool(np.all(alpha > 0))


def alpha_tilde(params: ModelParams, alpha: Optional[np.ndarray] = None) -> np.ndarray:
    """Rates of the exponential coordinates of the stationary spacing law."""
    if alpha is None:
        alpha, _ = compute_alphas(params)
    s2 = params.sigma**2
    return 2.0 * alpha / (s2[:-1] + s2[1:])


def check_equal_variance_increments(params: ModelParams, tol: float = CONDITION_TOL) -> bool:
    inc = np.diff(params.sigma**2)
    return bool(np.max(np.abs(inc - inc[0])) <= tol)


def lambda_n(n: int) -> float:
    """Inverse of the smallest eigenvalue of A'A for the n x (n-1) difference matrix A."""
    if n < 2:
        raise DimensionTooSmall(f"need n >= 2, got {n}")
    return 1.0 / (2.0 - 2.0 * math.cos(math.pi / n))


def difference_matrix(n: int) -> np.ndarray:
    """The n x (n-1) matrix mapping ordered positions to gradients in spacing space."""
    a = np.zeros((n, n - 1))
    idx = np.arange(n - 1)
    a[idx, idx] = -1.0
    a[idx + 1, idx] = 1.0
    return a


def spacings_covariance(params: ModelParams) -> np.ndarray:
    s2 = params.sigma**2
    m = params.n - 1
    xi = np.diag(s2[:-1] + s2[1:])
    if m > 1:
        off = -s2[1:-1]
        xi[np.arange(1, m), np.arange(m - 1)] = off
        xi[np.arange(m - 1), np.arange(1, m)] = off
    return xi


def reflection_matrix(n: int) -> np.ndarray:
    m = n - 1
    return np.eye(m) - 0.5 * (np.eye(m, k=1) + np.eye(m, k=-1))


def spacings_drift(params: ModelParams) -> np.ndarray:
    return np.diff(params.delta)


@dataclass(frozen=True)
class DerivedConstants:
    """Everything computable in closed form from a ``ModelParams``.

    ``beta`` and ``c_nu`` are ``None`` for unstable models and
    ``c_p_centered`` is ``None`` when all drifts coincide.
    """

    alpha: np.ndarray
    alpha_tilde: np.ndarray
    stable: bool
    lambda_n: float
    beta: Optional[float]
    c_nu: Optional[float]
    c_p_centered: Optional[float]
    gamma: np.ndarray
    xi: np.ndarray
    r: np.ndarray

    def to_dict(self) -> dict:
        out = {
            "alpha": self.alpha.tolist(),
            "alpha_tilde": self.alpha_tilde.tolist(),
            "stable": self.stable,
            "lambda_n": self.lambda_n,
            "gamma": self.gamma.tolist(),
            "xi": self.xi.tolist(),
            "r": self.r.tolist(),
        }
        if self.beta is not None:
            out["beta"] = self.beta
        if self.c_nu is not None:
            out["c_nu"] = self.c_nu
        if self.c_p_centered is not None:
            out["c_p_centered"] = self.c_p_centered
        return out


def derive(params: ModelParams) -> DerivedConstants:
    validate(params)
    alpha, stable = compute_alphas(params)
    at = alpha_tilde(params, alpha)
    lam = lambda_n(params.n)
    if stable:
        c_nu = 4.0 / np.min(at) ** 2
        beta = lam * c_nu
    else:
        c_nu = beta = None
    try:
        c_p = centered_poincare_constant(params)
    except DegenerateDrift:
        c_p = None
    return DerivedConstants(
        alpha=alpha,
        alpha_tilde=at,
        stable=stable,
        lambda_n=lam,
        beta=beta,
        c_nu=c_nu,
        c_p_centered=c_p,
        gamma=spacings_drift(params),
        xi=spacings_covariance(params),
        r=reflection_matrix(params.n),
    )


def _require_stable(derived: DerivedConstants):
    if not derived.stable:
        raise UnstableModel(f"alpha = {derived.alpha.tolist()} is not strictly positive")


def beta_constant(derived: DerivedConstants) -> float:
    """Rate constant ``4 lambda_n / min_k alpha_tilde_k^2`` of the tail bound."""
    _require_stable(derived)
    return 4.0 * derived.lambda_n / np.min(derived.alpha_tilde) ** 2


def poincare_constant_nu(derived: DerivedConstants) -> float:
    _require_stable(derived)
    return 4.0 / np.min(derived.alpha_tilde) ** 2


def poincare_constant_skew(params: ModelParams) -> float:
    """Poincare constant ``4 lambda_max(Xi^{-1}) / min alpha_tilde^2`` for general sigma.

    Reduces to ``beta_constant`` when all volatilities are one.
    """
    alpha, stable = compute_alphas(params)
    if not stable:
        raise UnstableModel(f"alpha = {alpha.tolist()} is not strictly positive")
    at = alpha_tilde(params, alpha)
    lam = 1.0 / np.linalg.eigvalsh(spacings_covariance(params))[0]
    return 4.0 * lam / np.min(at) ** 2


def centered_poincare_constant(params: ModelParams) -> float:
    """``1 / sum_i (delta_i - mean(delta))^2``."""
    sq = sum(c * c for c in _centered_drifts(params.delta))
    if sq == 0:
        raise DegenerateDrift("all drifts are equal")
    return float(1 / sq)


@dataclass(frozen=True)
class SkewDecomposition:
    sigma_root: np.ndarray
    n_matrix: np.ndarray
    q_matrix: np.ndarray
    residual: float


def skew_symmetry_residual(params: ModelParams, root: str = "cholesky") -> SkewDecomposition:
    """Decompose the transformed reflection matrix into normal and skew parts.

    With ``Sigma Sigma' = Xi`` and ``D = diag(Xi)`` the face normals are
    ``N = Sigma' D^{-1/2}``.  Reflection columns are scaled so their normal
    component is one, ``Rfrak = Sigma^{-1} R D^{1/2}``, and ``Q = Rfrak - N``;
    the residual is ``max |N'Q + Q'N|``.  The residual does not depend on the
    choice of root (``"cholesky"`` or ``"symmetric"``).
    """
    validate(params)
    xi = spacings_covariance(params)
    if root == "cholesky":
        try:
            sig = np.linalg.cholesky(xi)
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(f"Xi is not positive definite: {exc}") from exc
    elif root == "symmetric":
        w, v = np.linalg.eigh(xi)
        if w[0] <= 0:
            raise FactorizationFailure(f"Xi has nonpositive eigenvalue {w[0]}")
        sig = (v * np.sqrt(w)) @ v.T
    else:
        raise ValueError(f"unknown root {root!r}")
    if np.linalg.cond(sig) > 1e12:
        raise FactorizationFailure("Xi is numerically singular")
    d_half = np.sqrt(np.diag(xi))
    n_mat = sig.T / d_half
    r_frak = scipy.linalg.solve(sig, reflection_matrix(params.n)) * d_half
    q_mat = r_frak - n_mat
    s = n_mat.T @ q_mat
    return SkewDecomposition(sig, n_mat, q_mat, float(np.max(np.abs(s + s.T))))
