"""Linear Lyapunov certificates for the spacings reflected Brownian motion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EpsOutOfRange, NTooSmall, SingularR
from .model import ModelParams, reflection_matrix, spacings_drift

STRICT_TOL = 1e-12


@dataclass(frozen=True)
class LyapunovCertificate:
    v: np.ndarray
    drift_inner: float
    reflection_inners: np.ndarray
    valid: bool

    def to_dict(self) -> dict:
        return {
            "v": self.v.tolist(),
            "drift_inner": self.drift_inner,
            "reflection_inners": self.reflection_inners.tolist(),
            "valid": self.valid,
        }


def farkas_criterion(r: np.ndarray, gamma: np.ndarray, tol: float = STRICT_TOL) -> bool:
    """True iff some v has <gamma, v> < 0 and <r_j, v> <= 0 for every column r_j.

    By Farkas' lemma this holds exactly when R x + gamma = 0 has no solution
    in the closed orthant, i.e. when -R^{-1} gamma has a negative entry.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if np.linalg.matrix_rank(r) < r.shape[0]:
        raise SingularR("reflection matrix is singular")
    x = -np.linalg.solve(r, gamma)
    return bool(np.any(x < -tol))


def explicit_v(n: int, eps: float) -> np.ndarray:
    """v_i = (n/2 - 1)^2 - (n/2 - i)^2 + eps for i = 1..n-1."""
    if n < 4:
        raise NTooSmall(f"explicit vector is defined for n >= 4, got n={n}")
    limit = (n / 2 - 1) ** 2 - (n / 2 - 2) ** 2
    if not 0 < eps < limit:
        raise EpsOutOfRange(f"eps must lie in (0, {limit}), got {eps}")
    i = np.arange(1, n)
    return (n / 2 - 1) ** 2 - (n / 2 - i) ** 2 + eps


def verify_certificate(v, r, gamma, tol: float = STRICT_TOL) -> LyapunovCertificate:
    v = np.asarray(v, dtype=float).reshape(-1)
    r = np.atleast_2d(np.asarray(r, dtype=float))
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if not (len(v) == len(gamma) == r.shape[0] == r.shape[1]):
        raise DimensionMismatch(f"v {len(v)}, gamma {len(gamma)}, R {r.shape}")
    drift = float(gamma @ v)
    refl = r.T @ v
    valid = drift < -tol and bool(np.all(refl <= tol)) and bool(np.all(v > 0))
    return LyapunovCertificate(v, drift, refl, valid)


def certificate_for(params: ModelParams, eps: float) -> LyapunovCertificate:
    return verify_certificate(explicit_v(params.n, eps), reflection_matrix(params.n),
                              spacings_drift(params))
