"""Unscented Kalman filter for joint state and parameter estimation.

The filter runs on the augmented state ``[x; p]`` where the parameters ``p``
have zero dynamics and zero process noise. All routines accept a leading batch
axis so an ensemble of independent filters can be stepped together; each
member's arithmetic is independent of the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .aircraft import AircraftParams, dynamics_rhs, rk4_step
from .orthopoly import Basis


class FilterError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SigmaConfig:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("sigma spread alpha must lie in (0, 1]")

    def lam(self, n: int) -> float:
        return self.alpha**2 * (n + self.kappa) - n

    def weights(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        lam = self.lam(n)
        if n + lam <= 0:
            raise ValueError(f"n + lambda = {n + lam} must be positive")
        wm = np.full(2 * n + 1, 0.5 / (n + lam))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + 1.0 - self.alpha**2 + self.beta
        return wm, wc


@dataclass(frozen=True, eq=False)
class FilterState:
    """Mean ``(..., N)``, covariance ``(..., N, N)`` and time stamp."""

    mean: np.ndarray
    cov: np.ndarray
    t: float = 0.0

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _cholesky(P: np.ndarray, jitter: float = 1e-10) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(P.shape[-1])
    try:
        return np.linalg.cholesky(P + jitter * eye)
    except np.linalg.LinAlgError as exc:
        raise FilterError("covariance is not positive semidefinite") from exc


def sigma_points(mean, cov, cfg: SigmaConfig = SigmaConfig()):
    """Return ``(points, wm, wc)``; points have shape ``(..., 2N+1, N)``.

    Ordering is the centre, then ``+`` columns, then ``-`` columns of the
    scaled Cholesky factor.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = mean.shape[-1]
    if cov.shape[-2:] != (n, n):
        raise ValueError("covariance shape does not match the mean")
    wm, wc = cfg.weights(n)
    L = _cholesky(_symmetrize(cov)) * np.sqrt(n + cfg.lam(n))
    cols = np.swapaxes(L, -1, -2)
    m = mean[..., None, :]
    pts = np.concatenate([m, m + cols, m - cols], axis=-2)
    return pts, wm, wc


def unscented_moments(points, wm, wc):
    mean = np.einsum("j,...ji->...i", wm, points)
    dev = points - mean[..., None, :]
    cov = np.einsum("j,...ji,...jk->...ik", wc, dev, dev)
    return mean, cov


def linear_update(mean, cov, y, C, R):
    """Measurement update for ``y = C x + nu``.

    For a linear measurement the unscented cross and innovation covariances
    equal ``P C'`` and ``C P C' + R`` exactly, so they are formed directly.
    """
    C = np.asarray(C, dtype=float)
    PCt = cov @ C.T
    S = _symmetrize(C @ PCt + R)
    cond = np.linalg.cond(S)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
        raise FilterError("innovation covariance is singular")
    # K = PC' S^-1 through a solve on the transposed system
    K = np.swapaxes(np.linalg.solve(S, np.swapaxes(PCt, -1, -2)), -1, -2)
    # einsum keeps each member's arithmetic independent of the batch size
    innov = np.asarray(y, dtype=float) - np.einsum("ij,...j->...i", C, mean)
    mean = mean + np.einsum("...ij,...j->...i", K, innov)
    cov = cov - K @ S @ np.swapaxes(K, -1, -2)
    return mean, _symmetrize(cov)


def ukf_predict(fs: FilterState, transition: Callable, dt: float, Qd, cfg: SigmaConfig = SigmaConfig()) -> FilterState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    pts, wm, wc = sigma_points(fs.mean, fs.cov, cfg)
    prop = transition(pts, dt)
    mean, cov = unscented_moments(prop, wm, wc)
    return FilterState(mean, _symmetrize(cov + Qd), fs.t + dt)


def ukf_step(fs: FilterState, y, dt: float, transition: Callable, Qd, C, R,
             cfg: SigmaConfig = SigmaConfig()) -> FilterState:
    """Predict over ``dt`` with ``transition(points, dt)`` then update with ``y``."""
    pred = ukf_predict(fs, transition, dt, Qd, cfg)
    mean, cov = linear_update(pred.mean, pred.cov, y, C, R)
    return FilterState(mean, cov, pred.t)


def ukf_update(fs: FilterState, y, C, R) -> FilterState:
    mean, cov = linear_update(fs.mean, fs.cov, y, C, R)
    return replace(fs, mean=mean, cov=cov)


# ---- aircraft joint state / lift-coefficient filter -------------------------

AUG_G = np.array([0.0, 0.0, 1.0, 0.0])
C_MEAS = np.hstack([np.eye(3), np.zeros((3, 1))])


def aircraft_transition(params: AircraftParams, de, substeps: int = 1):
    """Transition for ``[alpha, theta, q, c]`` where ``c`` is the full cubic lift coefficient.

    ``de`` may be a scalar or one value per batch member; the returned callable
    broadcasts it over the sigma-point axis.
    """
    CL3 = params.CL[3]
    de = np.asarray(de, dtype=float)

    def transition(points, dt):
        d = de[..., None] if de.ndim else de
        x = points[..., :3]
        xi = points[..., 3] - CL3
        h = dt / substeps
        for _ in range(substeps):
            x = rk4_step(lambda s: dynamics_rhs(s, d, xi, params), x, h)
        return np.concatenate([x, points[..., 3:]], axis=-1)

    return transition


def aircraft_ukf_step(fs: FilterState, de, y, dt: float, Q_w: float, R_nu, params: AircraftParams,
                      cfg: SigmaConfig = SigmaConfig()) -> FilterState:
    Qd = dt * Q_w * np.outer(AUG_G, AUG_G)
    return ukf_step(fs, y, dt, aircraft_transition(params, de), Qd, C_MEAS, np.asarray(R_nu, dtype=float), cfg)


def extract_modes(fs: FilterState, basis: Basis, sigma: float, offset=None) -> np.ndarray:
    """First-order mode strengths from the joint posterior.

    The last entry of the filter state is the uncertain parameter; its germ is
    ``zeta = (p - E p) / sigma`` so ``X_{i,1} = cov(x_i, p) / sigma``. ``offset``
    is subtracted from the physical means (trim shift). Layout is state-major.
    """
    if basis.P != 1 or basis.r != 1:
        raise ValueError("mode extraction from a Gaussian filter supports P = 1 only")
    mean = np.asarray(fs.mean, dtype=float)
    n = mean.shape[-1] - 1
    x0 = mean[..., :n] if offset is None else mean[..., :n] - np.asarray(offset, dtype=float)
    x1 = fs.cov[..., :n, n] / sigma
    return np.stack([x0, x1], axis=-1).reshape(mean.shape[:-1] + (2 * n,))
