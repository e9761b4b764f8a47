"""Longitudinal fighter-aircraft model with an uncertain cubic lift term.

States are angle of attack, pitch angle and pitch rate ``(alpha, theta, q)``;
the input is the elevon deflection. Airspeed is constant. The lift cubic
coefficient is ``CL3 + xi`` with ``xi ~ N(0, sigma_CL^2)``.

The same right-hand side is written once over a generic ring so it can be
evaluated on arrays (truth simulation) or on truncated polynomials (design
model about trim).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .galerkin import AugmentedSystem, augment
from .orthopoly import Basis, DistributionFamily, build_basis
from .poly import Poly

G_VEC = np.array([0.0, 0.0, 1.0])


def isa_density(h: float) -> float:
    """ISA troposphere density (kg/m^3) at geometric altitude ``h`` metres."""
    T = 288.15 - 0.0065 * h
    p = 101325.0 * (T / 288.15) ** (9.80665 / (0.0065 * 287.053))
    return p / (287.053 * T)


@dataclass(frozen=True)
class AircraftParams:
    mass: float = 8780.0
    Iyy: float = 13418.0
    S: float = 50.2
    chord: float = 4.12
    span: float = 15.84
    V_c: float = 171.3
    # cruise altitude, read as 30,000 ft
    h_c: float = 9144.0
    rho: float = field(default_factory=lambda: round(isa_density(9144.0), 4))
    g: float = 9.81
    CL: tuple[float, float, float, float] = (0.0179, 3.2569, 0.5450, -9.6098)
    CD: tuple[float, float, float, float] = (0.0355, -0.1171, 1.6552, 0.8908)
    CM: tuple[float, float, float, float] = (-0.0332, -2.8543, 0.8669, 2.3927)
    CL_q: float = 4.649
    CL_u: float = 0.0919
    CL_de: float = -0.2532
    CM_q: float = -0.9064
    CM_u: float = 0.0
    CM_de: float = -4.599
    sigma_CL: float = 5.48
    # V_t / V_c term of the lift/moment increments, constant under fixed speed
    include_speed_term: bool = True

    def __post_init__(self):
        for name in ("mass", "Iyy", "S", "chord", "span", "V_c", "rho", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.sigma_CL > 0:
            raise ValueError("sigma_CL must be positive")
        for name in ("CL", "CD", "CM"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
            if len(getattr(self, name)) != 4:
                raise ValueError(f"{name} needs four cubic coefficients")

    @property
    def qbar(self) -> float:
        return 0.5 * self.rho * self.V_c**2

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("CL", "CD", "CM"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AircraftParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown aircraft parameters: {sorted(unknown)}")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def _cubic(c, a):
    return c[0] + c[1] * a + c[2] * a * a + c[3] * a * a * a


def aero_coefficients(alpha, theta_dot, de, xi, params: AircraftParams, V_t=None):
    """Lift, drag and moment coefficients ``(C_L, C_D, C_M)``."""
    p = params
    rate = p.chord / (2.0 * p.V_c) * theta_dot
    speed = (p.V_c if V_t is None else V_t) / p.V_c if p.include_speed_term else 0.0
    a3 = alpha * alpha * alpha
    CL = _cubic(p.CL, alpha) + xi * a3 + p.CL_q * rate + p.CL_u * speed + p.CL_de * de
    CD = _cubic(p.CD, alpha)
    CM = _cubic(p.CM, alpha) + p.CM_q * rate + p.CM_u * speed + p.CM_de * de
    return CL, CD, CM


def _rhs(alpha, theta, q, de, xi, p: AircraftParams, cos, sin):
    CL, CD, CM = aero_coefficients(alpha, q, de, xi, p)
    qS = p.qbar * p.S
    m, u, g = p.mass, p.V_c, p.g
    ca, sa = cos(alpha), sin(alpha)
    ct, st = cos(theta), sin(theta)
    ca2, sa2 = ca * ca, sa * sa
    bracket = (
        qS * ca2 * ca * CL
        - m * g * ca2 * ct
        - m * u * q * ca2
        - 2.0 * qS * sa * ca2 * CD
        - m * u * q * sa2
        - m * g * sa * ca * st
        - qS * sa2 * ca * CL
    )
    alpha_dot = bracket * (-1.0 / (m * u))
    q_dot = CM * (p.chord * qS / p.Iyy)
    return alpha_dot, q, q_dot


def dynamics_rhs(state, de, xi, params: AircraftParams) -> np.ndarray:
    """Time derivative of ``(alpha, theta, q)``; broadcasts over leading axes.

    Same equations as the generic form with the trigonometric products
    collapsed (``cos^2 - sin^2``, ``cos(alpha - theta)``), which matters for
    the cost of ensemble runs.
    """
    p = params
    state = np.asarray(state, dtype=float)
    a, th, q = state[..., 0], state[..., 1], state[..., 2]
    de = np.asarray(de, dtype=float)
    xi = np.asarray(xi, dtype=float)
    qS = p.qbar * p.S
    k = qS / (p.mass * p.V_c)
    rate = p.chord / (2.0 * p.V_c)
    speed = 1.0 if p.include_speed_term else 0.0
    cL, cD, cM = p.CL, p.CD, p.CM
    CL = (cL[0] + p.CL_u * speed) + a * (cL[1] + a * (cL[2] + a * (cL[3] + xi))) \
        + (p.CL_q * rate) * q + p.CL_de * de
    CD = cD[0] + a * (cD[1] + a * (cD[2] + a * cD[3]))
    CM = (cM[0] + p.CM_u * speed) + a * (cM[1] + a * (cM[2] + a * cM[3])) \
        + (p.CM_q * rate) * q + p.CM_de * de
    ca, sa = np.cos(a), np.sin(a)
    ad = ca * (-k * (ca * ca - sa * sa) * CL + (p.g / p.V_c) * np.cos(a - th) + (2.0 * k) * sa * ca * CD) + q
    qd = CM * (p.chord * qS / p.Iyy)
    shape = np.broadcast_shapes(ad.shape, qd.shape, q.shape)
    out = np.empty(shape + (3,))
    out[..., 0] = ad
    out[..., 1] = q
    out[..., 2] = qd
    return out


def trim_residual(alpha: float, de: float, params: AircraftParams, gamma: float = 0.0) -> np.ndarray:
    f = dynamics_rhs(np.array([alpha, alpha + gamma, 0.0]), de, 0.0, params)
    return np.array([f[0], f[2]])


def solve_trim(params: AircraftParams, gamma: float = 0.0, tol: float = 1e-10, max_iter: int = 50):
    """Newton solve for ``(alpha_T, de_T)`` in radians with ``theta = alpha + gamma``, ``q = 0``."""
    x = np.array([0.05, -0.03])
    h = 1e-7
    for _ in range(max_iter):
        F = trim_residual(x[0], x[1], params, gamma)
        if np.linalg.norm(F) < tol:
            return float(x[0]), float(x[1])
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            J[:, j] = (trim_residual(*(x + e), params, gamma) - trim_residual(*(x - e), params, gamma)) / (2 * h)
        x = x - np.linalg.solve(J, F)
        if not np.all(np.isfinite(x)) or abs(x[0]) > 1.0:
            break
    raise RuntimeError("trim Newton iteration diverged; check density/aero parameters")


def calibrate_density(params: AircraftParams, alpha_T_deg: float, lo: float = 0.4, hi: float = 1.2) -> float:
    """Air density for which the trim angle of attack equals ``alpha_T_deg``."""
    from scipy.optimize import brentq

    def f(rho):
        return math.degrees(solve_trim(replace(params, rho=rho))[0]) - alpha_T_deg

    return brentq(f, lo, hi, xtol=1e-12)


# ---- polynomial design model about trim ------------------------------------

_NV = 5  # x1, x2, x3, u, xi


def _series(fun_derivs, center: float, var: Poly, order: int) -> Poly:
    out = Poly.const(_NV, 0.0)
    vk = Poly.const(_NV, 1.0)
    for k in range(order + 1):
        out = out + vk * (fun_derivs(k, center) / math.factorial(k))
        vk = vk.mul(var)
    return out


def _cos_d(k, c):
    return [math.cos(c), -math.sin(c), -math.cos(c), math.sin(c)][k % 4]


def _sin_d(k, c):
    return [math.sin(c), math.cos(c), -math.sin(c), -math.cos(c)][k % 4]


@dataclass(frozen=True, eq=False)
class DesignModel:
    """Trim-shifted model ``x' = A(xi) x + h(x, xi) + B u`` (cubic in ``x``).

    ``A(xi) = A0 + xi * A1``; ``h`` polynomials use variables ``(x1, x2, x3, xi)``.
    """

    params: AircraftParams
    trim_state: np.ndarray
    trim_input: float
    A0: np.ndarray
    A1: np.ndarray
    B: np.ndarray
    h: list[Poly]
    # rows: constant trim residual, coefficient of xi
    dropped_offset: np.ndarray

    def A(self, xi: float) -> np.ndarray:
        return self.A0 + xi * self.A1

    def rhs(self, x, u, xi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi_arr = np.broadcast_to(np.asarray(xi, dtype=float), x.shape[:-1])
        z = np.concatenate([x, xi_arr[..., None]], axis=-1)
        hx = np.stack([np.asarray(p(z)) for p in self.h], axis=-1)
        lin = np.einsum("ij,...j->...i", self.A0, x) + xi_arr[..., None] * np.einsum("ij,...j->...i", self.A1, x)
        return lin + hx + np.asarray(u, dtype=float)[..., None] * self.B

    def germ_polynomials(self) -> list[Poly]:
        """``h`` with ``xi = sigma_CL * zeta``, variables ``(x1, x2, x3, zeta)``."""
        s = self.params.sigma_CL
        out = []
        for p in self.h:
            out.append(Poly(4, {e: c * s ** e[3] for e, c in p.terms.items()}))
        return out


def build_design_model(params: AircraftParams, trim=None, gamma: float = 0.0) -> DesignModel:
    """Cubic Taylor model of the dynamics about trim.

    Trigonometric factors are expanded to third order; aero polynomials are
    exact. State-input cross terms are dropped so ``B`` is constant, and the
    ``xi * alpha_T^3`` forcing at the origin is dropped so the origin stays an
    equilibrium for every ``xi``.
    """
    if trim is None:
        trim = solve_trim(params, gamma)
    aT, deT = trim
    thT = aT + gamma
    x = [Poly.var(_NV, i) for i in range(_NV)]
    alpha = x[0] + aT
    theta = x[1] + thT
    q = x[2]
    de = x[3] + deT
    xi = x[4]
    cache = {}

    def trig(kind, derivs):
        def fn(v):
            which = 0 if v is alpha else 1
            if (kind, which) not in cache:
                cache[(kind, which)] = _series(derivs, (aT, thT)[which], x[which], 3)
            return cache[(kind, which)]
        return fn

    cos, sin = trig("cos", _cos_d), trig("sin", _sin_d)

    comps = _rhs(alpha, theta, q, de, xi, params, cos, sin)
    A0 = np.zeros((3, 3))
    A1 = np.zeros((3, 3))
    B = np.zeros(3)
    offset = np.zeros((2, 3))
    h = []
    for i, f in enumerate(comps):
        if not isinstance(f, Poly):
            f = Poly.const(_NV, float(f)) if np.isscalar(f) else f
        hterms = {}
        for e, c in f.terms.items():
            xdeg = sum(e[:3])
            if e[3] and xdeg:
                continue  # state-input cross term
            if e[3]:
                if e[3] == 1 and e[4] == 0:
                    B[i] += c
                continue
            if xdeg == 0:
                offset[min(e[4], 1), i] += c  # trim residual; xi * alpha_T^3 forcing
            elif xdeg == 1:
                j = e[:3].index(1)
                if e[4] == 0:
                    A0[i, j] += c
                elif e[4] == 1:
                    A1[i, j] += c
            elif xdeg <= 3:
                hterms[(e[0], e[1], e[2], e[4])] = c
        h.append(Poly(4, hterms))
    return DesignModel(params, np.array([aT, thT, 0.0]), deT, A0, A1, B, h, offset)


def aircraft_basis(d: int = 1) -> Basis:
    return build_basis(DistributionFamily("gaussian"), 1, d)


def augmented_design(model: DesignModel, basis: Basis | None = None) -> AugmentedSystem:
    """Galerkin-projected design model over a Gaussian germ ``zeta = xi / sigma_CL``."""
    basis = aircraft_basis(1) if basis is None else basis
    s = model.params.sigma_CL
    return augment(
        lambda z: model.A0 + s * z[0] * model.A1,
        model.B.reshape(3, 1),
        basis,
        h=model.germ_polynomials(),
        taylor_order=2,
    )


# ---- truth simulation ------------------------------------------------------

def rk4_step(f, x, dt: float):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def truth_step(state, de, xi, dt: float, omega, params: AircraftParams) -> np.ndarray:
    """One RK4 step with process noise ``omega`` held over the step on ``q'``."""
    omega = np.asarray(omega, dtype=float)

    def f(x):
        return dynamics_rhs(x, de, xi, params) + omega[..., None] * G_VEC

    return rk4_step(f, np.asarray(state, dtype=float), dt)


def measure(state, nu) -> np.ndarray:
    """Full-state measurement ``y = x + nu``."""
    return np.asarray(state, dtype=float) + np.asarray(nu, dtype=float)
