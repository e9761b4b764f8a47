"""Closed-loop stall-recovery simulation, ensembles and gPC/MC comparison.

The loop at every control tick: predict the joint filter to the tick, fold
in a measurement when one is due, extract first-order mode strengths, evaluate
the polynomial law in mode space and map it to a physical elevon command at
the current parameter estimate. The truth model is integrated with RK4 at
``dt`` with process noise on the pitch acceleration.

Ensemble members are stepped together along a leading batch axis. Every
member draws its noise from its own generator seeded by ``seed``, and all
batched arithmetic is elementwise or per-matrix, so a member's trajectory
does not depend on which other members share the batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .aircraft import (
    AircraftParams,
    aircraft_basis,
    augmented_design,
    build_design_model,
    dynamics_rhs,
    rk4_step,
)
from .estimation import AUG_G, C_MEAS, FilterState, SigmaConfig, aircraft_transition, extract_modes, linear_update, ukf_predict
from .galerkin import AugmentedSystem
from .hjb import ControlLaw, CostSpec, design_controller, l_function, lift_weights

ORDERS = (1, 2, 3, 5)
G3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class SimConfig:
    order: int = 3
    alpha0_deg: float = 25.0
    seed: int = 0
    T: float = 30.0
    dt: float = 1e-3
    meas_rate: float = 100.0
    # control and filter prediction rate; measurements arrive at meas_rate
    control_rate: float = 1000.0
    Q_w: float = 0.1745
    R_nu: float = 0.81e-4
    P0_state: float = 3.0
    est_offset: tuple[float, float, float] = (-0.0087, 0.0, 0.0261)
    c_prior_mean: float = -9.6098
    c_prior_var: float = 30.0
    # truth lift perturbation; None draws xi ~ N(0, sigma_CL^2) per seed
    xi_true: float | None = 0.0
    Q_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    R_weight: float = 1.0
    ukf_alpha: float = 1.0
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0
    dither_amp: float = 0.0
    dither_freq: float = 1.0
    settle_band_deg: float = 1.0
    hold_time: float = 2.0
    stall_deg: float = 20.0
    aircraft: AircraftParams = field(default_factory=AircraftParams)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("controller order must be >= 1")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        for name in ("meas_rate", "control_rate"):
            ratio = 1.0 / (getattr(self, name) * self.dt)
            if getattr(self, name) <= 0 or abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"{name} must divide the integration rate 1/dt")
        ratio = self.control_rate / self.meas_rate
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("control_rate must be an integer multiple of meas_rate")
        if self.Q_w < 0 or self.R_nu <= 0 or self.P0_state <= 0 or self.c_prior_var <= 0:
            raise ValueError("noise and prior covariances must be positive")
        if len(self.Q_weights) != 3 or min(self.Q_weights) <= 0 or self.R_weight <= 0:
            raise ValueError("state weights need three positive entries and the input weight must be positive")
        SigmaConfig(self.ukf_alpha, self.ukf_beta, self.ukf_kappa)

    @property
    def sigma_cfg(self) -> SigmaConfig:
        return SigmaConfig(self.ukf_alpha, self.ukf_beta, self.ukf_kappa)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "aircraft"}
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return {"simulation": d, "aircraft": self.aircraft.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d or {})
        unknown = set(d) - {"simulation", "aircraft"}
        if unknown:
            raise KeyError(f"unknown config sections: {sorted(unknown)}")
        sim = dict(d.get("simulation") or {})
        names = {f.name for f in fields(cls)} - {"aircraft"}
        bad = set(sim) - names
        if bad:
            raise KeyError(f"unknown simulation keys: {sorted(bad)}")
        for k in ("est_offset", "Q_weights"):
            if k in sim:
                sim[k] = tuple(float(v) for v in sim[k])
        ac = AircraftParams.from_dict(d.get("aircraft") or {})
        return cls(aircraft=ac, **sim)

    def digest(self) -> str:
        import yaml

        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---- cached design artifacts -------------------------------------------------

@dataclass(frozen=True, eq=False)
class Design:
    params: AircraftParams
    trim_state: np.ndarray
    trim_input: float
    system: AugmentedSystem
    cost: CostSpec
    P: np.ndarray


@lru_cache(maxsize=8)
def design_for(params: AircraftParams, Q_weights: tuple, R_weight: float) -> Design:
    model = build_design_model(params)
    basis = aircraft_basis(1)
    system = augmented_design(model, basis)
    cost = lift_weights(np.diag(Q_weights), [[R_weight]], basis)
    law = controller_for(params, Q_weights, R_weight, 1, _system=system, _cost=cost)
    return Design(params, model.trim_state, model.trim_input, system, cost, law.series.P)


_LAWS: dict = {}


def controller_for(params: AircraftParams, Q_weights: tuple, R_weight: float, order: int,
                   _system=None, _cost=None) -> ControlLaw:
    key = (params, tuple(Q_weights), float(R_weight), int(order))
    if key not in _LAWS:
        if _system is None:
            d = design_for(params, tuple(Q_weights), float(R_weight))
            _system, _cost = d.system, d.cost
        _LAWS[key] = design_controller(_system, _cost, order)
    return _LAWS[key]


# ---- trajectory record -----------------------------------------------------------

TRAJECTORY_FIELDS = (
    "t",
    "alpha", "theta", "q",
    "y_alpha", "y_theta", "y_q",
    "est_alpha", "est_theta", "est_q", "est_c",
    "var_alpha", "var_theta", "var_q", "var_c",
    "X_alpha_0", "X_alpha_1", "X_theta_0", "X_theta_1", "X_q_0", "X_q_1",
    "U_0", "U_1", "de",
    "L",
    "gpc_var_alpha", "gpc_var_theta", "gpc_var_q",
)


@dataclass(eq=False)
class Trajectory:
    """Per-measurement-instant records; ``data`` has one column per field."""

    data: np.ndarray
    metrics: dict
    config: SimConfig | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, TRAJECTORY_FIELDS.index(name)]

    def __len__(self) -> int:
        return self.data.shape[0]


def _metrics(rec: np.ndarray, cfg: SimConfig, alpha_T: float, c_true: float, aborted: bool) -> dict:
    t = rec[:, 0]
    alpha = rec[:, 1]
    err = np.degrees(np.abs(alpha - alpha_T))
    inside = err < cfg.settle_band_deg
    outside = np.nonzero(~inside)[0]
    settle = 0.0 if outside.size == 0 else (np.nan if outside[-1] == len(t) - 1 else float(t[outside[-1] + 1]))
    tail = t >= t[-1] - cfg.hold_time - 1e-12
    recovered = bool(not aborted and np.all(inside[tail]) and abs(np.degrees(alpha[-1])) <= cfg.stall_deg)
    L = rec[:, TRAJECTORY_FIELDS.index("L")]
    return {
        "recovered": recovered,
        "settle_time": settle,
        "min_L": float(np.nanmin(L)),
        "max_L": float(np.nanmax(L)),
        "terminal_alpha_deg": float(np.degrees(alpha[-1])),
        "c_true": c_true,
        "c_hat": float(rec[-1, TRAJECTORY_FIELDS.index("est_c")]),
        "xi_hat_error": float(abs(rec[-1, TRAJECTORY_FIELDS.index("est_c")] - c_true)),
        "aborted": aborted,
    }


def _member_noise(cfg: SimConfig, seed: int, n_steps: int, n_meas: int):
    rng = np.random.default_rng(seed)
    xi = rng.normal(0.0, cfg.aircraft.sigma_CL) if cfg.xi_true is None else float(cfg.xi_true)
    omega = rng.normal(0.0, np.sqrt(cfg.Q_w / cfg.dt), n_steps)
    nu = rng.normal(0.0, np.sqrt(cfg.R_nu), (n_meas, 3))
    return xi, omega, nu


def run_ensemble(cfg: SimConfig, members) -> list[Trajectory]:
    """Simulate members ``(order, alpha0_deg, seed)`` sharing all other settings."""
    members = [(int(o), float(a), int(s)) for o, a, s in members]
    if not members:
        raise ValueError("no ensemble members")
    p = cfg.aircraft
    des = design_for(p, tuple(cfg.Q_weights), float(cfg.R_weight))
    basis = des.system.basis
    laws = {o: controller_for(p, tuple(cfg.Q_weights), float(cfg.R_weight), o) for o, _, _ in members}
    B = len(members)
    n_steps = int(round(cfg.T / cfg.dt))
    per_ctrl = int(round(1.0 / (cfg.control_rate * cfg.dt)))
    per_meas = int(round(1.0 / (cfg.meas_rate * cfg.dt)))
    n_meas = n_steps // per_meas + 1
    dt_c = per_ctrl * cfg.dt

    xis, omegas, nus = zip(*(_member_noise(cfg, s, n_steps, n_meas) for _, _, s in members))
    xi = np.array(xis)
    omega = np.stack(omegas)
    nu = np.stack(nus)
    CL3 = p.CL[3]
    c_true = CL3 + xi

    a0 = np.radians([a for _, a, _ in members])
    x = np.stack([a0, np.zeros(B), np.zeros(B)], axis=-1)
    m0 = np.stack([a0 + cfg.est_offset[0], np.full(B, cfg.est_offset[1]), np.full(B, cfg.est_offset[2]),
                   np.full(B, cfg.c_prior_mean)], axis=-1)
    P0 = np.diag([cfg.P0_state] * 3 + [cfg.c_prior_var])
    fs = FilterState(m0, np.broadcast_to(P0, (B, 4, 4)).copy(), 0.0)
    R = cfg.R_nu * np.eye(3)
    Qd = dt_c * cfg.Q_w * np.outer(AUG_G, AUG_G)
    sig = cfg.sigma_cfg
    groups = {o: np.array([i for i, m in enumerate(members) if m[0] == o]) for o in laws}
    trim = des.trim_state

    rec = np.full((B, n_meas, len(TRAJECTORY_FIELDS)), np.nan)
    alive = np.ones(B, dtype=bool)
    de = np.full(B, des.trim_input)
    U = np.zeros((B, 2))
    X = np.zeros((B, 6))

    for step in range(n_steps + 1):
        if step % per_ctrl == 0:
            if step > 0:
                fs = ukf_predict(fs, aircraft_transition(p, de), dt_c, Qd, sig)
            meas = step % per_meas == 0
            if meas:
                k = step // per_meas
                y = x + nu[:, k]
                mean, cov = linear_update(fs.mean, fs.cov, y, C_MEAS, R)
                fs = FilterState(mean, cov, fs.t)
            X = extract_modes(fs, basis, p.sigma_CL, trim)
            for o, idx in groups.items():
                U[idx] = laws[o](X[idx])
            zeta = (fs.mean[:, 3] - CL3) / p.sigma_CL
            psi = basis.evaluate(zeta[:, None])
            de = des.trim_input + (U * psi).sum(axis=-1)
            if cfg.dither_amp:
                de = de + cfg.dither_amp * np.sin(2.0 * np.pi * cfg.dither_freq * step * cfg.dt)
            if meas:
                L = l_function(X, des.cost.Qt, des.P, des.system.H)
                var = np.diagonal(fs.cov, axis1=-2, axis2=-1)
                row = np.concatenate([
                    np.full((B, 1), step * cfg.dt), x, y, fs.mean, var, X, U, de[:, None], L[:, None],
                    X[:, 1::2] ** 2,
                ], axis=-1)
                rec[alive, k] = row[alive]
            bad = ~np.all(np.isfinite(fs.mean), axis=-1) | ~np.all(np.isfinite(fs.cov), axis=(-2, -1)) \
                | ~np.isfinite(de) | ~np.all(np.isfinite(x), axis=-1)
            if np.any(bad & alive):
                alive &= ~bad
                # park dead members on benign values so batched linear algebra keeps working
                mean = np.where(alive[:, None], fs.mean, m0)
                cov = np.where(alive[:, None, None], fs.cov, P0)
                fs = FilterState(mean, cov, fs.t)
                x = np.where(alive[:, None], x, 0.0)
                de = np.where(alive, de, des.trim_input)
        if step == n_steps:
            break
        w = omega[:, step]
        x = rk4_step(lambda s: dynamics_rhs(s, de, xi, p) + w[:, None] * G3, x, cfg.dt)
        blown = ~np.all(np.isfinite(x), axis=-1)
        if np.any(blown):
            # a diverged plant must not reach the measurement update
            alive &= ~blown
            x = np.where(alive[:, None], x, 0.0)
            fs = FilterState(np.where(alive[:, None], fs.mean, m0), np.where(alive[:, None, None], fs.cov, P0), fs.t)

    out = []
    for i, (o, a, s) in enumerate(members):
        mcfg = replace(cfg, order=o, alpha0_deg=a, seed=s)
        aborted = not alive[i]
        r = rec[i]
        if aborted:
            r = r[~np.isnan(r[:, 0])]
        out.append(Trajectory(r, _metrics(r, mcfg, trim[0], float(c_true[i]), aborted), mcfg))
    return out


def run_closed_loop(cfg: SimConfig) -> Trajectory:
    return run_ensemble(cfg, [(cfg.order, cfg.alpha0_deg, cfg.seed)])[0]


# ---- ensembles ---------------------------------------------------------------------

@dataclass(eq=False)
class EnsembleStats:
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    recovery_rate: float
    members: list[Trajectory]
    config: SimConfig

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = TRAJECTORY_FIELDS.index(name)
        return self.mean[:, j], self.std[:, j]


def member_seeds(seed: int, n: int) -> list[int]:
    """Independent 63-bit seeds for ``n`` sub-streams of a master ``seed``."""
    return [int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1)) for ss in np.random.SeedSequence(seed).spawn(n)]


def run_monte_carlo(cfg: SimConfig, n: int, batch: int = 64) -> EnsembleStats:
    """``n`` closed-loop runs, each with its own lift perturbation and noise."""
    if n < 1:
        raise ValueError("need at least one sample")
    cfg = replace(cfg, xi_true=None)
    seeds = member_seeds(cfg.seed, n)
    runs: list[Trajectory] = []
    for i in range(0, n, batch):
        runs += run_ensemble(cfg, [(cfg.order, cfg.alpha0_deg, s) for s in seeds[i:i + batch]])
    full = [r for r in runs if not r.metrics["aborted"]]
    if full:
        stack = np.stack([r.data for r in full])
        mean, std = stack.mean(axis=0), stack.std(axis=0, ddof=1) if len(full) > 1 else np.zeros(stack.shape[1:])
        t = stack[0, :, 0]
    else:
        t = mean = std = np.zeros((0, len(TRAJECTORY_FIELDS)))
    rate = float(np.mean([r.metrics["recovered"] for r in runs]))
    return EnsembleStats(t, mean, std, rate, runs, cfg)


def lift_curve_samples(params: AircraftParams, alpha, n: int, rng: np.random.Generator) -> np.ndarray:
    """Static lift curves ``C_L(alpha)`` for ``n`` draws of the cubic perturbation."""
    from .aircraft import aero_coefficients

    alpha = np.asarray(alpha, dtype=float)
    xi = rng.normal(0.0, params.sigma_CL, (n, 1))
    return aero_coefficients(alpha[None, :], 0.0, 0.0, xi, params)[0]


# ---- gPC versus Monte Carlo ------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkSystem:
    """A stochastic ODE available to :func:`compare_gpc_mc`.

    ``augmented(basis)`` returns the Galerkin system and initial modes;
    ``mc_rhs(x, xi)`` is the sampled right-hand side, vectorized over rows.
    ``exact`` optionally gives the closed-form first two moments at ``t``.
    """

    name: str
    augmented: callable
    mc_rhs: callable
    x0: np.ndarray
    exact: callable | None = None


def _linear_decay() -> BenchmarkSystem:
    from .galerkin import augment, initial_modes

    def aug(basis):
        return augment(lambda z: np.array([[-(1.0 + 0.1 * z[0])]]), np.zeros((1, 1)), basis), \
            initial_modes([1.0], basis)

    def exact(t):
        # x = exp(-(1 + 0.1 xi) t) with xi ~ N(0, 1): lognormal moments
        m1 = np.exp(-t + 0.005 * t * t)
        m2 = np.exp(-2.0 * t + 0.02 * t * t)
        return np.array([m1]), np.array([np.sqrt(m2 - m1 * m1)])

    return BenchmarkSystem("linear_decay", aug, lambda x, xi: -(1.0 + 0.1 * xi[:, None]) * x, np.array([1.0]), exact)


def _constant_decay() -> BenchmarkSystem:
    from .galerkin import augment, initial_modes

    def aug(basis):
        return augment(np.array([[-1.0]]), np.zeros((1, 1)), basis), initial_modes([1.0], basis)

    return BenchmarkSystem("constant_decay", aug, lambda x, xi: -x, np.array([1.0]),
                           lambda t: (np.array([np.exp(-t)]), np.array([0.0])))


def _aircraft_open_loop() -> BenchmarkSystem:
    from .galerkin import initial_modes

    model = build_design_model(AircraftParams())
    s = model.params.sigma_CL
    x0 = np.array([0.05, 0.0, 0.0])

    def aug(basis):
        return augmented_design(model, basis), initial_modes(list(x0), basis)

    def rhs(x, zeta):
        return model.rhs(x, 0.0, s * zeta)

    return BenchmarkSystem("aircraft_open_loop", aug, rhs, x0)


SYSTEMS = {
    "linear_decay": _linear_decay,
    "constant_decay": _constant_decay,
    "aircraft_open_loop": _aircraft_open_loop,
}


def compare_gpc_mc(system_id: str, d: int = 4, n_samples: int = 100_000, t_eval=(0.5, 1.0, 2.0),
                   seed: int = 0) -> dict:
    """Propagate moments by Galerkin gPC and by sampling; report discrepancies.

    Standard errors of the MC estimates use the sample variance (mean) and
    the sample fourth central moment (standard deviation).
    """
    from scipy.integrate import solve_ivp

    from .galerkin import mean_and_variance, propagate
    from .orthopoly import DistributionFamily, build_basis

    if system_id not in SYSTEMS:
        raise KeyError(f"unknown system {system_id!r}; choose from {sorted(SYSTEMS)}")
    sysdef = SYSTEMS[system_id]()
    t_eval = np.asarray(t_eval, dtype=float)
    basis = build_basis(DistributionFamily("gaussian"), 1, d)
    system, X0 = sysdef.augmented(basis)
    Xt = propagate(system, X0, t_eval)
    g_mean, g_var = mean_and_variance(Xt, basis)
    g_std = np.sqrt(g_var)

    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n_samples)
    n = sysdef.x0.size
    x0 = np.broadcast_to(sysdef.x0, (n_samples, n)).ravel()

    def f(t, y):
        return sysdef.mc_rhs(y.reshape(n_samples, n), xi).ravel()

    sol = solve_ivp(f, (0.0, float(t_eval[-1])), x0, t_eval=t_eval, method="DOP853", rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"Monte Carlo integration failed: {sol.message}")
    samples = sol.y.T.reshape(len(t_eval), n_samples, n)
    mc_mean = samples.mean(axis=1)
    mc_std = samples.std(axis=1, ddof=1)
    dev = samples - mc_mean[:, None, :]
    m4 = (dev**4).mean(axis=1)
    se_mean = mc_std / np.sqrt(n_samples)
    with np.errstate(divide="ignore", invalid="ignore"):
        se_std = np.where(mc_std > 0, np.sqrt(np.maximum(m4 - mc_std**4, 0.0) / (4.0 * mc_std**2 * n_samples)), 0.0)
    out = {
        "system": system_id,
        "d": d,
        "n_samples": n_samples,
        "t": t_eval,
        "gpc_mean": g_mean,
        "gpc_std": g_std,
        "mc_mean": mc_mean,
        "mc_std": mc_std,
        "se_mean": se_mean,
        "se_std": se_std,
        "mean_error": np.abs(g_mean - mc_mean),
        "std_error": np.abs(g_std - mc_std),
    }
    if sysdef.exact is not None:
        ex = [sysdef.exact(t) for t in t_eval]
        ex_mean = np.array([e[0] for e in ex])
        ex_std = np.array([e[1] for e in ex])
        out.update(exact_mean=ex_mean, exact_std=ex_std,
                   gpc_mean_error_exact=np.abs(g_mean - ex_mean), gpc_std_error_exact=np.abs(g_std - ex_std))
    return out


# ---- reports and config files ----------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))


def ensemble_fields() -> list[str]:
    return ["t"] + [f"{s}_{f}" for f in TRAJECTORY_FIELDS[1:] for s in ("mean", "std")]


def emit_report(obj, path, fmt: str = "csv") -> None:
    """Write a trajectory or ensemble as CSV or as a plain-text summary."""
    if fmt == "csv":
        if isinstance(obj, Trajectory):
            write_csv(path, TRAJECTORY_FIELDS, obj.data)
        elif isinstance(obj, EnsembleStats):
            cols = [obj.t]
            for j in range(1, len(TRAJECTORY_FIELDS)):
                cols += [obj.mean[:, j], obj.std[:, j]]
            write_csv(path, ensemble_fields(), np.stack(cols, axis=-1))
        else:
            raise TypeError(f"cannot write {type(obj).__name__} as csv")
    elif fmt == "summary":
        cfg = obj.config
        lines = [f"seed: {cfg.seed}", f"config_hash: {cfg.digest()}"]
        if isinstance(obj, Trajectory):
            lines += [f"order: {cfg.order}", f"alpha0_deg: {cfg.alpha0_deg}"]
            lines += [f"{k}: {v}" for k, v in obj.metrics.items()]
        else:
            lines += [f"order: {cfg.order}", f"alpha0_deg: {cfg.alpha0_deg}", f"samples: {len(obj.members)}",
                      f"recovery_rate: {obj.recovery_rate}"]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_config(path=None, overrides: dict | None = None) -> SimConfig:
    """Defaults, then the YAML file at ``path``, then flat ``simulation`` overrides."""
    import yaml

    data = SimConfig().to_dict()
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ValueError("config file must be a mapping of sections")
        for sec, body in loaded.items():
            if sec not in data:
                raise KeyError(f"unknown config section {sec!r}")
            if not isinstance(body, dict):
                raise ValueError(f"section {sec!r} must be a mapping")
            data[sec].update(body)
    for k, v in (overrides or {}).items():
        if v is not None:
            data["simulation"][k] = v
    return SimConfig.from_dict(data)


def dump_config(cfg: SimConfig) -> str:
    import yaml

    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
