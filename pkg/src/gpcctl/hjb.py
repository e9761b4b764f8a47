"""Polynomial suboptimal feedback from a perturbation series of the HJB equation.

For ``X' = AA X + HH(X) + BB U`` with cost ``X'QX + U'RU`` and ``HH`` split into
homogeneous parts ``f_2, f_3, ...``, the cost-to-go is expanded as
``V = V_0 + V_1 + ...`` with ``V_n`` homogeneous of degree ``n + 2``.

``V_0 = X' P X`` with ``P`` the stabilizing Riccati solution. With
``S = BB R^-1 BB'`` and closed-loop matrix ``Ac = AA - S P``, every higher
term solves the linear equation

    grad(V_n) . (Ac X) = -( sum_{k<n} grad(V_k) . f_{n+1-k}
                            - 1/4 sum_{0<k<n} grad(V_k)' S grad(V_{n-k}) )

by matching monomial coefficients. The feedback of order ``K`` is
``U = -1/2 R^-1 BB' sum_{n<K} grad(V_n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .galerkin import AugmentedSystem, reconstruct_moments
from .orthopoly import Basis
from .poly import Poly, PolyField, monomials


class RiccatiError(ValueError):
    pass


class MatchingSystemError(ValueError):
    """Monomial-matching system for some ``V_n`` is singular."""

    def __init__(self, order: int, detail: str):
        super().__init__(f"coefficient system for V_{order} is singular: {detail}")
        self.order = order


def _check_pd(M: np.ndarray, name: str):
    if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


@dataclass(frozen=True, eq=False)
class CostSpec:
    Q: np.ndarray
    R: np.ndarray
    Qt: np.ndarray
    Rt: np.ndarray


def lift_weights(Q, R, basis: Basis) -> CostSpec:
    """Lift physical weights to mode space: ``Q (x) W`` and ``R (x) W``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    _check_pd(Q, "Q")
    _check_pd(R, "R")
    eye = np.eye(basis.size)
    W = np.where(np.abs(basis.gram - eye) < 1e-13, eye, basis.gram)
    return CostSpec(Q, R, np.kron(Q, W), np.kron(R, W))


def riccati_residual(P, A, B, Q, R) -> np.ndarray:
    S = B @ np.linalg.solve(R, B.T)
    return P @ A + A.T @ P - P @ S @ P + Q


def solve_riccati(A, B, Q, R, newton_steps: int = 3) -> np.ndarray:
    """Stabilizing solution of ``PA + A'P - P B R^-1 B' P + Q = 0``.

    Ordered real Schur decomposition of the Hamiltonian matrix, followed by
    Newton (Kleinman) correction steps on the residual.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n) or R.shape != (B.shape[1],) * 2:
        raise ValueError("inconsistent matrix shapes")
    S = B @ np.linalg.solve(R, B.T)
    S = 0.5 * (S + S.T)
    Hm = np.block([[A, -S], [-Q, -A.T]])
    eigs = np.linalg.eigvals(Hm)
    scale = max(1.0, np.abs(eigs).max())
    if np.min(np.abs(eigs.real)) < 1e-10 * scale:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis (pair not stabilizable/detectable)")
    T, U, sdim = linalg.schur(Hm, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiError(f"expected {n} stable Hamiltonian eigenvalues, found {sdim}")
    U1, U2 = U[:n, :n], U[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise RiccatiError("stable invariant subspace is not a graph (pair not stabilizable)")
    P = np.linalg.solve(U1.T, U2.T).T
    P = 0.5 * (P + P.T)

    res = riccati_residual(P, A, B, Q, R)
    for _ in range(newton_steps):
        Ac = A - S @ P
        delta = linalg.solve_continuous_lyapunov(Ac.T, -res)
        P_new = P + 0.5 * (delta + delta.T)
        res_new = riccati_residual(P_new, A, B, Q, R)
        if np.linalg.norm(res_new) >= np.linalg.norm(res):
            break
        P, res = P_new, res_new
    if np.max(np.linalg.eigvals(A - S @ P).real) >= 0:
        raise RiccatiError("Riccati solution is not stabilizing")
    return P


def quadratic_form(M: np.ndarray) -> Poly:
    n = M.shape[0]
    t = {}
    for i in range(n):
        for j in range(n):
            if M[i, j] != 0.0:
                e = [0] * n
                e[i] += 1
                e[j] += 1
                e = tuple(e)
                t[e] = t.get(e, 0.0) + M[i, j]
    return Poly(n, t)


def linear_field(M: np.ndarray) -> PolyField:
    """Field ``X -> M X``."""
    return PolyField([Poly.linear(row) for row in np.asarray(M, dtype=float)])


@dataclass(frozen=True, eq=False)
class ValueSeries:
    """``V_0 .. V_K``; ``coefficients[n]`` lists V_n over ``monomials[n]``."""

    P: np.ndarray
    terms: list[Poly]
    monomials: list[list[tuple[int, ...]]] = field(default_factory=list)
    coefficients: list[np.ndarray] = field(default_factory=list)

    @property
    def max_order(self) -> int:
        return len(self.terms) - 1

    def gradients(self, upto: int | None = None) -> list[PolyField]:
        upto = self.max_order if upto is None else upto
        return [PolyField(self.terms[n].grad()) for n in range(upto + 1)]

    def value(self, X, upto: int | None = None):
        upto = self.max_order if upto is None else upto
        return sum(self.terms[n](X) for n in range(upto + 1))


def _closed_loop_operator(Ac: np.ndarray, mons: list[tuple[int, ...]]) -> np.ndarray:
    """Matrix of ``V -> grad(V) . (Ac X)`` on homogeneous polynomials."""
    index = {m: j for j, m in enumerate(mons)}
    N = Ac.shape[0]
    L = np.zeros((len(mons), len(mons)))
    for j, m in enumerate(mons):
        for i in range(N):
            if not m[i]:
                continue
            for l in range(N):
                a = Ac[i, l]
                if a == 0.0:
                    continue
                e = list(m)
                e[i] -= 1
                e[l] += 1
                L[index[tuple(e)], j] += m[i] * a
    return L


def solve_value_terms(system: AugmentedSystem, cost: CostSpec, P: np.ndarray, max_order: int,
                      rank_tol: float = 1e-10) -> ValueSeries:
    """Solve for ``V_1 .. V_max_order`` by monomial matching."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    N = system.nx
    A, B = system.A, system.B
    S = B @ np.linalg.solve(cost.Rt, B.T)
    S = 0.5 * (S + S.T)
    Ac = A - S @ P
    f = system.nonlinear_parts()
    V = [quadratic_form(P)]
    grads = [linear_field(2.0 * P)]
    Sgrads = [grads[0].linear_map(S)]
    mons_all = [monomials(N, 2)]
    coeffs_all = [np.array([V[0].coeff(m) for m in mons_all[0]])]
    for n in range(1, max_order + 1):
        deg = n + 2
        rhs = Poly(N)
        for k in range(n):
            fk = f.get(n + 1 - k)
            if fk is not None and not fk.is_zero():
                rhs = rhs + grads[k].dot(fk)
        for k in range(1, n):
            rhs = rhs - 0.25 * grads[k].dot(Sgrads[n - k])
        mons = monomials(N, deg)
        b = -np.array([rhs.coeff(m) for m in mons])
        stray = [e for e in rhs.terms if sum(e) != deg and abs(rhs.terms[e]) > 1e-12]
        if stray:
            raise MatchingSystemError(n, f"right-hand side has terms of degree != {deg}")
        if not np.any(b):
            a = np.zeros(len(mons))
        else:
            L = _closed_loop_operator(Ac, mons)
            sv = np.linalg.svd(L, compute_uv=False)
            if sv[-1] <= rank_tol * sv[0]:
                raise MatchingSystemError(n, f"smallest/largest singular value {sv[-1] / sv[0]:.3e}")
            a = np.linalg.solve(L, b)
        Vn = Poly(N, {m: c for m, c in zip(mons, a) if c != 0.0})
        V.append(Vn)
        g = PolyField(Vn.grad())
        grads.append(g)
        Sgrads.append(g.linear_map(S))
        mons_all.append(mons)
        coeffs_all.append(a)
    return ValueSeries(P, V, mons_all, coeffs_all)


@dataclass(frozen=True, eq=False)
class ControlLaw:
    """Polynomial feedback ``U = field(X)``."""

    order: int
    field: PolyField
    series: ValueSeries | None = None

    def __call__(self, X) -> np.ndarray:
        return self.field(X)

    @property
    def gain(self) -> np.ndarray:
        """Degree-one part as a matrix: ``U ~ gain @ X`` near the origin."""
        return self.field.jacobian_at_zero()

    def to_text(self) -> str:
        return f"# control law order {self.order}\n" + self.field.to_text()

    @classmethod
    def from_text(cls, text: str) -> "ControlLaw":
        order = None
        for line in text.splitlines():
            if line.startswith("# control law order"):
                order = int(line.split()[-1])
        if order is None:
            raise ValueError("missing '# control law order K' header")
        return cls(order, PolyField.from_text(text))


def synthesize_control(series: ValueSeries, B: np.ndarray, Rt: np.ndarray, order: int) -> ControlLaw:
    """Truncated feedback ``-1/2 R^-1 B' sum_{n<order} grad V_n`` (degree ``order``)."""
    if order < 1:
        raise ValueError("control order must be >= 1")
    if order - 1 > series.max_order:
        raise ValueError(f"order {order} needs V_0..V_{order - 1}; series stops at V_{series.max_order}")
    K = -0.5 * np.linalg.solve(Rt, B.T)
    grads = series.gradients(order - 1)
    total = grads[0]
    for g in grads[1:]:
        total = total + g
    return ControlLaw(order, total.linear_map(K).prune(0.0), series)


def design_controller(system: AugmentedSystem, cost: CostSpec, order: int) -> ControlLaw:
    P = solve_riccati(system.A, system.B, cost.Qt, cost.Rt)
    series = solve_value_terms(system, cost, P, order - 1)
    return synthesize_control(series, system.B, cost.Rt, order)


def hjb_residual(system: AugmentedSystem, cost: CostSpec, series: ValueSeries, upto: int | None = None) -> Poly:
    """Residual of the stationary HJB equation for ``V = V_0 + .. + V_upto``."""
    upto = series.max_order if upto is None else upto
    N = system.nx
    S = system.B @ np.linalg.solve(cost.Rt, system.B.T)
    V = Poly(N)
    for n in range(upto + 1):
        V = V + series.terms[n]
    g = PolyField(V.grad())
    drift = linear_field(system.A) + system.H
    return g.dot(drift) - 0.25 * g.dot(g.linear_map(S)) + quadratic_form(cost.Qt)


def l_function(X, Qt: np.ndarray, P: np.ndarray, H: PolyField) -> np.ndarray | float:
    """``X'QX - H(X)'PX - X'PH(X)``; vectorized over leading axes of ``X``."""
    X = np.asarray(X, dtype=float)
    HX = H(X)
    # two-operand products and row sums keep each row independent of the batch
    PX = np.einsum("ij,...j->...i", P, X)
    QX = np.einsum("ij,...j->...i", Qt, X)
    PtX = np.einsum("ji,...j->...i", P, X)
    out = (X * QX).sum(-1) - (HX * PX).sum(-1) - (HX * PtX).sum(-1)
    return float(out) if X.ndim == 1 else out


def closed_loop_jacobian(system: AugmentedSystem, law: ControlLaw) -> np.ndarray:
    J = system.A + system.H.jacobian_at_zero()
    return J + system.B @ law.field.jacobian_at_zero()


def jacobian_spectrum(system: AugmentedSystem, law: ControlLaw) -> tuple[np.ndarray, bool]:
    eig = np.linalg.eigvals(closed_loop_jacobian(system, law))
    return eig, bool(np.max(eig.real) < 0)


def _abs_moment_1d(coeffs: np.ndarray, basis: Basis, p: int) -> float:
    """``E|x|^p`` for ``x`` a polynomial in a single germ, split at its real roots."""
    from scipy import integrate

    fam = basis.families[0]
    law = fam.law()
    # power-basis coefficients from an exact interpolation at d + 1 nodes
    z = np.cos(np.pi * (np.arange(basis.d + 1) + 0.5) / (basis.d + 1))
    vals = basis.evaluate(z[:, None]) @ coeffs
    poly = np.polynomial.Polynomial.fit(z, vals, basis.d, domain=[-1, 1], window=[-1, 1])
    lo, hi = fam.support
    roots = [r.real for r in poly.roots() if abs(r.imag) < 1e-12 and lo < r.real < hi]
    edges = [lo] + sorted(roots) + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda t: abs(poly(t)) ** p * law.pdf(t), a, b, epsabs=0.0, epsrel=1e-12,
                                limit=200)
        total += val
    return total


def chebyshev_bound(X, basis: Basis, p: int, eps: float) -> np.ndarray:
    """Upper bound ``E|x_i|^p / eps^p`` on ``Pr(|x_i| >= eps)`` per state.

    Even ``p`` uses the exact moment formula. Odd ``p`` is not polynomial: a
    single germ is integrated adaptively between the real roots of ``x_i``,
    several germs use a refined tensor Gauss rule (approximate).
    """
    if p < 1 or eps <= 0:
        raise ValueError("need p >= 1 and eps > 0")
    if p % 2 == 0:
        mom = reconstruct_moments(X, basis, p)
    else:
        X = np.asarray(X, dtype=float)
        modes = X.reshape(-1, basis.size)
        if basis.r == 1:
            mom = np.array([_abs_moment_1d(c, basis, p) for c in modes])
        else:
            fine = basis.with_exactness(max(basis.exact_degree, 2 * 48 - 1))
            mom = np.abs(modes @ fine.psi_nodes.T) ** p @ fine.weights
        mom = mom.reshape(X.shape[:-1] + (-1,))
    return np.asarray(mom) / eps**p
