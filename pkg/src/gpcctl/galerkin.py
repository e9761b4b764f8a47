"""Intrusive Galerkin projection onto a gPC basis.

A stochastic system ``x' = A(xi) x + h(x, xi) + B(xi) u`` with ``n`` states is
mapped to a deterministic system for the ``n(P+1)`` mode strengths

    X' = AA X + HH(X) + BB U,      AA = sum_k A_k (x) E_k,

where ``E_k[i, j] = <Psi_i Psi_k Psi_j>``. Mode vectors use the state-major
layout ``X = [x_1 modes | x_2 modes | ...]``, each block holding ``P + 1``
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .orthopoly import Basis, QuadratureOrderError
from .poly import Poly, PolyField


def expand_random_matrix(M, basis: Basis) -> np.ndarray:
    """Project a random matrix onto the basis.

    ``M`` is a constant array, a callable ``xi -> array`` or a nested list whose
    entries are numbers or callables ``xi -> float``. Returns the mode matrices
    stacked as an array of shape ``(P+1, rows, cols)``.
    """
    if callable(M):
        fn = M
    else:
        arr = np.asarray(M, dtype=object)
        if not any(callable(v) for v in arr.ravel()):
            Mc = np.asarray(M, dtype=float)
            if not np.all(np.isfinite(Mc)):
                raise ValueError("matrix has non-finite entries")
            out = np.zeros((basis.size,) + Mc.shape)
            out[0] = Mc
            return out

        def fn(xi):
            return np.array([[v(xi) if callable(v) else v for v in row] for row in arr], dtype=float)

    vals = np.array([np.asarray(fn(x), dtype=float) for x in basis.nodes])
    if not np.all(np.isfinite(vals)):
        raise ValueError("random matrix is not finite at every quadrature node")
    coeffs = np.einsum("q,qk,q...->k...", basis.weights, basis.psi_nodes, vals)
    return coeffs / np.diag(basis.gram).reshape((-1,) + (1,) * (vals.ndim - 1))


def build_E(basis: Basis, k: int) -> np.ndarray:
    if not 0 <= k <= basis.P:
        raise IndexError(f"basis index {k} outside [0, {basis.P}]")
    return np.array(basis.triple[:, k, :])


def kron_sum(modes: Sequence[np.ndarray], basis: Basis) -> np.ndarray:
    modes = [np.atleast_2d(np.asarray(M, dtype=float)) for M in modes]
    if len(modes) > basis.size:
        raise ValueError(f"{len(modes)} modes given for a basis of size {basis.size}")
    shape = modes[0].shape
    if any(M.shape != shape for M in modes):
        raise ValueError("mode matrices have inconsistent shapes")
    out = np.zeros((shape[0] * basis.size, shape[1] * basis.size))
    for k, M in enumerate(modes):
        if np.any(M):
            out += np.kron(M, basis.triple[:, k, :])
    return out


def assemble(A_modes: Sequence[np.ndarray], B_modes: Sequence[np.ndarray], basis: Basis):
    """Kronecker assembly ``(sum A_k (x) E_k, sum B_k (x) E_k)``."""
    return kron_sum(A_modes, basis), kron_sum(B_modes, basis)


def mode_variable(n_state: int, i: int, k: int, basis: Basis) -> int:
    """Position of mode ``k`` of state ``i`` in the augmented vector."""
    return i * basis.size + k


def project_polynomial_field(h, basis: Basis, n: int, taylor_order: int = 3) -> PolyField:
    """Galerkin projection of a polynomial nonlinearity.

    ``h`` is either a sequence of :class:`Poly` in ``n + r`` variables (states
    first, then the germ) or a callable ``xi -> sequence of Poly in n
    variables`` giving the state polynomial at a fixed germ value. Terms of
    state degree above ``taylor_order + 1`` are dropped. The result is a field
    over the ``n(P+1)`` mode strengths with ``n(P+1)`` components.
    """
    if taylor_order < 1:
        raise ValueError("taylor_order must be at least 1")
    max_deg = taylor_order + 1
    nx = n * basis.size
    r = basis.r

    if callable(h):
        quad = basis.with_exactness(basis.exact_degree + max_deg * basis.d)
        at_node = h
    else:
        h = list(h)
        if any(p.nvars != n + r for p in h):
            raise ValueError(f"polynomials must have n + r = {n + r} variables")
        h = [
            Poly(n + r, {e: c for e, c in p.terms.items() if sum(e[:n]) <= max_deg}) for p in h
        ]
        germ_deg = max((max((e[n + j] for e in p.terms), default=0) for p in h for j in range(r)), default=0)
        quad = basis.with_exactness(max_deg * basis.d + germ_deg + basis.d)

        def at_node(xi):
            consts = [Poly.const(n, float(v)) for v in xi]
            images = [Poly.var(n, i) for i in range(n)] + consts
            return [p.substitute(images) for p in h]

    if len(at_node(quad.nodes[0])) != n:
        raise ValueError(f"nonlinearity must have {n} components")

    psi = quad.psi_nodes
    comps = [Poly(nx) for _ in range(nx)]
    for q, xi in enumerate(quad.nodes):
        polys = at_node(xi)
        images = []
        for j in range(n):
            coeffs = np.zeros(nx)
            coeffs[j * basis.size : (j + 1) * basis.size] = psi[q]
            images.append(Poly.linear(coeffs))
        for i, p in enumerate(polys):
            if any(not np.isfinite(c) for c in p.terms.values()):
                raise ValueError("nonlinearity is not finite at a quadrature node")
            p = Poly(n, {e: c for e, c in p.terms.items() if sum(e) <= max_deg})
            if not p.terms:
                continue
            sub = p.substitute(images)
            for k in range(basis.size):
                w = quad.weights[q] * psi[q, k]
                if w != 0.0:
                    comps[i * basis.size + k] = comps[i * basis.size + k] + sub * w
    norms = np.diag(basis.gram)
    for i in range(n):
        for k in range(basis.size):
            comps[i * basis.size + k] = (comps[i * basis.size + k] * (1.0 / norms[k])).prune(1e-14)
    return PolyField(comps)


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """Deterministic mode-strength dynamics ``X' = AA X + HH(X) + BB U``."""

    n: int
    m: int
    basis: Basis
    A_modes: np.ndarray
    B_modes: np.ndarray
    A: np.ndarray
    B: np.ndarray
    H: PolyField

    @property
    def nx(self) -> int:
        return self.n * self.basis.size

    @property
    def nu(self) -> int:
        return self.m * self.basis.size

    def rhs(self, X, U=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = X @ self.A.T + self.H(X)
        if U is not None:
            out = out + np.asarray(U, dtype=float) @ self.B.T
        return out

    def nonlinear_parts(self) -> dict[int, PolyField]:
        """Homogeneous parts ``f_2 .. f_{N+1}`` of ``HH`` keyed by degree."""
        return {k: v for k, v in self.H.graded_parts().items() if k >= 2}


def augment(A, B, basis: Basis, h=None, taylor_order: int = 3) -> AugmentedSystem:
    """Build the augmented system from ``A(xi)``, ``B(xi)`` and ``h(x, xi)``.

    Any part of the projected ``h`` that is linear in the modes is folded into
    the state matrix; a constant part means the origin is not an equilibrium
    and is rejected.
    """
    A_modes = expand_random_matrix(A, basis)
    B_modes = expand_random_matrix(B, basis)
    n, m = A_modes.shape[1], B_modes.shape[2]
    if A_modes.shape[2] != n or B_modes.shape[1] != n:
        raise ValueError("A must be n x n and B must be n x m")
    AA, BB = assemble(A_modes, B_modes, basis)
    if h is None:
        H = PolyField.zero(n * basis.size, n * basis.size)
    else:
        H = project_polynomial_field(h, basis, n, taylor_order)
        const = H.homogeneous(0)
        if not const.is_zero(1e-12):
            raise ValueError("nonlinearity does not vanish at the origin; shift coordinates first")
        lin = H.homogeneous(1)
        if not lin.is_zero():
            AA = AA + lin.jacobian_at_zero()
        H = PolyField([p.prune(0.0) for p in H.components])
        H = PolyField([Poly(p.nvars, {e: c for e, c in p.terms.items() if sum(e) >= 2}) for p in H.components])
    return AugmentedSystem(n, m, basis, A_modes, B_modes, AA, BB, H)


def reconstruct_moments(X, basis: Basis, p: int) -> np.ndarray:
    """Raw ``p``-th moment of every physical state from its mode strengths."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    if p * basis.d > basis.exact_degree:
        raise QuadratureOrderError(
            f"moment order {p} needs exactness {p * basis.d} > {basis.exact_degree}; "
            "rebuild with Basis.with_exactness"
        )
    X = np.asarray(X, dtype=float)
    modes = X.reshape(X.shape[:-1] + (-1, basis.size))
    if p == 1:
        return modes[..., 0] * basis.gram[0, 0]
    vals = modes @ basis.psi_nodes.T
    return (vals**p) @ basis.weights


def mean_and_variance(X, basis: Basis) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    modes = X.reshape(X.shape[:-1] + (-1, basis.size))
    norms = np.diag(basis.gram)
    return modes[..., 0], np.sum(modes[..., 1:] ** 2 * norms[1:], axis=-1)


def sample_realization(X, basis: Basis, xi) -> np.ndarray:
    """Evaluate the truncated expansion of every state at germ value(s) ``xi``."""
    X = np.asarray(X, dtype=float)
    modes = X.reshape(X.shape[:-1] + (-1, basis.size))
    psi = basis.evaluate(np.asarray(xi, dtype=float))
    return np.einsum("...ik,...k->...i", modes, psi)


def initial_modes(x0: Sequence[Callable | float], basis: Basis) -> np.ndarray:
    """Mode vector of an initial state whose entries may depend on the germ."""
    blocks = []
    for v in x0:
        if callable(v):
            blocks.append(basis.project(v))
        else:
            b = np.zeros(basis.size)
            b[0] = float(v)
            blocks.append(b)
    return np.concatenate(blocks)


def propagate(system: AugmentedSystem, X0, t_eval, U: Callable | None = None, rtol=1e-10, atol=1e-12):
    """Integrate the augmented system; returns mode trajectories at ``t_eval``."""
    t_eval = np.asarray(t_eval, dtype=float)

    def f(t, X):
        return system.rhs(X, None if U is None else U(t, X))

    sol = solve_ivp(f, (0.0, float(t_eval[-1])), np.asarray(X0, dtype=float), t_eval=t_eval,
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return sol.y.T
