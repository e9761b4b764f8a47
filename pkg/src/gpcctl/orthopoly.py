"""Wiener-Askey orthonormal polynomial bases with Gauss quadrature.

Each germ dimension carries a distribution from the Askey table (Gaussian,
uniform, gamma, beta). The univariate families are generated from their monic
three-term recurrences; Gauss nodes and weights come from the eigenvalues of
the Jacobi matrix (Golub-Welsch). Multivariate polynomials are tensor products
of the univariate ones, indexed by total-degree-truncated multi-indices.

All polynomials are orthonormal under the (probability) product measure, so
the Gram matrix ``W`` is the identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

KINDS = ("gaussian", "uniform", "gamma", "beta")


class QuadratureOrderError(ValueError):
    """Raised when an integrand exceeds the exactness degree of a stored rule."""


@dataclass(frozen=True)
class DistributionFamily:
    """Germ distribution paired with its Askey polynomial family.

    ``gaussian``: standard normal, probabilists' Hermite.
    ``uniform``: uniform on ``[a, b]``, Legendre.
    ``gamma``: density ``t**alpha * exp(-t) / Gamma(alpha + 1)`` on ``[0, inf)``,
    generalized Laguerre.
    ``beta``: density proportional to ``(1 - t)**alpha * (1 + t)**beta`` with
    ``t`` the affine image of ``[a, b]`` onto ``[-1, 1]``, Jacobi.
    """

    kind: str = "gaussian"
    a: float = -1.0
    b: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("uniform", "beta") and not self.a < self.b:
            raise ValueError(f"support requires a < b, got [{self.a}, {self.b}]")
        if self.kind in ("gamma", "beta") and not self.alpha > -1:
            raise ValueError(f"shape exponent alpha must exceed -1, got {self.alpha}")
        if self.kind == "beta" and not self.beta > -1:
            raise ValueError(f"shape exponent beta must exceed -1, got {self.beta}")

    @property
    def polynomial(self) -> str:
        return {"gaussian": "hermite", "uniform": "legendre", "gamma": "laguerre", "beta": "jacobi"}[
            self.kind
        ]

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "gaussian":
            return (-math.inf, math.inf)
        if self.kind == "gamma":
            return (0.0, math.inf)
        return (self.a, self.b)

    def recurrence(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Monic recurrence ``pi_{k+1} = (x - a_k) pi_k - b_k pi_{k-1}``, k < n.

        ``b_0`` is the total mass (1 for a probability measure).
        """
        k = np.arange(n, dtype=float)
        if self.kind == "gaussian":
            ak = np.zeros(n)
            bk = k.copy()
        elif self.kind == "gamma":
            s = self.alpha
            ak = 2 * k + s + 1
            bk = k * (k + s)
        else:
            if self.kind == "uniform":
                ak = np.zeros(n)
                bk = np.where(k > 0, k**2 / np.maximum(4 * k**2 - 1, 1), 0.0)
            else:
                ak, bk = _jacobi_recurrence(n, self.alpha, self.beta)
            mid, half = 0.5 * (self.a + self.b), 0.5 * (self.b - self.a)
            ak = mid + half * ak
            bk = half**2 * bk
        bk = np.array(bk, dtype=float)
        if n:
            bk[0] = 1.0
        return np.asarray(ak, dtype=float), bk

    def law(self):
        """Frozen ``scipy.stats`` distribution of the germ."""
        from scipy import stats

        if self.kind == "gaussian":
            return stats.norm()
        if self.kind == "uniform":
            return stats.uniform(self.a, self.b - self.a)
        if self.kind == "gamma":
            return stats.gamma(self.alpha + 1.0)
        return stats.beta(self.beta + 1.0, self.alpha + 1.0, loc=self.a, scale=self.b - self.a)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        if self.kind == "gamma":
            return rng.gamma(self.alpha + 1.0, 1.0, size)
        u = rng.beta(self.beta + 1.0, self.alpha + 1.0, size)
        return self.a + (self.b - self.a) * u


def _jacobi_recurrence(n: int, al: float, be: float) -> tuple[np.ndarray, np.ndarray]:
    ak = np.zeros(n)
    bk = np.zeros(n)
    for k in range(n):
        s = 2 * k + al + be
        if k == 0:
            ak[k] = (be - al) / (al + be + 2)
        else:
            ak[k] = (be**2 - al**2) / (s * (s + 2))
        if k == 1:
            bk[k] = 4 * (1 + al) * (1 + be) / ((2 + al + be) ** 2 * (3 + al + be))
        elif k > 1:
            bk[k] = 4 * k * (k + al) * (k + be) * (k + al + be) / (s**2 * (s + 1) * (s - 1))
    return ak, bk


def gauss_rule(family: DistributionFamily, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes/weights for ``family``; exact for degree ``2*npts - 1``."""
    ak, bk = family.recurrence(npts)
    if npts == 1:
        return ak[:1].copy(), np.ones(1)
    nodes = eigh_tridiagonal(ak, np.sqrt(bk[1:]), eigvals_only=True)
    # Christoffel weights: 1 / sum_k p_k(x)^2 over orthonormal p_0..p_{n-1}
    vals = orthonormal_values(family, nodes, npts - 1)
    weights = 1.0 / np.sum(vals**2, axis=-1)
    return nodes, weights / weights.sum()


def orthonormal_values(family: DistributionFamily, x, degree: int) -> np.ndarray:
    """Values of orthonormal p_0..p_degree at ``x``; shape ``x.shape + (degree+1,)``."""
    x = np.asarray(x, dtype=float)
    ak, bk = family.recurrence(degree + 1)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = (x - ak[0]) / math.sqrt(bk[1])
    for k in range(1, degree):
        out[..., k + 1] = ((x - ak[k]) * out[..., k] - math.sqrt(bk[k]) * out[..., k - 1]) / math.sqrt(
            bk[k + 1]
        )
    return out


def total_degree_indices(r: int, d: int) -> list[tuple[int, ...]]:
    """Multi-indices with |alpha| <= d, sorted by (|alpha|, lexicographic)."""
    idx = [a for a in itertools.product(range(d + 1), repeat=r) if sum(a) <= d]
    return sorted(idx, key=lambda a: (sum(a), a))


@dataclass(frozen=True, eq=False)
class Basis:
    """Truncated multivariate orthonormal basis with a tensor Gauss rule.

    The default rule uses ``ceil((3d + 2) / 2)`` nodes per dimension, which is
    exact for per-dimension degree ``3d + 1``: enough for every triple product
    of basis polynomials.
    """

    families: tuple[DistributionFamily, ...]
    d: int
    points_per_dim: int = 0
    indices: tuple[tuple[int, ...], ...] = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.families) < 1:
            raise ValueError("germ dimension r must be at least 1")
        if self.d < 0:
            raise ValueError("truncation order d must be non-negative")
        npts = self.points_per_dim or math.ceil((3 * self.d + 2) / 2)
        object.__setattr__(self, "points_per_dim", max(npts, 1))
        object.__setattr__(self, "indices", tuple(total_degree_indices(self.r, self.d)))
        rules = [gauss_rule(f, self.points_per_dim) for f in self.families]
        grids = np.meshgrid(*[n for n, _ in rules], indexing="ij")
        wgrids = np.meshgrid(*[w for _, w in rules], indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    # sizes
    @property
    def r(self) -> int:
        return len(self.families)

    @property
    def P(self) -> int:
        return len(self.indices) - 1

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def exact_degree(self) -> int:
        """Per-dimension polynomial degree integrated exactly by the stored rule."""
        return 2 * self.points_per_dim - 1

    def with_exactness(self, degree: int) -> "Basis":
        """Same basis with a rule exact for per-dimension ``degree``."""
        npts = max(self.points_per_dim, math.ceil((degree + 1) / 2))
        return Basis(self.families, self.d, npts)

    # norms of the conventional (monic) polynomials
    @cached_property
    def monic_norms(self) -> np.ndarray:
        """``<pi_alpha^2>`` for the monic tensor polynomials; divide by sqrt to go monic -> orthonormal."""
        per_dim = []
        for f in self.families:
            _, bk = f.recurrence(self.d + 1)
            per_dim.append(np.cumprod(bk))
        return np.array([np.prod([per_dim[i][a] for i, a in enumerate(al)]) for al in self.indices])

    # evaluation
    def evaluate(self, xi) -> np.ndarray:
        """All basis values at ``xi`` (shape ``(..., r)``) -> ``(..., P+1)``."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.r:
            raise ValueError(f"germ dimension mismatch: expected {self.r}, got {xi.shape[-1]}")
        uni = [orthonormal_values(f, xi[..., i], self.d) for i, f in enumerate(self.families)]
        cols = []
        for al in self.indices:
            v = np.ones(xi.shape[:-1])
            for i, a in enumerate(al):
                if a:
                    v = v * uni[i][..., a]
            cols.append(v)
        return np.stack(cols, axis=-1)

    @cached_property
    def psi_nodes(self) -> np.ndarray:
        out = self.evaluate(self.nodes)
        out.flags.writeable = False
        return out

    def eval(self, k: int, xi) -> float | np.ndarray:
        self._check_index(k)
        return self.evaluate(np.atleast_1d(np.asarray(xi, dtype=float)))[..., k][()]

    # integrals
    def inner_product(self, ks: Sequence[int]) -> float:
        ks = list(ks)
        if not ks:
            raise ValueError("inner_product needs at least one index")
        for k in ks:
            self._check_index(k)
        deg = np.sum([self.indices[k] for k in ks], axis=0)
        if np.max(deg) > self.exact_degree:
            raise QuadratureOrderError(
                f"integrand degree {int(np.max(deg))} exceeds rule exactness {self.exact_degree}; "
                "rebuild with Basis.with_exactness"
            )
        # sorted so every permutation of ks multiplies in the same order
        vals = np.prod(self.psi_nodes[:, sorted(ks)], axis=1)
        return float(np.dot(self.weights, vals))

    @cached_property
    def gram(self) -> np.ndarray:
        """``W_ij = <Psi_i Psi_j>`` (identity up to rounding)."""
        Y = self.psi_nodes
        G = (Y * self.weights[:, None]).T @ Y
        return 0.5 * (G + G.T)

    @cached_property
    def triple(self) -> np.ndarray:
        """``e[i, k, j] = <Psi_i Psi_k Psi_j>``."""
        Y = self.psi_nodes
        t = np.einsum("q,qi,qk,qj->ikj", self.weights, Y, Y, Y)
        # exact zeros from orthogonality come out as rounding noise
        t[np.abs(t) < 1e-13 * max(1.0, np.abs(t).max())] = 0.0
        # read every permutation from the sorted triple so symmetry is exact
        n = self.size
        idx = np.sort(np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")), axis=0)
        t = t[idx[0], idx[1], idx[2]]
        t.flags.writeable = False
        return t

    def project(self, g: Callable[[np.ndarray], float]) -> np.ndarray:
        """Mode strengths ``g_k = <g Psi_k> / <Psi_k^2>`` by quadrature."""
        vals = np.array([g(x) for x in self.nodes], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("function is not finite at every quadrature node")
        return (self.weights * vals) @ self.psi_nodes / np.diag(self.gram)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.stack([f.sample(rng, n) for f in self.families], axis=-1)

    def _check_index(self, k: int):
        if not 0 <= k <= self.P:
            raise IndexError(f"basis index {k} outside [0, {self.P}]")


def build_basis(families: DistributionFamily | Sequence[DistributionFamily], r: int, d: int) -> Basis:
    """Build the total-degree ``d`` basis in ``r`` germ variables.

    A single family is replicated over all ``r`` dimensions.
    """
    if r < 1:
        raise ValueError("germ dimension r must be at least 1")
    if d < 0:
        raise ValueError("truncation order d must be non-negative")
    if isinstance(families, DistributionFamily):
        families = (families,) * r
    families = tuple(families)
    if len(families) != r:
        raise ValueError(f"got {len(families)} families for r={r}")
    return Basis(families, d)


def eval_basis(basis: Basis, k: int, xi) -> float:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != basis.r:
        raise ValueError(f"germ dimension mismatch: expected {basis.r}, got {xi.size}")
    return float(basis.eval(k, xi))


def inner_product(basis: Basis, ks: Sequence[int]) -> float:
    return basis.inner_product(ks)


def project_function(basis: Basis, g: Callable[[np.ndarray], float]) -> np.ndarray:
    return basis.project(g)
