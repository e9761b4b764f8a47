"""Sparse multivariate polynomials keyed by exponent tuples.

Used for the augmented nonlinear vector field, value-function terms and the
feedback law. Monomials are ordered graded-lexicographically wherever an
ordering is needed.
"""

from __future__ import annotations

import itertools
from typing import Dict, Iterable, Iterator, Tuple

import numpy as np

Exponent = Tuple[int, ...]


def monomials(nvars: int, degree: int) -> list[Exponent]:
    """All exponent tuples of exact total ``degree``, graded-lex ascending."""
    out = [
        tuple(np.bincount(c, minlength=nvars).tolist()) if degree else (0,) * nvars
        for c in itertools.combinations_with_replacement(range(nvars), degree)
    ]
    return sorted(set(out))


def grlex_key(e: Exponent) -> tuple:
    return (sum(e), e)


def monomial_values(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """Values of the monomials ``exps`` (rows) at points ``x`` of shape ``(..., nvars)``.

    Powers are built by repeated multiplication and gathered per variable, so
    each point is evaluated with the same operation sequence whatever the
    batch shape.
    """
    nv = x.shape[-1]
    if exps.shape[0] == 0:
        return np.ones(x.shape[:-1] + (0,))
    deg = int(exps.max()) if exps.size else 0
    pw = np.ones(x.shape + (deg + 1,))
    for e in range(1, deg + 1):
        pw[..., e] = pw[..., e - 1] * x
    mon = pw[..., 0, exps[:, 0]] if nv else np.ones(x.shape[:-1] + (exps.shape[0],))
    for i in range(1, nv):
        mon = mon * pw[..., i, exps[:, i]]
    return mon


def _ordered_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis in a fixed left-to-right order.

    ``ndarray.sum`` may switch between pairwise and sequential accumulation
    depending on the array's shape, so a row's result could change with the
    number of rows evaluated alongside it.
    """
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-1])
    return np.cumsum(a, axis=-1)[..., -1]


class Poly:
    """Polynomial in ``nvars`` variables stored as ``{exponent: coefficient}``."""

    __slots__ = ("nvars", "terms", "_compiled")

    def __init__(self, nvars: int, terms: Dict[Exponent, float] | None = None):
        self.nvars = int(nvars)
        self.terms: Dict[Exponent, float] = {}
        self._compiled = None
        if terms:
            for e, c in terms.items():
                e = tuple(int(v) for v in e)
                if len(e) != self.nvars:
                    raise ValueError(f"exponent {e} has wrong length for {nvars} variables")
                if c != 0.0:
                    self.terms[e] = self.terms.get(e, 0.0) + float(c)

    # construction helpers
    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def const(cls, nvars: int, value: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def var(cls, nvars: int, i: int) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def linear(cls, coeffs: Iterable[float], const: float = 0.0) -> "Poly":
        coeffs = list(coeffs)
        n = len(coeffs)
        p = cls.const(n, const)
        for i, c in enumerate(coeffs):
            if c != 0.0:
                e = [0] * n
                e[i] = 1
                p.terms[tuple(e)] = float(c)
        return p

    def copy(self) -> "Poly":
        return Poly(self.nvars, dict(self.terms))

    # inspection
    def __iter__(self) -> Iterator[tuple[Exponent, float]]:
        return iter(sorted(self.terms.items(), key=lambda t: grlex_key(t[0])))

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        body = " + ".join(f"{c:.6g}*x^{e}" for e, c in self) or "0"
        return f"Poly({self.nvars}: {body})"

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def coeff(self, e: Exponent) -> float:
        return self.terms.get(tuple(e), 0.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def homogeneous(self, degree: int) -> "Poly":
        return Poly(self.nvars, {e: c for e, c in self.terms.items() if sum(e) == degree})

    def truncate(self, max_degree: int) -> "Poly":
        return Poly(self.nvars, {e: c for e, c in self.terms.items() if sum(e) <= max_degree})

    def prune(self, tol: float) -> "Poly":
        return Poly(self.nvars, {e: c for e, c in self.terms.items() if abs(c) > tol})

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(self.nvars, float(other))
        self._check(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, 0.0) + c
        return Poly(self.nvars, {e: c for e, c in t.items() if c != 0.0})

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            s = float(other)
            if s == 0.0:
                return Poly(self.nvars)
            return Poly(self.nvars, {e: s * c for e, c in self.terms.items()})
        return self.mul(other)

    __rmul__ = __mul__

    def mul(self, other: "Poly", max_degree: int | None = None) -> "Poly":
        self._check(other)
        t: Dict[Exponent, float] = {}
        for e1, c1 in self.terms.items():
            d1 = sum(e1)
            for e2, c2 in other.terms.items():
                if max_degree is not None and d1 + sum(e2) > max_degree:
                    continue
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, 0.0) + c1 * c2
        return Poly(self.nvars, {e: c for e, c in t.items() if c != 0.0})

    def pow(self, k: int, max_degree: int | None = None) -> "Poly":
        out = Poly.const(self.nvars, 1.0)
        for _ in range(k):
            out = out.mul(self, max_degree)
        return out

    def diff(self, i: int) -> "Poly":
        t = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = list(e)
                ne[i] -= 1
                t[tuple(ne)] = c * e[i]
        return Poly(self.nvars, t)

    def grad(self) -> list["Poly"]:
        return [self.diff(i) for i in range(self.nvars)]

    def substitute(self, images: list["Poly"], max_degree: int | None = None) -> "Poly":
        """Compose with ``x_i -> images[i]`` (all images share one variable set)."""
        if len(images) != self.nvars:
            raise ValueError("need one image polynomial per variable")
        nv = images[0].nvars
        out = Poly(nv)
        cache: dict[tuple[int, int], Poly] = {}
        for e, c in self.terms.items():
            term = Poly.const(nv, c)
            for i, k in enumerate(e):
                if k:
                    if (i, k) not in cache:
                        cache[(i, k)] = images[i].pow(k, max_degree)
                    term = term.mul(cache[(i, k)], max_degree)
            out = out + term
        return out

    # evaluation
    def _compile(self):
        if self._compiled is None:
            items = list(self)
            if items:
                exps = np.array([e for e, _ in items], dtype=np.int64)
                coef = np.array([c for _, c in items])
            else:
                exps = np.zeros((0, self.nvars), dtype=np.int64)
                coef = np.zeros(0)
            self._compiled = (exps, coef)
        return self._compiled

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at ``x`` of shape ``(nvars,)`` or ``(..., nvars)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nvars:
            raise ValueError(f"expected last axis {self.nvars}, got {x.shape}")
        exps, coef = self._compile()
        if coef.size == 0:
            return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
        out = _ordered_sum(monomial_values(x, exps) * coef)
        return float(out) if x.ndim == 1 else out

    def _check(self, other: "Poly"):
        if other.nvars != self.nvars:
            raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")


class PolyField:
    """Vector of polynomials sharing one variable set."""

    def __init__(self, components: list[Poly]):
        if not components:
            raise ValueError("PolyField needs at least one component")
        nv = components[0].nvars
        if any(p.nvars != nv for p in components):
            raise ValueError("components disagree on the number of variables")
        self.components = list(components)
        self.nvars = nv

    @classmethod
    def zero(cls, n_out: int, nvars: int) -> "PolyField":
        return cls([Poly(nvars) for _ in range(n_out)])

    @property
    def n_out(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> Poly:
        return self.components[i]

    def __len__(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.components)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(p.is_zero(tol) for p in self.components)

    def homogeneous(self, degree: int) -> "PolyField":
        return PolyField([p.homogeneous(degree) for p in self.components])

    def graded_parts(self) -> dict[int, "PolyField"]:
        degs = sorted({sum(e) for p in self.components for e in p.terms})
        return {d: self.homogeneous(d) for d in degs}

    def prune(self, tol: float) -> "PolyField":
        return PolyField([p.prune(tol) for p in self.components])

    def __add__(self, other: "PolyField") -> "PolyField":
        return PolyField([a + b for a, b in zip(self.components, other.components, strict=True)])

    def __mul__(self, s: float) -> "PolyField":
        return PolyField([p * s for p in self.components])

    __rmul__ = __mul__

    def dot(self, other: "PolyField") -> Poly:
        out = Poly(self.nvars)
        for a, b in zip(self.components, other.components, strict=True):
            if a.terms and b.terms:
                out = out + a.mul(b)
        return out

    def linear_map(self, M: np.ndarray) -> "PolyField":
        """Return ``M @ self`` for a dense matrix ``M``."""
        M = np.asarray(M, dtype=float)
        if M.shape[1] != self.n_out:
            raise ValueError("matrix shape does not match field size")
        out = []
        for row in M:
            p = Poly(self.nvars)
            for j, w in enumerate(row):
                if w != 0.0 and self.components[j].terms:
                    p = p + self.components[j] * w
            out.append(p)
        return PolyField(out)

    def jacobian_at_zero(self) -> np.ndarray:
        J = np.zeros((self.n_out, self.nvars))
        for i, p in enumerate(self.components):
            for e, c in p.terms.items():
                if sum(e) == 1:
                    J[i, e.index(1)] += c
        return J

    def _compile(self):
        if getattr(self, "_compiled", None) is None:
            mons = sorted({e for p in self.components for e in p.terms}, key=grlex_key)
            index = {e: j for j, e in enumerate(mons)}
            C = np.zeros((self.n_out, len(mons)))
            for i, p in enumerate(self.components):
                for e, c in p.terms.items():
                    C[i, index[e]] = c
            exps = np.array(mons, dtype=np.int64).reshape(len(mons), self.nvars)
            self._compiled = (exps, C)
        return self._compiled

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nvars:
            raise ValueError(f"expected last axis {self.nvars}, got {x.shape}")
        exps, C = self._compile()
        mon = monomial_values(x, exps)
        return _ordered_sum(mon[..., None, :] * C)

    def to_text(self) -> str:
        """One line per term: ``output_index exponents... coefficient``."""
        lines = [f"# nvars {self.nvars} n_out {self.n_out}"]
        for i, p in enumerate(self.components):
            for e, c in p:
                lines.append(f"{i} {' '.join(map(str, e))} {c:.17e}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PolyField":
        header = None
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                tok = line[1:].split()
                if len(tok) >= 4 and tok[0] == "nvars" and tok[2] == "n_out":
                    header = (int(tok[1]), int(tok[3]))
                continue
            rows.append(line.split())
        if header is None:
            raise ValueError("missing '# nvars N n_out M' header")
        nvars, n_out = header
        comps = [dict() for _ in range(n_out)]
        for tok in rows:
            if len(tok) != nvars + 2:
                raise ValueError(f"malformed term line: {' '.join(tok)}")
            i = int(tok[0])
            e = tuple(int(v) for v in tok[1:-1])
            comps[i][e] = comps[i].get(e, 0.0) + float(tok[-1])
        return cls([Poly(nvars, c) for c in comps])
