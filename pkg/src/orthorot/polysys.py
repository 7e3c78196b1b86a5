"""Sparse multivariate polynomials and the orthomax stationarity system.

Variables of the rotation system are the entries of ``T`` in row-major order
``t11, t12, ..., t1k, t21, ..., tkk``. The system holds the ``k(k+1)/2``
orthogonality equations ``(T^T T - I)_jl = 0`` (j <= l) followed by the
``k(k-1)/2`` symmetry equations ``((T^T G)_jl - (T^T G)_lj) / 4 = 0`` (j < l),
where ``G`` is the gradient of the criterion.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

PRUNE_REL = 1e-14


class MPoly:
    """Polynomial as a map from exponent tuples to nonzero coefficients."""

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars, terms=None):
        self.nvars = int(nvars)
        self._terms = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else terms
            for exps, c in items:
                exps = tuple(int(e) for e in exps)
                if len(exps) != self.nvars:
                    raise ValueError(f"exponent tuple {exps} has wrong length")
                if c != 0:
                    self._terms[exps] = self._terms.get(exps, 0) + c
            self._terms = {e: c for e, c in self._terms.items() if c != 0}

    @classmethod
    def constant(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars, i, coef=1.0):
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): coef})

    @property
    def terms(self):
        """Terms in canonical (graded, then lexicographically descending) order."""
        return sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), [-e for e in kv[0]]))

    def __len__(self):
        return len(self._terms)

    @property
    def total_degree(self):
        return max((sum(e) for e in self._terms), default=0)

    def _same(self, other):
        if not isinstance(other, MPoly):
            other = MPoly.constant(self.nvars, other)
        if other.nvars != self.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
        return other

    def __add__(self, other):
        other = self._same(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0) + c
        return MPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MPoly(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._same(other))

    def __rsub__(self, other):
        return self._same(other) - self

    def __mul__(self, other):
        if not isinstance(other, MPoly):
            return MPoly(self.nvars, {e: c * other for e, c in self._terms.items()})
        other = self._same(other)
        out = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return MPoly(self.nvars, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, MPoly) and self.nvars == other.nvars and self._terms == other._terms

    def __call__(self, point):
        return poly_eval(self, point)

    def pruned(self, rel=PRUNE_REL):
        if not self._terms:
            return self
        cmax = max(abs(c) for c in self._terms.values())
        return MPoly(self.nvars, {e: c for e, c in self._terms.items() if abs(c) > rel * cmax})

    def __repr__(self):
        return f"MPoly(nvars={self.nvars}, nterms={len(self)})"


def poly_add(a, b):
    return a + b


def poly_mul(a, b):
    return a * b


def poly_eval(poly, point):
    point = np.asarray(point)
    if point.shape[-1] != poly.nvars:
        raise ValueError(f"point has {point.shape[-1]} coordinates, poly has {poly.nvars} vars")
    total = 0
    for exps, c in poly._terms.items():
        v = c
        for x, e in zip(point, exps):
            if e:
                v = v * x**e
        total = total + v
    return total


def _var_name(idx, k):
    j, l = divmod(idx, k)
    return f"t[{j + 1}][{l + 1}]"


def format_poly(poly, k):
    """One-line text form, terms as ``coef*t[j][l]^e`` with 1-based indices."""
    parts = []
    for exps, c in poly.terms:
        s = repr(float(c)) if not isinstance(c, complex) else repr(c)
        for idx, e in enumerate(exps):
            if e == 1:
                s += f"*{_var_name(idx, k)}"
            elif e:
                s += f"*{_var_name(idx, k)}^{e}"
        parts.append(s)
    return " + ".join(parts) if parts else "0.0"


@dataclass(frozen=True)
class PolySystem:
    nvars: int
    polys: tuple
    provenance: tuple  # ("orthogonality" | "symmetry", j, l), 0-based
    k: int
    # (A, omega/p) when built from a loading matrix; lets kernels evaluate
    # the system through L = A T instead of expanded monomials.
    source: object = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.polys) != self.nvars:
            raise ValueError(f"system is not square: {len(self.polys)} polys, {self.nvars} vars")

    @property
    def degrees(self):
        return tuple(p.total_degree for p in self.polys)

    @property
    def start_degrees(self):
        """Degrees used by the start system: nominal 2 / 4 unless a poly is higher."""
        nominal = {"orthogonality": 2, "symmetry": 4}
        return tuple(
            max(d, nominal.get(tag[0], 0)) for d, tag in zip(self.degrees, self.provenance)
        )

    @property
    def bezout_number(self):
        return int(np.prod(self.start_degrees, dtype=np.int64))

    def evaluate(self, point):
        return np.array([poly_eval(p, point) for p in self.polys])

    def dump(self):
        return "\n".join(format_poly(p, self.k) for p in self.polys) + "\n"


def build_stationarity_system(a, spec):
    a = np.asarray(a, dtype=float)
    p, k = a.shape
    if (p, k) != (spec.p, spec.k):
        raise ValueError(f"A is {a.shape}, spec expects {spec.p}x{spec.k}")
    n = k * k
    kappa = spec.kappa

    def t(u, v):
        return MPoly.variable(n, u * k + v)

    zero = MPoly(n)
    lam = [[sum((t(l, v) * float(a[i, l]) for l in range(k) if a[i, l] != 0), zero) for v in range(k)] for i in range(p)]
    colsq = [sum((lam[i][v] * lam[i][v] for i in range(p)), zero) for v in range(k)]
    # h[i][v] = L_iv (L_iv^2 - kappa ||L_v||^2); gradient/4 is sum_i a_iu h[i][v]
    h = [[lam[i][v] * (lam[i][v] * lam[i][v] - colsq[v] * kappa) for v in range(k)] for i in range(p)]
    grad = [[sum((h[i][v] * float(a[i, u]) for i in range(p) if a[i, u] != 0), zero) for v in range(k)] for u in range(k)]

    def tg(j, l):
        return sum((t(u, j) * grad[u][l] for u in range(k)), zero)

    polys, prov = [], []
    for j in range(k):
        for l in range(j, k):
            g = sum((t(u, j) * t(u, l) for u in range(k)), zero)
            if j == l:
                g = g - 1.0
            polys.append(g)
            prov.append(("orthogonality", j, l))
    for j, l in combinations(range(k), 2):
        polys.append((tg(j, l) - tg(l, j)).pruned())
        prov.append(("symmetry", j, l))
    src = (np.array(a, copy=True), float(kappa))
    return PolySystem(n, tuple(polys), tuple(prov), k, src)
