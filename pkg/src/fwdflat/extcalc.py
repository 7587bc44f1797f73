"""Exterior differential calculus and codistribution algebra.

Forms, vector fields, Lie derivatives, annihilators, intersections,
integrability, invariance, invariant extensions and Cauchy characteristics,
all over the exact expression field of :mod:`fwdflat.symcore`.

Codistributions and distributions are stored with their coefficient matrix
in reduced row echelon form, so equality of spans is equality of canonical
matrices and membership is a pivot reduction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import sympy as sp

from . import symcore
from .errors import ExprSyntaxError
from .symcore import Expr, Symbol, as_sympy, is_zero, normalize


@dataclass(frozen=True)
class Chart:
    """Ordered local coordinates of the manifold forms and fields live on."""

    symbols: tuple[Symbol, ...]

    def __post_init__(self):
        names = [s.name for s in self.symbols]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in chart: {names}")

    @property
    def dim(self) -> int:
        return len(self.symbols)

    @property
    def syms(self) -> tuple[sp.Symbol, ...]:
        return tuple(s.s for s in self.symbols)

    def index(self, s) -> int:
        return self.syms.index(as_sympy(s))


def _check_same_chart(a, b) -> None:
    if a.chart != b.chart:
        raise ValueError("objects live on different charts")


@dataclass(frozen=True)
class OneForm:
    chart: Chart
    coeffs: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.coeffs) != self.chart.dim:
            raise ValueError("coefficient count does not match chart dimension")
        object.__setattr__(self, "coeffs", tuple(sp.sympify(c) for c in self.coeffs))

    def is_zero_form(self) -> bool:
        return all(is_zero(c) for c in self.coeffs)

    def normalized(self) -> "OneForm":
        return OneForm(self.chart, tuple(normalize(c) for c in self.coeffs))


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    comps: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.comps) != self.chart.dim:
            raise ValueError("component count does not match chart dimension")
        object.__setattr__(self, "comps", tuple(sp.sympify(c) for c in self.comps))

    def is_zero_field(self) -> bool:
        return all(is_zero(c) for c in self.comps)


@dataclass(frozen=True)
class KForm:
    """Sparse k-form: strictly increasing index tuples mapped to coefficients."""

    chart: Chart
    degree: int
    terms: dict

    def __post_init__(self):
        clean = {}
        for idx, c in self.terms.items():
            idx = tuple(idx)
            if len(idx) != self.degree or list(idx) != sorted(set(idx)):
                raise ValueError(f"bad index tuple {idx} for degree {self.degree}")
            c = normalize(c)
            if c != 0:
                clean[idx] = c
        object.__setattr__(self, "terms", clean)

    def is_zero_form(self) -> bool:
        return all(is_zero(c) for c in self.terms.values())


def oneform_to_kform(w: OneForm) -> KForm:
    return KForm(w.chart, 1, {(i,): c for i, c in enumerate(w.coeffs)})


def basis_oneform(chart: Chart, i: int) -> OneForm:
    coeffs = [sp.Integer(0)] * chart.dim
    coeffs[i] = sp.Integer(1)
    return OneForm(chart, tuple(coeffs))


def basis_vectorfield(chart: Chart, i: int) -> VectorField:
    comps = [sp.Integer(0)] * chart.dim
    comps[i] = sp.Integer(1)
    return VectorField(chart, tuple(comps))


# --------------------------------------------------------------------------
# basic operations

def exterior_derivative(obj, chart: Chart | None = None):
    """d of a scalar (-> OneForm) or of a OneForm (-> 2-form)."""
    if isinstance(obj, OneForm):
        ch = obj.chart
        terms = {}
        for i, j in itertools.combinations(range(ch.dim), 2):
            c = sp.diff(obj.coeffs[j], ch.syms[i]) - sp.diff(obj.coeffs[i], ch.syms[j])
            terms[(i, j)] = c
        return KForm(ch, 2, terms)
    if chart is None:
        raise ValueError("a chart is required to differentiate a scalar")
    e = sp.sympify(obj)
    return OneForm(chart, tuple(normalize(sp.diff(e, s)) for s in chart.syms))


def wedge(a, b) -> KForm:
    """Antisymmetric product; the result is the zero form above top degree."""
    if isinstance(a, OneForm):
        a = oneform_to_kform(a)
    if isinstance(b, OneForm):
        b = oneform_to_kform(b)
    _check_same_chart(a, b)
    deg = a.degree + b.degree
    terms: dict = {}
    if deg > a.chart.dim:
        return KForm(a.chart, deg, {})
    for ia, ca in a.terms.items():
        for ib, cb in b.terms.items():
            if set(ia) & set(ib):
                continue
            merged = ia + ib
            order = sorted(range(len(merged)), key=lambda k: merged[k])
            # parity of the permutation sorting the concatenated indices
            sign, seen = 1, list(order)
            for start in range(len(seen)):
                while seen[start] != start:
                    tgt = seen[start]
                    seen[start], seen[tgt] = seen[tgt], seen[start]
                    sign = -sign
            key = tuple(sorted(merged))
            terms[key] = terms.get(key, 0) + sign * ca * cb
    return KForm(a.chart, deg, terms)


def wedge_all(forms: Sequence) -> KForm:
    """Fold the wedge product over a nonempty sequence of forms."""
    forms = list(forms)
    out = forms[0] if isinstance(forms[0], KForm) else oneform_to_kform(forms[0])
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def contract(v: VectorField, alpha):
    """Interior product; for 1-forms it returns a scalar."""
    _check_same_chart(v, alpha)
    if isinstance(alpha, OneForm):
        return normalize(sum(vi * ci for vi, ci in zip(v.comps, alpha.coeffs)))
    terms: dict = {}
    for idx, c in alpha.terms.items():
        for pos, i in enumerate(idx):
            rest = idx[:pos] + idx[pos + 1:]
            sign = (-1) ** pos
            terms[rest] = terms.get(rest, 0) + sign * v.comps[i] * c
    out = KForm(alpha.chart, alpha.degree - 1, terms)
    if out.degree == 1:
        coeffs = [sp.Integer(0)] * alpha.chart.dim
        for (i,), c in out.terms.items():
            coeffs[i] = c
        return OneForm(alpha.chart, tuple(coeffs))
    return out


def lie_derivative_scalar(v: VectorField, f) -> Expr:
    return normalize(sum(vi * sp.diff(sp.sympify(f), s)
                         for vi, s in zip(v.comps, v.chart.syms)))


#: When enabled, every Lie derivative of a 1-form is cross-checked against
#: Cartan's formula L_v w = v _| dw + d(v _| w).
CARTAN_CROSS_CHECK = False


def lie_derivative_form(v: VectorField, w: OneForm) -> OneForm:
    """L_v w by the coefficient formula (v^k d_k w_i) dx^i + w_i dv^i."""
    _check_same_chart(v, w)
    ch = v.chart
    coeffs = []
    for i in range(ch.dim):
        c = sum(v.comps[k] * sp.diff(w.coeffs[i], ch.syms[k]) for k in range(ch.dim))
        c += sum(w.coeffs[j] * sp.diff(v.comps[j], ch.syms[i]) for j in range(ch.dim))
        coeffs.append(normalize(c))
    out = OneForm(ch, tuple(coeffs))
    if CARTAN_CROSS_CHECK:
        cartan = add_oneforms(
            contract(v, exterior_derivative(w)),
            exterior_derivative(contract(v, w), ch),
        )
        delta = sub_oneforms(out, cartan)
        if not delta.is_zero_form():
            raise AssertionError("Lie derivative disagrees with Cartan's formula")
    return out


def add_oneforms(a: OneForm, b: OneForm) -> OneForm:
    _check_same_chart(a, b)
    return OneForm(a.chart, tuple(x + y for x, y in zip(a.coeffs, b.coeffs)))


def sub_oneforms(a: OneForm, b: OneForm) -> OneForm:
    _check_same_chart(a, b)
    return OneForm(a.chart, tuple(x - y for x, y in zip(a.coeffs, b.coeffs)))


def scale_oneform(c, w: OneForm) -> OneForm:
    return OneForm(w.chart, tuple(sp.sympify(c) * x for x in w.coeffs))


def lie_bracket(v: VectorField, w: VectorField) -> VectorField:
    _check_same_chart(v, w)
    ch = v.chart
    comps = []
    for i in range(ch.dim):
        c = sum(v.comps[k] * sp.diff(w.comps[i], ch.syms[k])
                - w.comps[k] * sp.diff(v.comps[i], ch.syms[k])
                for k in range(ch.dim))
        comps.append(normalize(c))
    return VectorField(ch, tuple(comps))


# --------------------------------------------------------------------------
# codistributions and distributions (canonical rref storage)

def _canonical_rows(chart: Chart, rows: Iterable[Sequence]) -> list[tuple[Expr, ...]]:
    rows = [tuple(sp.sympify(c) for c in r) for r in rows]
    if not rows:
        return []
    M = sp.Matrix(rows)
    R, pivots = symcore.rref(M)
    return [tuple(R.row(i)) for i in range(len(pivots))]


@dataclass(frozen=True)
class Codistribution:
    chart: Chart
    basis: tuple[OneForm, ...]

    @classmethod
    def span(cls, chart: Chart, forms: Iterable[OneForm]) -> "Codistribution":
        forms = list(forms)
        for f in forms:
            if f.chart != chart:
                raise ValueError("form chart mismatch")
        rows = _canonical_rows(chart, [f.coeffs for f in forms])
        return cls(chart, tuple(OneForm(chart, r) for r in rows))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix(self) -> sp.Matrix:
        if not self.basis:
            return sp.zeros(0, self.chart.dim)
        return sp.Matrix([list(f.coeffs) for f in self.basis])

    def pivots(self) -> tuple[int, ...]:
        piv = []
        for f in self.basis:
            piv.append(next(i for i, c in enumerate(f.coeffs) if c == 1))
        return tuple(piv)

    def contains(self, w: OneForm) -> bool:
        return self.reduce(w).is_zero_form()

    def reduce(self, w: OneForm) -> OneForm:
        """Residual of w after elimination against the canonical basis."""
        _check_same_chart(self, w)
        res = list(w.coeffs)
        for f, pc in zip(self.basis, self.pivots()):
            factor = res[pc]
            if factor == 0:
                continue
            for j in range(self.chart.dim):
                res[j] = normalize(res[j] - factor * f.coeffs[j])
        return OneForm(self.chart, tuple(res))

    def equals(self, other: "Codistribution") -> bool:
        if self.chart != other.chart or self.dim != other.dim:
            return False
        return all(
            is_zero(a - b)
            for fa, fb in zip(self.basis, other.basis)
            for a, b in zip(fa.coeffs, fb.coeffs)
        )


@dataclass(frozen=True)
class Distribution:
    chart: Chart
    basis: tuple[VectorField, ...]

    @classmethod
    def span(cls, chart: Chart, fields: Iterable[VectorField]) -> "Distribution":
        fields = list(fields)
        for f in fields:
            if f.chart != chart:
                raise ValueError("field chart mismatch")
        rows = _canonical_rows(chart, [f.comps for f in fields])
        return cls(chart, tuple(VectorField(chart, r) for r in rows))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix(self) -> sp.Matrix:
        if not self.basis:
            return sp.zeros(0, self.chart.dim)
        return sp.Matrix([list(f.comps) for f in self.basis])

    def contains(self, v: VectorField) -> bool:
        _check_same_chart(self, v)
        res = list(v.comps)
        for f in self.basis:
            pc = next(i for i, c in enumerate(f.comps) if c == 1)
            factor = res[pc]
            if factor == 0:
                continue
            for j in range(self.chart.dim):
                res[j] = normalize(res[j] - factor * f.comps[j])
        return all(is_zero(c) for c in res)

    def equals(self, other: "Distribution") -> bool:
        if self.chart != other.chart or self.dim != other.dim:
            return False
        return all(
            is_zero(a - b)
            for fa, fb in zip(self.basis, other.basis)
            for a, b in zip(fa.comps, fb.comps)
        )


def annihilator_of_codistribution(P: Codistribution) -> Distribution:
    kernel = symcore.nullspace(P.matrix())
    fields = [VectorField(P.chart, tuple(v)) for v in kernel]
    return Distribution.span(P.chart, fields)


def annihilator_of_distribution(D: Distribution) -> Codistribution:
    kernel = symcore.nullspace(D.matrix())
    forms = [OneForm(D.chart, tuple(v)) for v in kernel]
    return Codistribution.span(D.chart, forms)


def intersect(P: Codistribution, Q: Codistribution) -> Codistribution:
    """P and Q as row spaces, via annihilator(P_perp + Q_perp)."""
    _check_same_chart(P, Q)
    dp = annihilator_of_codistribution(P)
    dq = annihilator_of_codistribution(Q)
    joint = Distribution.span(P.chart, dp.basis + dq.basis)
    return annihilator_of_distribution(joint)


def is_integrable(P: Codistribution) -> bool:
    """Frobenius wedge criterion dw^i ^ w^1 ^ ... ^ w^p = 0 for every i."""
    if P.dim == 0:
        return True
    top = wedge_all(list(P.basis))
    for w in P.basis:
        if not wedge(exterior_derivative(w), top).is_zero_form():
            return False
    return True


def is_invariant(P: Codistribution, D: Distribution) -> bool:
    return all(
        P.contains(lie_derivative_form(v, w))
        for v in D.basis
        for w in P.basis
    )


def invariant_extension(P: Codistribution, D: Distribution) -> Codistribution:
    """Smallest codistribution containing P that is invariant w.r.t. D.

    Breadth-first: each round adjoins all first-order Lie derivatives of the
    current canonical basis; a fixed point is reached in at most
    chart.dim - dim(P) rounds.
    """
    _check_same_chart(P, D)
    current = P
    for _ in range(P.chart.dim - P.dim + 1):
        derived = [lie_derivative_form(v, w) for v in D.basis for w in current.basis]
        extended = Codistribution.span(P.chart, list(current.basis) + derived)
        if extended.dim == current.dim:
            return current
        current = extended
    raise AssertionError("invariant extension did not reach a fixed point")


def is_cauchy_characteristic(v: VectorField, P: Codistribution) -> bool:
    """v _| P = 0 and v _| dP contained in P."""
    _check_same_chart(v, P)
    for w in P.basis:
        if not is_zero(contract(v, w)):
            return False
    for w in P.basis:
        if not P.contains(contract(v, exterior_derivative(w))):
            return False
    return True


def cauchy_distribution(P: Codistribution) -> Distribution:
    """All v with v _| P = 0 and v _| dP in P, as one stacked linear system.

    Involutivity of the result is asserted via Lie bracket membership.
    """
    ch = P.chart
    rows: list[list[Expr]] = []
    for w in P.basis:
        rows.append(list(w.coeffs))
    perp = annihilator_of_codistribution(P)
    for w in P.basis:
        dw = exterior_derivative(w)
        # antisymmetric coefficient matrix of the 2-form
        A = sp.zeros(ch.dim, ch.dim)
        for (i, j), c in dw.terms.items():
            A[i, j] = c
            A[j, i] = -c
        for q in perp.basis:
            # membership of v _| dw in P <=> q _| (v _| dw) = 0 for q in P_perp
            rows.append([
                normalize(sum(A[i, j] * q.comps[j] for j in range(ch.dim)))
                for i in range(ch.dim)
            ])
    M = sp.Matrix(rows) if rows else sp.zeros(0, ch.dim)
    kernel = symcore.nullspace(M)
    D = Distribution.span(ch, [VectorField(ch, tuple(v)) for v in kernel])
    for a, b in itertools.combinations(D.basis, 2):
        if not D.contains(lie_bracket(a, b)):
            raise AssertionError("Cauchy-characteristic distribution not involutive")
    return D


# --------------------------------------------------------------------------
# text rendering and fixture parsing

def render_oneform(w: OneForm) -> str:
    """Linear combination of d<coord> terms in chart order, e.g.
    ``(u1 - u2)*dx1 + x1*dx2``."""
    parts = []
    for s, c in zip(w.chart.symbols, w.coeffs):
        c = normalize(c)
        if c == 0:
            continue
        if c == 1:
            parts.append(f"d{s.name}")
        elif c == -1:
            parts.append(f"-d{s.name}")
        else:
            text = symcore.render(c)
            if isinstance(c, sp.Add) or "/" in text:
                text = f"({text})"
            parts.append(f"{text}*d{s.name}")
    if not parts:
        return "0"
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


def parse_oneform(text: str, chart: Chart) -> OneForm:
    """Parse the rendering syntax back into a OneForm on the chart."""
    dsyms = {f"d{s.name}": sp.Symbol(f"d{s.name}") for s in chart.symbols}
    allowed = list(chart.syms) + list(dsyms.values())
    e = symcore.parse_expr(text, allowed)
    e = sp.expand(e)
    coeffs = []
    for s in chart.symbols:
        d = dsyms[f"d{s.name}"]
        coeffs.append(normalize(sp.diff(e, d)))
    rebuilt = sum(c * dsyms[f"d{s.name}"] for s, c in zip(chart.symbols, coeffs))
    if not is_zero(sp.together(e - rebuilt)):
        raise ExprSyntaxError(f"not linear in the differentials: {text!r}")
    for c in coeffs:
        if any(str(f).startswith("d") and f in dsyms.values()
               for f in sp.sympify(c).free_symbols):
            raise ExprSyntaxError(f"coefficients must not contain differentials: {text!r}")
    return OneForm(chart, tuple(coeffs))
