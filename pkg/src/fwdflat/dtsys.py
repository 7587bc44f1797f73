"""Discrete-time system model: submersivity, adapted coordinates, shift
operators, flat-output verification and triangular-decomposition verification.

The system is x+ = f(x, u) on the state- and input manifold with chart
(x, u).  Adapted coordinates (theta, xi) = (f(x, u), h(x, u)) make the span
of the df-differentials a pure theta-coordinate object, which is what lets
the backward shift of 1-forms become a plain substitution theta -> x.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import sympy as sp

from . import symcore
from .errors import (
    InversionFailed,
    NotShiftable,
    ShiftBudgetExceeded,
    SystemFileError,
)
from .extcalc import Chart, Codistribution, Distribution, OneForm, basis_oneform
from .symcore import (
    ADAPTED_THETA,
    ADAPTED_XI,
    INPUT,
    PARAMETER,
    SHIFTED_INPUT,
    STATE,
    Expr,
    Symbol,
    is_zero,
    normalize,
)

DEFAULT_MAX_SHIFT = 25


def _fresh_names(prefix: str, count: int, taken: set[str]) -> list[str]:
    names = []
    for i in range(1, count + 1):
        name = f"{prefix}{i}"
        while name in taken:
            name += "_"
        taken.add(name)
        names.append(name)
    return names


@dataclass(frozen=True)
class DiscreteTimeSystem:
    """x+ = f(x, u) with an equilibrium (x0, u0) and optional chart hints."""

    states: tuple[Symbol, ...]
    inputs: tuple[Symbol, ...]
    f: tuple[Expr, ...]
    x0: tuple
    u0: tuple
    params: tuple[Symbol, ...] = ()
    complement_h: tuple[Expr, ...] | None = None
    inverse_chart: tuple[Expr, ...] | None = None
    name: str = "system"

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(sp.sympify(e) for e in self.f))
        object.__setattr__(self, "x0", tuple(sp.Rational(v) for v in self.x0))
        object.__setattr__(self, "u0", tuple(sp.Rational(v) for v in self.u0))
        if len(self.f) != self.n:
            raise ValueError("need one map component per state")
        if len(self.x0) != self.n or len(self.u0) != self.m:
            raise ValueError("equilibrium dimensions do not match")
        if self.complement_h is not None and len(self.complement_h) != self.m:
            raise ValueError("complement must have one function per input")
        if self.inverse_chart is not None and len(self.inverse_chart) != self.n + self.m:
            raise ValueError("inverse chart must have n+m components")
        for i, fi in enumerate(self.f):
            res = fi.xreplace(self.equilibrium_subs()) - self.x0[i]
            if not is_zero(res):
                raise ValueError(
                    f"(x0, u0) is not an equilibrium: component {i} residual {normalize(res)}")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.inputs)

    @property
    def chart(self) -> Chart:
        return Chart(self.states + self.inputs)

    def equilibrium_subs(self) -> dict:
        subs = {s.s: v for s, v in zip(self.states, self.x0)}
        subs.update({s.s: v for s, v in zip(self.inputs, self.u0)})
        return subs

    def jacobian(self) -> sp.Matrix:
        """d f / d (x, u), an n x (n+m) matrix."""
        return sp.Matrix([[sp.diff(fi, s) for s in self.chart.syms] for fi in self.f])

    def span_df(self) -> Codistribution:
        ch = self.chart
        forms = [OneForm(ch, tuple(sp.diff(fi, s) for s in ch.syms)) for fi in self.f]
        return Codistribution.span(ch, forms)

    def input_shift_symbol(self, j: int, order: int) -> Symbol:
        """The order-th forward shift of input j (order 0 is the input itself)."""
        base = self.inputs[j]
        if order == 0:
            return base
        return Symbol(f"{base.name}_{order}", kind=SHIFTED_INPUT, shift_order=order)

    def _shift_order_of(self, s: sp.Symbol) -> tuple[int, int] | None:
        """(input index, shift order) if s is an input or a shifted input."""
        for j, u in enumerate(self.inputs):
            if s == u.s:
                return j, 0
            mt = re.fullmatch(re.escape(u.name) + r"_(\d+)", s.name)
            if mt:
                return j, int(mt.group(1))
        return None


# --------------------------------------------------------------------------
# submersivity

@dataclass
class SubmersivityReport:
    ok: bool
    generic_rank: int
    rank_at_equilibrium: int | None
    notes: list[str] = field(default_factory=list)


def _rank_at_point(M: sp.Matrix, subs: Mapping, params: Sequence[Symbol]) -> int | None:
    """Exact rank of M at a rational point, params sampled nonzero; None if
    the matrix does not become rational there."""
    rng = symcore._session.rng
    for _ in range(20):
        psubs = dict(subs)
        for p in params:
            psubs[p.s] = sp.Rational(rng.randint(1, 97) * rng.choice((-1, 1)),
                                     rng.randint(1, 13))
        Mv = M.xreplace(psubs)
        Mv = Mv.applyfunc(sp.cancel)
        if Mv.has(sp.zoo, sp.nan, sp.oo):
            continue
        if Mv.free_symbols or Mv.atoms(sp.sin, sp.cos):
            return None
        return Mv.rank()
    return None


def check_submersivity(sys: DiscreteTimeSystem) -> SubmersivityReport:
    """rank of d f / d (x, u), generically and at the equilibrium."""
    J = sys.jacobian()
    generic = symcore.rank(J)
    at_eq = _rank_at_point(J, sys.equilibrium_subs(), sys.params)
    notes = []
    if generic < sys.n:
        R, pivots = symcore.rref(J.T)
        deficient = [i for i in range(sys.n) if i not in pivots]
        notes.append(f"generic rank {generic} < n = {sys.n}; "
                     f"dependent rows {deficient}")
    if at_eq is None:
        notes.append("rank at equilibrium could not be evaluated exactly")
    elif at_eq < sys.n:
        notes.append(f"rank at equilibrium {at_eq} < n = {sys.n}")
    Ju = J[:, sys.n:]
    ru = symcore.rank(Ju)
    if ru < sys.m:
        notes.append(f"rank of d f / d u is {ru} < m = {sys.m} (redundant inputs)")
    ok = generic == sys.n and (at_eq is None or at_eq == sys.n)
    return SubmersivityReport(ok, generic, at_eq, notes)


# --------------------------------------------------------------------------
# adapted coordinates

@dataclass(frozen=True)
class AdaptedChart:
    """(theta, xi) = (f(x, u), h(x, u)) together with the inverse map."""

    system: DiscreteTimeSystem
    theta: tuple[Symbol, ...]
    xi: tuple[Symbol, ...]
    h: tuple[Expr, ...]
    from_adapted: tuple[Expr, ...]  # (x, u) as expressions in (theta, xi)

    @property
    def chart(self) -> Chart:
        return Chart(self.theta + self.xi)

    def to_adapted_subs(self) -> dict:
        """x_i -> F_x_i(theta, xi), u_j -> F_u_j(theta, xi)."""
        old = self.system.chart.syms
        return {s: e for s, e in zip(old, self.from_adapted)}

    def from_adapted_subs(self) -> dict:
        """theta_i -> f_i(x, u), xi_j -> h_j(x, u)."""
        subs = {t.s: fi for t, fi in zip(self.theta, self.system.f)}
        subs.update({x.s: hj for x, hj in zip(self.xi, self.h)})
        return subs

    def equilibrium_subs(self) -> dict | None:
        """Adapted-coordinate equilibrium, if it is exactly rational."""
        eq = self.system.equilibrium_subs()
        subs = {}
        for t, x0 in zip(self.theta, self.system.x0):
            subs[t.s] = x0  # theta0 = f(x0, u0) = x0
        for x, hj in zip(self.xi, self.h):
            v = sp.cancel(sp.sympify(hj).xreplace(eq))
            if not v.is_Rational:
                return None
            subs[x.s] = v
        return subs

    def span_dtheta(self) -> Codistribution:
        ch = self.chart
        return Codistribution.span(ch, [basis_oneform(ch, i) for i in range(len(self.theta))])

    def xi_directions(self) -> Distribution:
        from .extcalc import basis_vectorfield
        ch = self.chart
        n = len(self.theta)
        return Distribution.span(
            ch, [basis_vectorfield(ch, n + j) for j in range(len(self.xi))])


def _fragment_ok(e: sp.Expr, allowed: set[sp.Symbol]) -> bool:
    try:
        symcore._validate_tree(sp.sympify(e), allowed, str(e))
    except Exception:
        return False
    return True


def _candidate_complements(sys: DiscreteTimeSystem):
    """m-subsets of the coordinates, inputs before states, ascending index."""
    coords = list(sys.inputs) + list(sys.states)
    for combo in itertools.combinations(coords, sys.m):
        yield tuple(s.s for s in combo)


def _solve_inverse(sys: DiscreteTimeSystem, h: Sequence[Expr],
                   theta: Sequence[Symbol], xi: Sequence[Symbol]):
    """Solve (theta, xi) = (f, h) for (x, u); first fragment-valid branch
    that passes the symbolic round trip wins."""
    unknowns = list(sys.chart.syms)
    eqs = [t.s - fi for t, fi in zip(theta, sys.f)]
    eqs += [x.s - hj for x, hj in zip(xi, h)]
    try:
        sols = sp.solve(eqs, unknowns, dict=True)
    except Exception:
        return None
    allowed = {t.s for t in theta} | {x.s for x in xi} | {p.s for p in sys.params}
    back = {t.s: fi for t, fi in zip(theta, sys.f)}
    back.update({x.s: hj for x, hj in zip(xi, h)})
    for sol in sols:
        if set(sol) != set(unknowns):
            continue
        exprs = [sp.cancel(sol[s]) for s in unknowns]
        if not all(_fragment_ok(e, allowed) for e in exprs):
            continue
        if all(is_zero(e.xreplace(back) - s) for e, s in zip(exprs, unknowns)):
            return tuple(exprs)
    return None


def build_adapted_chart(sys: DiscreteTimeSystem) -> AdaptedChart:
    """Construct adapted coordinates, completing span{df} automatically when
    no complement was supplied."""
    taken = {s.name for s in sys.states + sys.inputs + sys.params}
    theta = tuple(Symbol(nm, kind=ADAPTED_THETA)
                  for nm in _fresh_names("th", sys.n, set(taken)))
    xi = tuple(Symbol(nm, kind=ADAPTED_XI)
               for nm in _fresh_names("xi", sys.m, set(taken)))

    if sys.complement_h is not None:
        candidates = [tuple(sp.sympify(e) for e in sys.complement_h)]
    else:
        candidates = list(_candidate_complements(sys))

    chart_syms = sys.chart.syms
    J = sys.jacobian()
    failures = []
    for h in candidates:
        Jh = sp.Matrix([[sp.diff(hj, s) for s in chart_syms] for hj in h])
        full = J.col_join(Jh)
        if symcore.rank(full) < sys.n + sys.m:
            failures.append(f"{h}: (f, h) Jacobian rank deficient")
            continue
        if sys.inverse_chart is not None:
            inv = tuple(sp.sympify(e) for e in sys.inverse_chart)
            back = {t.s: fi for t, fi in zip(theta, sys.f)}
            back.update({x.s: hj for x, hj in zip(xi, h)})
            ok = all(is_zero(sp.sympify(e).xreplace(back) - s)
                     for e, s in zip(inv, chart_syms))
            if not ok:
                raise InversionFailed(
                    "supplied inverse chart does not invert (f, h)")
        else:
            inv = _solve_inverse(sys, h, theta, xi)
            if inv is None:
                failures.append(f"{h}: not invertible by the built-in solver")
                continue
        return AdaptedChart(sys, theta, xi, tuple(sp.sympify(e) for e in h), inv)
    raise InversionFailed(
        "no invertible adapted chart found; supply an explicit complement "
        "(h) and, if needed, the inverse chart map. Tried: "
        + "; ".join(failures[:8]))


# --------------------------------------------------------------------------
# shift operators

def _max_input_shift(sys: DiscreteTimeSystem, e: sp.Expr) -> int:
    orders = [0]
    for s in sp.sympify(e).free_symbols:
        hit = sys._shift_order_of(s)
        if hit is not None:
            orders.append(hit[1])
    return max(orders)


def forward_shift(g, sys: DiscreteTimeSystem, max_shift: int = DEFAULT_MAX_SHIFT) -> Expr:
    """delta(g): substitute x -> f(x, u) and u_[a] -> u_[a+1]."""
    g = sp.sympify(g)
    top = _max_input_shift(sys, g)
    if top + 1 > max_shift:
        raise ShiftBudgetExceeded(
            f"forward shift needs input shift order {top + 1} > cap {max_shift}")
    subs = {x.s: fi for x, fi in zip(sys.states, sys.f)}
    for j in range(sys.m):
        for a in range(top + 1):
            subs[sys.input_shift_symbol(j, a).s] = sys.input_shift_symbol(j, a + 1).s
    return normalize(g.xreplace(subs))


def backward_shift_oneform(w: OneForm, ac: AdaptedChart) -> OneForm:
    """delta^{-1} of a 1-form written in the adapted chart.

    Requires zero d-xi components and xi-free coefficients; a violation is
    an internal sequencing bug, not a user error.
    """
    if w.chart != ac.chart:
        raise ValueError("form is not expressed in the adapted chart")
    n = len(ac.theta)
    for j, c in enumerate(w.coeffs[n:]):
        if not is_zero(c):
            raise NotShiftable(f"nonzero d{ac.xi[j].name}-component: {normalize(c)}")
    coeffs = []
    xisyms = {x.s for x in ac.xi}
    theta_to_x = {t.s: x.s for t, x in zip(ac.theta, ac.system.states)}
    for c in w.coeffs[:n]:
        c = normalize(c)
        if c.free_symbols & xisyms:
            raise NotShiftable(f"coefficient depends on the complement: {c}")
        coeffs.append(c.xreplace(theta_to_x))
    sys_chart = ac.system.chart
    return OneForm(sys_chart, tuple(coeffs) + (sp.Integer(0),) * ac.system.m)


# --------------------------------------------------------------------------
# flat-output verification

def flat_output_symbol(j: int, order: int) -> Symbol:
    """Component j (0-based) of the flat output, shifted `order` times.

    Named y{j+1} for order 0 and y{j+1}_{order} above.
    """
    name = f"y{j + 1}" if order == 0 else f"y{j + 1}_{order}"
    return Symbol(name, kind=STATE, shift_order=order)


@dataclass(frozen=True)
class FlatOutputCandidate:
    """y = phi(x, u, ..., u_[q]) with the claimed parameterization (F_x, F_u)."""

    phi: tuple[Expr, ...]
    F_x: tuple[Expr, ...]
    F_u: tuple[Expr, ...]
    R: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(sp.sympify(e) for e in self.phi))
        object.__setattr__(self, "F_x", tuple(sp.sympify(e) for e in self.F_x))
        object.__setattr__(self, "F_u", tuple(sp.sympify(e) for e in self.F_u))


@dataclass
class FlatOutputVerdict:
    ok: bool
    residuals_x: list[Expr]
    residuals_u: list[Expr]
    residuals_consistency: list[Expr]

    def failing_components(self) -> list[str]:
        bad = [f"x{i + 1}" for i, r in enumerate(self.residuals_x) if r != 0]
        bad += [f"u{j + 1}" for j, r in enumerate(self.residuals_u) if r != 0]
        bad += [f"shift-consistency {i + 1}"
                for i, r in enumerate(self.residuals_consistency) if r != 0]
        return bad


def _y_shift_orders(cand: FlatOutputCandidate, m: int) -> int:
    """Highest shift of a flat-output symbol used in F_x or F_u."""
    top = 0
    pat = re.compile(r"y(\d+)_(\d+)")
    for e in cand.F_x + cand.F_u:
        for s in sp.sympify(e).free_symbols:
            mt = pat.fullmatch(s.name)
            if mt:
                top = max(top, int(mt.group(2)))
    if cand.R is not None:
        top = max(top, max(cand.R))
    return top


def verify_flat_output(sys: DiscreteTimeSystem, cand: FlatOutputCandidate,
                       max_shift: int = DEFAULT_MAX_SHIFT) -> FlatOutputVerdict:
    """Substitute y_[k] = delta^k(phi) into the parameterization and check it
    reproduces x and u; also check delta(F_x) = f(F_x, F_u) over the
    y-coordinates."""
    if len(cand.phi) != sys.m:
        raise ValueError("a flat output must have one component per input")
    top = _y_shift_orders(cand, sys.m)
    shifted: dict[sp.Symbol, sp.Expr] = {}
    for j, phi in enumerate(cand.phi):
        val = sp.sympify(phi)
        shifted[flat_output_symbol(j, 0).s] = val
        for k in range(1, top + 1):
            val = forward_shift(val, sys, max_shift=max_shift)
            shifted[flat_output_symbol(j, k).s] = val
    res_x = [normalize(sp.sympify(Fi).xreplace(shifted) - x.s)
             for Fi, x in zip(cand.F_x, sys.states)]
    res_u = [normalize(sp.sympify(Fj).xreplace(shifted) - u.s)
             for Fj, u in zip(cand.F_u, sys.inputs)]
    # delta(F_x) = f(F_x, F_u) as functions of the flat output
    y_shift = {}
    for j in range(sys.m):
        for k in range(top + 1):
            y_shift[flat_output_symbol(j, k).s] = flat_output_symbol(j, k + 1).s
    into_y = {x.s: Fi for x, Fi in zip(sys.states, cand.F_x)}
    into_y.update({u.s: Fj for u, Fj in zip(sys.inputs, cand.F_u)})
    res_c = [normalize(sp.sympify(Fi).xreplace(y_shift)
                       - sp.sympify(fi).xreplace(into_y))
             for Fi, fi in zip(cand.F_x, sys.f)]
    ok = all(r == 0 for r in res_x + res_u + res_c)
    return FlatOutputVerdict(ok, res_x, res_u, res_c)


# --------------------------------------------------------------------------
# triangular decompositions

@dataclass(frozen=True)
class TriangularDecomposition:
    """State- and input transformation with the block sizes of the split.

    ``state_map`` lists the x1-block components first, then the x2-block;
    ``input_map`` lists the u1-block first, then the u2-block.
    ``split`` = (dim x1, dim x2, dim u1, dim u2).
    """

    state_map: tuple[Expr, ...]
    input_map: tuple[Expr, ...]
    split: tuple[int, int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "state_map",
                           tuple(sp.sympify(e) for e in self.state_map))
        object.__setattr__(self, "input_map",
                           tuple(sp.sympify(e) for e in self.input_map))


@dataclass
class DecompositionVerdict:
    ok: bool
    reasons: list[str]
    # transformed-system data, populated when the transformation inverts
    xbar: tuple[Symbol, ...] | None = None
    ubar: tuple[Symbol, ...] | None = None
    fbar: tuple[Expr, ...] | None = None
    state_inverse: tuple[Expr, ...] | None = None   # x in terms of xbar
    input_inverse: tuple[Expr, ...] | None = None   # u in terms of (xbar, ubar)
    xbar0: tuple | None = None
    ubar0: tuple | None = None


def _solve_square(eqs, unknowns, back_subs):
    """First fragment-agnostic branch of sp.solve passing the round trip."""
    try:
        sols = sp.solve(eqs, unknowns, dict=True)
    except Exception:
        return None
    for sol in sols:
        if set(sol) != set(unknowns):
            continue
        exprs = [sp.cancel(sol[s]) for s in unknowns]
        if all(is_zero(sp.sympify(e).xreplace(back_subs) - s)
               for e, s in zip(exprs, unknowns)):
            return tuple(exprs)
    return None


def verify_triangular_decomposition(sys: DiscreteTimeSystem,
                                    dec: TriangularDecomposition) -> DecompositionVerdict:
    """Transform the system and check the triangular structure:
    the x2-rows must not depend on the u1-block, and the u1-block must act
    on the x1-rows with full rank dim(x1)."""
    n1, n2, m1, m2 = dec.split
    reasons: list[str] = []
    if n1 + n2 != sys.n or m1 + m2 != sys.m:
        return DecompositionVerdict(False, [f"split {dec.split} does not match "
                                            f"(n, m) = ({sys.n}, {sys.m})"])
    if n1 < 1:
        reasons.append("dim(x1) must be at least 1")
    if len(dec.state_map) != sys.n or len(dec.input_map) != sys.m:
        return DecompositionVerdict(False, ["transformation has wrong arity"])
    state_syms = [x.s for x in sys.states]
    for e in dec.state_map:
        if sp.sympify(e).free_symbols - set(state_syms) - {p.s for p in sys.params}:
            return DecompositionVerdict(False, ["state map must depend on x alone"])

    Jx = sp.Matrix([[sp.diff(e, s) for s in state_syms] for e in dec.state_map])
    if symcore.rank(Jx) < sys.n:
        return DecompositionVerdict(False, ["state map is not invertible"])
    full = sp.Matrix([[sp.diff(e, s) for s in sys.chart.syms]
                      for e in tuple(dec.state_map) + tuple(dec.input_map)])
    if symcore.rank(full) < sys.n + sys.m:
        return DecompositionVerdict(False, ["(state, input) map is not invertible"])

    taken = {s.name for s in sys.states + sys.inputs + sys.params}
    xbar = tuple(Symbol(nm, kind=STATE)
                 for nm in _fresh_names("xb", sys.n, set(taken)))
    ubar = tuple(Symbol(nm, kind=INPUT)
                 for nm in _fresh_names("ub", sys.m, set(taken)))
    back = {xb.s: e for xb, e in zip(xbar, dec.state_map)}
    back.update({ub.s: e for ub, e in zip(ubar, dec.input_map)})
    state_inv = _solve_square([xb.s - e for xb, e in zip(xbar, dec.state_map)],
                              state_syms, back)
    if state_inv is None:
        return DecompositionVerdict(False, ["state map could not be inverted "
                                            "by the built-in solver"])
    x_subs = {s: e for s, e in zip(state_syms, state_inv)}
    input_eqs = [ub.s - sp.sympify(e).xreplace(x_subs)
                 for ub, e in zip(ubar, dec.input_map)]
    input_inv = _solve_square(input_eqs, [u.s for u in sys.inputs],
                              back)
    if input_inv is None:
        return DecompositionVerdict(False, ["input map could not be inverted "
                                            "by the built-in solver"])
    inv_subs = dict(x_subs)
    inv_subs.update({u.s: e for u, e in zip(sys.inputs, input_inv)})

    f_subbed = [sp.sympify(fi).xreplace(inv_subs) for fi in sys.f]
    fbar = tuple(normalize(sp.sympify(e).xreplace({x.s: fi for x, fi
                                                   in zip(sys.states, f_subbed)}))
                 for e in dec.state_map)

    u1_syms = [ubar[j].s for j in range(m1)]
    for i in range(n1, sys.n):
        for us in u1_syms:
            if not is_zero(sp.diff(fbar[i], us)):
                reasons.append(f"x2-row {i - n1 + 1} depends on the u1-block")
                break
    B1 = sp.Matrix([[sp.diff(fbar[i], us) for us in u1_syms] for i in range(n1)]) \
        if n1 and m1 else sp.zeros(n1, m1)
    rk = symcore.rank(B1) if n1 and m1 else 0
    if rk != n1:
        reasons.append(f"rank of d f1 / d u1 is {rk}, need dim(x1) = {n1}")

    eq = sys.equilibrium_subs()
    xbar0 = tuple(sp.cancel(sp.sympify(e).xreplace(eq)) for e in dec.state_map)
    ubar0 = tuple(sp.cancel(sp.sympify(e).xreplace(eq)) for e in dec.input_map)
    if all(v.is_Rational for v in xbar0 + ubar0):
        eq_bar = {xb.s: v for xb, v in zip(xbar, xbar0)}
        eq_bar.update({ub.s: v for ub, v in zip(ubar, ubar0)})
        rk0 = _rank_at_point(B1, eq_bar, sys.params) if n1 and m1 else 0
        if rk0 is not None and rk0 != n1:
            reasons.append(f"rank of d f1 / d u1 at the equilibrium is {rk0}")
    else:
        reasons.append("transformed equilibrium is not rational; "
                       "equilibrium rank check skipped")
        xbar0 = ubar0 = None

    ok = not reasons
    return DecompositionVerdict(ok, reasons, xbar=xbar, ubar=ubar, fbar=fbar,
                                state_inverse=state_inv, input_inverse=input_inv,
                                xbar0=xbar0, ubar0=ubar0)
