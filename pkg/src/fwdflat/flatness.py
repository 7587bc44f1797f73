"""The forward-flatness test: the unique sequence of integrable
codistributions, the resulting classification, and the consistency check
between a triangular decomposition and the sequence of its subsystem.

Each iteration, starting from a codistribution P_k spanned by exact state
differentials, performs three moves:

1. intersect P_k with the span of the df-differentials;
2. close the intersection under Lie derivatives along the complement
   directions (the smallest invariant extension);
3. shift the result backward, which in adapted coordinates is the
   substitution theta -> x.

The sequence is strictly decreasing until it stabilizes; the system is
forward flat exactly when it reaches the zero codistribution, and static
feedback linearizable when, in addition, step 2 never adds anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp

from . import symcore
from .dtsys import (
    AdaptedChart,
    DecompositionVerdict,
    DiscreteTimeSystem,
    TriangularDecomposition,
    _rank_at_point,
    backward_shift_oneform,
    build_adapted_chart,
    check_submersivity,
    verify_triangular_decomposition,
)
from .errors import FwdflatError, InternalInconsistency
from .extcalc import (
    Chart,
    Codistribution,
    OneForm,
    basis_oneform,
    intersect,
    invariant_extension,
    is_integrable,
    render_oneform,
)
from .symcore import is_zero, normalize

FORWARD_FLAT = "ForwardFlat"
STATIC_FEEDBACK_LINEARIZABLE = "StaticFeedbackLinearizable"
NOT_FORWARD_FLAT = "NotForwardFlat"


@dataclass
class SequenceStep:
    """P_k together with the diagnostics of the iteration that starts at it.

    The diagnostics are None on the terminal step when the iteration was not
    carried out (the sequence had already reached zero).
    """

    k: int
    P: Codistribution
    dim: int
    intersection_dim: int | None = None
    lie_derivatives_added: int | None = None
    step2_trivial: bool | None = None

    def basis_strings(self) -> list[str]:
        return [render_oneform(w) for w in self.P.basis]


@dataclass
class SequenceReport:
    system_name: str
    steps: list[SequenceStep]
    k_bar: int
    verdict: str
    obstruction: list[OneForm] | None
    warnings: list[str] = field(default_factory=list)

    @property
    def dims(self) -> list[int]:
        return [s.dim for s in self.steps]

    def to_json_dict(self) -> dict:
        d = {
            "system": self.system_name,
            "verdict": self.verdict,
            "k_bar": self.k_bar,
            "dims": self.dims,
            "steps": [
                {
                    "k": s.k,
                    "dim": s.dim,
                    "basis": s.basis_strings(),
                    "intersection_dim": s.intersection_dim,
                    "lie_derivatives_added": s.lie_derivatives_added,
                    "step2_trivial": s.step2_trivial,
                }
                for s in self.steps
            ],
            "obstruction": ([render_oneform(w) for w in self.obstruction]
                            if self.obstruction is not None else None),
            "decomposition_dims": decomposability(self),
            "warnings": list(self.warnings),
        }
        return d


def _pullback_to_adapted(P: Codistribution, ac: AdaptedChart) -> Codistribution:
    """Rewrite forms from the (x, u) chart in the adapted (theta, xi) chart:
    coefficients through the inverse map, differentials via dF."""
    ch = ac.chart
    subs = ac.to_adapted_subs()
    F = ac.from_adapted
    forms = []
    for w in P.basis:
        coeffs = [sp.Integer(0)] * ch.dim
        for c_old, F_c in zip(w.coeffs, F):
            if c_old == 0:
                continue
            c_sub = sp.sympify(c_old).xreplace(subs)
            for a, s in enumerate(ch.syms):
                dF = sp.diff(F_c, s)
                if dF != 0:
                    coeffs[a] += c_sub * dF
        forms.append(OneForm(ch, tuple(normalize(c) for c in coeffs)))
    return Codistribution.span(ch, forms)


def _clear_row_denominators(M: sp.Matrix) -> sp.Matrix:
    """Scale each row by the lcm of its denominators (rank-preserving
    generically; keeps the entries pole-free at generic points)."""
    rows = []
    for i in range(M.rows):
        entries = [sp.cancel(e) for e in M.row(i)]
        denoms = [sp.fraction(e)[1] for e in entries]
        try:
            d = sp.lcm(denoms)
        except Exception:
            d = sp.Mul(*denoms)
        rows.append([sp.cancel(e * d) for e in entries])
    return sp.Matrix(rows) if rows else M


def _dim_at_equilibrium(M: sp.Matrix, eq_subs, params, generic_dim: int,
                        warnings: list[str], label: str) -> None:
    if M.rows == 0:
        return
    rk = _rank_at_point(_clear_row_denominators(M), eq_subs, params)
    if rk is None:
        warnings.append(f"{label}: rank at the equilibrium could not be "
                        "evaluated exactly")
    elif rk != generic_dim:
        warnings.append(f"{label}: generic dimension {generic_dim} drops to "
                        f"{rk} at the equilibrium")


def _intersection_dim_at_equilibrium(A: sp.Matrix, B: sp.Matrix, eq_subs,
                                     params, generic_dim: int,
                                     warnings: list[str], label: str) -> None:
    """Pointwise dim(rowspace(A) ∩ rowspace(B)) = rk A + rk B − rk [A; B].

    Evaluating a canonical basis of the intersection at the point is not
    reliable (pivot normalization can degenerate there), so the dimension is
    reconstructed from the evaluated generating matrices instead.
    """
    A = _clear_row_denominators(A)
    B = _clear_row_denominators(B)
    ra = _rank_at_point(A, eq_subs, params)
    rb = _rank_at_point(B, eq_subs, params)
    rab = _rank_at_point(A.col_join(B), eq_subs, params)
    if None in (ra, rb, rab):
        warnings.append(f"{label}: rank at the equilibrium could not be "
                        "evaluated exactly")
        return
    d = ra + rb - rab
    if d != generic_dim:
        warnings.append(f"{label}: generic dimension {generic_dim} becomes "
                        f"{d} at the equilibrium")


def compute_sequence(sys: DiscreteTimeSystem,
                     adapted: AdaptedChart | None = None,
                     trace=None) -> SequenceReport:
    """Run the decreasing sequence of codistributions to its fixed point.

    ``trace``, if given, is called with one human-readable line per event.
    """
    def say(msg):
        if trace is not None:
            trace(msg)

    sub = check_submersivity(sys)
    if not sub.ok:
        raise FwdflatError(
            "the system map is not a submersion (precondition of the test): "
            + "; ".join(sub.notes))
    ac = adapted if adapted is not None else build_adapted_chart(sys)
    say(f"adapted chart complement: {tuple(str(h) for h in ac.h)}")

    warnings: list[str] = []
    eq_ad = ac.equilibrium_subs()
    if eq_ad is None:
        warnings.append("adapted-chart equilibrium is not rational; "
                        "equilibrium rank checks skipped")

    xu = sys.chart
    span_dtheta = ac.span_dtheta()
    D_xi = ac.xi_directions()

    P = Codistribution.span(xu, [basis_oneform(xu, i) for i in range(sys.n)])
    steps = [SequenceStep(1, P, P.dim)]
    k_bar = 1
    for k in range(1, sys.n + 2):
        step = steps[-1]
        if step.dim == 0:
            break
        P_ad = _pullback_to_adapted(step.P, ac)
        if P_ad.dim != step.dim:
            raise InternalInconsistency(
                f"pullback changed the dimension at k = {k}")
        Q = intersect(P_ad, span_dtheta)
        Qhat = invariant_extension(Q, D_xi)
        step.intersection_dim = Q.dim
        step.lie_derivatives_added = Qhat.dim - Q.dim
        step.step2_trivial = Qhat.dim == Q.dim
        say(f"k = {k}: dim P = {step.dim}, intersection {Q.dim}, "
            f"extension added {step.lie_derivatives_added}")

        shifted = [backward_shift_oneform(w, ac) for w in Qhat.basis]
        P_next = Codistribution.span(xu, shifted)

        # runtime invariants of the construction
        for w in P_next.basis:
            if not step.P.contains(w):
                raise InternalInconsistency(
                    f"sequence is not nested at k = {k}")
            if any(not is_zero(c) for c in w.coeffs[sys.n:]):
                raise InternalInconsistency(
                    f"P_{k + 1} has input-differential components")
        if not is_integrable(P_next):
            raise InternalInconsistency(
                f"P_{k + 1} is not integrable; the backward shift is invalid")

        if eq_ad is not None:
            eq_xu = sys.equilibrium_subs()
            _intersection_dim_at_equilibrium(
                step.P.matrix(), sys.jacobian(), eq_xu, sys.params, Q.dim,
                warnings, f"k = {k}, intersection")
            _dim_at_equilibrium(P_next.matrix(), eq_xu, sys.params, P_next.dim,
                                warnings, f"k = {k}, shifted codistribution")

        if P_next.dim == step.dim:
            if not P_next.equals(step.P):
                raise InternalInconsistency(
                    f"dimension stalled at k = {k} but the spans differ")
            k_bar = k
            say(f"fixed point at k = {k}")
            break
        steps.append(SequenceStep(k + 1, P_next, P_next.dim))
        k_bar = k + 1
        if P_next.dim == 0:
            say(f"reached the zero codistribution at k = {k + 1}")
            break
    else:
        raise InternalInconsistency(
            "the sequence did not stabilize within n + 1 iterations")

    final = steps[-1]
    if final.dim == 0:
        trivial = all(s.step2_trivial for s in steps if s.step2_trivial is not None)
        verdict = STATIC_FEEDBACK_LINEARIZABLE if trivial else FORWARD_FLAT
        obstruction = None
    else:
        verdict = NOT_FORWARD_FLAT
        obstruction = list(final.P.basis)
    return SequenceReport(sys.name, steps, k_bar, verdict, obstruction, warnings)


def classify(report: SequenceReport) -> str:
    return report.verdict


def decomposability(report: SequenceReport) -> tuple[int, int] | None:
    """Block dimensions (dim x1, dim x2) of a triangular decomposition, when
    one exists; None when the first iteration already stalls."""
    dims = report.dims
    if len(dims) >= 2 and dims[1] < dims[0]:
        return (dims[0] - dims[1], dims[1])
    return None


# --------------------------------------------------------------------------
# subsystem consistency

@dataclass
class ConsistencyVerdict:
    ok: bool
    reasons: list[str]
    main_dims: list[int] | None = None
    subsystem_dims: list[int] | None = None
    decomposition: DecompositionVerdict | None = None


def _transform_states_only(P: Codistribution, sys: DiscreteTimeSystem,
                           xbar_chart: Chart, state_inverse) -> Codistribution:
    """Rewrite a codistribution spanned by state differentials in the new
    state coordinates xbar, dropping the (zero) input components."""
    subs = {x.s: e for x, e in zip(sys.states, state_inverse)}
    forms = []
    for w in P.basis:
        for c in w.coeffs[sys.n:]:
            if not is_zero(c):
                raise InternalInconsistency(
                    "codistribution has input-differential components")
        coeffs = [sp.Integer(0)] * xbar_chart.dim
        for i, c_old in enumerate(w.coeffs[:sys.n]):
            if c_old == 0:
                continue
            c_sub = sp.sympify(c_old).xreplace(subs)
            for a, s in enumerate(xbar_chart.syms):
                dX = sp.diff(state_inverse[i], s)
                if dX != 0:
                    coeffs[a] += c_sub * dX
        forms.append(OneForm(xbar_chart, tuple(normalize(c) for c in coeffs)))
    return Codistribution.span(xbar_chart, forms)


def subsystem_consistency_check(sys: DiscreteTimeSystem,
                                dec: TriangularDecomposition) -> ConsistencyVerdict:
    """Check that the sequence of the x2-subsystem, with (x1, u2) acting as
    its inputs, reproduces the tail of the full system's sequence: the k-th
    subsystem codistribution must equal the (k+1)-th of the full system."""
    v = verify_triangular_decomposition(sys, dec)
    if not v.ok:
        return ConsistencyVerdict(False, ["decomposition invalid: "
                                          + "; ".join(v.reasons)],
                                  decomposition=v)
    n1, n2, m1, m2 = dec.split
    if v.xbar0 is None:
        return ConsistencyVerdict(
            False, ["transformed equilibrium is not rational; the subsystem "
                    "sequence cannot be anchored"], decomposition=v)

    x2_syms = v.xbar[n1:]
    in_syms = v.xbar[:n1] + v.ubar[m1:]
    f2 = v.fbar[n1:]
    forbidden = {v.ubar[j].s for j in range(m1)}
    for e in f2:
        if sp.sympify(e).free_symbols & forbidden:
            return ConsistencyVerdict(
                False, ["x2-rows still contain u1-block symbols"],
                decomposition=v)
    sub_sys = DiscreteTimeSystem(
        states=x2_syms,
        inputs=in_syms,
        f=f2,
        x0=v.xbar0[n1:],
        u0=tuple(v.xbar0[:n1]) + tuple(v.ubar0[m1:]),
        params=sys.params,
        name=f"{sys.name}::subsystem",
    )
    main = compute_sequence(sys)
    sub = compute_sequence(sub_sys)

    xbar_chart = Chart(v.xbar)
    reasons: list[str] = []
    main_in_xbar = [
        _transform_states_only(s.P, sys, xbar_chart, v.state_inverse)
        for s in main.steps[1:]
    ]
    sub_in_xbar = []
    for s in sub.steps:
        forms = []
        for w in s.P.basis:
            for c in w.coeffs[n2:]:
                if not is_zero(c):
                    raise InternalInconsistency(
                        "subsystem codistribution leaves the state span")
            coeffs = [sp.Integer(0)] * xbar_chart.dim
            for i in range(n2):
                coeffs[n1 + i] = w.coeffs[i]
            forms.append(OneForm(xbar_chart, tuple(coeffs)))
        sub_in_xbar.append(Codistribution.span(xbar_chart, forms))

    if len(sub_in_xbar) != len(main_in_xbar):
        reasons.append(
            f"sequence lengths differ: subsystem has {len(sub_in_xbar)} "
            f"codistributions, the full system's tail has {len(main_in_xbar)}")
    for k, (a, b) in enumerate(zip(sub_in_xbar, main_in_xbar), start=1):
        if not a.equals(b):
            reasons.append(
                f"subsystem codistribution {k} (dim {a.dim}) differs from the "
                f"full system's codistribution {k + 1} (dim {b.dim})")
    return ConsistencyVerdict(not reasons, reasons,
                              main_dims=main.dims, subsystem_dims=sub.dims,
                              decomposition=v)
