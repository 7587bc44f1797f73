"""fwdflat: an exact forward-flatness test for nonlinear discrete-time
systems x+ = f(x, u), built on a decreasing sequence of integrable
codistributions.

The top-level names re-export the working vocabulary; the implementation
lives in :mod:`fwdflat.symcore` (expression kernel and exact linear
algebra), :mod:`fwdflat.extcalc` (exterior calculus and codistributions),
:mod:`fwdflat.dtsys` (system model, adapted charts, shifts, verifiers),
:mod:`fwdflat.flatness` (the sequence and the classification) and
:mod:`fwdflat.cli` (command line front end).
"""

from .errors import (
    ExprSyntaxError,
    FwdflatError,
    InternalInconsistency,
    InversionFailed,
    NonConstantDimension,
    NonRationalTrigArgument,
    NotShiftable,
    PoleAtPoint,
    ShiftBudgetExceeded,
    SystemFileError,
)
from .symcore import Symbol, configure, is_zero, normalize, parse_expr, render
from .extcalc import (
    Chart,
    Codistribution,
    Distribution,
    KForm,
    OneForm,
    VectorField,
    annihilator_of_codistribution,
    annihilator_of_distribution,
    cauchy_distribution,
    contract,
    exterior_derivative,
    intersect,
    invariant_extension,
    is_cauchy_characteristic,
    is_integrable,
    is_invariant,
    lie_bracket,
    lie_derivative_form,
    parse_oneform,
    render_oneform,
    wedge,
)
from .dtsys import (
    AdaptedChart,
    DiscreteTimeSystem,
    FlatOutputCandidate,
    TriangularDecomposition,
    backward_shift_oneform,
    build_adapted_chart,
    check_submersivity,
    flat_output_symbol,
    forward_shift,
    verify_flat_output,
    verify_triangular_decomposition,
)
from .flatness import (
    FORWARD_FLAT,
    NOT_FORWARD_FLAT,
    STATIC_FEEDBACK_LINEARIZABLE,
    SequenceReport,
    SequenceStep,
    classify,
    compute_sequence,
    decomposability,
    subsystem_consistency_check,
)
from .sysfile import SystemFile, parse_system_file, parse_system_text, serialize_system

__version__ = "0.1.0"
