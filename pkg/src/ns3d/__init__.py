"""Pseudospectral 3d Navier-Stokes on the periodic box with implicit Euler
timestepping and step-by-step certification of energy-stability bounds."""

from .analysis import (
    BlowUpError,
    BoundsReport,
    Check,
    ConstantsSet,
    CubicAnalysis,
    DtReport,
    HorizonReport,
    InfeasibleConfig,
    RestrictionViolated,
    StepVerdict,
    comparison_blowup_time,
    comparison_ode,
    comparison_seq,
    compute_bounds,
    compute_horizons,
    cubic_analyze,
    dt_restrictions,
    estimate_constants,
    gronwall_envelope,
    one_step_explicit_bound,
    smallness_check,
    step_verdict,
)
from .harness import (
    RunConfig,
    RunReport,
    StepRow,
    SweepEntry,
    convergence_orders,
    fitted_order,
    run,
    sweep,
    sweep_summary,
)
from .spectral import (
    FieldFileError,
    FixedModes,
    ForcingEvaluator,
    FromFile,
    Grid,
    GridMismatchError,
    NormBundle,
    PlanarVortex,
    RandomDivFree,
    Shear,
    SpectralField,
    TimeModulated,
    Zero,
    field_from_modes,
    inner,
    laplacian,
    load_field,
    make_field,
    nonlinear_term,
    norms,
    project_leray,
    save_field,
    zero_field,
)
from .stepping import (
    FULLY_IMPLICIT,
    SEMI_IMPLICIT,
    NonConvergence,
    SchemeConfig,
    StepResult,
    energy_identity_residual,
    fully_implicit_step,
    semi_implicit_step,
    step,
)

__version__ = "0.1.0"
