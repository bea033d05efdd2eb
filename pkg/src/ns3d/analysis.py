"""Scalar stability analysis: bounds, smallness conditions, the step cubic,
timestep restrictions, Gronwall envelopes and blow-up comparison sequences.

Everything here is plain float arithmetic on norms already extracted from
fields, so the module is re-entrant and cheap enough to run per step.

The Sobolev-type constants c1..c5 are not computed sharply; they default to
1 and are configurable through ConstantsSet.  Only c0 (Poincare) is exact,
equal to 1 on the zero-mean periodic box.  With placeholder constants every
verdict below is a falsifiable numerical statement about the running
simulation, not a proven theorem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .spectral import (
    Grid,
    RandomDivFree,
    Shear,
    inner,
    laplacian,
    make_field,
    nonlinear_term,
    norms,
)
from .stepping import SEMI_IMPLICIT, SchemeConfig

CBRT2 = 2.0 ** (1.0 / 3.0)

#: relative tolerance used when deciding whether an inequality holds; it
#: absorbs roundoff when a threshold is met with exact equality.
CHECK_REL_TOL = 1e-12

MONITOR_VARIANTS = ("semi_small", "semi_short", "full_small", "full_short", "none")


class BlowUpError(ValueError):
    """The comparison solution has already blown up at the requested time."""


class RestrictionViolated(ValueError):
    """A one-step estimate was requested outside its admissible regime."""


class InfeasibleConfig(ValueError):
    """No positive timestep satisfies a required, k-independent condition."""


@dataclass(frozen=True)
class Check:
    """One inequality ``value <= threshold`` with its measured slack."""

    name: str
    value: float
    threshold: float

    @property
    def ok(self) -> bool:
        v, t = self.value, self.threshold
        if v <= t:
            return True
        return (v - t) <= CHECK_REL_TOL * max(abs(v), abs(t))

    @property
    def slack(self) -> float:
        return self.threshold - self.value

    @property
    def rel_slack(self) -> float:
        if math.isinf(self.threshold):
            return math.inf
        denom = max(abs(self.threshold), abs(self.value), 1e-300)
        return self.slack / denom


# -- constants ----------------------------------------------------------------


@dataclass(frozen=True)
class ConstantsSet:
    """Domain constants.  c0 = 1 is exact on (0, 2pi)^3 for zero-mean fields;
    the others are placeholders to be overridden or estimated empirically.

    c3 is tied to c2 and c0 by c3 = sqrt(c2/c0); leave it as None to have it
    derived, or pass a consistent value.
    """

    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c4: float = 1.0
    c5: float = 1.0
    c3: Optional[float] = None

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c4", "c5"):
            val = getattr(self, name)
            if not (val > 0.0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        derived = math.sqrt(self.c2 / self.c0)
        if self.c3 is None:
            object.__setattr__(self, "c3", derived)
        elif abs(self.c3 * self.c3 * self.c0 - self.c2) > 1e-9 * self.c2:
            raise ValueError(
                f"c3={self.c3} is inconsistent with sqrt(c2/c0)={derived}; "
                "pass c3=None to derive it"
            )


# -- data/forcing bounds -------------------------------------------------------


@dataclass(frozen=True)
class BoundsReport:
    """A-priori ceilings computed from the initial data and the forcing.

    ``f_hm1_sup_sq`` and ``f_l2_sup_sq`` are sups over the evaluated forcing
    times of |f(t)|^2 in H^-1 and L^2.  K_init is the gradient budget
    |grad u0|^2 + (10 c0/nu) |f|^2 entering the per-step lemma hypotheses.
    F_short and F_full are the two (different) shifts used by the short-time
    arguments of the two schemes; they are never interchangeable.
    """

    u0_l2_sq: float
    u0_h1_sq: float
    f_hm1_sup_sq: float
    f_l2_sup_sq: float
    K0: float
    K1: float
    K0_tilde: float
    K1_tilde: float
    K_init: float
    F_short: float
    F_full: float


def compute_bounds(
    u0_l2_sq: float,
    u0_h1_sq: float,
    f_hm1_sup_sq: float,
    f_l2_sup_sq: float,
    nu: float,
    consts: ConstantsSet,
) -> BoundsReport:
    c = consts
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    for name, val in (
        ("u0_l2_sq", u0_l2_sq),
        ("u0_h1_sq", u0_h1_sq),
        ("f_hm1_sup_sq", f_hm1_sup_sq),
        ("f_l2_sup_sq", f_l2_sup_sq),
    ):
        if val < 0.0 or not math.isfinite(val):
            raise ValueError(f"{name} must be finite and nonnegative, got {val}")
    nu2 = nu * nu
    return BoundsReport(
        u0_l2_sq=u0_l2_sq,
        u0_h1_sq=u0_h1_sq,
        f_hm1_sup_sq=f_hm1_sup_sq,
        f_l2_sup_sq=f_l2_sup_sq,
        K0=u0_l2_sq + (c.c0 / nu2) * f_hm1_sup_sq,
        K1=u0_h1_sq + (2.0 * c.c0 / nu2) * f_l2_sup_sq,
        K0_tilde=u0_l2_sq + (2.0 * c.c0 / nu2) * f_hm1_sup_sq,
        K1_tilde=u0_h1_sq + (10.0 * c.c0 / nu2) * f_l2_sup_sq,
        K_init=u0_h1_sq + (10.0 * c.c0 / nu) * f_l2_sup_sq,
        F_short=(nu2 * f_l2_sup_sq / c.c4) ** (1.0 / 3.0),
        F_full=(2.0 * nu2 * f_l2_sup_sq / c.c4) ** (1.0 / 3.0),
    )


SMALLNESS_VARIANTS = ("continuous_K0K1", "continuous_K1", "semi", "full")


def smallness_check(
    bounds: BoundsReport, consts: ConstantsSet, nu: float, k: float, variant: str
) -> Check:
    """Evaluate one of the small-data conditions as a Check with slack."""
    b, c = bounds, consts
    nu2 = nu * nu
    if variant == "continuous_K0K1":
        return Check("K0K1", b.K0 * b.K1, c.c2 * nu2 * nu2)
    if variant == "continuous_K1":
        return Check("K1K1", b.K1, c.c3 * nu2)
    if variant == "semi":
        value = (b.K0 + k * b.f_hm1_sup_sq / nu) * (b.K1 + 2.0 * k * b.f_l2_sup_sq / nu)
        return Check("K0K1s", value, c.c2 * nu2 * nu2)
    if variant == "full":
        return Check("hypf", b.K1, nu2 / (2.0 * math.sqrt(c.c0 * c.c4)))
    raise ValueError(f"variant must be one of {SMALLNESS_VARIANTS}, got {variant!r}")


# -- the step cubic -------------------------------------------------------------


@dataclass(frozen=True)
class CubicAnalysis:
    """Structure of G(y; x) = cubic_coeff y^3 - linear_coeff y + x.

    The smallest positive root y1 is the per-step ceiling for |grad u_n|^2
    in the fully implicit scheme.  Positive roots exist iff G(y_plus) < 0,
    i.e. iff x < x_threshold; y0 < 0 <= y1 <= y_plus <= y2 when they do.
    ``a`` and ``y_star`` are the auxiliary quantities of the explicit
    one-step estimate and of the small-solution recurrence.
    """

    x: float
    cubic_coeff: float
    linear_coeff: float
    y_plus: float
    y_minus: float
    x_threshold: float
    has_positive_roots: bool
    degenerate: bool
    y0: Optional[float]
    y1: Optional[float]
    y2: Optional[float]
    a: float
    y_star: float

    def g(self, y: float) -> float:
        return (self.cubic_coeff * y * y - self.linear_coeff) * y + self.x


def _refine_root(A: float, B: float, x: float, lo: float, hi: float) -> float:
    """Root of A y^3 - B y + x on a bracket where it changes sign once.

    Bisection-safeguarded Newton; the brackets supplied by cubic_analyze are
    monotone intervals of the cubic, so convergence is guaranteed.
    """

    def g(y: float) -> float:
        return (A * y * y - B) * y + x

    def dg(y: float) -> float:
        return 3.0 * A * y * y - B

    lo0, hi0 = min(lo, hi), max(lo, hi)

    def polish(y: float) -> float:
        # one extra Newton correction pushes the residual from the step-size
        # scale (~1e-13 |y| |G'|) down to the evaluation floor of G itself;
        # validated against the original bracket, since the working bracket
        # has shrunk to the width of the final step by now
        d = dg(y)
        if d != 0.0:
            y2 = y - g(y) / d
            if lo0 <= y2 <= hi0:
                return y2
        return y

    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    y = 0.5 * (lo + hi)
    for _ in range(200):
        gy = g(y)
        if gy == 0.0:
            return y
        if (gy > 0.0) == (glo > 0.0):
            lo, glo = y, gy
        else:
            hi, ghi = y, gy
        d = dg(y)
        y_new = y - gy / d if d != 0.0 else 0.5 * (lo + hi)
        if not (min(lo, hi) < y_new < max(lo, hi)):
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 1e-13 * max(abs(y_new), 1e-300):
            return polish(y_new)
        y = y_new
    return polish(y)


def cubic_analyze(
    grad_prev_sq: float, f_l2_sup_sq: float, nu: float, k: float, consts: ConstantsSet
) -> CubicAnalysis:
    """Coefficients, extrema and roots of the step cubic.

    x = grad_prev_sq + 2 k f_l2_sup_sq / nu.  Roots are bracketed
    analytically (the cubic is monotone between its extrema) and polished
    by Newton to 1e-13 relative.
    """
    if k <= 0.0 or nu <= 0.0:
        raise ValueError("k and nu must be positive")
    if grad_prev_sq < 0.0 or f_l2_sup_sq < 0.0:
        raise ValueError("squared norms must be nonnegative")
    c = consts
    x = grad_prev_sq + 2.0 * k * f_l2_sup_sq / nu
    A = c.c4 * k / nu**3
    B = 1.0 + nu * k / (2.0 * c.c0)
    y_plus = math.sqrt(B / (3.0 * A))
    x_threshold = (2.0 / 3.0) * B * y_plus
    a = 2.0 * c.c4 * x * x / nu**3
    y_star = x / (1.0 + nu * k / (4.0 * c.c0))

    common = dict(
        x=x,
        cubic_coeff=A,
        linear_coeff=B,
        y_plus=y_plus,
        y_minus=-y_plus,
        x_threshold=x_threshold,
        a=a,
        y_star=y_star,
    )
    if x == 0.0:
        ymax = math.sqrt(B / A)
        return CubicAnalysis(
            has_positive_roots=True, degenerate=True, y0=-ymax, y1=0.0, y2=ymax, **common
        )
    if x >= x_threshold:
        return CubicAnalysis(
            has_positive_roots=False, degenerate=False, y0=None, y1=None, y2=None, **common
        )
    y2_upper = math.sqrt(B / A) + x / B
    y1 = _refine_root(A, B, x, 0.0, y_plus)
    y2 = _refine_root(A, B, x, y_plus, y2_upper)
    y0 = _refine_root(A, B, x, -y2_upper, -y_plus)
    return CubicAnalysis(
        has_positive_roots=True, degenerate=False, y0=y0, y1=y1, y2=y2, **common
    )


def one_step_explicit_bound(
    grad_prev_sq: float, f_l2_sup_sq: float, nu: float, k: float, c4: float
) -> float:
    """Closed-form ceiling (1 + a k) x for the next squared gradient norm.

    Valid only while a k <= 2^(1/3) - 1 with a = 2 c4 x^2 / nu^3; outside
    that regime RestrictionViolated is raised.
    """
    x = grad_prev_sq + 2.0 * k * f_l2_sup_sq / nu
    a = 2.0 * c4 * x * x / nu**3
    if a * k > CBRT2 - 1.0:
        raise RestrictionViolated(
            f"a*k = {a * k:.6g} exceeds 2^(1/3) - 1 = {CBRT2 - 1.0:.6g}"
        )
    return (1.0 + a * k) * x


# -- timestep restrictions -------------------------------------------------------


@dataclass(frozen=True)
class DtConstraint:
    tag: str
    formula: str
    k_max: float
    _value_at: Callable[[float], float]
    _threshold_at: Callable[[float], float]

    def check_at(self, k: float) -> Check:
        return Check(self.tag, self._value_at(k), self._threshold_at(k))


@dataclass(frozen=True)
class DtReport:
    variant: str
    constraints: tuple[DtConstraint, ...]
    k_max: float
    binding: str  # tag of the minimising constraint, or "none" if unconstrained

    def checks_at(self, k: float) -> list[Check]:
        return [c.check_at(k) for c in self.constraints]


def _k_bound_constraint(tag: str, formula: str, k_max: float) -> DtConstraint:
    return DtConstraint(tag, formula, k_max, lambda k: k, lambda k: k_max)


def _sqrt_threshold_constraint(
    tag: str, formula: str, lhs: float, nu: float, c4: float, denom_coef: float
) -> DtConstraint:
    """LHS <= sqrt(nu^3 / (denom_coef c4 k)); k_max from inverting the sqrt."""
    k_max = math.inf if lhs == 0.0 else nu**3 / (denom_coef * c4 * lhs * lhs)
    return DtConstraint(
        tag,
        formula,
        k_max,
        lambda k: lhs,
        lambda k: math.sqrt(nu**3 / (denom_coef * c4 * k)),
    )


def dt_restrictions(
    bounds: BoundsReport, consts: ConstantsSet, nu: float, variant: str
) -> DtReport:
    """Largest admissible timestep for one monitor variant.

    Returns every individual constraint with its own k_max; the overall
    k_max is their minimum and ``binding`` names the active one.  Raises
    InfeasibleConfig when a k-independent condition already fails.
    """
    b, c = bounds, consts
    nu2 = nu * nu
    cons: list[DtConstraint] = []

    if variant == "semi_short":
        denom = 2.0 * c.c4 * (2.0 * b.u0_h1_sq + b.F_short) ** 2
        k_max = math.inf if denom == 0.0 else nu**3 / denom
        cons.append(
            _k_bound_constraint("dtf5", "k <= nu^3 / (2 c4 (2|grad u0|^2 + F)^2)", k_max)
        )
    elif variant == "semi_small":
        quad = 2.0 * b.f_hm1_sup_sq * b.f_l2_sup_sq / nu2
        lin = 2.0 * b.K0 * b.f_l2_sup_sq / nu + b.K1 * b.f_hm1_sup_sq / nu
        const = b.K0 * b.K1 - c.c2 * nu2 * nu2
        if const > 0.0:
            raise InfeasibleConfig(
                f"K0K1s: K0*K1 = {b.K0 * b.K1:.6g} already exceeds "
                f"c2 nu^4 = {c.c2 * nu2 * nu2:.6g} at k = 0"
            )
        if quad == 0.0 and lin == 0.0:
            k_max = math.inf
        elif quad == 0.0:
            k_max = -const / lin
        else:
            k_max = (-lin + math.sqrt(lin * lin - 4.0 * quad * const)) / (2.0 * quad)
        cons.append(
            DtConstraint(
                "K0K1s",
                "(K0 + k|f|_Hm1^2/nu)(K1 + 2k|f|_L2^2/nu) <= c2 nu^4",
                k_max,
                lambda k: (b.K0 + k * b.f_hm1_sup_sq / nu)
                * (b.K1 + 2.0 * k * b.f_l2_sup_sq / nu),
                lambda k: c.c2 * nu2 * nu2,
            )
        )
    elif variant == "full_short":
        k_tilde = 2.0 * b.u0_h1_sq + 2.0 * b.F_short + (10.0 * c.c0 / nu) * b.f_l2_sup_sq
        cons.append(
            _sqrt_threshold_constraint(
                "dtfx1", "Ktilde <= (nu^3/(12 c4 k))^(1/2)", k_tilde, nu, c.c4, 12.0
            )
        )
        lhs_y = (1.0 + (c.c5 / nu2**2) * b.K0_tilde * k_tilde) * k_tilde + b.f_hm1_sup_sq / nu2
        cons.append(
            _sqrt_threshold_constraint(
                "dtfy1",
                "(1 + c5 K0tilde Ktilde/nu^4) Ktilde + |f|_Hm1^2/nu^2 <= (nu^3/(12 c4 k))^(1/2)",
                lhs_y,
                nu,
                c.c4,
                12.0,
            )
        )
        if b.f_l2_sup_sq == 0.0:
            k4 = math.inf
        else:
            k4 = nu ** (5.0 / 3.0) / (2.0 * c.c4 ** (1.0 / 3.0) * b.f_l2_sup_sq ** (2.0 / 3.0))
        cons.append(
            _k_bound_constraint("dtf4", "k <= nu^(5/3) / (2 c4^(1/3) |f|_L2^(4/3))", k4)
        )
        bracket = 2.0 * b.u0_h1_sq + (1.0 + CBRT2) * nu ** (2.0 / 3.0) * b.f_l2_sup_sq ** (
            1.0 / 3.0
        ) / c.c4 ** (1.0 / 3.0)
        kz_max = (
            math.inf
            if bracket == 0.0
            else (CBRT2 - 1.0) * nu**3 / (2.0 * c.c4 * bracket * bracket)
        )
        cons.append(
            DtConstraint(
                "dtfz",
                "(2|grad u0|^2 + (1+2^(1/3)) nu^(2/3) |f|_L2^(2/3)/c4^(1/3))^2"
                " <= (2^(1/3)-1) nu^3/(2 c4 k)",
                kz_max,
                lambda k: bracket * bracket,
                lambda k: (CBRT2 - 1.0) * nu**3 / (2.0 * c.c4 * k),
            )
        )
    elif variant == "full_small":
        hypf = smallness_check(b, c, nu, 0.0, "full")
        if not hypf.ok:
            raise InfeasibleConfig(
                f"hypf: |grad u0|^2 + 2 c0 |f|_L2^2/nu^2 = {hypf.value:.6g} exceeds "
                f"nu^2/(2 sqrt(c0 c4)) = {hypf.threshold:.6g}"
            )
        cons.append(
            DtConstraint(
                "hypf",
                "|grad u0|^2 + 2 c0 |f|_L2^2/nu^2 <= nu^2/(2 sqrt(c0 c4))",
                math.inf,
                lambda k: hypf.value,
                lambda k: hypf.threshold,
            )
        )
        cons.append(_k_bound_constraint("dtf0", "k <= c0/nu", c.c0 / nu))
        cons.append(
            _sqrt_threshold_constraint(
                "dtfa", "K1tilde <= (nu^3/(12 c4 k))^(1/2)", b.K1_tilde, nu, c.c4, 12.0
            )
        )
        lhs_b = (
            1.0 + (c.c5 / nu2**2) * b.K0_tilde * b.K1_tilde
        ) * b.K1_tilde + b.f_hm1_sup_sq / nu2
        cons.append(
            _sqrt_threshold_constraint(
                "dtfb",
                "(1 + c5 K0tilde K1tilde/nu^4) K1tilde + |f|_Hm1^2/nu^2"
                " <= (nu^3/(12 c4 k))^(1/2)",
                lhs_b,
                nu,
                c.c4,
                12.0,
            )
        )
    else:
        raise ValueError(
            "variant must be one of ('semi_small', 'semi_short', 'full_small', "
            f"'full_short'), got {variant!r}"
        )

    k_max = min(con.k_max for con in cons)
    if math.isinf(k_max):
        binding = "none"
    else:
        binding = min(cons, key=lambda con: con.k_max).tag
    return DtReport(variant=variant, constraints=tuple(cons), k_max=k_max, binding=binding)


# -- Gronwall and blow-up comparison ---------------------------------------------


def gronwall_envelope(b: float, x0: float, r_max: float, n: int) -> float:
    """Closed-form majorant for recursions (1+b) x_j <= x_{j-1} + r_{j-1}:

        x_n <= (1+b)^{-n} x0 + ((1+b)/b) max_j r_j.
    """
    if b <= 0.0:
        raise ValueError("b must be positive")
    if x0 < 0.0 or r_max < 0.0:
        raise ValueError("x0 and r_max must be nonnegative")
    if n < 0:
        raise ValueError("n must be nonnegative")
    return (1.0 + b) ** (-n) * x0 + (1.0 + b) / b * r_max


def comparison_blowup_time(z0: float, nu: float, c4: float) -> float:
    """Blow-up time nu^3 / (2 c4 z0^2) of the cubic growth envelope."""
    if z0 <= 0.0:
        return math.inf
    return nu**3 / (2.0 * c4 * z0 * z0)


def comparison_ode(z0: float, nu: float, c4: float, t: float) -> float:
    """z(t)^2 = z0^2 / (1 - 2 t c4 z0^2 / nu^3), the exact solution of
    dz/dt = (c4/nu^3) z^3.

    The Euler comparison sequence (comparison_seq) grows with the doubled
    coefficient 2 c4/nu^3; its matching continuous ceiling is therefore
    comparison_ode(z0, nu, 2*c4, t).
    """
    if z0 <= 0.0:
        raise ValueError("z0 must be positive")
    t_blow = comparison_blowup_time(z0, nu, c4)
    if t >= t_blow:
        raise BlowUpError(f"t = {t:.6g} is at or beyond the blow-up time {t_blow:.6g}")
    return z0 * z0 / (1.0 - 2.0 * t * c4 * z0 * z0 / nu**3)


def comparison_seq(z0: float, nu: float, c4: float, k: float, n: int) -> np.ndarray:
    """Euler iterates zeta_j = zeta_{j-1} + k (2 c4/nu^3) zeta_{j-1}^3,
    j = 0..n.  Each iterate is dominated by the matching continuous
    solution evaluated at t_j = j k, as long as that solution exists.
    """
    if z0 <= 0.0:
        raise ValueError("z0 must be positive")
    if k <= 0.0:
        raise ValueError("k must be positive")
    if n < 0:
        raise ValueError("n must be nonnegative")
    rate = 2.0 * c4 / nu**3
    out = np.empty(n + 1)
    out[0] = z0
    z = z0
    for j in range(1, n + 1):
        z = z + k * rate * z**3
        out[j] = z
    return out


# -- horizons ---------------------------------------------------------------------


@dataclass(frozen=True)
class HorizonReport:
    """Guaranteed short-time windows and the comparison blow-up time.

    All times follow from z0 = |grad u0|^2 + F; the fully implicit horizon
    uses its own (larger) F, so it is not comparable to t_star_semi.
    """

    t_star_continuous: float
    t_star_semi: float
    t_f_star: float
    blowup_time: float


def compute_horizons(bounds: BoundsReport, consts: ConstantsSet, nu: float) -> HorizonReport:
    c4 = consts.c4
    z0_short = bounds.u0_h1_sq + bounds.F_short
    z0_full = bounds.u0_h1_sq + bounds.F_full

    def _inv(coef: float, z: float) -> float:
        return math.inf if z == 0.0 else nu**3 / (coef * c4 * z * z)

    return HorizonReport(
        t_star_continuous=_inv(4.0, z0_short),
        t_star_semi=_inv(8.0, z0_short),
        t_f_star=_inv(8.0, z0_full),
        blowup_time=_inv(2.0, z0_short),
    )


def horizon_for_variant(horizons: HorizonReport, variant: str) -> float:
    if variant == "semi_short":
        return horizons.t_star_semi
    if variant == "full_short":
        return horizons.t_f_star
    return math.inf


# -- per-step verdicts ---------------------------------------------------------------


@dataclass(frozen=True)
class StepVerdict:
    """Every monitored inequality for one step, with measured slack.

    A false entry is data, not an error: lemma hypotheses can fail while
    the step still succeeds, and a failed conclusion is exactly what the
    monitors exist to detect.  ``dtf2_measured``/``dtf2_bound`` evaluate the
    branch-exclusion condition once with the measured |u_n|^2 and once with
    its a-priori ceiling.
    """

    l2_recurrence: Check
    h1_recurrence: Check
    smallness: Check
    dtfx: Check
    dtfy: Check
    y1_membership: Check
    linf_recurrence: Check
    bound: Check
    dtf2_measured: Check
    dtf2_bound: Check
    cubic: CubicAnalysis

    @property
    def lemma_hypotheses_ok(self) -> bool:
        return self.dtfx.ok and self.dtfy.ok

    @property
    def core_checks(self) -> tuple[Check, ...]:
        return (
            self.l2_recurrence,
            self.h1_recurrence,
            self.smallness,
            self.dtfx,
            self.dtfy,
            self.y1_membership,
            self.linf_recurrence,
            self.bound,
        )

    @property
    def min_rel_slack(self) -> float:
        return min(chk.rel_slack for chk in self.core_checks)

    @property
    def all_ok(self) -> bool:
        return all(chk.ok for chk in self.core_checks)


def _bound_check(
    variant: str, scheme: str, h1_new: float, k: float, nu: float, bounds: BoundsReport
) -> Check:
    if variant == "none":
        variant = "semi_small" if scheme == SEMI_IMPLICIT else "full_small"
    if variant == "semi_small":
        return Check(
            "bound_semi_small", h1_new, bounds.K1 + (2.0 * k / nu) * bounds.f_l2_sup_sq
        )
    if variant == "full_small":
        return Check("bound_full_small", h1_new, bounds.K1_tilde)
    if variant in ("semi_short", "full_short"):
        return Check(
            f"bound_{variant}", h1_new, 2.0 * bounds.u0_h1_sq + bounds.F_short
        )
    raise ValueError(f"unknown monitor variant {variant!r}")


def step_verdict(
    prev,
    new,
    f_n,
    cfg: SchemeConfig,
    consts: ConstantsSet,
    bounds: BoundsReport,
    variant: str = "none",
) -> StepVerdict:
    """Evaluate every per-step inequality from the norm bundles of u_{n-1},
    u_n and f_n.  ``variant`` selects which guaranteed ceiling fills
    ``bound``; all other checks are variant-independent observations.
    """
    if variant not in MONITOR_VARIANTS:
        raise ValueError(f"variant must be one of {MONITOR_VARIANTS}, got {variant!r}")
    c = consts
    k, nu = cfg.k, cfg.nu
    nu2 = nu * nu

    l2_rec = Check(
        "l2_recurrence",
        (1.0 + nu * k / c.c0) * new.l2_sq,
        prev.l2_sq + k * f_n.hm1_sq / nu,
    )
    h1_rec = Check(
        "h1_recurrence",
        (1.0 + nu * k / c.c0) * new.h1_sq,
        prev.h1_sq + 2.0 * k * f_n.l2_sq / nu,
    )
    smallness = Check("hyps", prev.l3, nu / (2.0 * c.c1))

    k_prev = prev.h1_sq + (10.0 * c.c0 / nu) * bounds.f_l2_sup_sq
    dtfx = Check("dtfx", k_prev, 0.5 * math.sqrt(nu**3 / (3.0 * c.c4 * k)))
    dtfy = Check(
        "dtfy",
        (1.0 + (c.c5 / nu2**2) * bounds.K0_tilde * k_prev) * k_prev
        + bounds.f_hm1_sup_sq / nu2,
        math.sqrt(nu**3 / (12.0 * c.c4 * k)),
    )

    cubic = cubic_analyze(prev.h1_sq, bounds.f_l2_sup_sq, nu, k, consts)
    if cubic.has_positive_roots:
        y1_mem = Check("y1_membership", new.h1_sq, cubic.y1)
    else:
        # no positive roots: the membership claim has no ceiling to check,
        # so report how far x overshoots the root-existence threshold
        y1_mem = Check("y1_membership", cubic.x, cubic.x_threshold)

    linf_rec = Check(
        "linf_recurrence",
        (1.0 + nu * k / (4.0 * c.c0)) * new.h1_sq,
        prev.h1_sq + 2.0 * k * bounds.f_l2_sup_sq / nu,
    )

    bound = _bound_check(variant, cfg.scheme, new.h1_sq, k, nu, bounds)

    dtf2_thr = math.sqrt(nu**3 / (3.0 * c.c4 * k))
    dtf2_measured = Check(
        "dtf2_measured",
        (2.0 + (2.0 * c.c5 / nu2**2) * new.l2_sq * prev.h1_sq) * prev.h1_sq
        + 2.0 * bounds.f_hm1_sup_sq / nu2,
        dtf2_thr,
    )
    l2_ceiling = bounds.K0 + (k / nu) * bounds.f_hm1_sup_sq
    dtf2_bound = Check(
        "dtf2_bound",
        (2.0 + (2.0 * c.c5 / nu2**2) * l2_ceiling * prev.h1_sq) * prev.h1_sq
        + 2.0 * bounds.f_hm1_sup_sq / nu2,
        dtf2_thr,
    )

    return StepVerdict(
        l2_recurrence=l2_rec,
        h1_recurrence=h1_rec,
        smallness=smallness,
        dtfx=dtfx,
        dtfy=dtfy,
        y1_membership=y1_mem,
        linf_recurrence=linf_rec,
        bound=bound,
        dtf2_measured=dtf2_measured,
        dtf2_bound=dtf2_bound,
        cubic=cubic,
    )


# -- empirical constant estimation ----------------------------------------------------


def estimate_constants(n: int = 12, samples: int = 24, seed: int = 0) -> dict[str, float]:
    """Empirical lower bounds for the domain constants ("estimated >=").

    Maximises the defining ratio of each constant over a batch of random
    divergence-free fields (plus the sharp |k| = 1 shear for c0).  The
    result bounds each admissible constant from below; it is not sharp.
    """
    grid = Grid(n)
    fields = [make_field(grid, Shear())]
    fields += [
        make_field(grid, RandomDivFree(seed=seed + i, slope=-1.0, amplitude=1.0))
        for i in range(samples)
    ]
    c0_est = 0.0
    c1_est = 0.0
    ctilde = 0.0
    for u in fields:
        nb = norms(u)
        if nb.h1_sq > 0.0:
            c0_est = max(c0_est, nb.l2_sq / nb.h1_sq)
        if nb.h2_sq > 0.0:
            c0_est = max(c0_est, nb.h1_sq / nb.h2_sq)
        nl = abs(inner(nonlinear_term(u, u), laplacian(u)))
        if nl > 0.0:
            c1_est = max(c1_est, 2.0 * nl / (nb.l3 * nb.h2_sq))
            ctilde = max(ctilde, nl / (nb.h1_sq**0.75 * nb.h2_sq**0.75))
    return {"c0": c0_est, "c1": c1_est, "c4": 27.0 * ctilde**4 / 16.0}
