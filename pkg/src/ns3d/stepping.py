"""One-step solvers for the two implicit Euler discretisations.

Semi-implicit step:   (u_n - u_{n-1})/k + P(u_{n-1}.grad u_n) = nu Lap u_n + f_n
Fully implicit step:  (u_n - u_{n-1})/k + P(u_n.grad u_n)     = nu Lap u_n + f_n

Both are solved by Picard iteration: the Stokes part (I - nu k Lap) is
inverted exactly mode by mode (division by 1 + nu k |k|^2) and the
advection term is lagged one inner iteration.  The iteration starts from
u_{n-1} and stops when the relative H1 norm of the increment drops below
``fp_tol``.  Failure to contract is reported by raising NonConvergence; it
is never silently accepted, because the stability monitors are only
meaningful for true scheme solutions and a diverging inner loop is the
signal that k is too large.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    VOLUME,
    SpectralField,
    _nonlinear_padded,
    _project_coeffs,
    _require_same_grid,
    inner,
)

SEMI_IMPLICIT = "semi_implicit"
FULLY_IMPLICIT = "fully_implicit"
SCHEMES = (SEMI_IMPLICIT, FULLY_IMPLICIT)


class NonConvergence(RuntimeError):
    """The inner fixed-point iteration failed to reach fp_tol.

    Indicates the timestep is too large for the inner contraction; the
    caller should reduce k.
    """

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"inner iteration did not converge after {iterations} iterations "
            f"(last relative H1 increment {residual:.3e}); reduce the timestep"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SchemeConfig:
    k: float
    nu: float
    scheme: str = SEMI_IMPLICIT
    fp_tol: float = 1e-12
    fp_max_iter: int = 100
    deterministic: bool = True

    def __post_init__(self):
        if not (self.k > 0.0 and np.isfinite(self.k)):
            raise ValueError(f"timestep k must be positive and finite, got {self.k}")
        if not (self.nu > 0.0 and np.isfinite(self.nu)):
            raise ValueError(f"viscosity nu must be positive and finite, got {self.nu}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.fp_tol > 0.0:
            raise ValueError("fp_tol must be positive")
        if self.fp_max_iter < 1:
            raise ValueError("fp_max_iter must be at least 1")


@dataclass(frozen=True)
class StepResult:
    u_new: SpectralField
    fp_iters: int
    fp_residual: float
    energy_identity_residual: float
    increment_h1_sq: float


def _h1_sq(grid, coeffs: np.ndarray) -> float:
    return VOLUME * float(np.sum(grid.k2 * np.sum(np.abs(coeffs) ** 2, axis=0)))


def _l2_sq(coeffs: np.ndarray) -> float:
    return VOLUME * float(np.sum(np.abs(coeffs) ** 2))


def semi_implicit_step(u_prev: SpectralField, f_n: SpectralField, cfg: SchemeConfig) -> StepResult:
    """Advance one step with the advecting velocity lagged to u_{n-1}."""
    if cfg.scheme != SEMI_IMPLICIT:
        raise ValueError(f"config selects scheme {cfg.scheme!r}, not {SEMI_IMPLICIT!r}")
    return _picard_step(u_prev, f_n, cfg, lagged_advection=True)


def fully_implicit_step(u_prev: SpectralField, f_n: SpectralField, cfg: SchemeConfig) -> StepResult:
    """Advance one step with the advection taken fully at the new level."""
    if cfg.scheme != FULLY_IMPLICIT:
        raise ValueError(f"config selects scheme {cfg.scheme!r}, not {FULLY_IMPLICIT!r}")
    return _picard_step(u_prev, f_n, cfg, lagged_advection=False)


def step(u_prev: SpectralField, f_n: SpectralField, cfg: SchemeConfig) -> StepResult:
    if cfg.scheme == SEMI_IMPLICIT:
        return semi_implicit_step(u_prev, f_n, cfg)
    return fully_implicit_step(u_prev, f_n, cfg)


def _picard_step(
    u_prev: SpectralField, f_n: SpectralField, cfg: SchemeConfig, lagged_advection: bool
) -> StepResult:
    _require_same_grid(u_prev, f_n)
    grid = u_prev.grid
    k, nu = cfg.k, cfg.nu
    stokes = 1.0 + nu * k * grid.k2
    base = u_prev.coeffs + k * f_n.coeffs

    u_prev_phys = u_prev.physical(padded=True) if lagged_advection else None

    u_cur = u_prev
    rel = np.inf
    iters = 0
    # a diverging iterate may overflow before it is detected; that path is
    # handled explicitly, so the numpy warnings are noise here
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(1, cfg.fp_max_iter + 1):
            if lagged_advection:
                adv = _nonlinear_padded(grid, u_prev_phys, u_cur)
            else:
                adv = _nonlinear_padded(grid, u_cur.physical(padded=True), u_cur)
            rhs = _project_coeffs(grid, base - k * adv.coeffs)
            new_coeffs = rhs / stokes
            inc_sq = _h1_sq(grid, new_coeffs - u_cur.coeffs)
            cur_sq = _h1_sq(grid, new_coeffs)
            u_cur = SpectralField(grid, new_coeffs)
            iters = m
            if not (np.isfinite(inc_sq) and np.isfinite(cur_sq)):
                # the iterate blew up; no point running out the iteration cap
                raise NonConvergence(iters, float("nan"))
            if cur_sq > 0.0:
                rel = float(np.sqrt(inc_sq / cur_sq))
            else:
                rel = 0.0 if inc_sq == 0.0 else np.inf
            if rel <= cfg.fp_tol:
                break
        else:
            raise NonConvergence(iters, rel)

    assert u_cur.invariants_hold()
    res = energy_identity_residual(u_prev, u_cur, f_n, cfg)
    inc_h1 = _h1_sq(grid, u_cur.coeffs - u_prev.coeffs)
    return StepResult(
        u_new=u_cur,
        fp_iters=iters,
        fp_residual=rel,
        energy_identity_residual=res,
        increment_h1_sq=inc_h1,
    )


def energy_identity_residual(
    u_prev: SpectralField, u_new: SpectralField, f_n: SpectralField, cfg: SchemeConfig
) -> float:
    """Relative defect of the per-step kinetic energy balance.

    For an exact step of either scheme,

        |u_n|^2 + |u_n - u_{n-1}|^2 + 2 nu k |grad u_n|^2
            = |u_{n-1}|^2 + 2 k (f_n, u_n),

    because the advection term is L2-orthogonal to u_n.  The returned value
    is |lhs - rhs| / max(|u_{n-1}|^2, eps).
    """
    grid = u_prev.grid
    l2_new = _l2_sq(u_new.coeffs)
    l2_prev = _l2_sq(u_prev.coeffs)
    l2_diff = _l2_sq(u_new.coeffs - u_prev.coeffs)
    h1_new = _h1_sq(grid, u_new.coeffs)
    lhs = l2_new + l2_diff + 2.0 * cfg.nu * cfg.k * h1_new
    rhs = l2_prev + 2.0 * cfg.k * inner(f_n, u_new)
    return abs(lhs - rhs) / max(l2_prev, 1e-30)
