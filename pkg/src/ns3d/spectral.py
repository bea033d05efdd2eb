"""Spectral velocity fields on the periodic box (0, 2pi)^3.

A field is stored by its Fourier coefficients, u(x) = sum_k uhat_k e^{i k.x},
over integer wavevectors k whose components all lie in [-(n/2-1), n/2-1].
The Nyquist planes are dropped so the mode set is symmetric under k -> -k,
which keeps derivatives exactly Hermitian.  Coefficients live in numpy's
fftn layout in an array of shape (3, n, n, n); entries outside the retained
set are never populated.

Three invariants hold for every field produced here and are preserved by
every operation in this module:

* Hermitian symmetry  uhat_{-k} = conj(uhat_k)   (the field is real),
* zero mean           uhat_0 = 0,
* zero divergence     k . uhat_k = 0.

Quadratic products are evaluated by collocation on a grid padded to
m = 3n/2 points per axis.  For two truncated fields the retained modes of
their product are then alias-free, so the Galerkin identity
(P(u.grad v), v) = 0 holds to roundoff.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence, Union

import numpy as np

TWO_PI = 2.0 * np.pi
VOLUME = TWO_PI**3

FIELD_MAGIC = b"NSE3DFLD"
FIELD_VERSION = 1


class GridMismatchError(ValueError):
    """Two fields from different grids were combined."""


class FieldFileError(ValueError):
    """A field snapshot file is malformed or violates field invariants."""


@dataclass(frozen=True)
class Grid:
    """Mode set and collocation sizes for one resolution.

    ``n`` is the nominal resolution per axis (even, >= 4); retained modes
    have every component of k in [-(n/2-1), n/2-1].  ``m`` is the padded
    resolution used for alias-free quadratic products: 3n/2, rounded up to
    an even integer.
    """

    n: int

    def __post_init__(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"grid resolution must be an even integer >= 4, got {self.n}")

    @property
    def kmax(self) -> int:
        return self.n // 2 - 1

    @cached_property
    def m(self) -> int:
        m = (3 * self.n) // 2
        return m if m % 2 == 0 else m + 1

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavevectors, shape (3, n, n, n), fftn layout."""
        k1 = np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)
        kx, ky, kz = np.meshgrid(k1, k1, k1, indexing="ij")
        arr = np.stack([kx, ky, kz])
        arr.setflags(write=False)
        return arr

    @cached_property
    def kf(self) -> np.ndarray:
        arr = self.k.astype(np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 as floats, shape (n, n, n)."""
        arr = np.sum(self.kf * self.kf, axis=0)
        arr.setflags(write=False)
        return arr

    @cached_property
    def k2_safe(self) -> np.ndarray:
        """|k|^2 with the zero mode replaced by 1 (safe divisor)."""
        arr = self.k2.copy()
        arr[0, 0, 0] = 1.0
        arr.setflags(write=False)
        return arr

    @cached_property
    def mode_mask(self) -> np.ndarray:
        """True on retained modes (all |k_i| <= kmax)."""
        absk = np.abs(self.k)
        arr = (absk <= self.kmax).all(axis=0)
        arr.setflags(write=False)
        return arr

    @cached_property
    def _pad_map(self) -> tuple[np.ndarray, np.ndarray]:
        # Index map between the n-layout and the m-layout for retained modes.
        src = np.concatenate([np.arange(0, self.kmax + 1), np.arange(self.n - self.kmax, self.n)])
        dst = np.concatenate([np.arange(0, self.kmax + 1), np.arange(self.m - self.kmax, self.m)])
        return src, dst

    @cached_property
    def _k_pad_half(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # broadcastable wavenumbers for the padded half-spectrum layout
        k1 = np.fft.fftfreq(self.m, 1.0 / self.m)
        kz = np.arange(self.m // 2 + 1, dtype=np.float64)
        return (
            k1.reshape(1, self.m, 1, 1),
            k1.reshape(1, 1, self.m, 1),
            kz.reshape(1, 1, 1, -1),
        )


def _conj_sym(a: np.ndarray) -> np.ndarray:
    """conj(a) evaluated at -k, in fftn layout (axes 1..3 are spatial)."""
    return np.conj(np.roll(a[:, ::-1, ::-1, ::-1], 1, axis=(1, 2, 3)))


@dataclass(frozen=True)
class SpectralField:
    """Immutable truncated, zero-mean, divergence-free vector field."""

    grid: Grid
    coeffs: np.ndarray  # (3, n, n, n) complex128

    def __post_init__(self):
        n = self.grid.n
        if self.coeffs.shape != (3, n, n, n) or self.coeffs.dtype != np.complex128:
            raise ValueError(
                f"coefficients must be complex128 of shape (3, {n}, {n}, {n}), "
                f"got {self.coeffs.dtype} {self.coeffs.shape}"
            )
        self.coeffs.setflags(write=False)

    # -- linear algebra on fields ------------------------------------------

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _require_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _require_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    # -- evaluation ---------------------------------------------------------

    def physical(self, padded: bool = False) -> np.ndarray:
        """Collocation values, shape (3, N, N, N) with N = n or the padded m."""
        if padded:
            half = _embed_padded_half(self.grid, self.coeffs)
            mm = self.grid.m
            return np.fft.irfftn(half, s=(mm, mm, mm), axes=(1, 2, 3)) * mm**3
        return np.fft.ifftn(self.coeffs, axes=(1, 2, 3)).real * self.grid.n**3

    def invariants_hold(self, tol: float = 1e-10, scale: float = 0.0) -> bool:
        try:
            self.check_invariants(tol, scale)
        except ValueError:
            return False
        return True

    def check_invariants(self, tol: float = 1e-10, scale: float = 0.0) -> None:
        """Raise ValueError if symmetry, mean, divergence or truncation is off.

        ``scale`` sets the reference magnitude for the roundoff tolerances;
        operations that cancel large terms (e.g. projecting away a pure
        gradient) pass their pre-cancellation scale, since the residue is
        roundoff of the inputs, not of the tiny output.
        """
        c = self.coeffs
        scale = max(scale, float(np.max(np.abs(c))))
        if scale == 0.0:
            return
        if np.any(c[:, ~self.grid.mode_mask] != 0):
            raise ValueError("coefficients present outside the retained mode set")
        if abs(c[0, 0, 0, 0]) + abs(c[1, 0, 0, 0]) + abs(c[2, 0, 0, 0]) > tol * scale:
            raise ValueError("field has a nonzero mean")
        herm = float(np.max(np.abs(c - _conj_sym(c))))
        if herm > tol * scale:
            raise ValueError(f"Hermitian symmetry violated (residual {herm:.3e})")
        div = float(np.max(np.abs(np.sum(self.grid.kf * c, axis=0))))
        if div > tol * scale * self.grid.n:
            raise ValueError(f"field is not divergence free (residual {div:.3e})")


def _require_same_grid(u: SpectralField, v: SpectralField) -> None:
    if u.grid != v.grid:
        raise GridMismatchError(f"grids differ: n={u.grid.n} vs n={v.grid.n}")


def _embed_padded_half(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Retained modes with kz >= 0 placed into the padded half-spectrum
    layout used by rfftn/irfftn; the kz < 0 content is implied by Hermitian
    symmetry."""
    src, dst = grid._pad_map
    out = np.zeros((3, grid.m, grid.m, grid.m // 2 + 1), dtype=np.complex128)
    comp = np.arange(3)
    kz = np.arange(grid.kmax + 1)
    out[np.ix_(comp, dst, dst, kz)] = coeffs[np.ix_(comp, src, src, kz)]
    return out


def _extract_truncated_from_half(grid: Grid, half: np.ndarray) -> np.ndarray:
    """Retained modes from a padded half-spectrum back into the full
    n-layout, filling kz < 0 by Hermitian symmetry."""
    src, dst = grid._pad_map
    kmax, n = grid.kmax, grid.n
    comp = np.arange(3)
    out = np.zeros((3, n, n, n), dtype=np.complex128)
    kz = np.arange(kmax + 1)
    out[np.ix_(comp, src, src, kz)] = half[np.ix_(comp, dst, dst, kz)]
    if kmax >= 1:
        pos = out[:, :, :, 1 : kmax + 1]
        neg = np.conj(np.roll(pos[:, ::-1, ::-1, :], 1, axis=(1, 2)))
        out[:, :, :, n - np.arange(1, kmax + 1)] = neg
    return out


def _project_coeffs(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Per-mode orthogonal projection onto divergence-free fields."""
    dot = np.sum(grid.kf * coeffs, axis=0)
    return coeffs - grid.kf * (dot / grid.k2_safe)


def zero_field(grid: Grid) -> SpectralField:
    return SpectralField(grid, np.zeros((3, grid.n, grid.n, grid.n), dtype=np.complex128))


def field_from_modes(
    grid: Grid,
    modes: Iterable[tuple[Sequence[int], Sequence[complex]]],
) -> SpectralField:
    """Build a field from explicit (wavevector, coefficient) pairs.

    The conjugate coefficient is placed at -k automatically, so each +-k
    pair should be listed once.  The result is Hermitian and zero-mean but
    is NOT projected; it may carry divergence (useful for testing the
    projector).
    """
    c = np.zeros((3, grid.n, grid.n, grid.n), dtype=np.complex128)
    for kvec, amp in modes:
        kvec = tuple(int(x) for x in kvec)
        if kvec == (0, 0, 0):
            raise ValueError("the zero mode must stay empty (fields have zero mean)")
        if any(abs(x) > grid.kmax for x in kvec):
            raise ValueError(f"mode {kvec} outside the retained set |k_i| <= {grid.kmax}")
        idx = tuple(x % grid.n for x in kvec)
        nidx = tuple((-x) % grid.n for x in kvec)
        vec = np.array([complex(a) for a in amp], dtype=np.complex128)
        for comp in range(3):
            c[(comp,) + idx] = vec[comp]
            c[(comp,) + nidx] = np.conj(vec[comp])
    return SpectralField(grid, c)


# -- operations -------------------------------------------------------------


def project_leray(field: SpectralField) -> SpectralField:
    """Remove the gradient part of a field, mode by mode.

    uhat -> uhat - k (k.uhat)/|k|^2.  The zero mode is untouched.  The
    projection is idempotent and L2-orthogonal to every gradient field.
    """
    pre_scale = float(np.max(np.abs(field.coeffs)))
    out = SpectralField(field.grid, _project_coeffs(field.grid, field.coeffs))
    assert out.invariants_hold(scale=pre_scale)
    return out


def laplacian(field: SpectralField) -> SpectralField:
    return SpectralField(field.grid, -field.grid.k2 * field.coeffs)


def nonlinear_term(u: SpectralField, v: SpectralField) -> SpectralField:
    """Projected advection P(u.grad v), truncated to the retained modes.

    The product is formed on the padded collocation grid, so the retained
    modes of u.grad v carry no aliasing error and (nonlinear_term(u, v), v)
    vanishes to roundoff for divergence-free u.
    """
    _require_same_grid(u, v)
    return _nonlinear_padded(u.grid, u.physical(padded=True), v)


def _nonlinear_padded(grid: Grid, u_phys_padded: np.ndarray, v: SpectralField) -> SpectralField:
    mm = grid.m
    m3 = mm**3
    vhalf = _embed_padded_half(grid, v.coeffs)
    kpad = grid._k_pad_half
    w = None
    for j in range(3):
        dvj = np.fft.irfftn(1j * kpad[j] * vhalf, s=(mm, mm, mm), axes=(1, 2, 3)) * m3
        term = u_phys_padded[j] * dvj
        w = term if w is None else w + term
    chat = np.fft.rfftn(w, axes=(1, 2, 3)) / m3
    c = _extract_truncated_from_half(grid, chat)
    c[:, 0, 0, 0] = 0.0  # the true mean of u.grad v vanishes for div-free u
    pre_scale = float(np.max(np.abs(c)))
    out = SpectralField(grid, _project_coeffs(grid, c))
    assert out.invariants_hold(scale=pre_scale)
    return out


@dataclass(frozen=True)
class NormBundle:
    """Squared Sobolev norms plus collocation Lp norms of one field.

    The spectral entries carry the (2pi)^3 volume factor, e.g.
    l2_sq = (2pi)^3 sum |uhat_k|^2.  l3 and l6 are quadrature values on the
    padded grid and are exact only up to spectrally small quadrature error.
    """

    l2_sq: float
    h1_sq: float
    h2_sq: float
    hm1_sq: float
    h_half_sq: float
    l3: float
    l6: float


def norms(u: SpectralField) -> NormBundle:
    grid = u.grid
    a2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    k2 = grid.k2
    l2_sq = VOLUME * float(a2.sum())
    h1_sq = VOLUME * float((k2 * a2).sum())
    h2_sq = VOLUME * float((k2 * k2 * a2).sum())
    hm1_sq = VOLUME * float((a2 / grid.k2_safe).sum())
    h_half_sq = VOLUME * float((np.sqrt(k2) * a2).sum())
    phys = u.physical(padded=True)
    mag2 = np.sum(phys * phys, axis=0)
    dv = (TWO_PI / grid.m) ** 3
    l3 = float((mag2**1.5).sum() * dv) ** (1.0 / 3.0)
    l6 = float((mag2**3).sum() * dv) ** (1.0 / 6.0)
    return NormBundle(l2_sq, h1_sq, h2_sq, hm1_sq, h_half_sq, l3, l6)


def inner(u: SpectralField, v: SpectralField) -> float:
    """L2 inner product (u, v) = (2pi)^3 sum uhat_k . conj(vhat_k)."""
    _require_same_grid(u, v)
    return VOLUME * float(np.sum(u.coeffs * np.conj(v.coeffs)).real)


# -- initial data descriptors ------------------------------------------------


@dataclass(frozen=True)
class Zero:
    """The zero field."""


@dataclass(frozen=True)
class Shear:
    """A (sin z, 0, 0): a single-mode shear, steady under self-advection."""

    amplitude: float = 1.0


@dataclass(frozen=True)
class PlanarVortex:
    """A (-sin y, sin x, 0): its self-advection is a pure gradient."""

    amplitude: float = 1.0


@dataclass(frozen=True)
class RandomDivFree:
    """Random solenoidal field, reproducible from the seed.

    Coefficients are drawn per mode for 0 < |k| <= kmax (Euclidean),
    weighted by |k|**slope, projected divergence-free and rescaled so the
    L2 norm equals ``amplitude``.
    """

    seed: int = 0
    slope: float = 0.0
    amplitude: float = 1.0
    kmax: int | None = None


@dataclass(frozen=True)
class FromFile:
    path: str


InitialSpec = Union[Zero, Shear, PlanarVortex, RandomDivFree, FromFile]


def make_field(grid: Grid, spec: InitialSpec) -> SpectralField:
    """Construct a field from a descriptor.  Deterministic per descriptor."""
    if isinstance(spec, Zero):
        return zero_field(grid)
    if isinstance(spec, Shear):
        a = spec.amplitude
        return field_from_modes(grid, [((0, 0, 1), (-0.5j * a, 0.0, 0.0))])
    if isinstance(spec, PlanarVortex):
        a = spec.amplitude
        return field_from_modes(
            grid,
            [((0, 1, 0), (0.5j * a, 0.0, 0.0)), ((1, 0, 0), (0.0, -0.5j * a, 0.0))],
        )
    if isinstance(spec, RandomDivFree):
        return _random_divfree(grid, spec.seed, spec.slope, spec.amplitude, spec.kmax)
    if isinstance(spec, FromFile):
        loaded = load_field(spec.path)
        if loaded.grid != grid:
            raise FieldFileError(
                f"snapshot resolution n={loaded.grid.n} does not match grid n={grid.n}"
            )
        return loaded
    raise TypeError(f"unknown field descriptor {spec!r}")


def _random_divfree(
    grid: Grid, seed: int, slope: float, amplitude: float, kmax: int | None
) -> SpectralField:
    if kmax is None:
        kmax = grid.kmax
    if kmax < 1 or kmax > grid.kmax:
        raise ValueError(f"kmax={kmax} must lie in [1, {grid.kmax}] for n={grid.n}")
    rng = np.random.default_rng(seed)
    shape = (3, grid.n, grid.n, grid.n)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a = 0.5 * (a + _conj_sym(a))
    keep = grid.mode_mask & (grid.k2 > 0.0) & (grid.k2 <= float(kmax) ** 2)
    weight = np.where(keep, grid.k2_safe ** (slope / 2.0), 0.0)
    a *= weight
    a = _project_coeffs(grid, a)
    cur_sq = VOLUME * float(np.sum(np.abs(a) ** 2))
    if cur_sq > 0.0:
        a *= amplitude / np.sqrt(cur_sq)
    else:
        a[:] = 0.0
    out = SpectralField(grid, a)
    assert out.invariants_hold()
    return out


# -- forcing ------------------------------------------------------------------


@dataclass(frozen=True)
class FixedModes:
    """Forcing with explicitly listed coefficients.

    Each entry is ((kx, ky, kz), (cx, cy, cz)); the conjugate mode is added
    automatically.  Coefficients must be orthogonal to k (the forcing is
    divergence free by assumption).
    """

    modes: tuple[tuple[tuple[int, int, int], tuple[complex, complex, complex]], ...]


@dataclass(frozen=True)
class TimeModulated:
    """A constant-in-space forcing scaled by a scalar amplitude a(t).

    ``label`` stands in for the callable in serialized run configurations.
    """

    base: "ForcingSpec"
    amplitude: Callable[[float], float]
    label: str = "custom"


ForcingSpec = Union[Zero, FixedModes, RandomDivFree, TimeModulated]


class ForcingEvaluator:
    """Realizes a forcing descriptor on a grid and evaluates it in time."""

    def __init__(self, spec: ForcingSpec, grid: Grid):
        self.spec = spec
        self.grid = grid
        base_spec = spec.base if isinstance(spec, TimeModulated) else spec
        if isinstance(base_spec, TimeModulated):
            raise ValueError("time-modulated forcing cannot nest another modulation")
        self._modulation = spec.amplitude if isinstance(spec, TimeModulated) else None
        self._base = _forcing_base_field(base_spec, grid)
        self._base_norms = norms(self._base)

    @property
    def constant_in_time(self) -> bool:
        return self._modulation is None

    def at(self, t: float) -> SpectralField:
        if self._modulation is None:
            return self._base
        return float(self._modulation(t)) * self._base

    def sup_norms_sq(self, times: Sequence[float]) -> tuple[float, float]:
        """(sup_t |f(t)|_{H^-1}^2, sup_t |f(t)|_{L^2}^2) over the given times.

        For modulated forcing the supremum is taken over the evaluation
        times only, so it under-approximates a true sup over continuous t.
        """
        if self._modulation is None:
            return self._base_norms.hm1_sq, self._base_norms.l2_sq
        if len(times) == 0:
            return 0.0, 0.0
        amax_sq = max(float(self._modulation(t)) ** 2 for t in times)
        return amax_sq * self._base_norms.hm1_sq, amax_sq * self._base_norms.l2_sq


def _forcing_base_field(spec: ForcingSpec, grid: Grid) -> SpectralField:
    if isinstance(spec, Zero):
        return zero_field(grid)
    if isinstance(spec, RandomDivFree):
        return make_field(grid, spec)
    if isinstance(spec, FixedModes):
        f = field_from_modes(grid, spec.modes)
        div = float(np.max(np.abs(np.sum(grid.kf * f.coeffs, axis=0))))
        scale = float(np.max(np.abs(f.coeffs)))
        if scale > 0 and div > 1e-12 * scale * grid.n:
            raise ValueError("fixed forcing modes must satisfy k . fhat_k = 0")
        return f
    raise TypeError(f"unknown forcing descriptor {spec!r}")


def describe_spec(spec) -> dict:
    """JSON-friendly dictionary form of a field or forcing descriptor."""
    if isinstance(spec, Zero):
        return {"kind": "zero"}
    if isinstance(spec, Shear):
        return {"kind": "shear", "amplitude": spec.amplitude}
    if isinstance(spec, PlanarVortex):
        return {"kind": "planar_vortex", "amplitude": spec.amplitude}
    if isinstance(spec, RandomDivFree):
        return {
            "kind": "random_divfree",
            "seed": spec.seed,
            "slope": spec.slope,
            "amplitude": spec.amplitude,
            "kmax": spec.kmax,
        }
    if isinstance(spec, FromFile):
        return {"kind": "from_file", "path": spec.path}
    if isinstance(spec, FixedModes):
        return {
            "kind": "fixed_modes",
            "modes": [
                {"k": list(k), "coeff": [[c.real, c.imag] for c in map(complex, v)]}
                for k, v in spec.modes
            ],
        }
    if isinstance(spec, TimeModulated):
        return {"kind": "time_modulated", "base": describe_spec(spec.base), "amplitude": spec.label}
    raise TypeError(f"unknown descriptor {spec!r}")


# -- snapshot files -----------------------------------------------------------


def save_field(field: SpectralField, path: str) -> None:
    """Write a field snapshot (little-endian binary, bit-exact round trip).

    Layout: magic "NSE3DFLD", version u32, n u32, then coefficients in
    lexicographic k order (k components from -kmax to kmax) as 6 float64
    per retained mode (re/im of the 3 components).
    """
    grid = field.grid
    ks = np.arange(-grid.kmax, grid.kmax + 1)
    idx = ks % grid.n
    block = field.coeffs[np.ix_(np.arange(3), idx, idx, idx)]
    data = np.ascontiguousarray(np.moveaxis(block, 0, -1)).astype("<c16")
    header = struct.pack("<8sII", FIELD_MAGIC, FIELD_VERSION, grid.n)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
    os.replace(tmp, path)


def load_field(path: str) -> SpectralField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise FieldFileError(f"{path}: truncated header")
    magic, version, n = struct.unpack("<8sII", raw[:16])
    if magic != FIELD_MAGIC:
        raise FieldFileError(f"{path}: bad magic {magic!r}")
    if version != FIELD_VERSION:
        raise FieldFileError(f"{path}: unsupported version {version}")
    try:
        grid = Grid(int(n))
    except ValueError as exc:
        raise FieldFileError(f"{path}: {exc}") from exc
    nmodes = (grid.n - 1) ** 3
    expected = 16 + nmodes * 3 * 16
    if len(raw) != expected:
        raise FieldFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    L = grid.n - 1
    arr = np.frombuffer(raw[16:], dtype="<c16").reshape(L, L, L, 3)
    coeffs = np.zeros((3, grid.n, grid.n, grid.n), dtype=np.complex128)
    ks = np.arange(-grid.kmax, grid.kmax + 1)
    idx = ks % grid.n
    coeffs[np.ix_(np.arange(3), idx, idx, idx)] = np.moveaxis(arr, -1, 0)
    out = SpectralField(grid, coeffs)
    try:
        out.check_invariants(tol=1e-10)
    except ValueError as exc:
        raise FieldFileError(f"{path}: invalid field content ({exc})") from exc
    return out
