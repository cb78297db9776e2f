"""Rotary position math for the decoupled 64-dim key slice.

Half-split pairing: element j rotates with element j + dim/2 by angle
position * inv_freq[j].  All trig runs in float64; precision tags only
control how results are stored (f32 / emulated bf16 rounding), which keeps
algorithmic error separable from emulation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

THETA_CANDIDATES = (1e4, 5e4, 3.2e7)
POSITION_BOUND = 2**20
_PROBE_POSITIONS = (0, 1, 1024)
_PROBE_TOL = 1e-6


class Precision(str, Enum):
    F64 = "f64"
    F32 = "f32"
    BF16E = "bf16e"


@dataclass(frozen=True)
class RotarySpec:
    theta: float
    dim: int = 64
    attention_scaling: float = 1.0
    inv_freq: np.ndarray = None  # derived, set in make_spec

    @property
    def half(self) -> int:
        return self.dim // 2


def make_spec(theta: float, dim: int = 64, scaling: float = 1.0) -> RotarySpec:
    if theta <= 0:
        raise ValueError("theta must be positive")
    if dim % 2 != 0:
        raise ValueError("dim must be even")
    j = np.arange(dim // 2, dtype=np.float64)
    inv_freq = np.power(float(theta), -2.0 * j / dim)
    inv_freq.setflags(write=False)
    return RotarySpec(float(theta), dim, float(scaling), inv_freq)


@dataclass(frozen=True)
class KrVector:
    values: np.ndarray
    precision: Precision = Precision.F64

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64)
        )


def round_bf16(x: np.ndarray) -> np.ndarray:
    """Round to the nearest 8-bit-exponent / 7-bit-mantissa float, ties to even.

    Values are returned as float64 carrying the quantized magnitudes.  The
    rounding is done directly on the float64 input (single rounding): the
    bf16 grid around x with exponent e has spacing 2^(e-8), and np.rint
    rounds half to even.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.array(x, dtype=np.float64)
    finite = np.isfinite(x) & (x != 0.0)
    if not np.any(finite):
        return out
    v = x[finite]
    _, e = np.frexp(v)
    # 8 significant bits; below the normal range the grid widens to the
    # bf16 subnormal spacing 2^-133
    ulp_exp = np.maximum(e - 8, -133)
    ulp = np.ldexp(1.0, ulp_exp)
    q = np.rint(v / ulp) * ulp
    # overflow past the bf16 max (2 - 2^-7) * 2^127 goes to infinity
    bf16_max = float(np.ldexp(2.0 - 2.0**-7, 127))
    q = np.where(np.abs(q) > bf16_max, np.copysign(np.inf, q), q)
    out[finite] = q
    return out


def _store(values: np.ndarray, precision: Precision) -> np.ndarray:
    if precision == Precision.F64:
        return values
    if precision == Precision.F32:
        return values.astype(np.float32).astype(np.float64)
    return round_bf16(values)


def rotate_rows(
    rows: np.ndarray, positions: np.ndarray, spec: RotarySpec
) -> np.ndarray:
    """Rotate a [n, dim] matrix, row i by angle positions[i] * inv_freq."""
    rows = np.asarray(rows, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    angles = positions * spec.inv_freq[np.newaxis, :]
    cos, sin = np.cos(angles), np.sin(angles)
    half = spec.half
    lo, hi = rows[..., :half], rows[..., half:]
    return np.concatenate([lo * cos - hi * sin, lo * sin + hi * cos], axis=-1)


def rotate(v: KrVector, p: int, spec: RotarySpec) -> KrVector:
    if not (0 <= p < POSITION_BOUND):
        raise ValueError(f"position {p} outside [0, {POSITION_BOUND})")
    out = rotate_rows(v.values[np.newaxis, :], np.array([p]), spec)[0]
    return KrVector(_store(out, v.precision), v.precision)


def delta_rotate(v: KrVector, delta: int, spec: RotarySpec) -> KrVector:
    """Same math as rotate with a signed angle multiplier."""
    out = rotate_rows(v.values[np.newaxis, :], np.array([delta]), spec)[0]
    return KrVector(_store(out, v.precision), v.precision)


@dataclass(frozen=True)
class SpecVerdict:
    ok: bool
    best_fit_theta: float
    errors: dict[int, float]  # probe position -> rel-L2 vs declared spec


def _probe_error(
    probe: Callable[[int], KrVector], spec: RotarySpec, base: np.ndarray
) -> dict[int, float]:
    errors = {}
    for p in _PROBE_POSITIONS:
        expected = rotate_rows(base[np.newaxis, :], np.array([p]), spec)[0]
        expected = expected * spec.attention_scaling
        got = np.asarray(probe(p).values, dtype=np.float64)
        errors[p] = float(
            np.linalg.norm(got - expected) / max(np.linalg.norm(expected), 1e-300)
        )
    return errors


def probe_base_vector(dim: int) -> np.ndarray:
    """Canonical unit-norm probe vector (fixed, spec-independent)."""
    rng = np.random.Generator(np.random.PCG64(0x524F50452D434845))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def detect_spec(
    declared: RotarySpec, probe: Callable[[int], KrVector]
) -> SpecVerdict:
    """Check a system-under-test's rotation against the declared spec.

    Position 0 always matches (the rotation is the identity there), so the
    verdict rests on the nonzero probe positions.  On mismatch, reports the
    best-fitting base from the candidate set.
    """
    base = probe_base_vector(declared.dim)
    errors = _probe_error(probe, declared, base)
    ok = all(e <= _PROBE_TOL for e in errors.values())
    if ok:
        return SpecVerdict(True, declared.theta, errors)
    best_theta = declared.theta
    best_err = float("inf")
    for theta in THETA_CANDIDATES:
        cand = make_spec(theta, declared.dim, declared.attention_scaling)
        err = max(_probe_error(probe, cand, base).values())
        if err < best_err:
            best_err = err
            best_theta = theta
    return SpecVerdict(False, best_theta, errors)
