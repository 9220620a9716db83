"""Single-lane decision-directed PLL with in-loop I/Q imbalance compensation.

Each symbol is de-rotated by the current phase estimate, passed through the
2x2 compensator at the slicer input, and sliced (or matched against a known
pilot).  The phase detector is the normalized cross product
``Im(y * conj(a_hat)) / |a_hat|^2``; a type-II loop (proportional +
integral) consumes the error delayed by ``d_l`` symbols to model the
feedback latency of a pipelined implementation.  The compensator adapts by
LMS against the same reference, with the de-rotated (pre-compensation)
sample as regressor.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import mat2
from .constellation import Constellation, hard_decision

__all__ = [
    "PllConfig",
    "PllState",
    "MimoTap",
    "LmsDivergence",
    "pll_step",
    "lms_update",
    "run_lane",
    "LaneResult",
]


class LmsDivergence(RuntimeError):
    """Raised when a compensator entry leaves the sane range."""


@dataclass(frozen=True)
class PllConfig:
    """Loop gains and feedback latency (in symbols)."""

    kp: float = 0.04
    ki: float = 4e-4
    d_l: int = 5

    def __post_init__(self):
        if self.kp <= 0 or self.ki < 0 or self.d_l < 0:
            raise ValueError("require kp > 0, ki >= 0, d_l >= 0")


@dataclass
class PllState:
    """Loop filter state; `err_fifo` holds exactly `d_l` pending errors."""

    theta_hat: float = 0.0
    integ: float = 0.0
    err_fifo: deque = field(default_factory=deque)

    @classmethod
    def initial(cls, cfg: PllConfig, theta0: float = 0.0, integ0: float = 0.0) -> "PllState":
        return cls(theta_hat=theta0, integ=integ0, err_fifo=deque([0.0] * cfg.d_l))


@dataclass
class MimoTap:
    """One-tap 2x2 real compensator and its LMS adaptation mode.

    mode is one of ``"pilot-directed"`` (update only where a reference
    symbol is known), ``"decision-directed"`` (update on every symbol,
    using the pilot where known and the slicer decision otherwise) or
    ``"frozen"``.
    """

    c: np.ndarray = field(default_factory=lambda: np.eye(2))
    mu: float = 1e-3
    mode: str = "decision-directed"

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.mode not in ("pilot-directed", "decision-directed", "frozen"):
            raise ValueError(f"unknown mode {self.mode!r}")


def pll_step(
    r: complex,
    state: PllState,
    tap: MimoTap,
    cfg: PllConfig,
    const: Constellation,
    pilot: complex | None = None,
) -> tuple[complex, complex, complex]:
    """Advance the loop by one symbol; mutates `state`.

    Returns ``(y, a_hat, v)``: the compensated slicer input, the reference
    decision, and the de-rotated pre-compensation sample (the LMS
    regressor).
    """
    v = np.exp(-1j * state.theta_hat) * r
    y = complex(mat2.apply(tap.c, v))
    if not (np.isfinite(y.real) and np.isfinite(y.imag)):
        raise ValueError("non-finite sample in PLL")
    a_hat = pilot if pilot is not None else hard_decision(y, const)
    a_energy = a_hat.real**2 + a_hat.imag**2
    if a_energy == 0.0:
        raise ValueError("zero-energy reference symbol")
    e = (y * a_hat.conjugate()).imag / a_energy
    if cfg.d_l:
        state.err_fifo.append(e)
        e_old = state.err_fifo.popleft()
    else:
        e_old = e
    state.integ += cfg.ki * e_old
    state.theta_hat += cfg.kp * e_old + state.integ
    return y, a_hat, v


def lms_update(tap: MimoTap, y: complex, a_ref: complex, x: complex, mu: float | None = None) -> None:
    """LMS step ``C += mu * eps * x^T`` with ``eps = a_ref - y`` (2-vectors);
    no-op in frozen mode.  `mu` overrides the tap's step size when given.
    Raises `LmsDivergence` past the sanity bound."""
    mu = tap.mu if mu is None else mu
    if tap.mode == "frozen" or mu == 0.0:
        return
    ei = a_ref.real - y.real
    eq = a_ref.imag - y.imag
    c = tap.c
    c[0, 0] += mu * ei * x.real
    c[0, 1] += mu * ei * x.imag
    c[1, 0] += mu * eq * x.real
    c[1, 1] += mu * eq * x.imag
    if np.max(np.abs(c)) > 10.0:
        raise LmsDivergence(f"compensator diverged: {c.tolist()}")


@dataclass
class LaneResult:
    decisions: np.ndarray
    y: np.ndarray
    v: np.ndarray
    theta_trace: np.ndarray
    errors: np.ndarray
    state: PllState


def run_lane(
    samples: np.ndarray,
    cfg: PllConfig,
    tap: MimoTap,
    const: Constellation,
    pilot_values: np.ndarray | None = None,
    theta0: float = 0.0,
    integ0: float = 0.0,
    theta_override: np.ndarray | None = None,
) -> LaneResult:
    """Sequential PLL over one lane of temporally consecutive samples.

    Parameters
    ----------
    pilot_values : complex array matching `samples`, optional
        Known symbol per position, NaN where unknown.  Pilots are used as
        the error reference and (outside frozen mode) as LMS references.
    theta_override : float array, optional
        Genie phase: forces the estimate per symbol and disables the loop
        (for calibration tests).
    """
    samples = np.asarray(samples, dtype=complex)
    n = samples.size
    state = PllState.initial(cfg, theta0, integ0)
    decisions = np.empty(n, dtype=complex)
    ys = np.empty(n, dtype=complex)
    vs = np.empty(n, dtype=complex)
    thetas = np.empty(n)
    errors = np.empty(n)
    for i in range(n):
        pilot = None
        if pilot_values is not None and not np.isnan(pilot_values[i].real):
            pilot = complex(pilot_values[i])
        if theta_override is not None:
            state.theta_hat = float(theta_override[i])
            state.integ = 0.0
        thetas[i] = state.theta_hat
        theta_before = state.theta_hat
        y, a_hat, v = pll_step(samples[i], state, tap, cfg, const, pilot)
        if theta_override is not None:
            state.theta_hat = theta_before
        decisions[i] = a_hat
        ys[i] = y
        vs[i] = v
        errors[i] = (y * a_hat.conjugate()).imag / (a_hat.real**2 + a_hat.imag**2)
        if tap.mode == "decision-directed" or (tap.mode == "pilot-directed" and pilot is not None):
            lms_update(tap, y, pilot if pilot is not None else a_hat, v)
    return LaneResult(decisions, ys, vs, thetas, errors, state)
