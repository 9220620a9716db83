"""Per-rail adaptive equalizers for residual transmitter skew.

Two independent real-valued baud-spaced FIR filters act on the I and Q
rails of the PLL-demodulated, compensated stream.  In that domain the skew
leaves purely per-rail inter-symbol interference (the compensator has
already undone the rail mixing), which is exactly what an independent real
equalizer per rail can remove.  The filters are center-spike initialized
and adapt by LMS against pilots or slicer decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constellation import Constellation, hard_decision
from .pll import LmsDivergence

__all__ = ["RailEqualizer", "rail_filter", "rail_lms", "adapt_rails", "apply_rails"]


@dataclass
class RailEqualizer:
    """Odd-length real FIR with LMS step; index ``(len-1)//2`` is the
    center (zero-delay) tap."""

    taps: np.ndarray = field(default_factory=lambda: RailEqualizer.center_spike_taps(11))
    mu: float = 2e-3

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.taps.size % 2 == 0:
            raise ValueError("tap count must be odd")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")

    @staticmethod
    def center_spike_taps(n_taps: int) -> np.ndarray:
        taps = np.zeros(n_taps)
        taps[n_taps // 2] = 1.0
        return taps


def rail_filter(x: np.ndarray, eq: RailEqualizer) -> np.ndarray:
    """Center-aligned linear filtering of one rail (zero-padded edges), so
    a center-spike equalizer is the identity."""
    x = np.asarray(x, dtype=float)
    if x.size < eq.taps.size:
        raise ValueError(f"stream length {x.size} shorter than taps {eq.taps.size}")
    return np.convolve(x, eq.taps, mode="same")


def rail_lms(eq: RailEqualizer, window: np.ndarray, error: float) -> None:
    """One LMS step: ``taps += mu * error * window`` where `window` is the
    regressor slice ordered to match `rail_filter`'s kernel orientation."""
    eq.taps += eq.mu * error * window
    if np.max(np.abs(eq.taps)) > 10.0:
        raise LmsDivergence(f"rail equalizer diverged (max |tap| = {np.max(np.abs(eq.taps)):.2f})")


def _padded(x: np.ndarray, half: int) -> np.ndarray:
    return np.concatenate([np.zeros(half), x, np.zeros(half)])


def adapt_rails(
    y: np.ndarray,
    eq_i: RailEqualizer,
    eq_q: RailEqualizer,
    const: Constellation,
    ranges: list[tuple[int, int]],
    pilot_values: np.ndarray | None = None,
    mse_every: int = 0,
) -> list[float]:
    """Decision-directed LMS over the given index ranges (in order).

    The reference is the known pilot where one exists, else the slicer
    decision on the current equalizer output.  Returns block-averaged
    squared error per `mse_every` samples (empty when `mse_every` is 0).
    """
    y = np.asarray(y, dtype=complex)
    half = eq_i.taps.size // 2
    xi = _padded(y.real, half)
    xq = _padded(y.imag, half)
    mse: list[float] = []
    acc = 0.0
    cnt = 0
    for a, b in ranges:
        for n in range(a, b):
            wi = xi[n : n + 2 * half + 1][::-1]
            wq = xq[n : n + 2 * half + 1][::-1]
            zi = float(np.dot(eq_i.taps, wi))
            zq = float(np.dot(eq_q.taps, wq))
            if pilot_values is not None and not np.isnan(pilot_values[n].real):
                ref = complex(pilot_values[n])
            else:
                ref = hard_decision(complex(zi, zq), const)
            ei = ref.real - zi
            eq_err = ref.imag - zq
            rail_lms(eq_i, wi, ei)
            rail_lms(eq_q, wq, eq_err)
            if mse_every:
                acc += ei * ei + eq_err * eq_err
                cnt += 1
                if cnt == mse_every:
                    mse.append(acc / cnt)
                    acc = 0.0
                    cnt = 0
    return mse


def apply_rails(y: np.ndarray, eq_i: RailEqualizer, eq_q: RailEqualizer) -> np.ndarray:
    """Filter both rails of a complex stream with frozen taps."""
    y = np.asarray(y, dtype=complex)
    return rail_filter(y.real, eq_i) + 1j * rail_filter(y.imag, eq_q)
