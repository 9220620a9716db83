"""Feedforward blind phase search over the PLL-demodulated stream.

Each candidate phase in ``[-pi/4, pi/4)`` is tested by rotating the input,
applying the 2x2 compensator at the slicer input, and accumulating the
squared decision distance over a centered sliding window; the winner per
symbol is the candidate with the smallest windowed sum (Pfau-style search,
restricted to one quadrant by the pi/2 symmetry of square QAM).  Winning
phases are unwrapped so the track stays continuous; any residual quadrant
offset is left to the pilot-based cycle-slip correction downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import Constellation, hard_decision

__all__ = ["BpsConfig", "BpsResult", "test_phases", "bps_estimate", "unwrap_phases"]


@dataclass(frozen=True)
class BpsConfig:
    """Sliding-window length and number of test phases."""

    window: int = 40
    n_test: int = 32

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.n_test < 2:
            raise ValueError("n_test must be >= 2")


@dataclass
class BpsResult:
    phases: np.ndarray  # unwrapped per-symbol estimate
    decisions: np.ndarray
    u: np.ndarray  # compensated samples at the winning phases
    metric: np.ndarray | None = None  # (n_test, n) windowed distance sums


def test_phases(cfg: BpsConfig) -> np.ndarray:
    """Candidate phases, uniform over ``[-pi/4, pi/4)``."""
    return -np.pi / 4 + np.arange(cfg.n_test) * (np.pi / 2) / cfg.n_test


def unwrap_phases(raw: np.ndarray, period: float = np.pi / 2) -> np.ndarray:
    """Unwrap a winning-phase track so consecutive estimates never jump by
    more than half the QAM symmetry period."""
    return np.unwrap(np.asarray(raw, dtype=float), period=period)


def bps_estimate(
    stream: np.ndarray,
    c: np.ndarray,
    cfg: BpsConfig,
    const: Constellation,
    segment_len: int | None = None,
    chunk: int = 65536,
    keep_metric: bool = False,
) -> BpsResult:
    """Estimate residual phase and decide symbols.

    Parameters
    ----------
    stream : complex ndarray
        De-rotated samples *before* the compensator; the candidate at phase
        ``phi`` is ``c . R(-phi) . stream``.
    c : (2, 2) ndarray
        Compensator applied at the slicer input of every test phase.
    segment_len : int, optional
        Treat the stream as independent contiguous segments of this length
        (windows truncate at segment edges, unwrapping restarts per
        segment).  After a lane-parallel PLL the residual phase is only
        continuous within one lane block, so the search must not mix
        samples across lane stitches; each segment's remaining quadrant
        ambiguity is the pilot corrector's job.
    chunk : int
        Samples per inner batch; bounds the working set without changing
        the result.
    """
    z = np.asarray(stream, dtype=complex)
    n = z.size
    if n < cfg.window:
        raise ValueError(f"stream length {n} shorter than the window {cfg.window}")
    seg = n if segment_len is None else int(segment_len)
    if seg < 1 or n % seg:
        raise ValueError(f"stream length {n} is not a multiple of segment_len {seg}")
    phis = test_phases(cfg)
    rot = np.exp(-1j * phis)[:, None]
    c00, c01, c10, c11 = c[0, 0], c[0, 1], c[1, 0], c[1, 1]

    dist = np.empty((cfg.n_test, n))
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        zr = rot * z[None, a:b]
        u = (c00 * zr.real + c01 * zr.imag) + 1j * (c10 * zr.real + c11 * zr.imag)
        err = u - hard_decision(u, const)
        dist[:, a:b] = err.real**2 + err.imag**2

    # centered window of `window` samples, truncated at segment edges
    lo = cfg.window // 2
    hi = cfg.window - lo
    cs = np.concatenate([np.zeros((cfg.n_test, 1)), np.cumsum(dist, axis=1)], axis=1)
    idx = np.arange(n)
    seg_start = (idx // seg) * seg
    upper = np.minimum(idx + hi, seg_start + seg)
    lower = np.maximum(idx - lo, seg_start)
    metric = cs[:, upper] - cs[:, lower]

    best = np.argmin(metric, axis=0)  # ties resolve to the lowest index
    raw = phis[best]
    phases = unwrap_phases(raw.reshape(-1, seg)).reshape(-1)
    zw = z * np.exp(-1j * phases)
    u = (c00 * zw.real + c01 * zw.imag) + 1j * (c10 * zw.real + c11 * zw.imag)
    decisions = hard_decision(u, const)
    return BpsResult(phases, decisions, u, metric if keep_metric else None)
