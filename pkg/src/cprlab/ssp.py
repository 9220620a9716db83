"""Superscalar parallelization of the DD-PLL, plus the conventional
interleaved-parallel baseline.

The superscalar runner buffers ``n_lanes * block_len`` samples, hands each
lane a run of *consecutive* symbols, and runs all lanes in lockstep, so the
loop feedback latency stays at ``d_l`` symbols per lane.  The conventional
interleaved mapping (lane ``i`` sees samples ``i, i+N, i+2N, ...``) is kept
as a baseline: there a loop delay of ``d_l`` lane steps spans ``N * d_l``
symbols of real time, which is exactly the tolerance loss the superscalar
arrangement removes.

Pilot symbols resolve the start-up quadrant, re-anchor each lane's phase at
block boundaries, and drive the quadrant (cycle-slip) correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mat2
from .constellation import Constellation, PilotPlan, hard_decision
from .pll import LmsDivergence, MimoTap, PllConfig, lms_update

__all__ = [
    "SspConfig",
    "AdaptSchedule",
    "SspResult",
    "to_lanes",
    "from_lanes",
    "cycle_slip_correct",
    "run_superscalar_pll",
    "run_interleaved_pll",
]

_HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class SspConfig:
    """Block geometry: `n_lanes` lanes of `block_len` consecutive symbols."""

    n_lanes: int = 16
    block_len: int = 400
    pilot: PilotPlan = field(default_factory=PilotPlan)

    def __post_init__(self):
        if self.n_lanes < 1 or self.block_len < 1:
            raise ValueError("n_lanes and block_len must be >= 1")
        if self.block_len % self.pilot.period:
            raise ValueError("block_len must be divisible by the pilot period")

    @property
    def buffer_len(self) -> int:
        return self.n_lanes * self.block_len


@dataclass(frozen=True)
class AdaptSchedule:
    """When and from which samples the shared compensator adapts.

    The compensator is frozen within a block and updated at block
    boundaries, so results do not depend on lane scheduling order.  For the
    first `pilot_blocks` blocks every pilot in the block (all lanes, in
    original time order) is replayed pilot-directed with step `mu_pilot`;
    afterwards, decision-directed updates replay lane `dd_lane`'s block on
    every `dd_stride`-th block.

    Every update pair is de-rotated by its own measured angle first: the
    loop owns rotation tracking, and an LMS fed rotating regressors would
    otherwise converge to a shrunken ``E[cos(err)] * R(...)`` during
    acquisition.  The rotation component of the transmitter imbalance is
    indistinguishable from carrier phase, so nothing is lost by leaving it
    to the loop.  Decision-directed updates are additionally skipped when
    the squared slicer error exceeds `dd_gate` (an outlier bound far above
    the noise floor, against mislabeled references).

    LMS against noisy regressors is scale-biased (it regresses the clean
    reference on a noisy input), so after each block the per-rail gain of
    the compensator output is re-anchored to the block's pilots, which
    carry exact amplitude references; `gain_anchor` damps that correction
    (0 disables it).
    """

    mu_pilot: float = 5e-2
    pilot_blocks: int = 2
    dd_lane: int = 0
    dd_stride: int = 1
    dd_offset: int = 0
    dd_gate: float = 0.25
    freeze_after: int | None = None  # stop adapting from this block on
    gain_anchor: float = 0.5  # pilot-referenced per-rail gain correction, damped


@dataclass
class SspResult:
    """Streams in original symbol order plus per-symbol phase estimates."""

    decisions: np.ndarray
    y: np.ndarray  # compensated slicer-input stream
    v: np.ndarray  # de-rotated stream before the compensator
    theta_trace: np.ndarray
    c: np.ndarray  # final compensator
    slips: int  # nonzero quadrant corrections applied
    c_history: list | None = None  # compensator snapshot after each block


def to_lanes(segment: np.ndarray, cfg: SspConfig) -> np.ndarray:
    """Rearrange one buffer into lanes of consecutive symbols: lane ``i``
    holds original indices ``[i*S, (i+1)*S)``."""
    segment = np.asarray(segment)
    if segment.size != cfg.buffer_len:
        raise ValueError(f"segment length {segment.size} != {cfg.buffer_len}")
    return segment.reshape(cfg.n_lanes, cfg.block_len)


def from_lanes(lanes: np.ndarray) -> np.ndarray:
    """Inverse of `to_lanes`."""
    lanes = np.asarray(lanes)
    if lanes.ndim != 2:
        raise ValueError("expected a (n_lanes, block_len) array")
    return lanes.reshape(-1)


def cycle_slip_correct(
    y: np.ndarray,
    pilot_positions: np.ndarray,
    pilot_values: np.ndarray,
    const: Constellation,
    c: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrant correction from pilots.

    At each pilot the quadrant offset ``k = round(angle(y_p * conj(pilot)) /
    (pi/2))`` is estimated; all samples from that pilot up to the next are
    counter-rotated by ``k * pi/2`` and re-sliced.  When the rotation error
    originated *before* a compensator ``c`` (a slipped phase estimate), the
    correction in the compensated domain is the similarity form
    ``c . R(-k*pi/2) . c^-1``; pass ``c=None`` for a plain rotation.

    Returns ``(decisions, y_corrected, k_per_pilot)``.
    """
    y = np.asarray(y, dtype=complex)
    pos = np.asarray(pilot_positions, dtype=np.int64)
    vals = np.asarray(pilot_values, dtype=complex)
    n = y.size
    ks = np.rint(np.angle(y[pos] * np.conj(vals)) / _HALF_PI).astype(np.int64)
    seg_len = np.diff(pos, append=n)
    k_sample = np.zeros(n, dtype=np.int64)
    k_sample[pos[0] :] = np.repeat(ks, seg_len)
    if c is None:
        y_corr = y * np.exp(-1j * _HALF_PI * k_sample)
    else:
        c_inv = mat2.inverse(c)
        y_corr = y.copy()
        for k in np.unique(k_sample):
            if k == 0:
                continue
            m = c @ mat2.rotation(-_HALF_PI * k) @ c_inv
            sel = k_sample == k
            y_corr[sel] = mat2.apply(m, y[sel])
    decisions = hard_decision(y_corr, const)
    decisions[pos] = vals
    return decisions, y_corr, ks


def _pilot_value_grid(cfg: SspConfig, block_index: int) -> np.ndarray:
    """Known pilot values for one block, shaped (n_lanes, pilots_per_lane)."""
    n, s, period = cfg.n_lanes, cfg.block_len, cfg.pilot.period
    base = block_index * n * s
    cols = np.arange(0, s, period)
    orig = base + np.arange(n)[:, None] * s + cols[None, :]
    pts = cfg.pilot.pilot_points
    return pts[(orig // period) % len(pts)]


def _apply_c(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    return (c[0, 0] * z.real + c[0, 1] * z.imag) + 1j * (
        c[1, 0] * z.real + c[1, 1] * z.imag
    )


def _aligned_pair(c: np.ndarray, x: complex, ref: complex) -> tuple[complex, complex, complex]:
    """Rotationally align an LMS update pair: measure the angle of the
    current output against the reference and spin the regressor by it, so
    the update carries no rotation component."""
    x = complex(x)
    ref = complex(ref)
    yy = complex(mat2.apply(c, x))
    phi = np.angle(yy * ref.conjugate())
    x = x * complex(np.cos(phi), -np.sin(phi))
    return complex(mat2.apply(c, x)), ref, x


def _advance_block(
    r_lanes: np.ndarray,
    c: np.ndarray,
    cfg: PllConfig,
    const: Constellation,
    theta: np.ndarray,
    integ: np.ndarray,
    pilot_cols: np.ndarray,
    pilot_vals: np.ndarray,
    snap_force: bool,
    snap_threshold: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run all lanes of one block in lockstep with a frozen compensator.

    At any pilot, a lane whose measured offset exceeds `snap_threshold` is
    re-anchored to that pilot (phase snapped, pending loop errors cleared),
    which bounds the damage of a lost lock or a cycle slip to one pilot
    interval; smaller offsets are left to the loop, whose filtered estimate
    beats a single noisy pilot.  `snap_force` (stream start) snaps every
    lane at the first pilot unconditionally.

    Mutates nothing; returns (v, y, theta_trace, theta_out, integ_out, e_trace).
    """
    n_lanes, s_len = r_lanes.shape
    v = np.empty((n_lanes, s_len), dtype=complex)
    y = np.empty((n_lanes, s_len), dtype=complex)
    th = np.empty((n_lanes, s_len))
    et = np.empty((n_lanes, s_len))
    fifo = np.zeros((max(cfg.d_l, 1), n_lanes))
    ptr = 0
    pilot_col_set = {int(col): j for j, col in enumerate(pilot_cols)}
    theta = theta.copy()
    integ = integ.copy()
    for s in range(s_len):
        rs = r_lanes[:, s]
        rot = np.exp(-1j * theta)
        vs = rot * rs
        ys = _apply_c(c, vs)
        j = pilot_col_set.get(s)
        if j is not None:
            a = pilot_vals[:, j]
            off = np.angle(ys * np.conj(a))
            snap = np.abs(off) > snap_threshold
            if s == 0 and snap_force:
                snap[:] = True
            if np.any(snap):
                theta = theta + np.where(snap, off, 0.0)
                fifo[:, snap] = 0.0
                rot = np.exp(-1j * theta)
                vs = rot * rs
                ys = _apply_c(c, vs)
        else:
            a = hard_decision(ys, const)
        e = (ys * np.conj(a)).imag / (a.real**2 + a.imag**2)
        if cfg.d_l:
            e_old = fifo[ptr].copy()
            fifo[ptr] = e
            ptr = (ptr + 1) % cfg.d_l
        else:
            e_old = e
        integ = integ + cfg.ki * e_old
        th[:, s] = theta
        v[:, s] = vs
        y[:, s] = ys
        et[:, s] = e
        theta = theta + cfg.kp * e_old + integ
    return v, y, th, theta, integ, et


def run_superscalar_pll(
    rx: np.ndarray,
    ssp_cfg: SspConfig,
    pll_cfg: PllConfig,
    tap: MimoTap,
    const: Constellation,
    schedule: AdaptSchedule | None = None,
    snap_threshold: float = np.pi / 8,
) -> SspResult:
    """Block-buffered superscalar DD-PLL over the whole stream.

    The stream length must be a multiple of the buffer size (the harness
    pads and trims).  Each lane resumes from its own previous-block phase
    and integrator, re-anchored by the block's first pilot; quadrant slips
    are corrected per block from the pilots before the compensator update
    replay, so adaptation never trains on a slipped quadrant.
    """
    rx = np.asarray(rx, dtype=complex)
    sched = schedule or AdaptSchedule()
    n_lanes, s_len = ssp_cfg.n_lanes, ssp_cfg.block_len
    if rx.size == 0 or rx.size % ssp_cfg.buffer_len:
        raise ValueError(f"stream length {rx.size} is not a multiple of {ssp_cfg.buffer_len}")
    n_blocks = rx.size // ssp_cfg.buffer_len
    period = ssp_cfg.pilot.period
    pilot_cols = np.arange(0, s_len, period)

    decisions = np.empty(rx.size, dtype=complex)
    y_out = np.empty(rx.size, dtype=complex)
    v_out = np.empty(rx.size, dtype=complex)
    theta_out = np.empty(rx.size)
    theta = np.zeros(n_lanes)
    integ = np.zeros(n_lanes)
    slips = 0
    c_hist: list = []

    for b in range(n_blocks):
        base = b * ssp_cfg.buffer_len
        lanes = to_lanes(rx[base : base + ssp_cfg.buffer_len], ssp_cfg)
        pv = _pilot_value_grid(ssp_cfg, b)
        v, y, th, theta, integ, _ = _advance_block(
            lanes, tap.c, pll_cfg, const, theta, integ, pilot_cols, pv,
            snap_force=(b == 0), snap_threshold=snap_threshold,
        )
        # quadrant correction per lane segment, from each pilot to the next
        ks = np.rint(np.angle(y[:, pilot_cols] * np.conj(pv)) / _HALF_PI).astype(np.int64)
        slips += int(np.count_nonzero(ks))
        k_cols = np.repeat(ks, period, axis=1)
        v = v * np.exp(-1j * _HALF_PI * k_cols)
        y = _apply_c(tap.c, v)
        dec = hard_decision(y, const)
        dec[:, pilot_cols] = pv

        adapting = tap.mode != "frozen" and (
            sched.freeze_after is None or b < sched.freeze_after
        )
        if adapting:
            in_pilot_phase = b < sched.pilot_blocks or tap.mode == "pilot-directed"
            if in_pilot_phase:
                mu = sched.mu_pilot if b < sched.pilot_blocks else None
                for i in range(n_lanes):
                    for j, col in enumerate(pilot_cols):
                        yy, ref, x = _aligned_pair(tap.c, v[i, col], pv[i, j])
                        lms_update(tap, yy, ref, x, mu=mu)
            elif (b - sched.pilot_blocks) % sched.dd_stride == sched.dd_offset:
                lane = sched.dd_lane
                for s in range(s_len):
                    yy, ref, x = _aligned_pair(tap.c, v[lane, s], dec[lane, s])
                    if abs(ref - yy) ** 2 < sched.dd_gate:
                        lms_update(tap, yy, ref, x)
            if sched.gain_anchor > 0.0:
                num = np.zeros(2)
                den = np.zeros(2)
                for i in range(n_lanes):
                    for j, col in enumerate(pilot_cols):
                        yy, ref, _ = _aligned_pair(tap.c, v[i, col], pv[i, j])
                        num += (yy.real * ref.real, yy.imag * ref.imag)
                        den += (ref.real**2, ref.imag**2)
                gains = num / den
                tap.c /= gains[:, None] ** sched.gain_anchor

        decisions[base : base + ssp_cfg.buffer_len] = from_lanes(dec)
        y_out[base : base + ssp_cfg.buffer_len] = from_lanes(y)
        v_out[base : base + ssp_cfg.buffer_len] = from_lanes(v)
        theta_out[base : base + ssp_cfg.buffer_len] = from_lanes(th)
        c_hist.append(tap.c.copy())

    return SspResult(decisions, y_out, v_out, theta_out, tap.c.copy(), slips, c_hist)


def run_interleaved_pll(
    rx: np.ndarray,
    n_lanes: int,
    pll_cfg: PllConfig,
    tap: MimoTap,
    const: Constellation,
    pilot: PilotPlan | None = None,
) -> SspResult:
    """Conventional interleaved-parallel DD-PLL baseline.

    Lane ``i`` processes samples ``i, i+N, i+2N, ...`` with its own loop
    state; a feedback delay of `d_l` lane steps therefore spans
    ``N * d_l`` symbols of original time.  Comparison baseline only: the
    compensator stays frozen.
    """
    rx = np.asarray(rx, dtype=complex)
    if tap.mode != "frozen":
        raise ValueError("interleaved baseline runs with a frozen compensator")
    if rx.size % n_lanes:
        raise ValueError(f"stream length {rx.size} is not a multiple of {n_lanes}")
    n_steps = rx.size // n_lanes
    pilot_vals = np.full(rx.size, np.nan, dtype=complex)
    if pilot is not None:
        pilot_vals[pilot.positions(rx.size)] = pilot.values(rx.size)

    decisions = np.empty(rx.size, dtype=complex)
    y_out = np.empty(rx.size, dtype=complex)
    v_out = np.empty(rx.size, dtype=complex)
    theta_out = np.empty(rx.size)
    theta = np.zeros(n_lanes)
    integ = np.zeros(n_lanes)
    fifo = np.zeros((max(pll_cfg.d_l, 1), n_lanes))
    ptr = 0
    c = tap.c
    for t in range(n_steps):
        sl = slice(t * n_lanes, (t + 1) * n_lanes)
        rs = rx[sl]
        vs = np.exp(-1j * theta) * rs
        ys = _apply_c(c, vs)
        pv = pilot_vals[sl]
        known = ~np.isnan(pv.real)
        a = np.where(known, pv, hard_decision(ys, const))
        e = (ys * np.conj(a)).imag / (a.real**2 + a.imag**2)
        if pll_cfg.d_l:
            e_old = fifo[ptr].copy()
            fifo[ptr] = e
            ptr = (ptr + 1) % pll_cfg.d_l
        else:
            e_old = e
        integ = integ + pll_cfg.ki * e_old
        theta_out[sl] = theta
        decisions[sl] = a
        y_out[sl] = ys
        v_out[sl] = vs
        theta = theta + pll_cfg.kp * e_old + integ
    return SspResult(decisions, y_out, v_out, theta_out, c.copy(), 0)
