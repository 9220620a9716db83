"""Monte Carlo experiment harness: end-to-end BER points, OSNR-at-target
extraction, penalty sweeps over imbalance and skew, CSV emission.

A BER point runs the full chain

    bits -> symbols + pilots -> impairment channel -> superscalar DD-PLL
    (or interleaved baseline) -> skew rail equalizers -> blind phase search
    -> pilot cycle-slip correction -> bit counting

with pilots and an acquisition warmup excluded from the error counts.  The
OSNR penalty of an impairment cell is measured against the same pipeline
with transmitter impairments zeroed; point seeds derive from the cell
coordinates only, so scenarios are paired on identical noise and results do
not depend on scheduling or worker count.
"""

from __future__ import annotations

import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import mat2
from .bps import BpsConfig, bps_estimate
from .config import RunConfig
from .constellation import (
    Constellation,
    PilotPlan,
    count_bit_errors,
    demap_points,
    map_bits,
)
from .impairments import NoiseSpec, PhaseSpec, TxImpairments, transmit
from .pll import LmsDivergence, MimoTap, PllConfig
from .rails import RailEqualizer, adapt_rails, apply_rails
from .ssp import AdaptSchedule, SspConfig, cycle_slip_correct, run_interleaved_pll, run_superscalar_pll

__all__ = [
    "PointResult",
    "PenaltyRow",
    "CurveError",
    "point_seed",
    "run_ber_point",
    "ber_curve",
    "osnr_at_target_ber",
    "sweep_fig2a",
    "sweep_fig2b",
    "points_csv",
    "penalty_csv",
    "parse_points_csv",
    "parse_penalty_csv",
    "POINTS_HEADER",
    "PENALTY_HEADER",
]

POINTS_HEADER = "scenario,phi_e_deg,eps_g,tau_over_T,osnr_db,ber,n_symbols,n_errors,seed"
PENALTY_HEADER = "scenario,phi_e_deg,eps_g,tau_over_T,osnr_at_target_db,penalty_db,flag"

SCENARIOS = ("proposed", "conventional", "interleaved")


class CurveError(RuntimeError):
    """The target BER is not bracketed by the measured curve."""


@dataclass(frozen=True)
class PointResult:
    scenario: str
    phi_e_deg: float
    eps_g: float
    tau_over_t: float
    osnr_db: float
    ber: float
    n_symbols: int  # counted payload symbols
    n_errors: int  # counted bit errors
    seed: int
    flag: str = ""


@dataclass(frozen=True)
class PenaltyRow:
    scenario: str
    phi_e_deg: float
    eps_g: float
    tau_over_t: float
    osnr_at_target_db: float
    penalty_db: float
    flag: str = ""


def point_seed(base: int, phi_e_deg: float, eps_g: float, tau_over_t: float, osnr_db: float) -> int:
    """Stable per-point seed: base combined with a CRC of the cell
    coordinates.  The scenario is deliberately excluded so scenario
    comparisons are paired on identical noise."""
    key = f"{phi_e_deg:.9g}|{eps_g:.9g}|{tau_over_t:.9g}|{osnr_db:.9g}"
    return (int(base) * 0x9E3779B97F4A7C15 + zlib.crc32(key.encode())) % 2**63


def scenario_label(scenario: str, rails: bool) -> str:
    return f"{scenario}+rails" if rails else scenario


def run_ber_point(cfg: RunConfig, osnr_db: float, seed: int | None = None) -> PointResult:
    """One end-to-end Monte Carlo point at a fixed OSNR."""
    if cfg.scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {cfg.scenario!r}; expected one of {SCENARIOS}")
    seed = point_seed(cfg.seed, cfg.phi_e_deg, cfg.eps_g, cfg.tau_over_t, osnr_db) if seed is None else seed
    const = Constellation(cfg.order)
    plan = PilotPlan(cfg.pilot_period, const.max_energy_points())
    nbuf = cfg.n_lanes * cfg.block_len
    n_sym = math.ceil(cfg.n_symbols / nbuf) * nbuf
    if cfg.warmup_blocks * nbuf >= n_sym:
        raise ValueError("n_symbols leaves no counted payload after the warmup")
    counted = n_sym - cfg.warmup_blocks * nbuf
    if counted < 100 / cfg.target_ber:
        warnings.warn(
            f"{counted} counted symbols is thin for target BER {cfg.target_ber:g}",
            stacklevel=2,
        )

    ss = np.random.SeedSequence(seed)
    rng_bits, rng_chan = (np.random.default_rng(s) for s in ss.spawn(2))
    k = const.bits_per_symbol
    bits = rng_bits.integers(0, 2, n_sym * k, dtype=np.int8)
    syms = map_bits(bits, const)
    pos = plan.positions(n_sym)
    vals = plan.values(n_sym)
    syms[pos] = vals

    imp = TxImpairments(
        gain_imb=cfg.eps_g,
        phase_imb_rad=math.radians(cfg.phi_e_deg),
        skew=cfg.tau_over_t,
        rolloff=cfg.rolloff,
        half_span=cfg.half_span,
    )
    phase = PhaseSpec(cfg.linewidth_hz, cfg.f_offset_hz, cfg.fluct_amp_hz, cfg.fluct_freq_hz, 1.0 / cfg.baud_hz)
    noise = NoiseSpec(osnr_db, cfg.b_ref_hz, cfg.baud_hz)
    rx, _ = transmit(syms, imp, phase, noise, rng_chan)

    pll_cfg = PllConfig(cfg.kp, cfg.ki, cfg.d_l)
    ssp_cfg = SspConfig(cfg.n_lanes, cfg.block_len, plan)
    if cfg.scenario == "proposed":
        tap = MimoTap(np.eye(2), cfg.mu, "decision-directed")
    else:
        tap = MimoTap(np.eye(2), 0.0, "frozen")
    # compensator: pilot bootstrap, decision-directed refinement through the
    # warmup, then frozen over the counted payload (the Tx imbalance is
    # static within a run)
    schedule = AdaptSchedule(
        mu_pilot=cfg.mu_pilot,
        pilot_blocks=cfg.pilot_blocks,
        dd_stride=2 if cfg.rails else 1,
        freeze_after=cfg.warmup_blocks,
    )

    flag = ""
    try:
        if cfg.scenario == "interleaved":
            res = run_interleaved_pll(rx, cfg.n_lanes, pll_cfg, tap, const, plan)
        else:
            res = run_superscalar_pll(rx, ssp_cfg, pll_cfg, tap, const, schedule)

        pilot_full = np.full(n_sym, np.nan, dtype=complex)
        pilot_full[pos] = vals
        if cfg.rails:
            eq_i = RailEqualizer(RailEqualizer.center_spike_taps(cfg.rail_taps), cfg.rail_mu)
            eq_q = RailEqualizer(RailEqualizer.center_spike_taps(cfg.rail_taps), cfg.rail_mu)
            first = cfg.pilot_blocks + 1
            ranges = [
                (b * nbuf, (b + 1) * nbuf)
                for b in range(first, cfg.warmup_blocks, 2)
                if (b + 1) * nbuf <= n_sym
            ]
            adapt_rails(res.y, eq_i, eq_q, const, ranges, pilot_full)
            y_eq = apply_rails(res.y, eq_i, eq_q)
        else:
            y_eq = res.y

        # blind phase search in the pre-compensation domain, compensator at
        # the slicer input of every test phase; after the superscalar stage
        # the residual phase is contiguous only within a lane block, so the
        # search runs per lane-block segment
        seg = None if cfg.scenario == "interleaved" else cfg.block_len
        z = mat2.apply(mat2.inverse(res.c), y_eq)
        bres = bps_estimate(z, res.c, BpsConfig(cfg.bps_window, cfg.bps_phases), const, segment_len=seg)
        decisions, _, _ = cycle_slip_correct(bres.u, pos, vals, const, c=res.c)
    except LmsDivergence:
        return PointResult(
            scenario_label(cfg.scenario, cfg.rails), cfg.phi_e_deg, cfg.eps_g,
            cfg.tau_over_t, osnr_db, float("nan"), 0, 0, seed, "lms-divergence",
        )

    count_mask = plan.payload_mask(n_sym)
    count_mask[: cfg.warmup_blocks * nbuf] = False
    rx_bits = demap_points(decisions[count_mask], const)
    tx_bits = bits.reshape(n_sym, k)[count_mask].ravel()
    n_err, ber = count_bit_errors(tx_bits, rx_bits)
    return PointResult(
        scenario_label(cfg.scenario, cfg.rails), cfg.phi_e_deg, cfg.eps_g,
        cfg.tau_over_t, osnr_db, ber, int(np.count_nonzero(count_mask)), n_err, seed, flag,
    )


def ber_curve(cfg: RunConfig, extend_step_db: float = 2.0) -> list[PointResult]:
    """BER points over the configured OSNR grid, auto-extending upward (to
    `osnr_max_db`) or downward until the target BER is bracketed."""
    grid = sorted(set(float(o) for o in cfg.osnr_grid_db))
    points: dict[float, PointResult] = {}
    for o in grid:
        points[o] = run_ber_point(cfg, o)

    def usable():
        return [points[o] for o in sorted(points) if not points[o].flag == "lms-divergence"]

    # extend upward while even the best point has not dropped below target
    while True:
        pts = usable()
        if not pts:
            break
        bers = [p.ber for p in pts]
        top = max(points)
        if min(bers) <= cfg.target_ber or top >= cfg.osnr_max_db:
            break
        nxt = min(top + extend_step_db, cfg.osnr_max_db)
        points[nxt] = run_ber_point(cfg, nxt)
    # extend downward while every point is already below target
    while True:
        pts = usable()
        if not pts:
            break
        if max(p.ber for p in pts) >= cfg.target_ber or min(points) <= 5.0:
            break
        nxt = min(points) - extend_step_db
        points[nxt] = run_ber_point(cfg, nxt)
    return [points[o] for o in sorted(points)]


def osnr_at_target_ber(curve: list[PointResult], target: float) -> tuple[float, str]:
    """OSNR (dB) where the curve crosses the target BER, by linear
    interpolation of log10(BER) against OSNR at the first bracketing pair.

    Zero-error points are floored at half an error for interpolation
    (flagged ``zero-floor``); a non-monotone curve is flagged ``nonmono``;
    an unbracketed target raises `CurveError`.
    """
    pts = [p for p in curve if p.flag != "lms-divergence" and not math.isnan(p.ber)]
    if len(pts) < 1:
        raise CurveError("no usable points in curve")
    pts = sorted(pts, key=lambda p: p.osnr_db)
    flags = []
    if any(pts[i + 1].ber > pts[i].ber for i in range(len(pts) - 1)):
        flags.append("nonmono")
    bers = [p.ber if p.ber > 0 else 0.5 / max(p.n_symbols * 4, 1) for p in pts]
    for i in range(len(pts) - 1):
        b0, b1 = bers[i], bers[i + 1]
        if b0 == target:
            return pts[i].osnr_db, "+".join(flags)
        if b0 >= target >= b1:
            if pts[i].ber == 0 or pts[i + 1].ber == 0:
                flags.append("zero-floor")
            x0, x1 = pts[i].osnr_db, pts[i + 1].osnr_db
            frac = (math.log10(target) - math.log10(b0)) / (math.log10(b1) - math.log10(b0))
            return x0 + frac * (x1 - x0), "+".join(flags)
    if bers[-1] == target:
        return pts[-1].osnr_db, "+".join(flags)
    low = min(bers) > target
    raise CurveError(
        f"target {target:g} not bracketed (curve stays {'above' if low else 'below'} target)"
    )


def _cell_penalty(
    cfg: RunConfig, baseline_osnr: float
) -> tuple[list[PointResult], PenaltyRow]:
    label = scenario_label(cfg.scenario, cfg.rails)
    curve = ber_curve(cfg)
    try:
        osnr_t, flag = osnr_at_target_ber(curve, cfg.target_ber)
        penalty = osnr_t - baseline_osnr
    except CurveError:
        osnr_t, penalty, flag = float("inf"), float("inf"), "unbracketed"
    if any(p.flag == "lms-divergence" for p in curve):
        flag = "+".join(filter(None, [flag, "lms-divergence"]))
    return curve, PenaltyRow(
        label, cfg.phi_e_deg, cfg.eps_g, cfg.tau_over_t, osnr_t, penalty, flag
    )


def _cell_task(args) -> tuple[tuple, list[PointResult], PenaltyRow]:
    key, cfg, baseline_osnr = args
    curve, row = _cell_penalty(cfg, baseline_osnr)
    return key, curve, row


def _run_cells(
    cfg: RunConfig,
    cells: list[tuple[str, bool, float, float, float]],
    jobs: int = 1,
) -> tuple[list[PointResult], list[PenaltyRow]]:
    """Measure a list of (scenario, rails, phi_deg, eps, tau) cells plus the
    per-(scenario, rails) impairment-free baselines they are scored
    against."""
    baselines: dict[tuple[str, bool], float] = {}
    base_points: list[PointResult] = []
    for scen, rails in sorted(set((c[0], c[1]) for c in cells)):
        bcfg = replace(cfg, scenario=scen, rails=rails, phi_e_deg=0.0, eps_g=0.0, tau_over_t=0.0)
        curve = ber_curve(bcfg)
        osnr_t, _ = osnr_at_target_ber(curve, cfg.target_ber)
        baselines[(scen, rails)] = osnr_t
        base_points.extend(curve)

    tasks = []
    for scen, rails, phi, eps, tau in cells:
        ccfg = replace(cfg, scenario=scen, rails=rails, phi_e_deg=phi, eps_g=eps, tau_over_t=tau)
        tasks.append(((scen, rails, phi, eps, tau), ccfg, baselines[(scen, rails)]))

    results: dict[tuple, tuple[list[PointResult], PenaltyRow]] = {}
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, curve, row in pool.map(_cell_task, tasks):
                results[key] = (curve, row)
    else:
        for t in tasks:
            key, curve, row = _cell_task(t)
            results[key] = (curve, row)

    points: list[PointResult] = list(base_points)
    rows: list[PenaltyRow] = []
    for key, _, _ in tasks:
        curve, row = results[key]
        points.extend(curve)
        rows.append(row)
    return points, rows


def sweep_fig2a(
    cfg: RunConfig, jobs: int = 1, scenarios: tuple[str, ...] = ("proposed", "conventional")
) -> tuple[list[PointResult], list[PenaltyRow]]:
    """Penalty grid over (phase imbalance, gain imbalance) at the
    configured skew, for the requested scenarios (both with the configured
    rail setting)."""
    cells = [
        (scen, cfg.rails, float(phi), float(eps), cfg.fig2a_tau)
        for scen in scenarios
        for phi in cfg.fig2a_phi_deg
        for eps in cfg.fig2a_eps
    ]
    return _run_cells(cfg, cells, jobs)


def sweep_fig2b(
    cfg: RunConfig,
    jobs: int = 1,
    scenarios: tuple[str, ...] = ("proposed", "conventional"),
    rails_variants: tuple[bool, ...] = (True, False),
) -> tuple[list[PointResult], list[PenaltyRow]]:
    """Penalty versus skew at the configured fixed imbalance, for each
    scenario with and without the rail equalizers."""
    cells = [
        (scen, rails, cfg.fig2b_phi_deg, cfg.fig2b_eps, float(tau))
        for scen in scenarios
        for rails in rails_variants
        for tau in cfg.fig2b_tau
    ]
    return _run_cells(cfg, cells, jobs)


# ---------------------------------------------------------------------------
# CSV emission / parsing


def _fmt(x: float) -> str:
    return repr(float(x))


def points_csv(points: list[PointResult]) -> str:
    lines = [POINTS_HEADER]
    for p in points:
        lines.append(
            f"{p.scenario},{_fmt(p.phi_e_deg)},{_fmt(p.eps_g)},{_fmt(p.tau_over_t)},"
            f"{_fmt(p.osnr_db)},{_fmt(p.ber)},{p.n_symbols},{p.n_errors},{p.seed}"
        )
    return "\n".join(lines) + "\n"


def parse_points_csv(text: str) -> list[PointResult]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != POINTS_HEADER:
        raise ValueError("points CSV header mismatch")
    out = []
    for ln in lines[1:]:
        f = ln.split(",")
        if len(f) != 9:
            raise ValueError(f"bad points row: {ln!r}")
        out.append(
            PointResult(
                f[0], float(f[1]), float(f[2]), float(f[3]), float(f[4]),
                float(f[5]), int(f[6]), int(f[7]), int(f[8]),
            )
        )
    return out


def penalty_csv(rows: list[PenaltyRow]) -> str:
    lines = [PENALTY_HEADER]
    for r in rows:
        lines.append(
            f"{r.scenario},{_fmt(r.phi_e_deg)},{_fmt(r.eps_g)},{_fmt(r.tau_over_t)},"
            f"{_fmt(r.osnr_at_target_db)},{_fmt(r.penalty_db)},{r.flag}"
        )
    return "\n".join(lines) + "\n"


def parse_penalty_csv(text: str) -> list[PenaltyRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != PENALTY_HEADER:
        raise ValueError("penalty CSV header mismatch")
    out = []
    for ln in lines[1:]:
        f = ln.split(",")
        if len(f) != 7:
            raise ValueError(f"bad penalty row: {ln!r}")
        out.append(
            PenaltyRow(f[0], float(f[1]), float(f[2]), float(f[3]), float(f[4]), float(f[5]), f[6])
        )
    return out
