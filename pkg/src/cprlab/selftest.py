"""Invariant suite: fast self-contained checks of the module contracts,
runnable via ``cprlab selftest``.  Each check returns (name, ok, detail);
the CLI prints one line per check and exits nonzero on any failure.
"""

from __future__ import annotations

import io
import math
import time
import warnings

import numpy as np

from . import mat2
from .bps import BpsConfig, bps_estimate
from .config import RunConfig
from .constellation import Constellation, PilotPlan, demap_points, hard_decision, map_bits
from .harness import penalty_csv, points_csv, parse_penalty_csv, parse_points_csv, run_ber_point, _run_cells
from .impairments import (
    NoiseSpec,
    PhaseSpec,
    TxImpairments,
    imbalance_matrix,
    osnr_to_esn0,
    phase_path,
    skew_taps,
    transmit,
)
from .pll import MimoTap, PllConfig, PllState, pll_step, run_lane
from .rails import RailEqualizer, rail_filter
from .ssp import SspConfig, cycle_slip_correct, from_lanes, to_lanes, run_superscalar_pll

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _tiny_cfg() -> RunConfig:
    return RunConfig(
        n_lanes=4,
        block_len=200,
        pilot_blocks=1,
        warmup_blocks=1,
        n_symbols=3200,
        rails=False,
        linewidth_hz=1e5,
        fluct_amp_hz=0.0,
        target_ber=1e-2,
        osnr_grid_db=(12.0, 16.0),
        seed=7,
    )


@check
def rotation_identities():
    if not np.allclose(mat2.rotation(0.0), np.eye(2), atol=1e-12):
        return False, "R(0) != I"
    if not np.allclose(mat2.rotation(np.pi / 2), [[0, -1], [1, 0]], atol=1e-12):
        return False, "R(pi/2) wrong"
    if not np.allclose(mat2.rotation(0.3) @ mat2.rotation(0.4), mat2.rotation(0.7), atol=1e-12):
        return False, "R(.3)R(.4) != R(.7)"
    for th in np.linspace(-3, 3, 13):
        r = mat2.rotation(th)
        if abs(mat2.det(r) - 1.0) > 1e-12 or not np.allclose(r @ r.T, np.eye(2), atol=1e-12):
            return False, f"R({th}) not orthogonal"
    return True, "rotation group relations hold"


@check
def imbalance_determinant():
    worst = 0.0
    for eps in (0.0, 0.05, 0.1, 0.2, 0.5):
        for phi in np.radians((0.0, 5.0, 10.0, 20.0, 44.0)):
            w = imbalance_matrix(TxImpairments(gain_imb=eps, phase_imb_rad=phi))
            worst = max(worst, abs(mat2.det(w) - (1 - eps**2) * math.cos(phi)))
            if (eps, phi) != (0.0, 0.0) and 1.0 / mat2.det(w) <= 1.0:
                return False, f"1/det(W) <= 1 at eps={eps}, phi={phi}"
    return worst < 1e-12, f"max |det error| = {worst:.2e}"


@check
def slicer_roundtrip():
    c = Constellation(16)
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, 4 * 5000)
    syms = map_bits(bits, c)
    if np.any(demap_points(hard_decision(syms, c), c) != bits):
        return False, "bit round-trip failed"
    noisy = syms + 0.05 * (rng.normal(size=syms.size) + 1j * rng.normal(size=syms.size))
    d1 = hard_decision(noisy, c)
    if np.any(hard_decision(d1, c) != d1):
        return False, "slicer not idempotent"
    tie = hard_decision(0j, c)
    want = c.points[np.argmin(np.where(np.isclose(np.abs(c.points), np.min(np.abs(c.points))), c.labels, 99))]
    if tie != want:
        return False, f"tie rule at origin gave {tie}"
    return True, "round-trip, idempotence, tie rule"


@check
def phase_increment_variance():
    spec = PhaseSpec(linewidth=1e6, symbol_period=1 / 32e9)
    th = phase_path(spec, 1_000_001, rng=123)
    var = float(np.var(np.diff(th)))
    target = 2 * np.pi / 32000
    rel = abs(var / target - 1)
    return rel < 0.03, f"sample/target variance ratio off by {rel:.4f}"


@check
def skew_tap_energy():
    t0 = skew_taps(TxImpairments(skew=0.0))
    spike = np.zeros(t0.shape[0])
    spike[t0.shape[0] // 2] = 1.0
    if not np.allclose(t0[:, 0], spike, atol=1e-12) or not np.allclose(t0[:, 1], spike, atol=1e-12):
        return False, "taps at zero skew are not the identity"
    for tau in (0.1, 0.25, 0.5):
        t = skew_taps(TxImpairments(skew=tau))
        ei, eq = np.sum(t[:, 0] ** 2), np.sum(t[:, 1] ** 2)
        if abs(ei - 1) > 1e-6 or abs(eq - 1) > 1e-6:
            return False, f"rail energies {ei:.8f}/{eq:.8f} at tau={tau}"
    return True, "unit rail energies, identity at zero skew"


@check
def transmit_identity_and_snr():
    c = Constellation(16)
    rng = np.random.default_rng(5)
    syms = map_bits(rng.integers(0, 2, 4 * 200_000), c)
    r, _ = transmit(syms, rng=rng)
    if not np.array_equal(r, syms):
        return False, "impairment-free transmit is not the identity"
    noise = NoiseSpec(osnr_db=15.0)
    r, _ = transmit(syms, noise=noise, rng=42)
    snr = 10 * np.log10(np.mean(np.abs(syms) ** 2) / np.mean(np.abs(r - syms) ** 2))
    want = 10 * np.log10(osnr_to_esn0(noise))
    return abs(snr - want) < 0.1, f"measured SNR {snr:.3f} dB vs {want:.3f} dB"


@check
def permutation_roundtrip():
    rng = np.random.default_rng(9)
    for n, s in ((1, 8), (2, 3), (4, 100), (16, 400)):
        cfg = SspConfig(n, s, PilotPlan(period=s if s < 100 else 100))
        x = rng.normal(size=n * s) + 1j * rng.normal(size=n * s)
        if not np.array_equal(from_lanes(to_lanes(x, cfg)), x):
            return False, f"round-trip failed at N={n}, S={s}"
        lanes = to_lanes(np.arange(n * s), cfg)
        if not np.array_equal(lanes[n - 1], np.arange((n - 1) * s, n * s)):
            return False, "lane slicing wrong"
    return True, "reorder-in/out inverse over geometry sweep"


@check
def cycle_slip_recovery():
    c = Constellation(16)
    plan = PilotPlan(period=50, pilot_points=c.max_energy_points())
    rng = np.random.default_rng(3)
    n = 400
    syms = map_bits(rng.integers(0, 2, 4 * n), c)
    pos, vals = plan.positions(n), plan.values(n)
    syms[pos] = vals
    y = syms.copy()
    y[175:] *= np.exp(1j * np.pi / 2)  # slip injected mid-segment
    dec, y_corr, ks = cycle_slip_correct(y, pos, vals, c)
    if np.any(dec[200:] != syms[200:]):
        return False, "decisions wrong after the next pilot"
    if np.any(dec[:175] != syms[:175]):
        return False, "pre-slip decisions disturbed"
    y2 = syms * np.exp(1j * 2 * np.pi)  # full turn: no correction possible or needed
    dec2, _, ks2 = cycle_slip_correct(y2, pos, vals, c)
    if np.any(ks2 % 4 != 0) or np.any(dec2 != syms):
        return False, "2*pi rotation should round to k=0 mod 4"
    return True, "exact recovery from the next pilot onward"


@check
def superscalar_matches_single_lane():
    # one lane, one block, frozen tap: the bank must reproduce run_lane
    c = Constellation(16)
    plan = PilotPlan(period=100, pilot_points=c.max_energy_points())
    rng = np.random.default_rng(11)
    n = 400
    syms = map_bits(rng.integers(0, 2, 4 * n), c)
    pos, vals = plan.positions(n), plan.values(n)
    syms[pos] = vals
    rx, _ = transmit(syms, phase=PhaseSpec(linewidth=2e5, symbol_period=1 / 32e9), noise=NoiseSpec(17.0), rng=8)
    pll_cfg = PllConfig()
    pv = np.full(n, np.nan, dtype=complex)
    pv[pos] = vals
    res = run_superscalar_pll(rx, SspConfig(1, n, plan), pll_cfg, MimoTap(mode="frozen"), c)
    # the bank snaps at the first pilot; replicate by aligning theta0
    theta0 = float(np.angle(rx[0] * np.conj(vals[0])))
    lane = run_lane(rx, pll_cfg, MimoTap(mode="frozen"), c, pilot_values=pv, theta0=theta0)
    ok = np.allclose(res.y, lane.y, atol=1e-12) and np.allclose(res.theta_trace, lane.theta_trace, atol=1e-12)
    return ok, "lane bank == scalar lane (after start snap)"


@check
def bps_scale_invariance_and_quantization():
    c = Constellation(16)
    rng = np.random.default_rng(21)
    syms = map_bits(rng.integers(0, 2, 4 * 2000), c)
    z = syms * np.exp(1j * 0.1)
    cfg = BpsConfig(window=40, n_test=64)
    res = bps_estimate(z, np.eye(2), cfg, c, keep_metric=True)
    if np.max(np.abs(res.phases - 0.1)) > np.pi / (2 * 64):
        return False, "constant phase missed the quantization bound"
    scaled = np.argmin(res.metric * 3.7, axis=0)
    if np.any(scaled != np.argmin(res.metric, axis=0)):
        return False, "argmin not invariant to metric scaling"
    if np.any(res.decisions != syms):
        return False, "noiseless decisions wrong"
    return True, "quantization bound and metric-scale invariance"


@check
def rail_filter_identity_delay():
    rng = np.random.default_rng(2)
    x = rng.normal(size=500)
    eq = RailEqualizer(RailEqualizer.center_spike_taps(11), mu=0)
    if not np.array_equal(rail_filter(x, eq), x):
        return False, "center spike is not the identity"
    taps = np.zeros(5)
    taps[2 + 1] = 1.0
    d = rail_filter(x, RailEqualizer(taps, mu=0))
    if not np.array_equal(d[1:], x[:-1]):
        return False, "shifted spike is not a unit delay"
    return True, "identity and unit-delay behavior"


@check
def first_order_static_error():
    c = Constellation(16)
    rng = np.random.default_rng(31)
    n = 4000
    syms = map_bits(rng.integers(0, 2, 4 * n), c)
    omega = 0.002
    rx = syms * np.exp(1j * omega * np.arange(n))
    for kp in (0.02, 0.05, 0.1):
        cfg = PllConfig(kp=kp, ki=0.0, d_l=0)
        lane = run_lane(rx, cfg, MimoTap(mode="frozen"), c, pilot_values=syms)
        e_ss = float(np.mean(lane.errors[-1000:]))
        if abs(e_ss - omega / kp) / (omega / kp) > 0.05:
            return False, f"static error {e_ss:.5f} vs {omega / kp:.5f} at kp={kp}"
    return True, "ramp static error tracks omega/kp"


@check
def fifo_latency_discipline():
    c = Constellation(16)
    cfg = PllConfig(kp=0.25, ki=0.0, d_l=3)
    state = PllState.initial(cfg)
    tap = MimoTap(mode="frozen")
    rng = np.random.default_rng(17)
    phis = rng.uniform(-0.05, 0.05, 12)
    pilot = complex(Constellation(16).max_energy_points()[0])
    errs = []
    for n, phi in enumerate(phis):
        r = pilot * np.exp(1j * (phi + state.theta_hat))
        th_before = state.theta_hat
        y, a, _ = pll_step(r, state, tap, cfg, c, pilot=pilot)
        e = (y * a.conjugate()).imag / abs(a) ** 2
        delta = state.theta_hat - th_before
        want = cfg.kp * (errs[n - cfg.d_l] if n >= cfg.d_l else 0.0)
        if abs(delta - want) > 1e-12:
            return False, f"step {n} consumed the wrong delayed error"
        errs.append(e)
    return True, "update at n uses the error from n - d_l exactly"


@check
def pilot_overhead_accounting():
    plan = PilotPlan(period=100)
    n = 64_000
    payload = int(np.count_nonzero(plan.payload_mask(n)))
    if payload != n - n // 100:
        return False, f"payload {payload} of {n}"
    if abs(plan.overhead - 0.01) > 1e-12:
        return False, "overhead mismatch"
    return True, "payload throughput = (1 - overhead) * total"


@check
def csv_round_trip():
    cfg = _tiny_cfg()
    p = run_ber_point(cfg, 12.0)
    txt = points_csv([p])
    if points_csv(parse_points_csv(txt)) != txt:
        return False, "points CSV round-trip failed"
    from .harness import PenaltyRow

    rows = [PenaltyRow("proposed", 15.0, 0.15, 0.1, 19.25, 1.5, ""), PenaltyRow("conventional", 20.0, 0.2, 0.1, float("inf"), float("inf"), "unbracketed")]
    txt2 = penalty_csv(rows)
    if penalty_csv(parse_penalty_csv(txt2)) != txt2:
        return False, "penalty CSV round-trip failed"
    return True, "emit/parse round-trips byte-identically"


@check
def determinism_rerun():
    cfg = _tiny_cfg()
    a = run_ber_point(cfg, 14.0)
    b = run_ber_point(cfg, 14.0)
    return a == b, f"repeat run gave {a.n_errors} then {b.n_errors} errors"


@check
def determinism_jobs():
    cfg = _tiny_cfg()
    cells = [("proposed", False, 0.0, 0.0, 0.0), ("proposed", False, 10.0, 0.1, 0.0)]
    p1, r1 = _run_cells(cfg, cells, jobs=1)
    p2, r2 = _run_cells(cfg, cells, jobs=2)
    ok = points_csv(p1) == points_csv(p2) and penalty_csv(r1) == penalty_csv(r2)
    return ok, "jobs=1 and jobs=2 emit identical CSV"


def run_selftest(out: io.TextIOBase | None = None) -> bool:
    """Run every invariant check, printing one pass/fail line each."""
    all_ok = True
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                # the determinism checks use deliberately thin Monte Carlo runs
                warnings.simplefilter("ignore", UserWarning)
                ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"exception: {exc!r}"
        dt = time.perf_counter() - t0
        all_ok &= ok
        line = f"[{'PASS' if ok else 'FAIL'}] {fn.__name__:<36s} {dt:6.2f}s  {detail}"
        print(line, file=out)
    return all_ok
