"""Run configuration: defaults, key=value config files, environment and CLI
overrides.

Config files are flat UTF-8 ``key=value`` lines with dotted section
prefixes (``pll.kp=0.04``); ``#`` starts a comment.  Environment variables
override file values using the prefix ``CPRLAB_`` with dots mapped to
underscores (``CPRLAB_PLL_KP=0.05``); explicit CLI flags override both.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

__all__ = ["RunConfig", "load_config", "parse_value", "config_echo", "ENV_PREFIX"]

ENV_PREFIX = "CPRLAB_"


@dataclass(frozen=True)
class RunConfig:
    # constellation / pilots
    order: int = 16
    pilot_period: int = 100
    # transmitter impairments
    phi_e_deg: float = 0.0
    eps_g: float = 0.0
    tau_over_t: float = 0.0
    rolloff: float = 0.1
    half_span: int = 16
    # carrier phase process
    linewidth_hz: float = 1e6
    f_offset_hz: float = 0.0
    fluct_amp_hz: float = 140e6
    fluct_freq_hz: float = 35e3
    baud_hz: float = 32e9
    # noise convention
    b_ref_hz: float = 12.5e9
    # loop
    kp: float = 0.04
    ki: float = 4e-4
    d_l: int = 5
    # compensator adaptation
    mu: float = 1e-3
    mu_pilot: float = 5e-2
    pilot_blocks: int = 2
    # superscalar geometry
    n_lanes: int = 16
    block_len: int = 400
    # blind phase search
    bps_window: int = 40
    bps_phases: int = 32
    # skew rail equalizers
    rails: bool = True
    rail_taps: int = 11
    rail_mu: float = 2e-3
    # experiment
    scenario: str = "proposed"
    n_symbols: int = 200_000
    warmup_blocks: int = 8
    seed: int = 1
    target_ber: float = 1e-3
    osnr_grid_db: tuple = (14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0)
    osnr_max_db: float = 40.0
    # sweep geometry
    fig2a_phi_deg: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    fig2a_eps: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    fig2a_tau: float = 0.1
    fig2b_tau: tuple = (-0.3, -0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2, 0.3)
    fig2b_phi_deg: float = 5.0
    fig2b_eps: float = 0.05


# dotted config key -> dataclass field
KEYMAP = {
    "const.order": "order",
    "pilot.period": "pilot_period",
    "tx.phi_e_deg": "phi_e_deg",
    "tx.eps_g": "eps_g",
    "tx.tau_over_t": "tau_over_t",
    "tx.rolloff": "rolloff",
    "tx.half_span": "half_span",
    "phase.linewidth_hz": "linewidth_hz",
    "phase.f_offset_hz": "f_offset_hz",
    "phase.fluct_amp_hz": "fluct_amp_hz",
    "phase.fluct_freq_hz": "fluct_freq_hz",
    "sim.baud_hz": "baud_hz",
    "noise.b_ref_hz": "b_ref_hz",
    "pll.kp": "kp",
    "pll.ki": "ki",
    "pll.d_l": "d_l",
    "lms.mu": "mu",
    "lms.mu_pilot": "mu_pilot",
    "lms.pilot_blocks": "pilot_blocks",
    "ssp.n_lanes": "n_lanes",
    "ssp.block_len": "block_len",
    "bps.window": "bps_window",
    "bps.n_test": "bps_phases",
    "rails.enabled": "rails",
    "rails.n_taps": "rail_taps",
    "rails.mu": "rail_mu",
    "run.scenario": "scenario",
    "run.n_symbols": "n_symbols",
    "run.warmup_blocks": "warmup_blocks",
    "run.seed": "seed",
    "run.target_ber": "target_ber",
    "run.osnr_grid_db": "osnr_grid_db",
    "run.osnr_max_db": "osnr_max_db",
    "fig2a.phi_deg": "fig2a_phi_deg",
    "fig2a.eps": "fig2a_eps",
    "fig2a.tau": "fig2a_tau",
    "fig2b.tau": "fig2b_tau",
    "fig2b.phi_deg": "fig2b_phi_deg",
    "fig2b.eps": "fig2b_eps",
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_value(field_name: str, text: str):
    """Parse a config value string according to the field's type."""
    ftype = _FIELD_TYPES[field_name]
    text = text.strip()
    if ftype == "int":
        return int(float(text))
    if ftype == "float":
        return float(text)
    if ftype == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {text!r}")
    if ftype == "tuple":
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    return text


def _apply(cfg: RunConfig, dotted: str, raw: str) -> RunConfig:
    if dotted not in KEYMAP:
        raise KeyError(f"unknown config key {dotted!r}")
    name = KEYMAP[dotted]
    return replace(cfg, **{name: parse_value(name, raw)})


def load_config(
    path: str | None = None,
    env: dict | None = None,
    overrides: dict | None = None,
) -> RunConfig:
    """Build a RunConfig from defaults, then file, then environment, then
    explicit overrides (dataclass field name -> value)."""
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, val = line.partition("=")
                cfg = _apply(cfg, key.strip(), val)
    env = os.environ if env is None else env
    for dotted in KEYMAP:
        env_key = ENV_PREFIX + dotted.replace(".", "_").upper()
        if env_key in env:
            cfg = _apply(cfg, dotted, env[env_key])
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def config_echo(cfg: RunConfig) -> str:
    """Render the full effective configuration as reloadable key=value text."""
    lines = []
    for dotted, name in KEYMAP.items():
        val = getattr(cfg, name)
        if isinstance(val, tuple):
            val = ",".join(repr(float(v)) for v in val)
        lines.append(f"{dotted}={val}")
    return "\n".join(lines) + "\n"
