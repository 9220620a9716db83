"""Transmit-side impairment and channel model at one sample per symbol.

The received stream is

    r[n] = R(theta[n]) . W . sum_k H[k] a[n-k]  +  z[n]

with ``W`` the transmitter I/Q gain/phase imbalance matrix, ``H[k]`` the
diagonal inter-symbol taps produced by I/Q time skew through the transmit
pulse, ``theta[n]`` the carrier phase process (Wiener laser phase noise +
frequency offset + sinusoidal carrier-frequency fluctuation), and ``z[n]``
white Gaussian noise calibrated from an OSNR figure.  With zero skew the
tap sum collapses to ``a[n]`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mat2

__all__ = [
    "TxImpairments",
    "PhaseSpec",
    "NoiseSpec",
    "imbalance_matrix",
    "phase_path",
    "skew_taps",
    "raised_cosine",
    "transmit",
    "osnr_to_esn0",
    "esn0_to_osnr",
]


@dataclass(frozen=True)
class TxImpairments:
    """Transmitter I/Q imbalance and skew.

    Parameters
    ----------
    gain_imb : float
        Dimensionless gain imbalance; the I rail is scaled by
        ``1 - gain_imb`` and the Q rail by ``1 + gain_imb``.
    phase_imb_rad : float
        Phase imbalance in radians (split symmetrically across the rails).
    skew : float
        I/Q time skew in units of the symbol period (Q rail delayed).
    rolloff : float
        Raised-cosine rolloff of the transmit pulse.
    half_span : int
        Skew tap memory; taps cover ``k in [-half_span, half_span]``.
    """

    gain_imb: float = 0.0
    phase_imb_rad: float = 0.0
    skew: float = 0.0
    rolloff: float = 0.1
    half_span: int = 16

    def __post_init__(self):
        if not abs(self.gain_imb) < 1:
            raise ValueError("|gain imbalance| must be < 1")
        if not abs(self.phase_imb_rad) < np.pi / 2:
            raise ValueError("|phase imbalance| must be < pi/2")
        if not abs(self.skew) < 1:
            raise ValueError("|skew| must be < one symbol period")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must be in [0, 1]")


@dataclass(frozen=True)
class PhaseSpec:
    """Carrier phase process parameters (all rates in Hz)."""

    linewidth: float = 0.0
    f_offset: float = 0.0
    fluct_amp: float = 0.0
    fluct_freq: float = 0.0
    symbol_period: float = 1.0 / 32e9

    def __post_init__(self):
        if self.linewidth < 0 or self.fluct_amp < 0 or self.symbol_period <= 0:
            raise ValueError("linewidth/fluct_amp must be >= 0, symbol_period > 0")
        if self.fluct_amp > 0 and self.fluct_freq <= 0:
            raise ValueError("fluct_freq must be > 0 when fluct_amp > 0")


@dataclass(frozen=True)
class NoiseSpec:
    """OSNR operating point in a reference bandwidth (single polarization)."""

    osnr_db: float
    b_ref: float = 12.5e9
    baud: float = 32e9

    def __post_init__(self):
        if self.b_ref <= 0 or self.baud <= 0:
            raise ValueError("b_ref and baud must be > 0")


def imbalance_matrix(imp: TxImpairments) -> np.ndarray:
    """I/Q imbalance matrix: symmetric phase-mixing rotation times the
    per-rail gain split.  Its determinant is
    ``(1 - g^2) * cos(phase_imb)``; the inverse determinant exceeds 1 for
    any nonzero imbalance below 45 degrees, which is what makes the
    receiver-side compensator amplify noise."""
    half = imp.phase_imb_rad / 2.0
    c, s = np.cos(half), np.sin(half)
    mix = np.array([[c, s], [s, c]])
    gains = np.diag([1.0 - imp.gain_imb, 1.0 + imp.gain_imb])
    return mix @ gains


def phase_path(
    spec: PhaseSpec, n_symbols: int, rng: np.random.Generator | int | None = None
) -> np.ndarray:
    """Per-symbol carrier phase: Wiener phase noise with increment variance
    ``2*pi*T*linewidth``, plus the linear offset ramp ``2*pi*T*f_offset*n``,
    plus the fluctuation term ``(fluct_amp/fluct_freq) * sin(2*pi*T*fluct_freq*n)``.

    Deterministic for a fixed seed (PCG64 via ``numpy.random.default_rng``).
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    t = spec.symbol_period
    n = np.arange(n_symbols)
    theta = 2.0 * np.pi * t * spec.f_offset * n
    if spec.linewidth > 0:
        sigma = np.sqrt(2.0 * np.pi * t * spec.linewidth)
        theta = theta + np.cumsum(rng.normal(0.0, sigma, n_symbols))
    if spec.fluct_amp > 0:
        theta = theta + (spec.fluct_amp / spec.fluct_freq) * np.sin(
            2.0 * np.pi * t * spec.fluct_freq * n
        )
    return theta


def raised_cosine(t_over_sym: np.ndarray, rolloff: float) -> np.ndarray:
    """Unit raised-cosine pulse sampled at ``t/T``; handles the
    ``|2*rolloff*t/T| = 1`` removable singularity."""
    x = np.asarray(t_over_sym, dtype=float)
    out = np.sinc(x)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * x) ** 2
        singular = np.isclose(denom, 0.0, atol=1e-12)
        safe = np.where(singular, 1.0, denom)
        out = out * np.cos(np.pi * rolloff * x) / safe
        limit = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff))
        out = np.where(singular, limit, out)
    return out


def skew_taps(imp: TxImpairments) -> np.ndarray:
    """Diagonal skew taps as an ``(2*half_span+1, 2)`` array of
    ``(I, Q)`` rail coefficients for ``k = -half_span .. half_span``.

    The I rail samples the pulse on the symbol grid (a single unit tap for
    a Nyquist pulse); the Q rail samples with the skew offset.  Each rail
    is normalized to unit energy so the skew redistributes, rather than
    changes, the transmitted power.
    """
    k = np.arange(-imp.half_span, imp.half_span + 1, dtype=float)
    rail_i = raised_cosine(k, imp.rolloff)
    rail_q = raised_cosine(k - imp.skew, imp.rolloff)
    rail_i = rail_i / np.sqrt(np.sum(rail_i**2))
    rail_q = rail_q / np.sqrt(np.sum(rail_q**2))
    return np.stack([rail_i, rail_q], axis=1)


def osnr_to_esn0(noise: NoiseSpec) -> float:
    """Linear Es/N0 from the OSNR point: ``osnr * 2 * b_ref / baud``
    (single polarization, noise referred to the symbol rate)."""
    return 10.0 ** (noise.osnr_db / 10.0) * 2.0 * noise.b_ref / noise.baud


def esn0_to_osnr(esn0_db: float, b_ref: float = 12.5e9, baud: float = 32e9) -> float:
    """Inverse of `osnr_to_esn0`, in dB."""
    return esn0_db - 10.0 * np.log10(2.0 * b_ref / baud)


def transmit(
    symbols: np.ndarray,
    imp: TxImpairments | None = None,
    phase: PhaseSpec | np.ndarray | None = None,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run symbols through the impairment chain; returns ``(r, theta)``.

    Parameters
    ----------
    symbols : complex ndarray
        Unit-energy constellation symbols.
    imp : TxImpairments, optional
        Imbalance/skew; identity chain when omitted.
    phase : PhaseSpec or precomputed per-symbol phase array, optional.
    noise : NoiseSpec, optional
        When given, adds white Gaussian noise with per-rail variance
        ``N0/2`` where ``Es/N0`` comes from `osnr_to_esn0` against the
        nominal unit symbol energy.
    rng : Generator or seed
        Drives both the phase increments and the noise.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size == 0:
        raise ValueError("empty symbol stream")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng

    s = symbols
    if imp is not None and imp.skew != 0.0:
        taps = skew_taps(imp)
        s = np.convolve(symbols.real, taps[:, 0], mode="same") + 1j * np.convolve(
            symbols.imag, taps[:, 1], mode="same"
        )
    if imp is not None:
        s = mat2.apply(imbalance_matrix(imp), s)

    if phase is None:
        theta = np.zeros(symbols.size)
    elif isinstance(phase, PhaseSpec):
        theta = phase_path(phase, symbols.size, rng)
    else:
        theta = np.asarray(phase, dtype=float)
        if theta.shape != symbols.shape:
            raise ValueError("phase path length must match the symbol stream")
    r = np.exp(1j * theta) * s

    if noise is not None:
        sigma = np.sqrt(0.5 / osnr_to_esn0(noise))
        r = r + sigma * (
            rng.normal(size=symbols.size) + 1j * rng.normal(size=symbols.size)
        )
    return r, theta
