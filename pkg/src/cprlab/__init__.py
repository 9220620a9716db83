"""cprlab: carrier phase recovery lab.

A numpy-based simulation toolkit for a two-stage carrier phase recovery
chain (superscalar-parallel decision-directed PLL followed by blind phase
search) with in-loop transmitter I/Q imbalance compensation, transmitter
I/Q skew modeling and per-rail equalization, and a Monte Carlo harness for
OSNR-penalty experiments.
"""

from .bps import BpsConfig, BpsResult, bps_estimate, test_phases, unwrap_phases
from .config import RunConfig, config_echo, load_config
from .constellation import (
    Constellation,
    PilotPlan,
    awgn_ber,
    awgn_ser,
    count_bit_errors,
    count_symbol_errors,
    demap_points,
    hard_decision,
    map_bits,
)
from .harness import (
    CurveError,
    PenaltyRow,
    PointResult,
    ber_curve,
    osnr_at_target_ber,
    parse_penalty_csv,
    parse_points_csv,
    penalty_csv,
    point_seed,
    points_csv,
    run_ber_point,
    sweep_fig2a,
    sweep_fig2b,
)
from .impairments import (
    NoiseSpec,
    PhaseSpec,
    TxImpairments,
    esn0_to_osnr,
    imbalance_matrix,
    osnr_to_esn0,
    phase_path,
    raised_cosine,
    skew_taps,
    transmit,
)
from .pll import LaneResult, LmsDivergence, MimoTap, PllConfig, PllState, lms_update, pll_step, run_lane
from .rails import RailEqualizer, adapt_rails, apply_rails, rail_filter, rail_lms
from .ssp import (
    AdaptSchedule,
    SspConfig,
    SspResult,
    cycle_slip_correct,
    from_lanes,
    run_interleaved_pll,
    run_superscalar_pll,
    to_lanes,
)

__version__ = "0.1.0"
