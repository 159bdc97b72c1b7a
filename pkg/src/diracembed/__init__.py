"""Spectral toolkit for 1-periodic Dirac operators.

Band structure and Floquet frames for H = J d/dx + Q(x) with periodic
coefficients, a modified Pruefer transformation adapted to the Floquet
frame, synthesis of decaying potentials that embed prescribed
non-resonant eigenvalues into the essential spectrum, and numerical
verification of every quantitative bound the construction relies on.
"""

from .config import ENVELOPES, RunConfig
from .errors import (
    BandEdge,
    BoundViolated,
    DecayTooSlow,
    DegenerateEigenvector,
    DiracEmbedError,
    EnvelopeTooLarge,
    EnvelopeViolation,
    HorizonTooShort,
    HypothesisViolated,
    InconclusiveTail,
    NonFiniteState,
    OverlapDetected,
    PieceTooShort,
    ResonantFrequency,
    ResonantPair,
    ScanTooCoarse,
    StabilityViolated,
    StepSizeUnderflow,
    UnwrapJump,
    ZeroSolution,
)
from .floquet import (
    Band,
    BandStructure,
    DerivedPeriodicData,
    FloquetSolution,
    GapIndicator,
    Monodromy,
    band_scan,
    derived_data,
    floquet_solution,
    gamma_derivative,
    in_band_samples,
    monodromy,
    quasimomentum,
    write_period_csv,
)
from .periodic_core import (
    IntegratorSpec,
    PeriodicCoefficient,
    Trajectory,
    eval_coefficient,
    integrate,
    perturbed_rhs,
    sample_grid,
    unperturbed_rhs,
)
from .pruefer import (
    PrueferState,
    RXiRun,
    R_xi_rhs,
    R_xi_system,
    from_prufer,
    integrate_R_xi,
    prufer_rhs,
    prufer_system,
    to_prufer,
    write_trajectory_csv,
    xi_rate,
)
from .synth import (
    EmbeddingTarget,
    PotentialPiece,
    SynthesisSchedule,
    SynthesizedPotential,
    TrackRecord,
    XiTrajectory,
    assemble,
    check_nonresonance,
    choose_C,
    piece_potential,
    probe_constants,
    rebuild_potential,
    schedule,
    slaved_amplitude,
    smooth_compact,
    solve_xi,
    write_manifest,
    write_potential_csv,
)
from .verify import (
    DecayReport,
    NonembeddingReport,
    OscCheck,
    StabilityReport,
    TailReport,
    adversarial_potential,
    decay_check,
    l2_tail_estimate,
    nonembedding_check,
    oscillatory_check_41,
    oscillatory_check_42,
    stability_check,
    track_targets,
    write_reports_json,
    write_summary_csv,
)

__version__ = "0.1.0"
