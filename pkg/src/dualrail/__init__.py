"""Dual-rail cavity qubit toolkit: joint-photon-number-splitting spectra,
erasure checks, CPHASE gates, calibration and error-budget studies for two
beamsplitter-coupled bosonic modes with a dispersively coupled ancilla."""

from .backend import NUMBA_ENABLED, backend_name
from .hilbert import (
    MixedState,
    ModeLayout,
    OperatorMatrix,
    PureState,
    basis_state,
    build_mode_operators,
    expectation,
    fidelity,
    partial_trace,
    total_photon_projector,
)
from .spinmodel import (
    SpinModelParams,
    TransitionTable,
    axes_angle,
    larmor_frequency,
    transition_frequencies_general,
    transition_frequencies_symmetric,
    transition_matrix_elements,
    wigner_small_d,
)
from .pulses import (
    BeamsplitterDrive,
    ChoppedGaussian,
    DriveSchedule,
    SquarePulse,
    erasure_check_guess,
    gaussian_envelope,
    joint_parity_schedule,
    square_check_schedule,
    square_envelope,
)
from .evolve import (
    CollapseSet,
    EvolveError,
    NoiseParams,
    Trajectory,
    assemble_hamiltonian,
    collapse_operators,
    evolve_lindblad,
    evolve_schrodinger,
    tphi_from_t2r,
)

__version__ = "0.1.0"
