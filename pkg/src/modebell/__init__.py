"""Exact simulator for single-particle occupation-number entanglement."""

from .errors import ConfigError, InvariantError, ModeBellError, SectorError
from .fock import (
    Configuration,
    DensityOperator,
    ModeLabel,
    ModeRegister,
    PureState,
    Species,
    apply_unitary_on_modes,
    factor_out_modes,
    fidelity,
    inner_product,
    make_state,
    partial_trace,
    tensor_product,
)
from .tps import (
    OscillatorGroundState,
    OscillatorPair,
    SchmidtDecomposition,
    TensorProductStructure,
    conjugated_tps,
    coupled_oscillator_entropy,
    entanglement_entropy,
    entropy_of_state,
    factorizing_tps,
    gaussian_ground_state_entropy_bits,
    negativity,
    schmidt,
)
from .couplers import (
    CouplerKind,
    CouplerSpec,
    ReservoirSpec,
    beam_splitter,
    beam_splitter_matrix,
    feshbach_associate,
    pbs_split,
    pi_pulse_transfer,
    quarter_rotation,
    required_reservoir_cutoff,
    reservoir_state,
    stark_phase,
)
from .bell import (
    ChshEstimate,
    MeasurementLayout,
    MeasurementSetting,
    ShotBatch,
    ShotRecord,
    Site,
    chsh,
    correlator,
    joint_outcome_distribution,
    measure_site,
    optimize_chsh_angles,
    write_shots_csv,
)

__version__ = "0.1.0"
