"""Physical couplers: beam splitter, polarizing splitter, pi-pulse transfer,
molecule association, Stark phase, and reservoir-assisted partial rotations.

All couplers are norm-preserving on their legal sector and return new states.
Sign conventions are fixed so that a 50/50 beam splitter sends |10> to
(|10> + |01>)/sqrt(2), and the quarter-period association rotation realizes
|B>  -> (|B> + |BA>)/sqrt(2),  |BA> -> (|BA> - |B>)/sqrt(2)
in the large-reference limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import SectorError
from .fock import (
    ModeLabel,
    ModeRegister,
    PureState,
    Species,
    apply_unitary_on_modes,
)

TWO_PI = 2.0 * math.pi


class CouplerKind(str, Enum):
    BEAM_SPLITTER = "beam-splitter"
    PBS = "pbs"
    PI_PULSE = "pi-pulse"
    FESHBACH_ASSOCIATE = "feshbach-associate"
    STARK_PHASE = "stark-phase"
    QUARTER_ROTATION = "quarter-rotation"


_COUPLER_ARITY = {
    CouplerKind.BEAM_SPLITTER: 2,
    CouplerKind.PBS: 4,
    CouplerKind.PI_PULSE: 2,
    CouplerKind.FESHBACH_ASSOCIATE: 3,
    CouplerKind.STARK_PHASE: 2,
    CouplerKind.QUARTER_ROTATION: 3,
}


@dataclass(frozen=True)
class ReservoirSpec:
    """Reference trap preparation: mean occupation, truncation, and kind.

    A coherent reservoir erases which-path information in the particle number
    and enables number-nonconserving local rotations; a Fock reservoir with a
    definite number cannot. The cutoff must capture at least 1 - 1e-8 of the
    coherent state's norm, enforced as cutoff >= nbar + 8 sqrt(nbar). A Fock
    reservoir needs one level of headroom for the dissociation branch.
    """

    nbar: float
    cutoff: int
    kind: str = "coherent"

    def __post_init__(self):
        if self.kind not in ("coherent", "fock"):
            raise ValueError(f"unknown reservoir kind {self.kind!r}")
        if self.nbar < 0:
            raise ValueError(f"mean occupation must be >= 0, got {self.nbar}")
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")
        if self.kind == "fock" and abs(self.nbar - round(self.nbar)) > 1e-9:
            raise ValueError(f"fock reservoir needs an integer occupation, got {self.nbar}")
        floor = required_reservoir_cutoff(self.nbar, self.kind)
        if self.cutoff < floor:
            raise SectorError(
                f"reservoir cutoff {self.cutoff} too small for nbar={self.nbar} "
                f"({self.kind}); need >= {floor}"
            )


def required_reservoir_cutoff(nbar: float, kind: str = "coherent") -> int:
    """Smallest admissible truncation for a reservoir of the given kind.

    Coherent reservoirs must satisfy both the nbar + 8 sqrt(nbar) floor and
    the 1 - 1e-8 norm-capture requirement; at small nbar the Poisson tail is
    fatter than the Gaussian floor suggests, so the cutoff is raised until the
    capture holds.
    """
    if kind == "fock":
        return max(1, int(round(nbar)) + 1)
    cutoff = max(1, math.ceil(nbar + 8.0 * math.sqrt(nbar)))
    if nbar > 0.0:
        weight = math.exp(-nbar)
        captured = weight
        for n in range(1, cutoff + 1):
            weight *= nbar / n
            captured += weight
        while captured < 1.0 - 1e-8:
            cutoff += 1
            weight *= nbar / cutoff
            captured += weight
    return cutoff


def reservoir_mode(spec: ReservoirSpec, mode_id: int) -> ModeLabel:
    return ModeLabel(mode_id, Species.RESERVOIR_TRAP, cutoff=spec.cutoff)


def reservoir_amplitudes(spec: ReservoirSpec) -> np.ndarray:
    """Occupation amplitudes of the prepared reservoir (length cutoff + 1)."""
    amps = np.zeros(spec.cutoff + 1)
    if spec.kind == "fock":
        amps[int(round(spec.nbar))] = 1.0
        return amps
    # Truncated coherent state with real amplitude sqrt(nbar); the stable
    # multiplicative recursion avoids factorial overflow at large nbar.
    amps[0] = math.exp(-spec.nbar / 2.0)
    for n in range(1, spec.cutoff + 1):
        amps[n] = amps[n - 1] * math.sqrt(spec.nbar / n)
    captured = float(np.sum(amps**2))
    if captured < 1.0 - 1e-8:
        raise SectorError(
            f"coherent truncation captures only {captured:.12f} of the norm "
            f"at cutoff {spec.cutoff} (nbar={spec.nbar})"
        )
    return amps / math.sqrt(captured)


def reservoir_state(spec: ReservoirSpec, mode_id: int) -> PureState:
    """Single-mode PureState holding the prepared reservoir."""
    register = ModeRegister([reservoir_mode(spec, mode_id)])
    amps = reservoir_amplitudes(spec)
    return PureState(
        register, {n: complex(a) for n, a in enumerate(amps) if abs(a) > 1e-14}
    )


@dataclass(frozen=True)
class CouplerSpec:
    """Declarative form of a coupler: kind, target modes, angle, phase."""

    kind: CouplerKind
    modes: tuple[int, ...]
    theta: float = 0.0
    phi: float = 0.0
    reservoir: Optional[ReservoirSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)
        arity = _COUPLER_ARITY[CouplerKind(self.kind)]
        if len(self.modes) != arity:
            raise ValueError(
                f"{self.kind} takes {arity} modes, got {len(self.modes)}"
            )
        if self.kind == CouplerKind.QUARTER_ROTATION and self.reservoir is None:
            raise ValueError("quarter-rotation needs a reservoir spec")

    def apply(self, state: PureState) -> PureState:
        kind = CouplerKind(self.kind)
        if kind == CouplerKind.BEAM_SPLITTER:
            return beam_splitter(state, *self.modes, self.theta)
        if kind == CouplerKind.PBS:
            return pbs_split(state, *self.modes)
        if kind == CouplerKind.PI_PULSE:
            return pi_pulse_transfer(state, *self.modes)
        if kind == CouplerKind.FESHBACH_ASSOCIATE:
            return feshbach_associate(state, *self.modes)
        if kind == CouplerKind.STARK_PHASE:
            return stark_phase(state, *self.modes, self.phi)
        return quarter_rotation(state, *self.modes, self.reservoir, angle=self.theta)


def beam_splitter_matrix(theta: float) -> np.ndarray:
    """4x4 unitary on two single-occupancy modes, mixing the one-particle
    amplitudes by the real rotation [[cos, -sin], [sin, cos]] ordered
    (|10>, |01>); vacuum and double occupation are untouched."""
    c, s = math.cos(theta), math.sin(theta)
    u = np.eye(4, dtype=complex)
    # local ranks for two cutoff-1 modes: |00>=0, |01>=1, |10>=2, |11>=3
    u[2, 2] = c
    u[1, 2] = s
    u[2, 1] = -s
    u[1, 1] = c
    return u


def _require_cutoff_one(state: PureState, mode_ids: Sequence[int], what: str) -> None:
    for i in mode_ids:
        m = state.register.mode(i)
        if m.cutoff != 1:
            raise ValueError(f"{what}: mode {i} must be two-level (cutoff 1), has {m.cutoff}")


def beam_splitter(
    state: PureState, path_a: int, path_b: int, theta: float
) -> PureState:
    """Mix two same-species single-occupancy modes by angle theta.

    theta = pi/4 is the 50/50 splitter: |10> -> (|10> + |01>)/sqrt(2).
    Rejects states with both modes occupied (outside the single-particle
    model).
    """
    ma, mb = state.register.mode(path_a), state.register.mode(path_b)
    if ma.species != mb.species:
        raise ValueError(
            f"beam splitter couples equal species, got {ma.species.value} / {mb.species.value}"
        )
    _require_cutoff_one(state, (path_a, path_b), "beam_splitter")
    pa, pb = state.register.position(path_a), state.register.position(path_b)
    for config, _ in state.terms():
        if config[pa] + config[pb] > 1:
            raise SectorError(
                f"beam_splitter: modes {path_a},{path_b} doubly occupied in |"
                + "".join(map(str, config)) + ">"
            )
    return apply_unitary_on_modes(state, (path_a, path_b), beam_splitter_matrix(theta))


_SWAP4 = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def pbs_split(
    state: PureState, pol_h: int, pol_v: int, out_path_1: int, out_path_2: int
) -> PureState:
    """Route the H polarization mode to path 1 and V to path 2.

    A 45-degree photon (|10> + |01>)/sqrt(2) over (H, V) becomes the same
    superposition over the two spatial paths, with the polarization modes left
    in the vacuum.
    """
    reg = state.register
    expected = {
        pol_h: Species.PHOTON_H,
        pol_v: Species.PHOTON_V,
        out_path_1: Species.SPATIAL_PATH,
        out_path_2: Species.SPATIAL_PATH,
    }
    for mode_id, species in expected.items():
        if reg.mode(mode_id).species != species:
            raise ValueError(
                f"pbs_split: mode {mode_id} should be {species.value}, "
                f"is {reg.mode(mode_id).species.value}"
            )
    _require_cutoff_one(state, expected, "pbs_split")
    p1, p2 = reg.position(out_path_1), reg.position(out_path_2)
    for config, _ in state.terms():
        if config[p1] or config[p2]:
            raise SectorError("pbs_split: output paths must start empty")
    state = apply_unitary_on_modes(state, (pol_h, out_path_1), _SWAP4)
    return apply_unitary_on_modes(state, (pol_v, out_path_2), _SWAP4)


def _permute_configurations(state: PureState, positions, table, op_name) -> PureState:
    """Remap occupations at the given positions through a lookup table.

    table maps an occupation tuple either to a new tuple or to an error
    message (str) naming the illegal sector.
    """
    reg = state.register
    amps: dict[int, complex] = {}
    for config, amp in state.terms():
        key = tuple(config[p] for p in positions)
        try:
            result = table[key]
        except KeyError:
            raise SectorError(f"{op_name}: occupations {key} outside the model") from None
        if isinstance(result, str):
            raise SectorError(f"{op_name}: {result} in |" + "".join(map(str, config)) + ">")
        new_config = list(config)
        for p, n in zip(positions, result):
            new_config[p] = n
        amps[reg.rank(new_config)] = amp
    return PureState(reg, amps)


def pi_pulse_transfer(state: PureState, photon_mode: int, atom_mode: int) -> PureState:
    """Swap a single excitation from a field mode onto a two-level atom.

    The photon is absorbed and the atom excited (and vice versa: the coupler
    is its own inverse). Rejects configurations holding both an excitation and
    an excited atom, the collision the two-level model cannot represent.
    """
    _require_cutoff_one(state, (atom_mode,), "pi_pulse_transfer")
    positions = (state.register.position(photon_mode), state.register.position(atom_mode))
    table = {
        (0, 0): (0, 0),
        (1, 0): (0, 1),
        (0, 1): (1, 0),
        (1, 1): "atom already excited while the mode is occupied",
    }
    return _permute_configurations(state, positions, table, "pi_pulse_transfer")


def feshbach_associate(
    state: PureState, trap_mode: int, beam_mode: int, molecule_mode: int
) -> PureState:
    """Coherently convert a trapped A atom plus a beam B atom into a molecule.

    Where A and B are both present, both are annihilated and the molecule is
    created, leaving the trap empty; the reverse conversion dissociates. A
    beam atom passing an empty trap is unchanged. An A atom with no B partner
    is flagged as an incomplete association (the model assumes one B per
    beam).
    """
    reg = state.register
    species = {
        trap_mode: Species.ATOM_A,
        beam_mode: Species.ATOM_B,
        molecule_mode: Species.MOLECULE_AB,
    }
    for mode_id, sp in species.items():
        if reg.mode(mode_id).species != sp:
            raise ValueError(
                f"feshbach_associate: mode {mode_id} should be {sp.value}, "
                f"is {reg.mode(mode_id).species.value}"
            )
    _require_cutoff_one(state, species, "feshbach_associate")
    positions = tuple(reg.position(i) for i in (trap_mode, beam_mode, molecule_mode))
    table = {
        (0, 0, 0): (0, 0, 0),
        (0, 1, 0): (0, 1, 0),
        (1, 1, 0): (0, 0, 1),
        (0, 0, 1): (1, 1, 0),
        (1, 0, 0): "incomplete association: A atom present with no B partner",
        (1, 0, 1): "incomplete association: A atom present with no B partner",
        (1, 1, 1): "molecule slot already occupied",
        (0, 1, 1): "dissociation blocked: beam slot already occupied",
    }
    return _permute_configurations(state, positions, table, "feshbach_associate")


def stark_phase(
    state: PureState, molecule_mode: int, atom_mode: int, phi: float
) -> PureState:
    """Give configurations holding a molecule at this site the phase e^{i phi}
    relative to atom-only configurations (a DC field shifts the two species
    differently). Additive in phi."""
    reg = state.register
    reg.mode(atom_mode)  # the partner mode defines the site; must exist
    pos = reg.position(molecule_mode)
    phase = complex(math.cos(phi), math.sin(phi))
    amps = {}
    for r, amp in state.amplitudes.items():
        if reg.unrank(r)[pos] >= 1:
            amps[r] = amp * phase
        else:
            amps[r] = amp
    return PureState(reg, amps)


def association_rotation_unitary(
    site_dim: int,
    minus_rank: int,
    plus_rank: int,
    reservoir_levels: int,
    nbar: float,
    angle: float,
) -> np.ndarray:
    """Unitary for a Rabi-style rotation between two site configurations,
    mediated by a number reservoir.

    The pair |minus, n> <-> |plus, n-1> rotates by angle * sqrt(n / nbar):
    the coupling scales with sqrt(n) like a Jaynes-Cummings ladder, and the
    interaction time is calibrated to the mean occupation, so the sector at
    n = nbar rotates by exactly `angle`. |minus, 0> has nothing to associate
    with and |plus, N> has nowhere to dissociate to; both stay fixed. An empty
    reservoir (nbar = 0) cannot calibrate an interaction time and degenerates
    to the identity.

    Local index convention: site rank major, reservoir occupation minor.
    """
    dim = site_dim * reservoir_levels
    u = np.eye(dim, dtype=complex)
    if nbar == 0.0:
        return u
    for n in range(1, reservoir_levels):
        theta = angle * math.sqrt(n / nbar)
        c, s = math.cos(theta), math.sin(theta)
        i_minus = minus_rank * reservoir_levels + n
        i_plus = plus_rank * reservoir_levels + (n - 1)
        u[i_minus, i_minus] = c
        u[i_plus, i_minus] = s
        u[i_plus, i_plus] = c
        u[i_minus, i_plus] = -s
    return u


def ideal_rotation_unitary(
    site_dim: int, minus_rank: int, plus_rank: int, angle: float
) -> np.ndarray:
    """Infinite-reference limit of the association rotation: a plain rotation
    between the two site configurations."""
    c, s = math.cos(angle), math.sin(angle)
    u = np.eye(site_dim, dtype=complex)
    u[minus_rank, minus_rank] = c
    u[plus_rank, minus_rank] = s
    u[plus_rank, plus_rank] = c
    u[minus_rank, plus_rank] = -s
    return u


def quarter_rotation(
    state: PureState,
    beam_mode: int,
    molecule_mode: int,
    reservoir_trap: int,
    spec: ReservoirSpec,
    angle: float = math.pi / 4.0,
) -> PureState:
    """Rotate the flying-site qubit {|B>, |BA>} via association with a
    reservoir trap of A atoms.

    At the default quarter-period angle pi/4 and a large coherent reservoir,
    the reduced map on the flying site approaches the ideal rotation
    |B> -> (|B> + |BA>)/sqrt(2), |BA> -> (|BA> - |B>)/sqrt(2). With a definite
    (Fock) occupation the reservoir keeps which-path information and the
    site's coherence is destroyed instead.

    The reservoir trap mode must already be in the state's register, prepared
    per the spec (see reservoir_state / tensor_product).
    """
    reg = state.register
    _require_cutoff_one(state, (beam_mode, molecule_mode), "quarter_rotation")
    res = reg.mode(reservoir_trap)
    if res.species != Species.RESERVOIR_TRAP:
        raise ValueError(f"mode {reservoir_trap} is not a reservoir trap")
    if res.cutoff != spec.cutoff:
        raise ValueError(
            f"reservoir mode cutoff {res.cutoff} does not match spec cutoff {spec.cutoff}"
        )
    levels = spec.cutoff + 1
    # site local ranks over (beam, molecule): |B>=(1,0) -> 2, |BA>=(0,1) -> 1
    u = association_rotation_unitary(4, 2, 1, levels, spec.nbar, angle)
    return apply_unitary_on_modes(
        state, (beam_mode, molecule_mode, reservoir_trap), u
    )
