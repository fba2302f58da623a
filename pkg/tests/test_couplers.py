import itertools
import math

import numpy as np
import pytest

from modebell.couplers import (
    CouplerKind,
    CouplerSpec,
    ReservoirSpec,
    association_rotation_unitary,
    beam_splitter,
    beam_splitter_matrix,
    feshbach_associate,
    ideal_rotation_unitary,
    pbs_split,
    pi_pulse_transfer,
    quarter_rotation,
    required_reservoir_cutoff,
    reservoir_state,
    stark_phase,
)
from modebell.errors import SectorError
from modebell.fock import (
    ModeLabel,
    ModeRegister,
    Species,
    fidelity,
    make_state,
    partial_trace,
    tensor_product,
)

SQ2 = 1.0 / math.sqrt(2.0)


def path_register():
    return ModeRegister(
        [ModeLabel(0, Species.SPATIAL_PATH), ModeLabel(1, Species.SPATIAL_PATH)]
    )


def flying_site_register():
    return ModeRegister(
        [ModeLabel(0, Species.ATOM_B), ModeLabel(1, Species.MOLECULE_AB)]
    )


def site_with_reservoir(spec: ReservoirSpec, qubit_terms):
    base = make_state(flying_site_register(), qubit_terms)
    return tensor_product(base, reservoir_state(spec, 2))


def qubit_after_rotation(spec: ReservoirSpec, qubit_terms, angle=math.pi / 4):
    state = site_with_reservoir(spec, qubit_terms)
    out = quarter_rotation(state, 0, 1, 2, spec, angle=angle)
    return partial_trace(out, [0, 1]).matrix  # local ranks: |B> = 2, |BA> = 1


class TestReservoirSpec:
    def test_cutoff_floor_enforced(self):
        with pytest.raises(SectorError, match="too small"):
            ReservoirSpec(8.0, 10)

    def test_small_nbar_needs_extra_headroom(self):
        # nbar + 8 sqrt(nbar) = 9 captures only ~1 - 1.1e-7 of a Poisson(1)
        assert required_reservoir_cutoff(1.0) == 11
        with pytest.raises(SectorError):
            ReservoirSpec(1.0, 9)
        ReservoirSpec(1.0, 11)

    def test_frozen_floors(self):
        assert required_reservoir_cutoff(0.0) == 1
        assert required_reservoir_cutoff(32.0) == 78
        assert required_reservoir_cutoff(64.0) == 128
        assert required_reservoir_cutoff(1.0, "fock") == 2

    def test_fock_needs_integer(self):
        with pytest.raises(ValueError, match="integer"):
            ReservoirSpec(1.5, 20, "fock")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            ReservoirSpec(1.0, 20, "thermal")

    def test_coherent_state_properties(self):
        spec = ReservoirSpec(4.0, required_reservoir_cutoff(4.0))
        state = reservoir_state(spec, 0)
        assert state.norm() == pytest.approx(1.0, abs=1e-12)
        mean = sum(cfg[0] * abs(a) ** 2 for cfg, a in state.terms())
        assert mean == pytest.approx(4.0, abs=1e-6)

    def test_fock_state_is_a_delta(self):
        spec = ReservoirSpec(3.0, 8, "fock")
        state = reservoir_state(spec, 0)
        assert state.support_size() == 1
        assert abs(state.amplitude((3,))) == pytest.approx(1.0)


class TestBeamSplitter:
    def test_equal_split_reproduces_flagship_state(self):
        state = make_state(path_register(), [((1, 0), 1.0)])
        out = beam_splitter(state, 0, 1, math.pi / 4)
        assert out.amplitude((1, 0)) == pytest.approx(SQ2, abs=1e-12)
        assert out.amplitude((0, 1)) == pytest.approx(SQ2, abs=1e-12)

    def test_zero_angle_is_identity(self):
        state = make_state(path_register(), [((1, 0), 1.0)])
        out = beam_splitter(state, 0, 1, 0.0)
        assert fidelity(state, out) == pytest.approx(1.0, abs=1e-12)

    def test_reflected_input_sign_convention(self):
        state = make_state(path_register(), [((0, 1), 1.0)])
        out = beam_splitter(state, 0, 1, math.pi / 4)
        assert out.amplitude((1, 0)) == pytest.approx(-SQ2, abs=1e-12)
        assert out.amplitude((0, 1)) == pytest.approx(SQ2, abs=1e-12)
        u = beam_splitter_matrix(0.37)
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)

    def test_double_occupation_rejected(self):
        state = make_state(path_register(), [((1, 1), 1.0)])
        with pytest.raises(SectorError, match="doubly occupied"):
            beam_splitter(state, 0, 1, math.pi / 4)

    def test_species_mismatch_rejected(self):
        reg = ModeRegister(
            [ModeLabel(0, Species.SPATIAL_PATH), ModeLabel(1, Species.ATOM_A)]
        )
        state = make_state(reg, [((1, 0), 1.0)])
        with pytest.raises(ValueError, match="species"):
            beam_splitter(state, 0, 1, math.pi / 4)

    def test_composition_doubles_the_angle(self):
        rng = np.random.default_rng(20)
        theta = 0.3
        state = make_state(
            path_register(),
            [((1, 0), rng.normal() + 1j * rng.normal()),
             ((0, 1), rng.normal() + 1j * rng.normal()),
             ((0, 0), rng.normal())],
        )
        twice = beam_splitter(beam_splitter(state, 0, 1, theta), 0, 1, theta)
        once = beam_splitter(state, 0, 1, 2 * theta)
        assert fidelity(twice, once) == pytest.approx(1.0, abs=1e-10)


class TestPolarizingSplitter:
    def pbs_register(self):
        return ModeRegister(
            [
                ModeLabel(0, Species.PHOTON_H),
                ModeLabel(1, Species.PHOTON_V),
                ModeLabel(2, Species.SPATIAL_PATH),
                ModeLabel(3, Species.SPATIAL_PATH),
            ]
        )

    def test_45_degree_photon_becomes_path_superposition(self):
        state = make_state(
            self.pbs_register(), [((1, 0, 0, 0), 1.0), ((0, 1, 0, 0), 1.0)]
        )
        out = pbs_split(state, 0, 1, 2, 3)
        assert out.amplitude((0, 0, 1, 0)) == pytest.approx(SQ2, abs=1e-12)
        assert out.amplitude((0, 0, 0, 1)) == pytest.approx(SQ2, abs=1e-12)

    def test_pure_h_routes_to_path_one(self):
        state = make_state(self.pbs_register(), [((1, 0, 0, 0), 1.0)])
        out = pbs_split(state, 0, 1, 2, 3)
        assert abs(out.amplitude((0, 0, 1, 0))) == pytest.approx(1.0, abs=1e-12)

    def test_pure_v_routes_to_path_two(self):
        state = make_state(self.pbs_register(), [((0, 1, 0, 0), 1.0)])
        out = pbs_split(state, 0, 1, 2, 3)
        assert abs(out.amplitude((0, 0, 0, 1))) == pytest.approx(1.0, abs=1e-12)

    def test_occupied_output_rejected(self):
        state = make_state(self.pbs_register(), [((1, 0, 1, 0), 1.0)])
        with pytest.raises(SectorError, match="empty"):
            pbs_split(state, 0, 1, 2, 3)

    def test_species_contract_enforced(self):
        state = make_state(self.pbs_register(), [((1, 0, 0, 0), 1.0)])
        with pytest.raises(ValueError, match="photon-V"):
            pbs_split(state, 0, 0, 2, 3)


class TestPiPulse:
    def photon_atom_register(self):
        return ModeRegister(
            [
                ModeLabel(0, Species.SPATIAL_PATH),
                ModeLabel(1, Species.SPATIAL_PATH),
                ModeLabel(2, Species.ATOM_A),
                ModeLabel(3, Species.ATOM_A),
            ]
        )

    def test_armwise_transfer_builds_atom_pair_state(self):
        reg = self.photon_atom_register()
        state = make_state(reg, [((1, 0, 0, 0), 1.0), ((0, 1, 0, 0), 1.0)])
        state = pi_pulse_transfer(state, 0, 2)
        state = pi_pulse_transfer(state, 1, 3)
        target = make_state(reg, [((0, 0, 1, 0), 1.0), ((0, 0, 0, 1), 1.0)])
        assert fidelity(state, target) >= 1.0 - 1e-12
        for config, _ in state.terms():
            assert config[0] == 0 and config[1] == 0  # modes end in the vacuum

    def test_vacuum_mode_leaves_atom_ground(self):
        reg = self.photon_atom_register()
        state = make_state(reg, [((0, 0, 0, 0), 1.0)])
        out = pi_pulse_transfer(state, 0, 2)
        assert fidelity(state, out) == pytest.approx(1.0, abs=1e-12)

    def test_collision_rejected(self):
        reg = self.photon_atom_register()
        state = make_state(reg, [((1, 0, 1, 0), 1.0)])
        with pytest.raises(SectorError, match="already excited"):
            pi_pulse_transfer(state, 0, 2)

    def test_involution(self):
        reg = self.photon_atom_register()
        rng = np.random.default_rng(21)
        state = make_state(
            reg,
            [((1, 0, 0, 0), rng.normal() + 1j * rng.normal()),
             ((0, 0, 1, 0), rng.normal() + 1j * rng.normal()),
             ((0, 1, 0, 1), rng.normal())],
        )
        back = pi_pulse_transfer(pi_pulse_transfer(state, 0, 2), 0, 2)
        assert fidelity(state, back) == pytest.approx(1.0, abs=1e-12)


class TestFeshbachAssociation:
    def atom_register(self):
        return ModeRegister(
            [
                ModeLabel(0, Species.ATOM_A),
                ModeLabel(1, Species.ATOM_A),
                ModeLabel(2, Species.ATOM_B),
                ModeLabel(3, Species.ATOM_B),
                ModeLabel(4, Species.MOLECULE_AB),
                ModeLabel(5, Species.MOLECULE_AB),
            ]
        )

    def test_delocalized_atom_becomes_molecule_superposition(self):
        reg = self.atom_register()
        state = make_state(reg, [((1, 0, 1, 1, 0, 0), 1.0), ((0, 1, 1, 1, 0, 0), 1.0)])
        state = feshbach_associate(state, 0, 2, 4)
        state = feshbach_associate(state, 1, 3, 5)
        target = make_state(reg, [((0, 0, 0, 1, 1, 0), 1.0), ((0, 0, 1, 0, 0, 1), 1.0)])
        assert fidelity(state, target) >= 1.0 - 1e-12
        for config, _ in state.terms():
            assert config[0] == 0 and config[1] == 0  # traps left empty

    def test_empty_trap_passes_beam_unchanged(self):
        reg = self.atom_register()
        state = make_state(reg, [((0, 0, 1, 1, 0, 0), 1.0)])
        out = feshbach_associate(state, 0, 2, 4)
        assert fidelity(state, out) == pytest.approx(1.0, abs=1e-12)

    def test_norm_preserved_on_legal_superpositions(self):
        reg = self.atom_register()
        rng = np.random.default_rng(22)
        for _ in range(10):
            state = make_state(
                reg,
                [((1, 0, 1, 0, 0, 0), rng.normal() + 1j * rng.normal()),
                 ((0, 0, 1, 0, 0, 0), rng.normal() + 1j * rng.normal()),
                 ((0, 0, 0, 0, 1, 0), rng.normal() + 1j * rng.normal())],
            )
            out = feshbach_associate(state, 0, 2, 4)
            assert out.norm() == pytest.approx(1.0, abs=1e-12)

    def test_missing_partner_flagged(self):
        reg = self.atom_register()
        state = make_state(reg, [((1, 0, 0, 0, 0, 0), 1.0)])
        with pytest.raises(SectorError, match="incomplete association"):
            feshbach_associate(state, 0, 2, 4)

    def test_occupied_molecule_slot_rejected(self):
        reg = self.atom_register()
        state = make_state(reg, [((1, 0, 1, 0, 1, 0), 1.0)])
        with pytest.raises(SectorError, match="molecule slot"):
            feshbach_associate(state, 0, 2, 4)

    def test_involution(self):
        reg = self.atom_register()
        state = make_state(reg, [((1, 0, 1, 1, 0, 0), 1.0), ((0, 1, 1, 1, 0, 0), 1.0)])
        once = feshbach_associate(state, 0, 2, 4)
        back = feshbach_associate(once, 0, 2, 4)
        assert fidelity(state, back) == pytest.approx(1.0, abs=1e-12)

    def test_species_contract_enforced(self):
        reg = self.atom_register()
        state = make_state(reg, [((0, 0, 1, 0, 0, 0), 1.0)])
        with pytest.raises(ValueError, match="atom-A"):
            feshbach_associate(state, 2, 0, 4)


class TestStarkPhase:
    def molecule_pair_register(self):
        return ModeRegister(
            [
                ModeLabel(0, Species.ATOM_B),
                ModeLabel(1, Species.ATOM_B),
                ModeLabel(2, Species.MOLECULE_AB),
                ModeLabel(3, Species.MOLECULE_AB),
            ]
        )

    def molecule_atom_bell(self):
        # (|mol, at> + |at, mol>)/sqrt(2): molecule at site 1 in the first ket
        return make_state(
            self.molecule_pair_register(),
            [((0, 1, 1, 0), 1.0), ((1, 0, 0, 1), 1.0)],
        )

    def test_zero_phase_is_identity(self):
        state = self.molecule_atom_bell()
        out = stark_phase(state, 2, 0, 0.0)
        assert fidelity(state, out) == pytest.approx(1.0, abs=1e-12)

    def test_pi_phase_flips_relative_sign(self):
        state = self.molecule_atom_bell()
        out = stark_phase(state, 2, 0, math.pi)
        target = make_state(
            self.molecule_pair_register(),
            [((0, 1, 1, 0), 1.0), ((1, 0, 0, 1), -1.0)],
        )
        assert fidelity(out, target) >= 1.0 - 1e-12

    def test_phases_compose_additively(self):
        state = self.molecule_atom_bell()
        chained = stark_phase(stark_phase(state, 2, 0, 0.4), 2, 0, 0.9)
        direct = stark_phase(state, 2, 0, 1.3)
        assert fidelity(chained, direct) >= 1.0 - 1e-12


class TestQuarterRotation:
    def test_large_coherent_reservoir_approaches_ideal_rotation(self):
        # Choi-state process fidelity against the ideal quarter rotation.
        spec = ReservoirSpec(64.0, required_reservoir_cutoff(64.0))
        reg = ModeRegister(
            [
                ModeLabel(0, Species.ATOM_B),
                ModeLabel(1, Species.MOLECULE_AB),
                ModeLabel(3, Species.ATOM_B),
                ModeLabel(4, Species.MOLECULE_AB),
            ]
        )
        # flying site maximally entangled with a bystander copy
        state = make_state(reg, [((1, 0, 1, 0), 1.0), ((0, 1, 0, 1), 1.0)])
        state = tensor_product(state, reservoir_state(spec, 2))
        out = quarter_rotation(state, 0, 1, 2, spec)
        choi = partial_trace(out, [0, 1, 3, 4]).matrix

        u = ideal_rotation_unitary(4, 2, 1, math.pi / 4)
        ideal_vec = np.zeros(16, dtype=complex)
        for site, anc in (((1, 0), (1, 0)), ((0, 1), (0, 1))):
            rotated = u @ np.eye(4)[site[0] * 2 + site[1]]
            for k in range(4):
                anc_rank = anc[0] * 2 + anc[1]
                ideal_vec[k * 4 + anc_rank] += rotated[k] / math.sqrt(2.0)
        process_fidelity = float(np.real(np.conj(ideal_vec) @ choi @ ideal_vec))
        assert process_fidelity >= 0.99

    def test_fock_reservoir_destroys_coherence(self):
        coherent = ReservoirSpec(1.0, required_reservoir_cutoff(1.0))
        fock = ReservoirSpec(1.0, required_reservoir_cutoff(1.0, "fock"), "fock")
        rho_c = qubit_after_rotation(coherent, [((1, 0), 1.0)])
        rho_f = qubit_after_rotation(fock, [((1, 0), 1.0)])
        coh_c = abs(rho_c[2, 1])
        coh_f = abs(rho_f[2, 1])
        assert coh_f < coh_c - 0.05
        assert coh_f < 1e-12  # orthogonal which-path records

    def test_empty_trap_means_nothing_to_associate(self):
        spec = ReservoirSpec(0.0, 4)
        state = site_with_reservoir(spec, [((1, 0), 1.0)])
        out = quarter_rotation(state, 0, 1, 2, spec)
        assert fidelity(state, out) == pytest.approx(1.0, abs=1e-12)

    def test_coherence_monotone_in_nbar(self):
        previous = -1.0
        for nbar in (1, 2, 4, 8, 16, 32):
            spec = ReservoirSpec(float(nbar), required_reservoir_cutoff(float(nbar)))
            rho = qubit_after_rotation(spec, [((1, 0), 1.0)])
            coherence = abs(rho[2, 1])
            assert coherence >= previous - 1e-12
            previous = coherence

    def test_cutoff_mismatch_rejected(self):
        spec = ReservoirSpec(1.0, 11)
        reg = ModeRegister(
            [
                ModeLabel(0, Species.ATOM_B),
                ModeLabel(1, Species.MOLECULE_AB),
                ModeLabel(2, Species.RESERVOIR_TRAP, cutoff=5),
            ]
        )
        state = make_state(reg, [((1, 0, 0), 1.0)])
        with pytest.raises(ValueError, match="cutoff"):
            quarter_rotation(state, 0, 1, 2, spec)

    def test_rotation_unitary_is_unitary(self):
        for nbar in (0.0, 1.0, 7.5):
            u = association_rotation_unitary(4, 2, 1, 12, nbar, 1.1)
            assert np.allclose(u.conj().T @ u, np.eye(48), atol=1e-12)

    def test_norm_preserved_through_rotation(self):
        spec = ReservoirSpec(2.0, required_reservoir_cutoff(2.0))
        state = site_with_reservoir(spec, [((1, 0), 1.0), ((0, 1), 0.5 + 0.5j)])
        out = quarter_rotation(state, 0, 1, 2, spec, angle=0.83)
        assert out.norm() == pytest.approx(1.0, abs=1e-10)


class TestCouplerSpec:
    def test_arity_enforced(self):
        with pytest.raises(ValueError, match="2 modes"):
            CouplerSpec(CouplerKind.BEAM_SPLITTER, (0, 1, 2))

    def test_angles_normalized(self):
        spec = CouplerSpec(CouplerKind.BEAM_SPLITTER, (0, 1), theta=2 * math.pi + 0.5)
        assert spec.theta == pytest.approx(0.5)

    def test_apply_dispatches(self):
        state = make_state(path_register(), [((1, 0), 1.0)])
        spec = CouplerSpec(CouplerKind.BEAM_SPLITTER, (0, 1), theta=math.pi / 4)
        out = spec.apply(state)
        assert out.amplitude((0, 1)) == pytest.approx(SQ2, abs=1e-12)

    def test_quarter_rotation_needs_reservoir(self):
        with pytest.raises(ValueError, match="reservoir"):
            CouplerSpec(CouplerKind.QUARTER_ROTATION, (0, 1, 2))
