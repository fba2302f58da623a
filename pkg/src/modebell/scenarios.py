"""End-to-end scenario runners with config files, seeded runs, and artifacts.

Each runner reproduces one of the flagship pipelines: the single-photon arm
(beam splitter then pi-pulse transfer onto two atoms), the single-atom arm
(trap superposition, molecule association, Stark phase, reservoir-assisted
readout), the structure-relativity demo, and the coupled-oscillator ground
state. Runners return a RunReport and, when an output directory is given,
write report.json plus CSV files and matplotlib figures alongside.

Determinism: identical configs (including the seed) produce byte-identical
CSV files and identical numeric report fields; wall_clock_s is the one
reported field that varies between runs.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import plots
from .bell import (
    ChshEstimate,
    MeasurementLayout,
    Site,
    chsh,
    correlator,
    optimize_chsh_angles,
    write_shots_csv,
)
from .couplers import (
    ReservoirSpec,
    beam_splitter,
    beam_splitter_matrix,
    feshbach_associate,
    pi_pulse_transfer,
    required_reservoir_cutoff,
    stark_phase,
)
from .errors import ConfigError, SectorError
from .fock import (
    ModeLabel,
    ModeRegister,
    PureState,
    Species,
    factor_out_modes,
    fidelity,
    make_state,
    partial_trace,
)
from .tps import (
    OscillatorPair,
    TensorProductStructure,
    conjugated_tps,
    coupled_oscillator_entropy,
    entropy_of_state,
    factorizing_tps,
    gaussian_ground_state_entropy_bits,
    schmidt,
)

SCENARIOS = ("photon", "atom", "tps-demo", "oscillator-demo")


@dataclass
class PhotonConfig:
    theta: float = math.pi / 4.0
    angle_source: str = "optimized"  # "optimized" | "explicit"
    angles: Optional[list[float]] = None


@dataclass
class AtomConfig:
    nbar: float = 8.0
    reservoir_kind: str = "coherent"  # "coherent" | "fock" | "none"
    reservoir_cutoff: Optional[int] = None  # None: smallest admissible
    stark_phi: float = 0.0
    capability: str = "superselected"  # "full" | "superselected"
    angle_source: str = "optimized"
    angles: Optional[list[float]] = None
    nbar_sweep: Optional[list[float]] = None


@dataclass
class TpsConfig:
    dim: int = 4
    factor_m: Optional[int] = None  # None: smallest nontrivial factorization
    factor_n: Optional[int] = None
    random_states: int = 20


@dataclass
class OscillatorConfig:
    mass: float = 1.0
    omega: float = 1.0
    cutoff: int = 24
    coupling_ratios: list[float] = field(
        default_factory=lambda: [round(0.1 * k, 1) for k in range(9)]
    )


@dataclass
class ExperimentConfig:
    scenario: str = "photon"
    seed: int = 7
    shots: int = 20000
    mode: str = "exact"  # "exact" | "sampled"
    figures: bool = True
    out_dir: Optional[str] = None
    photon: PhotonConfig = field(default_factory=PhotonConfig)
    atom: AtomConfig = field(default_factory=AtomConfig)
    tps: TpsConfig = field(default_factory=TpsConfig)
    oscillator: OscillatorConfig = field(default_factory=OscillatorConfig)

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ConfigError(f"seed must fit in u64, got {self.seed}")
        if self.mode not in ("exact", "sampled"):
            raise ConfigError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        for name, section in (("photon", self.photon), ("atom", self.atom)):
            if section.angle_source not in ("optimized", "explicit"):
                raise ConfigError(f"{name}.angle_source must be 'optimized' or 'explicit'")
            if section.angle_source == "explicit":
                if section.angles is None or len(section.angles) != 4:
                    raise ConfigError(
                        f"{name}.angles must hold four angles (a, a', b, b') "
                        "when angle_source is 'explicit'"
                    )
        if self.atom.reservoir_kind not in ("coherent", "fock", "none"):
            raise ConfigError(
                f"atom.reservoir_kind must be coherent, fock, or none, "
                f"got {self.atom.reservoir_kind!r}"
            )
        if self.atom.capability not in ("full", "superselected"):
            raise ConfigError(
                f"atom.capability must be 'full' or 'superselected', "
                f"got {self.atom.capability!r}"
            )
        if self.atom.nbar < 0:
            raise ConfigError(f"atom.nbar must be >= 0, got {self.atom.nbar}")
        if self.tps.random_states < 0:
            raise ConfigError("tps.random_states must be >= 0")
        if self.oscillator.cutoff < 8:
            raise ConfigError(f"oscillator.cutoff must be >= 8, got {self.oscillator.cutoff}")
        return self

    def semantic_dict(self) -> dict:
        """Fields that affect the run's numbers: common knobs plus the active
        scenario's section. Output paths and figure toggles are excluded."""
        section_key = {
            "photon": "photon",
            "atom": "atom",
            "tps-demo": "tps",
            "oscillator-demo": "oscillator",
        }[self.scenario]
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "shots": self.shots,
            "mode": self.mode,
            section_key: asdict(getattr(self, section_key)),
        }

    def hash(self) -> str:
        text = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        sections = {}
        for key, section_cls in (
            ("photon", PhotonConfig),
            ("atom", AtomConfig),
            ("tps", TpsConfig),
            ("oscillator", OscillatorConfig),
        ):
            raw = data.pop(key, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            known = {f for f in section_cls.__dataclass_fields__}
            unknown = set(raw) - known
            if unknown:
                raise ConfigError(f"unknown fields in {key!r}: {sorted(unknown)}")
            sections[key] = section_cls(**raw)
        known = {"scenario", "seed", "shots", "mode", "figures", "out_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data, **sections).validate()


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return ExperimentConfig.from_dict(data)


@dataclass
class RunReport:
    scenario: str
    config_hash: str
    stage_entropies: list[dict]
    chsh: Optional[dict]
    extras: dict
    outputs: list[str]
    wall_clock_s: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _estimate_dict(est: ChshEstimate, angles) -> dict:
    return {
        "angles": [float(x) for x in angles],
        "e_ab": est.e_ab,
        "e_abp": est.e_abp,
        "e_apb": est.e_apb,
        "e_apbp": est.e_apbp,
        "s_value": est.s_value,
        "std_error": est.std_error,
        "shots": est.shots,
    }


def _arm_entropy(state: PureState, left_mode_ids) -> float:
    structure = TensorProductStructure.from_register_bipartition(
        state.register, list(left_mode_ids)
    )
    return entropy_of_state(state, structure)


def write_sweep_csv(path, rows) -> None:
    """Two-column sweep file: parameter, value."""
    with open(path, "w", newline="\n") as fh:
        fh.write("parameter,value\n")
        for param, value in rows:
            fh.write(f"{format(param, '.17g')},{format(value, '.17g')}\n")


class _ArtifactWriter:
    def __init__(self, config: ExperimentConfig):
        self.dir = Path(config.out_dir) if config.out_dir else None
        self.figures = config.figures
        self.outputs: list[str] = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Optional[Path]:
        if self.dir is None:
            return None
        self.outputs.append(name)
        return self.dir / name

    def want_figure(self) -> bool:
        return self.dir is not None and self.figures

    def finish(self, report: RunReport) -> RunReport:
        report.outputs = list(self.outputs)
        if self.dir is not None:
            out = self.dir / "report.json"
            report.outputs.append("report.json")
            out.write_text(report.to_json() + "\n")
        return report


def _resolve_angles(section, state, layout) -> tuple[tuple[float, float, float, float], Optional[float]]:
    if section.angle_source == "explicit":
        return tuple(float(x) for x in section.angles), None
    angles, s_star = optimize_chsh_angles(state, layout)
    return angles, s_star


def run_photon_scenario(config: ExperimentConfig) -> RunReport:
    """Single photon split over two paths, transferred onto two atoms, then a
    CHSH test on the atom pair."""
    config.validate()
    t0 = time.perf_counter()
    writer = _ArtifactWriter(config)
    path1, path2, atom1, atom2 = 0, 1, 2, 3
    register = ModeRegister(
        [
            ModeLabel(path1, Species.SPATIAL_PATH),
            ModeLabel(path2, Species.SPATIAL_PATH),
            ModeLabel(atom1, Species.ATOM_A),
            ModeLabel(atom2, Species.ATOM_A),
        ]
    )
    arm1 = [path1, atom1]
    state = make_state(register, [((1, 0, 0, 0), 1.0)])
    stages = [{"stage": "initial", "bits": _arm_entropy(state, arm1)}]

    state = beam_splitter(state, path1, path2, config.photon.theta)
    stages.append({"stage": "after-beam-splitter", "bits": _arm_entropy(state, arm1)})

    state = pi_pulse_transfer(state, path1, atom1)
    state = pi_pulse_transfer(state, path2, atom2)
    stages.append({"stage": "after-transfer", "bits": _arm_entropy(state, arm1)})

    target = make_state(register, [((0, 0, 1, 0), 1.0), ((0, 0, 0, 1), 1.0)])
    bell_fidelity = fidelity(state, target)

    layout = MeasurementLayout(
        site1=Site("beam-1", (atom1,), (0,), (1,), +1),
        site2=Site("beam-2", (atom2,), (0,), (1,), -1),
        capability="full",
    )
    angles, s_star = _resolve_angles(config.photon, state, layout)
    exact = chsh(state, layout, angles, mode="exact")
    estimate = exact
    if config.mode == "sampled":
        estimate = chsh(
            state, layout, angles, mode="sampled", shots=config.shots,
            root_seed=config.seed, keep_shots=True,
        )
        csv_path = writer.path("shots.csv")
        if csv_path is not None:
            write_shots_csv(csv_path, estimate.batches)

    extras = {
        "theta": config.photon.theta,
        "bell_state_fidelity": bell_fidelity,
        "s_exact": exact.s_value,
    }
    if s_star is not None:
        extras["s_optimum"] = s_star

    if writer.want_figure():
        grid = np.linspace(0.0, math.pi, 97)
        fringe = [correlator(state, layout, float(x), angles[2]) for x in grid]
        plots.save_fringe_figure(
            writer.path("photon.png"), grid, fringe, angles[2], estimate.s_value
        )

    report = RunReport(
        scenario="photon",
        config_hash=config.hash(),
        stage_entropies=stages,
        chsh=_estimate_dict(estimate, angles),
        extras=extras,
        outputs=[],
        wall_clock_s=time.perf_counter() - t0,
    )
    return writer.finish(report)


def _atom_reservoir(config: AtomConfig, nbar: Optional[float] = None) -> Optional[ReservoirSpec]:
    if config.reservoir_kind == "none":
        return None
    nb = config.nbar if nbar is None else nbar
    floor = required_reservoir_cutoff(nb, config.reservoir_kind)
    cutoff = floor if config.reservoir_cutoff is None else max(config.reservoir_cutoff, floor)
    return ReservoirSpec(nb, cutoff, config.reservoir_kind)


def _atom_flying_state(config: ExperimentConfig) -> tuple[PureState, float, list[dict]]:
    trap1, trap2, beam1, beam2, mol1, mol2 = range(6)
    register = ModeRegister(
        [
            ModeLabel(trap1, Species.ATOM_A),
            ModeLabel(trap2, Species.ATOM_A),
            ModeLabel(beam1, Species.ATOM_B),
            ModeLabel(beam2, Species.ATOM_B),
            ModeLabel(mol1, Species.MOLECULE_AB),
            ModeLabel(mol2, Species.MOLECULE_AB),
        ]
    )
    arm1 = [trap1, beam1, mol1]
    state = make_state(
        register,
        [((1, 0, 1, 1, 0, 0), 1.0), ((0, 1, 1, 1, 0, 0), 1.0)],
    )
    stages = [{"stage": "trap-superposition", "bits": _arm_entropy(state, arm1)}]

    state = feshbach_associate(state, trap1, beam1, mol1)
    state = feshbach_associate(state, trap2, beam2, mol2)
    stages.append({"stage": "after-association", "bits": _arm_entropy(state, arm1)})

    trap_purity = partial_trace(state, [trap1, trap2]).purity()
    if abs(trap_purity - 1.0) > 1e-10:
        raise SectorError(f"traps did not factor out: reduced purity {trap_purity}")
    _, flying = factor_out_modes(state, [trap1, trap2])

    flying = stark_phase(flying, mol2, beam2, config.atom.stark_phi)
    stages.append(
        {"stage": "after-stark-phase", "bits": _arm_entropy(flying, [beam1, mol1])}
    )
    return flying, trap_purity, stages


def _atom_layout(config: AtomConfig, reference: Optional[ReservoirSpec]) -> MeasurementLayout:
    beam1, beam2, mol1, mol2 = 2, 3, 4, 5
    return MeasurementLayout(
        site1=Site("beam-1", (beam1, mol1), (1, 0), (0, 1), +1),
        site2=Site("beam-2", (beam2, mol2), (1, 0), (0, 1), -1),
        capability=config.capability,
        reference=reference,
    )


def run_atom_scenario(config: ExperimentConfig) -> RunReport:
    """Single atom delocalized over two traps, converted into an atom/molecule
    pair, and read out through reservoir reference frames."""
    config.validate()
    t0 = time.perf_counter()
    writer = _ArtifactWriter(config)
    flying, trap_purity, stages = _atom_flying_state(config)

    reference = _atom_reservoir(config.atom)
    layout = _atom_layout(config.atom, reference)
    angles, s_star = _resolve_angles(config.atom, flying, layout)
    exact = chsh(flying, layout, angles, mode="exact")
    estimate = exact
    if config.mode == "sampled":
        estimate = chsh(
            flying, layout, angles, mode="sampled", shots=config.shots,
            root_seed=config.seed, keep_shots=True,
        )
        csv_path = writer.path("shots.csv")
        if csv_path is not None:
            write_shots_csv(csv_path, estimate.batches)

    extras = {
        "trap_purity": trap_purity,
        "stark_phi": config.atom.stark_phi,
        "capability": config.atom.capability,
        "reservoir_kind": config.atom.reservoir_kind,
        "nbar": config.atom.nbar,
        "reservoir_cutoff": reference.cutoff if reference is not None else None,
        "s_exact": exact.s_value,
    }
    if s_star is not None:
        extras["s_optimum"] = s_star

    if config.atom.nbar_sweep:
        sweep = []
        threshold = None
        for nb in config.atom.nbar_sweep:
            spec_nb = _atom_reservoir(config.atom, nbar=float(nb))
            layout_nb = _atom_layout(config.atom, spec_nb)
            _, s_nb = optimize_chsh_angles(flying, layout_nb)
            sweep.append({"nbar": float(nb), "s_star": s_nb})
            if threshold is None and s_nb > 2.0:
                threshold = float(nb)
        extras["nbar_sweep"] = sweep
        extras["violation_threshold_nbar"] = threshold
        csv_path = writer.path("sweep.csv")
        if csv_path is not None:
            write_sweep_csv(csv_path, [(row["nbar"], row["s_star"]) for row in sweep])
        if writer.want_figure():
            plots.save_reference_sweep_figure(
                writer.path("atom.png"),
                [row["nbar"] for row in sweep],
                [row["s_star"] for row in sweep],
                threshold,
            )
    elif writer.want_figure():
        plots.save_correlator_figure(
            writer.path("atom.png"), _estimate_dict(estimate, angles)
        )

    report = RunReport(
        scenario="atom",
        config_hash=config.hash(),
        stage_entropies=stages,
        chsh=_estimate_dict(estimate, angles),
        extras=extras,
        outputs=[],
        wall_clock_s=time.perf_counter() - t0,
    )
    return writer.finish(report)


def _smallest_factorization(d: int) -> tuple[int, int]:
    for m in range(2, int(math.isqrt(d)) + 1):
        if d % m == 0:
            return m, d // m
    raise ConfigError(
        f"dimension {d} is prime: a factorizable structure needs a nonprime "
        "dimension d = m*n with m, n >= 2"
    )


def run_tps_demo(config: ExperimentConfig) -> RunReport:
    """Entanglement is structure-relative: the 45-degree photon state, and the
    constructive factorization of random states."""
    config.validate()
    t0 = time.perf_counter()
    writer = _ArtifactWriter(config)
    section = config.tps

    # Part 1: one photon, polarization modes. Entangled in H/V, product in +-45.
    register = ModeRegister(
        [ModeLabel(0, Species.PHOTON_H), ModeLabel(1, Species.PHOTON_V)]
    )
    photon = make_state(register, [((1, 0), 1.0), ((0, 1), 1.0)])
    hv = TensorProductStructure.from_register_bipartition(register, [0])
    rotated = conjugated_tps(hv, beam_splitter_matrix(math.pi / 4.0))
    entropy_hv = entropy_of_state(photon, hv)
    entropy_rot = entropy_of_state(photon, rotated)

    # Part 2: constructive factorization at the configured dimension.
    d = section.dim
    if d < 4:
        raise ConfigError(f"tps.dim must be >= 4, got {d}")
    if section.factor_m is None and section.factor_n is None:
        m, n = _smallest_factorization(d)
    else:
        m = section.factor_m or 0
        n = section.factor_n or 0
        if m < 2 or n < 2 or m * n != d:
            raise ConfigError(
                f"tps factors {m}x{n} do not give dim {d}: need a nonprime "
                "dimension d = m*n with m, n >= 2"
            )
    canonical = TensorProductStructure.canonical(m, n)

    k = min(m, n)
    demo = np.zeros(d, dtype=complex)
    for i in range(k):
        demo[canonical.pair_to_global(i, i)] = 1.0 / math.sqrt(k)
    demo_canonical = entropy_of_state(demo, canonical)
    demo_factorized = entropy_of_state(demo, factorizing_tps(demo, m, n))

    rng = np.random.default_rng(config.seed)
    residuals = []
    for _ in range(section.random_states):
        vec = rng.normal(size=d) + 1j * rng.normal(size=d)
        vec /= np.linalg.norm(vec)
        dec = schmidt(vec, factorizing_tps(vec, m, n))
        residuals.append(float(dec.coefficients[1]) if len(dec.coefficients) > 1 else 0.0)
    factorized_count = sum(1 for r in residuals if r < 1e-8)

    extras = {
        "photon_entropy_hv_bits": entropy_hv,
        "photon_entropy_rotated_bits": entropy_rot,
        "dim": d,
        "factors": [m, n],
        "demo_entropy_canonical_bits": demo_canonical,
        "demo_entropy_factorized_bits": demo_factorized,
        "random_states": section.random_states,
        "factorized_count": factorized_count,
        "max_residual_lambda2": max(residuals) if residuals else 0.0,
    }
    csv_path = writer.path("sweep.csv")
    if csv_path is not None:
        write_sweep_csv(csv_path, [(float(i), r) for i, r in enumerate(residuals)])
    if writer.want_figure():
        plots.save_tps_figure(
            writer.path("tps.png"),
            ["photon H/V", "photon +-45", "demo canonical", "demo factorized"],
            [entropy_hv, entropy_rot, demo_canonical, demo_factorized],
            residuals,
        )

    report = RunReport(
        scenario="tps-demo",
        config_hash=config.hash(),
        stage_entropies=[
            {"stage": "photon-hv-structure", "bits": entropy_hv},
            {"stage": "photon-rotated-structure", "bits": entropy_rot},
        ],
        chsh=None,
        extras=extras,
        outputs=[],
        wall_clock_s=time.perf_counter() - t0,
    )
    return writer.finish(report)


def run_oscillator_demo(config: ExperimentConfig) -> RunReport:
    """Coupled oscillator ground state: entangled across the original
    oscillators, product across the normal modes."""
    config.validate()
    t0 = time.perf_counter()
    writer = _ArtifactWriter(config)
    section = config.oscillator

    rows = []
    for ratio in section.coupling_ratios:
        coupling = ratio * section.mass * section.omega**2
        pair = OscillatorPair(section.mass, section.omega, coupling)
        result = coupled_oscillator_entropy(pair, section.cutoff)
        rows.append(
            {
                "coupling_ratio": float(ratio),
                "entropy_bits": result.entropy_bits,
                "analytic_bits": gaussian_ground_state_entropy_bits(pair),
                "normal_mode_bits": result.normal_mode_entropy_bits,
                "converged": result.converged,
            }
        )

    extras = {
        "cutoff": section.cutoff,
        "rows": rows,
        "max_analytic_mismatch": max(
            abs(r["entropy_bits"] - r["analytic_bits"]) for r in rows
        ),
        "max_normal_mode_bits": max(r["normal_mode_bits"] for r in rows),
    }
    csv_path = writer.path("sweep.csv")
    if csv_path is not None:
        write_sweep_csv(
            csv_path, [(r["coupling_ratio"], r["entropy_bits"]) for r in rows]
        )
    if writer.want_figure():
        plots.save_oscillator_figure(
            writer.path("oscillator.png"),
            [r["coupling_ratio"] for r in rows],
            [r["entropy_bits"] for r in rows],
            [r["analytic_bits"] for r in rows],
            [r["normal_mode_bits"] for r in rows],
        )

    report = RunReport(
        scenario="oscillator-demo",
        config_hash=config.hash(),
        stage_entropies=[
            {"stage": f"coupling-ratio-{r['coupling_ratio']}", "bits": r["entropy_bits"]}
            for r in rows
        ],
        chsh=None,
        extras=extras,
        outputs=[],
        wall_clock_s=time.perf_counter() - t0,
    )
    return writer.finish(report)


RUNNERS = {
    "photon": run_photon_scenario,
    "atom": run_atom_scenario,
    "tps-demo": run_tps_demo,
    "oscillator-demo": run_oscillator_demo,
}


def run_scenario(config: ExperimentConfig) -> RunReport:
    return RUNNERS[config.scenario](config)
