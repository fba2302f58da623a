"""CHSH Bell experiments on two flying sites under particle-number
superselection, with optional coherent-reservoir reference frames.

A site is a two-outcome detector location: its "minus" configuration (an
atom, or a ground-state atom in the photon pipeline) reads -1 and its "plus"
configuration (a molecule, or an excited atom) reads +1. Measuring in a
rotated basis requires a physical rotation between the two configurations;
that rotation changes the local particle number and is therefore forbidden
without a reference frame. With a reservoir reference the rotation is
realized by the association coupler and is only approximately coherent; with
no reference only the number basis (angles that are multiples of pi/2) is
legal.

Rotation sense convention: the two sites carry opposite orientations, so the
associated-pair state (|molecule, atom> + |atom, molecule>)/sqrt(2) has
correlator E(a, b) = -cos 2(a - b).

Randomness contract: all sampling derives from one root seed through
counter-based Philox streams keyed (root_seed, setting_index, site_index);
the uniform deciding shot k is draw k of its stream. Runs are bitwise
reproducible and parallel workers can regenerate any slice independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .couplers import (
    ReservoirSpec,
    association_rotation_unitary,
    ideal_rotation_unitary,
    reservoir_amplitudes,
    reservoir_state,
)
from .errors import SectorError
from .fock import PureState, apply_unitary_on_modes, partial_trace, tensor_product

TWO_PI = 2.0 * math.pi
SITE_NAMES = ("beam-1", "beam-2")
# Number-basis angles legal without a reference frame: multiples of pi/2.
Z_ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class Site:
    """One detector location: which modes it reads and how outcomes map.

    minus_config / plus_config are the occupations of `modes` giving outcomes
    -1 / +1. orientation flips the rotation sense (the two sites of a pair use
    opposite senses; see module docstring).
    """

    name: str
    modes: tuple[int, ...]
    minus_config: tuple[int, ...]
    plus_config: tuple[int, ...]
    orientation: int = +1


@dataclass
class MeasurementLayout:
    """The two sites of a Bell pair plus the run's capability rules."""

    site1: Site
    site2: Site
    capability: str = "full"  # "full" | "superselected"
    reference: Optional[ReservoirSpec] = None

    def __post_init__(self):
        if self.capability not in ("full", "superselected"):
            raise ValueError(f"unknown capability {self.capability!r}")

    @property
    def sites(self) -> tuple[Site, Site]:
        return (self.site1, self.site2)

    def site(self, name: str) -> Site:
        for s in self.sites:
            if s.name == name:
                return s
        raise ValueError(f"no site named {name!r}; have {[s.name for s in self.sites]}")


@dataclass(frozen=True)
class MeasurementSetting:
    """A local basis choice at one site, with the reference frame (if any)
    enabling number-nonconserving rotations."""

    site: str
    angle: float
    reference: Optional[ReservoirSpec] = None


@dataclass(frozen=True)
class ShotRecord:
    shot: int
    a: float
    b: float
    outcome1: int
    outcome2: int
    seed_lineage: int

    @property
    def product(self) -> int:
        return self.outcome1 * self.outcome2


@dataclass
class ShotBatch:
    """All shots of one correlator setting, as arrays."""

    setting_index: int
    a: float
    b: float
    outcomes1: np.ndarray
    outcomes2: np.ndarray
    seed_lineage: int

    def records(self) -> Iterator[ShotRecord]:
        for k in range(len(self.outcomes1)):
            yield ShotRecord(
                k, self.a, self.b, int(self.outcomes1[k]), int(self.outcomes2[k]),
                self.seed_lineage,
            )


@dataclass
class ChshEstimate:
    """Four correlators and the CHSH combination S = E(a,b) + E(a,b') +
    E(a',b) - E(a',b')."""

    e_ab: float
    e_abp: float
    e_apb: float
    e_apbp: float
    s_value: float
    std_error: float
    shots: int
    batches: Optional[list[ShotBatch]] = field(default=None, repr=False)

    def __post_init__(self):
        if abs(self.s_value) > 4.0 + 1e-9:
            raise SectorError(f"|S| = {abs(self.s_value)} exceeds the algebraic bound 4")

    def correlators(self) -> tuple[float, float, float, float]:
        return (self.e_ab, self.e_abp, self.e_apb, self.e_apbp)


def is_number_basis_angle(angle: float) -> bool:
    """True when the angle is a multiple of pi/2 (a number-conserving
    measurement: the observable is +-Z)."""
    r = angle % (math.pi / 2.0)
    return min(r, math.pi / 2.0 - r) < Z_ANGLE_TOL


def shot_stream(root_seed: int, setting_index: int, site_index: int) -> np.random.Generator:
    """Counter-based Philox stream for one (setting, site) pair."""
    key = np.array(
        [np.uint64(root_seed), np.uint64(setting_index * 8 + site_index + 1)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# measurement rotations on the full state
# ---------------------------------------------------------------------------


def _site_local_layout(state: PureState, site: Site):
    reg = state.register
    levels = [reg.mode(i).levels for i in site.modes]
    dim = 1
    strides = [1] * len(levels)
    for k in range(len(levels) - 2, -1, -1):
        strides[k] = strides[k + 1] * levels[k + 1]
    for lv in levels:
        dim *= lv
    minus = sum(n * s for n, s in zip(site.minus_config, strides))
    plus = sum(n * s for n, s in zip(site.plus_config, strides))
    return dim, minus, plus


def _check_setting_legal(layout: MeasurementLayout, angle: float, reference) -> None:
    if layout.capability == "full" or reference is not None:
        return
    if not is_number_basis_angle(angle):
        raise SectorError(
            f"angle {angle} requires a reference frame: the local particle-number "
            "superselection rule admits only number-basis settings (multiples of "
            "pi/2) without one"
        )


def _rotate_site(
    state: PureState,
    layout: MeasurementLayout,
    site: Site,
    angle: float,
    reference: Optional[ReservoirSpec],
) -> tuple[PureState, int]:
    """Turn a basis angle into physical operations before a number readout.

    Returns (state, outcome_sign). Full capability applies the exact ideal
    rotation. With a reference, a fresh reservoir mode is attached and the
    association rotation entangles it with the site. Without either, no
    rotation happens at all: legal angles are multiples of pi/2, realized by
    reading the number basis and flipping the outcome label when the
    observable is -Z.
    """
    chi = site.orientation * angle
    dim, minus, plus = _site_local_layout(state, site)
    if layout.capability == "full":
        u = ideal_rotation_unitary(dim, minus, plus, chi)
        return apply_unitary_on_modes(state, site.modes, u), +1
    if reference is not None:
        res_id = max(m.id for m in state.register.modes) + 1
        state = tensor_product(state, reservoir_state(reference, res_id))
        u = association_rotation_unitary(
            dim, minus, plus, reference.cutoff + 1, reference.nbar, chi
        )
        return apply_unitary_on_modes(state, tuple(site.modes) + (res_id,), u), +1
    _check_setting_legal(layout, angle, reference)
    sign = int(round(math.cos(2.0 * chi)))
    return state, sign


def _site_outcome_weights(state: PureState, site: Site) -> tuple[float, float]:
    """(p_minus, p_plus) of the site's two configurations; rejects support
    outside the one-particle sector."""
    reg = state.register
    positions = [reg.position(i) for i in site.modes]
    p_minus = p_plus = 0.0
    for config, amp in state.terms():
        local = tuple(config[p] for p in positions)
        w = abs(amp) ** 2
        if local == site.minus_config:
            p_minus += w
        elif local == site.plus_config:
            p_plus += w
        else:
            raise SectorError(
                f"site {site.name}: occupations {local} are neither the atom nor "
                "the molecule configuration"
            )
    return p_minus, p_plus


def _collapse_site(state: PureState, site: Site, want_plus: bool) -> PureState:
    reg = state.register
    positions = [reg.position(i) for i in site.modes]
    target = site.plus_config if want_plus else site.minus_config
    amps = {
        r: a
        for r, a in state.amplitudes.items()
        if tuple(reg.unrank(r)[p] for p in positions) == target
    }
    return PureState(reg, amps).normalized()


def measure_site(
    state: PureState,
    layout: MeasurementLayout,
    setting: MeasurementSetting,
    rng: np.random.Generator,
) -> tuple[int, PureState]:
    """Born-rule measurement of one site in the rotated basis.

    Returns (outcome in {-1, +1}, collapsed state). With a reference frame the
    collapsed state retains the (now correlated) reservoir mode.
    """
    site = layout.site(setting.site)
    reference = setting.reference if setting.reference is not None else layout.reference
    _check_setting_legal(layout, setting.angle, reference)
    rotated, sign = _rotate_site(state, layout, site, setting.angle, reference)
    p_minus, p_plus = _site_outcome_weights(rotated, site)
    total = p_minus + p_plus
    if abs(total - 1.0) > 1e-9:
        raise SectorError(f"site {site.name}: outcome weights sum to {total}, not 1")
    got_plus = bool(rng.random() < p_plus / total)
    outcome = sign * (+1 if got_plus else -1)
    return outcome, _collapse_site(rotated, site, got_plus)


def _rotated_pair(
    state: PureState, layout: MeasurementLayout, a: float, b: float
) -> tuple[PureState, int, int]:
    reference = layout.reference
    _check_setting_legal(layout, a, reference)
    _check_setting_legal(layout, b, reference)
    state, sign1 = _rotate_site(state, layout, layout.site1, a, reference)
    state, sign2 = _rotate_site(state, layout, layout.site2, b, reference)
    return state, sign1, sign2


def joint_outcome_distribution(
    state: PureState, layout: MeasurementLayout, a: float, b: float
) -> dict[tuple[int, int], float]:
    """Exact joint probabilities of (outcome1, outcome2) at settings (a, b)."""
    rotated, sign1, sign2 = _rotated_pair(state, layout, a, b)
    reg = rotated.register
    pos1 = [reg.position(i) for i in layout.site1.modes]
    pos2 = [reg.position(i) for i in layout.site2.modes]
    probs = {(-1, -1): 0.0, (-1, +1): 0.0, (+1, -1): 0.0, (+1, +1): 0.0}

    def site_sign(local, site, name):
        if local == site.plus_config:
            return +1
        if local == site.minus_config:
            return -1
        raise SectorError(
            f"site {name}: occupations {local} are neither the atom nor the "
            "molecule configuration"
        )

    for config, amp in rotated.terms():
        z1 = site_sign(tuple(config[p] for p in pos1), layout.site1, layout.site1.name)
        z2 = site_sign(tuple(config[p] for p in pos2), layout.site2, layout.site2.name)
        probs[(sign1 * z1, sign2 * z2)] += abs(amp) ** 2
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-9:
        raise SectorError(f"outcome probabilities sum to {total}, not 1")
    return {k: v / total for k, v in probs.items()}


def correlator(
    state: PureState,
    layout: MeasurementLayout,
    a: float,
    b: float,
    mode: str = "exact",
    shots: int = 0,
    root_seed: int = 0,
    setting_index: int = 0,
) -> float:
    """<A(a) B(b)> by exact expectation, or by averaging sampled shots."""
    if mode == "exact":
        probs = joint_outcome_distribution(state, layout, a, b)
        return sum(o1 * o2 * p for (o1, o2), p in probs.items())
    if mode != "sampled":
        raise ValueError(f"mode must be 'exact' or 'sampled', got {mode!r}")
    if shots < 1:
        raise ValueError("sampled mode needs shots >= 1")
    batch = sample_setting(state, layout, a, b, shots, root_seed, setting_index)
    return float(np.mean(batch.outcomes1 * batch.outcomes2))


def sample_setting(
    state: PureState,
    layout: MeasurementLayout,
    a: float,
    b: float,
    shots: int,
    root_seed: int,
    setting_index: int,
) -> ShotBatch:
    """Draw Born-rule shots for one setting pair from its derived streams."""
    probs = joint_outcome_distribution(state, layout, a, b)
    p1_plus = probs[(+1, -1)] + probs[(+1, +1)]
    # conditional P(o2 = +1 | o1)
    p2_given_plus = probs[(+1, +1)] / p1_plus if p1_plus > 0 else 0.0
    p1_minus = 1.0 - p1_plus
    p2_given_minus = probs[(-1, +1)] / p1_minus if p1_minus > 0 else 0.0

    u1 = shot_stream(root_seed, setting_index, 0).random(shots)
    u2 = shot_stream(root_seed, setting_index, 1).random(shots)
    o1 = np.where(u1 < p1_plus, 1, -1).astype(np.int8)
    cond = np.where(o1 == 1, p2_given_plus, p2_given_minus)
    o2 = np.where(u2 < cond, 1, -1).astype(np.int8)
    return ShotBatch(setting_index, a, b, o1, o2, root_seed)


def chsh(
    state: PureState,
    layout: MeasurementLayout,
    angles: Sequence[float],
    mode: str = "exact",
    shots: int = 1000,
    root_seed: int = 0,
    keep_shots: bool = False,
) -> ChshEstimate:
    """CHSH estimate at settings (a, a', b, b').

    In sampled mode, `shots` counts per correlator; the standard error
    propagates the four per-correlator binomial errors.
    """
    a, ap, b, bp = (float(x) for x in angles)
    settings = [(a, b), (a, bp), (ap, b), (ap, bp)]
    if mode == "exact":
        es = [correlator(state, layout, x, y, "exact") for x, y in settings]
        s = es[0] + es[1] + es[2] - es[3]
        return ChshEstimate(*es, s_value=s, std_error=0.0, shots=0)
    if shots < 1:
        raise ValueError("sampled mode needs shots >= 1")
    es = []
    variances = []
    batches = []
    for idx, (x, y) in enumerate(settings):
        batch = sample_setting(state, layout, x, y, shots, root_seed, idx)
        products = batch.outcomes1.astype(np.float64) * batch.outcomes2
        e = float(np.mean(products))
        es.append(e)
        variances.append(max(0.0, 1.0 - e * e) / shots)
        batches.append(batch)
    s = es[0] + es[1] + es[2] - es[3]
    return ChshEstimate(
        *es,
        s_value=s,
        std_error=float(math.sqrt(sum(variances))),
        shots=shots,
        batches=batches if keep_shots else None,
    )


# ---------------------------------------------------------------------------
# effective single-site observables and angle optimization
# ---------------------------------------------------------------------------


def two_site_qubit_density(state: PureState, layout: MeasurementLayout) -> np.ndarray:
    """4x4 density matrix of the flying pair in the (minus, plus) (x)
    (minus, plus) basis (any spectator modes are traced out)."""
    keep = tuple(layout.site1.modes) + tuple(layout.site2.modes)
    rho = partial_trace(state, keep)
    reg = rho.register
    n1 = len(layout.site1.modes)
    patterns = []
    for c1 in (layout.site1.minus_config, layout.site1.plus_config):
        for c2 in (layout.site2.minus_config, layout.site2.plus_config):
            patterns.append(reg.rank(tuple(c1) + tuple(c2)))
    idx = np.asarray(patterns)
    block = rho.matrix[np.ix_(idx, idx)]
    if abs(np.trace(block).real - 1.0) > 1e-9:
        raise SectorError(
            f"flying pair carries weight {np.trace(block).real} in the qubit sector; "
            "expected 1"
        )
    return block


def ideal_observable(chi: float) -> np.ndarray:
    """Observable measured by an exact rotation by chi then a number readout:
    cos(2 chi) Z + sin(2 chi) X in the (minus, plus) basis, Z = diag(-1, +1)."""
    c2, s2 = math.cos(2.0 * chi), math.sin(2.0 * chi)
    return np.array([[-c2, s2], [s2, c2]])


def reference_effective_observable(spec: ReservoirSpec, chi: float) -> np.ndarray:
    """Observable measured through a reservoir-assisted rotation by chi.

    The reservoir is prepared, coupled, and discarded; the net effect on the
    site qubit is this 2x2 Hermitian operator (contraction of the rotated
    number readout over the reservoir state). Approaches ideal_observable(chi)
    as nbar grows.
    """
    c = reservoir_amplitudes(spec)
    levels = spec.cutoff + 1
    if spec.nbar == 0.0:
        return np.array([[-1.0, 0.0], [0.0, 1.0]])
    n = np.arange(levels, dtype=np.float64)
    theta = chi * np.sqrt(n / spec.nbar)
    theta_up = np.zeros(levels)
    theta_up[:-1] = chi * np.sqrt((n[:-1] + 1.0) / spec.nbar)  # blocked at the edge
    w = c**2
    mm = float(-np.sum(w * np.cos(2.0 * theta)))
    pp = float(np.sum(w * np.cos(2.0 * theta_up)))
    off = float(np.sum(c[:-1] * c[1:] * np.sin(2.0 * theta[1:])))
    return np.array([[mm, off], [off, pp]])


def _observable_factory(layout: MeasurementLayout, capability: str, reference):
    def make(site: Site):
        if capability == "full":
            return lambda angle: ideal_observable(site.orientation * angle)
        if reference is not None:
            return lambda angle: reference_effective_observable(
                reference, site.orientation * angle
            )
        def number_basis_only(angle):
            if not is_number_basis_angle(angle):
                raise SectorError(
                    f"angle {angle} requires a reference frame under superselection"
                )
            return ideal_observable(site.orientation * angle)
        return number_basis_only
    return make(layout.site1), make(layout.site2)


def _pair_expectation(rho4: np.ndarray, obs1: np.ndarray, obs2: np.ndarray) -> float:
    return float(np.trace(rho4 @ np.kron(obs1, obs2)).real)


def optimize_chsh_angles(
    state: PureState,
    layout: MeasurementLayout,
    capability: Optional[str] = None,
    reference: Optional[ReservoirSpec] = None,
) -> tuple[tuple[float, float, float, float], float]:
    """Deterministically maximize S over settings legal for the capability.

    Full capability and superselected-with-reference run a 16^4 coarse grid
    followed by coordinate-descent refinement down to 1e-8 steps, using the
    exact effective observables on the reduced two-qubit state. Superselected
    with no reference exhausts the discrete legal settings (multiples of
    pi/2), where only commuting +-Z readouts are reachable.
    """
    capability = capability if capability is not None else layout.capability
    if reference is None:
        reference = layout.reference
    rho4 = two_site_qubit_density(state, layout)
    obs_a, obs_b = _observable_factory(layout, capability, reference)

    if capability == "superselected" and reference is None:
        grid = [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi]
        best, best_angles = -np.inf, None
        e = np.array([[_pair_expectation(rho4, obs_a(x), obs_b(y)) for y in grid] for x in grid])
        for ia in range(4):
            for iap in range(4):
                for ib in range(4):
                    for ibp in range(4):
                        s = e[ia, ib] + e[ia, ibp] + e[iap, ib] - e[iap, ibp]
                        if s > best:
                            best = s
                            best_angles = (grid[ia], grid[iap], grid[ib], grid[ibp])
        return best_angles, float(best)

    def s_of(quad):
        a, ap, b, bp = quad
        oa, oap = obs_a(a), obs_a(ap)
        ob, obp = obs_b(b), obs_b(bp)
        return (
            _pair_expectation(rho4, oa, ob)
            + _pair_expectation(rho4, oa, obp)
            + _pair_expectation(rho4, oap, ob)
            - _pair_expectation(rho4, oap, obp)
        )

    # Angles are signed interaction times: a rotation by -pi/8 is short, not
    # equivalent to one by 15 pi/8, so the search runs over (-pi, pi] with no
    # modular wrapping.
    npts = 16
    grid = [-math.pi + (k + 1) * TWO_PI / npts for k in range(npts)]
    e = np.array([[_pair_expectation(rho4, obs_a(x), obs_b(y)) for y in grid] for x in grid])
    s_all = (
        e[:, None, :, None]
        + e[:, None, None, :]
        + e[None, :, :, None]
        - e[None, :, None, :]
    )
    ia, iap, ib, ibp = np.unravel_index(np.argmax(s_all), s_all.shape)
    current = [grid[ia], grid[iap], grid[ib], grid[ibp]]
    best = float(s_all[ia, iap, ib, ibp])

    step = TWO_PI / npts
    while step > 1e-8:
        improved = False
        for k in range(4):
            for delta in (step, -step):
                candidate = list(current)
                candidate[k] = candidate[k] + delta
                s = s_of(candidate)
                if s > best + 1e-15:
                    best, current, improved = s, candidate, True
        if not improved:
            step *= 0.5
    return tuple(current), float(best)


# ---------------------------------------------------------------------------
# shot CSV export
# ---------------------------------------------------------------------------

SHOT_CSV_HEADER = "shot,a,b,outcome1,outcome2,product"


def write_shots_csv(path, batches: Sequence[ShotBatch]) -> None:
    """Write shot records: columns shot, a, b, outcome1, outcome2, product.

    The shot column restarts at 0 for each setting; rows appear in setting
    order. Byte-stable for identical inputs.
    """
    with open(path, "w", newline="\n") as fh:
        fh.write(SHOT_CSV_HEADER + "\n")
        for batch in batches:
            a_txt = format(batch.a, ".17g")
            b_txt = format(batch.b, ".17g")
            for k in range(len(batch.outcomes1)):
                o1 = int(batch.outcomes1[k])
                o2 = int(batch.outcomes2[k])
                fh.write(f"{k},{a_txt},{b_txt},{o1},{o2},{o1 * o2}\n")
