"""Exact sparse states over a finite set of occupation-number modes.

A register is an ordered list of labeled modes, each with its own occupation
cutoff. Basis kets are occupation tuples such as |10> (one quantum in the
first mode, none in the second). States store only their nonzero amplitudes,
keyed by the mixed-radix rank of the configuration, so tiny-support states
over large ambient spaces (reference traps at high cutoff) stay cheap.

States are immutable values: every operation returns a new state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvariantError, SectorError

# Amplitudes below this modulus are dropped after every operation.
PRUNE_TOL = 1e-14
# Unitarity / norm tolerance used throughout.
UNITARY_TOL = 1e-10
# Default ceiling on the total register dimension.
DEFAULT_DIM_BUDGET = 2**20

Configuration = tuple[int, ...]


class Species(str, Enum):
    """What kind of field degree of freedom a mode is."""

    PHOTON_H = "photon-H"
    PHOTON_V = "photon-V"
    SPATIAL_PATH = "spatial-path"
    ATOM_A = "atom-A"
    ATOM_B = "atom-B"
    MOLECULE_AB = "molecule-AB"
    RESERVOIR_TRAP = "reservoir-trap"


@dataclass(frozen=True)
class ModeLabel:
    """A single mode: unique id within its register, species tag, occupation cutoff."""

    id: int
    species: Species
    cutoff: int = 1

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError(f"mode {self.id}: cutoff must be >= 1, got {self.cutoff}")

    @property
    def levels(self) -> int:
        return self.cutoff + 1


class ModeRegister:
    """Ordered collection of modes defining a mixed-radix configuration space.

    The rank of a configuration is computed with the first mode as the most
    significant digit, radix (cutoff + 1) per mode.
    """

    def __init__(self, modes: Sequence[ModeLabel], dim_budget: int = DEFAULT_DIM_BUDGET):
        modes = tuple(modes)
        if not modes:
            raise ValueError("register needs at least one mode")
        ids = [m.id for m in modes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate mode ids in register: {ids}")
        dim = 1
        for m in modes:
            dim *= m.levels
            if dim > dim_budget:
                raise SectorError(
                    f"register dimension {dim}+ exceeds budget {dim_budget}"
                )
        self.modes = modes
        self.dim = dim
        self.dim_budget = dim_budget
        self._index = {m.id: k for k, m in enumerate(modes)}
        strides = np.ones(len(modes), dtype=np.int64)
        for k in range(len(modes) - 2, -1, -1):
            strides[k] = strides[k + 1] * modes[k + 1].levels
        self._strides = strides

    def __len__(self) -> int:
        return len(self.modes)

    def __eq__(self, other) -> bool:
        return isinstance(other, ModeRegister) and self.modes == other.modes

    def __repr__(self) -> str:
        parts = ", ".join(f"{m.id}:{m.species.value}/{m.cutoff}" for m in self.modes)
        return f"ModeRegister({parts})"

    def position(self, mode_id: int) -> int:
        """Index of a mode within the register order."""
        try:
            return self._index[mode_id]
        except KeyError:
            raise ValueError(f"mode id {mode_id} not in register") from None

    def mode(self, mode_id: int) -> ModeLabel:
        return self.modes[self.position(mode_id)]

    def validate_configuration(self, config: Sequence[int]) -> Configuration:
        config = tuple(int(n) for n in config)
        if len(config) != len(self.modes):
            raise ValueError(
                f"configuration has {len(config)} entries, register has {len(self.modes)}"
            )
        for n, m in zip(config, self.modes):
            if n < 0 or n > m.cutoff:
                raise ValueError(
                    f"occupation {n} out of range [0, {m.cutoff}] for mode {m.id}"
                )
        return config

    def rank(self, config: Sequence[int]) -> int:
        """Mixed-radix rank in [0, dim) of a valid configuration."""
        config = self.validate_configuration(config)
        return int(np.dot(self._strides, config))

    def unrank(self, rank: int) -> Configuration:
        """Inverse of rank()."""
        if not 0 <= rank < self.dim:
            raise ValueError(f"rank {rank} out of range [0, {self.dim})")
        occ = []
        for stride, m in zip(self._strides, self.modes):
            n, rank = divmod(rank, int(stride))
            occ.append(n)
        return tuple(occ)

    def subregister(self, mode_ids: Sequence[int]) -> "ModeRegister":
        """New register holding the given modes, in the given order."""
        return ModeRegister([self.mode(i) for i in mode_ids], self.dim_budget)


class PureState:
    """Sparse normalized pure state over a ModeRegister.

    Amplitudes are stored in a dict keyed by configuration rank. Use
    make_state() to build one from explicit kets; direct construction skips
    normalization and is meant for internal use.
    """

    __slots__ = ("register", "amplitudes")

    def __init__(self, register: ModeRegister, amplitudes: dict[int, complex]):
        self.register = register
        self.amplitudes = amplitudes

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values())))

    def normalized(self) -> "PureState":
        nrm = self.norm()
        if nrm < PRUNE_TOL:
            raise ValueError("cannot normalize a zero state")
        amps = {
            r: a / nrm for r, a in self.amplitudes.items() if abs(a) / nrm > PRUNE_TOL
        }
        return PureState(self.register, amps)

    def amplitude(self, config: Sequence[int]) -> complex:
        return self.amplitudes.get(self.register.rank(config), 0.0 + 0.0j)

    def terms(self) -> Iterator[tuple[Configuration, complex]]:
        """Iterate (configuration, amplitude) in deterministic rank order."""
        for r in sorted(self.amplitudes):
            yield self.register.unrank(r), self.amplitudes[r]

    def support_size(self) -> int:
        return len(self.amplitudes)

    def dense(self) -> np.ndarray:
        """Dense amplitude vector of length register.dim."""
        vec = np.zeros(self.register.dim, dtype=complex)
        for r, a in self.amplitudes.items():
            vec[r] = a
        return vec

    def check_norm(self, tol: float = UNITARY_TOL) -> None:
        if abs(self.norm() - 1.0) > tol:
            raise InvariantError(f"state norm {self.norm()} deviates from 1 beyond {tol}")

    def __repr__(self) -> str:
        parts = []
        for config, amp in self.terms():
            ket = "".join(str(n) for n in config)
            parts.append(f"({amp:.4g})|{ket}>")
        return " + ".join(parts) if parts else "0"


def make_state(
    register: ModeRegister, terms: Iterable[tuple[Sequence[int], complex]]
) -> PureState:
    """Build a normalized PureState from (configuration, amplitude) terms.

    Rejects occupations outside a mode's cutoff (naming the offending mode)
    and an all-zero amplitude list. Repeated configurations accumulate.
    """
    amps: dict[int, complex] = {}
    count = 0
    for config, amp in terms:
        count += 1
        r = register.rank(config)
        amps[r] = amps.get(r, 0.0 + 0.0j) + complex(amp)
    if count == 0:
        raise ValueError("make_state needs at least one term")
    state = PureState(register, amps)
    if state.norm() < PRUNE_TOL:
        raise ValueError("all amplitudes are zero")
    return state.normalized()


def inner_product(a: PureState, b: PureState) -> complex:
    """Sesquilinear inner product <a|b> (conjugate on the first argument)."""
    if a.register != b.register:
        raise ValueError("inner_product: states live on different registers")
    small, large = (a, b) if len(a.amplitudes) <= len(b.amplitudes) else (b, a)
    total = 0.0 + 0.0j
    for r, amp in small.amplitudes.items():
        other = large.amplitudes.get(r)
        if other is not None:
            if small is a:
                total += np.conj(amp) * other
            else:
                total += np.conj(other) * amp
    return complex(total)


def fidelity(a: PureState, b: PureState) -> float:
    """|<a|b>|^2, the global-phase-insensitive overlap."""
    return float(abs(inner_product(a, b)) ** 2)


def _local_layout(register: ModeRegister, mode_ids: Sequence[int]):
    """Positions, local dimension, and local strides for a mode subset.

    The local rank orders the subset with its first mode most significant,
    mirroring the register convention.
    """
    mode_ids = list(mode_ids)
    if len(set(mode_ids)) != len(mode_ids):
        raise ValueError(f"duplicate mode ids: {mode_ids}")
    positions = [register.position(i) for i in mode_ids]
    levels = [register.modes[p].levels for p in positions]
    local_dim = 1
    for lv in levels:
        local_dim *= lv
    local_strides = [1] * len(levels)
    for k in range(len(levels) - 2, -1, -1):
        local_strides[k] = local_strides[k + 1] * levels[k + 1]
    return positions, local_dim, local_strides


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> None:
    """Raise InvariantError (with the deviation norm) unless u is unitary."""
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"matrix must be square, got shape {u.shape}")
    dev = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]))
    if dev > tol:
        raise InvariantError(f"matrix is not unitary: deviation norm {dev:.3e}")


def apply_unitary_on_modes(
    state: PureState, mode_ids: Sequence[int], u: np.ndarray
) -> PureState:
    """Apply a unitary acting on the joint space of the selected modes.

    The unitary is indexed by the local mixed-radix rank of the selected
    modes (first selected mode most significant). Amplitudes on untouched
    modes are unchanged; norm is preserved.
    """
    positions, local_dim, local_strides = _local_layout(state.register, mode_ids)
    u = np.asarray(u, dtype=complex)
    if u.shape != (local_dim, local_dim):
        raise ValueError(
            f"unitary shape {u.shape} does not match local dimension {local_dim}"
        )
    check_unitary(u)

    reg_strides = state.register._strides
    # Group amplitudes by the configuration of the untouched modes.
    groups: dict[int, dict[int, complex]] = {}
    for r, amp in state.amplitudes.items():
        config = state.register.unrank(r)
        local = 0
        rest = r
        for p, s in zip(positions, local_strides):
            local += config[p] * s
            rest -= config[p] * int(reg_strides[p])
        groups.setdefault(rest, {})[local] = amp

    out: dict[int, complex] = {}
    for rest, locals_ in groups.items():
        vec = np.zeros(local_dim, dtype=complex)
        for local, amp in locals_.items():
            vec[local] = amp
        new_vec = u @ vec
        for local in np.nonzero(np.abs(new_vec) > PRUNE_TOL)[0]:
            # Rebuild the global rank from rest + local occupations.
            rank = rest
            lv = int(local)
            for p, s in zip(positions, local_strides):
                n, lv = divmod(lv, s)
                rank += n * int(reg_strides[p])
            out[rank] = out.get(rank, 0.0 + 0.0j) + new_vec[local]

    result = PureState(state.register, {r: a for r, a in out.items() if abs(a) > PRUNE_TOL})
    if abs(result.norm() - state.norm()) > UNITARY_TOL:
        raise InvariantError(
            f"unitary application drifted the norm: {state.norm()} -> {result.norm()}"
        )
    return result


class DensityOperator:
    """Dense Hermitian density matrix over a (sub)register."""

    __slots__ = ("register", "matrix")

    def __init__(self, register: ModeRegister, matrix: np.ndarray, validate: bool = True):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (register.dim, register.dim):
            raise ValueError(
                f"matrix shape {matrix.shape} does not match register dim {register.dim}"
            )
        if validate:
            if abs(np.trace(matrix).real - 1.0) > UNITARY_TOL or abs(np.trace(matrix).imag) > UNITARY_TOL:
                raise InvariantError(f"density trace {np.trace(matrix)} != 1")
            if np.linalg.norm(matrix - matrix.conj().T) > UNITARY_TOL:
                raise InvariantError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(matrix).min() < -UNITARY_TOL:
                raise InvariantError("density matrix has negative eigenvalues")
        self.register = register
        self.matrix = matrix

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def partial_trace(state: PureState, keep_ids: Sequence[int]) -> DensityOperator:
    """Reduced density operator on the kept modes.

    keep_ids may be a proper or full subset of the register (full subset gives
    the rank-1 projector |psi><psi|). The kept register preserves the order of
    keep_ids.
    """
    if not keep_ids:
        raise ValueError("partial_trace: keep set must be non-empty")
    positions, keep_dim, keep_strides = _local_layout(state.register, keep_ids)
    reg_strides = state.register._strides

    groups: dict[int, list[tuple[int, complex]]] = {}
    for r, amp in state.amplitudes.items():
        config = state.register.unrank(r)
        keep_rank = 0
        rest = r
        for p, s in zip(positions, keep_strides):
            keep_rank += config[p] * s
            rest -= config[p] * int(reg_strides[p])
        groups.setdefault(rest, []).append((keep_rank, amp))

    rho = np.zeros((keep_dim, keep_dim), dtype=complex)
    for entries in groups.values():
        for i, ai in entries:
            for j, aj in entries:
                rho[i, j] += ai * np.conj(aj)
    return DensityOperator(state.register.subregister(keep_ids), rho)


def tensor_product(a: PureState, b: PureState) -> PureState:
    """Combined state on the concatenated registers (mode ids must not clash)."""
    ids_a = {m.id for m in a.register.modes}
    clash = ids_a.intersection(m.id for m in b.register.modes)
    if clash:
        raise ValueError(f"tensor_product: mode ids {sorted(clash)} appear in both registers")
    combined = ModeRegister(
        list(a.register.modes) + list(b.register.modes),
        max(a.register.dim_budget, b.register.dim_budget),
    )
    shift = b.register.dim
    amps: dict[int, complex] = {}
    for ra, aa in a.amplitudes.items():
        for rb, ab in b.amplitudes.items():
            amps[ra * shift + rb] = aa * ab
    return PureState(combined, amps)


def factor_out_modes(state: PureState, mode_ids: Sequence[int]) -> tuple[Configuration, PureState]:
    """Strip modes whose occupation is identical in every populated ket.

    Such modes are in a definite product state (e.g. emptied traps) and can be
    removed without loss. Returns (their common occupations, the state on the
    remaining modes). Raises SectorError if the modes are not uniform, i.e.
    still correlated with the rest.
    """
    positions = sorted(state.register.position(i) for i in mode_ids)
    common: Configuration | None = None
    for config, _ in state.terms():
        vals = tuple(config[p] for p in positions)
        if common is None:
            common = vals
        elif vals != common:
            raise SectorError(
                f"modes {list(mode_ids)} have not factored out: "
                f"occupations {common} vs {vals} in the support"
            )
    assert common is not None
    keep_positions = [p for p in range(len(state.register)) if p not in positions]
    if not keep_positions:
        raise ValueError("cannot factor out every mode")
    new_register = ModeRegister(
        [state.register.modes[p] for p in keep_positions], state.register.dim_budget
    )
    amps: dict[int, complex] = {}
    for config, amp in state.terms():
        sub = tuple(config[p] for p in keep_positions)
        amps[new_register.rank(sub)] = amp
    return common, PureState(new_register, amps)
