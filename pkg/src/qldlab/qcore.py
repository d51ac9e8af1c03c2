"""Dense complex linear algebra for registers of qudits.

States are plain numpy arrays wrapped with their register layout.  Site 0 is
the most significant digit of the flat basis index, so a flat index decodes
into per-site digits in ordinary mixed radix.  Everything is double precision
and immutable after construction; randomized routines take an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ResourceLimitError",
    "QuditRegister",
    "PureState",
    "DensityOperator",
    "ProjectiveMeasurement",
    "OutcomeRecord",
    "DIM_CAP",
    "set_strict_checks",
    "tensor_product",
    "partial_trace",
    "trace_distance",
    "depolarize",
    "permutation_operator",
    "permutation_cycles",
    "born_probabilities",
    "sample_outcome",
    "computational_measurement",
    "product_measurement",
    "maximally_mixed",
    "basis_state",
    "digits_to_flat",
    "flat_to_digits",
    "spawn_streams",
]

# Default cap on the total Hilbert-space dimension of explicitly materialized
# matrices (12 qubits / 6 ququarts).
DIM_CAP = 4096

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-8
NORM_TOL = 1e-12

# Eigenvalue positivity is only asserted when strict checks are on (test
# mode); the check costs a diagonalization per constructed operator.
_STRICT_CHECKS = False


def set_strict_checks(enabled: bool) -> None:
    global _STRICT_CHECKS
    _STRICT_CHECKS = bool(enabled)


class ResourceLimitError(RuntimeError):
    """A computation would exceed a configured dimension or budget cap."""


def _check_cap(total_dim: int, cap: int | None = None) -> None:
    limit = DIM_CAP if cap is None else cap
    if total_dim > limit:
        raise ResourceLimitError(
            f"total dimension {total_dim} exceeds cap {limit}"
        )


@dataclass(frozen=True)
class QuditRegister:
    """An ordered register of qudits; site 0 is the most significant digit."""

    local_dims: tuple[int, ...]

    def __post_init__(self):
        if not self.local_dims:
            raise ValueError("register needs at least one site")
        if any(d < 2 for d in self.local_dims):
            raise ValueError("every local dimension must be >= 2")

    @property
    def num_sites(self) -> int:
        return len(self.local_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.local_dims)

    @staticmethod
    def uniform(num_sites: int, d: int) -> "QuditRegister":
        return QuditRegister((d,) * num_sites)

    def concat(self, other: "QuditRegister") -> "QuditRegister":
        return QuditRegister(self.local_dims + other.local_dims)


def digits_to_flat(digits: Sequence[int], local_dims: Sequence[int]) -> int:
    """Mixed-radix encode, site 0 most significant."""
    flat = 0
    for digit, d in zip(digits, local_dims):
        flat = flat * d + digit
    return flat


def flat_to_digits(flat: int, local_dims: Sequence[int]) -> tuple[int, ...]:
    digits = []
    for d in reversed(local_dims):
        digits.append(flat % d)
        flat //= d
    return tuple(reversed(digits))


@dataclass(frozen=True)
class PureState:
    register: QuditRegister
    amplitudes: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", vec)
        if vec.shape != (self.register.total_dim,):
            raise ValueError("amplitude vector does not match register")
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized: |norm-1| = {abs(norm-1):.3g}")

    def density(self) -> "DensityOperator":
        return DensityOperator(self.register, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    register: QuditRegister
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        dim = self.register.total_dim
        if mat.shape != (dim, dim):
            raise ValueError("matrix does not match register dimension")
        herm_dev = np.max(np.abs(mat - mat.conj().T))
        if herm_dev > HERMITICITY_TOL:
            raise ValueError(f"not Hermitian: max deviation {herm_dev:.3g}")
        tr_dev = abs(np.trace(mat).real - 1.0) + abs(np.trace(mat).imag)
        if tr_dev > TRACE_TOL:
            raise ValueError(f"trace != 1: deviation {tr_dev:.3g}")
        if _STRICT_CHECKS:
            lo = np.linalg.eigvalsh(mat)[0]
            if lo < EIG_FLOOR:
                raise ValueError(f"negative eigenvalue {lo:.3g} below floor {EIG_FLOOR}")

    @property
    def dim(self) -> int:
        return self.register.total_dim

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


@dataclass(frozen=True)
class ProjectiveMeasurement:
    """A PVM given as a rotation followed by computational-basis readout.

    Outcome ``x`` has projector ``U|x><x|U^dag``.
    """

    register: QuditRegister
    rotation: np.ndarray
    label: str = ""

    def __post_init__(self):
        mat = np.asarray(self.rotation, dtype=complex)
        object.__setattr__(self, "rotation", mat)
        dim = self.register.total_dim
        if mat.shape != (dim, dim):
            raise ValueError("rotation does not match register dimension")
        dev = np.max(np.abs(mat.conj().T @ mat - np.eye(dim)))
        if dev > HERMITICITY_TOL:
            raise ValueError(f"rotation not unitary: max |U^dag U - I| = {dev:.3g}")


@dataclass(frozen=True)
class OutcomeRecord:
    """Measurement readouts: per-copy flat indices plus the per-site digit grid."""

    outcomes: tuple[int, ...]
    grid: np.ndarray | None = None

    def __post_init__(self):
        if self.grid is not None:
            object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.int64))

    @staticmethod
    def from_grid(grid: np.ndarray, local_dims: Sequence[int]) -> "OutcomeRecord":
        grid = np.asarray(grid, dtype=np.int64)
        # plain-int digits keep wide registers exact (flat indices can top int64)
        outcomes = tuple(digits_to_flat([int(v) for v in row], local_dims)
                         for row in grid)
        return OutcomeRecord(outcomes, grid)


def maximally_mixed(register: QuditRegister) -> DensityOperator:
    dim = register.total_dim
    return DensityOperator(register, np.eye(dim) / dim)


def basis_state(register: QuditRegister, index: int = 0) -> PureState:
    vec = np.zeros(register.total_dim, dtype=complex)
    vec[index] = 1.0
    return PureState(register, vec)


def computational_measurement(register: QuditRegister) -> ProjectiveMeasurement:
    return ProjectiveMeasurement(register, np.eye(register.total_dim), label="comp")


def product_measurement(register: QuditRegister, site_unitaries: Sequence[np.ndarray],
                        label: str = "product") -> ProjectiveMeasurement:
    """PVM whose rotation is the Kronecker product of per-site unitaries."""
    if len(site_unitaries) != register.num_sites:
        raise ValueError("need one unitary per site")
    rot = np.array([[1.0 + 0j]])
    for u, d in zip(site_unitaries, register.local_dims):
        u = np.asarray(u, dtype=complex)
        if u.shape != (d, d):
            raise ValueError("site unitary has wrong dimension")
        rot = np.kron(rot, u)
    return ProjectiveMeasurement(register, rot, label=label)


def tensor_product(a, b):
    """Kronecker product of two states of the same kind."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        reg = a.register.concat(b.register)
        _check_cap(reg.total_dim)
        return PureState(reg, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        reg = a.register.concat(b.register)
        _check_cap(reg.total_dim)
        return DensityOperator(reg, np.kron(a.matrix, b.matrix))
    raise ValueError("tensor_product needs two PureStates or two DensityOperators")


def partial_trace(state: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    """Trace out every site not in ``keep``.

    An empty ``keep`` set returns the 1x1 array [[1]] (the full trace), since
    a zero-site register is not representable as a DensityOperator.
    """
    keep = sorted(set(keep))
    n = state.register.num_sites
    if any(r < 0 or r >= n for r in keep):
        raise ValueError("site index out of range")
    if len(keep) == n:
        return state
    dims = state.register.local_dims
    if not keep:
        return np.array([[np.trace(state.matrix)]])
    tensor = state.matrix.reshape(dims + dims)
    traced = [r for r in range(n) if r not in keep]
    # Trace highest axes first so earlier axis numbers stay valid.
    cur_n = n
    for r in sorted(traced, reverse=True):
        tensor = np.trace(tensor, axis1=r, axis2=r + cur_n)
        cur_n -= 1
    new_reg = QuditRegister(tuple(dims[r] for r in keep))
    dim = new_reg.total_dim
    return DensityOperator(new_reg, tensor.reshape(dim, dim))


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    if a.register != b.register:
        raise ValueError("register mismatch")
    eigs = np.linalg.eigvalsh(a.matrix - b.matrix)
    return float(0.5 * np.sum(np.abs(eigs)))


def _depolarize_site(matrix: np.ndarray, dims: Sequence[int], site: int,
                     rate: float) -> np.ndarray:
    n = len(dims)
    d = dims[site]
    da = math.prod(dims[:site]) if site > 0 else 1
    db = math.prod(dims[site + 1:]) if site + 1 < n else 1
    t = matrix.reshape(da, d, db, da, d, db)
    reduced = np.einsum("aibcid->abcd", t) / d
    mixed = np.einsum("abcd,ij->aibcjd", reduced, np.eye(d))
    dim = da * d * db
    return ((1.0 - rate) * matrix + rate * mixed.reshape(dim, dim))


def depolarize(state: DensityOperator, rate: float,
               sites: Iterable[int] | None = None) -> DensityOperator:
    """Depolarizing channel: global when ``sites`` is None, else per listed site.

    Global form: (1-rate) rho + rate I/total_dim.  Per-site form applies
    (1-rate) rho_site + rate I/d independently on each listed site.
    """
    if not (0.0 <= rate <= 1.0):
        raise ValueError(f"rate {rate} outside [0, 1]")
    dims = state.register.local_dims
    if sites is None:
        dim = state.register.total_dim
        mat = (1.0 - rate) * state.matrix + rate * np.eye(dim) / dim
        return DensityOperator(state.register, mat)
    mat = state.matrix
    for r in sorted(set(sites)):
        if r < 0 or r >= len(dims):
            raise ValueError("site index out of range")
        mat = _depolarize_site(mat, dims, r, rate)
    return DensityOperator(state.register, mat)


def permutation_operator(d: int, perm: Sequence[int]) -> np.ndarray:
    """Operator permuting t tensor factors of dimension d.

    ``perm`` maps slot l -> perm[l] (0-based).  The operator acts as
    P |i_0 ... i_{t-1}> = |i_{perm^{-1}(0)} ... i_{perm^{-1}(t-1)}>.
    """
    t = len(perm)
    if sorted(perm) != list(range(t)):
        raise ValueError("not a permutation")
    _check_cap(d ** t)
    dim = d ** t
    inv = [0] * t
    for l, p in enumerate(perm):
        inv[p] = l
    src = np.arange(dim)
    digits = np.empty((t, dim), dtype=np.int64)
    rem = src.copy()
    for l in range(t - 1, -1, -1):
        digits[l] = rem % d
        rem //= d
    dest = np.zeros(dim, dtype=np.int64)
    for l in range(t):
        dest = dest * d + digits[inv[l]]
    mat = np.zeros((dim, dim), dtype=complex)
    mat[dest, src] = 1.0
    return mat


def permutation_cycles(perm: Sequence[int]) -> list[list[int]]:
    """Cycle decomposition of a permutation given as slot -> perm[slot]."""
    seen = [False] * len(perm)
    cycles = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        nxt = perm[start]
        while nxt != start:
            cyc.append(nxt)
            seen[nxt] = True
            nxt = perm[nxt]
        cycles.append(cyc)
    return cycles


def born_probabilities(state: DensityOperator, meas: ProjectiveMeasurement) -> np.ndarray:
    if state.register != meas.register:
        raise ValueError("register mismatch")
    rotated = meas.rotation.conj().T @ state.matrix @ meas.rotation
    probs = np.real(np.diag(rotated)).copy()
    if probs.min() < -1e-12:
        raise ValueError(f"Born probability below clip floor: {probs.min():.3g}")
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"Born probabilities sum to {total}")
    return probs / total


def sample_outcome(state: DensityOperator, meas: ProjectiveMeasurement,
                   rng: np.random.Generator) -> int:
    probs = born_probabilities(state, meas)
    return int(rng.choice(len(probs), p=probs))


def spawn_streams(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Derive ``count`` disjoint child streams; deterministic given the parent."""
    return [np.random.Generator(np.random.PCG64(s)) for s in rng.bit_generator.seed_seq.spawn(count)]
