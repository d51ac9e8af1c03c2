"""Alternative-hypothesis state ensembles and design certification.

An ensemble bundles a sampler with whatever exact structure is known about
it: a finite support list (stabilizer orbits, point masses), exact moment
operators (Haar, stabilizer up to order 3), or nothing beyond the sampler
(random circuits, Gibbs states).  The registry at the bottom resolves
descriptor strings like ``"brickwork:n=6,L=12"`` for the CLI.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import haar, qcore
from .haar import MomentOperator, haar_unitary
from .qcore import (
    DensityOperator,
    PureState,
    QuditRegister,
    ResourceLimitError,
    basis_state,
    maximally_mixed,
    partial_trace,
    tensor_product,
    trace_distance,
)

__all__ = [
    "StateEnsemble",
    "CircuitSpec",
    "HamiltonianSpec",
    "DesignReport",
    "make_haar_ensemble",
    "make_point_ensemble",
    "make_mixed_ensemble",
    "make_stabilizer_ensemble",
    "enumerate_stabilizer_states",
    "sample_stabilizer_state",
    "sample_brickwork",
    "sample_brickwork_circuit",
    "sample_coarse_circuit",
    "apply_circuit",
    "make_circuit_ensemble",
    "sample_gue",
    "sample_rsps",
    "gibbs_state",
    "make_gibbs_ensemble",
    "symmetric_subspace_basis",
    "design_certify",
    "local_indistinguishability",
    "register_ensemble",
    "resolve_ensemble",
    "registry_names",
    "registry_text",
]


@dataclass
class StateEnsemble:
    """A named distribution over states of one register.

    ``support`` lists (weight, state) pairs when the distribution is finite,
    enabling exact averages at any order.  ``haar_exact_order`` is the largest
    k for which the k-th moment operator equals the Haar one (0 if unknown,
    a large number for the Haar ensemble itself).  ``batch_sampler``, when
    present, draws ``count`` pure states at once as a (count, dim) array.
    """

    name: str
    register: QuditRegister
    sampler: Callable[[np.random.Generator], PureState | DensityOperator]
    support: list[tuple[float, PureState | DensityOperator]] | None = None
    haar_exact_order: int = 0
    params: dict = field(default_factory=dict)
    batch_sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None

    def sample(self, rng: np.random.Generator) -> PureState | DensityOperator:
        return self.sampler(rng)

    def sample_density(self, rng: np.random.Generator) -> DensityOperator:
        return as_density(self.sampler(rng))

    def exact_moment(self, k: int) -> MomentOperator | None:
        """Exact k-th moment operator E[rho^{ox k}] when available."""
        dim = self.register.total_dim
        if self.support is not None:
            qcore._check_cap(dim ** k)
            acc = np.zeros((dim ** k, dim ** k), dtype=complex)
            for w, st in self.support:
                mat = as_density(st).matrix
                big = np.array([[1.0 + 0j]])
                for _ in range(k):
                    big = np.kron(big, mat)
                acc += w * big
            return MomentOperator(dim, k, acc)
        if k <= self.haar_exact_order:
            return haar.moment_operator(dim, k)
        return None


def as_density(state: PureState | DensityOperator) -> DensityOperator:
    if isinstance(state, PureState):
        return state.density()
    return state


# ---------------------------------------------------------------------------
# Basic ensembles


def make_haar_ensemble(register: QuditRegister) -> StateEnsemble:
    dim = register.total_dim

    def sampler(rng):
        vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        return PureState(register, vec)

    def batch(count, rng):
        vecs = rng.standard_normal((count, dim)) + 1j * rng.standard_normal((count, dim))
        return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)

    return StateEnsemble("haar", register, sampler, haar_exact_order=10 ** 9,
                         params={"dim": dim}, batch_sampler=batch)


def make_point_ensemble(state: PureState | DensityOperator, name: str = "point") -> StateEnsemble:
    return StateEnsemble(name, state.register, lambda rng: state,
                         support=[(1.0, state)], params={})


def make_mixed_ensemble(register: QuditRegister) -> StateEnsemble:
    mm = maximally_mixed(register)
    return make_point_ensemble(mm, name="mixed")


# ---------------------------------------------------------------------------
# Stabilizer states

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_PAULIS = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def _cnot(n: int, control: int, target: int) -> np.ndarray:
    dim = 2 ** n
    mat = np.zeros((dim, dim), dtype=complex)
    for idx in range(dim):
        bits = [(idx >> (n - 1 - r)) & 1 for r in range(n)]
        if bits[control]:
            bits[target] ^= 1
        out = 0
        for b in bits:
            out = out * 2 + b
        mat[out, idx] = 1.0
    return mat


def _single(n: int, gate: np.ndarray, site: int) -> np.ndarray:
    mat = np.array([[1.0 + 0j]])
    for r in range(n):
        mat = np.kron(mat, gate if r == site else np.eye(2))
    return mat


def _canonical_key(vec: np.ndarray) -> tuple:
    idx = int(np.argmax(np.abs(vec) > 1e-8))
    phase = vec[idx] / abs(vec[idx])
    canon = vec / phase
    return tuple(np.round(canon.view(float), 8))


def enumerate_stabilizer_states(n: int) -> list[PureState]:
    """All n-qubit stabilizer states by BFS over the Clifford orbit of |0..0>.

    Only feasible at n <= 2 (6 and 60 states); larger n must sample instead.
    """
    if n > 2:
        raise ResourceLimitError("orbit enumeration limited to n <= 2")
    reg = QuditRegister.uniform(n, 2)
    gates = []
    for r in range(n):
        gates.append(_single(n, _H, r))
        gates.append(_single(n, _S, r))
    for c in range(n):
        for t in range(n):
            if c != t:
                gates.append(_cnot(n, c, t))
    start = np.zeros(2 ** n, dtype=complex)
    start[0] = 1.0
    seen = {_canonical_key(start): start}
    frontier = [start]
    while frontier:
        nxt = []
        for vec in frontier:
            for g in gates:
                new = g @ vec
                key = _canonical_key(new)
                if key not in seen:
                    seen[key] = new
                    nxt.append(new)
        frontier = nxt
    states = []
    for vec in seen.values():
        idx = int(np.argmax(np.abs(vec) > 1e-8))
        canon = vec / (vec[idx] / abs(vec[idx]))
        canon /= np.linalg.norm(canon)
        states.append(PureState(reg, canon))
    return states


def _gf2_rref(rows: list[np.ndarray]) -> tuple[list[np.ndarray], list[int]]:
    mat = [r.copy() for r in rows]
    pivots = []
    rank = 0
    width = len(mat[0]) if mat else 0
    for col in range(width):
        pivot = None
        for r in range(rank, len(mat)):
            if mat[r][col]:
                pivot = r
                break
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        for r in range(len(mat)):
            if r != rank and mat[r][col]:
                mat[r] = mat[r] ^ mat[rank]
        pivots.append(col)
        rank += 1
    return mat[:rank], pivots


def _gf2_nullspace(rows: list[np.ndarray], width: int) -> list[np.ndarray]:
    if not rows:
        return [np.eye(width, dtype=np.uint8)[i] for i in range(width)]
    rref, pivots = _gf2_rref(rows)
    free = [c for c in range(width) if c not in pivots]
    basis = []
    for f in free:
        vec = np.zeros(width, dtype=np.uint8)
        vec[f] = 1
        for row, p in zip(rref, pivots):
            if row[f]:
                vec[p] = 1
        basis.append(vec)
    return basis


def _in_span_gf2(vec: np.ndarray, rows: list[np.ndarray]) -> bool:
    if not rows:
        return not vec.any()
    rref, pivots = _gf2_rref(rows)
    v = vec.copy()
    for row, p in zip(rref, pivots):
        if v[p]:
            v = v ^ row
    return not v.any()


def _pauli_from_bits(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    # Hermitian convention P = i^{x.z} X^x Z^z per site.
    mat = np.array([[1.0 + 0j]])
    for xr, zr in zip(x, z):
        local = _PAULIS[1] @ _PAULIS[3] if (xr and zr) else (
            _PAULIS[1] if xr else (_PAULIS[3] if zr else _PAULIS[0]))
        mat = np.kron(mat, local)
    phase = 1j ** int(np.dot(x.astype(int), z.astype(int)) % 4)
    return phase * mat


def sample_stabilizer_state(n: int, rng: np.random.Generator) -> PureState:
    """Uniformly random n-qubit stabilizer state via a random stabilizer group.

    Generators are drawn sequentially and uniformly from the symplectic
    complement of the ones so far (minus their span), with independent random
    signs; the stabilized state is extracted from the rank-1 projector.
    """
    if 2 ** n > qcore.DIM_CAP:
        raise ResourceLimitError("stabilizer sampling cap exceeded")
    width = 2 * n
    gens: list[np.ndarray] = []
    # Symplectic form <v, g> = v . (swap halves of g)
    constraint_rows: list[np.ndarray] = []
    for _ in range(n):
        null_basis = _gf2_nullspace(constraint_rows, width)
        while True:
            coeffs = rng.integers(0, 2, size=len(null_basis)).astype(np.uint8)
            vec = np.zeros(width, dtype=np.uint8)
            for c, b in zip(coeffs, null_basis):
                if c:
                    vec ^= b
            if vec.any() and not _in_span_gf2(vec, gens):
                break
        gens.append(vec)
        swapped = np.concatenate([vec[n:], vec[:n]])
        constraint_rows.append(swapped)
    dim = 2 ** n
    proj = np.eye(dim, dtype=complex)
    for vec in gens:
        sign = 1.0 if rng.integers(0, 2) == 0 else -1.0
        pauli = _pauli_from_bits(vec[:n], vec[n:])
        proj = proj @ (np.eye(dim) + sign * pauli) / 2.0
    vals, vecs = np.linalg.eigh((proj + proj.conj().T) / 2)
    state = vecs[:, -1]
    return PureState(QuditRegister.uniform(n, 2), state / np.linalg.norm(state))


def make_stabilizer_ensemble(n: int) -> StateEnsemble:
    """Uniform distribution over n-qubit stabilizer states (a state 3-design)."""
    if n > 6:
        raise ResourceLimitError("stabilizer ensemble limited to n <= 6")
    reg = QuditRegister.uniform(n, 2)
    if n <= 2:
        states = enumerate_stabilizer_states(n)
        w = 1.0 / len(states)
        support = [(w, st) for st in states]
        return StateEnsemble(
            "stabilizer", reg, lambda rng: states[rng.integers(0, len(states))],
            support=support, haar_exact_order=3, params={"n": n})
    return StateEnsemble("stabilizer", reg, lambda rng: sample_stabilizer_state(n, rng),
                         haar_exact_order=3, params={"n": n})


# ---------------------------------------------------------------------------
# Random circuits


@dataclass
class CircuitSpec:
    """A materialized random circuit: per-layer (sites, unitary) gate lists."""

    num_qubits: int
    depth: int
    architecture: str  # "brickwork" | "coarse"
    layers: list[list[tuple[tuple[int, ...], np.ndarray]]]
    block_size: int | None = None


def _apply_gate(psi: np.ndarray, gate: np.ndarray, sites: tuple[int, ...], n: int) -> np.ndarray:
    k = len(sites)
    tensor = psi.reshape((2,) * n)
    gate_t = gate.reshape((2,) * (2 * k))
    moved = np.tensordot(gate_t, tensor, axes=(list(range(k, 2 * k)), list(sites)))
    # tensordot puts the contracted-site outputs first; restore positions.
    return np.moveaxis(moved, list(range(k)), list(sites)).reshape(-1)


def sample_brickwork_circuit(n: int, depth: int, rng: np.random.Generator) -> CircuitSpec:
    """Brickwork circuit with periodic boundary: alternating even/odd brick offsets."""
    if n % 2 != 0:
        raise ValueError("brickwork needs an even number of qubits")
    layers = []
    for l in range(depth):
        layer = []
        offset = 0 if l % 2 == 0 else 1
        for a in range(offset, n + offset, 2):
            sites = (a % n, (a + 1) % n)
            layer.append((sites, haar_unitary(4, rng)))
        layers.append(layer)
    return CircuitSpec(n, depth, "brickwork", layers)


def sample_coarse_circuit(n: int, block: int, inner_depth: int,
                          rng: np.random.Generator) -> CircuitSpec:
    """Coarse-grained circuit: one pass of size-``block`` unitaries, then a pass
    shifted by block/2 with periodic wrap.

    Blocks are Haar when ``inner_depth`` is 0, else depth-``inner_depth``
    brickwork circuits on the block.
    """
    if n % block != 0 or block % 2 != 0:
        raise ValueError("block size must be even and divide n")
    layers = []
    for shift in (0, block // 2):
        layer = []
        for start in range(0, n, block):
            sites = tuple((start + shift + j) % n for j in range(block))
            if inner_depth == 0:
                u = haar_unitary(2 ** block, rng)
            else:
                sub = sample_brickwork_circuit(block, inner_depth, rng)
                psi_mat = np.eye(2 ** block, dtype=complex)
                cols = []
                for c in range(2 ** block):
                    cols.append(apply_circuit_vector(sub, psi_mat[:, c]))
                u = np.stack(cols, axis=1)
            layer.append((sites, u))
        layers.append(layer)
    return CircuitSpec(n, 2, "coarse", layers, block_size=block)


def apply_circuit_vector(spec: CircuitSpec, psi: np.ndarray) -> np.ndarray:
    out = psi.astype(complex)
    for layer in spec.layers:
        for sites, gate in layer:
            out = _apply_gate(out, gate, sites, spec.num_qubits)
    return out


def apply_circuit(spec: CircuitSpec) -> PureState:
    """Run the circuit on |0...0>."""
    dim = 2 ** spec.num_qubits
    qcore._check_cap(dim)
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    out = apply_circuit_vector(spec, psi)
    out /= np.linalg.norm(out)
    return PureState(QuditRegister.uniform(spec.num_qubits, 2), out)


def sample_brickwork(n: int, depth: int, rng: np.random.Generator) -> PureState:
    if n > 12:
        raise ResourceLimitError("brickwork state simulation capped at 12 qubits")
    return apply_circuit(sample_brickwork_circuit(n, depth, rng))


def _haar_unitary_batch(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((count, dim, dim))
         + 1j * rng.standard_normal((count, dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.einsum("sii->si", r)
    phases = diag / np.abs(diag)
    return q * phases.conj()[:, None, :]


def sample_brickwork_batch(n: int, depth: int, count: int,
                           rng: np.random.Generator,
                           chunk: int = 20000) -> np.ndarray:
    """``count`` independent brickwork states on |0..0> as a (count, 2^n) array.

    Gate sampling and application are vectorized across the batch; each state
    still gets its own independent gates.
    """
    if n % 2 != 0:
        raise ValueError("brickwork needs an even number of qubits")
    dim = 2 ** n
    qcore._check_cap(dim)
    out = np.empty((count, dim), dtype=complex)
    done = 0
    while done < count:
        size = min(chunk, count - done)
        states = np.zeros((size, dim), dtype=complex)
        states[:, 0] = 1.0
        for l in range(depth):
            offset = 0 if l % 2 == 0 else 1
            for a in range(offset, n + offset, 2):
                sites = (a % n, (a + 1) % n)
                gates = _haar_unitary_batch(size, 4, rng)
                tensor = states.reshape((size,) + (2,) * n)
                moved = np.moveaxis(tensor, [1 + sites[0], 1 + sites[1]], [1, 2])
                shape = moved.shape
                flat = moved.reshape(size, 4, -1)
                flat = np.einsum("sij,sjr->sir", gates, flat)
                states = np.moveaxis(flat.reshape(shape), [1, 2],
                                     [1 + sites[0], 1 + sites[1]]).reshape(size, dim)
        out[done:done + size] = states
        done += size
    return out


def make_circuit_ensemble(n: int, depth: int, architecture: str = "brickwork",
                          block: int | None = None) -> StateEnsemble:
    reg = QuditRegister.uniform(n, 2)
    if architecture == "brickwork":
        sampler = lambda rng: sample_brickwork(n, depth, rng)
        params = {"n": n, "L": depth}
        return StateEnsemble("brickwork", reg, sampler, params=params,
                             batch_sampler=lambda count, rng:
                             sample_brickwork_batch(n, depth, count, rng))
    elif architecture == "coarse":
        if block is None:
            raise ValueError("coarse architecture needs a block size")
        sampler = lambda rng: apply_circuit(sample_coarse_circuit(n, block, depth, rng))
        params = {"n": n, "L": depth, "block": block}
    else:
        raise ValueError(f"unknown architecture {architecture!r}")
    return StateEnsemble(architecture, reg, sampler, params=params)


# ---------------------------------------------------------------------------
# Random Hamiltonians and Gibbs states


@dataclass
class HamiltonianSpec:
    kind: str  # "gue" | "rsps"
    n: int
    matrix: np.ndarray
    terms: int | None = None
    pauli_strings: np.ndarray | None = None
    signs: np.ndarray | None = None

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, ord=2))


def sample_gue(n: int, rng: np.random.Generator) -> HamiltonianSpec:
    """GUE with entrywise normalization: diagonal g/sqrt(d), off-diag (g+ig')/sqrt(2d)."""
    d = 2 ** n
    qcore._check_cap(d)
    g = rng.standard_normal((d, d))
    gp = rng.standard_normal((d, d))
    mat = np.zeros((d, d), dtype=complex)
    iu = np.triu_indices(d, k=1)
    mat[iu] = (g[iu] + 1j * gp[iu]) / np.sqrt(2 * d)
    mat = mat + mat.conj().T
    mat[np.diag_indices(d)] = np.diag(g) / np.sqrt(d)
    return HamiltonianSpec("gue", n, mat)


def sample_rsps(n: int, terms: int, rng: np.random.Generator) -> HamiltonianSpec:
    """Random sparse Pauli strings: H = sum_a r_a P_a / sqrt(J), r_a uniform signs."""
    d = 2 ** n
    qcore._check_cap(d)
    strings = rng.integers(0, 4, size=(terms, n))
    signs = np.where(rng.integers(0, 2, size=terms) == 0, 1.0, -1.0)
    mat = np.zeros((d, d), dtype=complex)
    for a in range(terms):
        p = np.array([[1.0 + 0j]])
        for r in range(n):
            p = np.kron(p, _PAULIS[strings[a, r]])
        mat += signs[a] * p
    mat /= np.sqrt(terms)
    return HamiltonianSpec("rsps", n, mat, terms=terms, pauli_strings=strings, signs=signs)


def gibbs_state(ham: HamiltonianSpec, beta: float) -> DensityOperator:
    """exp(-beta H) / tr(exp(-beta H)) via eigendecomposition.

    Sign convention: the thermal weight decreases with energy.
    """
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    vals, vecs = np.linalg.eigh(ham.matrix)
    weights = np.exp(-beta * (vals - vals.min()))
    weights /= weights.sum()
    mat = (vecs * weights) @ vecs.conj().T
    mat = (mat + mat.conj().T) / 2
    return DensityOperator(QuditRegister.uniform(ham.n, 2), mat)


def make_gibbs_ensemble(kind: str, n: int, beta: float = 1.0,
                        terms: int | None = None) -> StateEnsemble:
    reg = QuditRegister.uniform(n, 2)
    if kind == "gue":
        sampler = lambda rng: gibbs_state(sample_gue(n, rng), beta)
        params = {"n": n, "beta": beta}
    elif kind == "rsps":
        if terms is None:
            raise ValueError("rsps ensemble needs a term count J")
        sampler = lambda rng: gibbs_state(sample_rsps(n, terms, rng), beta)
        params = {"n": n, "beta": beta, "J": terms}
    else:
        raise ValueError(f"unknown Hamiltonian kind {kind!r}")
    return StateEnsemble(f"gibbs-{kind}", reg, sampler, params=params)


# ---------------------------------------------------------------------------
# Design certification


def symmetric_subspace_basis(d: int, k: int) -> np.ndarray:
    """Orthonormal basis (columns) of Sym^k(C^d) inside (C^d)^{ox k}."""
    qcore._check_cap(d ** k)
    dim = d ** k
    cols = []
    for multiset in itertools.combinations_with_replacement(range(d), k):
        arrangements = set(itertools.permutations(multiset))
        vec = np.zeros(dim, dtype=complex)
        for arr in arrangements:
            flat = 0
            for digit in arr:
                flat = flat * d + digit
            vec[flat] = 1.0
        vec /= np.linalg.norm(vec)
        cols.append(vec)
    return np.stack(cols, axis=1)


@dataclass
class DesignReport:
    ensemble: str
    order: int
    epsilon: float
    mode: str
    samples: int | None = None
    eig_ratio_min: float = 0.0
    eig_ratio_max: float = 0.0
    sample_stderr: float | None = None
    non_psd: bool = False

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


def design_certify(ensemble: StateEnsemble, k: int, mode: str = "exact",
                   samples: int = 10000,
                   rng: np.random.Generator | None = None) -> DesignReport:
    """Two-sided multiplicative design certificate for the k-th moment.

    Reports the smallest eps with (1-eps) M <= M_Haar <= (1+eps) M on the
    symmetric subspace, where M is the ensemble's k-th moment operator.  A
    singular M (e.g. a point mass) yields eps = inf.
    """
    d = ensemble.register.total_dim
    qcore._check_cap(d ** k)
    if mode == "exact":
        mom = ensemble.exact_moment(k)
        if mom is None:
            raise ValueError(f"ensemble {ensemble.name!r} has no exact moment at k={k}")
        m_mat = mom.matrix
        n_samples = None
        stderr = None
    elif mode == "mc":
        if rng is None:
            raise ValueError("monte-carlo mode needs an rng")
        dim = d ** k
        acc = np.zeros((dim, dim), dtype=complex)
        diag_sq = np.zeros(dim)
        pure_count = 0
        if ensemble.batch_sampler is not None:
            chunk = 20000
            done = 0
            while done < samples:
                size = min(chunk, samples - done)
                vecs = ensemble.batch_sampler(size, rng)
                big = vecs
                for _ in range(k - 1):
                    big = np.einsum("si,sj->sij", big, vecs).reshape(size, -1)
                acc += big.conj().T @ big
                diag_sq += np.sum(np.abs(big) ** 4, axis=0)
                done += size
            acc = acc.T  # mean of big big^dag, not big^dag big conjugated
            pure_count = samples
        else:
            block = []
            for _ in range(samples):
                st = ensemble.sample(rng)
                if isinstance(st, PureState):
                    vec = st.amplitudes
                    big = np.array([1.0 + 0j])
                    for _ in range(k):
                        big = np.kron(big, vec)
                    block.append(big)
                else:
                    mat = st.matrix
                    big = np.array([[1.0 + 0j]])
                    for _ in range(k):
                        big = np.kron(big, mat)
                    acc += big
            if block:
                w = np.stack(block, axis=0)
                acc += (w.conj().T @ w).T
                diag_sq += np.sum(np.abs(w) ** 4, axis=0)
                pure_count = len(block)
        m_mat = acc / samples
        n_samples = samples
        # entrywise standard error estimate from the diagonal variances
        if pure_count:
            var = np.maximum(diag_sq / samples - np.abs(np.diag(m_mat)) ** 2, 0.0)
            stderr = float(np.sqrt(np.max(var) / samples))
        else:
            stderr = None
    else:
        raise ValueError(f"unknown mode {mode!r}")

    basis = symmetric_subspace_basis(d, k)
    m_sym = basis.conj().T @ m_mat @ basis
    m_sym = (m_sym + m_sym.conj().T) / 2
    target = 1.0 / math.comb(d + k - 1, k)
    eigs = np.linalg.eigvalsh(m_sym)
    non_psd = bool(eigs.min() < -1e-10)
    pos = eigs[eigs > 1e-14]
    if len(pos) < len(eigs):
        eps = float("inf")
        ratios = target / pos if len(pos) else np.array([np.inf])
    else:
        ratios = target / eigs
        eps = float(np.max(np.abs(ratios - 1.0)))
    return DesignReport(
        ensemble.name, k, eps, mode, samples=n_samples,
        eig_ratio_min=float(np.min(ratios)), eig_ratio_max=float(np.max(ratios)),
        sample_stderr=stderr, non_psd=non_psd)


# ---------------------------------------------------------------------------
# Local indistinguishability


def local_indistinguishability(ensemble: StateEnsemble, m: int,
                               positions: Sequence[tuple[int, int]],
                               rotations: Sequence[np.ndarray] | None = None,
                               samples: int = 2000,
                               rng: np.random.Generator | None = None,
                               ancilla: int = 0) -> tuple[float, float]:
    """Trace distance between the averaged reduced m-copy state on the given
    (copy, site) positions and the maximally mixed state of that size.

    ``rotations`` holds one unitary per copy, applied to rho (tensored with
    |0..0> ancillas when ``ancilla`` > 0) before reduction.  Finite-support
    ensembles are averaged exactly (stderr 0); otherwise Monte Carlo.
    """
    n_sites = ensemble.register.num_sites + ancilla
    dims = ensemble.register.local_dims + (2,) * ancilla
    copies = sorted({i for i, _ in positions})
    if any(i < 0 or i >= m for i in copies):
        raise ValueError("copy index out of range")
    per_copy = {i: sorted(r for j, r in positions if j == i) for i in copies}
    if any(r < 0 or r >= n_sites for rs in per_copy.values() for r in rs):
        raise ValueError("site index out of range")
    big_reg = QuditRegister(tuple(dims[r] for i in copies for r in per_copy[i]))
    qcore._check_cap(big_reg.total_dim)

    def reduced_for(state) -> np.ndarray:
        rho = as_density(state)
        mat = rho.matrix
        reg = rho.register
        if ancilla:
            anc = basis_state(QuditRegister.uniform(ancilla, 2), 0).density()
            full = tensor_product(rho, anc)
            mat, reg = full.matrix, full.register
        out = np.array([[1.0 + 0j]])
        for i in copies:
            rot = None if rotations is None else rotations[i]
            sub = mat if rot is None else rot @ mat @ rot.conj().T
            sub_dm = DensityOperator(reg, (sub + sub.conj().T) / 2)
            red = partial_trace(sub_dm, per_copy[i])
            out = np.kron(out, red.matrix)
        return out

    if ensemble.support is not None:
        mean = sum(w * reduced_for(st) for w, st in ensemble.support)
        est = trace_distance(DensityOperator(big_reg, mean), maximally_mixed(big_reg))
        return float(est), 0.0

    if rng is None:
        raise ValueError("sampling ensembles need an rng")
    blocks = 10
    per_block = max(1, samples // blocks)
    block_means = []
    for _ in range(blocks):
        acc = np.zeros((big_reg.total_dim, big_reg.total_dim), dtype=complex)
        for _ in range(per_block):
            acc += reduced_for(ensemble.sample(rng))
        block_means.append(acc / per_block)
    mean = sum(block_means) / blocks
    mm = maximally_mixed(big_reg)
    est = trace_distance(DensityOperator(big_reg, (mean + mean.conj().T) / 2), mm)
    block_vals = [trace_distance(DensityOperator(big_reg, (b + b.conj().T) / 2), mm)
                  for b in block_means]
    stderr = float(np.std(block_vals) / np.sqrt(blocks))
    return float(est), stderr


# ---------------------------------------------------------------------------
# Registry

_REGISTRY: dict[str, tuple[Callable[[dict], StateEnsemble], str]] = {}


def register_ensemble(name: str, factory: Callable[[dict], StateEnsemble],
                      schema: str = "") -> None:
    _REGISTRY[name] = (factory, schema)


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


def registry_text(query: str = "") -> str:
    lines = []
    for name in registry_names():
        if query and query not in name:
            continue
        lines.append(f"{name}: {_REGISTRY[name][1]}")
    return "\n".join(lines)


def parse_descriptor(descriptor: str) -> tuple[str, dict]:
    """Parse ``name:key=value,key=value`` (bare tokens become variant flags)."""
    if ":" in descriptor:
        name, _, rest = descriptor.partition(":")
    elif "," in descriptor:
        name, _, rest = descriptor.partition(",")
    else:
        name, rest = descriptor, ""
    params: dict = {}
    if rest:
        for tok in rest.split(","):
            tok = tok.strip()
            if not tok:
                continue
            if "=" in tok:
                key, _, val = tok.partition("=")
                try:
                    params[key] = int(val)
                except ValueError:
                    try:
                        params[key] = float(val)
                    except ValueError:
                        params[key] = val
            else:
                params["variant"] = tok
    return name.strip(), params


def resolve_ensemble(descriptor: str) -> StateEnsemble:
    name, params = parse_descriptor(descriptor)
    if name not in _REGISTRY:
        raise ValueError(f"unknown ensemble {name!r}; known: {', '.join(registry_names())}")
    return _REGISTRY[name][0](params)


def _haar_factory(params: dict) -> StateEnsemble:
    if "n" in params:
        reg = QuditRegister.uniform(int(params["n"]), int(params.get("d", 2)))
    elif "d" in params:
        reg = QuditRegister((int(params["d"]),))
    else:
        raise ValueError("haar ensemble needs n= or d=")
    return make_haar_ensemble(reg)


def _point_factory(params: dict) -> StateEnsemble:
    variant = params.get("variant", params.get("state", "zero-state"))
    if variant not in ("zero-state", "zero"):
        raise ValueError(f"unknown point variant {variant!r}")
    reg = QuditRegister.uniform(int(params.get("n", 1)), int(params.get("d", 2)))
    return make_point_ensemble(basis_state(reg, 0), name="point")


register_ensemble("haar", _haar_factory, "n=<qubits> | d=<dim>")
register_ensemble("stabilizer", lambda p: make_stabilizer_ensemble(int(p["n"])), "n=<qubits (<=6)>")
register_ensemble("point", _point_factory, "zero-state,n=<qubits>[,d=<dim>]")
register_ensemble("mixed", lambda p: make_mixed_ensemble(
    QuditRegister.uniform(int(p.get("n", 1)), int(p.get("d", 2)))), "n=<sites>[,d=<dim>]")
register_ensemble("brickwork", lambda p: make_circuit_ensemble(
    int(p["n"]), int(p["L"]), "brickwork"), "n=<even qubits>,L=<depth>")
register_ensemble("coarse", lambda p: make_circuit_ensemble(
    int(p["n"]), int(p.get("L", 0)), "coarse", block=int(p["block"])),
    "n=<qubits>,block=<even size>,L=<inner depth, 0=Haar blocks>")
register_ensemble("gibbs-gue", lambda p: make_gibbs_ensemble(
    "gue", int(p["n"]), float(p.get("beta", 1.0))), "n=<qubits>[,beta=<b>]")
register_ensemble("gibbs-rsps", lambda p: make_gibbs_ensemble(
    "rsps", int(p["n"]), float(p.get("beta", 1.0)), terms=int(p["J"])),
    "n=<qubits>,J=<terms>[,beta=<b>]")
