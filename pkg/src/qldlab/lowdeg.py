"""Likelihood-ratio engine: Fourier analysis of measurement readouts.

The null hypothesis is always the maximally mixed state measured by the
plan's PVMs, which makes the readout distribution uniform over outcome
labels; for ancilla-assisted plans the null is *defined* as uniform over all
labels of the rotated computational readout, and the standard characters on
all digits are used.  Characters are chi(s) = prod_p xi^{alpha_p s_p} with
xi = exp(2 pi i / d); coefficients are c = E_s[f(s) conj(chi(s))], so all
squared masses are convention independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import haar, qcore
from .ensembles import StateEnsemble, as_density
from .qcore import (
    OutcomeRecord,
    PureState,
    QuditRegister,
    ResourceLimitError,
    partial_trace,
)

__all__ = [
    "FourierIndex",
    "CopyMeasurement",
    "MeasurementPlan",
    "DecisionTree",
    "AdaptivePlan",
    "AdvantageReport",
    "comp_basis_plan",
    "local_plan",
    "rotated_plan",
    "likelihood_ratio",
    "likelihood_table",
    "coefficient_table",
    "fourier_coefficient",
    "degree_advantage",
    "copywise_advantage",
    "copy_moment_statistic",
    "adaptive_tree_advantage",
    "uniform_tree",
    "kllr",
    "bound_audit",
    "BoundAudit",
    "bloch_basis",
    "BLOCH_GRID_26",
]

INDEX_BUDGET = 10 ** 6


# ---------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class CopyMeasurement:
    """Measurement of one copy: per-site unitaries (product) or one rotation (dense).

    The rotation acts on the copy's base sites plus any appended ancilla sites.
    """

    site_unitaries: tuple[np.ndarray, ...] | None = None
    rotation: np.ndarray | None = None

    def is_product(self) -> bool:
        return self.site_unitaries is not None


@dataclass(frozen=True)
class MeasurementPlan:
    """Nonadaptive plan: one single-copy PVM per copy.

    ``ancilla`` sites (same local dimension as the register) are appended in
    |0> to every copy before the rotation; readout digits cover base and
    ancilla sites alike.
    """

    register: QuditRegister
    copies: int
    measurements: tuple[CopyMeasurement, ...]
    ancilla: int = 0
    locality: str = "local"

    def __post_init__(self):
        if len(self.measurements) != self.copies:
            raise ValueError("need one measurement per copy")
        if len(set(self.register.local_dims)) != 1:
            raise ValueError("character analysis needs a uniform local dimension")

    @property
    def d(self) -> int:
        return self.register.local_dims[0]

    @property
    def n_base(self) -> int:
        return self.register.num_sites

    @property
    def n_tot(self) -> int:
        return self.register.num_sites + self.ancilla

    @property
    def outcome_dim(self) -> int:
        return self.d ** self.n_tot

    def positions(self) -> list[tuple[int, int]]:
        return [(i, r) for i in range(self.copies) for r in range(self.n_tot)]


def comp_basis_plan(register: QuditRegister, copies: int, ancilla: int = 0) -> MeasurementPlan:
    d = register.local_dims[0]
    eye = np.eye(d)
    meas = CopyMeasurement(site_unitaries=(eye,) * (register.num_sites + ancilla))
    return MeasurementPlan(register, copies, (meas,) * copies, ancilla=ancilla)


def local_plan(register: QuditRegister, copies: int,
               site_unitaries: Sequence[Sequence[np.ndarray]] | Sequence[np.ndarray],
               ancilla: int = 0) -> MeasurementPlan:
    """Plan of product measurements; one basis list per copy, or one shared list."""
    n_tot = register.num_sites + ancilla
    first = site_unitaries[0]
    if isinstance(first, np.ndarray):
        shared = tuple(np.asarray(u) for u in site_unitaries)
        if len(shared) != n_tot:
            raise ValueError("need one unitary per site (incl. ancilla)")
        meas = (CopyMeasurement(site_unitaries=shared),) * copies
    else:
        meas = tuple(CopyMeasurement(site_unitaries=tuple(np.asarray(u) for u in us))
                     for us in site_unitaries)
        if len(meas) != copies:
            raise ValueError("need one basis list per copy")
    return MeasurementPlan(register, copies, meas, ancilla=ancilla)


def rotated_plan(register: QuditRegister, copies: int,
                 rotations: Sequence[np.ndarray], ancilla: int = 0,
                 locality: str = "general") -> MeasurementPlan:
    meas = tuple(CopyMeasurement(rotation=np.asarray(r)) for r in rotations)
    return MeasurementPlan(register, copies, meas, ancilla=ancilla, locality=locality)


# ---------------------------------------------------------------------------
# Fourier indices


@dataclass(frozen=True)
class FourierIndex:
    """A set of (copy, site) positions with per-position character exponents."""

    positions: tuple[tuple[int, int], ...]
    exponents: tuple[int, ...]

    def __post_init__(self):
        if len(self.positions) != len(self.exponents):
            raise ValueError("positions and exponents must align")
        if list(self.positions) != sorted(self.positions):
            raise ValueError("positions must be sorted")
        if len(set(self.positions)) != len(self.positions):
            raise ValueError("duplicate position")
        if any(e < 1 for e in self.exponents):
            raise ValueError("exponents live in [1, d-1]")

    @property
    def size(self) -> int:
        return len(self.positions)

    def copies(self) -> set[int]:
        return {i for i, _ in self.positions}

    def per_copy_degree(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for i, _ in self.positions:
            out[i] = out.get(i, 0) + 1
        return out

    def to_json(self) -> dict:
        return {"positions": [list(p) for p in self.positions],
                "exponents": list(self.exponents)}


def enumerate_indices(plan: MeasurementPlan, k: int, per_copy_cap: int | None = None,
                      copy_cap: int | None = None, budget: int = INDEX_BUDGET):
    """All nonempty indices of size <= k in lexicographic (copy, site, exponent) order.

    ``per_copy_cap``/``copy_cap`` add the copy-wise (D, k) filter.  Fails
    closed when the index count would exceed the budget.
    """
    d = plan.d
    pos = plan.positions()
    count = 0
    for size in range(1, k + 1):
        count += math.comb(len(pos), size) * (d - 1) ** size
    if count > budget:
        raise ResourceLimitError(f"index budget exceeded: {count} > {budget}")
    for size in range(1, k + 1):
        for combo in itertools.combinations(pos, size):
            if per_copy_cap is not None or copy_cap is not None:
                per = {}
                for i, _ in combo:
                    per[i] = per.get(i, 0) + 1
                if per_copy_cap is not None and max(per.values()) > per_copy_cap:
                    continue
                if copy_cap is not None and len(per) > copy_cap:
                    continue
            for exps in itertools.product(range(1, d), repeat=size):
                yield FourierIndex(combo, exps)


# ---------------------------------------------------------------------------
# Per-copy operator construction


def _char_matrix(basis: np.ndarray, exponent: int, d: int) -> np.ndarray:
    """G = sum_x conj(xi^{alpha x}) |v_x><v_x| over the basis columns."""
    xi = np.exp(-2j * np.pi * exponent / d)
    phases = xi ** np.arange(d)
    return (basis * phases) @ basis.conj().T


def _copy_operator(plan: MeasurementPlan, copy: int,
                   sites_exps: list[tuple[int, int]]):
    """Operator B with E_s[D(s) conj(chi)] = E_rho tr(rho B) restricted to one copy.

    Returns either a per-site factor list (product measurements) or a dense
    matrix on the copy's base register (ancilla block already folded in).
    """
    d = plan.d
    meas = plan.measurements[copy]
    touched = dict(sites_exps)
    if meas.is_product():
        factors = []
        scalar = 1.0 + 0j
        for r in range(plan.n_tot):
            u = meas.site_unitaries[r]
            mat = _char_matrix(u, touched[r], d) if r in touched else np.eye(d, dtype=complex)
            if r < plan.n_base:
                factors.append(mat)
            else:
                scalar *= mat[0, 0]
        return ("product", factors, scalar)
    rot = meas.rotation
    dim_tot = plan.outcome_dim
    if rot.shape != (dim_tot, dim_tot):
        raise ValueError("rotation has wrong dimension for plan")
    phases = np.ones(dim_tot, dtype=complex)
    idx = np.arange(dim_tot)
    for r, alpha in touched.items():
        shift = plan.n_tot - 1 - r
        digit = (idx // d ** shift) % d
        phases *= np.exp(-2j * np.pi * alpha / d) ** digit
    dense = (rot * phases) @ rot.conj().T
    if plan.ancilla:
        da = d ** plan.ancilla
        dbase = d ** plan.n_base
        dense = dense.reshape(dbase, da, dbase, da)[:, 0, :, 0]
    return ("dense", dense, 1.0 + 0j)


def _expand_product(factors: list[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for f in factors:
        out = np.kron(out, f)
    return out


def _tr_state_operator(state, op) -> complex:
    kind, payload, scalar = op
    rho = as_density(state) if not isinstance(state, PureState) else None
    if kind == "product":
        mat = _expand_product(payload)
    else:
        mat = payload
    if isinstance(state, PureState):
        v = state.amplitudes
        return scalar * complex(v.conj() @ (mat @ v))
    return scalar * complex(np.trace(rho.matrix @ mat))


def _haar_product_expectation(ops: list, dim: int) -> complex:
    """E_rho prod_i tr(rho B_i) for Haar rho via the permutation-sum formula."""
    t = len(ops)
    dense = []
    for kind, payload, scalar in ops:
        mat = _expand_product(payload) if kind == "product" else payload
        dense.append((mat, scalar))
    total = 0.0 + 0j
    for perm in itertools.permutations(range(t)):
        term = 1.0 + 0j
        for cyc in qcore.permutation_cycles(perm):
            prod = dense[cyc[0]][0]
            for j in cyc[1:]:
                prod = prod @ dense[j][0]
            term *= np.trace(prod)
        total += term
    for _, scalar in dense:
        total *= scalar
    return total / haar.rising_factorial(dim, t)


def ensemble_product_expectation(ensemble: StateEnsemble, ops: list,
                                 mode: str = "auto",
                                 rng: np.random.Generator | None = None,
                                 samples: int = 4000) -> complex:
    """E_rho prod_i tr(rho B_i) over the ensemble.

    Exact for finite-support ensembles and for ensembles whose moments match
    Haar up to the needed order; Monte Carlo otherwise.
    """
    t = len(ops)
    if mode == "auto":
        if ensemble.support is not None:
            mode = "support"
        elif ensemble.haar_exact_order >= t:
            mode = "haar"
        else:
            mode = "mc"
    if mode == "support":
        return sum(w * np.prod([_tr_state_operator(st, op) for op in ops])
                   for w, st in ensemble.support)
    if mode == "haar":
        return _haar_product_expectation(ops, ensemble.register.total_dim)
    if rng is None:
        raise ValueError("monte-carlo expectation needs an rng")
    acc = 0.0 + 0j
    for _ in range(samples):
        st = ensemble.sample(rng)
        acc += np.prod([_tr_state_operator(st, op) for op in ops])
    return acc / samples


# ---------------------------------------------------------------------------
# Likelihood ratios and tables


def _copy_prob_vector(state, plan: MeasurementPlan, copy: int) -> np.ndarray:
    """Born probabilities of one copy's measurement on (state ox |0 anc>)."""
    d = plan.d
    meas = plan.measurements[copy]
    rho = as_density(state)
    mat = rho.matrix
    if meas.is_product():
        if plan.ancilla:
            zero = np.zeros((d, d), dtype=complex)
            zero[0, 0] = 1.0
            for _ in range(plan.ancilla):
                mat = np.kron(mat, zero)
        rot = _expand_product(list(meas.site_unitaries))
        probs = np.real(np.einsum("ij,ji->i", rot.conj().T @ mat, rot))
    else:
        if plan.ancilla:
            zero = np.zeros((d ** plan.ancilla, d ** plan.ancilla), dtype=complex)
            zero[0, 0] = 1.0
            mat = np.kron(mat, zero)
        rot = meas.rotation
        probs = np.real(np.einsum("ij,ji->i", rot.conj().T @ mat, rot))
    return np.clip(probs, 0.0, None)


def likelihood_ratio(state, plan: MeasurementPlan, history: OutcomeRecord) -> float:
    """prod_i (outcome probability under the state) / (uniform null probability)."""
    if len(history.outcomes) != plan.copies:
        raise ValueError("history length does not match plan")
    dim = plan.outcome_dim
    out = 1.0
    for i, s in enumerate(history.outcomes):
        probs = _copy_prob_vector(state, plan, i)
        assert probs.sum() > 0
        out *= float(probs[s]) * dim
    return out


def likelihood_table(ensemble: StateEnsemble, plan: MeasurementPlan,
                     mode: str = "auto", rng: np.random.Generator | None = None,
                     samples: int = 4000, budget: int = 2 ** 20) -> np.ndarray:
    """E_rho D(s) for every history s, flattened over (copy, site) digits."""
    dim = plan.outcome_dim
    total = dim ** plan.copies
    if total > budget:
        raise ResourceLimitError(f"history space {total} exceeds budget {budget}")

    def table_for(state) -> np.ndarray:
        vecs = [_copy_prob_vector(state, plan, i) for i in range(plan.copies)]
        out = np.array([1.0])
        for v in vecs:
            out = np.kron(out, v)
        return out * float(dim) ** plan.copies

    if mode == "auto":
        if ensemble.support is not None:
            mode = "support"
        elif ensemble.haar_exact_order >= plan.copies:
            mode = "moment"
        else:
            mode = "mc"
    if mode == "support":
        return sum(w * table_for(st) for w, st in ensemble.support)
    if mode == "moment":
        mom = ensemble.exact_moment(plan.copies)
        if mom is None:
            raise ValueError("no exact moment available at this order")
        cols = []
        d = plan.d
        for i in range(plan.copies):
            meas = plan.measurements[i]
            rot = _expand_product(list(meas.site_unitaries)) if meas.is_product() \
                else meas.rotation
            if plan.ancilla:
                # column s of V is the base-register component <b,0_anc|U|s>
                da = d ** plan.ancilla
                v = rot.reshape(d ** plan.n_base, da, plan.outcome_dim)[:, 0, :]
                cols.append(v)
            else:
                cols.append(rot)
        big = np.array([[1.0 + 0j]])
        for v in cols:
            big = np.kron(big, v)
        table = np.real(np.einsum("ij,ji->i", big.conj().T @ mom.matrix, big))
        return table * float(dim) ** plan.copies
    if rng is None:
        raise ValueError("monte-carlo table needs an rng")
    acc = np.zeros(total)
    for _ in range(samples):
        acc += table_for(ensemble.sample(rng))
    return acc / samples


def coefficient_table(table: np.ndarray, d: int) -> np.ndarray:
    """Character coefficients of a function given by its value table.

    Input axis layout is the mixed-radix flattening over all (copy, site)
    digits; output has one axis of length d per digit, entry [alpha_1, ...]
    = E_s[f(s) conj(chi_alpha(s))].
    """
    n_axes = int(round(math.log(table.size, d)))
    xi = np.exp(-2j * np.pi / d)
    transform = xi ** (np.outer(np.arange(d), np.arange(d))) / d
    out = table.reshape((d,) * n_axes).astype(complex)
    for ax in range(n_axes):
        out = np.moveaxis(np.tensordot(transform, out, axes=(1, ax)), 0, ax)
    return out


def fourier_coefficient(ensemble: StateEnsemble, plan: MeasurementPlan,
                        index: FourierIndex, mode: str = "auto",
                        rng: np.random.Generator | None = None,
                        samples: int = 4000) -> complex:
    """Coefficient E_rho E_s[D(s) conj(chi_index(s))] of the mean likelihood ratio."""
    if not isinstance(plan, MeasurementPlan):
        raise ValueError("adaptive plans go through adaptive_tree_advantage")
    per_copy: dict[int, list[tuple[int, int]]] = {}
    for (i, r), alpha in zip(index.positions, index.exponents):
        if i >= plan.copies or r >= plan.n_tot:
            raise ValueError("index position outside the plan grid")
        per_copy.setdefault(i, []).append((r, alpha))
    ops = [_copy_operator(plan, i, sites) for i, sites in sorted(per_copy.items())]
    if mode == "enumerate":
        table = likelihood_table(ensemble, plan, rng=rng, samples=samples)
        coeffs = coefficient_table(table, plan.d)
        sel = [0] * (plan.copies * plan.n_tot)
        for (i, r), alpha in zip(index.positions, index.exponents):
            sel[i * plan.n_tot + r] = alpha
        return complex(coeffs[tuple(sel)])
    return complex(ensemble_product_expectation(ensemble, ops, mode=mode,
                                                rng=rng, samples=samples))


# ---------------------------------------------------------------------------
# Advantage reports


@dataclass
class AdvantageReport:
    degree: object
    total: float
    coefficients: list[tuple[FourierIndex, float]]
    method: str
    samples: int | None = None
    stderr: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.coefficients:
            s = sum(v for _, v in self.coefficients)
            if abs(s - self.total) > 1e-10 * max(1.0, abs(self.total)):
                raise AssertionError("total does not match coefficient table")
        if self.total < -1e-12:
            raise AssertionError("negative total advantage")

    def total_at(self, k: int) -> float:
        """Partial sum over indices of size <= k (exact monotonicity source)."""
        return sum(v for idx, v in self.coefficients if idx.size <= k)

    def to_json_dict(self) -> dict:
        coeffs = [dict(idx.to_json(), value_sq=float(v)) for idx, v in self.coefficients]
        out = {"degree": list(self.degree) if isinstance(self.degree, tuple) else self.degree,
               "total": float(self.total), "coefficients": coeffs, "method": self.method}
        if self.samples is not None:
            out["samples"] = self.samples
        if self.stderr is not None:
            out["stderr"] = self.stderr
        if self.extra:
            out["extra"] = {key: val for key, val in self.extra.items()}
        return out


def _collect_report(ensemble, plan, indices, mode, rng, samples, degree) -> AdvantageReport:
    method = mode
    rows = []
    stderr = None
    if mode == "enumerate":
        table = likelihood_table(ensemble, plan, rng=rng, samples=samples)
        coeffs = coefficient_table(table, plan.d)
        for idx in indices:
            sel = [0] * (plan.copies * plan.n_tot)
            for (i, r), alpha in zip(idx.positions, idx.exponents):
                sel[i * plan.n_tot + r] = alpha
            rows.append((idx, float(abs(coeffs[tuple(sel)]) ** 2)))
    elif mode == "mc":
        # one shared batch of states for every coefficient
        if rng is None:
            raise ValueError("monte-carlo mode needs an rng")
        states = [ensemble.sample(rng) for _ in range(samples)]
        worst = 0.0
        for idx in indices:
            per_copy: dict[int, list[tuple[int, int]]] = {}
            for (i, r), alpha in zip(idx.positions, idx.exponents):
                per_copy.setdefault(i, []).append((r, alpha))
            ops = [_copy_operator(plan, i, sites) for i, sites in sorted(per_copy.items())]
            vals = np.array([np.prod([_tr_state_operator(st, op) for op in ops])
                             for st in states])
            mean = complex(np.mean(vals))
            worst = max(worst, float(np.std(np.abs(vals)) / math.sqrt(samples)))
            rows.append((idx, float(abs(mean) ** 2)))
        stderr = worst
    else:
        for idx in indices:
            c = fourier_coefficient(ensemble, plan, idx, mode=mode, rng=rng, samples=samples)
            rows.append((idx, float(abs(c) ** 2)))
        if mode == "auto":
            method = "exact-moment" if ensemble.support is None else "exact-support"
    total = float(sum(v for _, v in rows))
    return AdvantageReport(degree, total, rows, method,
                           samples=samples if method == "mc" else None,
                           stderr=stderr)


def degree_advantage(ensemble: StateEnsemble, plan: MeasurementPlan, k: int,
                     mode: str = "auto", rng: np.random.Generator | None = None,
                     samples: int = 4000, budget: int = INDEX_BUDGET) -> AdvantageReport:
    """Squared degree-k advantage: sum of squared coefficients over nonempty
    indices of size <= k.

    k = 0 admits no nonempty index, so the report is identically zero (the
    degenerate convention used by the bound audits).
    """
    indices = list(enumerate_indices(plan, k, budget=budget))
    return _collect_report(ensemble, plan, indices, mode, rng, samples, degree=k)


def _single_copy_masked_coeffs(state, plan: MeasurementPlan, copy: int,
                               cap: int) -> np.ndarray:
    """Character coefficients of one copy's likelihood ratio, zeroed above degree cap.

    The empty index (constant term) is also zeroed.
    """
    d = plan.d
    vec = _copy_prob_vector(state, plan, copy) * plan.outcome_dim
    coeffs = coefficient_table(vec, d)
    sizes = np.zeros(coeffs.shape, dtype=int)
    for ax in range(plan.n_tot):
        shape = [1] * plan.n_tot
        shape[ax] = d
        sizes = sizes + (np.arange(d) > 0).astype(int).reshape(shape)
    mask = (sizes >= 1) & (sizes <= cap)
    return np.where(mask, coeffs, 0.0).ravel()


def copywise_advantage(ensemble: StateEnsemble, plan: MeasurementPlan,
                       per_copy_degree: int, k: int, mode: str = "auto",
                       rng: np.random.Generator | None = None,
                       samples: int = 4000,
                       budget: int = INDEX_BUDGET) -> AdvantageReport:
    """Squared copy-wise degree-(D, k) advantage, plus the Hoelder upper bound.

    The bound sums, over support sizes t <= k, the per-copy moments
    E|<D_rho^{<=D}, D_rho'^{<=D}> - 1|^t combined by Hoelder's inequality
    (absolute values keep odd powers valid); it is stored in
    ``extra["holder_bound"]``.
    """
    indices = list(enumerate_indices(plan, per_copy_degree * k,
                                     per_copy_cap=per_copy_degree, copy_cap=k,
                                     budget=budget))
    report = _collect_report(ensemble, plan, indices, mode, rng, samples,
                             degree=(per_copy_degree, k))

    # Hoelder bound from per-copy inner-product moments.
    moments = _pair_moment_tables(ensemble, plan, per_copy_degree, k, rng, samples)
    bound = 0.0
    copies = range(plan.copies)
    uniform = all(plan.measurements[i] is plan.measurements[0] for i in copies)
    for t in range(1, k + 1):
        if uniform:
            bound += math.comb(plan.copies, t) * moments[0][t]
        else:
            for combo in itertools.combinations(copies, t):
                term = 1.0
                for i in combo:
                    term *= moments[i][t] ** (1.0 / t)
                bound += term
    report.extra["holder_bound"] = float(bound)
    return report


def _pair_moment_tables(ensemble, plan, cap, k, rng, samples):
    """Per-copy tables of E|<D^{<=cap}, D'^{<=cap}> - 1|^t for t = 1..k."""
    out = {}
    copies = range(plan.copies)
    uniform = all(plan.measurements[i] is plan.measurements[0] for i in copies)
    targets = [0] if uniform else list(copies)
    for i in targets:
        if ensemble.support is not None:
            vecs = [_single_copy_masked_coeffs(st, plan, i, cap)
                    for _, st in ensemble.support]
            weights = np.array([w for w, _ in ensemble.support])
            gram = np.real(np.stack(vecs) @ np.stack(vecs).conj().T)
            table = {t: float(weights @ (np.abs(gram) ** t) @ weights)
                     for t in range(1, k + 1)}
        else:
            if rng is None:
                raise ValueError("Hoelder moments need an rng for sampling ensembles")
            pairs = max(200, samples // 4)
            vals = np.empty(pairs)
            for p in range(pairs):
                a = _single_copy_masked_coeffs(ensemble.sample(rng), plan, i, cap)
                b = _single_copy_masked_coeffs(ensemble.sample(rng), plan, i, cap)
                vals[p] = np.real(a @ b.conj())
            table = {t: float(np.mean(np.abs(vals) ** t)) for t in range(1, k + 1)}
        out[i] = table
    if uniform:
        for i in copies:
            out[i] = out[0]
    return out


def copy_moment_statistic(ensemble: StateEnsemble, plan: MeasurementPlan,
                          k: int, mode: str = "auto",
                          rng: np.random.Generator | None = None,
                          samples: int = 4000,
                          per_copy_degree: int | None = None,
                          signed: bool = True) -> float:
    """E_{rho,rho'} (<D_rho, D_rho'> - 1)^k for the plan's first-copy measurement.

    ``per_copy_degree`` truncates each single-copy ratio before the inner
    product (None keeps the full ratio).  ``signed=False`` uses |.|^k.
    """
    cap = plan.n_tot if per_copy_degree is None else per_copy_degree
    if mode == "auto":
        mode = "support" if ensemble.support is not None else "mc"
    if mode == "support":
        vecs = [_single_copy_masked_coeffs(st, plan, 0, cap) for _, st in ensemble.support]
        weights = np.array([w for w, _ in ensemble.support])
        gram = np.real(np.stack(vecs) @ np.stack(vecs).conj().T)
        powed = gram ** k if signed else np.abs(gram) ** k
        return float(weights @ powed @ weights)
    if rng is None:
        raise ValueError("sampling mode needs an rng")
    vals = np.empty(samples)
    for p in range(samples):
        a = _single_copy_masked_coeffs(ensemble.sample(rng), plan, 0, cap)
        b = _single_copy_masked_coeffs(ensemble.sample(rng), plan, 0, cap)
        vals[p] = np.real(a @ b.conj())
    powed = vals ** k if signed else np.abs(vals) ** k
    return float(np.mean(powed))


# ---------------------------------------------------------------------------
# Adaptive learning trees


@dataclass
class DecisionTree:
    """Uniform-depth decision tree; children are indexed by the outcome label."""

    measurement: CopyMeasurement
    children: tuple["DecisionTree", ...] | None = None

    def depth(self) -> int:
        return 1 if self.children is None else 1 + self.children[0].depth()


def uniform_tree(measurement: CopyMeasurement, depth: int, outcome_dim: int) -> DecisionTree:
    """Degenerate tree: the same measurement at every node."""
    node = DecisionTree(measurement)
    for _ in range(depth - 1):
        node = DecisionTree(measurement, (node,) * outcome_dim)
    return node


@dataclass
class AdaptivePlan:
    """Round-based adaptive plan: m1 blocks of m0 copies.

    ``within-block``: blocks are independent; each block runs its decision
    tree of depth m0 (one tree per block).  ``among-block``: one tree of
    depth m1 whose nodes each measure a whole block of m0 copies
    non-adaptively; children are indexed by the block's joint outcome.
    """

    register: QuditRegister
    m1: int
    m0: int
    structure: str
    trees: list[DecisionTree]
    block_measurements: list[list[CopyMeasurement]] | None = None

    @property
    def copies(self) -> int:
        return self.m1 * self.m0

    @property
    def d(self) -> int:
        return self.register.local_dims[0]

    @property
    def n(self) -> int:
        return self.register.num_sites

    @property
    def outcome_dim(self) -> int:
        return self.register.total_dim

    def all_measurements(self) -> list[CopyMeasurement]:
        seen: list[CopyMeasurement] = []

        def walk(node: DecisionTree):
            seen.append(node.measurement)
            if node.children:
                for ch in node.children:
                    walk(ch)
        for t in self.trees:
            walk(t)
        return seen

    def block_measurements_at(self, node: DecisionTree) -> list[CopyMeasurement]:
        """PVMs for one block at an among-block node (the node's PVM, replicated)."""
        return [node.measurement] * self.m0


def _conditional_prob_vector(state, plan_reg: QuditRegister, meas: CopyMeasurement) -> np.ndarray:
    rho = as_density(state)
    rot = _expand_product(list(meas.site_unitaries)) if meas.is_product() else meas.rotation
    probs = np.real(np.einsum("ij,ji->i", rot.conj().T @ rho.matrix, rot))
    return np.clip(probs, 0.0, None)


def _tree_table(state, plan: AdaptivePlan, tree: DecisionTree, depth: int,
                truncate: int | None) -> np.ndarray:
    """Joint outcome probabilities (times dim^depth) of one tree on ``state``.

    ``truncate`` masks each conditional single-copy ratio to character degree
    <= truncate before multiplying (the product-of-truncations object).
    """
    dim = plan.outcome_dim
    d = plan.d

    def ratio_vector(meas: CopyMeasurement) -> np.ndarray:
        vec = _conditional_prob_vector(state, plan.register, meas) * dim
        if truncate is None:
            return vec
        coeffs = coefficient_table(vec, d)
        sizes = np.zeros(coeffs.shape, dtype=int)
        for ax in range(plan.n):
            shape = [1] * plan.n
            shape[ax] = d
            sizes = sizes + (np.arange(d) > 0).astype(int).reshape(shape)
        coeffs = np.where(sizes <= truncate, coeffs, 0.0)
        # inverse transform
        xi = np.exp(2j * np.pi / d)
        inv = xi ** (np.outer(np.arange(d), np.arange(d)))
        out = coeffs
        for ax in range(plan.n):
            out = np.moveaxis(np.tensordot(inv, out, axes=(1, ax)), 0, ax)
        return np.real(out.ravel())

    def walk(node: DecisionTree, level: int) -> np.ndarray:
        vec = ratio_vector(node.measurement)
        if level == depth - 1:
            return vec
        parts = [vec[s] * walk(node.children[s], level + 1) for s in range(dim)]
        return np.concatenate(parts)

    return walk(tree, 0)


def _among_block_table(state, plan: AdaptivePlan, truncate: int | None) -> np.ndarray:
    dim = plan.outcome_dim
    d = plan.d
    block_dim = dim ** plan.m0

    def block_vector(measurements: list[CopyMeasurement]) -> np.ndarray:
        out = np.array([1.0])
        for meas in measurements:
            vec = _conditional_prob_vector(state, plan.register, meas) * dim
            if truncate is not None:
                coeffs = coefficient_table(vec, d)
                sizes = np.zeros(coeffs.shape, dtype=int)
                for ax in range(plan.n):
                    shape = [1] * plan.n
                    shape[ax] = d
                    sizes = sizes + (np.arange(d) > 0).astype(int).reshape(shape)
                coeffs = np.where(sizes <= truncate, coeffs, 0.0)
                xi = np.exp(2j * np.pi / d)
                inv = xi ** (np.outer(np.arange(d), np.arange(d)))
                o = coeffs
                for ax in range(plan.n):
                    o = np.moveaxis(np.tensordot(inv, o, axes=(1, ax)), 0, ax)
                vec = np.real(o.ravel())
            out = np.kron(out, vec)
        return out

    def walk(node: DecisionTree, level: int) -> np.ndarray:
        meas_list = plan.block_measurements_at(node)
        vec = block_vector(meas_list)
        if level == plan.m1 - 1:
            return vec
        parts = [vec[s] * walk(node.children[s], level + 1) for s in range(block_dim)]
        return np.concatenate(parts)

    return walk(plan.trees[0], 0)


def adaptive_tree_advantage(ensemble: StateEnsemble, plan: AdaptivePlan,
                            per_copy_degree: int, k: int,
                            rng: np.random.Generator | None = None,
                            samples: int = 2000,
                            budget: int = 2 ** 20) -> AdvantageReport:
    """Exact copy-wise (block-wise) degree-(D, k) advantage of an adaptive plan.

    Computed by full leaf enumeration.  ``extra`` carries both the projection
    of the exact likelihood ratio ("projected", the reported total) and the
    product-of-truncated-conditionals variant ("truncated_product"), plus the
    round-based closed-form bound with its exact factorial constants.
    """
    dim = plan.outcome_dim
    total_space = dim ** plan.copies
    if total_space > budget:
        raise ResourceLimitError("adaptive history space exceeds cap")
    if ensemble.support is None:
        raise ValueError("adaptive advantage needs a finite-support ensemble")

    def mean_table(truncate: int | None) -> np.ndarray:
        acc = np.zeros(total_space)
        for w, st in ensemble.support:
            if plan.structure == "within-block":
                tabs = [_tree_table(st, plan, tree, plan.m0, truncate)
                        for tree in plan.trees]
                full = np.array([1.0])
                for tb in tabs:
                    full = np.kron(full, tb)
            elif plan.structure == "among-block":
                full = _among_block_table(st, plan, truncate)
            else:
                raise ValueError(f"unknown structure {plan.structure!r}")
            acc += w * full
        return acc

    d = plan.d
    n = plan.n

    def masked_mass(table: np.ndarray) -> float:
        coeffs = coefficient_table(table, d)
        mass = np.abs(coeffs) ** 2
        if plan.structure == "within-block":
            groups = [list(range(i * n, (i + 1) * n)) for i in range(plan.copies)]
            cap = per_copy_degree
        else:
            per_block = plan.m0 * n
            groups = [list(range(b * per_block, (b + 1) * per_block))
                      for b in range(plan.m1)]
            cap = per_copy_degree
        total_axes = plan.copies * n
        size_vecs = []
        for grp in groups:
            sizes = np.zeros(mass.shape, dtype=np.int8)
            for ax in grp:
                shape = [1] * total_axes
                shape[ax] = d
                sizes = sizes + (np.arange(d) > 0).astype(np.int8).reshape(shape)
            size_vecs.append(sizes)
        valid = np.ones(mass.shape, dtype=bool)
        touched = np.zeros(mass.shape, dtype=np.int8)
        for sizes in size_vecs:
            valid &= sizes <= cap
            touched = touched + (sizes > 0).astype(np.int8)
        mask = valid & (touched >= 1) & (touched <= k)
        return float(np.sum(mass[mask]))

    projected = masked_mass(mean_table(None))
    truncated = masked_mass(mean_table(per_copy_degree))

    # Round-based closed-form bound with exact factorial constants.
    meas_list = plan.all_measurements()
    uniq = []
    for mcand in meas_list:
        if not any(mcand is u for u in uniq):
            uniq.append(mcand)
    if plan.structure == "within-block":
        power = 2 * k * plan.m0
        m_const = 2 * math.factorial(2 * (k * plan.m0 - 1))
        eps = max(_condition_moment(ensemble, plan, meas, per_copy_degree, power)
                  for meas in uniq)
        bound = (k * 2 ** k * plan.m1 ** k * k ** 2
                 * (k * plan.m0) ** (k ** 2) * eps ** (1.0 / power) * m_const)
    else:
        power = 2 * k
        m_const = 2 * math.factorial(2 * plan.m1)
        eps = max(_condition_moment(ensemble, plan, meas, per_copy_degree, power)
                  for meas in uniq)
        m = plan.copies
        bound = (plan.m1 * k ** 2 * m ** k * m_const ** (k * plan.m1)
                 * k ** (2 * (plan.m1 - 1)) * plan.m0 ** (2 * k * (plan.m1 - 1))
                 * eps ** 0.5)

    report = AdvantageReport((per_copy_degree, k), projected, [], "exact-enumeration",
                             extra={"projected": projected,
                                    "truncated_product": truncated,
                                    "truncation_gap": truncated - projected,
                                    "paper_bound": float(bound),
                                    "bound_ok": bool(projected <= bound + 1e-9)})
    return report


def _condition_moment(ensemble, plan: AdaptivePlan, meas: CopyMeasurement,
                      cap: int, power: int) -> float:
    """E_{rho,rho'}(<D^{<=cap}, D'^{<=cap}> - 1)^{power} for one PVM (exact support)."""
    d = plan.d
    vecs = []
    weights = []
    for w, st in ensemble.support:
        vec = _conditional_prob_vector(st, plan.register, meas) * plan.outcome_dim
        coeffs = coefficient_table(vec, d)
        sizes = np.zeros(coeffs.shape, dtype=int)
        for ax in range(plan.n):
            shape = [1] * plan.n
            shape[ax] = d
            sizes = sizes + (np.arange(d) > 0).astype(int).reshape(shape)
        mask = (sizes >= 1) & (sizes <= cap)
        vecs.append(np.where(mask, coeffs, 0.0).ravel())
        weights.append(w)
    weights = np.array(weights)
    gram = np.real(np.stack(vecs) @ np.stack(vecs).conj().T)
    return float(weights @ (gram ** power) @ weights)


# ---------------------------------------------------------------------------
# k-LLR


BLOCH_GRID_26 = []
for _x in (-1, 0, 1):
    for _y in (-1, 0, 1):
        for _z in (-1, 0, 1):
            if (_x, _y, _z) != (0, 0, 0):
                _v = np.array([_x, _y, _z], dtype=float)
                BLOCH_GRID_26.append(_v / np.linalg.norm(_v))


def bloch_basis(direction: np.ndarray) -> np.ndarray:
    """Qubit basis {|u>, |-u>} for a unit Bloch vector, as unitary columns."""
    x, y, z = direction
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    up = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
    dn = np.array([-np.exp(-1j * phi) * math.sin(theta / 2), math.cos(theta / 2)])
    return np.stack([up, dn], axis=1)


def _reduced_mean_state(ensemble: StateEnsemble, copies: list[int],
                        per_copy_sites: dict[int, list[int]],
                        rng: np.random.Generator | None,
                        samples: int) -> np.ndarray:
    def reduced_for(state) -> np.ndarray:
        rho = as_density(state)
        out = np.array([[1.0 + 0j]])
        for i in copies:
            red = partial_trace(rho, per_copy_sites[i])
            out = np.kron(out, red.matrix)
        return out

    if ensemble.support is not None:
        return sum(w * reduced_for(st) for w, st in ensemble.support)
    if len(copies) == 1 and ensemble.haar_exact_order >= 1:
        dim = np.prod([ensemble.register.local_dims[r] for r in per_copy_sites[copies[0]]])
        return np.eye(int(dim)) / dim
    if rng is None:
        raise ValueError("reduced state needs an rng for sampling ensembles")
    acc = None
    for _ in range(samples):
        r = reduced_for(ensemble.sample(rng))
        acc = r if acc is None else acc + r
    return acc / samples


def _kllr_value(reduced: np.ndarray, bases: list[np.ndarray], d: int) -> float:
    rot = _expand_product(bases)
    t = len(bases)
    f = np.real(np.einsum("ij,ji->i", rot.conj().T @ reduced, rot)) * d ** t
    return float(np.mean((f - 1.0) ** 2))


def kllr(ensemble: StateEnsemble, m: int, k: int,
         rng: np.random.Generator | None = None,
         samples: int = 2000, max_subsets: int = 64,
         refine_rounds: int = 2) -> dict:
    """Max over position subsets and gridded product bases of ||E D_reduced - 1||^2.

    Grid search over 26 Bloch directions per position with coordinate
    refinement; the reported value is a lower bound witness for the true
    maximum.  Also returns the local-indistinguishability cross-check bound
    eps^2 4^k with eps the largest reduced-state trace distance seen.
    """
    d = ensemble.register.local_dims[0]
    if d != 2:
        raise ValueError("k-LLR basis grid is implemented for qubits")
    n = ensemble.register.num_sites
    all_pos = [(i, r) for i in range(m) for r in range(n)]
    subsets = []
    for size in range(1, k + 1):
        subsets.extend(itertools.combinations(all_pos, size))
    if len(subsets) > max_subsets:
        step = max(1, len(subsets) // max_subsets)
        subsets = subsets[::step][:max_subsets]

    grid_bases = [bloch_basis(v) for v in BLOCH_GRID_26]
    best = 0.0
    best_detail = None
    eps_max = 0.0
    for positions in subsets:
        copies = sorted({i for i, _ in positions})
        per_copy = {i: sorted(r for j, r in positions if j == i) for i in copies}
        reduced = _reduced_mean_state(ensemble, copies, per_copy, rng, samples)
        tdim = reduced.shape[0]
        mm = np.eye(tdim) / tdim
        eigs = np.linalg.eigvalsh(reduced - mm)
        eps_max = max(eps_max, float(0.5 * np.sum(np.abs(eigs))))
        t = len(positions)
        choice = [0] * t
        val = _kllr_value(reduced, [grid_bases[c] for c in choice], d)
        if t <= 2:
            for c_all in itertools.product(range(len(grid_bases)), repeat=t):
                v = _kllr_value(reduced, [grid_bases[c] for c in c_all], d)
                if v > val:
                    val, choice = v, list(c_all)
        else:
            # coordinate ascent over the grid, one position at a time
            for _ in range(refine_rounds):
                for slot in range(t):
                    for c in range(len(grid_bases)):
                        trial = list(choice)
                        trial[slot] = c
                        v = _kllr_value(reduced, [grid_bases[idx] for idx in trial], d)
                        if v > val:
                            val, choice = v, trial
        # local refinement around the winning directions
        dirs = [BLOCH_GRID_26[c].copy() for c in choice]
        delta = 0.25
        for _ in range(refine_rounds):
            for slot in range(t):
                base_dirs = [v.copy() for v in dirs]
                for axis in range(3):
                    for sign in (-1, 1):
                        trial = [v.copy() for v in base_dirs]
                        trial[slot] = trial[slot] + sign * delta * np.eye(3)[axis]
                        trial[slot] /= np.linalg.norm(trial[slot])
                        v = _kllr_value(reduced, [bloch_basis(u) for u in trial], d)
                        if v > val:
                            val, dirs = v, trial
            delta /= 2
        if val > best:
            best = val
            best_detail = {"positions": positions, "value": val}
    bound = eps_max ** 2 * 2 ** (2 * k)
    return {"value": best, "witness": best_detail, "indistinguishability": eps_max,
            "corollary_bound": bound, "is_lower_bound_witness": True}


# ---------------------------------------------------------------------------
# Bound audits


@dataclass
class BoundAudit:
    kind: str
    lhs: float
    rhs: float
    passed: bool
    details: dict = field(default_factory=dict)


def bound_audit(kind: str, **inst) -> BoundAudit:
    """Numerically audit one of the framework's closed-form hardness bounds.

    A failed comparison is returned, not raised; it would falsify the
    implementation (or the instance would be outside the bound's premises).
    """
    if kind == "prop-6.3":
        ensemble, plan, k = inst["ensemble"], inst["plan"], inst["k"]
        rng = inst.get("rng")
        report = degree_advantage(ensemble, plan, k, rng=rng)
        eps2 = _plan_kllr(ensemble, plan, k, rng=rng)
        mn = plan.copies * plan.n_tot
        rhs = eps2 * k * mn ** k
        return BoundAudit(kind, report.total, rhs, report.total <= rhs * (1 + 1e-9) + 1e-12,
                          {"eps2": eps2, "advantage_sq": report.total})
    if kind == "thm-6.6":
        ensemble = inst["ensemble"]
        m, n, n_prime = inst["m"], inst["n"], inst.get("n_prime", 0)
        positions = inst["positions"]
        rotations = inst.get("rotations")
        eps = inst.get("design_eps", 0.0)
        rng = inst.get("rng")
        samples = inst.get("samples", 2000)
        from .ensembles import local_indistinguishability
        lhs, stderr = local_indistinguishability(
            ensemble, m, positions, rotations=rotations, samples=samples,
            rng=rng, ancilla=n_prime)
        t = len(positions)
        rhs = m * 2 ** (t / 2) * (2.0 * 2.0 ** (t + 11 * n_prime - n) + 3 * eps) ** 0.25
        return BoundAudit(kind, lhs, rhs, lhs <= rhs + 3 * stderr,
                          {"stderr": stderr, "T_size": t})
    if kind == "thm-7.2":
        ensemble, plan = inst["ensemble"], inst["plan"]
        dcap, k = inst["per_copy_degree"], inst["k"]
        rng = inst.get("rng")
        report = copywise_advantage(ensemble, plan, dcap, k, rng=rng)
        eps = max(copy_moment_statistic(ensemble, plan, t, rng=rng,
                                        per_copy_degree=dcap, signed=False)
                  for t in range(1, k + 1))
        rhs = k * plan.copies ** k * eps
        return BoundAudit(kind, report.total, rhs,
                          report.total <= rhs * (1 + 1e-9) + 1e-12,
                          {"eps": eps, "holder_bound": report.extra["holder_bound"]})
    if kind == "cor-7.8":
        return _appendix_moment_audit(inst, within_block=True)
    if kind == "cor-7.11":
        return _appendix_moment_audit(inst, within_block=False)
    raise ValueError(f"unknown audit kind {kind!r}")


def _plan_kllr(ensemble, plan: MeasurementPlan, k: int, rng=None) -> float:
    """Max over nonempty T (|T| <= k) of ||E D_reduced - 1||^2 with the plan's bases."""
    best = 0.0
    pos = plan.positions()
    d = plan.d
    for size in range(1, k + 1):
        for combo in itertools.combinations(pos, size):
            copies = sorted({i for i, _ in combo})
            per_copy = {i: sorted(r for j, r in combo if j == i) for i in copies}
            if plan.ancilla or not plan.measurements[0].is_product():
                # reduce the rotated state instead of the bare one
                val = _rotated_plan_kllr_value(ensemble, plan, combo, rng)
            else:
                reduced = _reduced_mean_state(ensemble, copies, per_copy, rng, 2000)
                bases = []
                for i in copies:
                    us = plan.measurements[i].site_unitaries
                    bases.extend(us[r] for r in per_copy[i])
                val = _kllr_value(reduced, bases, d)
            best = max(best, val)
    return best


def _rotated_plan_kllr_value(ensemble, plan, combo, rng) -> float:
    # ||E D_red - 1||^2 = sum over nonempty sub-indices of squared coefficients
    total = 0.0
    positions = sorted(combo)
    d = plan.d
    for size in range(1, len(positions) + 1):
        for sub in itertools.combinations(positions, size):
            for exps in itertools.product(range(1, d), repeat=size):
                c = fourier_coefficient(ensemble, plan, FourierIndex(sub, exps), rng=rng)
                total += abs(c) ** 2
    return total


def _appendix_moment_audit(inst, within_block: bool) -> BoundAudit:
    """Exact-rational audit of the factorial moment constants M and M'.

    Uses the Haar single-copy moments E[(D(s))^j] = 2^{jn} j! / rising(2^n, j),
    exact by the orthogonal-overlap moment formula.
    """
    n = inst["n"]
    d = 2 ** n
    eps_design = Fraction(inst.get("design_eps", 0))
    if within_block:
        k, m0 = inst["k"], inst["m0"]
        j = 2 * (k * m0 - 1)
        # E[(D(s))^j] = 2^{jn} j! / rising(2^n, j): Beta(1, d-1) overlap moments
        lhs = Fraction(2 ** (j * n) * math.factorial(j), haar.rising_factorial(d, j))
        mid = (1 + eps_design) * Fraction(2 ** (j * n) * math.factorial(j),
                                          haar.rising_factorial(d, j))
        rhs = Fraction(2 * math.factorial(j))
        kind = "cor-7.8"
    else:
        m1 = inst["m1"]
        j = 2 * (m1 - 1)
        # E[(D(s) - 1)^{2(m1-1)}] expanded binomially over exact Haar moments
        lhs = Fraction(0)
        for i in range(j + 1):
            moment = Fraction(2 ** (i * n) * math.factorial(i),
                              haar.rising_factorial(d, i))
            lhs += (-1) ** (j - i) * math.comb(j, i) * moment
        lhs = abs(lhs)
        mid = (1 + eps_design) * Fraction(2 ** (j * n) * math.factorial(2 * m1),
                                          haar.rising_factorial(d, j))
        rhs = Fraction(2 * math.factorial(2 * m1))
        kind = "cor-7.11"
    passed = lhs <= mid <= rhs
    return BoundAudit(kind, float(lhs), float(rhs), bool(passed),
                      {"mid": float(mid), "exact_lhs": str(lhs)})
