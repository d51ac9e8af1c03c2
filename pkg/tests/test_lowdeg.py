import itertools
import math

import numpy as np
import pytest

from qldlab import haar
from qldlab.ensembles import (
    make_haar_ensemble,
    make_mixed_ensemble,
    make_point_ensemble,
    make_stabilizer_ensemble,
)
from qldlab.lowdeg import (
    AdaptivePlan,
    CopyMeasurement,
    DecisionTree,
    FourierIndex,
    adaptive_tree_advantage,
    bound_audit,
    coefficient_table,
    comp_basis_plan,
    copy_moment_statistic,
    copywise_advantage,
    degree_advantage,
    enumerate_indices,
    fourier_coefficient,
    kllr,
    likelihood_ratio,
    likelihood_table,
    local_plan,
    rotated_plan,
    uniform_tree,
)
from qldlab.qcore import OutcomeRecord, QuditRegister, ResourceLimitError, basis_state

Q1 = QuditRegister.uniform(1, 2)
Q2 = QuditRegister.uniform(2, 2)

# Frozen calibration constant for the copy-moment bound (the source analysis
# proves existence of a constant only); value fixed once from the stabilizer
# n=1 instance.
COPY_MOMENT_CONSTANT = 2.0


def point_ens(n=1):
    reg = QuditRegister.uniform(n, 2)
    return make_point_ensemble(basis_state(reg, 0))


def test_likelihood_ratio_examples():
    plan = comp_basis_plan(Q1, 1)
    mm = make_mixed_ensemble(Q1).support[0][1]
    for s in (0, 1):
        assert likelihood_ratio(mm, plan, OutcomeRecord((s,))) == pytest.approx(1.0)
    z0 = basis_state(Q1, 0).density()
    assert likelihood_ratio(z0, plan, OutcomeRecord((0,))) == pytest.approx(2.0)
    assert likelihood_ratio(z0, plan, OutcomeRecord((1,))) == pytest.approx(0.0)


def test_likelihood_ratio_product_over_copies():
    plan2 = comp_basis_plan(Q1, 2)
    plan1 = comp_basis_plan(Q1, 1)
    z0 = basis_state(Q1, 0).density()
    for s1 in (0, 1):
        for s2 in (0, 1):
            joint = likelihood_ratio(z0, plan2, OutcomeRecord((s1, s2)))
            split = (likelihood_ratio(z0, plan1, OutcomeRecord((s1,)))
                     * likelihood_ratio(z0, plan1, OutcomeRecord((s2,))))
            assert joint == pytest.approx(split)


def test_fourier_coefficient_examples(rng):
    plan = comp_basis_plan(Q1, 1)
    idx = FourierIndex(((0, 0),), (1,))
    assert abs(fourier_coefficient(make_mixed_ensemble(Q1), plan, idx)) < 1e-14
    assert fourier_coefficient(point_ens(), plan, idx) == pytest.approx(1.0)
    assert abs(fourier_coefficient(make_haar_ensemble(Q1), plan, idx)) < 1e-14


@pytest.mark.parametrize("d,n_sites,m", [(2, 1, 2), (2, 2, 2), (2, 3, 2), (3, 2, 2)])
def test_character_orthonormality(d, n_sites, m):
    reg = QuditRegister.uniform(n_sites, d)
    plan = comp_basis_plan(reg, m)
    total_axes = m * n_sites
    xi = np.exp(2j * np.pi / d)
    digits = np.array(list(itertools.product(range(d), repeat=total_axes)))
    indices = list(enumerate_indices(plan, min(3, total_axes)))
    char_values = []
    for idx in indices:
        phases = np.zeros(len(digits))
        for (i, r), alpha in zip(idx.positions, idx.exponents):
            phases = phases + alpha * digits[:, i * n_sites + r]
        char_values.append(xi ** phases)
    mat = np.stack(char_values)
    gram = mat @ mat.conj().T / len(digits)
    assert np.max(np.abs(gram - np.eye(len(indices)))) < 1e-12


def test_coefficient_table_inverts():
    rng = np.random.default_rng(0)
    d = 3
    table = rng.standard_normal(27)
    coeffs = coefficient_table(table, d)
    xi = np.exp(2j * np.pi / d)
    inv = xi ** np.outer(np.arange(d), np.arange(d))
    out = coeffs
    for ax in range(3):
        out = np.moveaxis(np.tensordot(inv, out, axes=(1, ax)), 0, ax)
    assert np.max(np.abs(out.ravel() - table)) < 1e-12


def test_degree_advantage_examples(rng):
    plan = comp_basis_plan(Q1, 1)
    rep_null = degree_advantage(make_mixed_ensemble(Q1), plan, 1)
    assert rep_null.total < 1e-20
    rep_point = degree_advantage(point_ens(), plan, 1)
    assert rep_point.total == pytest.approx(1.0)


def instance_family():
    fam = []
    for n_sites, m in [(1, 1), (1, 2), (1, 4), (2, 1), (2, 2), (2, 4), (3, 2), (1, 8)]:
        reg = QuditRegister.uniform(n_sites, 2)
        fam.append((make_haar_ensemble(reg), reg, m))
        fam.append((make_point_ensemble(basis_state(reg, 0)), reg, m))
        if n_sites <= 2:
            fam.append((make_stabilizer_ensemble(n_sites), reg, m))
    return fam


def test_oracle_equivalence_moment_vs_enumeration(rng):
    for ens, reg, m in instance_family():
        if m * reg.num_sites > 8:
            continue
        plan = comp_basis_plan(reg, m)
        k = min(3, m * reg.num_sites)
        r_idx = degree_advantage(ens, plan, k)
        r_tab = degree_advantage(ens, plan, k, mode="enumerate")
        assert abs(r_idx.total - r_tab.total) < 1e-10
        for (ia, va), (ib, vb) in zip(r_idx.coefficients, r_tab.coefficients):
            assert ia == ib and abs(va - vb) < 1e-10


def test_oracle_equivalence_random_local_plan(rng):
    reg = Q2
    bases = [[haar.haar_unitary(2, rng) for _ in range(2)] for _ in range(2)]
    plan = local_plan(reg, 2, bases)
    for ens in (make_haar_ensemble(reg), make_stabilizer_ensemble(2)):
        a = degree_advantage(ens, plan, 2)
        b = degree_advantage(ens, plan, 2, mode="enumerate")
        assert abs(a.total - b.total) < 1e-10


def test_oracle_equivalence_entangled_plan(rng):
    reg = Q2
    rots = [haar.haar_unitary(4, rng) for _ in range(2)]
    plan = rotated_plan(reg, 2, rots)
    ens = make_stabilizer_ensemble(2)
    a = degree_advantage(ens, plan, 2)
    b = degree_advantage(ens, plan, 2, mode="enumerate")
    assert abs(a.total - b.total) < 1e-10


def test_parseval_on_tiny_instances(rng):
    for ens, reg, m in instance_family():
        if m * reg.num_sites > 6:
            continue
        plan = comp_basis_plan(reg, m)
        table = likelihood_table(ens, plan)
        coeffs = coefficient_table(table, 2)
        lhs = float(np.sum(np.abs(coeffs) ** 2))
        rhs = float(np.mean(np.asarray(table) ** 2))
        assert abs(lhs - rhs) < 1e-10


def test_monotonicity_in_k():
    ens = make_stabilizer_ensemble(2)
    plan = comp_basis_plan(Q2, 2)
    rep = degree_advantage(ens, plan, 4)
    partials = [rep.total_at(k) for k in range(1, 5)]
    for lo, hi in zip(partials, partials[1:]):
        assert hi >= lo
    for k in (1, 2, 3):
        solo = degree_advantage(ens, plan, k)
        assert abs(solo.total - rep.total_at(k)) < 1e-12


def test_index_budget_fails_closed():
    plan = comp_basis_plan(QuditRegister.uniform(4, 2), 4)
    with pytest.raises(ResourceLimitError):
        list(enumerate_indices(plan, 8, budget=100))


def test_report_json_schema_fields():
    rep = degree_advantage(point_ens(), comp_basis_plan(Q1, 1), 1)
    doc = rep.to_json_dict()
    assert set(doc) >= {"degree", "total", "coefficients", "method"}
    assert doc["coefficients"][0] == {"positions": [[0, 0]], "exponents": [1],
                                      "value_sq": 1.0}


def test_copywise_identity_at_full_degree(rng):
    ens = make_stabilizer_ensemble(1)
    plan = comp_basis_plan(Q1, 3)
    full = degree_advantage(ens, plan, 3)
    cw = copywise_advantage(ens, plan, 1, 3, rng=rng)
    assert abs(full.total - cw.total) < 1e-10


def test_copywise_vs_plain_degree_containment(rng):
    # a degree-k report equals the (k,k) copy-wise report cut at total size <= k
    ens = make_stabilizer_ensemble(2)
    plan = comp_basis_plan(Q2, 2)
    k = 2
    plain = degree_advantage(ens, plan, k)
    cw = copywise_advantage(ens, plan, k, k, rng=rng)
    cut = sum(v for idx, v in cw.coefficients if idx.size <= k)
    assert abs(plain.total - cut) < 1e-10


def test_copywise_haar_first_degree(rng):
    plan = comp_basis_plan(Q1, 2)
    rep = copywise_advantage(make_haar_ensemble(Q1), plan, 1, 1, rng=rng)
    assert rep.total < 1e-20


def test_holder_bound_dominates_on_random_instances(rng):
    count = 0
    for trial in range(20):
        n_sites = int(rng.integers(1, 3))
        m = int(rng.integers(2, 5))
        reg = QuditRegister.uniform(n_sites, 2)
        ens = make_stabilizer_ensemble(n_sites)
        bases = [[haar.haar_unitary(2, rng) for _ in range(n_sites)]] * m
        plan = local_plan(reg, m, [b for b in bases])
        dcap = int(rng.integers(1, n_sites + 1))
        k = int(rng.integers(1, m + 1))
        rep = copywise_advantage(ens, plan, dcap, k, rng=rng)
        assert rep.total <= rep.extra["holder_bound"] * (1 + 1e-9) + 1e-12
        count += 1
    assert count == 20


def test_copy_moment_examples(rng):
    plan = comp_basis_plan(Q1, 1)
    assert copy_moment_statistic(make_mixed_ensemble(Q1), plan, 2) == pytest.approx(0.0)
    stat = copy_moment_statistic(make_stabilizer_ensemble(1), plan, 2)
    assert stat == pytest.approx(1 / 9)
    # frozen-constant form of the k-design copy-moment bound at eps = 0
    k, n = 2, 1
    bound = COPY_MOMENT_CONSTANT * k ** 2 * 2 ** (k * math.log2(k)) * (0 + 2.0 ** -n)
    assert stat <= bound
    mc = copy_moment_statistic(make_haar_ensemble(Q1), plan, 1, rng=rng, samples=4000)
    assert abs(mc) < 0.05


def test_adaptive_degenerate_equals_nonadaptive(rng):
    ens = make_stabilizer_ensemble(1)
    meas = CopyMeasurement(site_unitaries=(np.eye(2, dtype=complex),))
    tree = uniform_tree(meas, 2, 2)
    plan = AdaptivePlan(Q1, m1=2, m0=2, structure="within-block", trees=[tree, tree])
    rep = adaptive_tree_advantage(ens, plan, 1, 2)
    nonadaptive = copywise_advantage(ens, comp_basis_plan(Q1, 4), 1, 2, rng=rng)
    assert abs(rep.total - nonadaptive.total) < 1e-10
    assert rep.extra["bound_ok"]
    assert abs(rep.extra["truncation_gap"]) < 1e-12


def test_adaptive_null_is_zero():
    ens = make_mixed_ensemble(Q1)
    meas = CopyMeasurement(site_unitaries=(np.eye(2, dtype=complex),))
    tree = uniform_tree(meas, 2, 2)
    plan = AdaptivePlan(Q1, m1=1, m0=2, structure="within-block", trees=[tree])
    rep = adaptive_tree_advantage(ens, plan, 1, 2)
    assert rep.total < 1e-20


def hand_tree():
    hadamard = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    comp = CopyMeasurement(site_unitaries=(np.eye(2, dtype=complex),))
    had = CopyMeasurement(site_unitaries=(hadamard,))
    return DecisionTree(comp, (DecisionTree(comp), DecisionTree(had)))


def test_adaptive_two_basis_tree_vs_direct_oracle():
    ens = make_stabilizer_ensemble(1)
    tree = hand_tree()
    plan = AdaptivePlan(Q1, m1=2, m0=2, structure="within-block", trees=[tree, tree])
    dcap, k = 1, 2
    rep = adaptive_tree_advantage(ens, plan, dcap, k)

    # independent oracle: leaf-by-leaf summation of E_rho[ratio * character]
    def block_ratio(state, s1, s2):
        rho = np.outer(state.amplitudes, state.amplitudes.conj())
        meas1 = tree.measurement.site_unitaries[0]
        p1 = np.real(meas1[:, s1].conj() @ rho @ meas1[:, s1])
        meas2 = tree.children[s1].measurement.site_unitaries[0]
        p2 = np.real(meas2[:, s2].conj() @ rho @ meas2[:, s2])
        return 4.0 * p1 * p2

    total = 0.0
    histories = list(itertools.product(range(2), repeat=4))
    for positions in itertools.chain(
            itertools.combinations(range(4), 1), itertools.combinations(range(4), 2)):
        coeff = 0.0
        for hist in histories:
            mean_ratio = sum(w * block_ratio(st, hist[0], hist[1])
                             * block_ratio(st, hist[2], hist[3])
                             for w, st in ens.support)
            chi = (-1) ** sum(hist[p] for p in positions)
            coeff += mean_ratio * chi / 16.0
        total += coeff ** 2
    assert abs(rep.total - total) < 1e-10


def test_among_block_degenerate(rng):
    ens = make_stabilizer_ensemble(1)
    meas = CopyMeasurement(site_unitaries=(np.eye(2, dtype=complex),))
    # among-block tree of depth m1 = 2, each node measuring a block of m0 = 2
    leaf = DecisionTree(meas)
    tree = DecisionTree(meas, (leaf,) * 4)
    plan = AdaptivePlan(Q1, m1=2, m0=2, structure="among-block", trees=[tree])
    rep = adaptive_tree_advantage(ens, plan, 2, 2)
    # block-wise (D=2, k=2) on a degenerate tree equals the full advantage
    full = degree_advantage(ens, comp_basis_plan(Q1, 4), 4)
    assert abs(rep.total - full.total) < 1e-10
    assert rep.extra["bound_ok"]


def test_kllr_examples(rng):
    assert kllr(make_mixed_ensemble(Q1), 2, 1)["value"] < 1e-12
    res = kllr(point_ens(), 1, 1)
    assert res["value"] == pytest.approx(1.0, abs=1e-9)
    assert res["indistinguishability"] == pytest.approx(0.5)
    assert res["value"] <= res["corollary_bound"] * (1 + 1e-9)
    res2 = kllr(make_stabilizer_ensemble(1), 2, 2, rng=rng)
    assert res2["value"] <= res2["corollary_bound"] * (1 + 1e-9) + 1e-12


def test_bound_audit_prop63(rng):
    for ens, reg, m in [(make_stabilizer_ensemble(1), Q1, 2),
                        (point_ens(), Q1, 2),
                        (make_stabilizer_ensemble(2), Q2, 1)]:
        plan = comp_basis_plan(reg, m)
        audit = bound_audit("prop-6.3", ensemble=ens, plan=plan,
                            k=min(2, m * reg.num_sites), rng=rng)
        assert audit.passed, audit


def test_bound_audit_thm66(rng):
    reg4 = QuditRegister.uniform(4, 2)
    hens = make_haar_ensemble(reg4)
    audit = bound_audit("thm-6.6", ensemble=hens, m=2, n=4, n_prime=0,
                        positions=[(0, 1)], rng=rng, samples=1500)
    assert audit.passed
    assert audit.rhs == pytest.approx(2 * 2 ** 0.5 * (2 * 2 ** -3) ** 0.25)
    rots = [haar.haar_unitary(32, rng) for _ in range(2)]
    audit2 = bound_audit("thm-6.6", ensemble=hens, m=2, n=4, n_prime=1,
                         positions=[(0, 1), (1, 4)], rotations=rots,
                         rng=rng, samples=1200)
    assert audit2.passed


def test_bound_audit_thm72(rng):
    ens = make_stabilizer_ensemble(1)
    plan = comp_basis_plan(Q1, 3)
    audit = bound_audit("thm-7.2", ensemble=ens, plan=plan,
                        per_copy_degree=1, k=2, rng=rng)
    assert audit.passed
    assert audit.lhs <= audit.details["holder_bound"] * (1 + 1e-9)


def test_bound_audit_appendix_constants():
    a78 = bound_audit("cor-7.8", n=4, k=2, m0=2)
    assert a78.passed
    a711 = bound_audit("cor-7.11", n=4, m1=3)
    assert a711.passed


def test_ancilla_plan_against_direct_computation(rng):
    # one copy, one base qubit, one ancilla, random entangled rotation
    u = haar.haar_unitary(4, rng)
    plan = rotated_plan(Q1, 1, [u], ancilla=1)
    ens = make_stabilizer_ensemble(1)
    table = likelihood_table(ens, plan)
    zero = np.zeros((2, 2))
    zero[0, 0] = 1.0
    for s in range(4):
        proj = np.outer(u[:, s], u[:, s].conj())
        direct = sum(w * 4.0 * np.real(np.trace(
            np.kron(np.outer(st.amplitudes, st.amplitudes.conj()), zero) @ proj))
            for w, st in ens.support)
        assert abs(table[s] - direct) < 1e-10
    # haar moment path agrees with the support-free contraction
    hens = make_haar_ensemble(Q1)
    t_moment = likelihood_table(hens, plan)
    direct = [4.0 * np.real(np.trace(
        np.kron(np.eye(2) / 2, zero) @ np.outer(u[:, s], u[:, s].conj())))
        for s in range(4)]
    assert np.max(np.abs(t_moment - np.array(direct))) < 1e-10


def test_ancilla_coefficients_consistent(rng):
    u = haar.haar_unitary(4, rng)
    plan = rotated_plan(Q1, 2, [u, u], ancilla=1)
    ens = make_stabilizer_ensemble(1)
    a = degree_advantage(ens, plan, 2)
    b = degree_advantage(ens, plan, 2, mode="enumerate")
    assert abs(a.total - b.total) < 1e-10


def test_degree_zero_convention(rng):
    # no nonempty index at k = 0: advantage and audit sides are exactly zero
    ens = make_stabilizer_ensemble(1)
    plan = comp_basis_plan(Q1, 2)
    rep = degree_advantage(ens, plan, 0)
    assert rep.total == 0.0 and rep.coefficients == []
    audit = bound_audit("prop-6.3", ensemble=ens, plan=plan, k=0, rng=rng)
    assert audit.lhs == 0.0 and audit.rhs == 0.0 and audit.passed


def test_fourier_coefficient_rejects_adaptive_plan():
    ens = make_stabilizer_ensemble(1)
    meas = CopyMeasurement(site_unitaries=(np.eye(2, dtype=complex),))
    plan = AdaptivePlan(Q1, m1=1, m0=2, structure="within-block",
                        trees=[uniform_tree(meas, 2, 2)])
    with pytest.raises(ValueError):
        fourier_coefficient(ens, plan, FourierIndex(((0, 0),), (1,)))


def test_haar_product_expectation_vs_dense_moment(rng):
    # permutation-sum route against literal dense moment contraction with
    # non-commuting operators (orientation sanity for the cycle traces)
    from qldlab.lowdeg import _haar_product_expectation
    from qldlab.haar import moment_operator
    d, t = 3, 3
    mats = []
    for _ in range(t):
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        mats.append(("dense", a, 1.0 + 0j))
    got = _haar_product_expectation(mats, d)
    big = np.array([[1.0 + 0j]])
    for _, m, _ in mats:
        big = np.kron(big, m)
    expect = np.trace(moment_operator(d, t).matrix @ big)
    assert abs(got - expect) < 1e-10


def test_qutrit_advantage_oracle_equivalence(rng):
    # d = 3 exercises nontrivial character exponents on both routes
    reg = QuditRegister.uniform(1, 3)
    plans = [comp_basis_plan(reg, 2),
             local_plan(reg, 2, [[haar.haar_unitary(3, rng)],
                                 [haar.haar_unitary(3, rng)]])]
    qutrit_point = make_point_ensemble(basis_state(reg, 0))
    for ens in (make_haar_ensemble(reg), qutrit_point):
        for plan in plans:
            a = degree_advantage(ens, plan, 2)
            b = degree_advantage(ens, plan, 2, mode="enumerate")
            assert abs(a.total - b.total) < 1e-10
            for (ia, va), (ib, vb) in zip(a.coefficients, b.coefficients):
                assert ia == ib and abs(va - vb) < 1e-10
