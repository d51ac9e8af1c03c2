"""Acceptance criteria for the package, one test per criterion.

Every test prints a single pass/fail line (run with ``pytest -s`` to see them
inline).  All tolerances are pinned here; nothing is deferred to later
calibration.  Run order follows the criteria numbering.
"""

import itertools
import math
import subprocess
import sys
from fractions import Fraction

import numpy as np

from qldlab import biclique, ensembles, haar, lowdeg, mitigation
from qldlab.qcore import QuditRegister, basis_state

CHECKMARK = {True: "PASS", False: "FAIL"}


def _report(criterion: str, passed: bool, detail: str):
    print(f"[criterion {criterion}] {CHECKMARK[passed]}: {detail}")
    assert passed, f"criterion {criterion}: {detail}"


def haar_batch(d, count, rng):
    vecs = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def test_criterion_1_haar_moment_engine():
    rng = np.random.default_rng(101)
    worst = 0.0
    for d in (2, 3):
        for k in (1, 2, 3):
            vecs = haar_batch(d, 100000, rng)
            big = vecs
            for _ in range(k - 1):
                big = np.einsum("si,sj->sij", big, vecs).reshape(len(vecs), -1)
            emp = (big.conj().T @ big).T / len(vecs)
            dev = float(np.max(np.abs(emp - haar.moment_operator(d, k).matrix)))
            worst = max(worst, dev)
    closed_ok = (haar.mixed_overlap_moment(2, (1, 1)) == Fraction(1, 6)
                 and haar.mixed_overlap_moment(4, (2,)) == Fraction(1, 10)
                 and haar.mixed_overlap_moment(3, (2, 1)) == Fraction(2, 60))
    mc_ok = True
    for d in (2, 3, 4):
        vecs = haar_batch(d, 100000, rng)
        for part in [(1,), (2,), (1, 1), (3,), (2, 1), (1, 1, 1)]:
            if sum(part) > d:
                continue
            vals = np.ones(len(vecs))
            for idx, lam in enumerate(part):
                vals = vals * np.abs(vecs[:, idx]) ** (2 * lam)
            se = vals.std() / math.sqrt(len(vals))
            if abs(vals.mean() - float(haar.mixed_overlap_moment(d, part))) > 3 * se:
                mc_ok = False
    _report("1", worst <= 0.02 and closed_ok and mc_ok,
            f"moment MC max-entry dev {worst:.4f} <= 0.02; "
            f"overlap closed form exact: {closed_ok}; overlap MC 3sigma: {mc_ok}")


def test_criterion_2_centered_moment_identity():
    worst = 0.0
    for d in (2, 3):
        for t in (1, 2, 3, 4):
            a = haar.centered_moment_operator(d, t).matrix
            b = haar.centered_moment_operator_beta_form(d, t).matrix
            worst = max(worst, float(np.max(np.abs(a - b))))
    closed = 0.0
    for d in (2, 3):
        swap = np.eye(d * d)[[i * d + j for j in range(d) for i in range(d)]]
        oracle = d * (np.eye(d * d) + swap.T) / (d + 1) - np.eye(d * d)
        got = haar.centered_moment_operator(d, 2).matrix
        closed = max(closed, float(np.max(np.abs(got - oracle))))
    _report("2", worst <= 1e-12 and closed <= 1e-12,
            f"gamma vs beta assembly dev {worst:.2e} <= 1e-12; "
            f"t=2 closed form dev {closed:.2e}")


def test_criterion_3_appendix_series_and_derangements():
    coeff_ok = all(abs(haar.beta_series_coefficient(s, a)) <= (1 + s) ** (2 * a)
                   for s in range(7) for a in range(5))
    series_ok = True
    for d in (16, 32, 64):
        for s in range(2, 7):
            for order in range(2, 6):
                partial = 1 + sum(haar.beta_series_coefficient(s, a)
                                  * Fraction(1, d ** a) for a in range(1, order + 1))
                nxt = abs(haar.beta_series_coefficient(s, order + 1)) \
                    * Fraction(1, d ** (order + 1))
                if abs(haar.beta(d, s) - partial) >= 2 * nxt:
                    series_ok = False
    rng = np.random.default_rng(33)
    derange_ok = True
    for d in (2, 3):
        for w in (2, 3, 4):
            perms = [p for p in itertools.permutations(range(w))
                     if all(p[i] != i for i in range(w))]
            for perm in perms:
                for bases in ([np.eye(d, dtype=complex)] * w,
                              [haar.haar_unitary(d, rng) for _ in range(w)]):
                    _, _, ok = haar.derangement_overlap_bound_check(bases, perm)
                    derange_ok = derange_ok and ok
    _report("3", coeff_ok and series_ok and derange_ok,
            f"|c_a(s)| bound: {coeff_ok}; series convergence: {series_ok}; "
            f"derangement bound |W|<=4, d in (2,3): {derange_ok}")


def test_criterion_4_design_facts():
    ok = True
    detail = []
    for n in (1, 2):
        ens = ensembles.make_stabilizer_ensemble(n)
        e3 = ensembles.design_certify(ens, 3, mode="exact").epsilon
        e4 = ensembles.design_certify(ens, 4, mode="exact").epsilon
        detail.append(f"stab n={n}: eps3={e3:.2e}, eps4={e4:.3f}")
        ok = ok and e3 <= 1e-12 and e4 > 1e-3
    for d, k in [(2, 1), (2, 2), (2, 3), (2, 4), (4, 2), (4, 3)]:
        ens = ensembles.make_haar_ensemble(QuditRegister((d,)))
        eps = ensembles.design_certify(ens, k, mode="exact").epsilon
        ok = ok and eps <= 1e-12
    _report("4", ok, "; ".join(detail) + "; haar exact eps ~ 0 at all tested k")


def test_criterion_5_advantage_oracle_equivalence():
    rng = np.random.default_rng(55)
    worst_pair = 0.0
    worst_parseval = 0.0
    monotone_ok = True
    instances = 0
    for n_sites, m in [(1, 1), (1, 2), (1, 4), (1, 8), (2, 1), (2, 2),
                       (2, 4), (3, 2), (4, 2), (2, 3)]:
        if m * n_sites > 8:
            continue
        reg = QuditRegister.uniform(n_sites, 2)
        pool = [ensembles.make_haar_ensemble(reg),
                ensembles.make_point_ensemble(basis_state(reg, 0))]
        if n_sites <= 2:
            pool.append(ensembles.make_stabilizer_ensemble(n_sites))
        plans = [lowdeg.comp_basis_plan(reg, m)]
        plans.append(lowdeg.local_plan(
            reg, m, [[haar.haar_unitary(2, rng) for _ in range(n_sites)]
                     for _ in range(m)]))
        for ens in pool:
            for plan in plans:
                k = min(3, m * n_sites)
                a = lowdeg.degree_advantage(ens, plan, k, rng=rng)
                b = lowdeg.degree_advantage(ens, plan, k, mode="enumerate", rng=rng)
                worst_pair = max(worst_pair, abs(a.total - b.total))
                table = lowdeg.likelihood_table(ens, plan, rng=rng)
                coeffs = lowdeg.coefficient_table(table, 2)
                pars = abs(float(np.sum(np.abs(coeffs) ** 2))
                           - float(np.mean(np.asarray(table) ** 2)))
                worst_parseval = max(worst_parseval, pars)
                partials = [a.total_at(j) for j in range(1, k + 1)]
                monotone_ok = monotone_ok and all(
                    hi >= lo for lo, hi in zip(partials, partials[1:]))
                instances += 1
    _report("5", worst_pair <= 1e-10 and worst_parseval <= 1e-10 and monotone_ok,
            f"{instances} instances: max moment-vs-enumeration dev "
            f"{worst_pair:.2e}; max Parseval dev {worst_parseval:.2e}; "
            f"monotone in k: {monotone_ok}")


def test_criterion_6_copywise_and_adaptive_bounds():
    rng = np.random.default_rng(66)
    holder_ok = True
    tested = 0
    for _ in range(20):
        n_sites = int(rng.integers(1, 3))
        m = int(rng.integers(2, 5))
        reg = QuditRegister.uniform(n_sites, 2)
        ens = ensembles.make_stabilizer_ensemble(n_sites)
        plan = lowdeg.local_plan(
            reg, m, [[haar.haar_unitary(2, rng) for _ in range(n_sites)]
                     for _ in range(m)])
        dcap = int(rng.integers(1, n_sites + 1))
        k = int(rng.integers(1, m + 1))
        rep = lowdeg.copywise_advantage(ens, plan, dcap, k, rng=rng)
        holder_ok = holder_ok and rep.total <= rep.extra["holder_bound"] * (1 + 1e-9) + 1e-12
        tested += 1

    reg1 = QuditRegister.uniform(1, 2)
    stab = ensembles.make_stabilizer_ensemble(1)
    meas = lowdeg.CopyMeasurement(site_unitaries=(np.eye(2, dtype=complex),))
    tree = lowdeg.uniform_tree(meas, 2, 2)
    plan_ad = lowdeg.AdaptivePlan(reg1, m1=2, m0=2, structure="within-block",
                                  trees=[tree, tree])
    rep_ad = lowdeg.adaptive_tree_advantage(stab, plan_ad, 1, 2)
    rep_non = lowdeg.copywise_advantage(stab, lowdeg.comp_basis_plan(reg1, 4),
                                        1, 2, rng=rng)
    degenerate_dev = abs(rep_ad.total - rep_non.total)

    audits = []
    audits.append(lowdeg.bound_audit(
        "prop-6.3", ensemble=stab, plan=lowdeg.comp_basis_plan(reg1, 2), k=2, rng=rng))
    audits.append(lowdeg.bound_audit(
        "prop-6.3", ensemble=ensembles.make_stabilizer_ensemble(2),
        plan=lowdeg.comp_basis_plan(QuditRegister.uniform(2, 2), 1), k=2, rng=rng))
    hens = ensembles.make_haar_ensemble(QuditRegister.uniform(4, 2))
    audits.append(lowdeg.bound_audit(
        "thm-6.6", ensemble=hens, m=2, n=4, n_prime=0, positions=[(0, 1)],
        rng=rng, samples=1500))
    rots = [haar.haar_unitary(32, rng) for _ in range(2)]
    audits.append(lowdeg.bound_audit(
        "thm-6.6", ensemble=hens, m=2, n=4, n_prime=1,
        positions=[(0, 1), (1, 4)], rotations=rots, rng=rng, samples=1200))
    audits.append(lowdeg.bound_audit(
        "thm-7.2", ensemble=stab, plan=lowdeg.comp_basis_plan(reg1, 3),
        per_copy_degree=1, k=2, rng=rng))
    audits_ok = all(a.passed for a in audits)
    ok = holder_ok and degenerate_dev <= 1e-10 and audits_ok
    _report("6", ok,
            f"Hoelder dominates on {tested} instances: {holder_ok}; degenerate "
            f"adaptive dev {degenerate_dev:.2e} <= 1e-10; audits "
            f"{[a.kind for a in audits]} all pass: {audits_ok}")


def test_criterion_7_biclique_statistics():
    rng = np.random.default_rng(77)
    swap_ok = True
    detail = []
    for d in (2, 3):
        inst = biclique.BicliqueInstance(8, d, 4.0, m=8)
        stats = np.array([biclique.swap_protocol(inst, None, rng).statistic
                          for _ in range(10000)])
        mean = biclique.swap_null_mean(d)
        se = stats.std() / math.sqrt(len(stats))
        mean_ok = abs(stats.mean() - mean) < 3 * se
        var = biclique.swap_null_variance(d, 8, 8)
        var_ok = abs(stats.var() - var) < 0.1 * var
        alt = np.array([
            biclique.swap_protocol(inst, biclique.sample_secret(inst, rng), rng).statistic
            for _ in range(10000)])
        se_a = alt.std() / math.sqrt(len(alt))
        alpha_ok = abs(alt.mean() - biclique.swap_alpha_bar(inst)) < 3 * se_a
        swap_ok = swap_ok and mean_ok and var_ok and alpha_ok
        detail.append(f"d={d}: mean/var/alpha {mean_ok}/{var_ok}/{alpha_ok}")

    mass_ok = True
    sets = [([(0, 0), (0, 1)], 2), ([(0, 0), (1, 0)], 2), ([(0, 0), (0, 1), (1, 1)], 3)]
    for positions, d in sets:
        inst = biclique.BicliqueInstance(3, d, 1.5, m=2)
        grid = biclique.LocalPlanGrid.random(2, 3, d, rng)
        exact = biclique.fourier_mass(inst, grid, positions)
        est, se = biclique.fourier_mass_mc_oracle(inst, grid, positions, 100000, rng)
        mass_ok = mass_ok and abs(exact - est) <= 3 * se + 1e-12
    zero_ok = all(
        biclique.fourier_mass(biclique.BicliqueInstance(3, 2, 1.0),
                              biclique.LocalPlanGrid.computational(3, 3, 2),
                              [pos]) == 0.0
        for pos in [(0, 0), (1, 1), (2, 2)])
    _report("7", swap_ok and mass_ok and zero_ok,
            "; ".join(detail) + f"; mu_W MC 3sigma on 3 sets: {mass_ok}; "
            f"mu_W(|W|=1) = 0 exactly: {zero_ok}")


def test_criterion_8_biclique_phase_diagram():
    lams = (4.0, 8.0, 12.0, 16.0, 24.0, 32.0)
    cells = [biclique.BicliqueInstance(64, 2, lam, m=64) for lam in lams]
    rows = biclique.phase_diagram(cells, "edge-count", 200, seed=42, z=1.3)
    by_lam = {r["lambda"]: r for r in rows}
    low, high = by_lam[4.0], by_lam[32.0]
    low_ok = low["power"] < 0.6 and low["ci_high"] < 0.9
    high_ok = high["power"] > 0.9 and high["ci_low"] > 0.6
    # 50%-power crossover by linear interpolation on the grid
    crossover = None
    powers = [by_lam[l]["power"] for l in lams]
    for (l0, p0), (l1, p1) in zip(zip(lams, powers), zip(lams[1:], powers[1:])):
        if p0 < 0.5 <= p1:
            crossover = l0 + (l1 - l0) * (0.5 - p0) / (p1 - p0)
            break
    target = math.sqrt(64) * 2 ** 0.25
    cross_ok = crossover is not None and target / 2 <= crossover <= 2 * target
    _report("8", low_ok and high_ok and cross_ok,
            f"power(4)={low['power']:.3f} (CI hi {low['ci_high']:.3f}); "
            f"power(32)={high['power']:.3f} (CI lo {high['ci_low']:.3f}); "
            f"crossover {crossover:.1f} vs n^(1/2)d^(1/4) = {target:.1f}")


def test_criterion_9_mitigation():
    rng = np.random.default_rng(99)
    p1 = mitigation.purity_decay_check(4, 3, 0.2, 500, rng)
    p2 = mitigation.purity_decay_check(6, 2, 0.3, 500, rng)
    audit = mitigation.reduced_state_audit(4, 2, 0.3, [0], 300, rng)
    reg = QuditRegister.uniform(3, 2)
    plan = lowdeg.comp_basis_plan(reg, 2)
    clean = mitigation.hypothesis_test_sim(
        mitigation.NoisyCircuitSpec(3, 2, 0.0), plan, 1, 100, rng)
    hot = mitigation.hypothesis_test_sim(
        mitigation.NoisyCircuitSpec(3, 2, 1.0), plan, 1, 100, rng)
    extremes_ok = (abs(clean.extra["normalized"] - 1.0) < 1e-12
                   and hot.extra["normalized"] < 1e-10)
    ok = p1["passed"] and p2["passed"] and audit["passed"] and extremes_ok
    _report("9", ok,
            f"purity(4,3,0.2) {p1['mean_purity']:.5f} <= {p1['bound']:.5f}; "
            f"purity(6,2,0.3) {p2['mean_purity']:.5f} <= {p2['bound']:.5f}; "
            f"exceedance {audit['exceed_freq']:.4f} <= {audit['tail_bound']:.4f}"
            f" + 3se; extremes (1, 0): {extremes_ok}")


def test_criterion_10_cli_determinism(tmp_path):
    configs = [
        ["design-check", "--ensemble", "stabilizer:n=2", "--k", "3", "--mode", "exact"],
        ["biclique-power", "--n", "16", "--lambdas", "4,8,12", "--trials", "60"],
        ["advantage", "--ensemble", "stabilizer:n=1", "--plan",
         "local-haar,m=2", "--k", "2", "--format", "json"],
    ]
    ok = True
    for idx, args in enumerate(configs):
        outputs = []
        for threads in ("1", "4"):
            out = tmp_path / f"c{idx}-t{threads}.out"
            proc = subprocess.run(
                [sys.executable, "-m", "qldlab.cli", *args, "--seed", "123",
                 "--out", str(out), "--threads", threads],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outputs.append(out.read_bytes())
        ok = ok and outputs[0] == outputs[1]
    _report("10", ok, "3 spot configs byte-identical across thread counts")
