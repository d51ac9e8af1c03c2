"""Batch experiment runner.

Every run takes an explicit ``--seed`` (results never depend on the clock),
merges ``--config`` JSON with inline flag overrides, writes its artifact
atomically, and prints a one-line summary with the headline number.  Exit
codes: 1 config error, 2 resource-cap violation, 3 failed invariant audit.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import biclique, ensembles, haar, lowdeg, mitigation, reporting
from .qcore import QuditRegister, ResourceLimitError


class ConfigError(Exception):
    pass


PLAN_SCHEMAS = {
    "comp-basis": "m=<copies>[,ancilla=<sites>]",
    "local-haar": "m=<copies>[,ancilla=<sites>] (random product bases)",
    "haar-rot": "m=<copies>[,ancilla=<sites>] (random full rotations)",
}

DETECTORS = ("edge-count", "swap", "subgraph-scan")


def resolve_plan(descriptor: str, register: QuditRegister,
                 rng: np.random.Generator) -> lowdeg.MeasurementPlan:
    name, params = ensembles.parse_descriptor(descriptor)
    if "m" not in params:
        raise ConfigError(f"plan {descriptor!r}: missing field m")
    m = int(params["m"])
    ancilla = int(params.get("ancilla", 0))
    n_tot = register.num_sites + ancilla
    d = register.local_dims[0]
    if name == "comp-basis":
        return lowdeg.comp_basis_plan(register, m, ancilla=ancilla)
    if name == "local-haar":
        per_copy = [[haar.haar_unitary(d, rng) for _ in range(n_tot)] for _ in range(m)]
        return lowdeg.local_plan(register, m, per_copy, ancilla=ancilla)
    if name == "haar-rot":
        dim = d ** n_tot
        rots = [haar.haar_unitary(dim, rng) for _ in range(m)]
        return lowdeg.rotated_plan(register, m, rots, ancilla=ancilla)
    raise ConfigError(f"plan {descriptor!r}: unknown family {name!r}")


def _merged(args: argparse.Namespace, required: list[str]) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse failure at line {exc.lineno}: {exc.msg}")
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a JSON object")
    for key, val in vars(args).items():
        if key in ("config", "command") or val is None:
            continue
        cfg[key.replace("_", "-")] = val
    for field in required:
        if cfg.get(field) is None:
            raise ConfigError(f"missing required field {field!r}")
    return cfg


def _finish(cfg: dict, header: list[str], rows: list[list],
            json_obj, summary: str, fig=None) -> int:
    out = cfg.get("out")
    if out:
        if cfg.get("format", "csv") == "json":
            reporting.write_json(out, json_obj)
        else:
            reporting.write_csv(out, header, rows)
    fig_path = cfg.get("fig")
    if fig_path and fig is not None:
        reporting.save_figure(fig, fig_path)
    print(summary)
    return 0


def cmd_advantage(args) -> int:
    cfg = _merged(args, ["seed", "ensemble", "plan", "k"])
    rng = np.random.default_rng(int(cfg["seed"]))
    ens = ensembles.resolve_ensemble(cfg["ensemble"])
    plan = resolve_plan(cfg["plan"], ens.register, rng)
    mode = cfg.get("mode", "auto")
    if mode == "exact":
        if ens.support is None and ens.haar_exact_order < plan.copies:
            raise ConfigError(
                f"ensemble {cfg['ensemble']!r} has no exact route at m={plan.copies}; "
                "use --mode mc or enumerate")
        mode = "auto"
    report = lowdeg.degree_advantage(ens, plan, int(cfg["k"]), mode=mode, rng=rng,
                                     samples=int(cfg.get("samples", 4000)))
    doc = report.to_json_dict()
    header = ["size", "positions", "exponents", "value_sq"]
    rows = [[idx.size,
             ";".join(f"{i}:{r}" for i, r in idx.positions),
             ";".join(str(e) for e in idx.exponents), val]
            for idx, val in report.coefficients]
    fig = reporting.coefficient_figure(doc) if cfg.get("fig") else None
    return _finish(cfg, header, rows, doc,
                   f"advantage k={cfg['k']} total={report.total:.6g} method={report.method}",
                   fig)


def cmd_design_check(args) -> int:
    cfg = _merged(args, ["seed", "ensemble", "k"])
    rng = np.random.default_rng(int(cfg["seed"]))
    ens = ensembles.resolve_ensemble(cfg["ensemble"])
    mode = cfg.get("mode", "exact")
    report = ensembles.design_certify(ens, int(cfg["k"]), mode=mode,
                                      samples=int(cfg.get("samples", 10000)), rng=rng)
    doc = {"ensemble": report.ensemble, "order": report.order,
           "epsilon": report.epsilon, "mode": report.mode,
           "samples": report.samples, "eig_ratio_min": report.eig_ratio_min,
           "eig_ratio_max": report.eig_ratio_max,
           "sample_stderr": report.sample_stderr, "non_psd": report.non_psd}
    header = list(doc)
    rows = [[doc[k] for k in header]]
    fig = reporting.design_figure(report) if cfg.get("fig") else None
    return _finish(cfg, header, rows, doc,
                   f"design-check {report.ensemble} k={report.order} eps={report.epsilon:.6g}",
                   fig)


def cmd_biclique_power(args) -> int:
    cfg = _merged(args, ["seed", "n", "lambdas", "trials"])
    lams = cfg["lambdas"]
    if isinstance(lams, str):
        lams = [float(tok) for tok in lams.split(",") if tok]
    n = int(cfg["n"])
    d = int(cfg.get("d", 2))
    m = int(cfg.get("m", n))
    detector = cfg.get("detector", "edge-count")
    if detector not in DETECTORS:
        raise ConfigError(f"unknown detector {detector!r}")
    cells = [biclique.BicliqueInstance(n, d, float(lam), m=m) for lam in lams]
    rows_d = biclique.phase_diagram(cells, detector, int(cfg["trials"]),
                                    int(cfg["seed"]), z=float(cfg.get("z", 2.0)))
    header = ["n", "d", "lambda", "m", "detector", "trials", "power",
              "ci_low", "ci_high", "seed"]
    rows = [[r[k] for k in header] for r in rows_d]
    fig = reporting.power_curve_figure(rows_d) if cfg.get("fig") else None
    top = max(rows_d, key=lambda r: r["power"])
    return _finish(cfg, header, rows, rows_d,
                   f"biclique-power {detector}: max power {top['power']:.6g} "
                   f"at lambda={top['lambda']}", fig)


def cmd_biclique_mass(args) -> int:
    cfg = _merged(args, ["seed", "n", "lam"])
    rng = np.random.default_rng(int(cfg["seed"]))
    n = int(cfg["n"])
    d = int(cfg.get("d", 2))
    m = int(cfg.get("m", n))
    inst = biclique.BicliqueInstance(n, d, float(cfg["lam"]), m=m)
    if cfg.get("bases", "comp") == "random":
        grid = biclique.LocalPlanGrid.random(m, n, d, rng)
    else:
        grid = biclique.LocalPlanGrid.computational(m, n, d)
    sets = cfg.get("sets")
    if sets is None:
        wmax = int(cfg.get("wmax", 2))
        all_pos = [(i, j) for i in range(m) for j in range(n)]
        if len(all_pos) > 12:
            raise ConfigError("default W enumeration needs m*n <= 12; pass sets=[...]")
        import itertools as _it
        sets = [list(map(list, combo)) for size in range(1, wmax + 1)
                for combo in _it.combinations(all_pos, size)]
    rows_d = []
    for positions in sets:
        pos = [tuple(p) for p in positions]
        mu = biclique.fourier_mass(inst, grid, pos)
        rows_d.append({"positions": ";".join(f"{i}:{j}" for i, j in pos),
                       "size": len(pos), "mu": mu})
    budget = biclique.low_degree_mass_budget(inst, int(cfg.get("k", 2)),
                                             constant=float(cfg.get("constant", 1.0)))
    header = ["positions", "size", "mu"]
    rows = [[r[k] for k in header] for r in rows_d]
    doc = {"instance": {"n": n, "d": d, "lambda": inst.lam, "m": m},
           "masses": rows_d, "budget": budget}
    fig = reporting.mass_figure(rows_d) if cfg.get("fig") else None
    total = sum(r["mu"] for r in rows_d)
    return _finish(cfg, header, rows, doc,
                   f"biclique-mass: sum mu = {total:.6g}, budget = {budget:.6g}", fig)


def cmd_mitigation(args) -> int:
    cfg = _merged(args, ["seed", "n", "l", "kappa"])
    rng = np.random.default_rng(int(cfg["seed"]))
    n, blocks, kappa = int(cfg["n"]), int(cfg["l"]), float(cfg["kappa"])
    trials = int(cfg.get("trials", 200))
    purity = mitigation.purity_decay_check(n, blocks, kappa, trials, rng)
    subset = list(range(int(cfg.get("a", 1))))
    audit = mitigation.reduced_state_audit(n, blocks, kappa, subset,
                                           trials, rng)
    spec = mitigation.NoisyCircuitSpec(n, blocks, kappa)
    plan = resolve_plan(cfg.get("plan", f"comp-basis,m={int(cfg.get('m', 2))}"),
                        spec.register, rng)
    adv = mitigation.hypothesis_test_sim(spec, plan, int(cfg.get("k", 1)),
                                         int(cfg.get("adv-trials", 200)), rng)
    rows_d = [
        {"quantity": "mean_purity", "value": purity["mean_purity"],
         "bound": purity["bound"], "passed": purity["passed"]},
        {"quantity": "exceed_freq", "value": audit["exceed_freq"],
         "bound": audit["tail_bound"], "passed": audit["passed"]},
        {"quantity": "advantage_sq", "value": adv.total,
         "bound": adv.extra["predicted_budget"], "passed": adv.extra["within_budget"]},
        {"quantity": "advantage_normalized", "value": adv.extra["normalized"],
         "bound": 1.0, "passed": adv.extra["normalized"] <= 1.0 + 1e-9},
    ]
    failed = [r for r in rows_d if not r["passed"]]
    header = ["quantity", "value", "bound", "passed"]
    rows = [[r[k] for k in header] for r in rows_d]
    fig = None
    if cfg.get("fig"):
        # one sample trajectory: purity after every stage vs the per-block bound
        unitaries = mitigation.sample_block_unitaries(spec, rng)
        start = mitigation.circuit_input(spec, unitaries)
        purities = [start.purity()]
        mitigation.apply_noisy_circuit(spec, start, unitaries, purities=purities)
        bound_curve = [mitigation.purity_bound(n, (s + 1) // 2, kappa)
                       for s in range(len(purities))]
        fig = reporting.purity_figure(purities, bound_curve)
    status = _finish(cfg, header, rows, rows_d,
                     f"mitigation n={n} l={blocks} kappa={kappa}: purity "
                     f"{purity['mean_purity']:.6g} <= {purity['bound']:.6g}, "
                     f"exceed {audit['exceed_freq']:.6g} <= {audit['tail_bound']:.6g}",
                     fig)
    if failed:
        for r in failed:
            print(f"AUDIT FAILED: {r['quantity']} = {reporting.fmt6(r['value'])} "
                  f"> bound {reporting.fmt6(r['bound'])}", file=sys.stderr)
        return 3
    return status


def cmd_haar_verify(args) -> int:
    cfg = _merged(args, ["seed"])
    rng = np.random.default_rng(int(cfg["seed"]))
    samples = int(cfg.get("samples", 20000))
    rows_d = []

    def check(name, value, bound, ok):
        rows_d.append({"check": name, "value": float(value), "bound": float(bound),
                       "passed": bool(ok)})

    mom = haar.moment_operator(2, 2).matrix
    vecs = rng.standard_normal((samples, 2)) + 1j * rng.standard_normal((samples, 2))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    w = np.einsum("si,sj->sij", vecs, vecs).reshape(samples, 4)
    emp = (w.conj().T @ w) / samples
    dev = float(np.max(np.abs(emp.T - mom)))
    check("moment_mc_d2_k2", dev, 0.02, dev <= 0.02)

    for d in (2, 3):
        for t in range(1, 5):
            a = haar.centered_moment_operator(d, t).matrix
            b = haar.centered_moment_operator_beta_form(d, t).matrix
            dev = float(np.max(np.abs(a - b)))
            check(f"centered_identity_d{d}_t{t}", dev, 1e-12, dev <= 1e-12)

    for s in range(7):
        for a_ord in range(5):
            ca = haar.beta_series_coefficient(s, a_ord)
            ok = abs(ca) <= (1 + s) ** (2 * a_ord)
            check(f"series_coeff_s{s}_a{a_ord}", float(abs(ca)),
                  float((1 + s) ** (2 * a_ord)), ok)

    for t in range(2, 7):
        rows = haar.gamma_bound_check(64, t, c=4.0)
        ok = all(r[3] for r in rows)
        check(f"gamma_bound_t{t}", float(max(abs(r[1]) for r in rows)), 0.0, ok)

    for d in (2, 3):
        lhs, rhs, ok = haar.derangement_overlap_bound_check(
            [np.eye(d, dtype=complex)] * 2, (1, 0))
        check(f"derangement_swap_d{d}", lhs, rhs, ok)

    failed = [r for r in rows_d if not r["passed"]]
    header = ["check", "value", "bound", "passed"]
    rows = [[r[k] for k in header] for r in rows_d]
    status = _finish(cfg, header, rows, rows_d,
                     f"haar-verify: {len(rows_d) - len(failed)}/{len(rows_d)} checks passed")
    if failed:
        for r in failed:
            print(f"AUDIT FAILED: {r['check']}: {reporting.fmt6(r['value'])} "
                  f"vs bound {reporting.fmt6(r['bound'])}", file=sys.stderr)
        return 3
    return status


def cmd_list(args) -> int:
    query = args.filter or ""
    print("ensembles:")
    text = ensembles.registry_text(query)
    if text:
        print("  " + text.replace("\n", "\n  "))
    print("plans:")
    for name, schema in PLAN_SCHEMAS.items():
        if not query or query in name:
            print(f"  {name}: {schema}")
    print("detectors:")
    for name in DETECTORS:
        if not query or query in name:
            print(f"  {name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qldlab",
        description="Low-degree likelihood laboratory for quantum hypothesis testing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; inline flags override")
        p.add_argument("--seed", type=int, help="RNG seed (required; no clock default)")
        p.add_argument("--out", help="artifact output path")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--fig", help="render a matplotlib figure to this path")
        p.add_argument("--threads", type=int,
                       help="worker hint; affects speed only, never results")

    p = sub.add_parser("advantage", help="degree-k advantage report")
    common(p)
    p.add_argument("--ensemble")
    p.add_argument("--plan")
    p.add_argument("--k", type=int)
    p.add_argument("--mode",
                   choices=("auto", "exact", "enumerate", "mc", "support", "haar"))
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_advantage)

    p = sub.add_parser("design-check", help="approximate-design certification")
    common(p)
    p.add_argument("--ensemble")
    p.add_argument("--k", type=int)
    p.add_argument("--mode", choices=("exact", "mc"))
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_design_check)

    p = sub.add_parser("biclique-power", help="planted-biclique phase diagram")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--lambdas", help="comma-separated plant sizes")
    p.add_argument("--detector", choices=DETECTORS)
    p.add_argument("--trials", type=int)
    p.add_argument("--z", type=float)
    p.set_defaults(func=cmd_biclique_power)

    p = sub.add_parser("biclique-mass", help="exact Fourier-mass tables")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--bases", choices=("comp", "random"))
    p.add_argument("--wmax", type=int)
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_biclique_mass)

    p = sub.add_parser("mitigation", help="purity/R audits and advantage")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--a", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--plan")
    p.set_defaults(func=cmd_mitigation)

    p = sub.add_parser("haar-verify", help="moment-engine self tests")
    common(p)
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_haar_verify)

    p = sub.add_parser("list", help="show registry contents")
    p.add_argument("--filter", help="substring filter")
    p.set_defaults(func=cmd_list)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
