"""Noisy-circuit hypothesis testing and purity-decay audits.

The noisy channel alternates blocks of global 2-design unitaries (exact Haar
at desk scale) with layers of per-site depolarizing noise.  Expected purity
contracts per qubit-layer by c = (1 + 3(1-kappa)^2)/4, which drives the
reduced-state tail bound R(a); both are checked empirically here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lowdeg
from .ensembles import StateEnsemble
from .haar import haar_unitary
from .qcore import (
    DensityOperator,
    PureState,
    QuditRegister,
    basis_state,
    depolarize,
    maximally_mixed,
    partial_trace,
    trace_distance,
)

__all__ = [
    "NoisyCircuitSpec",
    "purity_constant",
    "purity_bound",
    "r_bound",
    "apply_noisy_circuit",
    "purity_decay_check",
    "reduced_state_audit",
    "marginal_recursion_exact",
    "make_noisy_circuit_ensemble",
    "hypothesis_test_sim",
]


@dataclass(frozen=True)
class NoisyCircuitSpec:
    """l blocks of n-qubit 2-design unitaries with per-site depolarizing noise.

    ``noise_after`` lists the (0-based) block indices followed by a noise
    layer; None places noise after every block.  ``input_state`` selects the
    hypothesis-test input: "null" is I/2^n (= C^dag applied to it), and
    "alternative" is C^dag |0..0>.
    """

    n: int
    blocks: int
    kappa: float
    noise_after: tuple[int, ...] | None = None
    input_state: str = "alternative"

    def __post_init__(self):
        if not (0.0 <= self.kappa <= 1.0):
            raise ValueError("kappa must lie in [0, 1]")
        if self.n > 10:
            raise ValueError("noisy-circuit simulation capped at 10 qubits")

    @property
    def register(self) -> QuditRegister:
        return QuditRegister.uniform(self.n, 2)

    def noise_layers(self) -> set[int]:
        if self.noise_after is None:
            return set(range(self.blocks))
        return set(self.noise_after)


def purity_constant(kappa: float) -> float:
    """Per-qubit-layer purity contraction c = (1 + 3(1-kappa)^2)/4."""
    return (1.0 + 3.0 * (1.0 - kappa) ** 2) / 4.0


def purity_bound(n: int, blocks: int, kappa: float) -> float:
    c = purity_constant(kappa)
    return c ** (n * blocks) * (1.0 - 2.0 ** -n) + 2.0 ** -n


def r_bound(a: int, n: int, blocks: int, kappa: float,
            eps: float = 0.0, eps_star: float = 0.0) -> float:
    """R(a) = 2^{a-n} [c^{nl} (1 - 2^{-n}) + l eps] + eps*."""
    c = purity_constant(kappa)
    return 2.0 ** (a - n) * (c ** (n * blocks) * (1 - 2.0 ** -n)
                             + blocks * eps) + eps_star


def sample_block_unitaries(spec: NoisyCircuitSpec,
                           rng: np.random.Generator) -> list[np.ndarray]:
    return [haar_unitary(2 ** spec.n, rng) for _ in range(spec.blocks)]


def apply_noisy_circuit(spec: NoisyCircuitSpec, state: DensityOperator,
                        unitaries: list[np.ndarray],
                        purities: list[float] | None = None) -> DensityOperator:
    """Alternate unitary conjugation and per-site depolarizing per placement."""
    out = state
    noisy = spec.noise_layers()
    for idx, u in enumerate(unitaries):
        mat = u @ out.matrix @ u.conj().T
        out = DensityOperator(spec.register, (mat + mat.conj().T) / 2)
        if purities is not None:
            purities.append(out.purity())
        if idx in noisy:
            out = depolarize(out, spec.kappa, sites=range(spec.n))
            if purities is not None:
                purities.append(out.purity())
    return out


def circuit_input(spec: NoisyCircuitSpec, unitaries: list[np.ndarray]) -> DensityOperator:
    if spec.input_state == "null":
        return maximally_mixed(spec.register)
    if spec.input_state == "alternative":
        vec = basis_state(spec.register, 0).amplitudes
        for u in reversed(unitaries):
            vec = u.conj().T @ vec
        vec = vec / np.linalg.norm(vec)
        return PureState(spec.register, vec).density()
    raise ValueError(f"unknown input selector {spec.input_state!r}")


def purity_decay_check(n: int, blocks: int, kappa: float, trials: int,
                       rng: np.random.Generator) -> dict:
    """Monte Carlo E tr(rho^2) of the noisy circuit on |0..0> vs the closed bound.

    Blocks are exact Haar unitaries, so the 2-design premise holds with
    eps = 0; pass iff the empirical mean sits below bound + 3 stderr.
    """
    spec = NoisyCircuitSpec(n, blocks, kappa, input_state="alternative")
    start = basis_state(spec.register, 0).density()
    vals = np.empty(trials)
    monotone = True
    for tr in range(trials):
        unitaries = sample_block_unitaries(spec, rng)
        purities: list[float] = [1.0]
        out = apply_noisy_circuit(spec, start, unitaries, purities=purities)
        vals[tr] = out.purity()
        diffs = np.diff(purities)
        if np.any(diffs > 1e-12):
            monotone = False
    mean = float(np.mean(vals))
    stderr = float(np.std(vals) / math.sqrt(trials))
    bound = purity_bound(n, blocks, kappa)
    return {"mean_purity": mean, "stderr": stderr, "bound": bound,
            "passed": mean <= bound + 3 * stderr, "monotone": monotone}


def marginal_recursion_exact(a: int, n: int, prev_purity: float) -> float:
    """Exact Haar value of E ||tr_{-A}(U rho U^dag) - I/2^a||_2^2.

    Derived by the order-2 twirl: with A of size a, d = 2^n, t = tr(rho^2),

        (4^a - 1)(t d - 1) / (2^a (d^2 - 1)),

    which the coarser 2^{a-n} (t - 2^{-n}) expression upper bounds.
    """
    d = 2 ** n
    aa = 2 ** a
    return (aa * aa - 1) * (prev_purity * d - 1) / (aa * (d * d - 1))


def reduced_state_audit(n: int, blocks: int, kappa: float, subset: list[int],
                        trials: int, rng: np.random.Generator,
                        eps: float = 0.0, eps_star: float = 0.0) -> dict:
    """Tail audit of Pr[ ||tr_{-A} rho - mm||_1 >= 2^{|A|/2} R^{1/4} ] <= R^{1/2}.

    The bound's premise requires the input to be independent of the sampled
    blocks, so the audit drives the circuit from the fixed all-zeros input.
    """
    spec = NoisyCircuitSpec(n, blocks, kappa)
    a = len(subset)
    r = r_bound(a, n, blocks, kappa, eps, eps_star)
    threshold = 2.0 ** (a / 2) * r ** 0.25
    start = basis_state(spec.register, 0).density()
    sub_reg = QuditRegister.uniform(a, 2)
    mm = maximally_mixed(sub_reg)
    exceed = np.empty(trials)
    dists = np.empty(trials)
    for t in range(trials):
        unitaries = sample_block_unitaries(spec, rng)
        out = apply_noisy_circuit(spec, start, unitaries)
        marg = partial_trace(out, subset)
        one_norm = 2.0 * trace_distance(marg, mm)
        dists[t] = one_norm
        exceed[t] = 1.0 if one_norm >= threshold else 0.0
    freq = float(np.mean(exceed))
    stderr = float(np.std(exceed) / math.sqrt(trials))
    return {"exceed_freq": freq, "stderr": stderr, "tail_bound": math.sqrt(r),
            "threshold": threshold, "r": r, "mean_one_norm": float(np.mean(dists)),
            "passed": freq <= math.sqrt(r) + 3 * stderr}


def make_noisy_circuit_ensemble(spec: NoisyCircuitSpec) -> StateEnsemble:
    """Ensemble of noisy-circuit outputs; the circuit is resampled per draw."""

    def sampler(rng):
        unitaries = sample_block_unitaries(spec, rng)
        return apply_noisy_circuit(spec, circuit_input(spec, unitaries), unitaries)

    return StateEnsemble(f"noisy-circuit-{spec.input_state}", spec.register, sampler,
                         params={"n": spec.n, "l": spec.blocks, "kappa": spec.kappa})


def hypothesis_test_sim(spec: NoisyCircuitSpec, plan: lowdeg.MeasurementPlan,
                        k: int, trials: int,
                        rng: np.random.Generator) -> lowdeg.AdvantageReport:
    """Monte Carlo degree-k advantage of the noisy-circuit test vs the mixed null.

    ``extra['normalized']`` rescales the size-1 mass by its point-mass maximum
    (copies * sites), so a perfectly inverted noiseless run scores 1 and the
    fully depolarized run scores 0.  ``extra['predicted_budget']`` chains the
    R-based marginal bound through the local-measurement advantage bound.
    """
    ens = make_noisy_circuit_ensemble(spec)
    report = lowdeg.degree_advantage(ens, plan, k, mode="mc", rng=rng, samples=trials)
    m = plan.copies
    mn = m * plan.n_tot
    size_one = report.total_at(1)
    report.extra["normalized"] = size_one / mn
    r = r_bound(k, spec.n, spec.blocks, spec.kappa)
    eps_tr = m * 2.0 ** (k / 2) * r ** 0.25 / 2.0
    report.extra["predicted_budget"] = eps_tr ** 2 * 2.0 ** (2 * k) * k * mn ** k
    report.extra["within_budget"] = bool(report.total <= report.extra["predicted_budget"])
    return report
