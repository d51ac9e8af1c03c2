"""Exact Haar-measure moment calculus.

The uncentered moment operator of order k is the normalized projector onto
the symmetric subspace,

    E[(|psi><psi|)^{ox k}] = (1 / (d (d+1) ... (d+k-1))) sum_{pi in S_k} P_pi.

The centered operator E[(d Delta)^{ox t}] with Delta = rho - I/d expands over
the same permutation operators with coefficients gamma_f that depend only on
the number of fixed points f of each permutation.  All coefficient machinery
(beta, gamma, the series coefficients c_a(s)) is carried out in exact rational
arithmetic; floats only appear when a matrix is actually assembled.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import qcore
from .qcore import PureState, QuditRegister, permutation_cycles, permutation_operator

__all__ = [
    "MomentOperator",
    "haar_sample",
    "haar_unitary",
    "rising_factorial",
    "moment_operator",
    "moment_operator_trace_exact",
    "mixed_overlap_moment",
    "beta",
    "beta_series_coefficient",
    "gamma",
    "centered_moment_operator",
    "centered_moment_operator_beta_form",
    "gamma_bound_check",
    "derangement_overlap_bound_check",
]


@dataclass(frozen=True)
class MomentOperator:
    dimension: int
    order: int
    matrix: np.ndarray


def haar_sample(d: int, rng: np.random.Generator) -> PureState:
    """Haar-random pure state: normalized vector of i.i.d. complex Gaussians."""
    if d < 2:
        raise ValueError("d must be >= 2")
    vec = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    vec /= np.linalg.norm(vec)
    return PureState(QuditRegister((d,)), vec)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases.conj()


def rising_factorial(d: int, k: int) -> int:
    """d (d+1) ... (d+k-1), exactly; 1 for k = 0."""
    out = 1
    for j in range(k):
        out *= d + j
    return out


def moment_operator(d: int, k: int) -> MomentOperator:
    """The k-th Haar moment operator on (C^d)^{ox k}."""
    qcore._check_cap(d ** k)
    dim = d ** k
    total = np.zeros((dim, dim), dtype=complex)
    for perm in itertools.permutations(range(k)):
        total += permutation_operator(d, perm)
    total /= rising_factorial(d, k)
    return MomentOperator(d, k, total)


def moment_operator_trace_exact(d: int, k: int) -> Fraction:
    """Trace of the moment operator in exact rationals: sum_pi d^{#cycles} / rising."""
    acc = 0
    for perm in itertools.permutations(range(k)):
        acc += d ** len(permutation_cycles(perm))
    return Fraction(acc, rising_factorial(d, k))


def mixed_overlap_moment(d: int, partition: tuple[int, ...]) -> Fraction:
    """E prod_l |<psi|i_l>|^{2 lambda_l} over Haar psi, for orthogonal |i_l>.

    Valid for partitions of k <= d; the value is (prod_l lambda_l!) / rising(d,k).
    """
    k = sum(partition)
    if k > d:
        raise ValueError("partition weight exceeds dimension")
    if any(p < 1 for p in partition):
        raise ValueError("partition parts must be positive")
    num = 1
    for p in partition:
        num *= math.factorial(p)
    return Fraction(num, rising_factorial(d, k))


def beta(d: int, s: int) -> Fraction:
    """beta_{d,s} = d^s / (d (d+1) ... (d+s-1)); beta_{d,0} = 1."""
    if s < 0:
        raise ValueError("s must be >= 0")
    return Fraction(d ** s, rising_factorial(d, s))


def _power_sum(s: int, i: int) -> int:
    # sigma_i(s) = 1^{i-1} + ... + (s-1)^{i-1}
    return sum(j ** (i - 1) for j in range(1, s))


def beta_series_coefficient(s: int, a: int) -> Fraction:
    """Coefficient c_a(s) in the 1/d expansion beta_{d,s} = 1 + sum_a c_a(s) d^{-a}.

    Computed from the exponentiated Taylor expansion of log beta:

        c_a(s) = (-1)^a sum_{l=1}^{a} (1/l!)
                 sum_{i_1+...+i_l = a+l, i_j >= 2}
                 sigma_{i_1}(s) ... sigma_{i_l}(s) / ((i_1-1) ... (i_l-1)).
    """
    if a == 0:
        return Fraction(1)
    acc = Fraction(0)
    for l in range(1, a + 1):
        target = a + l
        for comp in _compositions(target, l, 2):
            term = Fraction(1, math.factorial(l))
            for i in comp:
                term *= Fraction(_power_sum(s, i), i - 1)
            acc += term
    return (-1) ** a * acc


def _compositions(total: int, parts: int, min_part: int):
    """Ordered tuples of `parts` integers >= min_part summing to `total`."""
    if parts == 1:
        if total >= min_part:
            yield (total,)
        return
    for first in range(min_part, total - min_part * (parts - 1) + 1):
        for rest in _compositions(total - first, parts - 1, min_part):
            yield (first,) + rest


def gamma(d: int, t: int, f: int) -> Fraction:
    """gamma_f = sum_{r=0..f} (-1)^r C(f,r) beta_{d, t-r}."""
    if not (0 <= f <= t):
        raise ValueError("need 0 <= f <= t")
    acc = Fraction(0)
    for r in range(f + 1):
        acc += (-1) ** r * math.comb(f, r) * beta(d, t - r)
    return acc


def centered_moment_operator(d: int, t: int) -> MomentOperator:
    """E[(d Delta)^{ox t}] assembled as sum_pi gamma_{|fix(pi)|} P_pi."""
    if t > 6:
        raise ValueError("t capped at 6")
    qcore._check_cap(d ** t)
    dim = d ** t
    gammas = [float(gamma(d, t, f)) for f in range(t + 1)]
    total = np.zeros((dim, dim), dtype=complex)
    for perm in itertools.permutations(range(t)):
        fixed = sum(1 for l in range(t) if perm[l] == l)
        total += gammas[fixed] * permutation_operator(d, perm)
    return MomentOperator(d, t, total)


def centered_moment_operator_beta_form(d: int, t: int) -> MomentOperator:
    """Inclusion-exclusion assembly sum_{U subset [t]} (-1)^{t-|U|} beta_{d,|U|} sum_{pi in S_U} P_pi.

    S_U embeds permutations of U into S_t fixing the complement.  Independent
    of :func:`centered_moment_operator`; the two must agree entrywise.
    """
    qcore._check_cap(d ** t)
    dim = d ** t
    total = np.zeros((dim, dim), dtype=complex)
    for size in range(t + 1):
        coeff = float((-1) ** (t - size) * beta(d, size))
        for subset in itertools.combinations(range(t), size):
            for sub_perm in itertools.permutations(subset):
                full = list(range(t))
                for slot, img in zip(subset, sub_perm):
                    full[slot] = img
                total += coeff * permutation_operator(d, full)
    return MomentOperator(d, t, total)


def gamma_bound_check(d: int, t: int, c: float = 4.0) -> list[tuple[int, Fraction, Fraction, bool]]:
    """Check |gamma_f| <= (c t / sqrt(d))^f in exact rationals (squared form).

    Returns (f, |gamma_f|, bound as (c t)^f / d^{f/2} squared-compared, pass)
    rows for f = 1..t, plus the exact |gamma_0| equality is asserted here.
    The constant c is a calibration parameter; the source analysis only
    guarantees existence of some constant.
    """
    rows = []
    g0 = gamma(d, t, 0)
    expected = Fraction(d ** t, rising_factorial(d, t))
    if abs(g0) != expected:
        raise AssertionError("|gamma_0| equality failed")
    c_frac = Fraction(c).limit_denominator(10 ** 6)
    for f in range(1, t + 1):
        gf = abs(gamma(d, t, f))
        # compare gf^2 * d^f <= (c t)^{2f} exactly
        lhs = gf * gf * d ** f
        rhs = (c_frac * t) ** (2 * f)
        rows.append((f, gf, rhs, lhs <= rhs))
    return rows


def derangement_overlap_bound_check(bases: list[np.ndarray], perm: tuple[int, ...]
                                    ) -> tuple[float, float, bool]:
    """Exact enumeration check of the fixed-point-free overlap bound.

    ``bases`` holds one d x d unitary per position of W (columns are the
    measurement vectors).  For a permutation with no fixed points,

        E_x |<psi_x| P_pi |psi_x>|^2 <= d^{-|W|/2}.

    Returns (lhs, rhs, pass).
    """
    w = len(perm)
    if any(perm[l] == l for l in range(w)):
        raise ValueError("permutation has a fixed point")
    d = bases[0].shape[0]
    if any(b.shape != (d, d) for b in bases):
        raise ValueError("all bases must share one local dimension")
    inv = [0] * w
    for l, p in enumerate(perm):
        inv[p] = l
    # Gram tensors G[l][x, y] = <psi^l_x | psi^{inv(l)}_y>
    grams = [bases[l].conj().T @ bases[inv[l]] for l in range(w)]
    acc = 0.0
    for x in itertools.product(range(d), repeat=w):
        val = 1.0 + 0j
        for l in range(w):
            val *= grams[l][x[l], x[inv[l]]]
        acc += abs(val) ** 2
    lhs = acc / d ** w
    rhs = d ** (-w / 2)
    return lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-15
