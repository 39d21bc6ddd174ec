"""Permanents of non-negative matrices and their graphical-model
approximations: exact (inclusion-exclusion), Bethe (sum-product on the
bipartite row/column graph), scaled Sinkhorn (matrix scaling), the
degree-M refinements of both, and the closed-form degree-2 ratio.

The standing assumption on every input matrix is that some permutation
hits strictly positive entries; matrices violating it are rejected.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.special import logsumexp

from . import coeffs, spa
from .errors import (
    ConvergenceError,
    NumericalError,
    ResourceError,
    ScalingFailureError,
    ValidationError,
)
from .nfg import EdgeDecl, LocalFunction, NormalFactorGraph
from .rng import seeded_rng

__all__ = [
    "PermResult",
    "check_matrix",
    "perm_exact",
    "perm_naive",
    "build_perm_nfg",
    "perm_bethe",
    "sinkhorn_scale",
    "perm_sinkhorn_scaled",
    "perm_bethe_degree_m",
    "perm_sinkhorn_degree_m",
    "perm_ratio_degree2",
    "cycle_count",
]

RYSER_CAP = 24
NAIVE_CAP = 9
LIFT_BUDGET = 10**6
SINKHORN_TOL = 1e-12
SINKHORN_MAX_ITERS = 10**5
GRAY_CUTOFF = 14  # switch to the blocked vectorized path above this size


@dataclass
class PermResult:
    value: float
    method: str
    aux: dict = field(default_factory=dict)


def check_matrix(theta) -> np.ndarray:
    """Validate a square non-negative matrix with at least one supporting
    permutation (positive diagonal after column permutation)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValidationError("matrix must be square")
    if theta.size and theta.min() < 0:
        raise ValidationError(f"negative entry {theta.min():g}")
    n = theta.shape[0]
    if n == 0:
        raise ValidationError("matrix must be non-empty")
    match = maximum_bipartite_matching(csr_matrix(theta > 0), perm_type="column")
    if (match < 0).any():
        raise ValidationError(
            "standing assumption violated: no permutation with positive weight"
        )
    return theta


def perm_exact(a, cap: int = RYSER_CAP) -> float:
    """Permanent by inclusion-exclusion over column subsets, O(2^n * n).

    Small sizes walk subsets in Gray-code order with incremental row
    sums; larger sizes evaluate subsets in vectorized blocks (same
    formula, better constant in pure Python terms).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValidationError("matrix must be square")
    if n == 0:
        return 1.0
    if n > cap:
        raise ResourceError(f"n = {n} exceeds the inclusion-exclusion cap {cap}")
    if n <= GRAY_CUTOFF:
        return _perm_ryser_gray(a)
    return _perm_ryser_blocked(a)


def _perm_ryser_gray(a: np.ndarray) -> float:
    n = a.shape[0]
    cols = [list(map(float, a[:, j])) for j in range(n)]
    row_sums = [0.0] * n
    total = 0.0
    gray = 0
    for s in range(1, 1 << n):
        j = (s & -s).bit_length() - 1
        gray ^= 1 << j
        col = cols[j]
        if gray >> j & 1:
            for i in range(n):
                row_sums[i] += col[i]
        else:
            for i in range(n):
                row_sums[i] -= col[i]
        term = 1.0
        for v in row_sums:
            term *= v
        total += term if (bin(gray).count("1") & 1) == (n & 1) else -term
    return total


def _perm_ryser_blocked(a: np.ndarray, block: int = 1 << 16) -> float:
    n = a.shape[0]
    at = a.T.copy()
    shifts = np.arange(n, dtype=np.uint64)
    total = 0.0
    for start in range(1, 1 << n, block):
        stop = min(start + block, 1 << n)
        idx = np.arange(start, stop, dtype=np.uint64)
        bits = ((idx[:, None] >> shifts) & np.uint64(1)).astype(float)
        row_sums = bits @ at  # [k, i] = sum_{j in S_k} a[i, j]
        terms = row_sums.prod(axis=1)
        parity = bits.sum(axis=1).astype(np.int64) & 1
        signs = np.where(parity == (n & 1), 1.0, -1.0)
        total += float(signs @ terms)
    return total


_PERM_CACHE: dict[int, np.ndarray] = {}


def perm_naive(a, cap: int = NAIVE_CAP) -> float:
    """Permutation-sum oracle, O(n!)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n > cap:
        raise ResourceError(f"n = {n} exceeds the naive cap {cap}")
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))))
    perms = _PERM_CACHE[n]
    return float(a[np.arange(n), perms].prod(axis=1).sum())


def build_perm_nfg(theta) -> NormalFactorGraph:
    """Bipartite graph whose partition function is perm(theta): one node
    per row and per column, a binary edge per cell, each factor supported
    on the unit indicator rows with value sqrt(theta)."""
    theta = check_matrix(theta)
    n = theta.shape[0]
    edges = [
        EdgeDecl(id=i * n + j, endpoints=(i, n + j), alphabet_size=2)
        for i in range(n)
        for j in range(n)
    ]
    factors = []
    for i in range(n):
        support = {}
        for j in range(n):
            if theta[i, j] > 0:
                cfg = tuple(1 if k == j else 0 for k in range(n))
                support[cfg] = math.sqrt(theta[i, j])
        factors.append(LocalFunction(node=i, shape=(2,) * n, sparse=support))
    for j in range(n):
        support = {}
        for i in range(n):
            if theta[i, j] > 0:
                cfg = tuple(1 if k == i else 0 for k in range(n))
                support[cfg] = math.sqrt(theta[i, j])
        factors.append(LocalFunction(node=n + j, shape=(2,) * n, sparse=support))
    return NormalFactorGraph(kind="snfg", num_nodes=2 * n, edges=edges, factors=factors)


def perm_bethe(
    theta,
    *,
    fp_tol: float = 1e-11,
    max_iters: int = 20000,
    damping: float | None = None,
    seed: int = 0,
    ds_tol: float = 1e-7,
    consistency_rel: float = 1e-7,
) -> PermResult:
    """Bethe approximation via the sum-product fixed point.

    Runs the SPA on the permanent graph, reads the doubly stochastic
    matrix off the edge beliefs, and evaluates exp(-F) with the Bethe
    free energy of that matrix. The result is cross-checked against the
    pseudo-dual value at the same fixed point. Damping defaults to zero:
    the update converges on this graph family without it.
    """
    theta = check_matrix(theta)
    n = theta.shape[0]
    g = build_perm_nfg(theta)
    mu, report = spa.spa_run(
        g, damping=damping, max_iters=max_iters, fp_tol=fp_tol, seed=seed
    )
    if not report.converged:
        raise ConvergenceError(
            f"SPA did not converge (residual {report.residual:g})",
            residual=report.residual,
        )
    b = spa.beliefs(g, mu)
    gamma = np.array(
        [[b.edge_beliefs[i * n + j][1] for j in range(n)] for i in range(n)]
    )
    # cells outside the support carry exactly zero belief at the fixed
    # point; damping leaves a vanishing residue there, which we drop
    gamma = np.where(theta > 0, np.clip(gamma, 0.0, 1.0), 0.0)
    dev = max(
        float(np.abs(gamma.sum(axis=1) - 1).max()),
        float(np.abs(gamma.sum(axis=0) - 1).max()),
    )
    if dev > ds_tol:
        raise NumericalError(f"edge-belief matrix off doubly stochastic by {dev:g}")
    value = math.exp(-coeffs.f_bethe(theta, gamma))
    dual = report.z_b_spa
    if dual is None or abs(value - dual) > consistency_rel * max(abs(value), 1e-300):
        raise NumericalError(
            f"free-energy value {value:g} disagrees with pseudo-dual {dual}"
        )
    return PermResult(
        value=value,
        method="bethe-spa",
        aux={"gamma": gamma, "spa_report": report, "pseudo_dual": dual},
    )


def sinkhorn_scale(theta, tol: float = SINKHORN_TOL, max_iters: int = SINKHORN_MAX_ITERS):
    """Alternate row/column normalization until the scaled matrix is
    doubly stochastic within `tol`. Returns (gamma, r, c, iterations)."""
    theta = check_matrix(theta)
    n = theta.shape[0]
    r = np.ones(n)
    c = np.ones(n)
    deviation = float("inf")
    for it in range(1, max_iters + 1):
        # every row/column has a positive entry, so the divisors stay positive
        r = 1.0 / (theta @ c)
        c = 1.0 / (theta.T @ r)
        scaled = r[:, None] * theta * c[None, :]
        deviation = max(
            float(np.abs(scaled.sum(axis=1) - 1).max()),
            float(np.abs(scaled.sum(axis=0) - 1).max()),
        )
        if deviation <= tol:
            return scaled, r, c, it
    raise ScalingFailureError(
        f"matrix scaling stalled after {max_iters} iterations "
        f"(deviation {deviation:g})",
        residual=deviation,
    )


def perm_sinkhorn_scaled(
    theta, tol: float = SINKHORN_TOL, max_iters: int = SINKHORN_MAX_ITERS
) -> PermResult:
    """Scaled Sinkhorn approximation: exp(-F) at the scaled matrix, where
    the entropy term is -n - sum g*log(g)."""
    theta = check_matrix(theta)
    gamma, r, c, iterations = sinkhorn_scale(theta, tol, max_iters)
    value = math.exp(-coeffs.f_scaled_sinkhorn(theta, gamma))
    return PermResult(
        value=value,
        method="scaled-sinkhorn",
        aux={"gamma": gamma, "row_scaling": r, "col_scaling": c, "iterations": iterations},
    )


# -- degree-M refinements --------------------------------------------------


def _lifted_matrix(theta, blocks, M):
    n = theta.shape[0]
    out = np.zeros((n * M, n * M))
    for i in range(n):
        for j in range(n):
            sigma = blocks[i * n + j]
            block = np.zeros((M, M))
            block[np.arange(M), sigma] = 1.0
            out[i * M : (i + 1) * M, j * M : (j + 1) * M] = theta[i, j] * block
    return out


def _coeff_sum(theta, M, coefficient):
    """Log-domain sum of theta^(M*gamma) * coefficient(gamma) over the
    scaled doubly stochastic matrices supported on theta."""
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    support = theta > 0
    log_theta = np.where(support, np.log(np.where(support, theta, 1.0)), 0.0)
    logs = []
    weights = []
    for gm in coeffs.enumerate_gamma(n, M, support=support):
        k = np.array(gm.counts, dtype=float)
        logs.append(float((k * log_theta).sum()))
        weights.append(float(coefficient(gm)))
    if not logs:
        return 0.0
    total, sign = logsumexp(logs, b=weights, return_sign=True)
    return float(sign * math.exp(total))


def perm_bethe_degree_m(
    theta,
    M: int,
    mode: str = "auto",
    *,
    seed: int = 0,
    samples: int = 2000,
    lift_budget: int = LIFT_BUDGET,
) -> PermResult:
    """Degree-M Bethe permanent: the M-th root of the average permanent
    over all block-permutation liftings.

    Modes: ``lift`` enumerates all (M!)^(n^2) liftings, ``mc`` samples
    them, ``coeff`` evaluates the equivalent coefficient expansion
    (exact, and usually far cheaper). ``auto`` = coeff.
    """
    theta = check_matrix(theta)
    n = theta.shape[0]
    if M < 1:
        raise ValueError("M must be >= 1")
    if mode == "auto":
        mode = "coeff"
    if mode == "coeff":
        power = _coeff_sum(theta, M, coeffs.coeff_bethe)
        return PermResult(
            value=power ** (1.0 / M), method="degree-m-bethe-coeff", aux={"power": power}
        )
    if mode == "lift":
        count = math.factorial(M) ** (n * n)
        if count > lift_budget:
            raise ResourceError(
                f"{count} liftings exceed the budget {lift_budget}; "
                "use coeff or mc mode"
            )
        perms = list(itertools.permutations(range(M)))
        total = 0.0
        for blocks in itertools.product(perms, repeat=n * n):
            total += perm_exact(_lifted_matrix(theta, blocks, M))
        power = total / count
        return PermResult(
            value=power ** (1.0 / M),
            method="degree-m-bethe-lift",
            aux={"power": power, "liftings": count},
        )
    if mode == "mc":
        rng = seeded_rng(seed, 0)
        values = np.empty(samples)
        for s in range(samples):
            blocks = [tuple(int(x) for x in rng.permutation(M)) for _ in range(n * n)]
            values[s] = perm_exact(_lifted_matrix(theta, blocks, M))
        power = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else None
        return PermResult(
            value=max(power, 0.0) ** (1.0 / M),
            method="degree-m-bethe-mc",
            aux={"power": power, "stderr": stderr, "samples": samples},
        )
    raise ValueError(f"unknown mode {mode!r}")


def perm_sinkhorn_degree_m(
    theta, M: int, *, crosscheck: str = "auto", crosscheck_rel: float = 1e-10
) -> PermResult:
    """Degree-M scaled Sinkhorn permanent: the M-th root of the permanent
    of theta Kronecker the MxM all-(1/M) matrix.

    When cheap, the coefficient expansion is evaluated as an independent
    cross-check of the same value.
    """
    theta = check_matrix(theta)
    n = theta.shape[0]
    if M < 1:
        raise ValueError("M must be >= 1")
    if n * M > RYSER_CAP:
        raise ResourceError(f"lifted size {n * M} exceeds the cap {RYSER_CAP}")
    u = np.full((M, M), 1.0 / M)
    lifted = np.kron(np.asarray(theta, dtype=float), u)
    power = perm_exact(lifted)
    aux = {"power": power}
    if crosscheck == "always" or (crosscheck == "auto" and n <= 3 and M <= 4):
        other = _coeff_sum(theta, M, coeffs.coeff_scaled_sinkhorn)
        aux["coeff_power"] = other
        # the inclusion-exclusion sum cancels down from terms of size
        # ~ prod(row sums), so grant an absolute floor at that scale
        floor = 1e-13 * float(np.prod(lifted.sum(axis=1))) if n * M else 0.0
        if abs(other - power) > crosscheck_rel * abs(power) + floor:
            raise NumericalError(
                f"Kronecker value {power:g} disagrees with coefficient sum {other:g}"
            )
    return PermResult(
        value=max(power, 0.0) ** (1.0 / M), method="degree-m-scaled-sinkhorn", aux=aux
    )


# -- degree-2 closed form ----------------------------------------------------


def cycle_count(sigma1, sigma2) -> int:
    """Number of cycles of length > 1 of sigma1 composed with the inverse
    of sigma2."""
    n = len(sigma1)
    inv2 = [0] * n
    for i, v in enumerate(sigma2):
        inv2[v] = i
    tau = [sigma1[inv2[i]] for i in range(n)]
    seen = [False] * n
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        length = 0
        i = start
        while not seen[i]:
            seen[i] = True
            i = tau[i]
            length += 1
        if length > 1:
            count += 1
    return count


def perm_ratio_degree2(theta, cap: int = 7) -> float:
    """perm / degree-2 Bethe permanent from the pair-of-permutations sum:
    the inverse square root of E[2^(-cycles)] under the matrix-induced
    permutation distribution."""
    theta = check_matrix(theta)
    n = theta.shape[0]
    if n > cap:
        raise ResourceError(f"n = {n} exceeds the pair-enumeration cap {cap}")
    perms = list(itertools.permutations(range(n)))
    weights = np.array([float(np.prod(theta[np.arange(n), p])) for p in perms])
    total_weight = weights.sum()
    if total_weight <= 0:
        raise ValidationError("matrix permanent is zero")
    probs = weights / total_weight
    acc = 0.0
    for i1, s1 in enumerate(perms):
        if probs[i1] == 0:
            continue
        for i2, s2 in enumerate(perms):
            if probs[i2] == 0:
                continue
            acc += probs[i1] * probs[i2] * 2.0 ** (-cycle_count(s1, s2))
    return acc ** -0.5
