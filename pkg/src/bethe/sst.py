"""Symmetric-subspace route to the degree-M cover average.

The average over all M-covers factorizes edge-by-edge through the
permutation-average operator P_e, which is block-constant on type
classes: P_e(u, v) = 1/|class| when u and v share a symbol composition,
else 0. Contracting the type-aggregated network gives the M-th power of
the degree-M Bethe partition function exactly; replacing P_e by its
integral representation over uniformly random complex unit vectors
gives an unbiased Monte Carlo estimator of the same quantity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .contraction import contract_network
from .errors import NumericalError, ResourceError
from .nfg import NormalFactorGraph
from .rng import seeded_rng

__all__ = [
    "type_of",
    "type_class_size",
    "num_types",
    "pe_value",
    "pe_matrix",
    "zbm_via_pe",
    "fubini_study_sample",
    "phi_integral_mc",
    "zbm_via_sst_mc",
    "gamma_identity_check",
    "McEstimate",
]

PE_DENSE_CAP = 64  # largest d^M for which P_e may be materialized densely
MC_CHUNK = 1 << 14


@dataclass
class McEstimate:
    mean: float
    stderr: float
    samples: int
    imag_mean: float = 0.0
    imag_stderr: float = 0.0


# -- types ------------------------------------------------------------------


def type_of(seq, d: int) -> tuple[int, ...]:
    """Symbol counts of a sequence over alphabet range(d)."""
    counts = [0] * d
    for s in seq:
        if not 0 <= s < d:
            raise ValueError(f"symbol {s} outside range({d})")
        counts[s] += 1
    return tuple(counts)


def type_class_size(counts) -> int:
    """Number of sequences with the given symbol counts: the multinomial."""
    M = sum(counts)
    size = math.factorial(M)
    for c in counts:
        size //= math.factorial(c)
    return size


def num_types(d: int, M: int) -> int:
    """Number of compositions of M into d labelled non-negative parts."""
    return math.comb(d + M - 1, M)


def pe_value(u, v) -> Fraction:
    """Permutation-average operator entry for two length-M sequences."""
    if len(u) != len(v):
        raise ValueError("sequences must have equal length")
    d = max(itertools.chain(u, v), default=0) + 1
    tu = type_of(u, d)
    if tu != type_of(v, d):
        return Fraction(0)
    return Fraction(1, type_class_size(tu))


def _type_index(d, M):
    """All types of length-M sequences over range(d), lexicographic, with
    their index; plus the per-sequence aggregation matrix Q (d^M rows,
    one column per type) and the class sizes."""
    types: list[tuple[int, ...]] = []

    def rec(prefix, left, slots):
        if slots == 1:
            types.append(tuple(prefix) + (left,))
            return
        for v in range(left + 1):
            rec(prefix + [v], left - v, slots - 1)

    rec([], M, d)
    types.sort()
    index = {t: k for k, t in enumerate(types)}
    q = np.zeros((d**M, len(types)))
    for flat, seq in enumerate(itertools.product(range(d), repeat=M)):
        q[flat, index[type_of(seq, d)]] = 1.0
    sizes = np.array([type_class_size(t) for t in types], dtype=float)
    return types, q, sizes


def pe_matrix(d: int, M: int) -> np.ndarray:
    """Dense d^M x d^M matrix of the permutation-average operator."""
    if d**M > PE_DENSE_CAP:
        raise ResourceError(
            f"d^M = {d ** M} exceeds the dense materialization cap {PE_DENSE_CAP}"
        )
    _, q, sizes = _type_index(d, M)
    return q @ np.diag(1.0 / sizes) @ q.T


# -- exact degree-M value via the type aggregation ---------------------------


def _lifted_node_tensor(table, M):
    """M-fold product table: axes grouped per edge, each of size card^M."""
    k = table.ndim
    if k == 0:
        return table ** M
    args = []
    for m in range(M):
        args.append(table)
        args.append(list(range(m * k, (m + 1) * k)))
    args.append(list(range(M * k)))
    big = np.einsum(*args, optimize=True)
    # order axes edge-major: (edge 0 copies, edge 1 copies, ...)
    perm = [m * k + a for a in range(k) for m in range(M)]
    big = big.transpose(perm)
    return big.reshape([table.shape[a] ** M for a in range(k)])


def zbm_via_pe(
    g: NormalFactorGraph,
    M: int,
    *,
    max_table_entries: int = 2**24,
    imag_tol: float = 1e-9,
) -> float:
    """Degree-M Bethe partition function from the type-aggregated
    average-cover network (exact; no cover enumeration).

    Each node's M-fold product table is contracted per edge against the
    type-membership aggregation, each edge contributes an inverse class
    size, and the resulting network (same topology as `g`, one type
    variable per edge) is eliminated exactly.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    dtype = float if g.is_classical else complex
    cards = {}
    aggregators = {}
    weights = {}
    for pos in range(g.num_edges):
        card = g.var_card(pos)
        if card**M > PE_DENSE_CAP * PE_DENSE_CAP:
            raise ResourceError(
                f"edge {g.edges[pos].id}: {card ** M} lifted symbols exceed "
                "the budget; use Monte Carlo"
            )
        types, q, sizes = _type_index(card, M)
        cards[pos] = len(types)
        aggregators[pos] = q
        weights[pos] = 1.0 / sizes
    scopes = []
    tensors = []
    for node in range(g.num_nodes):
        inc = g.incident(node)
        lifted_size = math.prod(g.var_card(p) ** M for p in inc)
        if lifted_size > max_table_entries:
            raise ResourceError(
                f"node {node}: lifted table with {lifted_size} entries "
                f"exceeds the budget {max_table_entries}"
            )
        lifted = _lifted_node_tensor(g.factors[node].as_dense(dtype), M)
        for axis, pos in enumerate(inc):
            lifted = np.moveaxis(
                np.tensordot(lifted, aggregators[pos], axes=([axis], [0])), -1, axis
            )
        scopes.append(inc)
        tensors.append(lifted)
    # attach each edge's inverse class sizes at its lower endpoint
    for pos, e in enumerate(g.edges):
        node = e.endpoints[0]
        axis = g.incident(node).index(pos)
        shape = [1] * tensors[node].ndim
        shape[axis] = cards[pos]
        tensors[node] = tensors[node] * weights[pos].reshape(shape)
    power = contract_network(scopes, tensors, cards, max_table_entries=max_table_entries)
    if not g.is_classical:
        power = complex(power)
        if abs(power.imag) > imag_tol * (1.0 + abs(power)):
            raise NumericalError(
                f"degree-M average has imaginary part {power.imag:g}"
            )
        power = power.real
    return max(float(power), 0.0) ** (1.0 / M)


# -- Fubini-Study sampling and the Monte Carlo estimators --------------------


def fubini_study_sample(d: int, rng) -> np.ndarray:
    """One uniformly random complex unit vector of dimension d, built by
    normalizing 2d independent standard normals and pairing them into
    real/imaginary parts."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    w = rng.standard_normal((d, 2))
    w /= np.linalg.norm(w)
    return w[:, 0] + 1j * w[:, 1]


def _fs_batch(d, count, rng):
    w = rng.standard_normal((count, d, 2))
    w /= np.linalg.norm(w.reshape(count, -1), axis=1)[:, None, None]
    return w[..., 0] + 1j * w[..., 1]


def phi_integral_mc(
    u,
    v,
    samples: int,
    seed: int,
    *,
    d: int | None = None,
    symmetrize: bool = False,
) -> McEstimate:
    """Monte Carlo estimate of the unit-vector integral representation of
    the permutation-average entry at (u, v).

    The integrand is |types| * prod psi(u_m) * prod conj(psi(v_m)) under
    the uniform unit-sphere measure; its mean equals `pe_value(u, v)`.
    Sampling is chunked with one generator stream per chunk, so results
    are reproducible independently of chunk scheduling.

    `symmetrize` averages each draw with its complex conjugate — an exact
    symmetry of the measure — which zeroes the imaginary part pointwise
    and removes the antisymmetric variance component. (Averaging over
    reorderings of the copies would change nothing: the copy products are
    permutation-invariant as written.)
    """
    if len(u) != len(v):
        raise ValueError("sequences must have equal length")
    if samples < 1000:
        raise ValueError("need at least 1000 samples for a usable error bar")
    M = len(u)
    if d is None:
        d = max(itertools.chain(u, v), default=0) + 1
    b = num_types(d, M)
    u = np.asarray(u)
    v = np.asarray(v)
    acc = _StreamingMoments()
    for chunk_idx, start in enumerate(range(0, samples, MC_CHUNK)):
        count = min(MC_CHUNK, samples - start)
        psi = _fs_batch(d, count, seeded_rng(seed, chunk_idx))
        vals = b * psi[:, u].prod(axis=1) * psi[:, v].conj().prod(axis=1)
        if symmetrize:
            flipped = b * psi[:, u].conj().prod(axis=1) * psi[:, v].prod(axis=1)
            vals = (vals + flipped) / 2.0
        acc.add(vals)
    return acc.estimate()


class _StreamingMoments:
    """Accumulate mean and standard error of complex samples chunk by
    chunk (sums reduced in chunk order)."""

    def __init__(self):
        self.n = 0
        self.s_re = 0.0
        self.s2_re = 0.0
        self.s_im = 0.0
        self.s2_im = 0.0

    def add(self, values):
        re = values.real
        im = values.imag
        self.n += len(values)
        self.s_re += float(re.sum())
        self.s2_re += float((re * re).sum())
        self.s_im += float(im.sum())
        self.s2_im += float((im * im).sum())

    def estimate(self) -> McEstimate:
        n = self.n
        mean_re = self.s_re / n
        mean_im = self.s_im / n
        if n > 1:
            var_re = max(self.s2_re - n * mean_re**2, 0.0) / (n - 1)
            var_im = max(self.s2_im - n * mean_im**2, 0.0) / (n - 1)
        else:
            var_re = var_im = 0.0
        return McEstimate(
            mean=mean_re,
            stderr=math.sqrt(var_re / n),
            samples=n,
            imag_mean=mean_im,
            imag_stderr=math.sqrt(var_im / n),
        )


def zbm_via_sst_mc(
    g: NormalFactorGraph, M: int, samples: int, seed: int, *, symmetrize: bool = False
) -> McEstimate:
    """Monte Carlo estimate of the M-th power of the degree-M Bethe
    partition function via the unit-vector integral. The returned mean
    estimates zbm_via_pe(g, M) ** M; the imaginary residue of the raw
    average is reported as a sanity statistic. `symmetrize` averages each
    draw with its conjugate (see phi_integral_mc)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if samples < 1:
        raise ValueError("need at least one sample")
    prefactor = 1.0
    for pos in range(g.num_edges):
        prefactor *= num_types(g.var_card(pos), M)

    def integrand(psi):
        prod = np.ones(len(next(iter(psi.values()))), dtype=complex)
        for node in range(g.num_nodes):
            inc = g.incident(node)
            table = g.factors[node].as_dense(complex)
            k = len(inc)
            args = [table, list(range(1, k + 1))]
            for axis, pos in enumerate(inc):
                i, _ = g.edges[pos].endpoints
                vecs = psi[pos] if node == i else psi[pos].conj()
                args.extend([vecs, [0, axis + 1]])
            args.append([0])
            z_node = np.einsum(*args, optimize=True)
            prod = prod * z_node**M
        return prod

    acc = _StreamingMoments()
    for chunk_idx, start in enumerate(range(0, samples, MC_CHUNK)):
        count = min(MC_CHUNK, samples - start)
        rng = seeded_rng(seed, chunk_idx)
        psi = {
            pos: _fs_batch(g.var_card(pos), count, rng)
            for pos in range(g.num_edges)
        }
        vals = integrand(psi)
        if symmetrize:
            conj_psi = {pos: arr.conj() for pos, arr in psi.items()}
            vals = (vals + integrand(conj_psi)) / 2.0
        acc.add(prefactor * vals)
    return acc.estimate()


def gamma_identity_check(k: int) -> float:
    """Relative residual of the half-integer Gamma convolution
    sum_l C(k,l) Gamma(l+1/2) Gamma(k-l+1/2) = pi * k!, evaluated in
    log space."""
    if not 0 <= k <= 30:
        raise ValueError("k must lie in [0, 30]")
    terms = [
        math.lgamma(k + 1)
        - math.lgamma(ell + 1)
        - math.lgamma(k - ell + 1)
        + math.lgamma(ell + 0.5)
        + math.lgamma(k - ell + 0.5)
        for ell in range(k + 1)
    ]
    peak = max(terms)
    lhs_log = peak + math.log(sum(math.exp(t - peak) for t in terms))
    rhs_log = math.log(math.pi) + math.lgamma(k + 1)
    return abs(math.expm1(lhs_log - rhs_log))
