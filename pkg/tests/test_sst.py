import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from bethe.covers import degree_m_bethe
from bethe.errors import ResourceError
from bethe.gct import random_denfg, random_snfg
from bethe.nfg import partition_function_exact
from bethe.perm import build_perm_nfg, perm_bethe_degree_m
from bethe.rng import seeded_rng
from bethe.sst import (
    fubini_study_sample,
    gamma_identity_check,
    num_types,
    pe_matrix,
    pe_value,
    phi_integral_mc,
    type_class_size,
    type_of,
    zbm_via_pe,
    zbm_via_sst_mc,
)

from conftest import two_node_graph


class TestTypes:
    def test_counts(self):
        assert num_types(2, 2) == 3
        assert type_class_size((1, 1)) == 2
        assert type_of((0, 0, 1), 2) == (2, 1)
        assert type_class_size((2, 1)) == 3

    def test_type_class_sizes_sum(self):
        d, M = 3, 4
        sizes = {}
        for seq in itertools.product(range(d), repeat=M):
            t = type_of(seq, d)
            sizes[t] = sizes.get(t, 0) + 1
        assert len(sizes) == num_types(d, M)
        for t, size in sizes.items():
            assert type_class_size(t) == size


class TestPe:
    def test_matrix_d2_m2(self):
        expected = np.array(
            [
                [1, 0, 0, 0],
                [0, 0.5, 0.5, 0],
                [0, 0.5, 0.5, 0],
                [0, 0, 0, 1],
            ]
        )
        assert np.abs(pe_matrix(2, 2) - expected).max() < 1e-15

    def test_values(self):
        assert pe_value((0, 0), (0, 0)) == 1
        assert pe_value((0, 1), (1, 0)) == Fraction(1, 2)
        assert pe_value((0, 0), (0, 1)) == 0

    @pytest.mark.parametrize("d,M", [(2, 2), (2, 3), (3, 2)])
    def test_symmetric_idempotent_doubly_stochastic(self, d, M):
        p = pe_matrix(d, M)
        assert np.abs(p - p.T).max() < 1e-14
        assert np.abs(p @ p - p).max() < 1e-13
        assert np.abs(p.sum(axis=1) - 1).max() < 1e-13

    def test_dense_cap(self):
        with pytest.raises(ResourceError):
            pe_matrix(4, 4)


class TestZbmViaPe:
    def test_m1_is_z(self):
        g = random_snfg("fig1", seed=0)
        assert zbm_via_pe(g, 1) == pytest.approx(
            partition_function_exact(g), rel=1e-12
        )

    def test_two_node_matches_cover_enumeration(self):
        g = two_node_graph([1.0, 2.0], [3.0, 1.0])
        for M in (1, 2, 3):
            est = degree_m_bethe(g, M, "exact")
            assert zbm_via_pe(g, M) == pytest.approx(est.value, rel=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("kind", ["snfg", "denfg"])
    def test_matches_cover_enumeration(self, seed, kind):
        maker = random_snfg if kind == "snfg" else random_denfg
        topology = ["tree3", "theta", "fig1", "fig5"][seed]
        g = maker(topology, seed=seed)
        est = degree_m_bethe(g, 2, "exact", exact_budget=10**4 + 2**6)
        assert zbm_via_pe(g, 2) == pytest.approx(est.value, rel=1e-10)

    def test_perm_graph_degree2(self):
        theta = seeded_rng(21, 0).uniform(size=(2, 2)) + 0.1
        g = build_perm_nfg(theta)
        value = zbm_via_pe(g, 2)
        expected = perm_bethe_degree_m(theta, 2, "lift").value
        assert value == pytest.approx(expected, rel=1e-10)

    def test_perm_graph_degree3_three_paths(self):
        # lifting enumeration, coefficient expansion, and the
        # type-aggregated network are fully independent algorithms
        theta = seeded_rng(22, 0).uniform(size=(2, 2)) + 0.1
        g = build_perm_nfg(theta)
        by_types = zbm_via_pe(g, 3)
        by_lift = perm_bethe_degree_m(theta, 3, "lift").value
        by_coeff = perm_bethe_degree_m(theta, 3, "coeff").value
        assert by_types == pytest.approx(by_lift, rel=1e-10)
        assert by_types == pytest.approx(by_coeff, rel=1e-10)


class TestFubiniStudy:
    def test_unit_norm(self):
        rng = seeded_rng(1, 0)
        for d in (1, 2, 5):
            psi = fubini_study_sample(d, rng)
            assert np.abs(np.linalg.norm(psi) - 1) < 1e-14

    def test_d1_is_phase(self):
        rng = seeded_rng(2, 0)
        psi = fubini_study_sample(1, rng)
        assert abs(abs(psi[0]) - 1) < 1e-14

    def test_marginal_moment(self):
        rng = seeded_rng(3, 0)
        w = rng.standard_normal((100000, 2, 2))
        w /= np.linalg.norm(w.reshape(-1, 4), axis=1)[:, None, None]
        psi0 = w[:, 0, 0] + 1j * w[:, 0, 1]
        mean = np.abs(psi0) ** 2
        stderr = mean.std(ddof=1) / math.sqrt(len(mean))
        assert abs(mean.mean() - 0.5) <= 3 * stderr


class TestPhiIntegral:
    CASES = [
        ((0, 0), (0, 0)),
        ((0, 1), (1, 0)),
        ((0, 1), (0, 1)),
        ((0, 0), (0, 1)),
        ((0, 0), (1, 1)),
        ((1, 1), (1, 1)),
    ]

    @pytest.mark.parametrize("u,v", CASES)
    def test_matches_pe(self, u, v):
        est = phi_integral_mc(u, v, samples=10**5, seed=11, d=2)
        target = float(pe_value(u, v))
        tol = 3 * max(est.stderr, 1e-6)
        assert abs(est.mean - target) <= tol
        assert abs(est.imag_mean) <= 3 * max(est.imag_stderr, 1e-6)

    def test_bit_reproducible(self):
        a = phi_integral_mc((0, 1), (1, 0), samples=5000, seed=9, d=2)
        b = phi_integral_mc((0, 1), (1, 0), samples=5000, seed=9, d=2)
        assert a.mean == b.mean and a.stderr == b.stderr

    def test_disjoint_seeds_agree(self):
        a = phi_integral_mc((0, 1), (1, 0), samples=4 * 10**4, seed=1, d=2)
        b = phi_integral_mc((0, 1), (1, 0), samples=4 * 10**4, seed=2, d=2)
        pooled = math.hypot(a.stderr, b.stderr)
        assert abs(a.mean - b.mean) <= 6 * pooled


class TestZbmViaSstMc:
    def test_classical_two_node(self):
        g = two_node_graph([1.0, 2.0], [3.0, 1.0])
        exact = zbm_via_pe(g, 2) ** 2
        est = zbm_via_sst_mc(g, 2, samples=2 * 10**5, seed=4)
        assert abs(est.mean - exact) <= 3 * est.stderr

    def test_m1_estimates_z(self):
        g = two_node_graph([1.0, 0.5, 2.0], [1.5, 1.0, 0.2])
        z = partition_function_exact(g)
        est = zbm_via_sst_mc(g, 1, samples=2 * 10**5, seed=5)
        assert abs(est.mean - z) <= 3 * est.stderr

    def test_double_edge_two_node(self):
        g = random_denfg("tree3", seed=6)
        # restrict to a 2-node subgraph: use the theta topology instead
        g = random_denfg("theta", seed=6)
        exact = zbm_via_pe(g, 2) ** 2
        est = zbm_via_sst_mc(g, 2, samples=2 * 10**5, seed=7)
        assert abs(est.mean - exact) <= 4 * est.stderr
        assert abs(est.imag_mean) <= 4 * max(est.imag_stderr, 1e-9)


class TestSymmetrization:
    def test_same_mean_zero_imag(self):
        est = phi_integral_mc((0, 1), (1, 0), samples=2 * 10**4, seed=31, d=2)
        sym = phi_integral_mc(
            (0, 1), (1, 0), samples=2 * 10**4, seed=31, d=2, symmetrize=True
        )
        assert abs(sym.mean - est.mean) <= 3 * (est.stderr + sym.stderr)
        assert sym.imag_mean == 0.0
        assert sym.stderr <= est.stderr * (1 + 1e-12)

    def test_whole_graph_flag(self):
        g = two_node_graph([1.0, 2.0], [3.0, 1.0])
        exact = zbm_via_pe(g, 2) ** 2
        sym = zbm_via_sst_mc(g, 2, samples=5 * 10**4, seed=32, symmetrize=True)
        assert abs(sym.mean - exact) <= 3 * sym.stderr
        assert abs(sym.imag_mean) <= 1e-12


class TestGammaIdentity:
    def test_k0_k1_exact(self):
        assert gamma_identity_check(0) <= 1e-12
        assert gamma_identity_check(1) <= 1e-12

    def test_through_k10(self):
        for k in range(11):
            assert gamma_identity_check(k) <= 1e-9

    def test_large_k(self):
        assert gamma_identity_check(30) <= 1e-9
