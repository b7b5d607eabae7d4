import math
from fractions import Fraction

import numpy as np
import pytest

from telescopic.eppf import (
    CountPrior,
    HdpParams,
    MfmParams,
    StirlingTable,
    dependence_from_teppf,
    dependence_thdp,
    dependence_ua,
    er_independent,
    er_thdp,
    er_ua,
    hdp_log_cond_eppf,
    hdp_log_eppf,
    log_rising_factorial,
    mfm_log_V,
    mfm_log_eppf,
    stirling_signless,
    tau_thdp,
    tau_ua,
    thdp_log_teppf,
    ua_log_cond_eppf,
    ua_log_teppf,
)
from telescopic.partitions import canonicalize, enumerate_partitions

from conftest import random_partition
from oracles import (
    hdp_cond_exact,
    hdp_eppf_exact,
    mfm_eppf_brute,
    shifted_poisson_pmf,
    ua_joint_brute,
)


class TestStirling:
    def test_small_values(self):
        assert stirling_signless(3, 2) == 3
        assert stirling_signless(4, 2) == 11
        for n in range(0, 10):
            assert stirling_signless(n, n) == 1
        assert stirling_signless(6, 1) == math.factorial(5)

    def test_recurrence(self):
        table = StirlingTable(12)
        for n in range(2, 13):
            for k in range(1, n + 1):
                left = table.value(n, k)
                right = table.value(n - 1, k - 1) + (n - 1) * (
                    table.value(n - 1, k) if k <= n - 1 else 0
                )
                assert left == right

    def test_log_table(self):
        table = StirlingTable(20)
        assert table.log(20, 7) == pytest.approx(math.log(table.value(20, 7)))
        assert table.log(5, 0) == -math.inf

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            stirling_signless(5, 6)
        with pytest.raises(ValueError):
            stirling_signless(-1, 0)


class TestLogRisingFactorial:
    def test_zero_exponent_exact(self):
        assert log_rising_factorial(2.7, 0) == 0.0

    def test_integer_case(self):
        assert log_rising_factorial(1.0, 3) == pytest.approx(math.log(6))

    def test_half(self):
        assert log_rising_factorial(0.5, 2) == pytest.approx(math.log(0.75))

    def test_nonpositive_raises(self):
        with pytest.raises(ValueError):
            log_rising_factorial(0.0, 2)


class TestHdpMarginal:
    def test_single_subject(self):
        assert hdp_log_eppf([0], HdpParams()) == pytest.approx(0.0)

    def test_pair_tie_hand_value(self):
        # (gamma0 + 1 + gamma) / ((gamma + 1)(gamma0 + 1)) at unit parameters
        assert hdp_log_eppf([0, 0], HdpParams(1, 1, 1, 1)) == pytest.approx(math.log(0.75))

    def test_normalization_n5(self):
        pars = HdpParams(1.3, 0.6, 1, 1)
        total = sum(math.exp(hdp_log_eppf(p, pars)) for p in enumerate_partitions(5))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_agrees_with_rational_oracle(self, rng):
        pars = HdpParams(0.5, 2.0, 1, 1)
        for n in (6, 7, 8):
            parts = list(enumerate_partitions(n))
            for idx in rng.choice(len(parts), size=12, replace=False):
                p = parts[int(idx)]
                exact = hdp_eppf_exact(p.labels, Fraction(1, 2), Fraction(2))
                assert hdp_log_eppf(p, pars) == pytest.approx(
                    math.log(float(exact)), abs=1e-12
                )

    def test_exchangeable_in_subjects(self, rng):
        pars = HdpParams(0.8, 1.7, 1, 1)
        for _ in range(20):
            p = random_partition(rng, 9)
            perm = rng.permutation(9)
            q = canonicalize([p.labels[i] for i in perm])
            assert hdp_log_eppf(p, pars) == pytest.approx(hdp_log_eppf(q, pars), abs=1e-12)

    def test_cap(self):
        with pytest.raises(ValueError):
            hdp_log_eppf([0] * 30, HdpParams(), cap=25)


class TestHdpConditional:
    def test_pair_values(self):
        pars = HdpParams(1, 1, 1, 1)
        assert hdp_log_cond_eppf([0, 0], [0, 0], pars) == pytest.approx(math.log(0.75))
        assert hdp_log_cond_eppf([0, 0], [0, 1], pars) == pytest.approx(math.log(0.5))

    def test_normalization_given_every_parent(self):
        pars = HdpParams(1, 1, 0.7, 1.4)
        for p1 in enumerate_partitions(4):
            total = sum(
                math.exp(hdp_log_cond_eppf(p2, p1, pars)) for p2 in enumerate_partitions(4)
            )
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_agrees_with_rational_oracle(self, rng):
        pars = HdpParams(1, 1, 1.5, 0.7)
        parts = list(enumerate_partitions(6))
        for _ in range(25):
            p1 = parts[int(rng.integers(len(parts)))]
            p2 = parts[int(rng.integers(len(parts)))]
            exact = hdp_cond_exact(p2.labels, p1.labels, Fraction(3, 2), Fraction(7, 10))
            assert hdp_log_cond_eppf(p2, p1, pars) == pytest.approx(
                math.log(float(exact)), abs=1e-12
            )

    def test_exchangeability_joint_permutation(self, rng):
        pars = HdpParams(1, 1, 2.0, 0.5)
        for _ in range(20):
            p1 = random_partition(rng, 8)
            p2 = random_partition(rng, 8)
            perm = rng.permutation(8)
            q1 = canonicalize([p1.labels[i] for i in perm])
            q2 = canonicalize([p2.labels[i] for i in perm])
            assert hdp_log_cond_eppf(p2, p1, pars) == pytest.approx(
                hdp_log_cond_eppf(q2, q1, pars), abs=1e-12
            )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hdp_log_cond_eppf([0, 0], [0, 0, 1], HdpParams())


class TestThdpJoint:
    def test_additivity(self, rng):
        pars = HdpParams(0.9, 1.1, 1.3, 0.8)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            p1, p2 = random_partition(rng, n), random_partition(rng, n)
            assert thdp_log_teppf(p1, p2, pars) == pytest.approx(
                hdp_log_eppf(p1, pars) + hdp_log_cond_eppf(p2, p1, pars), abs=1e-12
            )

    def test_joint_normalization_n4(self):
        pars = HdpParams(1, 1, 1, 1)
        parts = list(enumerate_partitions(4))
        total = sum(
            math.exp(thdp_log_teppf(p1, p2, pars)) for p1 in parts for p2 in parts
        )
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_single_subject(self):
        assert thdp_log_teppf([0], [0], HdpParams()) == pytest.approx(0.0)

    def test_full_support(self):
        pars = HdpParams(0.5, 0.5, 0.5, 0.5)
        parts = list(enumerate_partitions(4))
        for p1 in parts:
            for p2 in parts:
                assert thdp_log_teppf(p1, p2, pars) > -math.inf


class TestThdpDependence:
    def test_tau_hand_value(self):
        assert tau_thdp(HdpParams(1, 1, 1, 1)) == pytest.approx(1 / 3)

    def test_tau_limit_large_alpha0(self):
        assert tau_thdp(HdpParams(1, 1, 1e9, 1)) == pytest.approx(1.0, abs=1e-6)

    def test_er_enumeration_arbitrated_value(self):
        # exact value from the n=2 enumeration of the joint law; see the
        # enumeration agreement test below, which is the arbiter
        assert er_thdp(HdpParams(1, 1, 1, 1)) == pytest.approx(11 / 16)

    def test_closed_forms_match_enumeration(self):
        for g0 in (0.5, 1.0, 2.0):
            for a0, a in ((0.5, 2.0), (1.0, 1.0), (2.0, 0.5)):
                pars = HdpParams(g0, 1.3, a0, a)
                rep = dependence_from_teppf(lambda p1, p2: thdp_log_teppf(p1, p2, pars))
                assert rep.tau == pytest.approx(tau_thdp(pars), abs=1e-12)
                assert rep.er == pytest.approx(er_thdp(pars), abs=1e-12)

    def test_eb_duality_at_n2(self):
        pars = HdpParams(0.7, 1.2, 1.5, 0.9)
        rep = dependence_from_teppf(lambda p1, p2: thdp_log_teppf(p1, p2, pars))
        assert rep.eb == pytest.approx(1.0 - rep.er, abs=1e-12)

    def test_tau_monotone(self):
        taus_a0 = [tau_thdp(HdpParams(1, 1, a0, 1)) for a0 in (0.5, 1, 2, 4, 8)]
        assert all(x < y for x, y in zip(taus_a0, taus_a0[1:]))
        taus_a = [tau_thdp(HdpParams(1, 1, 1, a)) for a in (0.5, 1, 2, 4, 8)]
        assert all(x > y for x, y in zip(taus_a, taus_a[1:]))

    def test_report_with_er_indep(self):
        pars = HdpParams(1, 1, 1, 1)
        rep = dependence_thdp(pars)
        enum = dependence_from_teppf(lambda p1, p2: thdp_log_teppf(p1, p2, pars))
        assert rep.er_indep == pytest.approx(enum.er_indep, abs=1e-12)


class TestCountPrior:
    def test_point(self):
        p = CountPrior("point", m=3)
        assert p.pmf(3) == 1.0
        assert p.pmf(2) == 0.0
        assert p.sf(2) == 1.0
        assert p.sf(3) == 0.0
        assert p.mean() == 3.0

    def test_shifted_poisson(self):
        p = CountPrior("shifted_poisson", rate=1.0)
        assert p.pmf(1) == pytest.approx(math.exp(-1))
        assert p.mean() == 2.0
        assert sum(p.pmf(m) for m in range(1, 60)) == pytest.approx(1.0)

    def test_geometric(self):
        p = CountPrior("geometric", p=0.3)
        assert p.pmf(2) == pytest.approx(0.3 * 0.7)
        assert p.sf(2) == pytest.approx(0.7 ** 2)
        assert p.mean() == pytest.approx(1 / 0.3)

    def test_table(self):
        p = CountPrior("table", probs=[0.2, 0.8])
        assert p.pmf(2) == pytest.approx(0.8)
        assert p.pmf(3) == 0.0
        assert p.support_max() == 2

    def test_roundtrip(self):
        for prior in (
            CountPrior("point", m=2),
            CountPrior("shifted_poisson", rate=2.5),
            CountPrior("geometric", p=0.4),
            CountPrior("table", probs=[0.5, 0.5]),
        ):
            assert CountPrior.from_spec(prior.to_spec()) == prior

    def test_expect_decreasing(self):
        p = CountPrior("shifted_poisson", rate=1.0)
        val = p.expect_decreasing(lambda m: 1.0 / (m + 1.0))
        ref = sum(p.pmf(m) / (m + 1.0) for m in range(1, 200))
        assert val == pytest.approx(ref, abs=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            CountPrior("zeta", s=2)


class TestMfmV:
    def test_point_mass_single_component(self):
        prior = CountPrior("point", m=1)
        for n in (1, 3, 6):
            assert mfm_log_V(n, 1, 1.0, prior) == pytest.approx(
                -log_rising_factorial(1.0, n)
            )

    def test_bounded_support_sentinel(self):
        prior = CountPrior("table", probs=[1.0])  # all mass on M = 1
        assert mfm_log_V(4, 2, 1.0, prior) == -math.inf

    def test_against_brute_series(self):
        prior = CountPrior("shifted_poisson", rate=1.0)
        pmf = shifted_poisson_pmf(1.0)
        from oracles import mfm_V_brute

        for n, K, gamma in [(3, 1, 1.0), (5, 2, 0.5), (6, 6, 2.0), (8, 3, 1.5)]:
            assert mfm_log_V(n, K, gamma, prior) == pytest.approx(
                math.log(mfm_V_brute(n, K, gamma, pmf)), abs=1e-11
            )

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            mfm_log_V(3, 4, 1.0, CountPrior("point", m=2))


def _mfm_params(gamma=1.0, alpha=1.0, omega=0.5, rate_m=1.0, rate_s=1.0):
    return MfmParams(
        gamma=gamma,
        alpha=alpha,
        omega=omega,
        m_prior=CountPrior("shifted_poisson", rate=rate_m),
        s_prior=CountPrior("shifted_poisson", rate=rate_s),
    )


class TestMfmEppf:
    def test_single_subject(self):
        assert mfm_log_eppf([0], _mfm_params()) == pytest.approx(0.0)

    def test_normalization_n5(self):
        params = _mfm_params(gamma=0.7)
        total = sum(math.exp(mfm_log_eppf(p, params)) for p in enumerate_partitions(5))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_point_mass_forces_single_cluster(self):
        params = MfmParams(
            gamma=1.0, alpha=1.0, omega=0.5,
            m_prior=CountPrior("point", m=1),
            s_prior=CountPrior("point", m=1),
        )
        assert mfm_log_eppf([0, 0, 0], params) == pytest.approx(0.0)
        assert mfm_log_eppf([0, 1], params) == -math.inf

    def test_against_brute(self, rng):
        params = _mfm_params(gamma=1.3)
        pmf = shifted_poisson_pmf(1.0)
        for _ in range(20):
            p = random_partition(rng, 7)
            assert mfm_log_eppf(p, params) == pytest.approx(
                math.log(mfm_eppf_brute(p.labels, 1.3, pmf)), abs=1e-10
            )


class TestUaConditional:
    def test_omega_zero_degenerate(self):
        params = _mfm_params(omega=0.0)
        assert ua_log_cond_eppf([0, 0, 1], [0, 0, 1], params) == pytest.approx(0.0)
        assert ua_log_cond_eppf([0, 1, 1], [0, 0, 1], params) == -math.inf

    def test_normalization_given_every_parent(self):
        params = _mfm_params(omega=0.5)
        for p1 in enumerate_partitions(4):
            total = sum(
                math.exp(ua_log_cond_eppf(p2, p1, params))
                for p2 in enumerate_partitions(4)
            )
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_omega_one_reduces_to_free_mixture(self, rng):
        params = _mfm_params(omega=1.0, alpha=0.8, rate_s=2.0)
        free = MfmParams(
            gamma=0.8, alpha=1.0, omega=0.5,
            m_prior=CountPrior("shifted_poisson", rate=2.0),
            s_prior=CountPrior("shifted_poisson", rate=1.0),
        )
        for _ in range(15):
            p1 = random_partition(rng, 6)
            p2 = random_partition(rng, 6)
            assert ua_log_cond_eppf(p2, p1, params) == pytest.approx(
                mfm_log_eppf(p2, free), abs=1e-12
            )


class TestUaJoint:
    def test_joint_normalization_n4(self):
        params = _mfm_params(omega=0.3)
        parts = list(enumerate_partitions(4))
        total = sum(math.exp(ua_log_teppf(p1, p2, params)) for p1 in parts for p2 in parts)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_sticky_term_dominates_as_omega_vanishes(self):
        p = canonicalize([0, 0, 1])
        for omega in (0.2, 0.05, 0.01):
            params = _mfm_params(omega=omega)
            same = math.exp(ua_log_teppf(p, p, params))
            other = math.exp(ua_log_teppf(p, [0, 1, 1], params))
            assert same > other
        assert math.exp(
            ua_log_teppf(p, p, _mfm_params(omega=0.01))
        ) > 0.9 * math.exp(mfm_log_eppf(p, _mfm_params()))

    def test_direct_two_term_formula(self, rng):
        # factored evaluation vs the joint two-term expression coded separately
        params = _mfm_params(gamma=1.2, alpha=0.7, omega=0.4)
        pmf_m = shifted_poisson_pmf(1.0)
        pmf_s = shifted_poisson_pmf(1.0)
        for _ in range(20):
            p1 = random_partition(rng, 6)
            p2 = random_partition(rng, 6)
            direct = ua_joint_brute(p1.labels, p2.labels, 1.2, 0.7, 0.4, pmf_m, pmf_s)
            assert ua_log_teppf(p1, p2, params) == pytest.approx(
                math.log(direct), abs=1e-10
            )

    def test_full_support_for_interior_omega(self):
        params = _mfm_params(omega=0.5)
        parts = list(enumerate_partitions(4))
        for p1 in parts:
            for p2 in parts:
                assert ua_log_teppf(p1, p2, params) > -math.inf


class TestUaDependence:
    def test_omega_zero_gives_tau_one(self):
        assert tau_ua(_mfm_params(omega=0.0)) == pytest.approx(1.0)

    def test_omega_one_gives_tau_zero(self):
        assert tau_ua(_mfm_params(omega=1.0)) == pytest.approx(0.0)

    def test_matches_enumeration(self):
        for omega in (0.2, 0.5, 0.8):
            params = _mfm_params(omega=omega, gamma=0.9, alpha=1.4)
            rep = dependence_from_teppf(lambda p1, p2: ua_log_teppf(p1, p2, params))
            assert rep.tau == pytest.approx(tau_ua(params), abs=1e-12)
            assert rep.er == pytest.approx(er_ua(params), abs=1e-10)

    def test_omega_one_er_is_independent_product_form(self):
        params = _mfm_params(omega=1.0)
        rep = dependence_from_teppf(lambda p1, p2: ua_log_teppf(p1, p2, params))
        assert rep.er == pytest.approx(rep.er_indep, abs=1e-12)
        assert er_ua(params) == pytest.approx(rep.er_indep, abs=1e-12)

    def test_eb_duality(self):
        params = _mfm_params(omega=0.4)
        rep = dependence_from_teppf(lambda p1, p2: ua_log_teppf(p1, p2, params))
        assert rep.eb == pytest.approx(1.0 - rep.er, abs=1e-12)

    def test_tau_decreasing_in_omega(self):
        taus = [tau_ua(_mfm_params(omega=w)) for w in (0.0, 0.2, 0.5, 0.8, 1.0)]
        assert all(x > y for x, y in zip(taus, taus[1:]))

    def test_report_er_indep_matches_enumeration(self):
        params = _mfm_params(omega=0.35, gamma=1.1, alpha=0.6)
        rep = dependence_ua(params)
        enum = dependence_from_teppf(lambda p1, p2: ua_log_teppf(p1, p2, params))
        assert rep.er_indep == pytest.approx(enum.er_indep, abs=1e-10)


class TestErIndependent:
    def test_uniform(self):
        assert er_independent([0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.5)

    def test_degenerate(self):
        assert er_independent([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_hand_value(self):
        assert er_independent([0.75, 0.25], [0.6, 0.4]) == pytest.approx(0.55)

    def test_invalid(self):
        with pytest.raises(ValueError):
            er_independent([0.7, 0.7], [0.5, 0.5])


class TestDependenceFromTeppf:
    def test_independent_product_law_tau_zero(self):
        pars = HdpParams(1, 1, 1, 1)

        def product_law(p1, p2):
            return hdp_log_eppf(p1, pars) + hdp_log_eppf(p2, pars)

        rep = dependence_from_teppf(product_law)
        assert rep.tau == pytest.approx(0.0, abs=1e-12)
        assert rep.er == pytest.approx(rep.er_indep, abs=1e-12)

    def test_unnormalized_law_rejected(self):
        with pytest.raises(ValueError):
            dependence_from_teppf(lambda p1, p2: 0.0)

    def test_identity_preservation_strict_n3(self):
        # within-cluster ties at the child layer are strictly more likely
        # than cross-cluster ties, conditionally on [0, 0, 1] at the parent
        parts = list(enumerate_partitions(3))
        p1 = canonicalize([0, 0, 1])
        for law in (
            lambda p2: hdp_log_cond_eppf(p2, p1, HdpParams(1, 1, 1, 1)),
            lambda p2: ua_log_cond_eppf(p2, p1, _mfm_params(omega=0.5)),
        ):
            probs = {p2.labels: math.exp(law(p2)) for p2 in parts}
            tie_12 = sum(v for k, v in probs.items() if k[0] == k[1])
            tie_13 = sum(v for k, v in probs.items() if k[0] == k[2])
            assert tie_12 > tie_13
