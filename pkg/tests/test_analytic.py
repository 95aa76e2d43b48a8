"""Closed-form evaluators vs independent numeric oracles."""

import math

import numpy as np
import pytest

from relayaloha import (RateAllocation, SystemConfig, check_rate_feasibility,
                        max_downlink_throughput, omega, peak_uplink_throughput,
                        phi_subset, plr_uplink, throughput_sa, throughput_uplink)


def poisson_terms(g, cutoff=1e-16, umax=4096):
    """(u, pmf) pairs until the tail is negligible."""
    pmf = math.exp(-g)
    out = [(0, pmf)]
    u = 0
    while u < umax:
        u += 1
        pmf *= g / u
        out.append((u, pmf))
        if pmf < cutoff and u > g:
            break
    return out


def phi_bruteforce(g, eps, j):
    """Direct truncated sum of the all-j-relays decode probability."""
    return sum(p * u * ((1.0 - eps) * eps ** (u - 1)) ** j
               for u, p in poisson_terms(g) if u >= 1)


def uplink_pattern_enum(g, eps, k):
    """Expected distinct decodes per slot by enumerating per-relay outcomes.

    Outcome 0 means no decode, outcome i in 1..u that relay decoded packet i;
    distinct decodes are counted over the outcome product space (K <= 3).
    """
    assert k <= 3
    total = 0.0
    for u, pu in poisson_terms(g):
        if u == 0 or u > 50:
            continue
        p_dec = (1.0 - eps) * eps ** (u - 1)
        probs = np.full(u + 1, p_dec)
        probs[0] = 1.0 - u * p_dec
        o = np.arange(u + 1)
        if k == 1:
            distinct = (o > 0).astype(np.int64)
            weight = probs
        elif k == 2:
            o1, o2 = o[:, None], o[None, :]
            distinct = (o1 > 0).astype(np.int64) + ((o2 > 0) & (o2 != o1))
            weight = probs[:, None] * probs[None, :]
        else:
            o1, o2, o3 = o[:, None, None], o[None, :, None], o[None, None, :]
            distinct = ((o1 > 0).astype(np.int64) + ((o2 > 0) & (o2 != o1))
                        + ((o3 > 0) & (o3 != o1) & (o3 != o2)))
            weight = probs[:, None, None] * probs[None, :, None] * probs[None, None, :]
        total += pu * float((distinct * weight).sum())
    return total


def plr_bruteforce(g, eps, k):
    """Per-packet loss by direct summation over the interferer count."""
    return sum(p * (1.0 - (1.0 - eps) * eps**i) ** k for i, p in poisson_terms(g))


class TestThroughputSa:
    def test_peak_load_value(self):
        for eps in (0.0, 0.3, 0.5):
            cfg = SystemConfig(1.0 / (1.0 - eps), eps, 1)
            assert throughput_sa(cfg) == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_zero_load(self):
        assert throughput_sa(SystemConfig(0.0, 0.4, 1)) == 0.0

    def test_direct_substitution(self):
        got = throughput_sa(SystemConfig(1.0, 0.5, 1))
        assert got == pytest.approx(0.5 * math.exp(-0.5), abs=1e-15)
        assert got == pytest.approx(phi_bruteforce(1.0, 0.5, 1), abs=1e-13)


class TestPhiSubset:
    def test_single_relay_reduction(self):
        cfg = SystemConfig(1.7, 0.25, 3)
        assert phi_subset(cfg, 1) == pytest.approx(throughput_sa(cfg), abs=1e-15)

    def test_no_erasures_two_relays(self):
        assert phi_subset(SystemConfig(1.0, 0.0, 2), 2) == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_bruteforce_sum(self):
        cfg = SystemConfig(1.4286, 0.3, 2)
        want = phi_bruteforce(1.4286, 0.3, 2)
        assert want == pytest.approx(0.191, abs=1e-3)
        assert phi_subset(cfg, 2) == pytest.approx(want, abs=1e-12)

    def test_out_of_range(self):
        cfg = SystemConfig(1.0, 0.3, 2)
        with pytest.raises(ValueError):
            phi_subset(cfg, 0)
        with pytest.raises(ValueError):
            phi_subset(cfg, 3)


class TestThroughputUplink:
    def test_k1_reduces_to_sa(self):
        cfg = SystemConfig(0.9, 0.2, 1)
        assert throughput_uplink(cfg) == throughput_sa(cfg)

    @pytest.mark.parametrize("k", [1, 2, 4, 6])
    def test_no_erasures_no_gain(self, k):
        cfg = SystemConfig(1.3, 0.0, k)
        assert throughput_uplink(cfg) == pytest.approx(throughput_sa(cfg), abs=1e-12)

    def test_inclusion_exclusion_identity(self):
        for g in (0.2, 1.0, 2.5):
            for eps in (0.1, 0.5, 0.9):
                for k in (2, 3, 5, 8):
                    cfg = SystemConfig(g, eps, k)
                    incl_excl = sum((-1.0) ** (j - 1) * math.comb(k, j) * phi_subset(cfg, j)
                                    for j in range(1, k + 1))
                    assert throughput_uplink(cfg) == pytest.approx(incl_excl, abs=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    @pytest.mark.parametrize("g,eps", [(0.5, 0.3), (1.5, 0.5), (2.5, 0.1)])
    def test_pattern_enumeration_oracle(self, k, g, eps):
        cfg = SystemConfig(g, eps, k)
        assert throughput_uplink(cfg) == pytest.approx(uplink_pattern_enum(g, eps, k), abs=1e-9)

    def test_bounds_and_monotonicity(self):
        for g in (0.3, 1.0, 3.0):
            for eps in (0.05, 0.4, 0.8):
                prev = 0.0
                for k in range(1, 9):
                    cfg = SystemConfig(g, eps, k)
                    s = throughput_uplink(cfg)
                    assert throughput_sa(cfg) - 1e-12 <= s <= k * throughput_sa(cfg) + 1e-12
                    assert s >= prev - 1e-12
                    prev = s

    def test_full_erasure(self):
        cfg = SystemConfig(2.0, 1.0, 4)
        assert throughput_uplink(cfg) == 0.0
        assert plr_uplink(cfg) == 1.0


class TestPlrUplink:
    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
    @pytest.mark.parametrize("eps", [0.1, 0.3, 0.5])
    def test_low_load_limit(self, k, eps):
        assert plr_uplink(SystemConfig(1e-9, eps, k)) == pytest.approx(eps**k, abs=1e-6)

    def test_single_receiver_pure_collisions(self):
        assert plr_uplink(SystemConfig(1.0, 0.0, 1)) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-12)

    @pytest.mark.parametrize("g,eps,k", [(0.5, 0.3, 2), (1.0, 0.5, 3), (2.0, 0.1, 4), (4.0, 0.7, 2)])
    def test_direct_sum_oracle(self, g, eps, k):
        assert plr_uplink(SystemConfig(g, eps, k)) == pytest.approx(plr_bruteforce(g, eps, k), abs=1e-12)

    def test_range_and_monotone_in_k(self):
        for g in np.arange(0.01, 5.01, 0.5):
            for eps in np.linspace(0.0, 1.0, 6):
                prev = 1.1
                for k in range(1, 9):
                    v = plr_uplink(SystemConfig(float(g), float(eps), k))
                    assert 0.0 <= v <= 1.0
                    assert v <= prev + 1e-12
                    prev = v


class TestOmega:
    def test_full_subset_is_zero(self):
        cfg = SystemConfig(1.2, 0.35, 4)
        assert omega(cfg, 4) == 0.0

    def test_single_term(self):
        cfg = SystemConfig(0.8, 0.3, 2)
        assert omega(cfg, 1) == pytest.approx(phi_subset(cfg, 1), abs=1e-15)

    def test_complement_identity(self):
        # leaving out J relays leaves a (K-J)-relay system behind
        for k in (2, 3, 5):
            cfg = SystemConfig(1.0, 0.5, k)
            for j in range(1, k):
                rest = SystemConfig(1.0, 0.5, k - j)
                assert omega(cfg, j) == pytest.approx(throughput_uplink(rest), abs=1e-12)

    def test_k3_expansion(self):
        cfg = SystemConfig(1.0, 0.5, 3)
        want = 2.0 * phi_subset(cfg, 1) - phi_subset(cfg, 2)
        assert omega(cfg, 1) == pytest.approx(want, abs=1e-12)


class TestRateFeasibility:
    def setup_method(self):
        self.cfg = SystemConfig(1.0 / 0.7, 0.3, 2)
        self.s_sa = throughput_sa(self.cfg)
        self.s_ul = throughput_uplink(self.cfg)

    def test_per_relay_sa_rate_is_feasible(self):
        cfg = SystemConfig(1.1, 0.4, 3)
        rep = check_rate_feasibility(cfg, RateAllocation((throughput_sa(cfg),) * 3))
        assert rep.feasible and not rep.violations

    def test_sum_rate_below_uplink_violates(self):
        short = (self.s_ul - 0.01) / 2.0
        rep = check_rate_feasibility(self.cfg, RateAllocation((short, short)))
        assert not rep.feasible
        assert any(v.relays == (1, 2) for v in rep.violations)

    def test_tight_split_has_zero_slack(self):
        rep = check_rate_feasibility(
            self.cfg, RateAllocation((self.s_sa, self.s_ul - self.s_sa)))
        assert rep.feasible
        assert rep.tightest.slack == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_rates(self):
        base = RateAllocation((0.2, 0.1, 0.15))
        cfg = SystemConfig(1.5, 0.45, 3)
        before = {v.relays for v in check_rate_feasibility(cfg, base).violations}
        bumped = RateAllocation((0.2, 0.25, 0.15))
        after = {v.relays for v in check_rate_feasibility(cfg, bumped).violations}
        assert after <= before

    def test_k_guard(self):
        cfg = SystemConfig(1.0, 0.3, 21)
        with pytest.raises(ValueError):
            check_rate_feasibility(cfg, RateAllocation((0.1,) * 21))


class TestMaxDownlinkThroughput:
    def setup_method(self):
        self.cfg = SystemConfig(1.0 / 0.7, 0.3, 2)
        self.s_ul = throughput_uplink(self.cfg)

    def test_branches(self):
        assert max_downlink_throughput(self.cfg, 0.0) == 0.0
        assert max_downlink_throughput(self.cfg, 2.0 * self.s_ul) == pytest.approx(self.s_ul)
        assert max_downlink_throughput(self.cfg, 0.5 * self.s_ul) == pytest.approx(0.5 * self.s_ul)

    def test_requires_two_relays(self):
        with pytest.raises(ValueError):
            max_downlink_throughput(SystemConfig(1.0, 0.3, 3), 1.0)


class TestPeakSearch:
    def test_single_relay_peak(self):
        for eps in (0.0, 0.3, 0.5):
            g_star, s_star = peak_uplink_throughput(eps, 1)
            assert s_star == pytest.approx(math.exp(-1.0), abs=1e-9)
            assert g_star == pytest.approx(1.0 / (1.0 - eps), abs=1e-5)


class TestConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SystemConfig(-0.1, 0.3, 1)
        with pytest.raises(ValueError):
            SystemConfig(1.0, 1.2, 1)
        with pytest.raises(ValueError):
            SystemConfig(1.0, 0.3, 0)
        with pytest.raises(ValueError):
            RateAllocation((0.1, -0.2))

    def test_rate_allocation_sum(self):
        alloc = RateAllocation((0.25, 0.5, 0.125))
        assert alloc.sum_rate == pytest.approx(0.875, abs=1e-12)
