import math
from collections import Counter
from itertools import product

import numpy as np
import pytest

from src.config import settings
from src.core.exceptions import BudgetExceededError, DomainError
from src.core.fp import (
    annealed_fp,
    annealed_fp_direct,
    conditional_overlap_log_prob,
    enumerate_stratum,
    fp_curve,
    fp_derivative_at_quantile,
    fp_identity_residual,
    gamma_lower_threshold,
    gamma_max,
    overlap_class_size,
    overlap_strata,
    quenched_candidate_count,
    quenched_fp_difference,
    quenched_fp_mc,
    sample_stratum,
)
from src.core.overlap import (
    GaussianOverlapFamily,
    OverlapDistribution,
    SpeedFunction,
    exact_pmf_sparse_rademacher,
    exact_pmf_truncated_sparse_tensor3,
    quantile,
)
from src.core.priors import TruncatedSparseTensor3Prior
from src.core.rng import RngStream


@pytest.fixture
def rademacher():
    return exact_pmf_sparse_rademacher(60, 8, 1)


class TestAnnealed:
    def test_potential_at_atom(self, rademacher):
        q = 2.0
        assert annealed_fp(rademacher, 0.5, q) == pytest.approx(-1.0 - rademacher.log_pmf_at(q))

    def test_direct_evaluation_agrees(self, rademacher):
        for q in [0.0, 1.0, 3.0]:
            assert annealed_fp_direct(rademacher, 1.7, q) == pytest.approx(annealed_fp(rademacher, 1.7, q))

    def test_identity_residual_is_rounding_level(self, rademacher):
        assert fp_identity_residual(rademacher, [0.0, 0.3, 2.0, 10.0]) < 1e-10

    def test_zero_mass_overlap(self, rademacher):
        with pytest.raises(DomainError):
            annealed_fp(rademacher, 1.0, 0.5)

    def test_empirical_law_rejected(self):
        with pytest.raises(DomainError):
            annealed_fp(OverlapDistribution.from_samples([1.0, 2.0, 3.0]), 1.0, 2.0)


class TestDerivative:
    def test_value_is_negative_log_pmf_difference(self, rademacher):
        speed = SpeedFunction.tensor(1)
        d = fp_derivative_at_quantile(rademacher, 0.0, 2.0, speed=speed)
        q = quantile(rademacher, 2.0)
        expected = -(rademacher.log_pmf_at(q + 2) - rademacher.log_pmf_at(q)) / 2
        assert d.q == q and d.step == 2.0
        assert d.value == pytest.approx(expected)
        assert d.fp_derivative == pytest.approx(expected)

    def test_sign_flips_with_lambda(self, rademacher):
        speed = SpeedFunction.tensor(1)
        weak = fp_derivative_at_quantile(rademacher, 0.0, 2.0, speed=speed)
        strong = fp_derivative_at_quantile(rademacher, weak.value + 1.0, 2.0, speed=speed)
        assert weak.sign == "hard"
        assert strong.sign == "easy"
        at_boundary = fp_derivative_at_quantile(rademacher, weak.value, 2.0, speed=speed)
        assert at_boundary.sign == "hard"

    def test_exact_law_needs_speed(self, rademacher):
        with pytest.raises(DomainError):
            fp_derivative_at_quantile(rademacher, 1.0, 2.0)

    def test_gaussian_uses_log_density_derivative(self):
        family = GaussianOverlapFamily(8, 1)
        dist = OverlapDistribution.from_family(family)
        d = fp_derivative_at_quantile(dist, 0.25, 3.0)
        assert d.value == pytest.approx(-family.log_density_derivative(family.quantile(3.0)))
        assert d.fp_derivative == pytest.approx(d.value - 0.25)

    def test_curve_over_atoms(self, rademacher):
        table = fp_curve(rademacher, 0.5, 4.0, speed=SpeedFunction.tensor(1))
        assert list(table.columns) == ["q", "F_ann", "derivative_or_diff", "sign"]
        assert table["q"].min() == 0.0
        assert table["q"].max() <= quantile(rademacher, 4.0)

    def test_curve_over_density(self):
        dist = OverlapDistribution.from_family(GaussianOverlapFamily(4, 1))
        table = fp_curve(dist, 0.5, 3.0, points=8)
        assert len(table) == 8
        assert set(table["sign"]) <= {"hard", "easy"}


class TestQuenched:
    prior = TruncatedSparseTensor3Prior(6, 2)

    def test_candidate_count(self):
        work, exact = quenched_candidate_count(self.prior, (0,))
        expected = max(sum(overlap_class_size(6, t, 0, m) for m in range(1, 5)) for t in range(1, 5))
        assert work == expected
        assert exact

    def test_large_strata_are_sampled(self, monkeypatch):
        full, _ = quenched_candidate_count(self.prior, (0,))
        monkeypatch.setattr(settings, "QUENCHED_STRATUM_EXACT", 10)
        monkeypatch.setattr(settings, "QUENCHED_STRATUM_SAMPLES", 3)
        work, exact = quenched_candidate_count(self.prior, (0,))
        assert not exact
        assert 0 < work < full

    def test_counterexample_size_fits_the_default_budget(self):
        work, exact = quenched_candidate_count(TruncatedSparseTensor3Prior(20, 4), (0, 2))
        assert work <= settings.QUENCHED_ENUM_BUDGET
        assert not exact

    def test_conditional_overlap_law_sums_to_one(self):
        v = self.prior.indicator()
        total = sum(math.exp(conditional_overlap_log_prob(self.prior, v, q)) for q in range(-2, 3))
        assert total == pytest.approx(1.0)

    def test_conditional_overlap_law_matches_brute_force(self):
        prior = TruncatedSparseTensor3Prior(5, 2)
        v = np.array([1.0, -1.0, 0.0, 1.0, 0.0])
        lo, hi = prior.band
        mass = {}
        for u in product((-1.0, 0.0, 1.0), repeat=5):
            u = np.array(u)
            m = int(np.count_nonzero(u))
            p = (prior.rho / 2) ** m * (1 - prior.rho) ** (5 - m)
            target = u if lo <= m <= hi else prior.indicator()
            q = int(v @ target)
            mass[q] = mass.get(q, 0.0) + p
        for q, p in mass.items():
            assert math.exp(conditional_overlap_log_prob(prior, v, q)) == pytest.approx(p, rel=1e-12)

    def test_zero_lambda_is_conditional_entropy(self, stream):
        est = quenched_fp_mc(self.prior, 0.0, 1, 8, stream, threads=1)
        assert est.q == 1.0 and est.replicas == 8
        assert est.value > 0
        assert est.exact

    def test_jensen_gap_is_nonnegative(self, stream):
        lam = 0.3
        annealed = annealed_fp(exact_pmf_truncated_sparse_tensor3(6, 2), lam, 1.0)
        quenched = quenched_fp_mc(self.prior, lam, 1, 48, stream, threads=2)
        assert quenched.value + 3 * quenched.stderr >= annealed

    def test_sampled_strata_track_enumeration(self, stream, monkeypatch):
        exact = quenched_fp_mc(self.prior, 0.01, 0, 4, stream, threads=1)
        monkeypatch.setattr(settings, "QUENCHED_STRATUM_EXACT", 5)
        monkeypatch.setattr(settings, "QUENCHED_STRATUM_SAMPLES", 20_000)
        sampled = quenched_fp_mc(self.prior, 0.01, 0, 4, stream, threads=1)
        assert exact.exact and not sampled.exact
        assert sampled.value == pytest.approx(exact.value, abs=0.05)

    def test_difference_is_paired_and_reproducible(self, stream):
        a = quenched_fp_difference(self.prior, 0.2, 2, 6, stream, threads=1)
        b = quenched_fp_difference(self.prior, 0.2, 2, 6, stream, threads=3)
        assert a.value == pytest.approx(b.value)
        assert a.stderr == pytest.approx(b.stderr)

    def test_budget(self, stream):
        with pytest.raises(BudgetExceededError):
            quenched_fp_mc(self.prior, 0.1, 1, 4, stream, budget=10)

    def test_size_cap(self, stream):
        with pytest.raises(BudgetExceededError):
            quenched_fp_mc(TruncatedSparseTensor3Prior(25, 2), 0.1, 1, 4, stream)

    def test_replica_count(self, stream):
        with pytest.raises(DomainError):
            quenched_fp_mc(self.prior, 0.1, 1, 1, stream)

    @pytest.mark.slow
    def test_potential_increases_away_from_zero_overlap(self):
        prior = TruncatedSparseTensor3Prior(20, 4)
        diff = quenched_fp_difference(prior, 0.05, 2, 48, RngStream(2020))
        assert diff.value > 3.0 * diff.stderr


class TestOverlapStrata:
    v = np.array([1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0])

    @pytest.mark.parametrize("q_prime,m", [(0, 2), (1, 3), (-1, 2), (3, 4), (2, 5), (0, 1)])
    def test_enumeration_is_the_overlap_class(self, q_prime, m):
        strata = overlap_strata(7, 3, q_prime, m)
        rows = []
        for s in strata:
            supports, signs = enumerate_stratum(self.v, s)
            assert len(supports) == s.count
            rows.extend(zip(map(tuple, supports), map(tuple, signs)))
        vectors = set()
        for support, sign in rows:
            u = np.zeros(7)
            u[list(support)] = sign
            assert np.count_nonzero(u) == m
            assert u @ self.v == q_prime
            vectors.add(tuple(u))
        assert len(vectors) == len(rows) == overlap_class_size(7, 3, q_prime, m)

    def test_samples_stay_in_the_stratum(self, stream):
        s = overlap_strata(7, 3, 1, 4)[0]
        supports, signs = sample_stratum(self.v, s, 500, stream.generator())
        assert supports.shape == signs.shape == (500, 4)
        for support, sign in zip(supports, signs):
            assert len(set(support.tolist())) == 4
            assert np.count_nonzero(self.v[support]) == s.j
            assert float(self.v[support] @ sign) == 1.0

    def test_samples_cover_the_stratum_uniformly(self, stream):
        s = overlap_strata(7, 3, 0, 2)[0]
        assert (s.j, s.count) == (0, 24)
        supports, signs = sample_stratum(self.v, s, 24_000, stream.generator())
        keys = [tuple(sorted(zip(a.tolist(), b.tolist()))) for a, b in zip(supports, signs)]
        counts = np.array(list(Counter(keys).values()))
        assert len(counts) == 24
        assert counts.min() > 800 and counts.max() < 1200

    def test_bad_sizes(self):
        with pytest.raises(DomainError):
            overlap_strata(5, 6, 0, 2)


class TestGamma:
    def test_zero_noise(self):
        v = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
        est = gamma_max(v, np.zeros((5, 5, 5)), 1, 2)
        assert est.value == 0.0
        # one support coordinate in {0, 1} with sign +, the other outside: 2 * 3 * 2
        assert est.count == 12

    def test_maximizer_picks_largest_entry(self):
        v = np.array([1.0, 0.0, 0.0, 0.0])
        Z = np.zeros((4, 4, 4))
        Z[0, 0, 0] = 5.0
        assert gamma_max(v, Z, 1, 1).value == 5.0

    @pytest.mark.parametrize("q_prime,m", [(0, 2), (1, 2), (2, 3), (-1, 3), (3, 3)])
    def test_class_size_matches_enumeration(self, q_prime, m):
        v = np.array([1.0, 1.0, -1.0, 0.0, 0.0, 0.0])
        expected = overlap_class_size(6, 3, q_prime, m)
        assert gamma_max(v, np.zeros((6, 6, 6)), q_prime, m).count == expected

    def test_class_size_empty(self):
        assert overlap_class_size(5, 2, 3, 3) == 0

    def test_unreachable_overlap(self):
        with pytest.raises(DomainError):
            gamma_max(np.array([1.0, 0.0, 0.0]), np.zeros((3, 3, 3)), 3, 1)

    def test_lower_threshold(self):
        n, m = 100, 5
        value = gamma_lower_threshold(n, m, 0.0)
        log_binom = math.log(math.comb(n, m))
        expected = math.sqrt(m**3) * math.sqrt(2 * log_binom - math.log(m * math.log(n / m)))
        assert value == pytest.approx(expected)
        with pytest.raises(DomainError):
            gamma_lower_threshold(5, 5, 0.0)
