import json
import math

import numpy as np
import pytest

from src.core.exceptions import DegreeCapError, DomainError, ModelValidationError
from src.core.multi_index import MultiIndex
from src.core.priors import (
    AtomicPrior,
    GamInstance,
    GaussianTensorPrior,
    SparseClusteringPrior,
    SparseRademacherTensorPrior,
    TruncatedSparseTensor3Prior,
    egf_power_sum,
    merge_atoms,
    moment,
    parse_prior,
    sample_observation,
    sample_observations,
    sample_signal,
    trivial_mmse,
)
from src.core.rng import RngStream


class TestParsePrior:
    def test_round_trips_through_to_spec(self):
        prior = parse_prior('{"kind": "sparse_rademacher_tensor", "params": {"n": 20, "k": 4, "r": 2}}')
        assert isinstance(prior, SparseRademacherTensorPrior)
        assert prior.to_spec() == {"kind": "sparse_rademacher_tensor", "params": {"n": 20, "k": 4, "r": 2}}

    def test_accepts_decoded_objects(self):
        prior = parse_prior({"kind": "gaussian_tensor", "params": {"n": 5}})
        assert isinstance(prior, GaussianTensorPrior)
        assert prior.r == 1

    def test_k_above_n_points_at_params(self):
        with pytest.raises(ModelValidationError) as err:
            parse_prior({"kind": "sparse_rademacher_tensor", "params": {"n": 3, "k": 5}})
        assert err.value.pointer.startswith("/params")

    def test_unknown_kind_points_at_kind(self):
        with pytest.raises(ModelValidationError) as err:
            parse_prior({"kind": "laplace", "params": {}})
        assert err.value.pointer == "/kind"

    def test_negative_field_points_at_field(self):
        with pytest.raises(ModelValidationError) as err:
            parse_prior({"kind": "gaussian_tensor", "params": {"n": -1}})
        assert err.value.pointer == "/params/n"

    def test_malformed_json(self):
        with pytest.raises(ModelValidationError):
            parse_prior("{not json")

    def test_atomic_probs_must_sum_to_one(self):
        spec = {"kind": "atomic", "params": {"atoms": [[1.0], [-1.0]], "probs": [0.5, 0.6]}}
        with pytest.raises(ModelValidationError):
            parse_prior(json.dumps(spec))

    def test_extra_fields_rejected(self):
        with pytest.raises(ModelValidationError):
            parse_prior({"kind": "gaussian_tensor", "params": {"n": 2, "sparsity": 3}})


class TestMoments:
    def test_sparse_rademacher_even_and_odd(self):
        prior = SparseRademacherTensorPrior(10, 2, 1)
        assert prior.moment(MultiIndex.unit(10, 3, 2)) == pytest.approx(0.2)
        assert prior.moment(MultiIndex.unit(10, 3, 3)) == 0.0

    def test_tensor_moment_goes_through_latent_exponents(self):
        prior = SparseRademacherTensorPrior(3, 1, 2)
        # X_(0,0) X_(1,1) = v_0^2 v_1^2
        alpha = MultiIndex.from_multiset([0, 4], 9)
        assert prior.moment(alpha) == pytest.approx((1 / 3) ** 2)

    def test_gaussian_moments(self):
        prior = GaussianTensorPrior(2, 1)
        assert prior.moment(MultiIndex((4, 0))) == 3.0
        assert prior.moment(MultiIndex((2, 2))) == 1.0

    def test_atomic_matches_direct_average(self):
        atoms = np.array([[1.0, 2.0], [-1.0, 0.5]])
        prior = AtomicPrior(atoms, np.array([0.25, 0.75]))
        expected = 0.25 * 1.0 * 2.0**2 + 0.75 * (-1.0) * 0.5**2
        assert prior.moment(MultiIndex((1, 2))) == pytest.approx(expected)

    def test_degree_cap(self):
        prior = GaussianTensorPrior(1, 1)
        with pytest.raises(DegreeCapError):
            prior.moment(MultiIndex((5,)), cap=4)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            GaussianTensorPrior(3, 1).moment(MultiIndex((1, 1)))

    def test_truncated_prior_moments_match_support(self):
        prior = TruncatedSparseTensor3Prior(4, 2)
        atoms, probs = prior.support()
        for ids in [(0,), (0, 0), (0, 21), (5, 5, 42)]:
            alpha = MultiIndex.from_multiset(ids, prior.ambient_dim)
            direct = float(np.dot(probs, np.prod([atoms[:, i] for i in ids], axis=0)))
            assert prior.moment(alpha) == pytest.approx(direct, abs=1e-12)

    def test_moment_dispatch_is_exact(self):
        value = moment(SparseRademacherTensorPrior(4, 2, 1), MultiIndex((2, 0, 0, 0)))
        assert value.exact and value.value == pytest.approx(0.5)


class TestSecondMoments:
    @pytest.mark.parametrize("n,k,r", [(10, 3, 1), (6, 2, 2), (5, 5, 3)])
    def test_sparse_rademacher_trivial_mmse(self, n, k, r):
        prior = SparseRademacherTensorPrior(n, k, r)
        atoms, probs = prior.support(budget=10**6)
        expected = float(np.dot(probs, np.sum(atoms**2, axis=1)))
        assert trivial_mmse(prior) == pytest.approx(expected)

    def test_gaussian_tensor_second_moment(self):
        # E||v||^4 = n(n + 2)
        assert GaussianTensorPrior(4, 2).second_moment_total() == pytest.approx(24.0)

    def test_egf_power_sum_counts_sequences(self):
        assert egf_power_sum(lambda e: 1.0, 5, 3) == pytest.approx(125.0)

    def test_clustering_snr_and_scales(self):
        prior = SparseClusteringPrior(n=10, p=40, s=4, delta=2.0)
        assert prior.snr == pytest.approx(0.5)
        assert prior.sigma_b == pytest.approx(0.4)
        assert prior.sigma_s == pytest.approx(2.0)
        assert trivial_mmse(prior) == pytest.approx(40.0)


class TestSupport:
    def test_truncated_support_sums_to_one(self):
        prior = TruncatedSparseTensor3Prior(5, 2)
        _, probs = prior.support()
        assert probs.sum() == pytest.approx(1.0)

    def test_merge_atoms_combines_duplicates(self):
        atoms = np.array([[1.0], [1.0], [2.0], [3.0]])
        unique, probs = merge_atoms(atoms, np.array([0.2, 0.3, 0.5, 0.0]))
        assert unique.tolist() == [[1.0], [2.0]]
        assert probs.tolist() == pytest.approx([0.5, 0.5])

    def test_gaussian_has_no_support(self):
        with pytest.raises(DomainError):
            GaussianTensorPrior(2).support()


class TestSampling:
    def test_same_stream_same_draw(self):
        prior = SparseRademacherTensorPrior(30, 5, 2)
        a = sample_signal(prior, RngStream(7))
        b = sample_signal(prior, RngStream(7))
        np.testing.assert_array_equal(a.flat, b.flat)
        assert a.as_tensor().shape == (30, 30)

    def test_truncated_draws_stay_in_band_or_fallback(self, stream):
        prior = TruncatedSparseTensor3Prior(12, 3)
        v = prior.sample_latents(stream.generator(), 500)
        nnz = np.count_nonzero(v, axis=1)
        in_band = (nnz >= prior.band[0]) & (nnz <= prior.band[1])
        assert np.all(in_band)
        fallback = np.all(v == prior.indicator(), axis=1)
        assert np.all(v[~fallback] ** 2 <= 1)

    def test_observation_is_scaled_signal_plus_noise(self, stream):
        gam = GamInstance(AtomicPrior.constant([1.0, -2.0]), 4.0)
        signal, y = sample_observation(gam, stream)
        assert signal.flat.tolist() == [1.0, -2.0]
        assert y.shape == (2,)

    def test_zero_snr_observation_is_noise(self, stream):
        gam = GamInstance(SparseRademacherTensorPrior(8, 2, 1), 0.0)
        x, y = sample_observations(gam, stream, 4000)
        assert abs(float(np.mean(x * y))) < 0.02

    def test_negative_snr_rejected(self):
        with pytest.raises(ModelValidationError):
            GamInstance(GaussianTensorPrior(2), -1.0)

    def test_clustering_overlap_matches_flattened_inner_product(self, stream):
        prior = SparseClusteringPrior(n=4, p=6, s=3, delta=1.0)
        gen = stream.generator()
        a, b = prior.sample_latents(gen, 50), prior.sample_latents(gen, 50)
        direct = np.einsum("ij,ij->i", prior.flatten(a), prior.flatten(b))
        np.testing.assert_allclose(prior.latent_overlap(a, b), direct)

    def test_mc_second_moment_close_to_exact(self, stream):
        prior = SparseRademacherTensorPrior(20, 4, 1)
        x = prior.sample_flat(stream, 20_000)
        assert float(np.mean(np.sum(x**2, axis=1))) == pytest.approx(trivial_mmse(prior), rel=0.05)
        assert math.isclose(prior.mean_norm_sq(), 0.0)
