import numpy as np
import pytest
from scipy import integrate, stats

from spatial_ksample import (
    FieldModel,
    LocationModel,
    Margin,
    ScenarioSpec,
    TestConfig,
    consistency_curve,
    generate_dataset,
    monte_carlo_rejection_rate,
    plugin_C,
)
from spatial_ksample.errors import InvalidArgument
from spatial_ksample.simulation import cdf_error_curve, latent_field


class TestMargin:
    def test_parse(self):
        assert Margin.parse("Normal(0, 1)") == Margin.normal(0, 1)
        assert Margin.parse(" uniform(0.5,1.5) ") == Margin.uniform(0.5, 1.5)
        assert str(Margin.uniform(0.5, 1.5)) == "Uniform(0.5, 1.5)"
        with pytest.raises(InvalidArgument):
            Margin.parse("Gamma(1, 2)")
        with pytest.raises(InvalidArgument):
            Margin.normal(0, 0)


class TestGenerate:
    def test_s0_shape(self):
        ds = generate_dataset(ScenarioSpec(seed=3))
        assert ds.k == 2 and ds.counts == [50, 50]
        assert np.all((ds.locations >= 0) & (ds.locations <= 1))

    def test_reproducible(self):
        sc = ScenarioSpec(seed=8, field_model="moving_average", field_range=0.1,
                          location_model="cluster_mixture")
        a, b = generate_dataset(sc), generate_dataset(sc)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.locations.tobytes() == b.locations.tobytes()
        assert generate_dataset(sc.replace(seed=9)).values.tobytes() != a.values.tobytes()

    def test_zero_range_is_iid(self):
        iid = generate_dataset(ScenarioSpec(seed=4))
        ma = generate_dataset(ScenarioSpec(seed=4, field_model="moving_average", field_range=0.0))
        assert iid.values.tobytes() == ma.values.tobytes()

    def test_cluster_locations_in_domain(self):
        sc = ScenarioSpec(seed=1, domain=(2.0, -1.0, 5.0, 1.0), location_model="cluster_mixture",
                          cluster_spread=0.3)
        ds = generate_dataset(sc)
        assert np.all(ds.locations[:, 0] >= 2) and np.all(ds.locations[:, 0] <= 5)
        assert np.all(ds.locations[:, 1] >= -1) and np.all(ds.locations[:, 1] <= 1)

    @pytest.mark.parametrize("field", ["iid", "moving_average"])
    def test_marginals_exact(self, field):
        margins = (Margin.normal(2.0, 0.5), Margin.uniform(-1.0, 3.0))
        sc = ScenarioSpec(n_i=(10_000, 10_000), margins=margins, field_model=field,
                          field_range=0.01, seed=21)
        ds = generate_dataset(sc)
        for i, m in enumerate(margins, start=1):
            v, _ = ds.population(i)
            assert stats.kstest(v, m.cdf).pvalue > 0.01

    def test_spatial_decay(self):
        rng = np.random.default_rng(0)
        r = 0.05
        locs = rng.random((3000, 2))
        z = latent_field(locs, r, rng)
        i = rng.integers(0, 3000, 40_000)
        j = rng.integers(0, 3000, 40_000)
        far = np.hypot(*(locs[i] - locs[j]).T) > 2 * r
        i, j = i[far][:10_000], j[far][:10_000]
        assert len(i) == 10_000
        assert abs(np.corrcoef(z[i], z[j])[0, 1]) <= 0.05
        near = rng.integers(0, 3000, 3000)
        d = np.hypot(*(locs[near][:, None] - locs[None]).transpose(2, 0, 1))
        a, b = np.nonzero((d > 0) & (d < 0.3 * r))
        assert np.corrcoef(z[near][a], z[b])[0, 1] > 0.5
        assert np.std(z) == pytest.approx(1.0, abs=0.05)

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            ScenarioSpec(k=3)
        with pytest.raises(InvalidArgument):
            ScenarioSpec(field_range=-1)


class TestPluginC:
    def test_identical(self):
        assert plugin_C([Margin.normal()] * 3, [1 / 3] * 3) == 0.0

    def test_shifted_uniforms(self):
        def integrand_mixture(y):
            F1 = np.clip(y, 0, 1)
            F2 = np.clip(y - 0.5, 0, 1)
            dens = 0.5 * ((0 <= y) & (y <= 1)) + 0.5 * ((0.5 <= y) & (y <= 1.5))
            return (F1 - F2) ** 2 * dens

        pieces = [integrate.quad(integrand_mixture, a, b)[0] for a, b in [(0, 0.5), (0.5, 1), (1, 1.5)]]
        assert sum(pieces) == pytest.approx(1 / 6, rel=1e-10)
        c = plugin_C([Margin.uniform(0, 1), Margin.uniform(0.5, 1.5)], [0.5, 0.5], 1.0)
        assert c == pytest.approx(1 / 6, rel=1e-12)

    def test_linear_in_weight_total(self):
        m = [Margin.normal(0, 1), Margin.normal(1, 1)]
        assert plugin_C(m, [0.5, 0.5], 2.0) == pytest.approx(2 * plugin_C(m, [0.5, 0.5], 1.0), rel=1e-14)

    def test_normal_shift_against_quad(self):
        m = [Margin.normal(0, 1), Margin.normal(1, 1)]
        f = lambda y: (stats.norm.cdf(y) - stats.norm.cdf(y - 1)) ** 2 * 0.5 * (
            stats.norm.pdf(y) + stats.norm.pdf(y - 1))
        want = integrate.quad(f, -12, 13, epsabs=1e-13)[0]
        assert plugin_C(m, [0.5, 0.5]) == pytest.approx(want, rel=1e-8)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidArgument):
            plugin_C([Margin.normal()] * 2, [0.5, 0.6])


class TestMonteCarlo:
    def test_single_trial(self):
        cfg = TestConfig(replicates=20, grid_resolution=4)
        mc = monte_carlo_rejection_rate(ScenarioSpec(n_i=(15, 15)), cfg, 1)
        assert mc.rate in (0.0, 1.0) and mc.trials == 1

    def test_deterministic_across_workers(self):
        cfg = TestConfig(replicates=20, grid_resolution=4, seed=3)
        sc = ScenarioSpec(n_i=(15, 15), seed=5)
        a = monte_carlo_rejection_rate(sc, cfg, 6)
        b = monte_carlo_rejection_rate(sc, cfg, 6, workers=3)
        assert a.p_values.tobytes() == b.p_values.tobytes()

    def test_invalid_trials(self):
        with pytest.raises(InvalidArgument):
            monte_carlo_rejection_rate(ScenarioSpec(), TestConfig(), 0)


class TestCurves:
    def test_identical_margins_decrease(self):
        pts = consistency_curve(ScenarioSpec(seed=2), [100, 400, 1600], 10)
        means = [p.mean_Tn for p in pts]
        assert means[0] > means[1] > means[2]
        assert all(p.C == 0.0 for p in pts)

    def test_cdf_error_small(self):
        (n, err), = cdf_error_curve(Margin.normal(), [400], 5)
        assert n == 400 and 0 < err < 0.1
