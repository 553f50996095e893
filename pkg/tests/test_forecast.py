import numpy as np
import pytest

import codicast as cc
from codicast.errors import ShapeError
from codicast.forecast import (ForecastEnsemble, coverage, ensemble_forecast, rollout,
                               uncertainty)
from codicast.grid import center_latitudes, regular_longitudes
from codicast.seeding import derive_seed, rng_from

rng = np.random.default_rng(23)


def _field(values):
    h, w, c = values.shape
    return cc.GridField(values, center_latitudes(h), regular_longitudes(w),
                        tuple(f"v{i}" for i in range(c)))


class _ShiftModel:
    """Deterministic-dynamics stand-in for a trained model: 'samples'
    the current frame shifted by one column plus a seed-keyed offset,
    recording every conditioning pair it sees."""

    def __init__(self, h=4, w=8, c=1, noise_scale=0.0):
        self.stats = cc.NormStats(np.zeros(c), np.ones(c))  # identity normalization
        self.channel_names = tuple(f"v{i}" for i in range(c))
        self.step_hours = 6.0
        self.schedule = cc.build_schedule(3, 0.1, 0.3)
        self.noise_scale = noise_scale
        self.seen = []
        self.grid_channels = c

    def encode_condition(self, prev, curr):
        prev = prev.values if hasattr(prev, "values") else prev
        curr = curr.values if hasattr(curr, "values") else curr
        self.seen.append((prev.copy(), curr.copy()))
        return np.zeros((prev.shape[0] * prev.shape[1], 2))

    def predict_noise(self, x, n, z):
        return np.zeros_like(np.asarray(x))


def _shift_sample(model, prev, curr, seed):
    prev_v = prev.values if hasattr(prev, "values") else prev
    curr_v = curr.values if hasattr(curr, "values") else curr
    model.encode_condition(prev_v, curr_v)
    out = np.roll(curr_v, 1, axis=1)
    if model.noise_scale:
        out = out + model.noise_scale * rng_from(seed).standard_normal(out.shape)
    if hasattr(prev, "with_values"):
        return prev.with_values(out)
    return out


@pytest.fixture
def shift_model(monkeypatch):
    model = _ShiftModel()
    monkeypatch.setattr("codicast.forecast.sample", lambda m, p, c, s: _shift_sample(m, p, c, s))
    return model


class TestRollout:
    def test_single_step_is_one_sample(self, shift_model):
        x0 = _field(rng.standard_normal((4, 8, 1)))
        x1 = _field(rng.standard_normal((4, 8, 1)))
        traj = rollout(shift_model, x0, x1, steps=1, seed=5)
        assert len(traj) == 1
        np.testing.assert_allclose(traj[0].values, np.roll(x1.values, 1, axis=1), atol=1e-12)

    def test_conditioning_chain_follows_predictions(self, shift_model):
        """At step k >= 3 the conditioning frames are exactly the outputs
        of steps k-2 and k-1 (instrumented stub records its inputs)."""
        x0 = _field(rng.standard_normal((4, 8, 1)))
        x1 = _field(rng.standard_normal((4, 8, 1)))
        traj = rollout(shift_model, x0, x1, steps=4, seed=5)
        seen = shift_model.seen
        assert len(seen) == 4
        np.testing.assert_array_equal(seen[0][0], x0.values)
        np.testing.assert_array_equal(seen[0][1], x1.values)
        # step 2 conditions on (given frame, prediction 1)
        np.testing.assert_array_equal(seen[1][0], x1.values)
        np.testing.assert_array_equal(seen[1][1], traj[0].values)
        # steps 3 and 4 condition on the previous two predictions
        for k in (2, 3):
            np.testing.assert_array_equal(seen[k][0], traj[k - 2].values)
            np.testing.assert_array_equal(seen[k][1], traj[k - 1].values)

    def test_deterministic(self, small_series, norm_stats):
        model = _ShiftModel(h=8, w=16, c=2)
        model.stats = norm_stats
        import codicast.forecast as fc
        original = fc.sample
        fc.sample = lambda m, p, c, s: _shift_sample(m, p, c, s)
        try:
            t1 = rollout(model, small_series.frames[0], small_series.frames[1], 3, seed=9)
            t2 = rollout(model, small_series.frames[0], small_series.frames[1], 3, seed=9)
        finally:
            fc.sample = original
        for a, b in zip(t1, t2):
            np.testing.assert_array_equal(a.values, b.values)

    def test_rejects_bad_steps(self, shift_model):
        x = _field(rng.standard_normal((4, 8, 1)))
        with pytest.raises(ShapeError):
            rollout(shift_model, x, x, steps=0, seed=1)


class TestEnsemble:
    def _noisy_model(self, monkeypatch):
        model = _ShiftModel(noise_scale=0.1)
        monkeypatch.setattr("codicast.forecast.sample",
                            lambda m, p, c, s: _shift_sample(m, p, c, s))
        return model

    def test_single_member_equals_rollout(self, monkeypatch):
        model = self._noisy_model(monkeypatch)
        x0 = _field(rng.standard_normal((4, 8, 1)))
        x1 = _field(rng.standard_normal((4, 8, 1)))
        ens = ensemble_forecast(model, x0, x1, steps=2, members=1, base_seed=3)
        solo = rollout(model, x0, x1, steps=2, seed=derive_seed(3, 0))
        for a, b in zip(ens.members[0], solo):
            np.testing.assert_array_equal(a.values, b.values)

    def test_members_differ_and_seeds_injective(self, monkeypatch):
        model = self._noisy_model(monkeypatch)
        x0 = _field(rng.standard_normal((4, 8, 1)))
        x1 = _field(rng.standard_normal((4, 8, 1)))
        ens = ensemble_forecast(model, x0, x1, steps=1, members=5, base_seed=3)
        assert len(set(ens.member_seeds)) == 5
        vals = ens.values()
        assert np.max(np.abs(vals[0] - vals[1])) > 0

    def test_serial_matches_concurrent_bitwise(self, monkeypatch):
        model = self._noisy_model(monkeypatch)
        x0 = _field(rng.standard_normal((4, 8, 1)))
        x1 = _field(rng.standard_normal((4, 8, 1)))
        serial = ensemble_forecast(model, x0, x1, steps=3, members=5, base_seed=11, workers=0)
        threaded = ensemble_forecast(model, x0, x1, steps=3, members=5, base_seed=11, workers=4)
        assert np.array_equal(serial.values(), threaded.values())
        assert serial.member_seeds == threaded.member_seeds

    def test_lead_hours_from_step_hours(self, monkeypatch):
        model = self._noisy_model(monkeypatch)
        x = _field(rng.standard_normal((4, 8, 1)))
        ens = ensemble_forecast(model, x, x, steps=3, members=1, base_seed=0)
        assert ens.lead_hours == (6.0, 12.0, 18.0)


class TestUncertainty:
    def _ensemble_from_arrays(self, member_arrays, lead_hours=(6.0,)):
        members = tuple(tuple(_field(a) for a in member) for member in member_arrays)
        return ForecastEnsemble(members=members,
                                member_seeds=tuple(range(len(members))),
                                lead_hours=lead_hours)

    def test_single_member_exactly_zero_std(self):
        a = rng.standard_normal((4, 8, 1))
        bands = uncertainty(self._ensemble_from_arrays([[a]]))
        np.testing.assert_array_equal(bands[0].std.values, 0.0)
        np.testing.assert_array_equal(bands[0].mean.values, a)

    def test_identical_members_zero_std(self):
        a = rng.standard_normal((4, 8, 1))
        bands = uncertainty(self._ensemble_from_arrays([[a], [a], [a]]))
        # mean of three identical fields rounds at the last bit, so the
        # spread is zero only to floating precision
        np.testing.assert_allclose(bands[0].std.values, 0.0, atol=1e-12)
        np.testing.assert_allclose(bands[0].mean.values, a, atol=1e-12)

    def test_two_point_population_std(self):
        a = np.zeros((4, 8, 1))
        b = np.full((4, 8, 1), 2.0)
        bands = uncertainty(self._ensemble_from_arrays([[a], [b]]))
        np.testing.assert_allclose(bands[0].mean.values, 1.0)
        np.testing.assert_allclose(bands[0].std.values, 1.0)

    def test_brute_force_recomputation(self):
        arrays = [[rng.standard_normal((4, 8, 2)) for _ in range(3)] for _ in range(2)]
        ens = self._ensemble_from_arrays(arrays, lead_hours=(6.0, 12.0, 18.0))
        bands = uncertainty(ens)
        for t in range(3):
            stack = np.stack([arrays[m][t] for m in range(2)])
            np.testing.assert_allclose(bands[t].mean.values, stack.mean(axis=0), atol=1e-10)
            np.testing.assert_allclose(bands[t].std.values, stack.std(axis=0), atol=1e-10)

    def test_member_permutation_invariant(self):
        arrays = [[rng.standard_normal((4, 8, 1))] for _ in range(4)]
        fwd = uncertainty(self._ensemble_from_arrays(arrays))
        rev = uncertainty(self._ensemble_from_arrays(arrays[::-1]))
        np.testing.assert_allclose(fwd[0].std.values, rev[0].std.values, atol=1e-12)

    def test_coverage_degenerate_and_basic(self):
        a = rng.standard_normal((4, 8, 1))
        ens = self._ensemble_from_arrays([[a], [a]])
        exact = coverage(ens, a[None], 1.0)
        np.testing.assert_array_equal(exact, 1.0)   # truth == mean everywhere
        off = coverage(ens, a[None] + 1.0, 1.0)
        np.testing.assert_array_equal(off, 0.0)

    def test_coverage_counts_fraction(self):
        a = np.zeros((1, 2, 2, 1))
        b = np.full((1, 2, 2, 1), 2.0)
        members = tuple(tuple(_field(m[t]) for t in range(1)) for m in (a, b))
        ens = ForecastEnsemble(members=members, member_seeds=(0, 1), lead_hours=(6.0,))
        truth = np.zeros((1, 2, 2, 1))
        truth[0, 0, 0, 0] = 1.0   # inside mean 1 +/- 1
        truth[0, 0, 1, 0] = 5.0   # outside
        cov = coverage(ens, truth, 1.0)
        assert cov[0, 0] == pytest.approx(3 / 4)

    def test_coverage_shape_mismatch(self):
        a = rng.standard_normal((4, 8, 1))
        ens = self._ensemble_from_arrays([[a]])
        with pytest.raises(ShapeError):
            coverage(ens, np.zeros((2, 4, 8, 1)), 1.0)
