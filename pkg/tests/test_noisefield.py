import numpy as np
import pytest

from flameforge import noisefield
from flameforge.noisefield import (
    PerlinParams,
    domain_warp,
    fbm,
    octave_seed,
    perlin2,
    render_field,
)


def single_octave(seed=42, frequency=4.0, **kw):
    return PerlinParams(seed=seed, frequency=frequency, octaves=1, **kw)


class TestPerlin2:
    def test_zero_at_lattice_nodes(self):
        p = single_octave(frequency=4.0)
        # scaled coordinates (x*4, y*4) integer -> lattice node
        for x, y in [(0.0, 0.0), (0.25, 0.5), (1.75, -0.5), (3.0, 2.25)]:
            assert abs(perlin2(x, y, p)) <= 1e-12

    def test_deterministic(self):
        p = single_octave(seed=99)
        assert perlin2(0.37, 0.81, p) == perlin2(0.37, 0.81, p)

    def test_range_and_nondegenerate_sweep(self):
        p = single_octave(seed=42)
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, 10**6)
        y = rng.uniform(0, 1, 10**6)
        v = perlin2(x, y, p)
        assert v.min() >= -1.0 and v.max() <= 1.0
        assert v.min() < -0.4 and v.max() > 0.4

    def test_scalar_in_scalar_out(self):
        assert isinstance(perlin2(0.3, 0.4, single_octave()), float)

    def test_seed_decorrelation(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 16, 10**4)
        y = rng.uniform(0, 16, 10**4)
        a = perlin2(x, y, single_octave(seed=1))
        b = perlin2(x, y, single_octave(seed=2))
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_lipschitz_smoothness_proxy(self):
        p = single_octave(seed=5, frequency=4.0)
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 4, 10**4)
        y = rng.uniform(0, 4, 10**4)
        h = 1e-4
        diff = np.abs(perlin2(x + h, y, p) - perlin2(x, y, p))
        assert diff.max() <= 16 * p.frequency * h

    @pytest.mark.parametrize(
        "kw",
        [
            {"frequency": 0.0},
            {"frequency": -1.0},
            {"octaves": 0},
            {"lacunarity": 1.0},
            {"persistence": 0.0},
            {"persistence": 1.5},
            {"warp_amplitude": -0.1},
        ],
    )
    def test_param_validation(self, kw):
        with pytest.raises(ValueError):
            PerlinParams(seed=0, **kw)


class TestFbm:
    def test_single_octave_degenerates_to_perlin(self):
        p = PerlinParams(seed=7, frequency=3.0, octaves=1)
        rng = np.random.default_rng(3)
        x = rng.uniform(-5, 5, 10**4)
        y = rng.uniform(-5, 5, 10**4)
        assert np.max(np.abs(fbm(x, y, p) - perlin2(x, y, p))) <= 1e-12

    def test_normalization_identity_with_stub_field(self, monkeypatch):
        # every octave contributing exactly 1 must sum to exactly 1
        monkeypatch.setattr(
            noisefield, "_perlin_raw", lambda sx, sy, seed: np.ones(np.shape(sx))
        )
        p = PerlinParams(seed=0, octaves=4, persistence=0.5)
        assert fbm(np.array([0.3]), np.array([0.7]), p)[0] == pytest.approx(1.0, abs=1e-15)

    def test_against_direct_sum_oracle(self):
        p = PerlinParams(seed=11, frequency=2.0, octaves=3, lacunarity=2.0, persistence=0.5)
        rng = np.random.default_rng(4)
        pts = rng.uniform(-3, 3, size=(100, 2))
        for x, y in pts:
            total, norm = 0.0, 0.0
            for i in range(p.octaves):
                octp = PerlinParams(
                    seed=octave_seed(p.seed, i), frequency=p.frequency, octaves=1
                )
                total += p.persistence**i * perlin2(
                    x * p.lacunarity**i, y * p.lacunarity**i, octp
                )
                norm += p.persistence**i
            assert fbm(x, y, p) == pytest.approx(total / norm, abs=1e-12)

    def test_range_bound(self):
        p = PerlinParams(seed=8, octaves=5)
        rng = np.random.default_rng(5)
        v = fbm(rng.uniform(0, 8, 10**5), rng.uniform(0, 8, 10**5), p)
        assert np.abs(v).max() <= 1.0


class TestDomainWarp:
    def test_zero_amplitude_is_identity(self):
        p = PerlinParams(seed=13, octaves=2, warp_amplitude=0.0)
        field = lambda x, y: fbm(x, y, p)
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 4, 1000)
        y = rng.uniform(0, 4, 1000)
        assert np.array_equal(domain_warp(field, x, y, p), field(x, y))

    def test_warp_changes_field_almost_everywhere(self):
        base = PerlinParams(seed=13, octaves=2)
        warped = PerlinParams(seed=13, octaves=2, warp_amplitude=8.0)
        field = lambda x, y: fbm(x, y, base)
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 4, 10**4)
        y = rng.uniform(0, 4, 10**4)
        frac = np.mean(domain_warp(field, x, y, warped) != field(x, y))
        assert frac > 0.99

    def test_distinct_offsets_give_distinct_fields(self):
        a = PerlinParams(seed=13, octaves=2, warp_amplitude=8.0)
        b = PerlinParams(
            seed=13,
            octaves=2,
            warp_amplitude=8.0,
            warp_offsets=((101.0, -3.5), (42.0, 57.0)),
        )
        field = lambda x, y: fbm(x, y, a)
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 4, 10**4)
        y = rng.uniform(0, 4, 10**4)
        frac = np.mean(domain_warp(field, x, y, a) != domain_warp(field, x, y, b))
        assert frac > 0.99


class TestRenderField:
    def test_single_pixel(self):
        f = render_field(1, 1, PerlinParams(seed=1))
        assert f.values.shape == (1, 1) and np.isfinite(f.values).all()

    def test_zero_area_rejected(self):
        with pytest.raises(ValueError):
            render_field(0, 64, PerlinParams(seed=1))

    def test_deterministic_rendering(self):
        p = PerlinParams(seed=21, warp_amplitude=12.0)
        a = render_field(64, 64, p, warped=True)
        b = render_field(64, 64, p, warped=True)
        assert np.array_equal(a.values, b.values)

    def test_matches_per_pixel_oracle(self):
        p = PerlinParams(seed=22, octaves=3)
        f = render_field(256, 256, p)
        rng = np.random.default_rng(9)
        for _ in range(300):
            row = int(rng.integers(0, 256))
            col = int(rng.integers(0, 256))
            expect = fbm((col + 0.5) / 256, (row + 0.5) / 256, p)
            assert f.values[row, col] == pytest.approx(expect, abs=1e-12)
