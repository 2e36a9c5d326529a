import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisepair.lattice import (
    FrequencyGrid,
    LatentGrid,
    fft2,
    gaussian_response,
    hadamard,
    ifft2,
    make_lpf,
)


def rand_grid(seed, c, h, w):
    return LatentGrid(np.random.default_rng(seed).standard_normal((c, h, w)))


class TestLatentGrid:
    def test_rejects_nan(self):
        bad = np.ones((1, 4, 4))
        bad[0, 1, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            LatentGrid(bad)

    def test_rejects_inf(self):
        bad = np.ones((1, 4, 4))
        bad[0, 0, 0] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            LatentGrid(bad)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError, match="C x H x W"):
            LatentGrid(np.ones((4, 4)))


class TestFFT:
    def test_constant_grid_is_dc_only(self):
        spec = fft2(LatentGrid(np.ones((1, 4, 4))))
        # DC sits at the center after the shift
        assert spec.data[0, 2, 2] == pytest.approx(16.0)
        rest = spec.data.copy()
        rest[0, 2, 2] = 0.0
        assert np.abs(rest).max() == pytest.approx(0.0, abs=1e-12)

    def test_impulse_has_flat_spectrum(self):
        grid = np.zeros((1, 4, 4))
        grid[0, 0, 0] = 1.0
        spec = fft2(LatentGrid(grid))
        assert np.abs(np.abs(spec.data) - 1.0).max() < 1e-12

    def test_parseval_direct_summation(self):
        """Oracle: both energy sums computed by direct summation."""
        x = rand_grid(3, 1, 8, 8)
        spec = fft2(x)
        spatial = float(np.sum(np.abs(x.data) ** 2))
        freq = float(np.sum(np.abs(spec.data) ** 2)) / (8 * 8)
        assert abs(spatial - freq) / spatial < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        c=st.integers(1, 4),
        h=st.sampled_from([4, 8, 16, 64]),
        w=st.sampled_from([4, 8, 16, 64]),
    )
    def test_parseval_property(self, seed, c, h, w):
        x = rand_grid(seed, c, h, w)
        spec = fft2(x)
        spatial = float(np.sum(np.abs(x.data) ** 2))
        freq = float(np.sum(np.abs(spec.data) ** 2)) / (h * w)
        assert abs(spatial - freq) / spatial < 1e-10

    def test_roundtrip_identity(self):
        x = rand_grid(11, 1, 8, 8)
        back = ifft2(fft2(x))
        assert np.abs(back.data - x.data).max() < 1e-10

    def test_dc_only_gives_constant(self):
        spec = np.zeros((1, 4, 4), dtype=complex)
        spec[0, 2, 2] = 16.0
        out = ifft2(FrequencyGrid(spec))
        assert np.abs(out.data - 1.0).max() < 1e-12

    def test_zero_spectrum_gives_zero(self):
        out = ifft2(FrequencyGrid(np.zeros((1, 4, 4), dtype=complex)))
        assert np.abs(out.data).max() == 0.0

    def test_broken_symmetry_raises(self):
        spec = fft2(rand_grid(5, 1, 8, 8)).data
        spec[0, 1, 2] += 0.5j * np.abs(spec).max()  # break conjugate symmetry
        with pytest.raises(ValueError, match="symmetry"):
            ifft2(FrequencyGrid(spec))

    def test_uncentered_layout_rejected(self):
        spec = FrequencyGrid(np.zeros((1, 4, 4), dtype=complex), dc_centered=False)
        with pytest.raises(ValueError, match="DC-centered"):
            ifft2(spec)


class TestLowPassFilter:
    def test_dc_passthrough(self):
        lpf = make_lpf(16, 16, 0.3)
        assert lpf.response[8, 8] == pytest.approx(1.0)
        assert lpf.response_at(0.0) == pytest.approx(1.0)

    def test_half_power_at_stop(self):
        assert abs(make_lpf(16, 16, 0.3).response_at(0.3) - 0.5) < 1e-9

    def test_double_stop_closed_form(self):
        # H(2 * stop) = exp(-4 ln 2) = 1/16
        assert make_lpf(16, 16, 0.3).response_at(0.6) == pytest.approx(0.0625, abs=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
    def test_stop_frequency_range(self, bad):
        with pytest.raises(ValueError):
            make_lpf(8, 8, bad)

    def test_radially_monotone(self):
        radii = np.linspace(0, np.sqrt(2), 200)
        values = gaussian_response(radii, 0.3)
        assert np.all(np.diff(values) <= 0)

    @pytest.mark.parametrize("h,w", [(9, 9), (8, 8), (9, 8), (16, 12)])
    def test_rotation_symmetry_about_dc(self, h, w):
        resp = make_lpf(h, w, 0.3).response
        # even axes have an unpaired Nyquist row/col at index 0
        core = resp[1 if h % 2 == 0 else 0 :, 1 if w % 2 == 0 else 0 :]
        assert np.abs(core - core[::-1, ::-1]).max() < 1e-12

    def test_response_in_unit_interval(self):
        resp = make_lpf(32, 32, 0.3).response
        assert resp.min() >= 0.0 and resp.max() <= 1.0


class TestHadamard:
    def test_all_ones_is_identity(self):
        spec = fft2(rand_grid(0, 2, 8, 8))
        out = hadamard(spec, np.ones((8, 8)))
        assert np.array_equal(out.data, spec.data)

    def test_all_zeros_kills_spectrum(self):
        spec = fft2(rand_grid(0, 2, 8, 8))
        assert np.abs(hadamard(spec, np.zeros((8, 8))).data).max() == 0.0

    def test_partition_of_unity(self):
        # bitwise equality is unattainable (each product rounds), so assert
        # at machine precision instead
        spec = fft2(rand_grid(9, 3, 16, 16))
        lpf = make_lpf(16, 16, 0.3)
        total = hadamard(spec, lpf).data + hadamard(spec, lpf.complement).data
        scale = np.abs(spec.data).max()
        assert np.abs(total - spec.data).max() < 1e-15 * scale

    def test_shape_mismatch_rejected(self):
        spec = fft2(rand_grid(0, 1, 8, 8))
        with pytest.raises(ValueError, match="shape"):
            hadamard(spec, np.ones((4, 4)))
