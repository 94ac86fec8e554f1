import numpy as np
import pytest
from hypothesis import given, strategies as st

from combnet import grid
from combnet.errors import ConfigurationError, DegeneratePairError, GridRangeError


def make_spec(**kw):
    defaults = dict(
        fsr_ghz=97.8,
        q_factor=3.1e5,
        linewidth_fwhm_mhz=649.0,
        pump_channel=grid.Channel(35),
        mode_count=129,
    )
    defaults.update(kw)
    return grid.ResonatorSpec(**defaults)


class TestChannel:
    def test_pump_channel_frequency_and_wavelength(self):
        ch = grid.Channel(35)
        assert ch.center_frequency_thz == pytest.approx(193.5)
        assert ch.center_wavelength_nm == pytest.approx(1549.32, abs=5e-3)

    def test_grid_origin(self):
        assert grid.channel_center_frequency(0) == pytest.approx(190.0)

    def test_channel_37_wavelength_from_lightspeed(self):
        ch = grid.Channel(37)
        assert ch.center_frequency_thz == pytest.approx(193.7)
        expected_nm = grid.C_VACUUM / 193.7e12 * 1e9
        assert ch.center_wavelength_nm == pytest.approx(expected_nm, rel=1e-12)
        assert expected_nm == pytest.approx(1547.72, abs=5e-3)

    def test_out_of_range_index_rejected(self):
        with pytest.raises(GridRangeError):
            grid.channel_center_frequency(101)
        with pytest.raises(GridRangeError):
            grid.Channel(-101)

    @given(st.integers(min_value=-100, max_value=100))
    def test_grid_round_trip(self, index):
        freq = grid.channel_center_frequency(index)
        assert grid.nearest_channel(freq)[0].index == index

    @given(st.integers(min_value=-100, max_value=100))
    def test_wavelength_frequency_product_is_lightspeed(self, index):
        ch = grid.Channel(index)
        product = ch.center_wavelength_nm * 1e-9 * ch.center_frequency_thz * 1e12
        assert product == pytest.approx(grid.C_VACUUM, rel=1e-6)


class TestConjugation:
    def test_paper_pairs(self):
        pump = grid.Channel(35)
        assert grid.conjugate_channel(grid.Channel(37), pump).index == 33
        assert grid.conjugate_channel(grid.Channel(42), pump).index == 28
        assert grid.conjugate_channel(grid.Channel(36), pump).index == 34

    def test_degenerate_rejected(self):
        with pytest.raises(DegeneratePairError):
            grid.conjugate_channel(grid.Channel(35), grid.Channel(35))

    @given(
        st.integers(min_value=-40, max_value=40),
        st.integers(min_value=-20, max_value=20),
    )
    def test_involution(self, sig, pump):
        if sig == pump:
            return
        p = grid.Channel(pump)
        s = grid.Channel(sig)
        assert grid.conjugate_channel(grid.conjugate_channel(s, p), p) == s


class TestResonatorSpec:
    def test_q_linewidth_consistency_enforced(self):
        with pytest.raises(ConfigurationError):
            make_spec(linewidth_fwhm_mhz=500.0)  # implies Q mismatch > 5%

    def test_unresolved_comb_rejected(self):
        with pytest.raises(ConfigurationError):
            make_spec(fsr_ghz=0.005, linewidth_fwhm_mhz=649.0)


class TestResonanceComb:
    def test_mode_count_and_channel_mapping(self):
        spec = make_spec()
        modes = grid.resonance_comb(spec)
        assert len(modes) == 129
        by_order = {m.order: m for m in modes}
        assert by_order[0].mapped_channel == grid.Channel(35)
        assert by_order[2].mapped_channel == grid.Channel(37)
        assert by_order[-2].mapped_channel == grid.Channel(33)

    def test_far_modes_unmapped_with_accumulated_walkoff(self):
        spec = make_spec()
        by_order = {m.order: m for m in grid.resonance_comb(spec)}
        # 97.8 GHz spacing walks off the 100 GHz grid by 2.2 GHz per mode
        assert by_order[11].mapped_channel is not None
        assert by_order[12].mapped_channel is None

    def test_minimal_comb(self):
        modes = grid.resonance_comb(make_spec(mode_count=3))
        assert [m.order for m in modes] == [-1, 0, 1]

    def test_commensurate_grid_maps_every_mode(self):
        spec = make_spec(fsr_ghz=100.0)
        assert all(m.mapped_channel for m in grid.resonance_comb(spec))

    def test_even_mode_count_rejected(self):
        with pytest.raises(ConfigurationError):
            grid.resonance_comb(make_spec(mode_count=4))

    def test_monotone_spacing(self):
        modes = grid.resonance_comb(make_spec())
        freqs = [m.center_frequency_thz for m in modes]
        diffs = np.diff(freqs)
        assert np.allclose(diffs, 97.8e-3)


class TestTransmission:
    def test_on_resonance_returns_extinction(self):
        spec = make_spec(extinction=0.022)
        assert grid.transmission(spec, 193.5) == pytest.approx(0.022, abs=1e-6)

    def test_midpoint_between_modes_near_unity(self):
        spec = make_spec()
        mid = 193.5 + 0.5 * 97.8e-3
        assert grid.transmission(spec, mid) > 0.99

    def test_half_width_gives_half_depth(self):
        spec = make_spec(extinction=0.022)
        fwhm_thz = 649e-6
        t = grid.transmission(spec, 193.5 + fwhm_thz / 2)
        assert t == pytest.approx(1 - (1 - 0.022) / 2, abs=1e-4)

    @given(st.floats(min_value=193.0, max_value=194.0))
    def test_bounded(self, freq):
        spec = make_spec(extinction=0.022)
        t = grid.transmission(spec, freq)
        assert 0.022 - 1e-9 <= t <= 1.0

    def test_spectrum_export_shape(self):
        spec = make_spec(mode_count=5)
        f, t = grid.transmission_spectrum(spec, 193.3, 193.7, 101)
        assert f.shape == t.shape == (101,)
