import numpy as np
import pytest
from scipy import special

from qcomb.eo_comb import (
    CombSpectrum,
    ModulatorSettings,
    apply_to_photon,
    bessel_jn,
    bessel_jn_array,
    modulate,
    optimize_depth_for_first_order,
)


def fourier_sidebands(beta: float, phi_m: float, n_max: int, samples: int = 4096):
    """Independent oracle: numerical Fourier decomposition of the modulated
    field exp(i beta cos(2 pi f_m t + phi_m)) over one RF period."""
    k = np.arange(samples)
    theta = 2.0 * np.pi * k / samples
    field = np.exp(1j * beta * np.cos(theta + phi_m))
    coeffs = {}
    for n in range(-n_max, n_max + 1):
        coeffs[n] = np.mean(field * np.exp(-1j * n * theta))
    return coeffs


class TestBessel:
    @pytest.mark.parametrize("x", [0.0, 1e-9, 0.3, 0.5, 1.0, 1.8412, 2.405, 3.0, 7.5])
    def test_against_scipy(self, x):
        ours = bessel_jn_array(12, x)
        theirs = special.jv(np.arange(13), x)
        np.testing.assert_allclose(ours, theirs, atol=1e-12)

    @pytest.mark.parametrize("n", [-5, -2, -1, 0, 1, 4])
    def test_negative_orders(self, n):
        assert bessel_jn(n, 1.7) == pytest.approx(float(special.jv(n, 1.7)), abs=1e-12)

    def test_first_order_maximum_value(self):
        # |J1|^2 at its first maximum
        assert bessel_jn(1, 1.8412) ** 2 == pytest.approx(0.3386, abs=1e-4)


class TestModulatorSettings:
    def test_truncation_guard(self):
        with pytest.raises(ValueError, match="max_order"):
            ModulatorSettings(mod_freq=18.0, mod_depth=3.0, max_order=2)

    def test_default_order_covers_depth_two(self):
        s = ModulatorSettings(mod_freq=18.0, mod_depth=2.0)
        assert s.truncated_power() >= 1.0 - 1e-9

    def test_invalid_fields(self):
        with pytest.raises(ValueError):
            ModulatorSettings(mod_freq=0.0, mod_depth=1.0)
        with pytest.raises(ValueError):
            ModulatorSettings(mod_freq=18.0, mod_depth=-0.1)
        with pytest.raises(ValueError):
            ModulatorSettings(mod_freq=18.0, mod_depth=1.0, max_order=0)


class TestModulate:
    def test_zero_depth_single_line(self):
        comb = modulate(193000.0, ModulatorSettings(mod_freq=18.0, mod_depth=0.0))
        assert len(comb.lines) == 1
        freq, amp = comb.lines[0]
        assert freq == 193000.0
        assert amp == pytest.approx(1.0)

    def test_first_order_amplitude_and_phase(self):
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.8412, mod_phase=0.0)
        comb = modulate(193000.0, s)
        amp = comb.amplitude_at(193018.0)
        assert abs(amp) ** 2 == pytest.approx(0.3386, abs=1e-4)
        assert np.angle(amp) == pytest.approx(np.pi / 2.0, abs=1e-12)

    def test_plus_minus_one_phase_difference(self):
        # amplitude phases differ by 2 phi_m between +1 and -1 sidebands
        phi = np.pi / 4.0
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.0, mod_phase=phi)
        comb = modulate(0.0, s)
        diff = np.angle(comb.amplitude_at(18.0)) - np.angle(comb.amplitude_at(-18.0))
        assert (diff - 2.0 * phi) % (2.0 * np.pi) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 1.841, 3.0])
    @pytest.mark.parametrize("phi", [0.0, np.pi / 7.0, np.pi / 2.0])
    def test_against_fourier_oracle(self, beta, phi):
        s = ModulatorSettings(mod_freq=10.0, mod_depth=beta, mod_phase=phi, max_order=12)
        comb = modulate(0.0, s)
        oracle = fourier_sidebands(beta, phi, 5)
        for n in range(-5, 6):
            assert abs(comb.amplitude_at(10.0 * n) - oracle[n]) < 1e-9

    @pytest.mark.parametrize("beta", np.linspace(0.1, 3.0, 7))
    @pytest.mark.parametrize("phi", [0.0, np.pi / 7.0, np.pi / 2.0])
    def test_phase_law(self, beta, phi):
        # every line equals J_n(beta) e^{i n (pi/2 + phi_m)} including sign
        s = ModulatorSettings(mod_freq=10.0, mod_depth=beta, mod_phase=phi, max_order=10)
        comb = modulate(0.0, s)
        for n in range(-5, 6):
            expect = special.jv(n, beta) * np.exp(1j * n * (np.pi / 2.0 + phi))
            assert abs(comb.amplitude_at(10.0 * n) - expect) < 1e-12

    def test_carrier_shift_covariance(self):
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.3, mod_phase=0.4)
        a = modulate(193000.0, s)
        b = modulate(193250.0, s)
        for (fa, aa), (fb, ab) in zip(a.lines, b.lines):
            assert fb - fa == pytest.approx(250.0)
            assert ab == pytest.approx(aa)

    def test_power_conservation(self):
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.8, max_order=10)
        comb = modulate(0.0, s)
        assert comb.total_power == pytest.approx(1.0, abs=1e-9)
        assert comb.total_power <= 1.0 + 1e-12


class TestApplyToPhoton:
    def test_identity_at_zero_depth(self):
        out = apply_to_photon(193000.0, ModulatorSettings(mod_freq=18.0, mod_depth=0.0))
        assert out == [(193000.0, 1.0 + 0.0j)]

    def test_midpoint_relative_phase(self):
        # two bins separated by 2 f_m meet at the midpoint with phase 2 phi_m
        phi = 0.37
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.2, mod_phase=phi)
        upper = dict(apply_to_photon(+18.0, s))  # reaches 0 via n = -1
        lower = dict(apply_to_photon(-18.0, s))  # reaches 0 via n = +1
        ratio = lower[0.0] / upper[0.0]
        assert np.angle(ratio) == pytest.approx(2.0 * phi, abs=1e-12)

    def test_unitarity(self):
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.9, max_order=10)
        out = apply_to_photon(0.0, s)
        assert sum(abs(a) ** 2 for _, a in out) == pytest.approx(1.0, abs=1e-9)

    def test_matches_modulate_coefficients(self):
        s = ModulatorSettings(mod_freq=18.0, mod_depth=1.5, mod_phase=0.7)
        photon = dict(apply_to_photon(100.0, s))
        comb = modulate(100.0, s)
        for f, a in comb.lines:
            assert photon[f] == pytest.approx(a)


class TestOptimizeDepth:
    def test_finds_first_order_maximum(self):
        # dense-grid oracle
        grid = np.linspace(0.0, 3.0, 300_001)
        oracle = grid[np.argmax(special.jv(1, grid) ** 2)]
        beta = optimize_depth_for_first_order((0.0, 3.0))
        assert beta == pytest.approx(oracle, abs=1e-3)
        assert beta == pytest.approx(1.8412, abs=1e-3)

    def test_degenerate_bracket(self):
        assert optimize_depth_for_first_order((0.0, 0.0)) == 0.0

    def test_local_maximum_property(self):
        beta = optimize_depth_for_first_order()
        assert bessel_jn(1, beta) ** 2 > bessel_jn(1, beta + 0.2) ** 2
        assert bessel_jn(1, beta) ** 2 > bessel_jn(1, beta - 0.2) ** 2


class TestCombSpectrum:
    def test_duplicate_frequencies_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            CombSpectrum(lines=((0.0, 0.5 + 0j), (0.0, 0.5 + 0j)), source_carrier=0.0)

    def test_superunity_power_rejected(self):
        with pytest.raises(ValueError, match="power"):
            CombSpectrum(lines=((0.0, 1.0 + 0j), (18.0, 0.5 + 0j)), source_carrier=0.0)

    def test_csv_roundtrip_columns(self, tmp_path):
        comb = modulate(193000.0, ModulatorSettings(mod_freq=12.5, mod_depth=1.2))
        path = tmp_path / "comb.csv"
        comb.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "freq_ghz,re,im,power_db"
        rows = path.read_text().splitlines()[1:]
        assert len(rows) == len(comb.lines)
