import numpy as np
import pytest

from qcomb.core_model import (
    ArrayConfig,
    ResonatorSpec,
    build_detuned_array,
    db_to_linear,
    lorentzian_transmission,
    pair_rate,
)


def make_ring(ring_id=1, pump=193000.0, fsr=650.0, q=3.1e5, eff=1.01, detuning=0.0):
    return ResonatorSpec.from_q(
        ring_id=ring_id,
        center_freq_pump=pump,
        fsr=fsr,
        q_loaded=q,
        detuning=detuning,
        pairgen_efficiency=eff,
    )


class TestResonatorSpec:
    def test_linewidth_consistency_enforced(self):
        ring = make_ring()
        with pytest.raises(ValueError, match="linewidth"):
            ResonatorSpec(
                ring_id=1,
                center_freq_pump=193000.0,
                center_freq_signal=193650.0,
                center_freq_idler=192350.0,
                fsr=650.0,
                q_loaded=3.1e5,
                linewidth_fwhm=ring.linewidth_fwhm * 1.01,
            )

    def test_energy_conservation_enforced(self):
        with pytest.raises(ValueError, match="symmetric"):
            ResonatorSpec(
                ring_id=1,
                center_freq_pump=193000.0,
                center_freq_signal=193650.0,
                center_freq_idler=192355.0,  # 5 GHz off, >> one linewidth
                fsr=650.0,
                q_loaded=3.1e5,
                linewidth_fwhm=1e3 * 193000.0 / 3.1e5,
            )

    @pytest.mark.parametrize("field,value", [("q_loaded", 0.0), ("fsr", -1.0)])
    def test_positivity(self, field, value):
        kwargs = dict(
            ring_id=1,
            center_freq_pump=193000.0,
            center_freq_signal=193650.0,
            center_freq_idler=192350.0,
            fsr=650.0,
            q_loaded=3.1e5,
            linewidth_fwhm=1e3 * 193000.0 / 3.1e5,
        )
        kwargs[field] = value
        with pytest.raises(ValueError):
            ResonatorSpec(**kwargs)


class TestArrayConfig:
    def test_duplicate_ids_rejected(self):
        ring = make_ring()
        with pytest.raises(ValueError, match="unique"):
            ArrayConfig(resonators=(ring, ring))

    def test_degenerate_detunings_are_legal(self):
        a = make_ring(ring_id=1, detuning=5.0)
        b = make_ring(ring_id=2, detuning=5.0)
        cfg = ArrayConfig(resonators=(a, b))
        assert len(cfg.resonators) == 2

    def test_efficiency_bounds(self):
        ring = make_ring()
        with pytest.raises(ValueError, match="efficiency"):
            ArrayConfig(resonators=(ring,), channel_efficiency_signal=0.0)
        with pytest.raises(ValueError, match="efficiency"):
            ArrayConfig(resonators=(ring,), channel_efficiency_idler=1.5)

    def test_size_cap(self):
        rings = tuple(make_ring(ring_id=i) for i in range(21))
        with pytest.raises(ValueError, match="at most"):
            ArrayConfig(resonators=rings)


class TestPairRate:
    def test_measured_efficiency_point(self):
        # ring 4 class device: 2.6 GHz/mW^2 at 1 mW
        ring = make_ring(eff=2.6)
        assert pair_rate(ring, 1.0) == pytest.approx(2.6e9)

    def test_zero_pump(self):
        assert pair_rate(make_ring(), 0.0) == 0.0

    def test_low_power_point(self):
        # 1.01 GHz/mW^2 at 67.3 uW: direct arithmetic 1.01e9 * 0.0673^2
        ring = make_ring(eff=1.01)
        assert pair_rate(ring, 0.0673) == pytest.approx(4.574e6, rel=1e-3)

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            pair_rate(make_ring(), -0.1)

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 2.0, 7.3])
    def test_exactly_quadratic(self, alpha):
        ring = make_ring(eff=0.77)
        base = pair_rate(ring, 0.04)
        assert pair_rate(ring, alpha * 0.04) == pytest.approx(alpha**2 * base, abs=1e-6)


class TestLorentzianTransmission:
    def test_on_resonance_full_dip(self):
        ring = make_ring()
        f0 = ring.center_freq_pump
        assert lorentzian_transmission(ring, f0, dip_depth=1.0) == pytest.approx(0.0)

    def test_half_width_point(self):
        ring = make_ring()
        f = ring.center_freq_pump + ring.linewidth_ghz / 2.0
        assert lorentzian_transmission(ring, f, dip_depth=1.0) == pytest.approx(0.5)

    def test_far_off_resonance(self):
        ring = make_ring()
        f = ring.center_freq_pump + 100.0 * ring.linewidth_ghz
        # closed form: 1 - 0.25/(100^2 + 0.25)
        assert lorentzian_transmission(ring, f, dip_depth=1.0) >= 0.9999

    def test_symmetric_about_resonance(self):
        ring = make_ring(detuning=3.2)
        f0 = ring.center_freq_pump + ring.detuning
        offsets = np.linspace(0.001, 0.4, 17)
        up = lorentzian_transmission(ring, f0 + offsets)
        down = lorentzian_transmission(ring, f0 - offsets)
        np.testing.assert_allclose(up, down, rtol=1e-12)

    def test_periodic_on_fsr_grid(self):
        ring = make_ring()
        f = ring.center_freq_pump + np.linspace(-0.3, 0.3, 11)
        np.testing.assert_allclose(
            lorentzian_transmission(ring, f),
            lorentzian_transmission(ring, f + ring.fsr),
            rtol=1e-9,
        )

    def test_nearest_resonance_selected(self):
        ring = make_ring()
        # one FSR away from the pump anchor there is another dip
        f1 = ring.center_freq_pump + ring.fsr
        assert lorentzian_transmission(ring, f1, dip_depth=1.0) == pytest.approx(0.0)


class TestBuildDetunedArray:
    def test_interleaving_grid(self):
        arr = build_detuned_array(make_ring(), 5, 12.5)
        detunings = [r.detuning for r in arr.resonators]
        assert detunings == [0.0, 12.5, 25.0, 37.5, 50.0]

    def test_single_ring(self):
        arr = build_detuned_array(make_ring(), 1, 99.0)
        assert len(arr.resonators) == 1
        assert arr.resonators[0].detuning == 0.0

    def test_two_ring_frequency_bin_offset(self):
        arr = build_detuned_array(make_ring(), 2, 36.0)
        assert arr.resonators[1].detuning == pytest.approx(36.0)

    def test_zero_rings_rejected(self):
        with pytest.raises(ValueError):
            build_detuned_array(make_ring(), 0, 12.5)

    def test_span_beyond_fsr_rejected(self):
        with pytest.raises(ValueError, match="FSR"):
            build_detuned_array(make_ring(fsr=650.0), 20, 35.0)

    def test_pump_frequencies_strictly_increasing(self):
        arr = build_detuned_array(make_ring(), 8, 25.0)
        pumps = [r.center_freq_pump + r.detuning for r in arr.resonators]
        assert all(b > a for a, b in zip(pumps, pumps[1:]))

    def test_per_ring_invariants_preserved(self):
        arr = build_detuned_array(make_ring(q=6.4e5, eff=2.6), 5, 50.0)
        for r in arr.resonators:
            assert r.q_loaded == 6.4e5
            assert r.pairgen_efficiency == 2.6


def test_db_to_linear():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(10.0) == pytest.approx(0.1)
    assert db_to_linear(26.0) == pytest.approx(10**-2.6)
