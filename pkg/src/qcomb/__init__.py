"""qcomb: simulation and analysis toolkit for multiplexed microresonator
photon-pair sources.

The package synthesizes time-tagged single-photon detection streams from a
physical model of a microring-resonator array (spontaneous four-wave mixing
pair sources pumped by an electro-optic comb) and provides the photon-counting
analyses used to characterize such sources: coincidence histograms and CAR,
time-bin (Franson) visibility, heralded g2, joint spectral intensity scans,
frequency-bin qubit mixing, and maximum-likelihood two-qubit state tomography.
"""

__version__ = "0.1.0"

from qcomb.core_model import (
    ArrayConfig,
    ResonatorSpec,
    build_detuned_array,
    lorentzian_transmission,
    pair_rate,
)
from qcomb.eo_comb import (
    CombSpectrum,
    ModulatorSettings,
    apply_to_photon,
    modulate,
    optimize_depth_for_first_order,
)
from qcomb.tags import TagStream, read_qtag, write_qtag
from qcomb.event_synth import (
    FransonSettings,
    SynthScenario,
    synthesize,
    synthesize_franson,
    synthesize_hbt,
)
from qcomb.coincidence import (
    CoincidenceHistogram,
    FitFailure,
    PairMetrics,
    PeakFit,
    fit_gaussian,
    histogram,
    metrics,
    window_sweep,
)
from qcomb.entanglement import (
    FringeScan,
    VisibilityResult,
    fit_visibility,
    franson_analyze,
    g2_heralded,
)
from qcomb.freqbin import (
    BinState,
    FilterBank,
    jsi_scan,
    mix_and_project,
    two_ring_state,
)
from qcomb.tomography import (
    DensityMatrix,
    ProjectionSetting,
    background_correct,
    expected_counts,
    fidelity,
    mle_reconstruct,
    projection_vector,
)
