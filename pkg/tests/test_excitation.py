import math

import numpy as np
import pytest

from omas_topology.excitation import ExcitationConfig, ExcitationError, build_excitation


def _distinct(exc):
    return len(np.unique(exc.frequencies))


def test_order_eight_has_four_frequencies():
    assert _distinct(build_excitation(8, ExcitationConfig())) >= 4


def test_order_one_has_a_frequency():
    assert _distinct(build_excitation(1, ExcitationConfig())) >= 1


def test_default_frequencies():
    exc = build_excitation(10, ExcitationConfig())
    assert np.allclose(exc.frequencies, [0.3, 0.75, 1.2, 1.65, 2.1])


def test_too_few_frequencies():
    with pytest.raises(ExcitationError):
        build_excitation(10, ExcitationConfig(frequencies=(1.0, 2.0)))


def test_min_order_override():
    exc = build_excitation(10, ExcitationConfig(frequencies=(1.0, 2.0), min_order=4))
    assert _distinct(exc) == 2


@pytest.mark.parametrize(
    "cfg",
    [
        ExcitationConfig(frequencies=(1.0, 1.0)),
        ExcitationConfig(frequencies=(1.0, -2.0)),
        ExcitationConfig(frequencies=(1.0,), amplitudes=(1.0, 2.0)),
        ExcitationConfig(frequencies=(1.0,), amplitudes=(0.0,)),
    ],
)
def test_bad_configs(cfg):
    with pytest.raises(ExcitationError):
        build_excitation(1, cfg)


def test_signal_bounded_by_amplitude_sum():
    exc = build_excitation(6, ExcitationConfig(amplitudes=(0.5, 1.0, 2.0), seed=3))
    t = np.linspace(0, 200, 20001)
    assert np.max(np.abs(exc.values(t, range(6)))) <= exc.bound() + 1e-12


def test_fft_shows_configured_frequencies():
    # on-bin frequencies for a 100 s window: omega = 2 pi k / 100
    bins = [3, 7, 12, 20]
    freqs = tuple(2 * math.pi * k / 100.0 for k in bins)
    exc = build_excitation(8, ExcitationConfig(frequencies=freqs, amplitudes=(1.0, 0.5, 2.0, 1.5), seed=9))
    t = np.arange(100_000) / 1000.0
    u = exc.values(t, range(8))
    amp = np.abs(np.fft.rfft(u, axis=0)) / len(t)
    power = amp.max(axis=1)
    peaks = set(np.nonzero(power > 1e-3 * power.max())[0])
    assert peaks == set(bins)


def test_auto_frequencies_visible_in_spectrum():
    exc = build_excitation(8, ExcitationConfig(seed=2))
    t = np.arange(100_000) / 1000.0
    u = exc.values(t, [0])[:, 0]
    amp = np.abs(np.fft.rfft(u))
    omega = 2 * math.pi * np.fft.rfftfreq(len(t), d=1e-3)
    top = omega[np.argsort(amp)[::-1]]
    for w in exc.frequencies:
        assert np.min(np.abs(top[:12] - w)) <= 2 * math.pi / 100.0


def test_phases_are_reproducible_and_pinnable():
    cfg = ExcitationConfig(seed=4, phases={3: (0.0, 0.0, 0.0)})
    a = build_excitation(6, cfg)
    b = build_excitation(6, cfg)
    assert np.array_equal(a.phase_matrix([0, 1]), b.phase_matrix([0, 1]))
    assert np.array_equal(a.phases_for(3), np.zeros(3))
    assert np.all(a.values(0.0, [3]) == 0.0)


def test_node_subset_consistency():
    exc = build_excitation(4, ExcitationConfig(seed=1))
    t = np.linspace(0, 5, 11)
    full = exc.values(t, [0, 1, 2, 3])
    assert np.array_equal(exc.values(t, [2]), full[:, [2]])
    assert np.allclose(exc.for_nodes([1, 3])(t), full[:, [1, 3]])
