import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otfsftn.errors import ConfigurationError
from otfsftn.mapping import BITS_PER_SYMBOL, bits_per_symbol, demap, map_bits, random_symbols

CONSTELLATIONS = list(BITS_PER_SYMBOL)


def all_points(name):
    b = bits_per_symbol(name)
    labels = (np.arange(2**b)[:, None] >> np.arange(b - 1, -1, -1)) & 1
    return labels, map_bits(labels.reshape(-1), name)


@pytest.mark.parametrize("name", CONSTELLATIONS)
def test_unit_energy(name):
    _, pts = all_points(name)
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("name", CONSTELLATIONS)
def test_exact_points_decode(name):
    labels, pts = all_points(name)
    np.testing.assert_array_equal(demap(pts, name), labels.reshape(-1))


@pytest.mark.parametrize("name", ["QPSK", "16QAM", "64QAM"])
def test_gray_neighbours_differ_in_one_bit(name):
    labels, pts = all_points(name)
    d = np.abs(pts[:, None] - pts[None, :])
    dmin = d[d > 0].min()
    for i, j in zip(*np.nonzero(np.isclose(d, dmin))):
        assert np.sum(labels[i] != labels[j]) == 1


def test_bpsk_convention():
    sx = 1.7
    np.testing.assert_array_equal(demap(np.array([sx, -sx]), "BPSK", sigma_x=sx), [0, 1])
    np.testing.assert_array_equal(map_bits(np.array([0, 1]), "BPSK"), [1, -1])


def test_16qam_corner_perturbation():
    labels, pts = all_points("16QAM")
    corner = np.argmax(pts.real + pts.imag)
    dmin = 2 / np.sqrt(10)
    for angle in np.linspace(0, 2 * np.pi, 16, endpoint=False):
        x = pts[corner] + 0.4 * dmin * np.exp(1j * angle)
        np.testing.assert_array_equal(demap(np.array([x]), "16QAM"), labels[corner])


@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(CONSTELLATIONS), scale=st.floats(0.1, 10))
def test_round_trip(seed, name, scale):
    bits, syms = random_symbols(50, name, np.random.default_rng(seed))
    np.testing.assert_array_equal(demap(scale * syms, name, sigma_x=scale), bits)


def test_unknown():
    with pytest.raises(ConfigurationError):
        bits_per_symbol("8PSK")
