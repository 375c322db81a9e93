import numpy as np
import pytest

from rtbwt.filters import (
    FILTER_NAMES,
    analysis_step,
    make_filter,
    merge_odd_even,
    periodic_convolve,
    split_even_odd,
    synthesis_step,
)

S2 = np.sqrt(2.0)


def fft_circular(x, taps, m):
    """Independent route: fold taps onto length m and multiply spectra."""
    folded = np.zeros(m)
    for k, t in enumerate(taps):
        folded[k % m] += t
    return np.real(np.fft.ifft(np.fft.fft(x) * np.fft.fft(folded)))


def test_haar_taps():
    f = make_filter("haar")
    assert np.allclose(f.analysis_low, [1 / S2, 1 / S2], atol=1e-15)
    assert np.allclose(f.analysis_high, [1 / S2, -1 / S2], atol=1e-15)


@pytest.mark.parametrize("name", FILTER_NAMES)
def test_filter_invariants(name):
    f = make_filter(name)
    h, g = f.analysis_low, f.analysis_high
    L = h.size
    assert abs(h.sum() - S2) < 1e-12
    assert abs(g.sum()) < 1e-12
    k = np.arange(L)
    assert np.max(np.abs(g - (-1.0) ** k * h[::-1])) < 1e-12
    assert np.allclose(f.synthesis_low, 0.5 * h[::-1], atol=1e-15)
    assert np.allclose(f.synthesis_high, 0.5 * g[::-1], atol=1e-15)
    # orthonormality: sum_k h[k] h[k + 2j] = delta_j
    for j in range(0, L // 2):
        assert abs(np.dot(h[: L - 2 * j], h[2 * j:]) - (j == 0)) < 1e-12


def test_sym8_checksum_and_moments():
    f = make_filter("sym8")
    h, g = f.analysis_low, f.analysis_high
    assert h.size == 16
    assert abs(h.sum() - S2) < 1e-12
    assert abs(np.sum(h ** 2) - 1) < 1e-12
    # eight vanishing moments of the highpass
    k = np.arange(16.0)
    for p in range(8):
        assert abs(np.sum(k ** p * g)) < 1e-6 * 16.0 ** p


def test_unknown_filter():
    with pytest.raises(ValueError):
        make_filter("db4")


@pytest.mark.parametrize("name", FILTER_NAMES)
@pytest.mark.parametrize("m", [1, 2, 3, 8, 15, 16, 64])
def test_periodic_convolve_matches_fft(name, m, rng):
    f = make_filter(name)
    x = rng.normal(size=m)
    low, high = analysis_step(x, f)
    assert np.allclose(low, fft_circular(x, f.analysis_low, m), atol=1e-12)
    assert np.allclose(high, fft_circular(x, f.analysis_high, m), atol=1e-12)


def test_periodic_convolve_axis(rng):
    taps = np.array([0.5, -0.25, 2.0])
    x = rng.normal(size=(3, 10, 4))
    along = periodic_convolve(x, taps, axis=1)
    ref = np.swapaxes(periodic_convolve(np.swapaxes(x, 1, 2), taps), 1, 2)
    assert np.allclose(along, ref)


def test_constant_band_haar():
    low, high = analysis_step(np.full(8, 3.0), make_filter("haar"))
    assert np.allclose(low, 3.0 * S2)
    assert np.allclose(high, 0.0)


def test_impulse_haar_phase():
    x = np.zeros(8)
    x[0] = 1.0
    low, _ = analysis_step(x, make_filter("haar"))
    expected = np.zeros(8)
    expected[:2] = 1 / S2
    assert np.allclose(low, expected)


@pytest.mark.parametrize("name", FILTER_NAMES)
def test_frequency_response_power_complementary(name):
    f = make_filter(name)
    H = np.fft.fft(f.analysis_low, 256)
    G = np.fft.fft(f.analysis_high, 256)
    assert np.allclose(np.abs(H) ** 2 + np.abs(G) ** 2, 2.0, atol=1e-12)


@pytest.mark.parametrize("name", FILTER_NAMES)
def test_energy_identity(name, rng):
    f = make_filter(name)
    x = rng.normal(size=64)
    low, high = analysis_step(x, f)
    # oracle: Parseval on the FFT route
    X = np.fft.fft(x)
    H = np.fft.fft(f.analysis_low, 64)
    G = np.fft.fft(f.analysis_high, 64)
    oracle = np.sum(np.abs(X) ** 2 * (np.abs(H) ** 2 + np.abs(G) ** 2)) / 64
    total = np.sum(low ** 2) + np.sum(high ** 2)
    assert abs(total - oracle) <= 1e-9 * oracle
    assert abs(total - 2 * np.sum(x ** 2)) <= 1e-9 * total


def test_split_examples(rng):
    odd, even = split_even_odd(np.array(["a", "b", "c", "d"]))
    assert odd.tolist() == ["a", "c"] and even.tolist() == ["b", "d"]
    odd, even = split_even_odd(np.array([1.0, 2.0]))
    assert odd.tolist() == [1.0] and even.tolist() == [2.0]
    v = rng.normal(size=20)
    assert np.array_equal(merge_odd_even(*split_even_odd(v)), v)
    with pytest.raises(ValueError):
        split_even_odd(np.ones(3))
    with pytest.raises(ValueError):
        merge_odd_even(np.ones(2), np.ones(3))


@pytest.mark.parametrize("name", FILTER_NAMES)
@pytest.mark.parametrize("m", [2, 4, 6, 10, 16, 30, 128, 1024])
def test_single_step_perfect_reconstruction(name, m, rng):
    f = make_filter(name)
    x = rng.normal(size=m)
    low, high = analysis_step(x, f)
    y = synthesis_step(*split_even_odd(low), high, f)
    assert np.max(np.abs(y - x)) <= 1e-10


def test_single_step_pr_all_even_lengths(rng):
    for name in FILTER_NAMES:
        f = make_filter(name)
        for m in range(2, 1025, 2):
            x = rng.normal(size=m)
            low, high = analysis_step(x, f)
            assert np.max(np.abs(synthesis_step(*split_even_odd(low), high, f) - x)) <= 1e-10


def test_synthesis_of_constant_lowpass():
    f = make_filter("sym8")
    low, _ = analysis_step(np.full(16, 7.0), f)
    y = synthesis_step(*split_even_odd(low), np.zeros(16), f)
    assert np.allclose(y, 7.0, atol=1e-12)


def test_synthesis_linearity(rng):
    f = make_filter("sym8")
    a = [rng.normal(size=s) for s in (8, 8, 16)]
    b = [rng.normal(size=s) for s in (8, 8, 16)]
    lhs = synthesis_step(*(2.0 * u - 0.5 * v for u, v in zip(a, b)), f)
    rhs = 2.0 * synthesis_step(*a, f) - 0.5 * synthesis_step(*b, f)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_synthesis_size_mismatch():
    f = make_filter("haar")
    with pytest.raises(ValueError):
        synthesis_step(np.ones(4), np.ones(4), np.ones(6), f)


PUBLISHED_SYM8 = [
    0.0018899503327594609, -0.0003029205147213668, -0.01495225833704823, 0.003808752013890615,
    0.049137179673607506, -0.027219029917056003, -0.05194583810770904, 0.3644418948353314,
    0.7771857517005235, 0.4813596512583722, -0.061273359067658524, -0.1432942383508097,
    0.007607487324917605, 0.03169508781149298, -0.0005421323317911481, -0.0033824159510061256,
]


def test_sym8_agrees_with_published_table():
    assert np.max(np.abs(make_filter("sym8").analysis_low - PUBLISHED_SYM8)) < 2e-12
