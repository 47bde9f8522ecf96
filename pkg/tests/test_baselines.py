import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelgnn.baselines import (equal_power_columns, is_power_feasible, mrt, power_normalize, power_of,
                                rzf, structured_precoder, tgnn_precoder, zf_leakage, zfbf)
from modelgnn.errors import DegenerateInputError, InvalidArgumentError, SingularMatrixError
from modelgnn.linalg import pinv_exact
from modelgnn.wmmse import sum_rate

from conftest import crandn


def directions(V):
    return V / np.linalg.norm(V, axis=0)


def same_directions(A, B, tol):
    # columns equal up to a positive scale
    return np.allclose(directions(A), directions(B), atol=tol)


def test_mrt_examples(rng):
    assert np.allclose(mrt(np.eye(2), 2.0), np.eye(2))
    V = mrt(np.array([[2.0], [0.0]]), 1.0)
    assert np.allclose(V, [[1.0], [0.0]])
    H = crandn(rng, 8, 4)
    V = mrt(H, 3.0)
    corr = np.abs(np.sum(H.conj() * V, 0)) / (np.linalg.norm(H, axis=0) * np.linalg.norm(V, axis=0))
    assert np.allclose(corr, 1.0, atol=1e-12)
    assert np.allclose(np.linalg.norm(V, axis=0) ** 2, 3.0 / 4)


def test_mrt_zero_column():
    with pytest.raises(InvalidArgumentError):
        mrt(np.array([[1.0, 0.0], [0.0, 0.0]]), 1.0)


def test_zfbf_examples(rng):
    assert np.allclose(zfbf(np.eye(4), 4.0), np.eye(4))
    H = crandn(rng, 8, 4)
    V = zfbf(H, 1.0)
    assert zf_leakage(H, V) < 1e-9
    assert power_of(V) == pytest.approx(1.0)
    Q, _ = np.linalg.qr(crandn(rng, 8, 3))
    Horth = Q * np.array([1.0, 2.0, 0.5])
    assert same_directions(zfbf(Horth, 1.0), mrt(Horth, 1.0), 1e-12)


def test_zfbf_singular():
    with pytest.raises(SingularMatrixError):
        zfbf(np.ones((4, 2)), 1.0)


def test_rzf_limits(rng):
    H = crandn(rng, 8, 4)
    K = 4
    V = rzf(H, 1.0, 1e-9 / K)
    assert same_directions(V, pinv_exact(H), 1e-6)
    V = rzf(H, 1.0, 1e9)
    assert same_directions(V, H, 1e-6)
    assert power_of(rzf(H, 2.0, 0.3)) == pytest.approx(2.0)


def test_rzf_beats_mrt_and_zfbf_on_average():
    rng = np.random.default_rng(0)
    rates = {"rzf": [], "mrt": [], "zfbf": []}
    for _ in range(100):
        H = crandn(rng, 8, 4)
        rates["rzf"].append(sum_rate(H, rzf(H, 1.0, 0.1), 0.1)[1])
        rates["mrt"].append(sum_rate(H, mrt(H, 1.0), 0.1)[1])
        rates["zfbf"].append(sum_rate(H, zfbf(H, 1.0), 0.1)[1])
    assert np.mean(rates["rzf"]) >= np.mean(rates["mrt"])
    # at 10 dB the two are tied in expectation; allow three paired standard errors
    diff = np.array(rates["rzf"]) - np.array(rates["zfbf"])
    assert diff.mean() >= -3 * diff.std(ddof=1) / np.sqrt(len(diff))


def test_structured_uniform_matches_zf_at_low_noise(rng):
    H = crandn(rng, 8, 4)
    u = np.full(4, 0.25)
    V = structured_precoder(H, u, u, 1e-12)
    assert same_directions(V, pinv_exact(H), 1e-8)
    assert power_of(V) == pytest.approx(1.0)


def test_structured_single_user(rng):
    h = crandn(rng, 5, 1)
    V = structured_precoder(h, [2.0], [2.0], 0.3)
    assert same_directions(V, h, 1e-12)
    # scaled form h t^{1/2} / (lambda |h|^2 + sigma2) up to the column normalization
    raw = h * np.sqrt(2.0) / (2.0 * np.linalg.norm(h) ** 2 + 0.3)
    assert same_directions(V, raw, 1e-12)


def test_structured_close_to_rzf():
    rng = np.random.default_rng(4)
    s_struct, s_rzf = [], []
    for _ in range(100):
        H = crandn(rng, 8, 4)
        u = np.full(4, 0.25)
        s_struct.append(sum_rate(H, structured_precoder(H, u, u, 0.1), 0.1)[1])
        s_rzf.append(sum_rate(H, rzf(H, 1.0, 0.1), 0.1)[1])
    assert abs(np.mean(s_struct) / np.mean(s_rzf) - 1.0) < 0.05


@pytest.mark.parametrize("lam,t", [([0.5, 0.6], [0.5, 0.5]), ([0.5, 0.5], [0.2, 0.5]),
                                   ([0.0, 1.0], [0.5, 0.5]), ([0.5], [0.5])])
def test_structured_trace_violation(rng, lam, t):
    with pytest.raises(InvalidArgumentError):
        structured_precoder(crandn(rng, 4, 2), lam, t, 0.1, p_max=1.0)


def test_power_normalize_examples(rng):
    V = crandn(rng, 4, 2)
    V /= np.linalg.norm(V)
    W = power_normalize(V, 4.0)
    assert np.allclose(W, 2 * V)
    assert power_of(W) == pytest.approx(4.0)
    assert np.allclose(power_normalize(V, 1.0), V)
    U = crandn(rng, 4, 3) * 7
    assert same_directions(power_normalize(U, 2.0), U, 1e-12)
    with pytest.raises(DegenerateInputError):
        power_normalize(np.zeros((2, 2)), 1.0)


def test_equal_power_columns(rng):
    V = equal_power_columns(crandn(rng, 6, 3), 3.0)
    assert np.allclose(np.linalg.norm(V, axis=0), 1.0)


def test_tgnn_precoder(rng):
    H = crandn(rng, 8, 4)
    V = tgnn_precoder(H, 40, 1.0)
    leak = np.abs(H.conj().T @ V) / np.linalg.norm(V, axis=0)
    np.fill_diagonal(leak, 0)
    assert leak.max() < 1e-6
    assert np.allclose(V, zfbf(H, 1.0), atol=1e-8)
    assert np.allclose(tgnn_precoder(H, 0, 1.0), mrt(H, 1.0), atol=1e-14)


def test_tgnn_block_orthogonal(rng):
    Q, _ = np.linalg.qr(crandn(rng, 8, 8))
    H1 = Q[:, :4] @ crandn(rng, 4, 2)
    H2 = Q[:, 4:] @ crandn(rng, 4, 3)
    H = np.concatenate([H1, H2], axis=1)
    assert np.abs(H1.conj().T @ H2).max() < 1e-12
    V = tgnn_precoder(H, 60, 5.0)
    # each block gets its own share of the budget in the joint precoder
    expected = np.concatenate([tgnn_precoder(H1, 60, 2.0), tgnn_precoder(H2, 60, 3.0)], axis=1)
    assert np.allclose(V, expected, atol=1e-9)


PRECODERS = {
    "mrt": lambda H: mrt(H, 2.0),
    "zfbf": lambda H: zfbf(H, 2.0),
    "rzf": lambda H: rzf(H, 2.0, 0.5),
    "tgnn": lambda H: tgnn_precoder(H, 30, 2.0),
    "structured": lambda H: structured_precoder(H, np.full(H.shape[1], 2.0 / H.shape[1]),
                                                np.full(H.shape[1], 2.0 / H.shape[1]), 0.5),
}


@pytest.mark.parametrize("name", sorted(PRECODERS))
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_precoders_are_pe_and_feasible(name, seed):
    rng = np.random.default_rng(seed)
    H = crandn(rng, 6, 3)
    f = PRECODERS[name]
    pa, pu = rng.permutation(6), rng.permutation(3)
    V = f(H)
    assert is_power_feasible(V, 2.0)
    assert np.allclose(f(H[pa][:, pu]), V[pa][:, pu], atol=1e-9)


def test_rzf_leakage_vanishes(rng):
    H = crandn(rng, 8, 4)
    leaks = [zf_leakage(H, rzf(H, 1.0, s2)) for s2 in (1.0, 1e-2, 1e-4, 1e-6)]
    assert all(b < a for a, b in zip(leaks, leaks[1:]))
    assert leaks[-1] < 1e-5
