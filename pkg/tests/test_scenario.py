import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelgnn.errors import FormatError, InvalidArgumentError
from modelgnn.scenario import (HEADER_SIZE, ChannelDataset, ScenarioConfig, UserCountDistribution,
                               apply_snr_scaling, dataset_io, read_dataset, sample_channel,
                               sample_rng, sample_user_count, sample_variable_k, write_dataset)


def test_empty_dataset():
    ds = sample_channel(ScenarioConfig(1, 8, 4, seed=7), 0)
    assert ds.sample_count == 0
    assert ds.tensor.size == 0


def test_unit_power_entries():
    ds = sample_channel(ScenarioConfig(1, 8, 4, seed=1), 10000)
    assert abs(np.mean(np.abs(ds.tensor) ** 2) - 1.0) < 0.05


def test_multicell_shape():
    ds = sample_channel(ScenarioConfig(2, 4, 2, seed=0), 3)
    assert ds.tensor.shape == (3, 2, 2, 4, 2)
    assert ds.tensor.size == 96


def test_real_imag_variance_and_correlation():
    t = sample_channel(ScenarioConfig(1, 2, 2, seed=3), 10000).tensor.reshape(10000, -1)
    assert np.all(np.abs(np.var(t.real, axis=0) - 0.5) <= 0.05)
    assert np.all(np.abs(np.var(t.imag, axis=0) - 0.5) <= 0.05)
    c = np.corrcoef(np.concatenate([t.real, t.imag], axis=1).T)
    off = c[~np.eye(c.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) < 0.05


def test_sampling_is_deterministic_and_per_sample():
    cfg = ScenarioConfig(2, 3, 2, seed=99)
    a = sample_channel(cfg, 5)
    b = sample_channel(cfg, 5)
    assert a.equals(b)
    # sample s does not depend on how many samples are drawn
    assert np.array_equal(sample_channel(cfg, 2).tensor, a.tensor[:2])
    assert not np.array_equal(sample_rng(99, 0).standard_normal(3), sample_rng(99, 1).standard_normal(3))


def test_dataset_tensor_is_read_only():
    ds = sample_channel(ScenarioConfig(1, 2, 2), 1)
    with pytest.raises(ValueError):
        ds.tensor[0, 0, 0, 0, 0] = 1.0


def test_snr_derives_noise():
    cfg = ScenarioConfig(1, 8, 4, p_max=5.0, snr_db=10.0)
    assert cfg.p_max == 1.0
    assert cfg.sigma2 == pytest.approx(0.1)


@pytest.mark.parametrize("kwargs", [dict(cells=0), dict(antennas_per_bs=0), dict(users_per_cell=0),
                                    dict(p_max=0.0), dict(sigma2=-1.0)])
def test_invalid_scenarios(kwargs):
    with pytest.raises(InvalidArgumentError):
        ScenarioConfig(**kwargs)


def test_snr_scaling_examples(rng):
    H = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    assert np.array_equal(apply_snr_scaling(H, 1.0, 1.0), H)
    H1 = np.zeros((2, 2), complex)
    H1[0, 0] = 1.0
    assert apply_snr_scaling(H1, 100.0, 1.0)[0, 0] == 10.0
    assert np.linalg.norm(apply_snr_scaling(H, 4.0, 16.0)) == pytest.approx(0.5 * np.linalg.norm(H))
    with pytest.raises(InvalidArgumentError):
        apply_snr_scaling(H, 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        apply_snr_scaling(H, 1.0, 0.0)


def test_user_count_fixed():
    rng = np.random.default_rng(0)
    assert all(sample_user_count(UserCountDistribution.fixed(4), rng) == 4 for _ in range(100))


def test_user_count_exponential():
    rng = np.random.default_rng(0)
    draws = np.array([sample_user_count(UserCountDistribution.exponential(4), rng) for _ in range(100_000)])
    assert 3.5 <= draws.mean() <= 4.6
    assert np.mean(draws < 10) >= 0.9
    assert draws.min() >= 2


def test_user_count_uniform():
    rng = np.random.default_rng(0)
    draws = np.array([sample_user_count(UserCountDistribution.uniform(2, 30), rng) for _ in range(100_000)])
    assert draws.min() == 2 and draws.max() == 30
    assert abs(draws.mean() - 16) <= 0.5


@pytest.mark.parametrize("make", [lambda: UserCountDistribution.exponential(0),
                                  lambda: UserCountDistribution.uniform(3, 2),
                                  lambda: UserCountDistribution.uniform(0, 2),
                                  lambda: UserCountDistribution("poisson")])
def test_user_count_invalid(make):
    with pytest.raises(InvalidArgumentError):
        make()


def test_variable_k_samples():
    H = sample_variable_k(16, UserCountDistribution.exponential(4), 50, 1)
    assert all(h.shape[0] == 16 and h.shape[1] >= 2 for h in H)
    assert len({h.shape[1] for h in H}) > 1


def test_round_trip(tmp_path):
    ds = sample_channel(ScenarioConfig(2, 3, 2, seed=5), 4)
    path = tmp_path / "d.pgnn"
    dataset_io(path, ds)
    back = dataset_io(path)
    assert np.array_equal(back.tensor, ds.tensor)
    assert back.tensor.dtype == np.complex128


def test_file_size(tmp_path):
    path = tmp_path / "d.pgnn"
    write_dataset(path, sample_channel(ScenarioConfig(1, 2, 2), 1))
    assert HEADER_SIZE == 40
    assert path.stat().st_size == 104


def test_payload_order_k_fastest(tmp_path):
    t = np.arange(2 * 3, dtype=float).reshape(1, 1, 1, 2, 3) * (1 + 1j)
    ds = ChannelDataset(ScenarioConfig(1, 2, 3), t)
    path = tmp_path / "d.pgnn"
    write_dataset(path, ds)
    payload = np.frombuffer(path.read_bytes()[HEADER_SIZE:], dtype="<f8")
    assert np.array_equal(payload[0::2], np.arange(6.0))


@pytest.mark.parametrize("offset,value,where", [(0, b"XXXX", 0), (4, b"\x02\x00\x00\x00", 4),
                                                (32, b"\x20\x00\x00\x00", 32)])
def test_corrupt_header(tmp_path, offset, value, where):
    path = tmp_path / "d.pgnn"
    write_dataset(path, sample_channel(ScenarioConfig(1, 2, 2), 1))
    raw = bytearray(path.read_bytes())
    raw[offset:offset + len(value)] = value
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as err:
        read_dataset(path)
    assert err.value.offset == where


def test_truncated_payload(tmp_path):
    path = tmp_path / "d.pgnn"
    write_dataset(path, sample_channel(ScenarioConfig(1, 2, 2), 2))
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(FormatError) as err:
        read_dataset(path)
    assert err.value.offset == len(raw) - 5
    path.write_bytes(raw[:10])
    with pytest.raises(FormatError):
        read_dataset(path)


def test_non_finite_rejected():
    t = np.zeros((1, 1, 1, 2, 2), complex)
    t[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(InvalidArgumentError):
        ChannelDataset(ScenarioConfig(1, 2, 2), t)


@settings(max_examples=25, deadline=None)
@given(m=st.integers(1, 2), n=st.integers(1, 4), k=st.integers(1, 3), s=st.integers(0, 3),
       seed=st.integers(0, 2**64 - 1))
def test_round_trip_property(tmp_path_factory, m, n, k, s, seed):
    ds = sample_channel(ScenarioConfig(m, n, k, seed=seed), s)
    path = tmp_path_factory.mktemp("io") / "d.pgnn"
    write_dataset(path, ds)
    back = read_dataset(path)
    assert back.tensor.shape == (s, m, m, n, k)
    assert np.array_equal(back.tensor, ds.tensor)
