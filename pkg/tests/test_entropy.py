import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from yuvc.entropy import backend
from yuvc.entropy.chunks import BitChunk, decode_chunk, encode_chunk, read_chunk
from yuvc.entropy.priors import (FactorizedPrior, bits_from_likelihood,
                                 gaussian_bits, gaussian_likelihood,
                                 gaussian_table_set, indexes_for_scales,
                                 lower_bound, scale_grid)
from yuvc.entropy.rans import decode_with_indexes, encode_with_indexes
from yuvc.entropy.tables import (TOTAL_FREQ, build_table_set, gaussian_pmf,
                                 pmf_to_cdf_row, quantize_pmf)
from yuvc.errors import BitstreamError, EntropyDecodeError


def _random_tables(rng, n_tables=4, alphabet=16):
    pmfs, offsets = [], []
    for _ in range(n_tables):
        p = rng.dirichlet(np.ones(alphabet) * rng.uniform(0.1, 3.0))
        pmfs.append(p)
        offsets.append(int(rng.integers(-8, 8)))
    return build_table_set(pmfs, offsets)


def _sample_from_tables(rng, tables, n):
    indexes = rng.integers(0, len(tables.offsets), n).astype(np.int32)
    symbols = np.empty(n, dtype=np.int32)
    for t in range(len(tables.offsets)):
        mask = indexes == t
        cdf = tables.cdfs[t].astype(np.float64)
        pmf = np.diff(cdf) / TOTAL_FREQ
        support = np.arange(len(pmf)) + tables.offsets[t]
        symbols[mask] = rng.choice(support, mask.sum(), p=pmf / pmf.sum())
    return symbols, indexes


def test_quantize_pmf_preserves_total():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pmf = rng.dirichlet(np.ones(rng.integers(2, 40)))
        q = quantize_pmf(pmf)
        assert q.sum() == TOTAL_FREQ
        assert (q >= 1).all()  # every symbol stays codable


def test_cdf_row_monotone():
    pmf = np.array([0.5, 0.25, 0.125, 0.125])
    cdf = pmf_to_cdf_row(quantize_pmf(pmf))
    assert cdf[0] == 0 and cdf[-1] == TOTAL_FREQ
    assert (np.diff(cdf) > 0).all()


def test_gaussian_pmf_mass_concentration():
    pmf, offset = gaussian_pmf(0.5)
    support = np.arange(len(pmf)) + offset
    assert pmf[np.abs(support) <= 2].sum() > 0.99
    assert abs(pmf.sum() - 1.0) < 1e-6


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 400))
@settings(max_examples=30, deadline=None)
def test_rans_roundtrip_property(seed, n):
    rng = np.random.default_rng(seed)
    tables = _random_tables(rng)
    symbols, indexes = _sample_from_tables(rng, tables, n)
    payload = encode_with_indexes(symbols, indexes, tables)
    back = decode_with_indexes(payload, indexes, tables)
    assert np.array_equal(back, symbols)


def test_rans_escape_symbols_roundtrip():
    # values far outside every table's support go through the bypass path
    rng = np.random.default_rng(5)
    tables = _random_tables(rng)
    symbols = np.array([-1000, 1000, 0, 31337, -31337], dtype=np.int32)
    indexes = np.zeros(len(symbols), dtype=np.int32)
    payload = encode_with_indexes(symbols, indexes, tables)
    assert np.array_equal(decode_with_indexes(payload, indexes, tables), symbols)


def test_rans_empty_input():
    tables = _random_tables(np.random.default_rng(6))
    payload = encode_with_indexes(np.array([], dtype=np.int32),
                                  np.array([], dtype=np.int32), tables)
    assert decode_with_indexes(payload, np.array([], dtype=np.int32),
                               tables).size == 0


def test_rans_corrupt_payload_raises():
    rng = np.random.default_rng(7)
    tables = _random_tables(rng)
    symbols, indexes = _sample_from_tables(rng, tables, 64)
    payload = bytearray(encode_with_indexes(symbols, indexes, tables))
    with pytest.raises(EntropyDecodeError):
        decode_with_indexes(bytes(payload[:2]), indexes, tables)


def test_roundtrip_1e5_symbols_50_priors():
    rng = np.random.default_rng(42)
    tables = _random_tables(rng, n_tables=50, alphabet=24)
    symbols, indexes = _sample_from_tables(rng, tables, 100_000)
    payload = encode_with_indexes(symbols, indexes, tables)
    back = decode_with_indexes(payload, indexes, tables)
    assert np.array_equal(back, symbols)


def test_rate_estimate_within_2_percent():
    # actual coded bits vs differentiable estimate on >= 1e4 symbols
    rng = np.random.default_rng(11)
    torch.manual_seed(11)
    tables = gaussian_table_set()
    scales = torch.from_numpy(
        np.exp(rng.uniform(math.log(0.2), math.log(8.0), 20_000))).float()
    means = torch.zeros_like(scales)
    x = torch.round(torch.randn(20_000) * scales)
    est = gaussian_bits(x, means, scales).item()
    indexes = indexes_for_scales(scales)
    payload = encode_with_indexes(x.numpy().astype(np.int32), indexes, tables)
    actual = len(payload) * 8
    assert abs(actual - est) / est <= 0.02, (actual, est)


def test_gaussian_likelihood_integrates_to_one():
    scale = torch.full((1,), 0.7)
    mean = torch.zeros(1)
    total = sum(gaussian_likelihood(torch.tensor([float(k)]), mean, scale).item()
                for k in range(-30, 31))
    assert abs(total - 1.0) < 1e-4


def test_scale_grid_bounds():
    grid = scale_grid()
    assert len(grid) == 256
    assert grid[0] == pytest.approx(0.11)
    assert grid[-1] == pytest.approx(64.0)
    assert (np.diff(grid) > 0).all()


def test_indexes_round_to_nearest_grid_point():
    grid = scale_grid()
    scales = torch.tensor([0.05, 0.11, 1.0, 64.0, 100.0])
    idx = indexes_for_scales(scales)
    assert idx[0] == 0 and idx[-1] == len(grid) - 1
    assert grid[idx[2]] == pytest.approx(1.0, rel=0.02)


def test_lower_bound_forward_and_gradient():
    x = torch.tensor([-1.0, 0.5, 2.0], requires_grad=True)
    y = lower_bound(x, 1.0)
    assert torch.equal(y, torch.tensor([1.0, 1.0, 2.0]))
    y.sum().backward()
    # clamped entries with shrinking upstream gradient pass nothing through
    assert x.grad.tolist() == [0.0, 0.0, 1.0]


def test_factorized_prior_roundtrip_and_rate():
    torch.manual_seed(3)
    prior = FactorizedPrior(channels=4)
    x = torch.round(torch.randn(1, 4, 40, 40) * 2.0)
    like = prior.likelihood(x)
    est = bits_from_likelihood(like).item()
    tables = prior.build_tables()
    sym = x.numpy().astype(np.int32).reshape(-1)
    idx = np.repeat(np.arange(4, dtype=np.int32), 1600)
    payload = encode_with_indexes(sym, idx, tables)
    back = decode_with_indexes(payload, idx, tables)
    assert np.array_equal(back, sym)
    assert abs(len(payload) * 8 - est) / est < 0.05


def test_per_sample_bits_sum_to_total():
    torch.manual_seed(4)
    prior = FactorizedPrior(channels=3)
    x = torch.round(torch.randn(5, 3, 8, 8))
    per = prior.bits(x, per_sample=True)
    assert per.shape == (5,)
    assert torch.allclose(per.sum(), prior.bits(x), rtol=1e-5)


def test_chunk_framing_roundtrip():
    rng = np.random.default_rng(9)
    tables = _random_tables(rng)
    symbols, indexes = _sample_from_tables(rng, tables, 200)
    chunk = encode_chunk(symbols, indexes, tables)
    assert chunk.symbol_count == 200
    buf = chunk.to_bytes()
    assert chunk.bits == len(buf) * 8
    back, pos = read_chunk(buf, 0)
    assert pos == len(buf)
    assert back.payload == chunk.payload
    assert np.array_equal(decode_chunk(back, indexes, tables), symbols)


def test_chunk_count_mismatch_rejected():
    rng = np.random.default_rng(10)
    tables = _random_tables(rng)
    symbols, indexes = _sample_from_tables(rng, tables, 50)
    chunk = encode_chunk(symbols, indexes, tables)
    with pytest.raises(BitstreamError):
        decode_chunk(chunk, indexes[:49], tables)


def test_truncated_chunk_buffer_rejected():
    rng = np.random.default_rng(13)
    tables = _random_tables(rng)
    symbols, indexes = _sample_from_tables(rng, tables, 50)
    buf = encode_chunk(symbols, indexes, tables).to_bytes()
    with pytest.raises(BitstreamError):
        read_chunk(buf[:-1], 0)
    with pytest.raises(BitstreamError):
        read_chunk(buf[:4], 0)


def test_reference_coder_selected_by_default(monkeypatch):
    monkeypatch.delenv("YUVC_ENTROPY", raising=False)
    coder = backend.get_coder()
    assert hasattr(coder, "encode_with_indexes")
    monkeypatch.setenv("YUVC_ENTROPY", "reference")
    assert isinstance(backend.get_coder(), backend.ReferenceCoder)


def test_unknown_backend_rejected(monkeypatch):
    monkeypatch.setenv("YUVC_ENTROPY", "turbo")
    with pytest.raises(ValueError):
        backend.get_coder()


def test_fast_backend_when_requested(monkeypatch):
    monkeypatch.delenv("YUVC_ENTROPY", raising=False)
    if not backend.accelerated_available():
        pytest.skip("accelerated coder not built")
    coder = backend.get_coder(prefer="fast")
    rng = np.random.default_rng(12)
    tables = _random_tables(rng)
    symbols, indexes = _sample_from_tables(rng, tables, 500)
    payload = coder.encode_with_indexes(symbols, indexes, tables)
    assert payload == encode_with_indexes(symbols, indexes, tables)
    assert np.array_equal(coder.decode_with_indexes(payload, indexes, tables),
                          symbols)
