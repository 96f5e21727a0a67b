import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebitcs.core import RngSeed
from onebitcs.errors import InfeasibleError, InvalidArgument
from onebitcs.harness import make_signal
from onebitcs.measure import NoiseSpec, QuantizedRecord, make_ensemble
from onebitcs.pipeline import (HtScheme, PipelineConfig, SocpScheme, calibrated_q,
                               oversampling_factor, quantize_adaptive, recover_adaptive)


def _run(seed, n, s, q, T, scheme="ht", noise=None, R=1.0, **kw):
    seed = RngSeed(*seed) if isinstance(seed, tuple) else seed
    x, _ = make_signal(seed.derive(0), n, s, R)
    ens = make_ensemble(seed.derive(1), q * T, n)
    cfg = PipelineConfig(s=s, q=q, m=q * T, R=R, scheme=scheme, seed=seed.derive(2), **kw)
    rec, enc = quantize_adaptive(x, ens, noise, cfg, return_iterates=True)
    xh, dec = recover_adaptive(rec, ens, cfg, return_iterates=True)
    return x, rec, enc, dec, xh


def test_batch_layout():
    cfg = PipelineConfig(s=2, q=300, m=1000)
    assert cfg.T == 3
    ens = make_ensemble(RngSeed(60, 0), 1000, 10)
    x = np.zeros(10)
    x[:2] = [0.5, -0.3]
    rec = quantize_adaptive(x, ens, None, cfg)
    assert rec.T == 3 and rec.m == 1000
    assert rec.unused.sum() == 100 and rec.unused[900:].all()
    assert np.all(rec.y[900:] == 1) and np.all(rec.tau[900:] == 0)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        PipelineConfig(s=1, q=300, m=299)
    with pytest.raises(InvalidArgument):
        PipelineConfig(s=1, q=2, m=4, scheme="other")
    with pytest.raises(InvalidArgument):
        PipelineConfig(s=1, q=2, m=4, radius_preset="other")
    assert PipelineConfig(s=1, q=2, m=8).radius(3) == 0.25


def test_scheme_selection():
    assert isinstance(PipelineConfig(s=3, q=10, m=10).build_scheme(), HtScheme)
    sc = PipelineConfig(s=3, q=10, m=10, scheme="socp", radius_preset="theoretical").build_scheme()
    assert isinstance(sc, SocpScheme)
    assert (sc.variance_factor, sc.ball_factor, sc.sparsity) == (2.0, 2.0, 6)


def test_zero_signal_socp():
    ens = make_ensemble(RngSeed(61, 0), 600, 20)
    cfg = PipelineConfig(s=2, q=200, m=600, scheme="socp", seed=RngSeed(61, 1))
    rec, its = quantize_adaptive(np.zeros(20), ens, None, cfg, return_iterates=True)
    for t, xt in enumerate(its):
        assert np.linalg.norm(xt) <= 2.0 ** -t
    assert np.linalg.norm(recover_adaptive(rec, ens, cfg).values) <= 2.0 ** -3


def test_record_roundtrip_and_fields():
    _, rec, *_ = _run((62, 0), 30, 3, 200, 3)
    raw = rec.to_bytes()
    back = QuantizedRecord.from_bytes(raw)
    assert back.to_bytes() == raw
    # only signs, thresholds and the batch size travel to the decoder
    assert [f.name for f in dataclasses.fields(QuantizedRecord)] == ["y", "tau", "q", "meta"]
    assert rec.meta == {}


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32), st.sampled_from(["ht", "socp"]), st.integers(1, 4))
def test_encoder_decoder_iterates_identical(seed, scheme, s):
    x, rec, enc, dec, xh = _run((seed, 5), 30, s, 120, 3, scheme=scheme)
    assert len(enc) == len(dec) == 4
    for a, b in zip(enc, dec):
        assert a.tobytes() == b.tobytes()
    assert xh.values.tobytes() == enc[-1].tobytes()


def test_decoder_rejects_mismatch():
    x, rec, *_ = _run((63, 0), 30, 3, 100, 2)
    ens = make_ensemble(RngSeed(63, 0).derive(1), 200, 30)
    with pytest.raises(InvalidArgument):
        recover_adaptive(rec, ens, PipelineConfig(s=3, q=50, m=200))
    with pytest.raises(InvalidArgument):
        recover_adaptive(rec, ens, PipelineConfig(s=3, q=100, m=100))


def test_oversampling_factor():
    n, s = 100, 10
    assert oversampling_factor(s * math.log(n / s), n, s) == pytest.approx(1.0)
    assert oversampling_factor(2303, 100, 10) == pytest.approx(100.02, abs=0.01)
    assert oversampling_factor(PipelineConfig(s=10, q=2303, m=2303), 100) == pytest.approx(100.02, abs=0.01)
    with pytest.raises(InvalidArgument):
        oversampling_factor(100, 10, 10)


def test_calibrated_q_even():
    for scheme in ("ht", "socp"):
        for s in (1, 3, 7):
            assert calibrated_q(scheme, s, 50) % 2 == 0


@pytest.mark.parametrize("scheme", ["ht", "socp"])
def test_final_error_bound(scheme):
    n, s, T = 100, 5, 5
    q = calibrated_q(scheme, s, n)
    hits = 0
    for k in range(100):
        x, *_, xh = _run(RngSeed(64, k), n, s, q, T, scheme=scheme)
        hits += np.linalg.norm(x - xh.values) <= 2.0 ** -T
    assert hits >= 90


def test_final_error_bound_with_bounded_noise():
    n, s, T = 100, 5, 3
    q = calibrated_q("ht", s, n)
    eta = HtScheme(q, 2 * s).noise_resilience[0]
    hits = 0
    for k in range(100):
        seed = RngSeed(65, k)
        x, _ = make_signal(seed.derive(0), n, s, 1.0)
        bound = eta * 2.0 ** -T * np.linalg.norm(x)
        e = bound * (2 * np.asarray(make_ensemble(seed.derive(3), q * T, 1).matrix[:, 0] > 0) - 1)
        noise = NoiseSpec.bounded(e, np.ones(q * T), eta * 2.0 ** -T, np.linalg.norm(x), 0)
        *_, xh = _run(seed, n, s, q, T, noise=noise)
        hits += np.linalg.norm(x - xh.values) <= 2.0 ** -T
    assert hits >= 90


def test_infeasible_batch_is_reported():
    x, _ = make_signal(RngSeed(66, 0), 50, 3, 1.0)
    m = 3 * 400
    ens = make_ensemble(RngSeed(66, 1), m, 50)
    cfg = PipelineConfig(s=3, q=400, m=m, scheme="socp")
    noise = NoiseSpec.random(RngSeed(66, 2), m, 0.0, 0.02)
    with pytest.raises(InfeasibleError) as info:
        quantize_adaptive(x, ens, noise, cfg)
    assert info.value.batch in (1, 2, 3)
