import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sutrack.arprocess import ProcessParams, Trajectory, generate
from sutrack.quantizer import FAILURE, LosslessQuantizer, UniformQuantizer
from sutrack.tracking import (Decoder, Encoder, QuantizerSpec, SlotMessage, TrackingConfig, join_index,
                              run_tracking, split_index)


def config(alpha=0.9, n=4, R=1.0, s=4, p=1, T=200, kind="gain-shape", M=4.0, gain_bits=2):
    return TrackingConfig(alpha=alpha, n=n, R=R, s=s, p=p, T=T,
                          quantizer=QuantizerSpec(kind=kind, M=M, gain_bits=gain_bits))


def lockstep(traj, cfg, q):
    """Drive encoder and decoder by hand; return outputs, messages and shadow estimates."""
    enc = Encoder(q, cfg.alpha, cfg.s, cfg.p, cfg.slot_bits)
    dec = Decoder(q, cfg.alpha, cfg.s, cfg.p, cfg.slot_bits)
    outs, msgs, refs, ests = [], [], [], []
    msg = None
    for t in range(cfg.T):
        outs.append(dec.tick(t, msg))
        refs.append(dec.ref)
        ests.append(dec.estimate.copy())
        msg = enc.tick(t, traj.values[t - t % cfg.s])
        msgs.append(msg)
    return np.array(outs), msgs, refs, np.array(ests), enc


def scalar_reference(x, alpha, s, p, M, bits):
    """Plain-float p-SU with a scalar midpoint quantizer of ``bits * p`` bits on [-M, M]."""
    cells = 2 ** (bits * p)
    width = 2.0 * M / cells
    est, ks, failed, tau = 0.0, 0, False, None
    arrivals = {}
    errs = []
    for t in range(len(x)):
        if failed and t > tau:
            out = 0.0
        else:
            if t in arrivals:
                est = est + arrivals.pop(t)
            if t > 0 and t % s == 0:
                est = alpha**s * est
                ks = t
            out = alpha ** (t - ks) * est
        errs.append((x[t] - out) ** 2)
        if not failed and t % p == 0:
            y = x[ks] - est
            if y * y > M * M:
                failed, tau = True, t
            else:
                c = min(max(math.floor((y + M) / width), 0), cells - 1)
                arrivals[t + p] = -M + (c + 0.5) * width
    return sum(errs) / len(errs), tau


# config and index plumbing

def test_config_validation():
    with pytest.raises(ValueError):
        config(s=4, p=3)
    with pytest.raises(ValueError):
        config(n=3, R=0.5)
    with pytest.raises(ValueError):
        config(T=0)
    cfg = config(n=4, R=1.5, s=6, p=2)
    assert (cfg.m, cfg.slot_bits, cfg.update_bits) == (3, 6, 12)


@settings(max_examples=200, deadline=None)
@given(chunks=st.integers(1, 6), width=st.integers(1, 12), data=st.data())
def test_split_join_round_trip(chunks, width, data):
    index = data.draw(st.integers(0, 2 ** (chunks * width) - 1))
    parts = split_index(index, chunks, width)
    assert len(parts) == chunks and all(0 <= c < 2**width for c in parts)
    assert join_index(parts, width) == index


def test_split_is_big_endian():
    assert split_index(0b1011_0010, 2, 4) == [0b1011, 0b0010]
    with pytest.raises(ValueError):
        split_index(256, 2, 4)


# encoder and decoder behaviour

class Recording(LosslessQuantizer):
    def __init__(self, n, bits):
        super().__init__(n, bits)
        self.inputs = []

    def quantize(self, y):
        self.inputs.append(np.array(y))
        return super().quantize(y)


def test_first_output_is_zero_and_first_error_is_x0():
    cfg = config()
    traj = generate(ProcessParams(alpha=cfg.alpha, n=cfg.n), cfg.T, seed=1)
    q = Recording(cfg.n, cfg.update_bits)
    outs, _, _, _, _ = lockstep(traj, cfg, q)
    assert not np.any(outs[0])
    np.testing.assert_array_equal(q.inputs[0], traj.values[0])


@pytest.mark.parametrize("s, p", [(4, 1), (4, 2), (6, 3), (3, 3)])
def test_lossless_estimate_is_exact_after_first_update(s, p):
    cfg = config(s=s, p=p, T=60)
    traj = generate(ProcessParams(alpha=cfg.alpha, n=cfg.n), cfg.T, seed=4)
    outs, _, _, ests, enc = lockstep(traj, cfg, LosslessQuantizer(cfg.n, cfg.update_bits))
    X = traj.values
    for t in range(cfg.T):
        ks, i = t - t % s, t % s
        if i >= p:
            np.testing.assert_allclose(ests[t], X[ks], rtol=0, atol=1e-12)
            np.testing.assert_allclose(outs[t], cfg.alpha**i * X[ks], rtol=0, atol=1e-12)
    np.testing.assert_allclose(enc.shadow.estimate, ests[-1], rtol=0, atol=0)


def test_lossless_per_slot_distortion():
    alpha, s, n, trials = 0.8, 4, 4, 3000
    cfg = TrackingConfig(alpha=alpha, n=n, R=1.0, s=s, p=1, T=12, quantizer=QuantizerSpec(kind="lossless"))
    params = ProcessParams(alpha=alpha, n=n)
    errs = np.stack([run_tracking(generate(params, cfg.T, seed=k), cfg, seed=k).per_t_error for k in range(trials)])
    mean, se = errs.mean(axis=0), errs.std(axis=0, ddof=1) / math.sqrt(trials)
    for t in range(s, cfg.T):
        i = t % s or s  # at a sampling instant the estimate is the previous sample pushed s steps
        assert abs(mean[t] - (1 - alpha ** (2 * i))) < 4 * se[t]


def test_failure_latch():
    cfg = config(n=2, R=1.0, s=2, p=1, T=40, kind="uniform", M=0.5)
    X = np.zeros((cfg.T, cfg.n))
    X[10:] = 5.0  # blows past the dynamic range at the sample taken at t=10
    traj = Trajectory(values=X, params=ProcessParams(alpha=cfg.alpha, n=cfg.n), seed=None)
    q = UniformQuantizer(cfg.n, 0.5, cfg.update_bits)
    outs, msgs, _, _, enc = lockstep(traj, cfg, q)
    assert enc.tau == 10
    assert all(m.failure for m in msgs[10:]) and not any(m.failure for m in msgs[:10])
    assert not np.any(outs[11:])
    res = run_tracking(traj, cfg, quantizer=q)
    assert res.tau == 10 and res.failed


def test_decoder_zero_after_failure_message():
    q = LosslessQuantizer(2, 2)
    dec = Decoder(q, 0.9, 2, 1, 2)
    q.quantize(np.array([1.0, 1.0]))
    assert np.any(dec.tick(1, SlotMessage(0, 2)))
    assert not np.any(dec.tick(2, SlotMessage(None, 2)))
    for t in range(3, 8):
        assert not np.any(dec.tick(t, SlotMessage(0, 2)))


def test_malformed_chunk_is_rejected():
    dec = Decoder(LosslessQuantizer(2, 4), 0.9, 4, 2, 2)
    with pytest.raises(ValueError):
        dec.tick(1, SlotMessage(1, 3))
    with pytest.raises(ValueError):
        dec.tick(1, SlotMessage(4, 2))


def test_encoder_rejects_oversized_quantizer():
    with pytest.raises(ValueError):
        Encoder(UniformQuantizer(2, 1.0, 6), 0.9, 4, 2, 2)


@pytest.mark.parametrize("kind, p", [("gain-shape", 1), ("gain-shape", 2), ("uniform", 2), ("uniform", 4)])
def test_shadow_equality_and_scaling_structure(kind, p):
    cfg = config(n=4, R=1.5, s=4, p=p, T=120, kind=kind, M=4.0, gain_bits=2)
    traj = generate(ProcessParams(alpha=cfg.alpha, n=cfg.n), cfg.T, seed=8)
    q = cfg.build_quantizer(seed=3)
    run_tracking(traj, cfg, quantizer=q, check_shadow=True)
    outs, _, refs, ests, _ = lockstep(traj, cfg, q)
    for t in range(cfg.T):
        assert refs[t] == t - t % cfg.s
        np.testing.assert_array_equal(outs[t], cfg.alpha ** (t - refs[t]) * ests[t])
    # partial sub-fragments are ignored: the estimate only moves at update boundaries
    for t in range(1, cfg.T):
        if t % p and t % cfg.s:
            np.testing.assert_array_equal(ests[t], ests[t - 1])


@pytest.mark.parametrize("n, R, s, p", [(4, 1.0, 4, 2), (2, 1.5, 6, 3), (8, 0.5, 2, 1)])
def test_rate_accounting(n, R, s, p):
    cfg = config(n=n, R=R, s=s, p=p, T=5 * s, kind="uniform", M=8.0)
    traj = generate(ProcessParams(alpha=cfg.alpha, n=n), cfg.T, seed=2)
    _, msgs, _, _, _ = lockstep(traj, cfg, cfg.build_quantizer())
    assert len(msgs) == cfg.T
    for m in msgs:
        assert m.width == n * R and 0 <= m.payload < 2**m.width
    assert sum(m.width for m in msgs[:s]) == n * R * s


def test_messages_depend_only_on_samples():
    cfg = config(n=4, R=1.5, s=4, p=2, T=80)
    traj = generate(ProcessParams(alpha=cfg.alpha, n=cfg.n), cfg.T, seed=6)
    perturbed = traj.values.copy()
    mask = np.arange(cfg.T) % cfg.s != 0
    perturbed[mask] += 100.0
    other = Trajectory(values=perturbed, params=traj.params, seed=None)
    q = cfg.build_quantizer(seed=1)
    _, a, _, _, _ = lockstep(traj, cfg, q)
    _, b, _, _, _ = lockstep(other, cfg, q)
    assert a == b


def test_zero_trajectory_gives_unit_accuracy():
    cfg = config(T=50)
    traj = generate(ProcessParams(alpha=cfg.alpha, n=cfg.n, innovation="zero"), cfg.T, seed=0)
    res = run_tracking(traj, cfg, seed=0)
    assert res.dbar == 0.0 and res.delta_hat == 1.0 and not res.failed


@pytest.mark.parametrize("s, p, M", [(4, 1, 2.0), (4, 2, 2.0), (6, 3, 1.5), (3, 1, 0.6)])
def test_scalar_sign_quantizer_matches_reference(s, p, M):
    alpha, T = 0.9, 500
    cfg = TrackingConfig(alpha=alpha, n=1, R=1.0, s=s, p=p, T=T,
                         quantizer=QuantizerSpec(kind="uniform", M=M))
    for seed in range(5):
        traj = generate(ProcessParams(alpha=alpha), T, seed=seed)
        res = run_tracking(traj, cfg, seed=seed)
        dbar, tau = scalar_reference(traj.values[:, 0].tolist(), alpha, s, p, M, 1)
        assert abs(res.dbar - dbar) <= 1e-12
        assert res.tau == tau


def test_trajectory_checks():
    cfg = config(n=4, T=100)
    with pytest.raises(ValueError):
        run_tracking(generate(ProcessParams(alpha=0.9, n=4), 50, seed=0), cfg)
    with pytest.raises(ValueError):
        run_tracking(generate(ProcessParams(alpha=0.9, n=3), 100, seed=0), cfg)


def test_trial_json_line():
    cfg = config(T=30)
    res = run_tracking(generate(ProcessParams(alpha=0.9, n=4), 30, seed=1), cfg, seed=5)
    doc = json.loads(res.to_json())
    assert set(doc) == {"seed", "tau", "dbar", "delta_hat", "failed"}
    assert doc["seed"] == 5 and doc["failed"] is False
    full = json.loads(res.to_json(include_trace=True, point=3))
    assert len(full["per_t_error"]) == 30 and full["point"] == 3
    assert math.isclose(np.mean(full["per_t_error"]), res.dbar)


def test_failure_symbol_is_singleton():
    assert FAILURE.failed and FAILURE.value is None
