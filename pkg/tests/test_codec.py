import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikelds.codec import (
    CodecConfig,
    SignedChannelPair,
    decode,
    encode,
    encode_events,
    frame_events,
    normalize_signal,
    round_half_away,
    spike_times,
)


def test_config_validation_and_scale():
    cfg = CodecConfig(frame_len=25, pop_size=21, eta=0.9)
    assert cfg.capacity == 525
    assert cfg.scale == pytest.approx(472.5)
    for bad in ({"frame_len": 0}, {"pop_size": 0}, {"eta": 0.0}, {"eta": 1.5}):
        with pytest.raises(ValueError):
            CodecConfig(**bad)


def test_round_half_away():
    assert round_half_away([0.5, 1.5, -0.5, -2.5, 0.49]).tolist() == [1, 2, -1, -3, 0]


@settings(max_examples=60)
@given(st.lists(st.integers(-525, 525), min_size=1, max_size=30))
def test_encode_decode_roundtrip(values):
    cfg = CodecConfig()
    u = np.array(values)
    pair = encode(u, cfg)
    assert np.all(pair.plus >= 0) and np.all(pair.minus >= 0)
    assert np.all(np.minimum(pair.plus, pair.minus) == 0)
    assert np.array_equal(decode(pair), u)


def test_encode_rejects_out_of_range():
    with pytest.raises(ValueError):
        encode([526], CodecConfig())


def test_decode_of_uncancelled_pair():
    assert decode(SignedChannelPair(np.array([7]), np.array([3]))).tolist() == [4]


def test_normalize_signal_peak():
    cfg = CodecConfig(frame_len=10, pop_size=2, eta=0.5)
    ints, scale = normalize_signal([0.0, -2.0, 1.0], cfg)
    assert ints.tolist() == [0, -10, 5]
    assert scale == 5.0
    ints2, _ = normalize_signal([4.0], cfg, scale=scale)
    assert ints2.tolist() == [20]
    with pytest.raises(ValueError):
        normalize_signal([np.nan], cfg)


@settings(max_examples=60)
@given(st.integers(1, 8), st.integers(1, 10), st.data())
def test_spike_times_are_legal(p, ell, data):
    cfg = CodecConfig(frame_len=ell, pop_size=p)
    count = data.draw(st.integers(0, p * ell))
    steps, channels = spike_times(count, cfg)
    assert len(steps) == count
    pairs = set(zip(steps.tolist(), channels.tolist()))
    assert len(pairs) == count  # one spike per channel per step
    assert steps.min(initial=0) >= 0 and steps.max(initial=0) < ell
    # counts per step differ by at most one
    per_step = np.bincount(steps, minlength=ell)
    assert per_step.max() - per_step.min() <= 1


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(1, 8), st.data())
def test_frame_events_counts_per_frame(p, ell, data):
    cfg = CodecConfig(frame_len=ell, pop_size=p)
    counts = np.array(data.draw(st.lists(st.integers(0, p * ell), min_size=1, max_size=10)))
    ev = frame_events(counts, cfg, channel_offset=3, start_step=2)
    frames = (ev.steps - 2) // ell
    assert np.array_equal(np.bincount(frames, minlength=len(counts)), counts)
    assert np.all((ev.channels >= 3) & (ev.channels < 3 + p))
    keys = ev.steps * 100 + ev.channels
    assert len(np.unique(keys)) == len(keys)


def test_encode_events_channel_layout():
    cfg = CodecConfig(frame_len=4, pop_size=2)
    u = np.array([[3, -2], [-1, 0]])
    ev = encode_events(u, cfg)
    pop = ev.channels // 2
    frame = ev.steps // 4
    got = np.zeros((2, 4), dtype=int)
    np.add.at(got, (frame, pop), 1)
    # populations: u+0, u-0 ... layout is j -> plus, n + j -> minus
    assert got.tolist() == [[3, 0, 0, 2], [0, 0, 1, 0]]
