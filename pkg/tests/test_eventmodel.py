import numpy as np
import pytest
from hypothesis import given, strategies as st

from genrestat import features, ingest, nn, synthkit
from genrestat.errors import (
    ContractViolation,
    DegenerateTrainingError,
    EmptyProgrammeError,
    FormatError,
    InvalidProbabilitiesError,
    NumericOverflowError,
)
from genrestat.eventmodel import (
    CnnConfig,
    SegmentProbabilities,
    backward,
    forward,
    forward_logits,
    init_weights,
    load_probabilities,
    load_weights,
    save_probabilities,
    save_weights,
    shape_trace,
    tag_accuracy,
    train_events,
    trainable,
)

# Output column of the architecture table, width 1 and 527 events.
TABLE_OUTPUTS = [
    (64, 496, 64), (64, 496, 64),
    (64, 496, 128), (64, 496, 128),
    (64, 496, 256), (64, 496, 256),
    (64, 496, 512), (64, 496, 512),
    (32, 248, 512),
    (32, 248, 1024), (32, 248, 1024),
    (32, 248, 2048), (32, 248, 2048),
    (2048,), (2048,), (527,),
]

TINY = CnnConfig(n_events=4, width_scale=1 / 16, seed=3, dropout=False)


def _loss(w, x, targets, cfg=TINY):
    logits, _, _ = forward_logits(x, w, cfg, train_mode=True)
    return nn.softmax_cross_entropy(logits, targets)[0]


def _numeric_grad(f, arr, idx, h=1e-6):
    old = arr[idx]
    arr[idx] = old + h
    up = f()
    arr[idx] = old - h
    down = f()
    arr[idx] = old
    return (up - down) / (2 * h)


def _rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def _check_layer(fwd, bwd, inputs, rng, n_probe=12):
    """Compare analytic input/parameter gradients of sum(out * g) with central differences."""
    out = fwd(*inputs)
    g = rng.standard_normal(out.shape)
    grads = bwd(g)
    for arr, grad in zip(inputs, grads):
        flat = rng.choice(arr.size, size=min(n_probe, arr.size), replace=False)
        idxs = [np.unravel_index(i, arr.shape) for i in flat]
        num = [_numeric_grad(lambda: float(np.sum(fwd(*inputs) * g)), arr, i) for i in idxs]
        ana = [grad[i] for i in idxs]
        assert _rel_err(ana, num) < 1e-6


class TestArchitecture:
    def test_shape_trace_full_width(self):
        assert shape_trace(CnnConfig(n_events=527, width_scale=1.0)) == TABLE_OUTPUTS

    def test_executed_trace_matches_symbolic(self, rng):
        cfg = CnnConfig(n_events=16, width_scale=1 / 32)
        w = init_weights(cfg)
        trace = []
        forward_logits(rng.standard_normal((1, 64, 496, 1)).astype(np.float32), w, cfg, trace=trace)
        assert [tuple(t) for t in trace] == shape_trace(cfg)

    def test_scaled_channels(self):
        cfg = CnnConfig(n_events=16, width_scale=1 / 32)
        assert cfg.conv_channels == [2, 2, 4, 4, 8, 8, 16, 16, 32, 32, 64, 64]
        assert cfg.fc_width == 64
        assert CnnConfig(width_scale=1e-4).conv_channels == [1] * 12

    @pytest.mark.parametrize("kw", [{"n_events": 1}, {"width_scale": 0.0}, {"width_scale": 1.5}])
    def test_bad_config(self, kw):
        with pytest.raises(ContractViolation):
            CnnConfig(**kw)

    def test_init_is_seeded(self):
        a, b = init_weights(TINY), init_weights(TINY)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        c = init_weights(CnnConfig(n_events=4, width_scale=1 / 16, seed=4))
        assert not np.array_equal(a["conv0.weight"], c["conv0.weight"])
        assert np.all(a["bn0.gamma"] == 1) and np.all(a["bn0.running_var"] == 1)


class TestForward:
    @given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 30.0))
    def test_rows_are_distributions(self, seed, scale):
        rng = np.random.default_rng(seed)
        cfg = CnnConfig(n_events=5, width_scale=1 / 32, seed=seed)
        w = init_weights(cfg)
        p = forward(scale * rng.standard_normal((2, 8, 12)), w, cfg, input_hw=None)
        assert p.shape == (2, 5)
        assert np.all((p >= 0) & (p <= 1))
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-5)

    def test_batch_invariance(self, rng):
        cfg = CnnConfig(n_events=16, width_scale=1 / 32, seed=1)
        w = init_weights(cfg)
        for k in w:
            if k.endswith("running_mean"):
                w[k][...] = rng.normal(0, 0.1, w[k].shape)
            elif k.endswith("running_var"):
                w[k][...] = rng.uniform(0.5, 2.0, w[k].shape)
        x = rng.standard_normal((5, 64, 496)).astype(np.float32)
        batched = forward(x, w, cfg, batch_size=5)
        single = np.concatenate([forward(x[i:i + 1], w, cfg) for i in range(5)])
        assert np.max(np.abs(batched - single)) < 1e-6

    def test_eval_deterministic_train_seeded(self, rng):
        cfg = CnnConfig(n_events=4, width_scale=1 / 32, seed=0, dropout=True)
        w = init_weights(cfg)
        x = rng.standard_normal((3, 16, 24))
        assert np.array_equal(forward(x, w, cfg, input_hw=None), forward(x, w, cfg, input_hw=None))
        a = forward(x, w, cfg, train_mode=True, rng=np.random.default_rng(5), input_hw=None)
        b = forward(x, w, cfg, train_mode=True, rng=np.random.default_rng(5), input_hw=None)
        c = forward(x, w, cfg, train_mode=True, rng=np.random.default_rng(6), input_hw=None)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_shape_mismatch(self, rng):
        cfg = CnnConfig(n_events=4, width_scale=1 / 32)
        w = init_weights(cfg)
        with pytest.raises(ContractViolation):
            forward(rng.standard_normal((1, 64, 495)), w, cfg)
        with pytest.raises(ContractViolation):
            forward(rng.standard_normal((1, 64, 496)), init_weights(TINY), cfg)

    def test_non_finite(self, rng):
        cfg = CnnConfig(n_events=4, width_scale=1 / 32)
        x = rng.standard_normal((1, 64, 496))
        x[0, 3, 3] = np.nan
        with pytest.raises(NumericOverflowError):
            forward(x, init_weights(cfg), cfg)

    @given(seed=st.integers(0, 10_000))
    def test_global_pool_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        fmap = rng.standard_normal((2, 5, 7, 3))
        flat = fmap.reshape(2, 35, 3)[:, rng.permutation(35)].reshape(2, 5, 7, 3)
        a, _ = nn.global_pool_forward(fmap)
        b, _ = nn.global_pool_forward(flat)
        assert np.allclose(a, b, atol=1e-15)
        assert np.allclose(a, fmap.max(axis=(1, 2)) + fmap.mean(axis=(1, 2)))


class TestGradients:
    def test_conv(self, rng):
        x, w = rng.standard_normal((2, 5, 6, 3)), rng.standard_normal((3, 3, 3, 4))
        cache = {}

        def fwd(x, w):
            out, cache["c"] = nn.conv3x3_forward(x, w)
            return out

        _check_layer(fwd, lambda g: nn.conv3x3_backward(g, cache["c"], w), [x, w], rng)

    def test_batchnorm(self, rng):
        x = rng.standard_normal((3, 4, 5, 2))
        gamma, beta = rng.uniform(0.5, 2, 2), rng.standard_normal(2)
        cache = {}

        def fwd(x, gamma, beta):
            out, cache["c"], _ = nn.batchnorm_forward(x, gamma, beta, np.zeros(2), np.ones(2), True)
            return out

        _check_layer(fwd, lambda g: nn.batchnorm_backward(g, cache["c"]), [x, gamma, beta], rng)

    def test_avgpool(self, rng):
        x = rng.standard_normal((2, 6, 8, 3))
        _check_layer(lambda x: nn.avgpool2_forward(x)[0],
                     lambda g: (nn.avgpool2_backward(g, x.shape),), [x], rng)

    def test_global_pool(self, rng):
        x = rng.standard_normal((2, 4, 5, 3))
        cache = {}

        def fwd(x):
            out, cache["c"] = nn.global_pool_forward(x)
            return out

        _check_layer(fwd, lambda g: (nn.global_pool_backward(g, cache["c"]),), [x], rng)

    def test_dense(self, rng):
        x, w, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 3)), rng.standard_normal(3)
        cache = {}

        def fwd(x, w, b):
            out, cache["c"] = nn.dense_forward(x, w, b)
            return out

        _check_layer(fwd, lambda g: nn.dense_backward(g, cache["c"], w), [x, w, b], rng)

    def test_softmax_cross_entropy(self, rng):
        z = rng.standard_normal((3, 5))
        y = nn.one_hot(np.array([0, 4, 2]), 5, np.float64)
        _, dz, _ = nn.softmax_cross_entropy(z, y)
        num = np.zeros_like(z)
        for idx in np.ndindex(z.shape):
            num[idx] = _numeric_grad(lambda: nn.softmax_cross_entropy(z, y)[0], z, idx)
        assert _rel_err(dz, num) < 1e-7

    def test_full_network(self, rng):
        w = init_weights(TINY, dtype=np.float64)
        for k in w:
            if k.endswith(("gamma", "beta")):
                w[k][...] = rng.uniform(0.5, 1.5, w[k].shape) if k.endswith("gamma") else rng.normal(0, 0.1, w[k].shape)
        x = rng.standard_normal((3, 16, 24, 1))
        targets = nn.one_hot(np.array([0, 2, 3]), 4, np.float64)
        logits, caches, _ = forward_logits(x, w, TINY, train_mode=True, keep_cache=True)
        _, dlogits, _ = nn.softmax_cross_entropy(logits, targets)
        grads = backward(dlogits, caches, w)
        assert set(grads) == {k for k in w if trainable(k)}
        for name, grad in grads.items():
            arr = w[name]
            picks = rng.choice(arr.size, size=min(6, arr.size), replace=False)
            idxs = [np.unravel_index(i, arr.shape) for i in picks]
            num = [_numeric_grad(lambda: _loss(w, x, targets), arr, i) for i in idxs]
            assert _rel_err([grad[i] for i in idxs], num) < 1e-4, name


def _clip_batch(rng, n_per_class=6, n_classes=3):
    """Spectrogram-like clips: each class lights up its own band of mel rows."""
    x = rng.normal(-5, 0.5, (n_per_class * n_classes, 16, 24))
    y = np.repeat(np.arange(n_classes), n_per_class)
    for i, c in enumerate(y):
        x[i, 4 * c: 4 * c + 4] += 4
    return x.astype(np.float32), y


class TestTraining:
    def test_zero_epochs_returns_init(self, rng):
        x, y = _clip_batch(rng)
        cfg = CnnConfig(n_events=3, width_scale=1 / 32, seed=9)
        res = train_events(x, y, cfg, epochs=0)
        init = init_weights(cfg)
        assert res.loss_trace == []
        assert all(np.array_equal(res.weights[k], init[k]) for k in init)

    def test_learns_and_is_deterministic(self, rng):
        x, y = _clip_batch(rng)
        cfg = CnnConfig(n_events=3, width_scale=1 / 32, seed=2, dropout=False)
        a = train_events(x, y, cfg, epochs=8, batch_size=6)
        b = train_events(x, y, cfg, epochs=8, batch_size=6)
        assert np.all(np.isfinite(a.loss_trace))
        assert a.loss_trace == b.loss_trace
        assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
        assert a.loss_trace[-1] < a.loss_trace[0]
        probs = forward(x, a.weights, cfg, input_hw=None)
        assert np.mean(probs.argmax(axis=1) == y) == 1.0

    def test_soft_targets(self, rng):
        x, y = _clip_batch(rng)
        soft = np.eye(3)[y] * 0.8 + 0.2 / 3
        cfg = CnnConfig(n_events=3, width_scale=1 / 32, seed=2, dropout=False)
        res = train_events(x, soft, cfg, epochs=2, batch_size=6)
        assert np.all(np.isfinite(res.loss_trace))
        with pytest.raises(ContractViolation):
            train_events(x, soft * 2, cfg, epochs=1)

    def test_single_class(self, rng):
        x, _ = _clip_batch(rng)
        with pytest.raises(DegenerateTrainingError):
            train_events(x, np.zeros(len(x), dtype=int), CnnConfig(n_events=3), epochs=1)

    def test_label_range(self, rng):
        x, y = _clip_batch(rng)
        with pytest.raises(ContractViolation):
            train_events(x, y + 1, CnnConfig(n_events=3), epochs=1)

    def test_random_crops(self, rng):
        x, y = _clip_batch(rng)
        cfg = CnnConfig(n_events=3, width_scale=1 / 32, seed=2, dropout=False)
        res = train_events(x, y, cfg, epochs=2, batch_size=6, crop_frames=8)
        assert np.all(np.isfinite(res.loss_trace))


class TestToyTagger:
    def test_held_out_tag_accuracy(self):
        # Clean single-event clips of the 16 default signatures, 1/32 width.
        sigs = synthkit.default_signatures(16)
        fb = features.mel_filterbank()

        def clips(per_event, offset):
            x = [features.log_mel(ingest.segment(synthkit.gen_event_clip(s, 5.0, offset + 100 * e + j))[0], fb).values
                 for e, s in enumerate(sigs) for j in range(per_event)]
            return np.stack(x), np.repeat(np.arange(16), per_event)

        x_tr, y_tr = clips(8, 0)
        x_te, y_te = clips(3, 50)
        cfg = CnnConfig(n_events=16, width_scale=1 / 32, seed=1, dropout=False)
        res = train_events(x_tr, y_tr, cfg, epochs=5, batch_size=16, crop_frames=64)
        assert tag_accuracy(x_te, y_te, res.weights, cfg) >= 0.95


class TestProbabilityFiles:
    def test_round_trip(self, tmp_path, rng):
        probs = nn.softmax(rng.standard_normal((10, 16))).astype(np.float32)
        save_probabilities(SegmentProbabilities(probs, "prog"), tmp_path / "p.segp")
        back = load_probabilities(tmp_path / "p.segp")
        assert back.probs.tobytes() == probs.tobytes()
        assert back.programme_id == "p"
        raw = (tmp_path / "p.segp").read_bytes()
        assert raw[:4] == b"SEGP" and len(raw) == 16 + 4 * 160

    def test_bad_row_sum(self, tmp_path):
        probs = np.full((2, 4), 0.25, dtype=np.float32)
        probs[1] = [0.5, 0.0, 0.0, 0.0]
        path = tmp_path / "bad.segp"
        # Bypass the writer's validation to produce the corrupt file.
        import struct

        path.write_bytes(struct.pack("<4sIII", b"SEGP", 1, 2, 4) + probs.astype("<f4").tobytes())
        with pytest.raises(InvalidProbabilitiesError):
            load_probabilities(path)
        with pytest.raises(InvalidProbabilitiesError):
            save_probabilities(SegmentProbabilities(probs), tmp_path / "x.segp")

    def test_empty(self, tmp_path):
        import struct

        (tmp_path / "e.segp").write_bytes(struct.pack("<4sIII", b"SEGP", 1, 0, 16))
        with pytest.raises(EmptyProgrammeError):
            load_probabilities(tmp_path / "e.segp")

    @pytest.mark.parametrize("magic,version", [(b"SEGQ", 1), (b"SEGP", 2)])
    def test_bad_header(self, tmp_path, magic, version):
        import struct

        body = np.full((1, 4), 0.25, dtype="<f4").tobytes()
        (tmp_path / "h.segp").write_bytes(struct.pack("<4sIII", magic, version, 1, 4) + body)
        with pytest.raises(FormatError):
            load_probabilities(tmp_path / "h.segp")

    def test_truncated_payload(self, tmp_path):
        probs = np.full((3, 4), 0.25, dtype=np.float32)
        save_probabilities(SegmentProbabilities(probs), tmp_path / "t.segp")
        raw = (tmp_path / "t.segp").read_bytes()
        (tmp_path / "t.segp").write_bytes(raw[:-4])
        with pytest.raises(FormatError):
            load_probabilities(tmp_path / "t.segp")


class TestWeightFiles:
    def test_round_trip(self, tmp_path):
        cfg = CnnConfig(n_events=16, width_scale=1 / 32, seed=4)
        w = init_weights(cfg)
        w["bn3.running_var"][...] = 1.7
        save_weights(tmp_path / "w.json", w, cfg, {"note": "x"})
        back, back_cfg, meta = load_weights(tmp_path / "w.json")
        assert back_cfg == cfg
        assert meta["note"] == "x"
        assert list(back) == list(w)
        assert all(back[k].tobytes() == w[k].tobytes() for k in w)

    def test_wrong_kind(self, tmp_path):
        from genrestat.weightio import save_tensors

        save_tensors(tmp_path / "o.json", {"a": np.zeros(2)}, {"model": "other"})
        with pytest.raises(FormatError):
            load_weights(tmp_path / "o.json")

    def test_shape_mismatch(self, tmp_path):
        cfg = CnnConfig(n_events=16, width_scale=1 / 32)
        w = init_weights(cfg)
        save_weights(tmp_path / "w.json", w, CnnConfig(n_events=8, width_scale=1 / 32))
        with pytest.raises(FormatError):
            load_weights(tmp_path / "w.json")
