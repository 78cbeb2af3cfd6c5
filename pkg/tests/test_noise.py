import numpy as np
import pytest

from ovcert.errors import ConfigError, DimensionMismatchError, EncoderUnavailableError
from ovcert.model import CacheOnlyEncoder, InputPoint, PromptHead, SyntheticEncoder, predict
from ovcert.noise import (
    ClassCounts,
    NoiseStream,
    count_prediction,
    gaussian_chunk,
    pred_under_noise,
    sample_under_noise,
    selection_chunks,
    splitmix64,
    trace_fingerprint,
)


def identity_head(k):
    return PromptHead(np.eye(k), [f"c{i}" for i in range(k)], "id-head")


def small_model(seed=5, dim_in=6, d=8, k=4):
    enc = SyntheticEncoder(dim_in, d, weight_seed=seed)
    rng = np.random.default_rng(seed + 1)
    m = rng.standard_normal((k, d))
    head = PromptHead(m / np.linalg.norm(m, axis=1, keepdims=True),
                      [str(i) for i in range(k)], "p-small")
    return enc, head


class TestSplitmix:
    def test_deterministic(self):
        assert splitmix64(12345, 0) == splitmix64(12345, 0)

    def test_distinct_chunks(self):
        seeds = {splitmix64(7, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_64bit_range(self):
        for i in range(100):
            assert 0 <= splitmix64((1 << 63) + 17, i) < (1 << 64)


class TestNoiseStream:
    def test_invalid_sigma(self):
        with pytest.raises(ConfigError):
            NoiseStream(0, 0.0)
        with pytest.raises(ConfigError):
            NoiseStream(0, -0.5)

    def test_chunk_repeatable(self):
        stream = NoiseStream(99, 0.25)
        a = gaussian_chunk(stream, 3, 10)
        b = gaussian_chunk(stream, 3, 10)
        assert np.array_equal(a, b)

    def test_chunks_differ(self):
        stream = NoiseStream(99, 0.25)
        assert not np.array_equal(gaussian_chunk(stream, 0, 10), gaussian_chunk(stream, 1, 10))

    def test_tiny_sigma_scale(self):
        stream = NoiseStream(1, 1e-9, chunk_size=100)
        chunk = gaussian_chunk(stream, 0, 50)
        assert np.max(np.abs(chunk)) < 1e-7

    def test_pooled_std(self):
        # 1e6 pooled entries at sigma=0.25; fixed seed, deterministic outcome
        stream = NoiseStream(2024, 0.25, chunk_size=400)
        vals = np.concatenate([
            gaussian_chunk(stream, i, 100).ravel() for i in range(25)
        ])
        assert vals.size == 1_000_000
        assert 0.2495 <= vals.std(ddof=1) <= 0.2505

    def test_shape(self):
        stream = NoiseStream(5, 0.1, chunk_size=37)
        assert gaussian_chunk(stream, 0, 9).shape == (37, 9)


class TestClassCounts:
    def test_sum_must_match(self):
        with pytest.raises(ConfigError):
            ClassCounts(np.array([1, 2]), 4)

    def test_top_class(self):
        assert ClassCounts(np.array([1, 5, 2]), 8).top_class == 1


class TestSampleUnderNoise:
    def test_dominant_class_tiny_sigma(self):
        enc = SyntheticEncoder.identity(4)
        head = identity_head(4)
        x = InputPoint(0, np.array([10.0, 0.0, 0.0, 0.0]))
        stream = NoiseStream(3, 1e-3)
        counts = sample_under_noise(enc, head, x, 500, stream)
        assert counts.counts[0] == 500

    def test_encoder_call_accounting(self):
        enc, head = small_model()
        x = InputPoint(0, np.ones(6))
        before = enc.eval_counter
        sample_under_noise(enc, head, x, 950, NoiseStream(8, 0.25))
        assert enc.eval_counter - before == 950

    def test_matches_brute_force_loop(self):
        enc, head = small_model(seed=21)
        x = InputPoint(0, np.linspace(-1, 1, 6))
        stream = NoiseStream(42, 0.5, chunk_size=50)
        counts = sample_under_noise(enc, head, x, 130, stream)

        # naive per-draw re-run on the same chunks
        naive = np.zeros(head.k, dtype=np.int64)
        drawn = 0
        idx = 0
        while drawn < 130:
            rows = min(50, 130 - drawn)
            noise = gaussian_chunk(stream, idx, 6)[:rows]
            for j in range(rows):
                emb = SyntheticEncoder(6, 8, weight_seed=21).encode(x.x + noise[j])
                naive[predict(head, emb)] += 1
            drawn += rows
            idx += 1
        assert np.array_equal(counts.counts, naive)

    def test_schedule_independence(self):
        enc, head = small_model(seed=9)
        x = InputPoint(0, np.ones(6) * 0.3)
        stream = NoiseStream(77, 0.25, chunk_size=400)
        whole = sample_under_noise(enc, head, x, 1200, stream)
        # three workers, one chunk each, pooled
        parts = [
            sample_under_noise(enc, head, x, 400, stream, chunk_offset=i)
            for i in range(3)
        ]
        pooled = sum(p.counts for p in parts)
        assert np.array_equal(whole.counts, pooled)

    def test_cache_only_encoder_raises(self):
        head = identity_head(4)
        x = InputPoint(0, np.zeros(4))
        with pytest.raises(EncoderUnavailableError):
            sample_under_noise(CacheOnlyEncoder(4, 4), head, x, 10, NoiseStream(0, 0.1))

    def test_zero_samples_rejected(self):
        enc, head = small_model()
        with pytest.raises(ConfigError):
            sample_under_noise(enc, head, InputPoint(0, np.ones(6)), 0, NoiseStream(0, 0.1))


class TestPredUnderNoise:
    def test_trace_histogram_equals_counts(self):
        enc, head = small_model(seed=33)
        x = InputPoint(1, np.linspace(0, 2, 6))
        stream = NoiseStream(5, 0.5, chunk_size=128)
        trace = pred_under_noise(enc, head, x, 700, stream)
        counts = sample_under_noise(enc, head, x, 700, stream)
        assert np.array_equal(trace.to_counts(head.k).counts, counts.counts)

    def test_identical_heads_identical_traces(self):
        enc, head = small_model(seed=4)
        clone = PromptHead(head.matrix, head.class_labels, "p-clone")
        x = InputPoint(0, np.ones(6))
        stream = NoiseStream(14, 0.25)
        a = pred_under_noise(enc, head, x, 800, stream)
        b = pred_under_noise(enc, clone, x, 800, stream)
        assert np.array_equal(a.preds, b.preds)

    def test_disagreement_matches_elementwise_recount(self):
        enc, _ = small_model(seed=6)
        rng = np.random.default_rng(0)
        m = rng.standard_normal((4, 8))
        head_a = PromptHead(m / np.linalg.norm(m, axis=1, keepdims=True),
                            ["0", "1", "2", "3"], "a")
        m2 = m + 0.15 * rng.standard_normal((4, 8))
        head_b = PromptHead(m2 / np.linalg.norm(m2, axis=1, keepdims=True),
                            ["0", "1", "2", "3"], "b")
        x = InputPoint(0, np.full(6, 0.4))
        stream = NoiseStream(3, 0.5)
        ta = pred_under_noise(enc, head_a, x, 2000, stream)
        tb = pred_under_noise(enc, head_b, x, 2000, stream)
        diff = int(np.sum(ta.preds != tb.preds))
        brute = sum(int(pa != pb) for pa, pb in zip(ta.preds.tolist(), tb.preds.tolist()))
        assert diff == brute

    def test_fingerprint_binds_stream(self):
        enc, head = small_model()
        x = InputPoint(0, np.ones(6))
        t1 = pred_under_noise(enc, head, x, 400, NoiseStream(1, 0.25))
        t2 = pred_under_noise(enc, head, x, 400, NoiseStream(2, 0.25))
        t3 = pred_under_noise(enc, head, x, 400, NoiseStream(1, 0.5))
        assert t1.stream_fingerprint != t2.stream_fingerprint
        assert t1.stream_fingerprint != t3.stream_fingerprint
        assert t1.stream_fingerprint == trace_fingerprint(1, 0.25, 0, 400)


class TestCountPrediction:
    def test_degenerate_rows(self):
        head = identity_head(3)
        row = np.zeros(3, dtype=np.float32)
        row[1] = 1.0
        rows = np.tile(row, (50, 1))
        c0, c = count_prediction(rows, head, 10, 40)
        assert c0.counts[1] == 10 and c.counts[1] == 40

    def test_zero_encoder_calls(self):
        enc, head = small_model()
        x = InputPoint(0, np.ones(6))
        stream = NoiseStream(12, 0.25, chunk_size=100)
        emb = np.concatenate([
            enc.encode_batch(x.x + gaussian_chunk(stream, 0, 6)),
            enc.encode_batch(x.x + gaussian_chunk(stream, 1, 6)),
        ])
        before = enc.eval_counter
        count_prediction(emb, head, 100, 100, block=100)
        assert enc.eval_counter == before

    def test_row_count_mismatch(self):
        head = identity_head(3)
        with pytest.raises(DimensionMismatchError):
            count_prediction(np.zeros((10, 3), dtype=np.float32), head, 5, 6)

    def test_n0_zero_rejected(self):
        head = identity_head(3)
        with pytest.raises(ConfigError):
            count_prediction(np.zeros((10, 3), dtype=np.float32), head, 0, 10)

    def test_matches_live_sampling(self):
        # cached rows counted offline == live sampling on the same stream
        enc, head = small_model(seed=2)
        x = InputPoint(0, np.linspace(-0.5, 0.5, 6))
        stream = NoiseStream(31, 0.25, chunk_size=64)
        n0, n = 100, 500
        c0 = selection_chunks(n0, stream.chunk_size)

        from ovcert.noise import _iter_noisy_batches

        sel = list(_iter_noisy_batches(enc, x, n0, stream, 0))
        est = list(_iter_noisy_batches(enc, x, n, stream, c0))
        rows = np.concatenate(sel + est)

        counts0, counts = count_prediction(rows, head, n0, n, block=stream.chunk_size)
        live0 = sample_under_noise(enc, head, x, n0, stream, chunk_offset=0)
        live = sample_under_noise(enc, head, x, n, stream, chunk_offset=c0)
        assert np.array_equal(counts0.counts, live0.counts)
        assert np.array_equal(counts.counts, live.counts)


class TestSelectionChunks:
    @pytest.mark.parametrize("n0,chunk,expect", [(100, 400, 1), (400, 400, 1), (401, 400, 2), (1, 1, 1)])
    def test_values(self, n0, chunk, expect):
        assert selection_chunks(n0, chunk) == expect
