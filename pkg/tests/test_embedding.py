import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from addrmatch import embedding
from addrmatch.embedding import (DIM, BiTrainerConfig, DegenerateData,
                                 ZeroVector, contrastive_grad,
                                 contrastive_loss, cosine, embed, embed_batch,
                                 featurize, init_weights, load_weights,
                                 save_weights, train_biencoder,
                                 weights_fingerprint)


class FakePair:
    def __init__(self, a, b, y):
        self.unnorm_text = a
        self.norm_text = b
        self.label = y


PAIRS = [
    FakePair("rua das flores 12", "Rua das Flores 12 1000-001 Lisboa", 1),
    FakePair("av liberdade 7", "Avenida da Liberdade 7 1250-001 Lisboa", 1),
    FakePair("rua das flores 12", "Travessa do Ouro 3 4000-002 Porto", 0),
    FakePair("av liberdade 7", "Largo do Carmo 9 1200-003 Lisboa", 0),
]


class TestFeaturize:
    def test_unit_norm(self):
        f = featurize("Rua das Flores 12")
        assert np.linalg.norm(f.counts) == pytest.approx(1.0, abs=1e-12)

    def test_empty_text(self):
        f = featurize("")
        assert f.indices.size == 0 and f.counts.size == 0

    def test_deterministic(self):
        a, b = featurize("rua x"), featurize("rua x")
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.counts, b.counts)

    def test_hand_computed_single_token(self):
        # normalize("Rua") = ["rua"]; grams over "^rua$":
        # unigram w:rua; 2-grams ^r, ru, ua, a$; 3-grams ^ru, rua, ua$;
        # 4-grams ^rua, rua$ -> 10 distinct grams, all count 1
        f = featurize("Rua", size=4096)
        grams = ["w:rua", "^r", "ru", "ua", "a$", "^ru", "rua", "ua$",
                 "^rua", "rua$"]
        want = {}
        for g in grams:
            i = zlib.crc32(g.encode()) % 4096
            want[i] = want.get(i, 0.0) + 1.0
        norm = math.sqrt(sum(c * c for c in want.values()))
        assert set(f.indices.tolist()) == set(want)
        for idx, cnt in zip(f.indices, f.counts):
            assert cnt == pytest.approx(want[int(idx)] / norm, abs=1e-12)

    def test_indices_bounded_and_sorted(self):
        f = featurize("rua das flores 12 1000-001 lisboa", size=300)
        assert (f.indices >= 0).all() and (f.indices < 300).all()
        assert (np.diff(f.indices) > 0).all()

    def test_size_validated(self):
        with pytest.raises(ValueError):
            featurize("rua", size=16)

    def test_case_insensitive(self):
        a, b = featurize("RUA DAS FLORES"), featurize("rua das flores")
        assert np.array_equal(a.indices, b.indices)


class TestEmbed:
    def test_shape_and_range(self):
        w = init_weights(seed=0)
        e = embed("rua das flores", w)
        assert e.shape == (DIM,)
        assert (np.abs(e) < 1.0).all()

    def test_empty_text_is_zero(self):
        w = init_weights(seed=0)
        assert np.array_equal(embed("", w), np.zeros(DIM))

    def test_batch_matches_scalar(self):
        w = init_weights(seed=1)
        texts = ["rua x", "avenida y 3", "largo z"]
        batch = embed_batch(texts, w)
        for i, t in enumerate(texts):
            assert np.array_equal(batch[i], embed(t, w))

    def test_matches_manual_projection(self):
        w = init_weights(seed=2)
        f = featurize("rua das flores", w.feature_size)
        want = np.tanh(f.counts @ w.matrix[f.indices])
        assert np.array_equal(embed("rua das flores", w), want)


class TestCosine:
    def test_parallel(self):
        v = np.arange(1, DIM + 1, dtype=float)
        assert cosine(v, 3.0 * v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        a = np.zeros(4)
        a[0] = 1.0
        b = np.zeros(4)
        b[1] = 1.0
        assert cosine(a, b) == 0.0

    def test_antiparallel(self):
        v = np.ones(8)
        assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_raises(self):
        with pytest.raises(ZeroVector):
            cosine(np.zeros(4), np.ones(4))

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_bounded(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=16), rng.normal(size=16)
        assert -1.0 - 1e-12 <= cosine(a, b) <= 1.0 + 1e-12


class TestLoss:
    def test_positive_identical_is_zero(self):
        v = np.ones(8)
        assert contrastive_loss(v, v, 1) == pytest.approx(0.0, abs=1e-24)

    def test_positive_quadratic_in_distance(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])  # cosine 0, D=1
        assert contrastive_loss(a, b, 1) == pytest.approx(0.5, abs=1e-12)

    def test_negative_beyond_margin_is_zero(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])  # D=1 > margin .5
        assert contrastive_loss(a, b, 0) == 0.0

    def test_negative_identical(self):
        v = np.ones(8)  # D=0, hinge = margin
        assert contrastive_loss(v, v, 0, margin=0.5) == pytest.approx(0.125, abs=1e-12)

    def test_margin_parameter(self):
        v = np.ones(8)
        assert contrastive_loss(v, v, 0, margin=1.0) == pytest.approx(0.5, abs=1e-12)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.normal(size=8), rng.normal(size=8)
            assert contrastive_loss(a, b, int(rng.integers(2))) >= 0.0


class TestGrad:
    def _fd(self, a, b, y, margin=0.5, h=1e-6):
        ga = np.zeros_like(a)
        gb = np.zeros_like(b)
        for i in range(a.size):
            ap, am = a.copy(), a.copy()
            ap[i] += h
            am[i] -= h
            ga[i] = (contrastive_loss(ap, b, y, margin)
                     - contrastive_loss(am, b, y, margin)) / (2 * h)
            bp, bm = b.copy(), b.copy()
            bp[i] += h
            bm[i] -= h
            gb[i] = (contrastive_loss(a, bp, y, margin)
                     - contrastive_loss(a, bm, y, margin)) / (2 * h)
        return ga, gb

    @pytest.mark.parametrize("y", [0, 1])
    def test_matches_finite_differences(self, y):
        rng = np.random.default_rng(3 + y)
        for _ in range(20):
            a, b = rng.normal(size=12), rng.normal(size=12)
            ga, gb = contrastive_grad(a, b, y)
            fa, fb = self._fd(a, b, y)
            assert np.allclose(ga, fa, atol=1e-6)
            assert np.allclose(gb, fb, atol=1e-6)

    def test_positive_identical_has_zero_grad(self):
        v = np.ones(8)
        ga, gb = contrastive_grad(v, v, 1)
        assert np.allclose(ga, 0.0, atol=1e-12)
        assert np.allclose(gb, 0.0, atol=1e-12)

    def test_negative_beyond_margin_zero_grad(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        ga, gb = contrastive_grad(a, b, 0)
        assert np.allclose(ga, 0.0) and np.allclose(gb, 0.0)

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVector):
            contrastive_grad(np.zeros(4), np.ones(4), 1)


class TestSchedule:
    def test_warmup_then_decay(self):
        cfg = BiTrainerConfig(warmup_steps=10, learning_rate=1.0)
        lrs = [embedding._lr_at(s, 30, cfg) for s in range(30)]
        assert lrs[0] == pytest.approx(0.1)
        assert lrs[9] == pytest.approx(1.0)
        assert all(x >= y for x, y in zip(lrs[9:], lrs[10:]))
        assert lrs[-1] > 0.0

    def test_monotone_warmup(self):
        cfg = BiTrainerConfig(warmup_steps=100, learning_rate=0.01)
        lrs = [embedding._lr_at(s, 1000, cfg) for s in range(100)]
        assert all(x < y for x, y in zip(lrs, lrs[1:]))


class TestTraining:
    def test_deterministic_bitwise(self):
        cfg = BiTrainerConfig(epochs=2, seed=7, feature_size=1024)
        w1 = train_biencoder(PAIRS, cfg)
        w2 = train_biencoder(PAIRS, cfg)
        assert np.array_equal(w1.matrix, w2.matrix)
        assert w1.epoch_losses == w2.epoch_losses

    def test_seed_changes_result(self):
        w1 = train_biencoder(PAIRS, BiTrainerConfig(epochs=1, seed=0, feature_size=1024))
        w2 = train_biencoder(PAIRS, BiTrainerConfig(epochs=1, seed=1, feature_size=1024))
        assert not np.array_equal(w1.matrix, w2.matrix)

    def test_separates_pairs(self):
        w = train_biencoder(PAIRS, BiTrainerConfig(epochs=30, seed=0,
                                                   feature_size=1024,
                                                   warmup_steps=2))
        pos = cosine(embed(PAIRS[0].unnorm_text, w), embed(PAIRS[0].norm_text, w))
        neg = cosine(embed(PAIRS[2].unnorm_text, w), embed(PAIRS[2].norm_text, w))
        assert pos > neg

    def test_single_label_rejected(self):
        with pytest.raises(DegenerateData):
            train_biencoder([PAIRS[0], PAIRS[1]], BiTrainerConfig(epochs=1))

    def test_empty_rejected(self):
        with pytest.raises(DegenerateData):
            train_biencoder([], BiTrainerConfig(epochs=1))

    def test_loss_recorded_per_epoch(self):
        w = train_biencoder(PAIRS, BiTrainerConfig(epochs=3, seed=0,
                                                   feature_size=1024))
        assert len(w.epoch_losses) == 3
        assert all(l >= 0.0 for l in w.epoch_losses)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BiTrainerConfig(margin=0.0)
        with pytest.raises(ValueError):
            BiTrainerConfig(epochs=0)
        with pytest.raises(ValueError):
            BiTrainerConfig(batch_size=0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        w = init_weights(size=512, seed=9)
        p = tmp_path / "w.bin"
        save_weights(w, p)
        loaded = load_weights(p)
        assert loaded.seed == 9
        # float32 round trip: equality at float32 precision
        assert np.array_equal(loaded.matrix,
                              w.matrix.astype(np.float32).astype(np.float64))

    def test_fingerprint_stable_through_save(self, tmp_path):
        w = init_weights(size=512, seed=9)
        p = tmp_path / "w.bin"
        save_weights(w, p)
        assert weights_fingerprint(load_weights(p)) == weights_fingerprint(w)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_weights(p)

    def test_truncated(self, tmp_path):
        w = init_weights(size=512, seed=1)
        p = tmp_path / "w.bin"
        save_weights(w, p)
        data = p.read_bytes()
        p.write_bytes(data[:-100])
        with pytest.raises(ValueError):
            load_weights(p)

    def test_fingerprint_distinguishes(self):
        assert weights_fingerprint(init_weights(512, 0)) != \
            weights_fingerprint(init_weights(512, 1))
