"""Local-search proposal and embedding verification: exact-copy recovery,
scale hypotheses, NMS bounds, cosine-confidence arithmetic, and a staged
scene where raw correlation prefers a look-alike but the verifier picks the
degraded true target."""

import math

import numpy as np
import pytest

from splt.geometry import BBox, Region, iou
from splt.media import Frame, crop_resize, extract_features, resize_to
from splt.perusal import (DEFAULT_N_MAX, EmbeddingModel, NMS_IOU, Template,
                          confidence, embedding_confidence, make_template,
                          peruse, propose)


def _noise(seed, h, w, lo=0, hi=256):
    rng = np.random.default_rng(seed)
    return rng.integers(lo, hi, (h, w)).astype(np.float64)


def _frame_with(background, pastes):
    """uint8 frame = background with float textures pasted at (x, y)."""
    img = background.copy()
    for tex, x, y in pastes:
        h, w = tex.shape
        img[y:y + h, x:x + w] = tex
    return Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))


class TestEmbeddingModel:
    def test_embed_is_matrix_product(self):
        w = np.arange(6, dtype=np.float64).reshape(2, 3)
        m = EmbeddingModel(w)
        assert m.in_dim == 3 and m.out_dim == 2
        f = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(m.embed(f), w @ f)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            EmbeddingModel(np.zeros(4))
        with pytest.raises(ValueError):
            EmbeddingModel(np.array([[1.0, np.nan]]))

    def test_save_load_round_trip(self, tmp_path):
        m = EmbeddingModel.random(np.random.default_rng(3), 384, 16)
        path = tmp_path / "emb.blob"
        m.save(path)
        n = EmbeddingModel.load(path)
        assert np.array_equal(m.weights, n.weights)

    def test_random_is_seed_deterministic(self):
        a = EmbeddingModel.random(np.random.default_rng(5), 10, 4)
        b = EmbeddingModel.random(np.random.default_rng(5), 10, 4)
        assert np.array_equal(a.weights, b.weights)
        assert a.weights.shape == (4, 10)


class TestEmbeddingConfidence:
    def test_parallel_vectors_score_one(self):
        v = np.array([2.0, -1.0, 0.5])
        assert embedding_confidence(v, 3.0 * v) == pytest.approx(1.0)

    def test_45_degree_value(self):
        a = np.array([1.0, 0.0])
        b = np.array([1.0, 1.0])
        assert embedding_confidence(a, b) == pytest.approx(1 / math.sqrt(2))

    def test_orthogonal_scores_zero(self):
        assert embedding_confidence(np.array([1.0, 0.0]),
                                    np.array([0.0, 1.0])) == 0.0

    def test_negative_cosine_clamps_to_zero(self):
        v = np.array([1.0, 2.0])
        assert embedding_confidence(v, -v) == 0.0

    def test_zero_vector_scores_zero(self):
        v = np.array([1.0, 2.0])
        assert embedding_confidence(v, np.zeros(2)) == 0.0
        assert embedding_confidence(np.zeros(2), v) == 0.0

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a = rng.standard_normal(8)
            b = rng.standard_normal(8)
            base = embedding_confidence(a, b)
            for s in (1e-6, 3.0, 1e6):
                assert embedding_confidence(a, s * b) == pytest.approx(
                    base, abs=1e-12)
                assert embedding_confidence(s * a, b) == pytest.approx(
                    base, abs=1e-12)


class TestTemplate:
    def _model(self):
        return EmbeddingModel.random(np.random.default_rng(0), 384, 16)

    def test_make_template_fields(self):
        frame = _frame_with(_noise(7, 120, 160), [(_noise(8, 30, 30), 40, 50)])
        model = self._model()
        t = make_template(frame, BBox(40, 50, 30, 30), model)
        assert (t.box_w, t.box_h) == (30, 30)
        assert t.patch.side == 127
        assert np.array_equal(t.embedding, model.embed(t.feature))

    def test_template_patch_scores_confidence_one(self):
        frame = _frame_with(_noise(9, 120, 160), [(_noise(10, 30, 30), 40, 50)])
        model = self._model()
        t = make_template(frame, BBox(40, 50, 30, 30), model)
        assert confidence(model, t, t.patch) == pytest.approx(1.0, abs=1e-12)


class TestPropose:
    def _setup_exact_copy(self):
        tex = _noise(20, 30, 30)
        tmpl_frame = _frame_with(_noise(21, 180, 180, 80, 170), [(tex, 20, 20)])
        search_frame = _frame_with(_noise(22, 180, 180, 80, 170), [(tex, 78, 78)])
        model = EmbeddingModel.random(np.random.default_rng(0), 384, 16)
        template = make_template(tmpl_frame, BBox(20, 20, 30, 30), model)
        return template, search_frame

    def test_exact_copy_found_at_top_rank(self):
        template, frame = self._setup_exact_copy()
        # Region chosen so 300/120 = 2.5 maps the 30 px target to exactly
        # 75 px in region coordinates.
        cands = propose(template, Region(30, 30, 120, 120), frame,
                        prior_size=(30.0, 30.0))
        assert cands[0].similarity >= 0.8
        assert iou(cands[0].box, BBox(78, 78, 30, 30)) >= 0.9

    def test_default_prior_is_template_box_size(self):
        template, frame = self._setup_exact_copy()
        region = Region(30, 30, 120, 120)
        a = propose(template, region, frame)
        b = propose(template, region, frame, prior_size=(30.0, 30.0))
        assert len(a) == len(b)
        for ca, cb in zip(a, b):
            assert ca.box == cb.box and ca.similarity == cb.similarity

    def test_scale_hypothesis_recovers_grown_target(self):
        tex = _noise(23, 32, 32)
        big = resize_to(tex, 40, 40)  # 1.25x the template size
        tmpl_frame = _frame_with(_noise(24, 200, 240, 80, 170), [(tex, 30, 30)])
        search_frame = _frame_with(_noise(25, 200, 240, 80, 170), [(big, 60, 50)])
        model = EmbeddingModel.random(np.random.default_rng(0), 384, 16)
        template = make_template(tmpl_frame, BBox(30, 30, 32, 32), model)
        cands = propose(template, Region(0, 0, 240, 200), search_frame,
                        prior_size=(32.0, 32.0))
        best = cands[0]
        assert best.box.w == pytest.approx(40.0, abs=2.0)
        assert best.box.h == pytest.approx(40.0, abs=2.0)
        assert iou(best.box, BBox(60, 50, 40, 40)) >= 0.7

    def test_candidate_count_and_nms(self):
        template, frame = self._setup_exact_copy()
        cands = propose(template, Region(10, 10, 160, 160), frame,
                        prior_size=(30.0, 30.0))
        assert 1 <= len(cands) <= DEFAULT_N_MAX
        for i, a in enumerate(cands):
            for b in cands[i + 1:]:
                assert iou(a.box, b.box) <= NMS_IOU + 1e-9

    def test_n_max_one(self):
        template, frame = self._setup_exact_copy()
        cands = propose(template, Region(30, 30, 120, 120), frame, n_max=1,
                        prior_size=(30.0, 30.0))
        assert len(cands) == 1

    def test_n_max_zero_rejected(self):
        template, frame = self._setup_exact_copy()
        with pytest.raises(ValueError):
            propose(template, Region(30, 30, 120, 120), frame, n_max=0)

    def test_similarities_sorted_and_bounded(self):
        template, frame = self._setup_exact_copy()
        cands = propose(template, Region(0, 0, 180, 180), frame,
                        prior_size=(30.0, 30.0))
        sims = [c.similarity for c in cands]
        assert sims == sorted(sims, reverse=True)
        assert all(-1.0 <= s <= 1.0 for s in sims)

    def test_oversized_prior_falls_back_to_whole_region(self):
        template, frame = self._setup_exact_copy()
        region = Region(0, 0, 48, 48)
        cands = propose(template, region, frame, prior_size=(100.0, 100.0))
        assert len(cands) == 1
        assert cands[0].box == region.as_bbox()

    def test_boxes_lie_inside_region(self):
        template, frame = self._setup_exact_copy()
        region = Region(30, 30, 120, 120)
        for c in propose(template, region, frame, prior_size=(30.0, 30.0)):
            assert c.box.x >= region.x - 1e-6
            assert c.box.y >= region.y - 1e-6
            assert c.box.x + c.box.w <= region.x + region.w + 1e-6
            assert c.box.y + c.box.h <= region.y + region.h + 1e-6


class TestPeruse:
    def test_confidence_set_on_every_candidate(self):
        tex = _noise(30, 30, 30)
        frame = _frame_with(_noise(31, 180, 180, 80, 170), [(tex, 78, 78)])
        model = EmbeddingModel.random(np.random.default_rng(0), 384, 16)
        template = make_template(frame, BBox(78, 78, 30, 30), model)
        best, cands = peruse(model, template, Region(30, 30, 120, 120), frame)
        assert all(c.confidence is not None for c in cands)
        assert best.confidence == max(c.confidence for c in cands)
        assert 0.0 <= best.confidence <= 1.0

    def test_zero_model_ties_break_by_similarity(self):
        # All-zero weights embed everything to the zero vector, so every
        # candidate gets confidence exactly 0; the similarity tiebreak must
        # then pick the raw-correlation winner.
        tex = _noise(32, 30, 30)
        frame = _frame_with(_noise(33, 180, 180, 80, 170), [(tex, 78, 78)])
        ref = EmbeddingModel.random(np.random.default_rng(0), 384, 16)
        template_ref = make_template(frame, BBox(78, 78, 30, 30), ref)
        zero = EmbeddingModel(np.zeros((16, 384)))
        template = Template(patch=template_ref.patch,
                            feature=template_ref.feature,
                            embedding=zero.embed(template_ref.feature),
                            box_w=30.0, box_h=30.0)
        best, cands = peruse(zero, template, Region(30, 30, 120, 120), frame)
        assert all(c.confidence == 0.0 for c in cands)
        assert best.similarity == max(c.similarity for c in cands)

    def test_verifier_overrides_raw_similarity(self):
        # The true target appears under a strong illumination ramp (poison
        # for whole-patch correlation, harmless to block-normalized
        # features); a 60/40 texture mixture look-alike out-correlates it.
        # A verifier built to separate the two must still pick the target.
        tex_t = _noise(40, 32, 32, 30, 220)
        tex_o = _noise(41, 32, 32, 30, 220)
        ramp = np.linspace(0.15, 1.0, 32)[None, :]
        pos_tex = np.clip(tex_t * ramp, 0, 255)
        mix = 0.6 * (tex_t - tex_t.mean()) + 0.4 * (tex_o - tex_o.mean())
        neg_tex = np.clip(mix / mix.std() * tex_t.std() + tex_t.mean(), 0, 255)

        tmpl_frame = _frame_with(_noise(42, 160, 200, 90, 160),
                                 [(tex_t, 84, 60)])
        search_frame = _frame_with(_noise(43, 160, 200, 90, 160),
                                   [(pos_tex, 24, 30), (neg_tex, 130, 96)])
        pos_box = BBox(24, 30, 32, 32)
        neg_box = BBox(130, 96, 32, 32)

        f_tmpl = extract_features(crop_resize(tmpl_frame, BBox(84, 60, 32, 32), 127))
        f_pos = extract_features(crop_resize(search_frame, pos_box, 127))
        f_neg = extract_features(crop_resize(search_frame, neg_box, 127))
        u = f_pos / np.linalg.norm(f_pos)
        v = f_neg / np.linalg.norm(f_neg)
        # Construction preconditions: the template's features side with the
        # shaded target, not the mixture.
        assert float(f_tmpl @ u) > float(f_tmpl @ v)

        model = EmbeddingModel((u - v)[None, :])
        template = make_template(tmpl_frame, BBox(84, 60, 32, 32), model)
        region = Region(0, 0, 200, 160)
        best, cands = peruse(model, template, region, search_frame,
                             prior_size=(32.0, 32.0))

        near_pos = max(cands, key=lambda c: iou(c.box, pos_box))
        near_neg = max(cands, key=lambda c: iou(c.box, neg_box))
        assert iou(near_pos.box, pos_box) >= 0.5
        assert iou(near_neg.box, neg_box) >= 0.5
        # Raw correlation is fooled by the mixture...
        assert near_neg.similarity > near_pos.similarity
        # ...the one-dimensional discriminator rejects it outright...
        assert near_neg.confidence == 0.0
        # ...and perusal returns the true target.
        assert iou(best.box, pos_box) >= 0.5
        assert best.confidence > near_neg.confidence
