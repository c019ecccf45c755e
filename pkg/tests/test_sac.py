import math

import numpy as np
import pytest

from spmt.sac import (
    CorrespondenceField,
    SacConfig,
    alpha_blend,
    apply_transfer_mask,
    correspond,
    extract_mask_patches,
    extract_patches,
    ncc_matrix,
    reconstruct,
    sac_full,
    sem_ncc_matrix,
)
from spmt.tensor import FeatureMap, MaskPyramid, mask_pyramid

from conftest import onehot_from_labels, random_feature_map, random_label_mask
from oracles import naive_level, naive_ncc, patches_of


def small_mask_pyramid(rng, base, labels=(0, 1, 4, 11)):
    full = random_label_mask(rng, base, base, labels)
    return mask_pyramid(onehot_from_labels(full.labels))


class TestExtractPatches:
    def test_tiling_count(self, rng):
        g = extract_patches(random_feature_map(rng, 1, 4, 4), 2)
        assert g.n_patches == 4 and (g.grid_h, g.grid_w) == (2, 2)

    def test_k1_gives_pixel_vectors(self, rng):
        fm = random_feature_map(rng, 5, 3, 7)
        g = extract_patches(fm, 1)
        assert g.n_patches == 21
        assert np.array_equal(g.patches[0], fm.data[:, 0, 0])

    def test_default_level1_schedule(self, rng):
        g = extract_patches(random_feature_map(rng, 3, 256, 256), 8)
        assert g.n_patches == 1024 and g.grid_h == g.grid_w == 32

    def test_rejects_oversized_patch(self, rng):
        with pytest.raises(ValueError, match="exceeds"):
            extract_patches(random_feature_map(rng, 1, 4, 4), 8)

    def test_row_major_order(self, rng):
        fm = random_feature_map(rng, 2, 4, 6)
        g = extract_patches(fm, 2)
        # patch index 1 is the block at rows 0:2, cols 2:4
        assert np.array_equal(g.patches[1], fm.data[:, 0:2, 2:4].ravel())


class TestNcc:
    def test_self_correlation_is_one(self, rng):
        fm = random_feature_map(rng, 2, 4, 4)
        g = extract_patches(fm, 2)
        m = ncc_matrix(g, g)
        assert np.allclose(np.diag(m), 1.0, atol=1e-6)

    def test_orthogonal_patches(self):
        a = FeatureMap(np.array([[[1.0]], [[0.0]]], np.float32))
        b = FeatureMap(np.array([[[0.0]], [[1.0]]], np.float32))
        m = ncc_matrix(extract_patches(a, 1), extract_patches(b, 1))
        assert m[0, 0] == pytest.approx(0.0)

    def test_matches_bruteforce_oracle(self, rng):
        fx = random_feature_map(rng, 8, 16, 16)
        fy = random_feature_map(rng, 8, 16, 16)
        got = ncc_matrix(extract_patches(fx, 2), extract_patches(fy, 2))
        want = naive_ncc(patches_of(fx.data, 2), patches_of(fy.data, 2), 1e-8)
        assert np.max(np.abs(got - want)) < 1e-6
        assert np.all(got <= 1 + 1e-6) and np.all(got >= -1 - 1e-6)

    def test_rejects_mismatched_grids(self, rng):
        a = extract_patches(random_feature_map(rng, 2, 4, 4), 2)
        b = extract_patches(random_feature_map(rng, 3, 4, 4), 2)
        with pytest.raises(ValueError, match="disagree"):
            ncc_matrix(a, b)


class TestSemNcc:
    def test_k1_same_label_is_one(self):
        a = onehot_from_labels(np.full((2, 2), 3, np.uint8))
        b = onehot_from_labels(np.full((2, 2), 3, np.uint8))
        m = sem_ncc_matrix(extract_mask_patches(a, 1), extract_mask_patches(b, 1))
        assert np.allclose(m, 1.0)

    def test_k1_different_label_is_zero(self):
        a = onehot_from_labels(np.full((2, 2), 3, np.uint8))
        b = onehot_from_labels(np.full((2, 2), 5, np.uint8))
        m = sem_ncc_matrix(extract_mask_patches(a, 1), extract_mask_patches(b, 1))
        assert np.allclose(m, 0.0)

    def test_k2_fractional_overlap(self):
        # source patch labels {1,1,1,2}, reference {1,1,2,2}:
        # dot = 3 agreeing positions, norms = 2 and 2 -> 0.75
        a = onehot_from_labels(np.array([[1, 1], [1, 2]], np.uint8))
        b = onehot_from_labels(np.array([[1, 1], [2, 2]], np.uint8))
        m = sem_ncc_matrix(extract_mask_patches(a, 2), extract_mask_patches(b, 2))
        assert m[0, 0] == pytest.approx(0.75, abs=1e-6)


class TestCorrespond:
    def test_single_admissible_candidate_gets_weight_one(self):
        ncc = np.array([[0.3, 0.9]])
        sem = np.array([[1.0, 0.0]])
        field = correspond(ncc, sem, SacConfig(mode="semantic_soft"))
        assert field.weights[0, 0] == pytest.approx(1.0)
        assert field.weights[0, 1] == 0.0

    def test_two_candidate_softmax_values(self):
        # beta=100, ncc 0.9 vs 0.1: logistic of +/-80
        ncc = np.array([[0.9, 0.1]])
        sem = np.ones((1, 2))
        field = correspond(ncc, sem, SacConfig(beta=100.0))
        w1 = math.exp(-80.0) / (1.0 + math.exp(-80.0))
        assert field.weights[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert field.weights[0, 1] == pytest.approx(w1, rel=1e-9)

    def test_all_gated_out_row_is_unmatched(self):
        ncc = np.array([[0.9, 0.8], [0.1, 0.2]])
        sem = np.array([[0.0, 0.0], [1.0, 1.0]])
        field = correspond(ncc, sem, SacConfig())
        assert field.unmatched == frozenset({0})
        assert np.all(field.weights[0] == 0.0)
        assert field.weights[1].sum() == pytest.approx(1.0)

    def test_nearest_picks_smallest_index_on_ties(self):
        ncc = np.array([[0.5, 0.7, 0.7]])
        field = correspond(ncc, None, SacConfig(mode="nearest"))
        assert np.array_equal(field.weights[0], [0.0, 1.0, 0.0])

    def test_literal_rows_sum_to_at_most_one(self, rng):
        ncc = rng.uniform(-1, 1, (10, 6))
        sem = rng.choice([0.0, 0.5, 1.0], (10, 6))
        field = correspond(ncc, sem, SacConfig(mode="semantic_literal"))
        sums = field.weights.sum(axis=1)
        assert np.all(sums <= 1.0 + 1e-5)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            correspond(np.ones((2, 3)), np.ones((2, 4)), SacConfig())


class TestReconstruct:
    def test_nearest_self_match_is_bitwise_identity(self, rng):
        fm = random_feature_map(rng, 4, 16, 16)
        g = extract_patches(fm, 2)
        field = correspond(ncc_matrix(g, g), None, SacConfig(mode="nearest"))
        out = reconstruct(field, g, g)
        assert np.array_equal(out.data, fm.data)

    def test_one_hot_row_copies_reference_patch(self, rng):
        fx = random_feature_map(rng, 2, 2, 2)
        fy = random_feature_map(rng, 2, 2, 2)
        gx, gy = extract_patches(fx, 2), extract_patches(fy, 2)
        field = CorrespondenceField(np.array([[1.0]]), "nearest")
        out = reconstruct(field, gy, gx)
        assert np.array_equal(out.data, fy.data)

    def test_unmatched_falls_back_to_source(self, rng):
        fx = random_feature_map(rng, 2, 2, 2)
        fy = random_feature_map(rng, 2, 2, 2)
        gx, gy = extract_patches(fx, 2), extract_patches(fy, 2)
        field = CorrespondenceField(np.zeros((1, 1)), "semantic_soft", frozenset({0}))
        out = reconstruct(field, gy, gx)
        assert np.array_equal(out.data, fx.data)

    def test_matches_tripleloop_oracle(self, rng):
        fx = random_feature_map(rng, 4, 8, 8)
        fy = random_feature_map(rng, 4, 8, 8)
        mx = random_label_mask(rng, 8, 8)
        my = random_label_mask(rng, 8, 8)
        cfg = SacConfig()
        ohx, ohy = onehot_from_labels(mx.labels), onehot_from_labels(my.labels)
        gx, gy = extract_patches(fx, 2), extract_patches(fy, 2)
        field = correspond(
            ncc_matrix(gx, gy),
            sem_ncc_matrix(extract_mask_patches(ohx, 2), extract_mask_patches(ohy, 2)),
            cfg,
        )
        got = reconstruct(field, gy, gx)
        want = naive_level(
            fx.data, fy.data, ohx.data, ohy.data, 2,
            "semantic_soft", cfg.beta, cfg.semantic_gate_threshold, cfg.epsilon,
        )
        assert np.max(np.abs(got.data - want)) < 1e-5


class TestMaskAndBlend:
    def test_transfer_mask_endpoints(self, rng):
        fp = random_feature_map(rng, 3, 4, 4)
        fx = random_feature_map(rng, 3, 4, 4)
        assert np.array_equal(
            apply_transfer_mask(fp, fx, np.ones((4, 4), np.float32)).data, fp.data
        )
        assert np.array_equal(
            apply_transfer_mask(fp, fx, np.zeros((4, 4), np.float32)).data, fx.data
        )

    def test_transfer_mask_half_split(self, rng):
        fp = random_feature_map(rng, 2, 4, 4)
        fx = random_feature_map(rng, 2, 4, 4)
        mt = np.zeros((4, 4), np.float32)
        mt[:, :2] = 1.0
        out = apply_transfer_mask(fp, fx, mt)
        assert np.array_equal(out.data[:, :, :2], fp.data[:, :, :2])
        assert np.array_equal(out.data[:, :, 2:], fx.data[:, :, 2:])

    def test_alpha_endpoints_are_exact(self, rng):
        fp = random_feature_map(rng, 3, 4, 4)
        fx = random_feature_map(rng, 3, 4, 4)
        assert alpha_blend(fp, fx, 1.0) is fp
        assert alpha_blend(fp, fx, 0.0) is fx

    def test_alpha_out_of_range(self, rng):
        fp = random_feature_map(rng, 1, 2, 2)
        with pytest.raises(ValueError, match="alpha"):
            alpha_blend(fp, fp, 1.5)

    def test_blend_is_elementwise_between_inputs(self, rng):
        fp = random_feature_map(rng, 3, 8, 8)
        fx = random_feature_map(rng, 3, 8, 8)
        out = alpha_blend(fp, fx, 0.3).data
        lo = np.minimum(fp.data, fx.data)
        hi = np.maximum(fp.data, fx.data)
        assert np.all(out >= lo - 1e-6) and np.all(out <= hi + 1e-6)

    def test_default_alpha_schedule(self):
        assert SacConfig().alphas == (1.0, 0.4, 0.2, 0.1)
        assert SacConfig().patch_sizes == (8, 4, 2, 1)


def build_pyramids(rng, base=32, channels=4):
    from spmt.encoder import EncoderConfig
    from spmt.tensor import FeaturePyramid, level_size

    levels = [
        random_feature_map(rng, channels, level_size(base, l), level_size(base, l))
        for l in range(1, 5)
    ]
    return FeaturePyramid(tuple(levels))


class TestSacFull:
    CFG = SacConfig(patch_sizes=(4, 2, 2, 1))

    def test_self_transfer_nearest_identity(self, rng):
        pyr = build_pyramids(rng)
        masks = small_mask_pyramid(rng, 32)
        cfg = SacConfig(patch_sizes=(4, 2, 2, 1), mode="nearest",
                        alphas=(1.0, 1.0, 1.0, 1.0))
        out, _ = sac_full(pyr, pyr, masks, masks, None, cfg)
        for a, b in zip(out.levels, pyr.levels):
            assert np.array_equal(a.data, b.data)

    def test_zero_alphas_return_source(self, rng):
        src, ref = build_pyramids(rng), build_pyramids(rng)
        masks = small_mask_pyramid(rng, 32)
        cfg = SacConfig(patch_sizes=(4, 2, 2, 1), alphas=(0.0, 0.0, 0.0, 0.0))
        out, _ = sac_full(src, ref, masks, masks, None, cfg)
        for a, b in zip(out.levels, src.levels):
            assert np.array_equal(a.data, b.data)

    @pytest.mark.parametrize("mode", ["semantic_soft", "semantic_literal",
                                      "plain_soft", "nearest"])
    def test_matches_end_to_end_oracle(self, rng, mode):
        src, ref = build_pyramids(rng), build_pyramids(rng)
        src_masks = small_mask_pyramid(rng, 32)
        ref_masks = small_mask_pyramid(rng, 32)
        cfg = SacConfig(patch_sizes=(4, 2, 2, 1), mode=mode)
        out, _ = sac_full(src, ref, src_masks, ref_masks, None, cfg)
        for lvl in range(4):
            want_fp = naive_level(
                src.levels[lvl].data, ref.levels[lvl].data,
                src_masks.levels[lvl].data, ref_masks.levels[lvl].data,
                cfg.patch_sizes[lvl], mode, cfg.beta,
                cfg.semantic_gate_threshold, cfg.epsilon,
            )
            a = cfg.alphas[lvl]
            want = a * want_fp + (1 - a) * src.levels[lvl].data
            assert np.max(np.abs(out.levels[lvl].data - want)) < 1e-5

    def test_thread_count_does_not_change_bits(self, rng):
        src, ref = build_pyramids(rng, base=64), build_pyramids(rng, base=64)
        src_masks = small_mask_pyramid(rng, 64)
        ref_masks = small_mask_pyramid(rng, 64)
        cfg = SacConfig(patch_sizes=(8, 4, 2, 1))
        out1, _ = sac_full(src, ref, src_masks, ref_masks, None, cfg, threads=1)
        out4, _ = sac_full(src, ref, src_masks, ref_masks, None, cfg, threads=4)
        for a, b in zip(out1.levels, out4.levels):
            assert np.array_equal(a.data, b.data)


class TestInvariants:
    def test_row_stochastic_soft_modes(self, rng):
        for mode in ("semantic_soft", "plain_soft"):
            ncc = rng.uniform(-1, 1, (30, 20))
            sem = rng.choice([0.0, 1.0], (30, 20))
            field = correspond(ncc, sem, SacConfig(mode=mode))
            matched = [i for i in range(30) if i not in field.unmatched]
            sums = field.weights[matched].sum(axis=1)
            assert np.all(np.abs(sums - 1.0) <= 1e-5)
            assert np.all(field.weights >= 0.0)

    def test_zero_semantic_leakage(self, rng):
        ncc = rng.uniform(-1, 1, (40, 25))
        sem = rng.choice([0.0, 0.25, 0.75, 1.0], (40, 25))
        cfg = SacConfig()
        field = correspond(ncc, sem, cfg)
        gated_out = sem < cfg.semantic_gate_threshold
        assert field.weights[gated_out].sum() == 0.0

    def test_reference_permutation_equivariance(self, rng):
        fx = random_feature_map(rng, 3, 8, 8)
        fy = random_feature_map(rng, 3, 8, 8)
        perm_axis = rng.permutation(4)  # permute reference patch rows (k=4 grid)
        gx = extract_patches(fx, 4)
        gy = extract_patches(fy, 4)
        from dataclasses import replace

        gy_perm = replace(gy, patches=gy.patches[perm_axis])
        cfg = SacConfig(mode="plain_soft")
        out = reconstruct(correspond(ncc_matrix(gx, gy), None, cfg), gy, gx)
        out_p = reconstruct(correspond(ncc_matrix(gx, gy_perm), None, cfg), gy_perm, gx)
        assert np.allclose(out.data, out_p.data, atol=1e-6)

    def test_temperature_limit_matches_gated_argmax(self, rng):
        from oracles import gated_argmax_level

        fx = random_feature_map(rng, 3, 16, 16)
        fy = random_feature_map(rng, 3, 16, 16)
        mx = onehot_from_labels(random_label_mask(rng, 16, 16).labels)
        my = onehot_from_labels(random_label_mask(rng, 16, 16).labels)
        cfg = SacConfig(beta=1e6)
        gx, gy = extract_patches(fx, 2), extract_patches(fy, 2)
        field = correspond(
            ncc_matrix(gx, gy),
            sem_ncc_matrix(extract_mask_patches(mx, 2), extract_mask_patches(my, 2)),
            cfg,
        )
        got = reconstruct(field, gy, gx)
        want = gated_argmax_level(
            fx.data, fy.data, mx.data, my.data, 2,
            cfg.semantic_gate_threshold, cfg.epsilon,
        )
        assert np.max(np.abs(got.data - want)) < 1e-4
