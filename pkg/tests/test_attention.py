import math

import numpy as np
import pytest

from hspa.attention import (
    AttentionConfig,
    FeatureMap,
    LinearMap,
    Projections,
    attend_full,
    attention_weights,
    hspa_fuse,
    nla_fuse,
    nla_random_fuse,
    random_subset_rows,
    similarity_row,
)
from oracles import GOLDEN, MASK64, project_simplex_bruteforce, splitmix64_sequence, stream_key

EXACT = AttentionConfig(mode="hspa_exact")


def ident(c):
    return Projections.identity(c)


class TestSimilarity:
    def test_examples(self):
        fm = FeatureMap.from_vectors([[1, 0], [1, 0], [0, 1], [1, 2], [3, -1]])
        q, k = LinearMap.identity(2, "query"), LinearMap.identity(2, "key")
        s = similarity_row(0, fm, q, k)
        assert s[1] == 1.0
        assert s[2] == 0.0
        assert similarity_row(3, fm, q, k)[4] == 1.0

    def test_errors(self):
        fm = FeatureMap.from_vectors(np.eye(3))
        with pytest.raises(IndexError):
            similarity_row(3, fm, LinearMap.identity(3), LinearMap.identity(3))
        with pytest.raises(ValueError):
            similarity_row(0, fm, LinearMap.identity(2), LinearMap.identity(3))

    def test_uses_projections(self, rng):
        x = rng.standard_normal((6, 4))
        fm = FeatureMap.from_vectors(x)
        maps = Projections.random_orthogonal(4, seed=3)
        s = similarity_row(2, fm, maps.query, maps.key)
        expected = (x @ maps.key.matrix.T) @ (maps.query.matrix @ x[2])
        np.testing.assert_allclose(s, expected, atol=1e-12)
        m = maps.query.matrix
        np.testing.assert_allclose(m @ m.T, np.eye(4), atol=1e-12)


class TestFusion:
    def test_single_support(self):
        # query aligned with position 0 by a wide margin
        fm = FeatureMap.from_vectors([[10.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        w = attention_weights(0, fm, ident(2), EXACT)
        assert w.tolist() == [1.0, 0.0, 0.0]
        np.testing.assert_array_equal(hspa_fuse(0, fm, ident(2), EXACT), [10.0, 0.0])

    @pytest.mark.parametrize("mode", ["hspa_exact", "hspa_topk", "nla", "nla_random"])
    def test_identical_features(self, mode):
        fm = FeatureMap(np.tile([0.2, -1.0, 3.0], (3, 4, 1)))
        out = attend_full(fm, ident(3), AttentionConfig(mode=mode, k=2, m=5, seed=1))
        np.testing.assert_allclose(out.data, fm.data, atol=1e-15)

    def test_hand_case_against_oracles(self):
        x = np.array([[0.5, 0.0], [0.2, 0.0], [0.1, 0.0]])
        fm = FeatureMap.from_vectors(x)
        # query 0: similarities 0.25, 0.1, 0.05 -> full support with shift +1/5
        w_ref = project_simplex_bruteforce(x @ x[0])
        np.testing.assert_allclose(w_ref, [0.25 + 0.2, 0.1 + 0.2, 0.05 + 0.2], atol=1e-15)
        np.testing.assert_allclose(hspa_fuse(0, fm, ident(2), EXACT), w_ref @ x, atol=1e-15)

    def test_nla_examples(self):
        fm = FeatureMap.from_vectors([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        # query 1 is orthogonal to 0 and 2 and similarity 1 with itself
        e = math.e
        w = np.array([1.0, e, 1.0]) / (2 + e)
        np.testing.assert_allclose(nla_fuse(1, fm, ident(2)), w @ fm.vectors, atol=1e-15)
        one = FeatureMap.from_vectors([[4.0, 5.0]])
        np.testing.assert_array_equal(nla_fuse(0, one, ident(2)), [4.0, 5.0])

    def test_equal_similarities_give_mean(self):
        # zero query vector -> every similarity is 0
        x = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [2.0, 2.0]])
        fm = FeatureMap.from_vectors(x)
        np.testing.assert_allclose(nla_fuse(0, fm, ident(2)), x.mean(axis=0), atol=1e-15)

    def test_hspa_fuse_rejects_softmax_mode(self):
        fm = FeatureMap.from_vectors(np.eye(2))
        with pytest.raises(ValueError):
            hspa_fuse(0, fm, ident(2), AttentionConfig(mode="nla"))


class TestRandomSubset:
    def test_whole_set_matches_nla(self, rng):
        fm = FeatureMap.from_vectors(rng.standard_normal((30, 3)))
        cfg = AttentionConfig(mode="nla_random", m=30, seed=4)
        for i in (0, 7, 29):
            np.testing.assert_array_equal(nla_random_fuse(i, fm, ident(3), cfg), nla_fuse(i, fm, ident(3), cfg))

    def test_deterministic(self, rng):
        fm = FeatureMap.from_vectors(rng.standard_normal((100, 2)))
        cfg = AttentionConfig(mode="nla_random", m=10, seed=42)
        a = nla_random_fuse(5, fm, ident(2), cfg)
        b = nla_random_fuse(5, fm, ident(2), cfg)
        np.testing.assert_array_equal(a, b)
        c = nla_random_fuse(5, fm, ident(2), AttentionConfig(mode="nla_random", m=10, seed=43))
        assert not np.array_equal(a, c)

    def test_subset_properties(self):
        idx = random_subset_rows(9, np.arange(50), 200, 17)
        assert idx.shape == (50, 17)
        for row in idx:
            assert len(set(row.tolist())) == 17
            assert np.all(np.diff(row) > 0)

    def test_matches_independent_reimplementation(self, rng):
        n, m, seed, i = 1000, 512, 7, 123
        x = rng.standard_normal((n, 2)) * 0.5
        fm = FeatureMap.from_vectors(x)
        got = nla_random_fuse(i, fm, ident(2), AttentionConfig(mode="nla_random", m=m, seed=seed))

        key = stream_key(seed, i)
        keys = [(splitmix64_sequence((key + j * GOLDEN) & MASK64, 1)[0], j) for j in range(n)]
        chosen = sorted(j for _, j in sorted(keys)[:m])
        sims = [x[i][0] * x[j][0] + x[i][1] * x[j][1] for j in chosen]
        top = max(sims)
        ex = [math.exp(v - top) for v in sims]
        z = math.fsum(ex)
        ref = [math.fsum(e / z * x[j][c] for e, j in zip(ex, chosen)) for c in range(2)]
        np.testing.assert_allclose(got, ref, atol=1e-12)


class TestAttendFull:
    def test_single_position(self):
        fm = FeatureMap(np.array([[[0.3, 0.7]]]))
        out = attend_full(fm, ident(2), EXACT)
        np.testing.assert_array_equal(out.data, fm.data)

    @pytest.mark.parametrize("mode", ["hspa_exact", "hspa_topk", "nla", "nla_random"])
    def test_matches_per_row_loop(self, rng, mode):
        fm = FeatureMap(rng.standard_normal((4, 4, 3)))
        maps = Projections.random_orthogonal(3, seed=11)
        cfg = AttentionConfig(mode=mode, k=3, m=6, seed=5)
        out = attend_full(fm, maps, cfg, chunk=5)
        fuse = {"hspa_exact": hspa_fuse, "hspa_topk": hspa_fuse, "nla": nla_fuse, "nla_random": nla_random_fuse}[mode]
        for i in range(fm.n):
            np.testing.assert_array_equal(out.vectors[i], fuse(i, fm, maps, cfg))

    def test_thread_count_invariance(self, rng):
        fm = FeatureMap(rng.standard_normal((8, 8, 4)))
        cfg = AttentionConfig(mode="nla_random", m=9, seed=2)
        a = attend_full(fm, ident(4), cfg, threads=1, chunk=7)
        b = attend_full(fm, ident(4), cfg, threads=4, chunk=3)
        np.testing.assert_array_equal(a.data, b.data)


class TestProperties:
    def test_sparsity_and_convex_hull(self, rng):
        for trial in range(20):
            h, w = rng.integers(2, 9, size=2)
            fm = FeatureMap(rng.standard_normal((h, w, 3)) * rng.uniform(0.5, 3))
            maps = Projections.random_orthogonal(3, seed=trial)
            v = maps.value.apply(fm.vectors)
            lo, hi = v.min(axis=0) - 1e-12, v.max(axis=0) + 1e-12
            for i in range(fm.n):
                w_st = attention_weights(i, fm, maps, EXACT)
                assert 1 <= np.count_nonzero(w_st) <= fm.n
                if fm.n <= 10:
                    s = similarity_row(i, fm, maps.query, maps.key)
                    assert np.count_nonzero(w_st) == np.count_nonzero(project_simplex_bruteforce(s))
                assert np.count_nonzero(attention_weights(i, fm, maps, AttentionConfig(mode="nla"))) == fm.n
            for mode in ("hspa_exact", "nla"):
                out = attend_full(fm, maps, AttentionConfig(mode=mode)).vectors
                assert np.all(out >= lo) and np.all(out <= hi)

    def test_permutation_equivariance(self, rng):
        x = rng.standard_normal((12, 3))
        perm = np.concatenate([[0], 1 + rng.permutation(11)])
        for mode in ("hspa_exact", "nla"):
            cfg = AttentionConfig(mode=mode)
            a = (hspa_fuse if mode == "hspa_exact" else nla_fuse)(0, FeatureMap.from_vectors(x), ident(3), cfg)
            b = (hspa_fuse if mode == "hspa_exact" else nla_fuse)(0, FeatureMap.from_vectors(x[perm]), ident(3), cfg)
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_topk_agrees_with_exact_when_k_covers_support(self, rng):
        for _ in range(10):
            fm = FeatureMap(rng.standard_normal((8, 8, 2)))
            maps = ident(2)
            supports = [np.count_nonzero(attention_weights(i, fm, maps, EXACT)) for i in range(fm.n)]
            k = max(supports)
            a = attend_full(fm, maps, EXACT)
            b = attend_full(fm, maps, AttentionConfig(mode="hspa_topk", k=k))
            np.testing.assert_allclose(a.data, b.data, atol=1e-12, rtol=0)

    def test_repeated_texture_support(self):
        # two copies of one pattern plus unrelated noise-like positions
        pat = np.array([[1.0, 0.0], [0.0, 1.0]])
        other = np.array([[-0.5, 0.2], [0.3, -0.8], [0.1, 0.1], [-0.2, -0.4]])
        fm = FeatureMap.from_vectors(np.vstack([pat * 3, other, pat * 3]))
        w = attention_weights(0, fm, ident(2), EXACT)
        assert set(np.flatnonzero(w)) == {0, 6}
        assert np.all(attention_weights(0, fm, ident(2), AttentionConfig(mode="nla")) > 0)


def test_config_validation():
    with pytest.raises(ValueError):
        AttentionConfig(mode="bogus")
    with pytest.raises(ValueError):
        AttentionConfig(k=0)
    with pytest.raises(ValueError):
        FeatureMap(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FeatureMap(np.full((1, 1, 1), np.nan))
