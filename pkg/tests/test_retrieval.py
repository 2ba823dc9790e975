"""K-clip averaged scoring and recall@K behavior."""

from __future__ import annotations

import numpy as np
import pytest

from clipmine.retrieval import (
    RecallReport,
    equally_spaced_indices,
    rank_candidates,
    recall_at_k,
    score_video,
)
from clipmine.types import EmbeddingVector, InvariantViolation

from conftest import unit_rows
from oracles import rank_by_mean_clip_similarity


def vecs(matrix: np.ndarray) -> list[EmbeddingVector]:
    return [EmbeddingVector(row) for row in matrix]


class TestEquallySpacedIndices:
    def test_ten_clips_four_samples(self):
        assert equally_spaced_indices(10, 4) == [0, 3, 6, 9]

    def test_single_sample_takes_first(self):
        assert equally_spaced_indices(10, 1) == [0]
        assert equally_spaced_indices(1, 4) == [0]

    def test_more_samples_than_clips(self):
        assert equally_spaced_indices(3, 10) == [0, 1, 2]

    def test_endpoints_always_included(self):
        for n in range(2, 40):
            for m in range(2, 8):
                idx = equally_spaced_indices(n, m)
                assert idx[0] == 0 and idx[-1] == n - 1
                assert idx == sorted(set(idx))

    def test_duplicate_collapse(self):
        # n=2, m=4: raw indices {0, 1/3, 2/3, 1} round to {0, 0, 1, 1}
        assert equally_spaced_indices(2, 4) == [0, 1]


class TestScoreVideo:
    def test_identical_clips_score_one(self):
        rng = np.random.default_rng(0)
        q = unit_rows(rng, 1, 8)[0]
        clips = vecs(np.tile(q, (5, 1)))
        assert abs(score_video(EmbeddingVector(q.copy()), clips, 4) - 1.0) <= 1e-6

    def test_arithmetic_mean_of_two(self):
        # orthogonal-ish construction with known cosines 0.2 and 0.8
        q = np.array([1.0, 0.0], dtype=np.float32)
        a = np.array([0.2, np.sqrt(1 - 0.04)], dtype=np.float32)
        b = np.array([0.8, np.sqrt(1 - 0.64)], dtype=np.float32)
        score = score_video(EmbeddingVector(q), vecs(np.stack([a, b])), 2)
        assert abs(score - 0.5) <= 1e-6

    def test_k_at_least_n_means_all_clips(self):
        rng = np.random.default_rng(1)
        q = EmbeddingVector(unit_rows(rng, 1, 8)[0])
        clips = vecs(unit_rows(rng, 6, 8))
        assert score_video(q, clips, 6) == score_video(q, clips, 99)

    def test_empty_clip_list_rejected(self):
        rng = np.random.default_rng(2)
        q = EmbeddingVector(unit_rows(rng, 1, 8)[0])
        with pytest.raises(ValueError, match="no clip"):
            score_video(q, [], 4)


class TestRecallAtK:
    def orthogonal_instance(self, n=12):
        # query i equals video i's single clip; videos are orthogonal
        eye = np.eye(n, dtype=np.float32)
        queries = [(EmbeddingVector(eye[i].copy()), f"v{i}") for i in range(n)]
        candidates = {f"v{i}": [EmbeddingVector(eye[i].copy())] for i in range(n)}
        return queries, candidates

    def test_orthogonal_construction_perfect_recall(self):
        queries, candidates = self.orthogonal_instance()
        report = recall_at_k(queries, candidates)
        assert report.r_at == {1: 1.0, 5: 1.0, 10: 1.0}

    def test_true_video_ranked_third(self):
        q = np.array([1.0, 0.0, 0.0], dtype=np.float32)
        mk = lambda c: [EmbeddingVector(np.array(c, dtype=np.float32))]
        candidates = {
            "best": mk([1.0, 0.0, 0.0]),
            "second": mk([0.9, np.sqrt(1 - 0.81), 0.0]),
            "true": mk([0.5, np.sqrt(1 - 0.25), 0.0]),
            "worst": mk([0.0, 1.0, 0.0]),
        }
        report = recall_at_k([(EmbeddingVector(q), "true")], candidates)
        assert report.r_at == {1: 0.0, 5: 1.0, 10: 1.0}

    def test_missing_true_video_rejected(self):
        queries, candidates = self.orthogonal_instance(3)
        del candidates["v1"]
        with pytest.raises(ValueError, match="missing"):
            recall_at_k(queries, candidates)

    def test_matches_independent_ranking_oracle(self):
        rng = np.random.default_rng(3)
        n_queries, n_videos, dim = 200, 100, 16
        candidates_arrays = {
            f"v{i:02d}": [unit_rows(rng, 1, dim)[0] for _ in range(int(rng.integers(1, 6)))]
            for i in range(n_videos)
        }
        candidates = {k: vecs(np.stack(v)) for k, v in candidates_arrays.items()}
        hits_oracle = {1: 0, 5: 0, 10: 0}
        queries = []
        for i in range(n_queries):
            true = f"v{int(rng.integers(0, n_videos)):02d}"
            noisy = candidates_arrays[true][0] + 0.3 * rng.standard_normal(dim).astype(np.float32)
            queries.append((EmbeddingVector(noisy.astype(np.float32)), true))
            ranking = rank_by_mean_clip_similarity(noisy.astype(np.float32),
                                                   candidates_arrays, 4)
            rank = next(r for r, (vid, _) in enumerate(ranking, 1) if vid == true)
            for k in (1, 5, 10):
                hits_oracle[k] += rank <= k
        report = recall_at_k(queries, candidates)
        assert report.r_at == {k: hits_oracle[k] / n_queries for k in (1, 5, 10)}

    def test_rank_invariant_under_positive_scaling(self):
        rng = np.random.default_rng(4)
        dim = 8
        candidates = {f"v{i}": vecs(unit_rows(rng, 3, dim)) for i in range(10)}
        scaled = {
            vid: vecs(np.stack([c.values for c in clips]) * 37.5)
            for vid, clips in candidates.items()
        }
        q = EmbeddingVector(unit_rows(rng, 1, dim)[0])
        assert [c.video_id for c in rank_candidates(q, candidates)] == [
            c.video_id for c in rank_candidates(q, scaled)
        ]

    def test_deterministic_tie_break_on_video_id(self):
        clip = np.array([1.0, 0.0], dtype=np.float32)
        candidates = {
            "zeta": [EmbeddingVector(clip.copy())],
            "alpha": [EmbeddingVector(clip.copy())],
        }
        q = EmbeddingVector(clip.copy())
        ranking = rank_candidates(q, candidates)
        assert [c.video_id for c in ranking] == ["alpha", "zeta"]

    def test_monotonicity_randomized(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n_videos = int(rng.integers(2, 10))
            dim = 8
            candidates = {
                f"v{i}": vecs(unit_rows(rng, int(rng.integers(1, 4)), dim))
                for i in range(n_videos)
            }
            queries = [
                (EmbeddingVector(unit_rows(rng, 1, dim)[0]),
                 f"v{int(rng.integers(0, n_videos))}")
                for _ in range(4)
            ]
            report = recall_at_k(queries, candidates)
            assert report.r_at[1] <= report.r_at[5] <= report.r_at[10]

    def test_report_invariant_enforced(self):
        with pytest.raises(InvariantViolation, match="monotonicity"):
            RecallReport(r_at={1: 0.9, 5: 0.4, 10: 1.0}, n_queries=3)
        with pytest.raises(InvariantViolation, match="r_at"):
            RecallReport(r_at={1: 1.5}, n_queries=3)
