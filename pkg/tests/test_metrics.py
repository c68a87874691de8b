import numpy as np
import pytest

from metaforge import (
    EvalReport,
    chamfer,
    coverage,
    eval_chamfer_dense,
    eval_cotlap_distortion,
    eval_sets,
    laplacian_loss,
    mmd,
)
from metaforge.metrics import nearest_point_distances


def cloud_at(x, n=4, spread=0.01, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([x, 0.0, 0.0]) + spread * rng.standard_normal((n, 3))


class TestCoverageAndMMD:
    def test_identical_sets(self):
        sets = [cloud_at(x, seed=s) for s, x in enumerate((0.0, 1.0, 5.0))]
        assert coverage(sets, sets, chamfer) == 1.0
        assert mmd(sets, sets, chamfer) == 0.0

    def test_three_by_two_brute_force(self):
        # single-point clouds at x = 0, 1, 10 against references at 0.4 and 10:
        # chamfer(a, b) for singletons is 2 * (a - b)^2
        generated = [np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]]), np.array([[10.0, 0, 0]])]
        references = [np.array([[0.4, 0, 0]]), np.array([[10.0, 0, 0]])]
        # matches: gen0 -> ref0 (0.32 vs 200), gen1 -> ref0 (0.72 vs 162),
        # gen2 -> ref1 (184.32 vs 0) => both references matched
        assert coverage(generated, references, chamfer) == 1.0
        # mmd: ref0 min(0.32, 0.72, 184.32) = 0.32; ref1 min(200, 162, 0) = 0
        assert mmd(generated, references, chamfer) == pytest.approx(0.16, abs=1e-12)

    def test_uncovered_reference(self):
        generated = [np.array([[0.0, 0, 0]])]
        references = [np.array([[0.0, 0, 0]]), np.array([[9.0, 0, 0]])]
        assert coverage(generated, references, chamfer) == 0.5
        assert mmd(generated, references, chamfer) == pytest.approx(81.0, abs=1e-9)

    def test_tie_takes_smaller_index(self):
        generated = [np.array([[0.0, 0, 0]])]
        references = [np.array([[1.0, 0, 0]]), np.array([[-1.0, 0, 0]])]
        assert coverage(generated, references, chamfer) == 0.5  # index 0 matched

    def test_single_point_mmd_hand_value(self):
        generated = [np.array([[0.0, 0.0, 0.0]])]
        references = [np.array([[1.0, 0.0, 0.0]])]
        assert mmd(generated, references, chamfer) == pytest.approx(2.0, abs=1e-12)

    def test_generated_order_invariance(self):
        rng = np.random.default_rng(1)
        generated = [rng.standard_normal((5, 3)) for _ in range(4)]
        references = [rng.standard_normal((5, 3)) for _ in range(3)]
        cov = coverage(generated, references, chamfer)
        m = mmd(generated, references, chamfer)
        assert coverage(generated[::-1], references, chamfer) == cov
        assert mmd(generated[::-1], references, chamfer) == pytest.approx(m, abs=1e-12)

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            coverage([], [np.zeros((1, 3))], chamfer)
        with pytest.raises(ValueError):
            mmd([np.zeros((1, 3))], [], chamfer)


class TestEvalSets:
    def test_identical_collections(self):
        sets = [cloud_at(x, seed=s) for s, x in enumerate((0.0, 2.0))]
        report = eval_sets(sets, sets)
        assert report.coverage == 1.0
        assert report.mmd == 0.0
        assert len(report.pairs) == 4
        # the diagonal pairs are exact self-matches
        by_key = {(i, j): d for i, j, d in report.pairs}
        assert by_key[(0, 0)] == 0.0
        assert by_key[(1, 1)] == 0.0
        assert by_key[(0, 1)] > 0.0

    def test_matches_direct_calls(self):
        rng = np.random.default_rng(2)
        generated = [rng.standard_normal((6, 3)) for _ in range(3)]
        references = [rng.standard_normal((6, 3)) for _ in range(2)]
        report = eval_sets(generated, references)
        assert report.coverage == coverage(generated, references, chamfer)
        assert report.mmd == pytest.approx(mmd(generated, references, chamfer), abs=1e-12)
        assert report.chamfer_dense is None
        assert report.cotlap_distortion is None


class TestEvalReport:
    def test_validation(self):
        EvalReport(coverage=0.5, mmd=0.0)
        with pytest.raises(ValueError):
            EvalReport(coverage=-0.1)
        with pytest.raises(ValueError):
            EvalReport(mmd=np.nan)
        with pytest.raises(ValueError):
            EvalReport(chamfer_dense=np.inf)


class TestDenseChamfer:
    def test_self_distance_small(self, sphere2):
        # independent streams on the same surface: the value is the sampling
        # noise floor, which shrinks with the sample count
        coarse = eval_chamfer_dense(sphere2, sphere2, samples=4000, seed=0)
        fine = eval_chamfer_dense(sphere2, sphere2, samples=16000, seed=0)
        assert 0.0 < coarse < 5e-3
        assert fine < coarse / 2.0

    def test_deterministic(self, sphere1):
        a = eval_chamfer_dense(sphere1, sphere1, samples=500, seed=3)
        b = eval_chamfer_dense(sphere1, sphere1, samples=500, seed=3)
        assert a == b
        c = eval_chamfer_dense(sphere1, sphere1, samples=500, seed=4)
        assert a != c

    def test_single_sample_finite(self, sphere1, box3):
        value = eval_chamfer_dense(sphere1, box3, samples=1, seed=0)
        assert np.isfinite(value)

    def test_separated_tiny_meshes(self, tetra):
        # two copies of a small mesh one unit apart: every nearest-neighbor
        # distance is close to 1, so the squared chamfer concentrates near 2
        scale = 0.01
        small = tetra.with_vertices(tetra.vertices * scale)
        far = small.with_vertices(small.vertices + np.array([1.0, 0.0, 0.0]))
        value = eval_chamfer_dense(small, far, samples=2000, seed=1)
        assert abs(value - 2.0) < 0.05

    def test_concentration_across_seeds(self, tetra):
        small = tetra.with_vertices(tetra.vertices * 0.01)
        far = small.with_vertices(small.vertices + np.array([1.0, 0.0, 0.0]))
        values = [eval_chamfer_dense(small, far, samples=500, seed=s) for s in range(5)]
        spread = (max(values) - min(values)) / np.mean(values)
        assert spread < 0.1

    def test_unsquared_variant(self, tetra):
        small = tetra.with_vertices(tetra.vertices * 0.01)
        far = small.with_vertices(small.vertices + np.array([1.0, 0.0, 0.0]))
        value = eval_chamfer_dense(small, far, samples=1000, seed=2, squared=False)
        assert abs(value - 2.0) < 0.05  # both directional means are ~1


class TestCotlapDistortion:
    def test_is_laplacian_loss(self, sphere1):
        rng = np.random.default_rng(5)
        deformed = sphere1.vertices + 0.05 * rng.standard_normal(sphere1.vertices.shape)
        assert eval_cotlap_distortion(sphere1, deformed) == laplacian_loss(
            sphere1, deformed
        )

    def test_zero_at_rest(self, box3):
        assert eval_cotlap_distortion(box3, box3.vertices) == 0.0


class TestNearestPointDistances:
    def test_hand_values(self):
        query = np.array([[0.0, 0, 0], [3.0, 4.0, 0]])
        reference = np.array([[0.0, 0, 0], [0.0, 0, 1.0]])
        d = nearest_point_distances(query, reference)
        assert d[0] == 0.0
        assert d[1] == pytest.approx(5.0, abs=1e-12)
