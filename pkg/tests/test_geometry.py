"""Geometry tests. RMSD is checked against an independent brute-force
optimizer over rotations, knn against a full-sort oracle."""

import numpy as np
import pytest
from scipy.optimize import minimize

from seqstruct import geometry as geo


# ---------------------------------------------------------------------------
# oracles


def euler_rotation(angles):
    a, b, c = angles
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rz = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1.0]])
    ry = np.array([[cb, 0, sb], [0, 1.0, 0], [-sb, 0, cb]])
    rx = np.array([[1.0, 0, 0], [0, cc, -sc], [0, sc, cc]])
    return rz @ ry @ rx


def rmsd_bruteforce(a, b):
    """Coarse grid over Euler angles, then simplex refinement from the best."""
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)

    def objective(angles):
        diff = ac @ euler_rotation(angles).T - bc
        return np.sqrt((diff * diff).sum(axis=-1).mean())

    ticks = np.linspace(0.0, 2 * np.pi, 9)[:-1]
    best_val, best_angles = np.inf, None
    for a1 in ticks:
        for a2 in ticks:
            for a3 in ticks:
                v = objective((a1, a2, a3))
                if v < best_val:
                    best_val, best_angles = v, (a1, a2, a3)
    res = minimize(
        objective,
        best_angles,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
    )
    return min(best_val, res.fun)


def knn_oracle(x, k):
    n = x.shape[0]
    rows = []
    for i in range(n):
        cand = [(float(np.linalg.norm(x[i] - x[j])), j) for j in range(n) if j != i]
        cand.sort()
        rows.append([j for _, j in cand[: min(k, n - 1)]])
    return np.array(rows, dtype=np.int64)


# ---------------------------------------------------------------------------
# distances


def test_pairwise_trivial():
    one = geo.pairwise_distances(np.zeros((1, 3)))
    assert one.shape == (1, 1) and one[0, 0] == 0.0
    two = geo.pairwise_distances(np.array([[0.0, 0, 0], [3.0, 4.0, 0]]))
    assert abs(two[0, 1] - 5.0) < 1e-12 and abs(two[1, 0] - 5.0) < 1e-12


def test_pairwise_matches_loop_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 3)) * 4
    d = geo.pairwise_distances(x)
    for i in range(6):
        for j in range(6):
            want = np.sqrt(((x[i] - x[j]) ** 2).sum())
            assert abs(d[i, j] - want) < 1e-12


def test_pairwise_invariant_under_rigid():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(8, 3)) * 5
    for proper in (True, False):
        rt = geo.random_rigid(rng, proper=proper)
        d0 = geo.pairwise_distances(x)
        d1 = geo.pairwise_distances(geo.apply_rigid(x, rt))
        assert np.max(np.abs(d0 - d1)) < 1e-9


# ---------------------------------------------------------------------------
# neighbor graphs


def test_knn_two_points():
    g = geo.knn(np.array([[0.0, 0, 0], [1.0, 0, 0]]), k=1)
    assert np.array_equal(g.neighbors, np.array([[1], [0]]))


def test_knn_k_larger_than_n():
    x = np.arange(31, dtype=np.float64)[:, None] * np.array([1.0, 0, 0])
    g = geo.knn(x, k=30)
    assert g.neighbors.shape == (31, 30)
    for i in range(31):
        assert set(g.neighbors[i]) == set(range(31)) - {i}


def test_knn_matches_oracle():
    rng = np.random.default_rng(2)
    for trial in range(5):
        x = rng.normal(size=(10, 3)) * 3
        g = geo.knn(x, k=3)
        assert np.array_equal(g.neighbors, knn_oracle(x, 3))


def test_knn_tie_break_low_index():
    # square grid: many exact ties
    x = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [1.0, 1, 0]])
    g = geo.knn(x, k=2)
    assert np.array_equal(g.neighbors[0], np.array([1, 2]))
    assert np.array_equal(g.neighbors[3], np.array([1, 2]))


def test_knn_excludes_self_even_when_coincident():
    x = np.zeros((3, 3))
    g = geo.knn(x, k=2)
    for i in range(3):
        assert i not in g.neighbors[i]


def test_knn_single_point_errors():
    with pytest.raises(ValueError):
        geo.knn(np.zeros((1, 3)), k=1)


def test_knn_invariant_under_rigid_when_no_ties():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(12, 3)) * 6
    rt = geo.random_rigid(rng)
    a = geo.knn(x, k=4).neighbors
    b = geo.knn(geo.apply_rigid(x, rt), k=4).neighbors
    assert np.array_equal(a, b)


def test_edge_list_layout():
    g = geo.knn(np.array([[0.0, 0, 0], [1.0, 0, 0], [5.0, 0, 0]]), k=2)
    dst, src = geo.edge_list(g)
    assert np.array_equal(dst, np.array([0, 0, 1, 1, 2, 2]))
    assert np.array_equal(src, g.neighbors.reshape(-1))


# ---------------------------------------------------------------------------
# chain initialization


class QueuedRng:
    """Stub standing in for a Generator; returns scripted uniform() draws."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self, lo, hi):
        return self.values.pop(0)


def test_init_coordinates_scripted_angles():
    # residue 0 free at origin; residue 1 with polar angle 0 goes straight up z
    rng = QueuedRng([0.0, 0.0])
    out = geo.init_coordinates(np.zeros((0, 3)), np.zeros(0, dtype=int), 2, rng)
    assert np.array_equal(out[0], np.zeros(3))
    assert np.max(np.abs(out[1] - np.array([0.0, 0.0, 3.75]))) < 1e-12

    # polar pi/2, azimuth 0 steps along +x
    rng = QueuedRng([np.pi / 2, 0.0])
    out = geo.init_coordinates(np.zeros((0, 3)), np.zeros(0, dtype=int), 2, rng)
    assert np.max(np.abs(out[1] - np.array([3.75, 0.0, 0.0]))) < 1e-12


def test_init_coordinates_step_lengths():
    rng = np.random.default_rng(4)
    out = geo.init_coordinates(np.zeros((0, 3)), np.zeros(0, dtype=int), 40, rng)
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert np.max(np.abs(steps - geo.CA_STEP)) < 1e-9


def test_init_coordinates_fragment_passthrough_bit_exact():
    rng = np.random.default_rng(5)
    frag = rng.normal(size=(3, 3)) * 7
    idx = np.array([2, 3, 7])
    out = geo.init_coordinates(frag, idx, 10, rng)
    assert np.array_equal(out[idx], frag)
    # free residue right after the fragment chains from the fragment coord
    assert abs(np.linalg.norm(out[4] - out[3]) - geo.CA_STEP) < 1e-9


def test_init_coordinates_free_first_residue_at_origin():
    rng = np.random.default_rng(6)
    out = geo.init_coordinates(np.ones((1, 3)), np.array([5]), 8, rng)
    assert np.array_equal(out[0], np.zeros(3))


def test_init_coordinates_count_mismatch_errors():
    with pytest.raises(ValueError):
        geo.init_coordinates(np.zeros((2, 3)), np.array([0]), 5, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# rigid transforms


def test_random_rigid_orthogonal_and_det():
    rng = np.random.default_rng(7)
    for _ in range(25):
        rt = geo.random_rigid(rng)
        assert np.max(np.abs(rt.rotation @ rt.rotation.T - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(rt.rotation) - 1.0) < 1e-12
        rt2 = geo.random_rigid(rng, proper=False)
        assert np.max(np.abs(rt2.rotation @ rt2.rotation.T - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(rt2.rotation) + 1.0) < 1e-12


# ---------------------------------------------------------------------------
# RMSD


def test_kabsch_identical_is_zero():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(10, 3))
    assert geo.kabsch_rmsd(x, x) < 1e-9


def test_kabsch_rigid_transform_is_zero():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(12, 3)) * 4
    rt = geo.random_rigid(rng)
    assert geo.kabsch_rmsd(x, geo.apply_rigid(x, rt)) < 1e-7


def test_kabsch_symmetric():
    rng = np.random.default_rng(10)
    a = rng.normal(size=(9, 3))
    b = rng.normal(size=(9, 3))
    assert abs(geo.kabsch_rmsd(a, b) - geo.kabsch_rmsd(b, a)) < 1e-9


def test_kabsch_matches_bruteforce():
    rng = np.random.default_rng(11)
    for trial in range(3):
        a = rng.normal(size=(5, 3)) * 2
        b = a + rng.normal(size=(5, 3)) * 0.6
        got = geo.kabsch_rmsd(a, b)
        want = rmsd_bruteforce(a, b)
        assert got <= want + 1e-6  # closed form can only be better
        assert abs(got - want) < 1e-4


def test_kabsch_shape_mismatch_errors():
    with pytest.raises(ValueError):
        geo.kabsch_rmsd(np.zeros((4, 3)), np.zeros((5, 3)))
