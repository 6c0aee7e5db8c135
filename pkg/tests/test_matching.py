import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from cmfd.features import DescriptorSet, Keypoint
from cmfd.matching import g2nn_accept_count, g2nn_match, knn_descriptor_search


def _dset(pos, des):
    kps = [Keypoint(float(x), float(y), 2.0, 0.0) for x, y in pos]
    return DescriptorSet(kps, np.asarray(des, dtype=float))


def _random_set(seed, n, spread=400.0):
    r = np.random.default_rng(seed)
    des = r.random((n, 128))
    des /= np.linalg.norm(des, axis=1, keepdims=True)
    return _dset(r.uniform(0, spread, (n, 2)), des)


def test_identical_descriptors_are_first_neighbours():
    r = np.random.default_rng(0)
    des = r.random((5, 128))
    des[3] = des[0]
    ds = _dset([[0, 0], [50, 0], [0, 50], [80, 80], [200, 10]], des)
    nb = knn_descriptor_search(ds, 2)
    assert nb.indices[0, 0] == 3 and nb.distances[0, 0] == 0.0
    assert nb.indices[3, 0] == 0 and nb.distances[3, 0] == 0.0


def test_spatially_close_neighbour_excluded():
    des = np.eye(3, 128)
    des[1] = des[0] + 1e-3
    ds = _dset([[0, 0], [3, 0], [100, 100]], des)
    nb = knn_descriptor_search(ds, 2, min_spatial_dist=10)
    assert 1 not in nb.indices[0]
    nb = knn_descriptor_search(ds, 2, min_spatial_dist=2)
    assert nb.indices[0, 0] == 1


def test_knn_equals_bruteforce():
    ds = _random_set(7, 200)
    nb = knn_descriptor_search(ds, 4, min_spatial_dist=10)
    ref = oracles.knn_bruteforce(ds.descriptors, ds.positions, 4, 10)
    for i, row in enumerate(ref):
        assert nb.indices[i, :len(row)].tolist() == [b for _, b in row]
        np.testing.assert_allclose(nb.distances[i, :len(row)], [d for d, _ in row], rtol=1e-12)


def test_knn_short_lists_padded():
    ds = _dset([[0, 0], [100, 0], [200, 0]], np.random.default_rng(1).random((3, 128)))
    nb = knn_descriptor_search(ds, 4)
    assert (nb.indices[:, 2:] == -1).all() and np.isinf(nb.distances[:, 2:]).all()


def test_knn_threads_identical():
    ds = _random_set(3, 700)
    a = knn_descriptor_search(ds, 3, threads=1)
    b = knn_descriptor_search(ds, 3, threads=4)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.distances, b.distances)


def test_ratio_examples():
    assert g2nn_accept_count(np.array([0.69, 1.0, 1.0]), 0.7) == 1
    assert g2nn_accept_count(np.array([0.9, 1.0, 1.0]), 0.7) == 0
    assert g2nn_accept_count(np.array([0.0, 0.0, 1.0]), 0.7) == 2
    assert g2nn_accept_count(np.array([0.3, np.inf, np.inf]), 0.7) == 0


def _cluster_set(copies, seed=0, noise=1e-3):
    """Groups of ``copies`` descriptors, far apart in the image, plus random fillers.

    Copy ``c`` of a group sits at descriptor distance ``noise * 6**c`` from copy 0,
    so distances along a group grow geometrically (ratios well under 0.7).
    """
    r = np.random.default_rng(seed)
    des, pos = [], []
    for g in range(6):
        b = r.random(128)
        b /= np.linalg.norm(b)
        for c in range(copies):
            d = np.zeros(128) if c == 0 else r.normal(size=128)
            if c:
                d *= noise * 6.0 ** c / np.linalg.norm(d)
            des.append(b + d)
            pos.append([40.0 + 90 * c, 40.0 + 60 * g])
    for _ in range(30):
        v = r.random(128)
        des.append(v / np.linalg.norm(v))
        pos.append(r.uniform(0, 600, 2))
    return _dset(pos, np.array(des))


def test_multiple_copies_accept_several_neighbours():
    ds = _cluster_set(3)
    m = g2nn_match(ds, 0.7, k=3)
    nb = knn_descriptor_search(ds, 4)
    for r, idx in enumerate(m.matched_indices):
        assert m.accepted[r] == oracles.g2nn_count(list(nb.distances[idx]), 0.7)
    first = [r for r, idx in enumerate(m.matched_indices) if idx < 18 and idx % 3 == 0]
    assert len(first) == 6
    assert all(m.accepted[r] >= 2 for r in first)


def test_single_duplicate_reduces_to_2nn():
    ds = _cluster_set(2)
    m = g2nn_match(ds, 0.7, k=3)
    nb = knn_descriptor_search(ds, 2)
    two_nn = {i for i in range(len(ds)) if nb.distances[i, 0] / nb.distances[i, 1] < 0.7}
    assert set(m.matched_indices.tolist()) == two_nn
    assert (m.accepted == 1).all()


def test_matchset_invariants():
    m = g2nn_match(_cluster_set(3, seed=4), 0.7, k=3)
    assert len(m) > 0
    np.testing.assert_array_equal(m.alpha[:, 0], 1.0)
    np.testing.assert_allclose(m.alpha.sum(axis=1), 1.0)
    for r, idx in enumerate(m.matched_indices):
        assert idx not in m.neighbors[r]
        d = m.distances[r][m.valid[r]]
        assert np.all(np.diff(d) >= 0)
    np.testing.assert_allclose(m.dd, np.where(m.valid, m.distances, 0) ** 2)


def test_match_json_dump(tmp_path):
    m = g2nn_match(_cluster_set(2), 0.7, k=3)
    m.dump_json(tmp_path / "m.json")
    recs = json.loads((tmp_path / "m.json").read_text())
    assert len(recs) == len(m)
    assert set(recs[0]) == {"source_index", "neighbor_indices", "descriptor_distances", "alpha_row"}


def test_threshold_validated():
    with pytest.raises(ValueError):
        g2nn_match(_random_set(0, 10), 1.0)


def test_too_few_keypoints():
    assert len(g2nn_match(_random_set(0, 1), 0.7)) == 0


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_matches_monotone_in_threshold(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    ds = _cluster_set(2 + seed % 3, seed=seed % 1000, noise=0.05)
    a = g2nn_match(ds, lo, k=3)
    b = g2nn_match(ds, hi, k=3)
    assert set(a.matched_indices.tolist()) <= set(b.matched_indices.tolist())
