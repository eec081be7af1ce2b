import math

import numpy as np
import pytest

from bsf.data import dataset_from_euclidean
from bsf.kernels import EUCLIDEAN_GAUSSIAN, KernelSpec
from bsf.linalg import (
    all_block_log_dets,
    all_spanning_tree_edges,
    build_laplacian,
    coarsened_laplacian,
    laplacian_from_log_weights,
    log_det_L_plus_J,
    log_det_minor,
    log_minor_star_mesh,
    shifted_spectrum,
    spanning_tree_weight_bruteforce,
    subset_log_det,
)
from bsf.partitions import Partition


def random_logw(rng, n, low=0.1, high=2.0):
    w = rng.uniform(low, high, size=(n, n))
    w = np.triu(w, 1)
    logw = np.log(w + w.T + np.eye(n))
    np.fill_diagonal(logw, 0.0)
    return logw


def test_singleton_laplacian():
    data = dataset_from_euclidean([[0.0], [1.0]])
    lap = build_laplacian(data, [0], KernelSpec(EUCLIDEAN_GAUSSIAN, sigma=1.0))
    assert lap.n == 1 and lap.log_scale == 0.0
    assert np.array_equal(lap.scaled, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        build_laplacian(data, [], KernelSpec(EUCLIDEAN_GAUSSIAN, sigma=1.0))


def test_two_point_laplacian_unscales_to_weight():
    w = 0.37
    lap = laplacian_from_log_weights(np.log(w) * (1 - np.eye(2)))
    dense = lap.dense()
    assert dense == pytest.approx(np.array([[w, -w], [-w, w]]), abs=1e-15)


def test_complete_graph_unit_weights():
    lap = laplacian_from_log_weights(np.zeros((3, 3)))
    assert np.allclose(lap.dense(), 2 * np.eye(3) - (1 - np.eye(3)) + np.eye(3) * 0)
    dense = lap.dense()
    assert np.allclose(np.diag(dense), 2.0)
    assert np.allclose(dense - np.diag(np.diag(dense)), -(1 - np.eye(3)))


def test_log_det_plus_j_small_cases():
    assert log_det_L_plus_J(laplacian_from_log_weights(np.zeros((1, 1)))) == 0.0
    lap2 = laplacian_from_log_weights(np.log(0.5) * (1 - np.eye(2)))
    assert log_det_L_plus_J(lap2) == pytest.approx(0.0, abs=1e-12)  # 2w = 1
    lap3 = laplacian_from_log_weights(np.zeros((3, 3)))
    assert log_det_L_plus_J(lap3) == pytest.approx(math.log(9), abs=1e-12)


def test_log_det_minor_small_cases(rng):
    w = 1.7
    lap2 = laplacian_from_log_weights(np.log(w) * (1 - np.eye(2)))
    assert log_det_minor(lap2) == pytest.approx(math.log(w), abs=1e-12)
    lap3 = laplacian_from_log_weights(np.zeros((3, 3)))
    for drop in range(3):
        assert log_det_minor(lap3, drop) == pytest.approx(math.log(3), abs=1e-12)
    with pytest.raises(ValueError):
        log_det_minor(laplacian_from_log_weights(np.zeros((1, 1))))
    logw = random_logw(rng, 6)
    lap = laplacian_from_log_weights(logw)
    brute = spanning_tree_weight_bruteforce(logw)
    for drop in range(6):
        assert log_det_minor(lap, drop) == pytest.approx(brute, abs=1e-9)


def test_kirchhoff_triple_identity(rng):
    for _ in range(40):
        n = int(rng.integers(2, 9))
        logw = random_logw(rng, n)
        lap = laplacian_from_log_weights(logw)
        via_j = log_det_L_plus_J(lap)
        brute = spanning_tree_weight_bruteforce(logw)
        assert via_j == pytest.approx(math.log(n) + brute, abs=1e-9)
        for drop in range(n):
            assert via_j == pytest.approx(math.log(n) + log_det_minor(lap, drop), abs=1e-9)


def test_scale_shift_is_exact():
    # integer log weights and integer log scale: no rounding anywhere
    rng = np.random.default_rng(5)
    base = rng.integers(-3, 3, size=(5, 5)).astype(float)
    base = np.triu(base, 1)
    logw = base + base.T
    shift = 7.0
    n = 5
    a = log_det_minor(laplacian_from_log_weights(logw))
    b = log_det_minor(laplacian_from_log_weights(logw + shift * (1 - np.eye(n))))
    assert b == a + (n - 1) * shift


def test_psd_and_positive_definite_shift(rng):
    for _ in range(20):
        n = int(rng.integers(2, 9))
        lap = laplacian_from_log_weights(random_logw(rng, n))
        ev = np.linalg.eigvalsh(lap.dense())
        assert ev.min() >= -1e-8 * ev.max()
        evj = np.linalg.eigvalsh(lap.dense() + np.ones((n, n)) / n)
        assert evj.min() > 0


def test_shifted_spectrum_cases(rng):
    w = 1.3
    lap2 = laplacian_from_log_weights(np.log(w) * (1 - np.eye(2)))
    spec = shifted_spectrum(lap2, a=0.0, b=0.5)
    assert spec == pytest.approx(np.sort([2 * w, 1.0]), abs=1e-12)
    lap = laplacian_from_log_weights(random_logw(rng, 5))
    shifted = shifted_spectrum(lap, a=1.0, b=0.0)
    assert shifted.min() == pytest.approx(1.0, abs=1e-9)
    direct = np.linalg.eigvalsh(lap.dense() + 0.3 * np.eye(5) + 0.7 * np.ones((5, 5)))
    assert np.abs(np.sort(direct) - shifted_spectrum(lap, 0.3, 0.7)).max() < 1e-8


def test_bruteforce_tree_sums():
    assert spanning_tree_weight_bruteforce(np.log(0.4) * (1 - np.eye(2))) == pytest.approx(
        math.log(0.4), abs=1e-12
    )
    assert spanning_tree_weight_bruteforce(np.zeros((3, 3))) == pytest.approx(
        math.log(3), abs=1e-12
    )
    logw4 = math.log(2.0) * (1 - np.eye(4))
    assert spanning_tree_weight_bruteforce(logw4) == pytest.approx(
        math.log(16 * 2**3), abs=1e-12
    )
    with pytest.raises(ValueError):
        all_spanning_tree_edges(10)


def test_tree_enumeration_counts():
    for n in range(2, 8):
        assert all_spanning_tree_edges(n).shape == (n ** (n - 2), n - 1, 2)


def test_coarsened_laplacian():
    logw = np.zeros((4, 4))
    one = coarsened_laplacian(logw, Partition((0, 0, 0, 0)))
    assert one.n == 1
    w = 0.9
    two = coarsened_laplacian(np.log(w) * (1 - np.eye(2)), Partition((0, 1)))
    assert two.dense() == pytest.approx(np.array([[w, -w], [-w, w]]), abs=1e-12)
    quad = coarsened_laplacian(logw, Partition((0, 0, 1, 1)))
    # 2x2 cross pairs with unit weights aggregate to 4
    assert quad.dense()[0, 1] == pytest.approx(-4.0, abs=1e-12)


def test_star_mesh_matches_cholesky_and_trees(rng):
    for _ in range(30):
        n = int(rng.integers(2, 9))
        logw = random_logw(rng, n)
        sm = log_minor_star_mesh(logw)
        assert sm == pytest.approx(spanning_tree_weight_bruteforce(logw), abs=1e-9)
        assert math.log(n) + sm == pytest.approx(
            subset_log_det(logw, range(n)), abs=1e-9
        )


def test_extreme_weight_ranges_stay_finite_and_factorized():
    # two tight groups bridged by astronomically small cross weights
    logw = np.full((6, 6), -2000.0)
    logw[:3, :3] = 0.0
    logw[3:, 3:] = 0.0
    np.fill_diagonal(logw, 0.0)
    got = subset_log_det(logw, range(6))
    # leading term: 6 * (9 e^-2000) * 3 * 3 spanning structures
    expect = math.log(6) + math.log(9) - 2000.0 + 2 * math.log(3)
    assert got == pytest.approx(expect, abs=1e-6)
    table = all_block_log_dets(logw)
    assert np.all(np.isfinite(table))
    assert table[(1 << 6) - 1] == pytest.approx(got, abs=1e-9)


def test_block_table_matches_subsets(rng):
    logw = random_logw(rng, 8)
    table = all_block_log_dets(logw)
    assert table[0] == 0.0
    for mask in [1, 2, 1 << 7, 0b1010101, 0b11111111, 0b1100, 0b100110]:
        members = [i for i in range(8) if mask >> i & 1]
        assert table[mask] == pytest.approx(subset_log_det(logw, members), abs=1e-9)
