import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.core.errors import GridError, PatchIndexError, ShapeMismatchError
from app.models import Image
from app.services.patchgrid import (
    PatchComposer,
    build_grid,
    compose_core,
    extract_patch,
    render_patch,
    sample_patches,
    write_patch,
)
from conftest import orthonormal_dictionary, random_dictionary


def brute_force_cores(grid):
    """Nearest covering center in L1, lowest index on ties, by enumeration"""
    H, W, m = grid.image_height, grid.image_width, grid.patch_size
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    rows = ii.ravel()[:, None]
    cols = jj.ravel()[:, None]
    r0 = grid.origins[:, 0][None, :]
    c0 = grid.origins[:, 1][None, :]
    covers = (rows >= r0) & (rows < r0 + m) & (cols >= c0) & (cols < c0 + m)
    dist = (np.abs(rows - (r0 + m // 2)) + np.abs(cols - (c0 + m // 2))).astype(float)
    dist[~covers] = np.inf
    return np.argmin(dist, axis=1).reshape(H, W), covers.sum(axis=1).reshape(H, W)


def test_nine_fold_overlap():
    grid = build_grid(13, 13, 7, 3)
    assert grid.n_patches == 9
    assert set(grid.origins[:, 0]) == {0, 3, 6}
    assert set(grid.origins[:, 1]) == {0, 3, 6}
    assert grid.overlap_count[6, 6] == 9


def test_non_overlapping_tiling():
    grid = build_grid(14, 14, 7, 7)
    assert grid.n_patches == 4
    assert np.all(grid.overlap_count == 1)


def test_tie_goes_to_lower_index():
    grid = build_grid(11, 7, 7, 4)
    assert_array_equal(grid.origins, [[0, 0], [0, 4]])
    # column 5 is at distance 2 from centers 3 and 7
    assert np.all(grid.core_map[:, 5] == 0)


def test_flush_patch_appended():
    grid = build_grid(11, 11, 4, 3)
    assert sorted(set(grid.origins[:, 1])) == [0, 3, 6, 7]
    assert grid.origins[:, 0].max() + 4 == 11


@pytest.mark.parametrize("width,height,m,step", [(3, 10, 4, 2), (10, 10, 0, 1), (10, 10, 3, 4), (10, 10, 3, 0)])
def test_degenerate_grids_rejected(width, height, m, step):
    with pytest.raises(GridError):
        build_grid(width, height, m, step)


@pytest.mark.parametrize("width,height,m,step", [(13, 13, 7, 3), (17, 23, 5, 2), (30, 20, 6, 4), (64, 64, 7, 3), (9, 9, 1, 1)])
def test_core_map_partition(width, height, m, step):
    grid = build_grid(width, height, m, step)
    cores, counts = brute_force_cores(grid)
    assert_array_equal(grid.core_map, cores)
    assert_array_equal(grid.overlap_count, counts)
    assert np.all(grid.overlap_count >= 1)

    total = np.zeros((height, width), dtype=int)
    for p in range(grid.n_patches):
        core = grid.core_indicator(p)
        assert not np.any(core & ~grid.indicator(p))
        total += core
    assert np.all(total == 1)
    assert np.all(grid.origins + m <= [height, width])


def test_extract_constant_and_ramp():
    grid = build_grid(13, 13, 7, 3)
    block = extract_patch(Image(np.full((13, 13), 0.25)), grid, 4)
    assert block.shape == (1, 7, 7)
    assert np.all(block == 0.25)

    ramp = Image(np.repeat(np.arange(13.0)[:, None], 13, axis=1))
    p = 7
    block = extract_patch(ramp, grid, p)
    for r in range(7):
        assert np.all(block[0, r] == grid.origins[p, 0] + r)


def test_extract_write_round_trip(rng):
    img = Image(rng.random((2, 13, 13)))
    grid = build_grid(13, 13, 7, 3)
    for p in range(grid.n_patches):
        again = write_patch(img, grid, p, extract_patch(img, grid, p))
        assert_array_equal(again.samples, img.samples)


def test_patch_index_and_shape_errors():
    grid = build_grid(13, 13, 7, 3)
    img = Image.zeros(13, 13)
    with pytest.raises(PatchIndexError):
        extract_patch(img, grid, 9)
    with pytest.raises(ShapeMismatchError):
        extract_patch(Image.zeros(14, 13), grid, 0)
    with pytest.raises(ShapeMismatchError):
        write_patch(img, grid, 0, np.zeros((1, 6, 6)))


def test_render_patch():
    dictionary = random_dictionary(6, 4, seed=2)
    w = np.zeros((5, 6))
    assert np.all(render_patch(w, dictionary, 2) == 0.0)

    w[2, 3] = 1.0
    assert_allclose(render_patch(w, dictionary, 2), dictionary.atoms[3])

    w[2, 3] = 0.7
    w[2, 5] = -1.3
    expected = 0.7 * dictionary.atoms[3] + -1.3 * dictionary.atoms[5]
    assert_allclose(render_patch(w, dictionary, 2), expected, rtol=1e-14, atol=1e-15)

    with pytest.raises(ShapeMismatchError):
        render_patch(np.zeros((5, 4)), dictionary, 0)


def test_compose_core_zero_and_constant():
    grid = build_grid(16, 16, 4, 2)
    dictionary = orthonormal_dictionary(4)
    w = np.zeros((grid.n_patches, dictionary.n_atoms))
    assert np.all(compose_core(w, dictionary, grid).samples == 0.0)

    # atom 0 is 1/m everywhere, so w_0p = c * m renders the constant c
    w[:, 0] = 0.3 * 4
    assert_allclose(compose_core(w, dictionary, grid).samples, 0.3, rtol=1e-12)


def test_compose_core_tiling_matches_patches(rng):
    grid = build_grid(12, 12, 4, 4)
    dictionary = orthonormal_dictionary(4)
    img = Image(rng.random((12, 12)))
    w = np.stack([dictionary.flat @ extract_patch(img, grid, p).ravel() for p in range(grid.n_patches)])
    composed = compose_core(w, dictionary, grid)
    assert_allclose(composed.samples, img.samples, atol=1e-12)
    for p in range(grid.n_patches):
        r, c = grid.origins[p]
        assert_allclose(composed.samples[:, r:r + 4, c:c + 4], render_patch(w, dictionary, p), atol=1e-15)


def test_compose_core_is_linear(rng):
    grid = build_grid(17, 15, 5, 2)
    dictionary = random_dictionary(9, 5, channels=2, seed=4)
    w1 = rng.standard_normal((grid.n_patches, 9))
    w2 = rng.standard_normal((grid.n_patches, 9))
    lhs = compose_core(2.5 * w1 - 0.5 * w2, dictionary, grid).samples
    rhs = 2.5 * compose_core(w1, dictionary, grid).samples - 0.5 * compose_core(w2, dictionary, grid).samples
    assert_allclose(lhs, rhs, atol=1e-12)


def test_composer_adjoints(rng):
    grid = build_grid(15, 13, 5, 3)
    composer = PatchComposer(grid, random_dictionary(7, 5, channels=2, seed=1))
    patches = rng.standard_normal((grid.n_patches, composer.signal_length))
    image = rng.standard_normal(composer.image_shape)

    lhs = np.sum(composer.compose(patches) * image)
    rhs = np.sum(patches * composer.compose_adjoint(image))
    assert_allclose(lhs, rhs, rtol=1e-12)

    lhs = np.sum(composer.extract(image) * patches)
    rhs = np.sum(image * composer.extract_adjoint(patches))
    assert_allclose(lhs, rhs, rtol=1e-12)

    # E^T of all-ones patches counts coverage
    counts = composer.extract_adjoint(np.ones_like(patches))
    assert_array_equal(counts[0], grid.overlap_count)


def test_composer_rejects_mismatched_patch_size():
    with pytest.raises(ShapeMismatchError):
        PatchComposer(build_grid(13, 13, 7, 3), random_dictionary(4, 5))


def test_sample_patches(rng):
    img = Image(rng.random((2, 20, 24)))
    patches = sample_patches(img, 5, 50, seed=0)
    assert patches.shape == (50, 2 * 25)
    assert_array_equal(patches, sample_patches(img, 5, 50, seed=0))

    # every row is a channel-planar window of the image
    windows = {
        img.samples[:, r:r + 5, c:c + 5].ravel().tobytes()
        for r in range(16)
        for c in range(20)
    }
    assert all(row.tobytes() in windows for row in patches)


def test_sample_patches_returns_all_windows_when_asked_for_more():
    img = Image(np.arange(64.0).reshape(8, 8))
    assert sample_patches(img, 4, 1000).shape == (25, 16)
