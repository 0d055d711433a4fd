import numpy as np
import pytest

from app.core.dependencies import get_dictionary_repository, get_sinogram_repository
from app.core.errors import ConfigurationError, ShapeMismatchError
from app.repositories import MetricsRepository
from app.services.experiments import (
    DenoisePipeline,
    FitPipeline,
    best_by_grid,
    build_pipeline,
    grid_search,
    load_experiment_config,
    run_experiment,
)
from conftest import orthonormal_dictionary, random_dictionary

SMALL_DICTIONARY = """
[dictionary]
atoms = 16
max_atoms = 3
patch_size = 4
step = 2
iters = 2
n_patches = 300
"""


def write_config(tmp_path, pipeline: str, extra: str = "", dictionary: str = SMALL_DICTIONARY, name="exp.ini"):
    text = f"[pipeline]\n{pipeline}\noutput_dir = {tmp_path / 'out'}\n{dictionary}\n{extra}"
    path = tmp_path / name
    path.write_text(text)
    return path


# ---- config files ------------------------------------------------------------------------


def test_load_config(tmp_path):
    path = write_config(
        tmp_path,
        "kind = reconstruct\nphantom = disk\nsize = 48\nnoise = 0.01",
        "[solver]\nbeta = 0.05\naccelerate = false\n[geometry]\nn_angles = 20\nfilter = hann\n",
    )
    config = load_experiment_config(path)
    assert config.pipeline.kind == "reconstruct"
    assert config.pipeline.size == 48
    assert config.solver.beta == 0.05
    assert config.solver.accelerate is False
    assert config.solver.rho == 1.0
    assert config.geometry.n_angles == 20
    assert config.geometry.filter == "hann"
    assert config.dictionary.patch_size == 4


@pytest.mark.parametrize(
    "pipeline,extra",
    [
        ("kind = denoise", "[extras]\nx = 1\n"),
        ("kind = denoise\ncolour = red", ""),
        ("kind = smooth", ""),
        ("kind = denoise", "[solver]\nbeta = -1\n"),
        ("kind = denoise", "[solver]\nmax_iters = many\n"),
    ],
)
def test_bad_configs_are_rejected(tmp_path, pipeline, extra):
    with pytest.raises(ConfigurationError):
        load_experiment_config(write_config(tmp_path, pipeline, extra))


def test_step_larger_than_patch_is_rejected(tmp_path):
    path = write_config(tmp_path, "kind = denoise", dictionary="[dictionary]\npatch_size = 4\nstep = 5\n")
    with pytest.raises(ConfigurationError):
        load_experiment_config(path)


def test_missing_file_and_section(tmp_path):
    with pytest.raises(ConfigurationError):
        load_experiment_config(tmp_path / "absent.ini")
    path = tmp_path / "solver_only.ini"
    path.write_text("[solver]\nbeta = 0.1\n")
    with pytest.raises(ConfigurationError):
        load_experiment_config(path)


# ---- pipelines ---------------------------------------------------------------------------


def test_denoise_pipeline_writes_artifacts(tmp_path):
    path = write_config(
        tmp_path,
        "kind = denoise\nphantom = texture\nsize = 32\nnoise = 0.1\ncompare_non_overlapping = true",
        "[solver]\nbeta = 0.1\nmax_iters = 20\n",
    )
    metrics = run_experiment(path)
    out = tmp_path / "out"
    for name in ("reference.pif", "degraded.pif", "restored.pif", "restored_non_overlapping.pif",
                 "restored.pgm", "dictionary.pdc", "report.csv", "metrics.txt"):
        assert (out / name).is_file(), name

    assert metrics["pipeline"] == "denoise"
    assert 0.0 < metrics["ssim_degraded"] < 1.0
    assert metrics["q"] > 0.0
    assert 1 <= metrics["iterations"] <= 20
    assert "q_non_overlapping" in metrics
    saved = MetricsRepository().read(out / "metrics.txt")
    assert saved.keys() == metrics.keys()
    assert saved["pipeline"] == "denoise"
    assert saved["q_capped"] is metrics["q_capped"]
    assert saved["ssim_restored"] == pytest.approx(metrics["ssim_restored"], rel=1e-9)


@pytest.mark.parametrize(
    "pipeline,extra",
    [
        ("kind = denoise\nphantom = texture\nsize = 32\nnoise = 0.05", "[solver]\nmax_iters = 10\n"),
        ("kind = reconstruct\nphantom = shepp-logan\nsize = 32\nnoise = 0.02",
         "[solver]\nmax_iters = 10\n[geometry]\nn_angles = 8\n"),
    ],
)
def test_runs_are_byte_identical(tmp_path, pipeline, extra):
    results = []
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        results.append(run_experiment(write_config(tmp_path / name, pipeline, extra)))
    assert results[0] == results[1]

    first, second = tmp_path / "a" / "out", tmp_path / "b" / "out"
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    assert {"restored.pif", "degraded.pif", "report.csv", "metrics.txt", "dictionary.pdc"} <= set(names)
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_fit_with_complete_dictionary_interpolates(tmp_path):
    dictionary_path = get_dictionary_repository().write(orthonormal_dictionary(4), tmp_path / "complete.pdc")
    path = write_config(
        tmp_path,
        "kind = fit\nphantom = texture\nsize = 32",
        "[solver]\nbeta = 0\nrho = 0\naccelerate = false\nmax_iters = 300\nrel_tol = 0\n",
        dictionary=f"[dictionary]\npath = {dictionary_path}\nstep = 2\n",
    )
    metrics = run_experiment(path)
    assert metrics["ssim_restored"] > 1.0 - 1e-6
    assert metrics["q"] == 1.0
    assert not (tmp_path / "out" / "dictionary.pdc").exists()


def test_reconstruct_pipeline(tmp_path):
    path = write_config(
        tmp_path,
        "kind = reconstruct\nphantom = shepp-logan\nsize = 32\nnoise = 0.01",
        "[solver]\nbeta = 0.01\nmax_iters = 15\n[geometry]\nn_angles = 8\n",
    )
    metrics = run_experiment(path)
    assert set(metrics) >= {"ssim_degraded", "ssim_restored", "q", "q_capped", "psnr_degraded", "sparsity"}
    sino = get_sinogram_repository().read(tmp_path / "out" / "sinogram.psn")
    assert sino.samples.shape == (1, 8, 46)


def test_dpc_pipeline_reports_both_channels(tmp_path):
    path = write_config(
        tmp_path,
        "kind = dpc\nphantom = shepp-logan\nsize = 32\nnoise = 0.01",
        "[solver]\nbeta = 0.01\nmax_iters = 10\n[geometry]\nn_angles = 8\n",
    )
    metrics = run_experiment(path)
    for key in ("ssim_restored_0", "ssim_restored_1", "ssim_degraded_0", "ssim_degraded_1"):
        assert key in metrics
    assert np.isclose(metrics["ssim_restored"], (metrics["ssim_restored_0"] + metrics["ssim_restored_1"]) / 2)
    dictionary = get_dictionary_repository().read(tmp_path / "out" / "dictionary.pdc")
    assert dictionary.channels == 2
    sino = get_sinogram_repository().read(tmp_path / "out" / "sinogram.psn")
    assert sino.channels == 2


def test_validation_happens_before_compute(tmp_path):
    field = get_dictionary_repository().write(random_dictionary(8, 4, channels=2), tmp_path / "field.pdc")
    path = write_config(tmp_path, "kind = denoise\nphantom = texture\nsize = 32",
                        dictionary=f"[dictionary]\npath = {field}\nstep = 2\n")
    with pytest.raises(ShapeMismatchError):
        run_experiment(path)

    path = write_config(tmp_path, f"kind = denoise\ninput = {tmp_path / 'missing.pif'}")
    with pytest.raises(ConfigurationError):
        run_experiment(path)

    path = write_config(tmp_path, "kind = denoise\nphantom = texture\nsize = 32",
                        dictionary="[dictionary]\natoms = 50\nn_patches = 20\npatch_size = 4\nstep = 2\n")
    with pytest.raises(ConfigurationError):
        run_experiment(path)


def test_dictionary_source_selects_training_image(tmp_path):
    body = "kind = denoise\nphantom = texture\nsize = 32\nnoise = 0.1"
    reference = build_pipeline(load_experiment_config(
        write_config(tmp_path, body, dictionary=SMALL_DICTIONARY + "source = reference\n", name="a.ini")))
    assert reference.training_image() is reference.reference()

    degraded = build_pipeline(load_experiment_config(
        write_config(tmp_path, body, dictionary=SMALL_DICTIONARY + "source = degraded\n", name="b.ini")))
    noisy = degraded.measure(degraded.reference())[1]
    np.testing.assert_array_equal(degraded.training_image().samples, noisy.samples)


def test_training_file_and_source_conflict(tmp_path):
    dictionary = SMALL_DICTIONARY + f"source = reference\ntraining = {tmp_path / 'train.pif'}\n"
    path = write_config(tmp_path, "kind = fit\nphantom = texture\nsize = 32", dictionary=dictionary)
    with pytest.raises(ConfigurationError):
        load_experiment_config(path)


# ---- grid search -------------------------------------------------------------------------


def test_grid_search_table(tmp_path):
    config = load_experiment_config(write_config(
        tmp_path,
        "kind = denoise\nphantom = texture\nsize = 32\nnoise = 0.1",
        "[solver]\nmax_iters = 10\n",
    ))
    pipeline = build_pipeline(config)
    assert isinstance(pipeline, DenoisePipeline)
    table = grid_search(pipeline, betas=[0.01, 0.1], rhos=[0.5, 2.0])
    assert len(table) == 6
    assert list(table.columns) == ["overlapping", "step", "beta", "rho", "ssim", "q", "q_capped", "sparsity",
                                   "iterations"]
    tiled = table[~table["overlapping"]]
    assert (tiled["rho"] == 0.0).all()
    assert (tiled["step"] == 4).all()
    assert (table[table["overlapping"]]["step"] == 2).all()

    best = best_by_grid(table)
    assert len(best) == 2
    assert set(best["overlapping"]) == {True, False}


def test_grid_search_needs_degraded_input(tmp_path):
    config = load_experiment_config(write_config(tmp_path, "kind = fit\nphantom = texture\nsize = 32"))
    with pytest.raises(ConfigurationError):
        grid_search(FitPipeline(config), betas=[0.1], rhos=[1.0])


# ---- desk-scale comparisons --------------------------------------------------------------

TEXTURE_DICTIONARY = """
[dictionary]
atoms = 100
max_atoms = 4
patch_size = 7
step = 3
iters = 10
n_patches = 4000
"""

PHANTOM_DICTIONARY = TEXTURE_DICTIONARY + "source = reference\n"

# powers of three around the expected optima, 0.0012 .. 2.7
BETAS = [0.3 * 3.0 ** k for k in range(-6, 3)]


@pytest.fixture(scope="module")
def texture_pipelines(tmp_path_factory):
    """Denoise pipelines keyed by (noise, size); each learns its dictionary once"""
    cache = {}

    def get(noise: float, size: int = 256):
        if (noise, size) not in cache:
            tmp = tmp_path_factory.mktemp(f"texture_{size}")
            path = write_config(
                tmp,
                f"kind = denoise\nphantom = texture\nsize = {size}\nnoise = {noise}",
                "[solver]\nmax_iters = 300\nrel_tol = 1e-5\n",
                dictionary=TEXTURE_DICTIONARY,
            )
            cache[(noise, size)] = build_pipeline(load_experiment_config(path))
        return cache[(noise, size)]

    return get


def peak_beta(table, overlapping: bool) -> float:
    rows = table[table["overlapping"] == overlapping]
    return float(rows.loc[rows["q"].idxmax(), "beta"])


@pytest.mark.slow
def test_grid_search_prefers_overlapping_patches(texture_pipelines):
    table = grid_search(texture_pipelines(0.1), betas=[0.03, 0.1, 0.3], rhos=[0.3, 1.0, 3.0])
    assert len(table) == 12
    best = best_by_grid(table).set_index("overlapping")["q"]
    assert best[True] > best[False] > 1.0


@pytest.mark.slow
def test_overlap_peak_sits_at_smaller_beta(texture_pipelines):
    table = grid_search(texture_pipelines(0.1), betas=BETAS, rhos=[1.0])
    tiled, overlapping = peak_beta(table, False), peak_beta(table, True)
    for peak in (tiled, overlapping):
        assert BETAS[0] < peak < BETAS[-1]
    # nine-fold overlap: the peak moves down by one to three grid steps
    assert 3.0 - 1e-9 <= tiled / overlapping <= 27.0 + 1e-9


@pytest.mark.slow
def test_stronger_noise_needs_larger_beta(texture_pipelines):
    peaks = []
    for noise in (0.05, 0.1, 0.2):
        table = grid_search(texture_pipelines(noise, size=128), betas=BETAS, rhos=[1.0], include_non_overlapping=False)
        peaks.append(peak_beta(table, True))
    assert peaks == sorted(peaks)
    assert peaks[-1] > peaks[0]


@pytest.mark.slow
def test_sparse_view_reconstruction_quality(tmp_path):
    path = write_config(
        tmp_path,
        "kind = reconstruct\nphantom = shepp-logan\nsize = 256\nnoise = 0.0",
        "[solver]\nbeta = 0.002\nrho = 100\nmax_iters = 1500\nrel_tol = 1e-8\n"
        "init = fbp\nrestart = true\ncontinuation = 3\n[geometry]\nn_angles = 60\n",
        dictionary=PHANTOM_DICTIONARY,
    )
    metrics = run_experiment(path)
    assert metrics["ssim_restored"] > metrics["ssim_degraded"]
    assert metrics["q"] >= 5.0


@pytest.mark.slow
def test_noisy_sparse_view_tuned_beats_fbp(tmp_path):
    path = write_config(
        tmp_path,
        "kind = reconstruct\nphantom = shepp-logan\nsize = 256\nnoise = 0.05",
        "[solver]\nmax_iters = 400\ninit = fbp\nrestart = true\n[geometry]\nn_angles = 60\n",
        dictionary=PHANTOM_DICTIONARY,
    )
    pipeline = build_pipeline(load_experiment_config(path))
    table = grid_search(pipeline, betas=[3.0, 30.0], rhos=[100.0, 1000.0], include_non_overlapping=False)
    # Q > 1 means the tuned reconstruction scores above FBP
    assert table["q"].max() > 1.0


@pytest.mark.slow
def test_dpc_channels_beat_split_fbp(tmp_path):
    # 40 angles is about a fifth of what a 128-pixel grid needs
    path = write_config(
        tmp_path,
        "kind = dpc\nphantom = shepp-logan\nsize = 128\nnoise = 0.0",
        "[solver]\nbeta = 0.01\nrho = 100\nmax_iters = 600\ninit = fbp\nrestart = true\ncontinuation = 2\n"
        "[geometry]\nn_angles = 40\n",
        dictionary=TEXTURE_DICTIONARY,
    )
    metrics = run_experiment(path)
    for c in (0, 1):
        assert metrics[f"ssim_restored_{c}"] > metrics[f"ssim_degraded_{c}"]
