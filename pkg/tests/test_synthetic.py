from dataclasses import replace

import numpy as np
import pytest

from src.analysis.significance import significance_report
from src.models.kruskal import reconstruct_matrix, reconstruct_tensor
from src.synthetic.generator import SynthSpec, generate, paper_shaped_preset, subject_loadings
from src.synthetic.spec_file import parse_spec_text, read_spec_file, write_spec_file
from src.utils.exceptions import DataFormatError, DomainError


def _roughness(factor):
    return np.sum(np.diff(factor, axis=0) ** 2, axis=0) / np.sum(factor ** 2, axis=0)


def test_noiseless_data_equals_truth():
    data = generate(SynthSpec(dims=(6, 5, 4, 7), rank=2, seed=1))
    np.testing.assert_array_equal(data.tensor.data, reconstruct_tensor(data.truth).data)
    np.testing.assert_array_equal(data.matrix.data, reconstruct_matrix(data.truth).data)


def test_truth_is_normalized():
    data = generate(SynthSpec(dims=(6, 5, 4, 7), rank=3, in_matrix=(True, False, True), seed=2))
    for f in data.truth.factors:
        np.testing.assert_allclose(np.linalg.norm(f, axis=0), 1.0, atol=1e-12)
    assert data.truth.matrix_weights[1] == 0.0
    assert np.all(np.abs(data.truth.tensor_weights) > 0)


@pytest.mark.parametrize('eta', [0.1, 0.5, 1.0])
def test_noise_has_requested_relative_size(eta):
    spec = SynthSpec(dims=(6, 5, 4, 7), rank=2, noise_tensor=eta, noise_matrix=eta / 2, seed=3)
    data = generate(spec)
    x_signal = reconstruct_tensor(data.truth).data
    y_signal = reconstruct_matrix(data.truth).data
    x_ratio = np.linalg.norm(data.tensor.data - x_signal) / np.linalg.norm(x_signal)
    y_ratio = np.linalg.norm(data.matrix.data - y_signal) / np.linalg.norm(y_signal)
    assert x_ratio == pytest.approx(eta, rel=1e-12)
    assert y_ratio == pytest.approx(eta / 2, rel=1e-12)


def test_generation_is_deterministic():
    spec = SynthSpec(dims=(6, 5, 4, 7), rank=2, noise_tensor=0.3, noise_matrix=0.3, seed=9)
    first, second = generate(spec), generate(spec)
    np.testing.assert_array_equal(first.tensor.data, second.tensor.data)
    np.testing.assert_array_equal(first.matrix.data, second.matrix.data)
    other = generate(replace(spec, seed=10))
    assert not np.array_equal(first.tensor.data, other.tensor.data)


def test_group_effect_shifts_only_group_one():
    base = SynthSpec(dims=(8, 3, 3, 3), rank=2, group_sizes=(5, 3), seed=4)
    shifted = replace(base, group_effects=(2.0, -1.0))
    delta = subject_loadings(shifted) - subject_loadings(base)
    np.testing.assert_allclose(delta[:5], 0.0, atol=0.0)
    np.testing.assert_allclose(delta[5:], np.tile([2.0, -1.0], (3, 1)), atol=1e-14)


def test_default_group_sizes():
    spec = SynthSpec(dims=(7, 2, 2, 2), rank=1)
    assert spec.group_sizes == (4, 3)
    assert spec.labels.sizes == (4, 3)


@pytest.mark.parametrize('kwargs', [
    {'dims': (0, 3, 3, 3), 'rank': 1},
    {'dims': (4, 3, 3), 'rank': 1},
    {'dims': (4, 3, 3, 3), 'rank': 0},
    {'dims': (4, 3, 3, 3), 'rank': 2, 'in_tensor': (True, False), 'in_matrix': (True, False)},
    {'dims': (4, 3, 3, 3), 'rank': 2, 'in_tensor': (False, False)},
    {'dims': (4, 3, 3, 3), 'rank': 2, 'in_matrix': (True, False), 'matrix_weights': (1.0, 0.5)},
    {'dims': (4, 3, 3, 3), 'rank': 2, 'tensor_weights': (1.0, 0.0)},
    {'dims': (4, 3, 3, 3), 'rank': 2, 'group_effects': (1.0,)},
    {'dims': (4, 3, 3, 3), 'rank': 1, 'group_sizes': (2, 3)},
    {'dims': (4, 3, 3, 3), 'rank': 1, 'group_sizes': (4, 0)},
    {'dims': (4, 3, 3, 3), 'rank': 1, 'noise_tensor': -0.1},
])
def test_spec_invariants(kwargs):
    with pytest.raises(DomainError):
        SynthSpec(**kwargs)


def test_preset_shape():
    spec = paper_shaped_preset(seed=3)
    assert spec.dims == (38, 451, 11, 600)
    assert spec.rank == 3
    assert spec.group_sizes == (22, 16)
    assert spec.group_effects == (1.5, 0.0, 0.0)
    assert spec.smooth_time
    assert spec.seed == 3


def test_smoothed_time_courses_are_smooth():
    smooth = generate(SynthSpec(dims=(4, 150, 3, 3), rank=3, smooth_time=True, seed=5))
    rough = generate(SynthSpec(dims=(4, 150, 3, 3), rank=3, smooth_time=False, seed=5))
    assert np.all(_roughness(smooth.truth.factors[1]) < 0.1)
    assert np.all(_roughness(rough.truth.factors[1]) > 1.0)


def test_no_group_effect_keeps_false_positive_rate():
    n_seeds = 200
    hits = 0
    for seed in range(n_seeds):
        data = generate(SynthSpec(dims=(20, 4, 3, 4), rank=1, seed=seed))
        hits += significance_report(data.truth, data.labels)[0].significant
    rate = hits / n_seeds
    assert rate <= 0.05 + 3 * np.sqrt(0.05 * 0.95 / n_seeds)


def test_preset_group_effect_is_visible_in_truth():
    detected = 0
    for seed in range(10):
        data = generate(paper_shaped_preset(seed=seed))
        detected += significance_report(data.truth, data.labels)[0].significant_bonferroni
    assert detected >= 9


def test_spec_file_round_trip(tmp_path):
    spec = SynthSpec(
        dims=(10, 20, 5, 30), rank=3, in_matrix=(True, True, False),
        tensor_weights=(2.0, 1.0, 0.5), noise_tensor=0.15, noise_matrix=0.25,
        group_sizes=(6, 4), group_effects=(1.25, 0.0, -0.5), smooth_time=True, seed=42,
    )
    path = tmp_path / 'spec.txt'
    write_spec_file(spec, path)
    assert read_spec_file(path) == spec


def test_parse_minimal_spec():
    spec = parse_spec_text("# two components\ndims = 6, 5, 4, 3\nrank = 2\nin_matrix = true, no\n")
    assert spec.dims == (6, 5, 4, 3)
    assert spec.in_matrix == (True, False)
    assert spec.matrix_weights == (1.0, 0.0)


@pytest.mark.parametrize('text', [
    "dims = 6, 5, 4, 3\n",
    "dims = 6, 5, 4, 3\nrank = 2\ncolour = red\n",
    "dims = 6, 5, 4, 3\nrank = 2\nrank = 3\n",
    "dims = 6, 5, 4, 3\nrank = two\n",
    "dims = 6, 5, 4, 3\nrank 2\n",
    "dims = 6, 5, 4, 3\nrank = 2\nsmooth_time = maybe\n",
])
def test_parse_errors(text):
    with pytest.raises(DataFormatError):
        parse_spec_text(text)


def test_parse_invariant_violation_is_domain_error():
    with pytest.raises(DomainError):
        parse_spec_text("dims = 6, 5, 4, 3\nrank = 0\n")


def test_missing_spec_file(tmp_path):
    with pytest.raises(DataFormatError):
        read_spec_file(tmp_path / 'absent.txt')
