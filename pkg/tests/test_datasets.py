import csv

import numpy as np
import pytest

from nfmlab.datasets import (
    NULL_LABEL,
    DatasetSpec,
    LabeledBatch,
    default_spec,
    sample_dataset,
    save_batch_csv,
    true_log_density,
)
from nfmlab.rand import stream


def test_standard_normal_sample_mean():
    spec = DatasetSpec(name="gauss_mix", n=2, k=1, scale=1.0)
    batch = sample_dataset(spec, 100_000, stream(0))
    assert np.all(np.abs(batch.x.mean(axis=0)) < 0.02)
    assert np.all(np.abs(batch.x.std(axis=0) - 1.0) < 0.02)


def test_moons_labels_balanced():
    spec = DatasetSpec(name="moons", n=2, k=2)
    batch = sample_dataset(spec, 10_000, stream(1))
    frac = np.mean(batch.c == 0)
    assert abs(frac - 0.5) < 0.05


def test_count_must_be_positive():
    with pytest.raises(ValueError):
        sample_dataset(default_spec(), 0, stream(2))


def test_unknown_name_rejected():
    with pytest.raises(ValueError):
        DatasetSpec(name="spiral")


def test_bad_dimensions_rejected():
    with pytest.raises(ValueError):
        DatasetSpec(name="gauss_mix", n=1, k=1)
    with pytest.raises(ValueError):
        DatasetSpec(name="moons", n=3, k=2)
    with pytest.raises(ValueError):
        DatasetSpec(name="checkerboard", n=2, k=3)


def test_non_positive_definite_covariance_rejected():
    with pytest.raises(ValueError):
        DatasetSpec(name="gauss_mix", n=2, k=1, covs=(((1.0, 2.0), (2.0, 1.0)),))


def test_standard_normal_log_density_at_origin():
    spec = DatasetSpec(name="gauss_mix", n=2, k=1, scale=1.0)
    assert true_log_density(spec, [0.0, 0.0]) == pytest.approx(-np.log(2 * np.pi), abs=1e-12)


def test_two_component_mixture_closed_form():
    mu = 1.5
    spec = DatasetSpec(
        name="gauss_mix", n=2, k=2, scale=1.0,
        means=((-mu, 0.0), (mu, 0.0)),
        covs=(((1.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (0.0, 1.0))),
    )
    # point equidistant from both means: density is the average of the components
    point = np.array([0.0, 0.7])
    comp = np.exp(-0.5 * ((point[0] + mu) ** 2 + point[1] ** 2)) / (2 * np.pi)
    assert true_log_density(spec, point) == pytest.approx(np.log(comp), abs=1e-12)


def test_density_unavailable_for_samplers_without_closed_form():
    assert true_log_density(DatasetSpec(name="checkerboard", n=2, k=2), [0.0, 0.0]) is None
    assert true_log_density(DatasetSpec(name="moons", n=2, k=2), [0.0, 0.0]) is None


def test_density_integrates_to_one():
    for spec, extent in [
        (DatasetSpec(name="gauss_mix", n=2, k=1, scale=1.0), 4.5),
        (default_spec(), 1.6),
        (DatasetSpec(name="aniso_gauss", n=2, k=4, scale=0.25), 1.8),
    ]:
        xs = np.linspace(-extent, extent, 320)
        cell = (xs[1] - xs[0]) ** 2
        gx, gy = np.meshgrid(xs, xs)
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        total = float(np.sum(np.exp(true_log_density(spec, grid)))) * cell
        assert total == pytest.approx(1.0, abs=1e-2)


def test_scaling_shifts_log_density_by_n_log_s():
    base = DatasetSpec(name="gauss_mix", n=2, k=1, scale=1.0)
    scaled = DatasetSpec(name="gauss_mix", n=2, k=1, scale=2.0)
    x = np.array([0.3, -0.8])
    assert true_log_density(scaled, 2.0 * x) == pytest.approx(
        true_log_density(base, x) - 2 * np.log(2.0), abs=1e-12
    )


def test_labels_follow_components():
    spec = default_spec()
    batch = sample_dataset(spec, 2000, stream(3))
    means, _ = spec.component_arrays()
    means = means * spec.scale
    nearest = np.argmin(
        np.sum((batch.x[:, None, :] - means[None, :, :]) ** 2, axis=2), axis=1
    )
    assert np.mean(nearest == batch.c) > 0.999


def test_checkerboard_parity_labels():
    spec = DatasetSpec(name="checkerboard", n=2, k=2, scale=1.0)
    batch = sample_dataset(spec, 5000, stream(4))
    assert np.all(np.abs(batch.x) <= spec.board_extent)
    tiles = np.floor((batch.x + spec.board_extent) / (spec.board_extent / 2.0)).astype(int)
    assert np.array_equal((tiles[:, 0] + tiles[:, 1]) % 2, batch.c)


def test_sampling_deterministic_given_seed():
    spec = default_spec()
    b1 = sample_dataset(spec, 512, stream(42))
    b2 = sample_dataset(spec, 512, stream(42))
    assert np.array_equal(b1.x, b2.x)
    assert np.array_equal(b1.c, b2.c)


def test_labeled_batch_validation():
    with pytest.raises(ValueError):
        LabeledBatch(x=np.array([[np.nan, 0.0]]), c=np.array([0]))
    with pytest.raises(ValueError):
        LabeledBatch(x=np.zeros((3, 2)), c=np.zeros(2, dtype=int))
    b = LabeledBatch(x=np.zeros((2, 2)), c=np.array([0, NULL_LABEL]))
    assert len(b) == 2


def test_csv_export_roundtrip(tmp_path):
    spec = default_spec()
    batch = sample_dataset(spec, 50, stream(5))
    path = tmp_path / "data.csv"
    save_batch_csv(batch, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x0", "x1", "label"]
    assert len(rows) == 51
    parsed = np.array([[float(v) for v in r[:2]] for r in rows[1:]])
    assert np.array_equal(parsed, batch.x)
