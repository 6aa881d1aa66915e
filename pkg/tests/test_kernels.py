from __future__ import annotations

import numpy as np
import pytest

from radonlab.kernels import (
    KERNEL_REGISTRY,
    PSI,
    kernel_from_spec,
    kj_eval,
    kj_l1_integral,
    lattice_annulus,
    make_kernel,
    psi,
    theta,
    verify_cz_bounds,
)


def test_profile_supports():
    x = np.linspace(-3, 3, 6001)
    v = psi(x)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(v[np.abs(x) <= 0.5] == 0)
    assert np.all(v[np.abs(x) >= 2] == 0)
    assert np.all(theta(x[np.abs(x) <= 1]) == 1)


def test_partition_of_unity():
    rng = np.random.default_rng(0)
    r = 2.0 ** rng.uniform(-1, 20, 10_000)
    assert np.max(np.abs(PSI.partition_sum(r) - 1)) <= 1e-10
    pts = rng.normal(size=(2000, 2))
    pts *= (2.0 ** rng.uniform(-1, 20, 2000) / np.linalg.norm(pts, axis=1))[:, None]
    assert np.max(np.abs(PSI.partition_sum(pts) - 1)) <= 1e-10


def test_kj_examples():
    K = make_kernel("one_over_y", normalize=False)
    assert kj_eval(K, 0, np.array([1.0]))[0] == pytest.approx(float(psi(np.array([1.0]))[0]))
    assert kj_eval(K, 5, np.array([1000.0]))[0] == 0
    with pytest.raises(ValueError):
        K(np.array([0.0]))


def test_telescoping_sum_recovers_kernel():
    K = make_kernel("one_over_y")
    J = 10
    rng = np.random.default_rng(1)
    y = rng.uniform(1, 2 ** (J - 1), 500) * rng.choice([-1, 1], 500)
    total = sum(kj_eval(K, j, y) for j in range(0, J + 1))
    assert np.allclose(total, K(y), rtol=1e-12)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("j", range(0, 9))
def test_kj_support_on_lattice(d, j):
    K = make_kernel("one_over_y") if d == 1 else make_kernel("riesz_component", 0, 2)
    R = 2 ** (j + 2)
    ax = np.arange(-R, R + 1)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    pts = pts[np.any(pts != 0, axis=1)]
    r = np.linalg.norm(pts, axis=1)
    outside = (r <= 2.0 ** (j - 1)) | (r >= 2.0 ** (j + 1))
    assert np.all(kj_eval(K, j, pts[outside]) == 0)
    ann = lattice_annulus(d, j)
    ra = np.linalg.norm(ann, axis=1)
    assert np.all((ra > 2.0 ** (j - 1)) & (ra < 2.0 ** (j + 1)))
    assert ann.shape[0] == np.count_nonzero(~outside)


def test_cz_reports():
    half = make_kernel("one_over_y", normalize=False).rescaled(0.5)
    rep = verify_cz_bounds(half)
    assert rep.size_gradient_max == pytest.approx(1.0)
    assert rep.cancellation_max == 0.0
    raw = verify_cz_bounds(make_kernel("one_over_y", normalize=False))
    assert raw.size_gradient_max == pytest.approx(2.0)
    assert raw.normalization_factor == pytest.approx(0.5)
    assert make_kernel("one_over_y").scale == pytest.approx(0.5)
    riesz = make_kernel("riesz_component", 0, 2, normalize=False).rescaled(0.2)
    rep2 = verify_cz_bounds(riesz)
    assert rep2.passes and rep2.size_gradient_max < 1


@pytest.mark.parametrize("spec", ["one_over_y", "sign_y_over_abs_pow(3)", "riesz_component(1,2)",
                                  {"name": "sign_y_over_abs_pow", "params": [2]}])
def test_registry_kernels_are_normalized(spec):
    K = kernel_from_spec(spec)
    assert verify_cz_bounds(K).passes


def test_registry_names():
    assert set(KERNEL_REGISTRY) == {"one_over_y", "sign_y_over_abs_pow", "riesz_component"}
    with pytest.raises(KeyError):
        make_kernel("nope")


def test_l1_mass_is_scale_invariant():
    K = make_kernel("one_over_y")
    vals = [kj_l1_integral(K, j) for j in range(3, 13)]
    assert max(vals) / min(vals) <= 4
    K2 = make_kernel("riesz_component", 0, 2)
    vals2 = [kj_l1_integral(K2, j) for j in range(3, 9)]
    assert max(vals2) / min(vals2) <= 4
