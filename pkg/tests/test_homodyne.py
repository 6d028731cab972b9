import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tomofid import cv_core, homodyne
from tomofid.cv_core import StsParams
from tomofid.errors import CoverageError, FitError, InvalidParameterError
from tomofid.homodyne import HomodyneDataset
from tomofid.measured import STS_ROWS

STATE7 = StsParams(0.41, 0.53)
VACUUM = StsParams(1.0, 1.0)


@pytest.fixture(scope="module")
def state7_ds():
    return homodyne.simulate_homodyne(STATE7, 7000, np.random.default_rng(2024))


@pytest.fixture(scope="module")
def vacuum_ds():
    return homodyne.simulate_homodyne(VACUUM, 100_000, np.random.default_rng(99))


def test_estimator_examples():
    assert homodyne.estimator_quadrature(1, 0.3, 0.3) == pytest.approx(2)
    assert homodyne.estimator_quadrature(1, math.pi / 2, 0) == pytest.approx(0, abs=1e-15)
    assert homodyne.estimator_quadrature(0.5, math.pi / 3, 0) == pytest.approx(0.5)
    assert homodyne.estimator_quadrature_sq(1, 0.7, 0.1) == pytest.approx(1)
    assert homodyne.estimator_quadrature_sq(0, 0.2, 0.2) == pytest.approx(-2)
    assert homodyne.estimator_quadrature_sq(2, math.pi / 2, 0) == pytest.approx(-2)
    assert homodyne.estimator_photon_number(1) == 0
    assert homodyne.estimator_photon_number(0) == -0.5
    assert homodyne.estimator_photon_number(3) == 4


def test_dataset_validation():
    with pytest.raises(InvalidParameterError):
        HomodyneDataset([0.0], [1.0])
    with pytest.raises(InvalidParameterError):
        HomodyneDataset([0.0, 1.0], [1.0])
    with pytest.raises(InvalidParameterError):
        homodyne.simulate_homodyne(STATE7, 1, np.random.default_rng(0))


def test_vacuum_isotropy(vacuum_ds):
    x = vacuum_ds.x
    se = math.sqrt(2 / x.size)
    assert abs(x.var() - 1) < 3 * se
    _, var = homodyne.binned_variances(vacuum_ds, bins=10)
    assert np.all(np.abs(var - 1) < 4 * math.sqrt(2 / (x.size / 10)))


def test_state7_binned_variances(state7_ds):
    centers, var = homodyne.binned_variances(state7_ds, bins=40)
    se = np.sqrt(2 / (7000 / 40)) * var
    assert abs(var[0] - 0.774) < 4 * se[0]
    k = int(np.argmin(np.abs(centers - math.pi / 2)))
    assert abs(var[k] - 4.602) < 4 * se[k]


def test_simulation_deterministic():
    a = homodyne.simulate_homodyne(STATE7, 500, np.random.default_rng(5), "uniform")
    b = homodyne.simulate_homodyne(STATE7, 500, np.random.default_rng(5), "uniform")
    assert np.array_equal(a.x, b.x) and np.array_equal(a.theta, b.theta)


def test_vacuum_photon_number(vacuum_ds):
    n = homodyne.reconstruct(vacuum_ds, "photon_number")
    assert abs(n.value) < 3 * n.sigma


def test_state7_moments(state7_ds):
    var, first = homodyne.variance_moment(state7_ds, 0.0)
    assert abs(var.value - 0.774) < 3 * var.sigma
    assert var.sigma == pytest.approx(0.05, rel=0.5)
    n = homodyne.reconstruct(state7_ds, "photon_number")
    assert abs(n.value - 0.844) < 3 * n.sigma
    assert n.sigma == pytest.approx(0.03, rel=0.5)


def test_reconstruct_cm_state7(state7_ds):
    rec = homodyne.reconstruct_cm(state7_ds)
    assert abs(rec.cm.vxx - 0.774) < 3 * rec.cm_sigma[0]
    assert abs(rec.cm.vpp - 4.602) < 3 * rec.cm_sigma[1]
    for m, s in zip(rec.first_moments, rec.first_moments_sigma):
        assert abs(m) < 3 * s
    assert rec.sts_compatible


def test_reconstruct_cm_vacuum(vacuum_ds):
    rec = homodyne.reconstruct_cm(vacuum_ds)
    assert abs(rec.cm.vxx - 1) < 3 * rec.cm_sigma[0]
    assert abs(rec.cm.vpp - 1) < 3 * rec.cm_sigma[1]


def test_shifted_dataset_fails_zero_mean(state7_ds):
    shifted = HomodyneDataset(state7_ds.theta, state7_ds.x + 2.0)
    assert not homodyne.reconstruct_cm(shifted).zero_mean_ok


def test_coverage_error():
    theta = np.linspace(0, 0.5, 100)
    with pytest.raises(CoverageError):
        homodyne.reconstruct(HomodyneDataset(theta, np.ones(100)), "x_phi")


def test_unknown_observable(state7_ds):
    with pytest.raises(InvalidParameterError):
        homodyne.reconstruct(state7_ds, "parity")


@pytest.mark.parametrize("which, phi, exact", [
    ("x_phi", 0.0, 0.0),
    ("x_phi_sq", 0.0, 0.774),
    ("x_phi_sq", math.pi / 2, 4.602),
    ("x_phi_sq", math.pi / 4, 0.5 * (0.774 + 4.602)),
    ("photon_number", 0.0, 0.844),
])  # fmt: skip
def test_estimators_unbiased(which, phi, exact):
    c = cv_core.cm_from_params(STATE7)
    exact = {0.774: c.vxx, 4.602: c.vpp, 0.844: STATE7.energy.n_tot}.get(exact, exact)
    if which == "x_phi_sq" and phi == math.pi / 4:
        exact = 0.5 * (c.vxx + c.vpp)
    ds = homodyne.simulate_homodyne(STATE7, 1_000_000, np.random.default_rng(77), "uniform")
    est = homodyne.reconstruct(ds, which, phi)
    assert abs(est.value - exact) < 4 * est.sigma


def test_streaming_matches_direct(state7_ds):
    est = homodyne.reconstruct(state7_ds, "x_phi_sq", 0.3)
    k = homodyne.estimator_quadrature_sq(state7_ds.x, state7_ds.theta, 0.3)
    assert est.value == pytest.approx(k.mean(), rel=1e-12)
    assert est.sigma == pytest.approx(k.std() / math.sqrt(k.size), rel=1e-9)


def test_fit_table_triples():
    n = [r.n_tot for r in STS_ROWS]
    fit = homodyne.fit_squeezed_photons(
        n, [r.vxx for r in STS_ROWS], [r.vpp for r in STS_ROWS],
        [r.vxx_err for r in STS_ROWS], [r.vpp_err for r in STS_ROWS],
    )  # fmt: skip
    assert 0.15 <= fit.n_s <= 0.25
    assert fit.db == pytest.approx(3.7, abs=0.15)


def test_fit_exact_recovery():
    n_s = 0.2122
    n = np.array([0.3, 0.5, 0.8, 1.1, 1.4])
    vx, vp = np.array([cv_core.variances_from_energy(x, n_s) for x in n]).T
    fit = homodyne.fit_squeezed_photons(n, vx, vp)
    assert fit.n_s == pytest.approx(n_s, abs=1e-8)


def test_fit_db_for_02():
    vx, vp = np.array([cv_core.variances_from_energy(x, 0.2) for x in (0.4, 0.9, 1.3)]).T
    fit = homodyne.fit_squeezed_photons([0.4, 0.9, 1.3], vx, vp)
    assert fit.db == pytest.approx(3.77, abs=5e-3)


def test_fit_errors():
    with pytest.raises(FitError):
        homodyne.fit_squeezed_photons([0.5], [0.7], [3.0])


def test_fitted_curves_shape():
    cx, cp = homodyne.fitted_curves(0.2, [0.1, 0.5, 1.0])
    assert math.isnan(cx[0]) and cx[1] < 1 < cp[1]


@given(st.floats(0.3, 2.0), st.floats(0.3, 1.0))
def test_quadrature_variance_endpoints(s, mu):
    p = StsParams(s, mu)
    c = cv_core.cm_from_params(p)
    assert homodyne.quadrature_variance(p, 0.0) == pytest.approx(c.vxx)
    assert homodyne.quadrature_variance(p, math.pi / 2) == pytest.approx(c.vpp)


def test_folded_preserves_kernels(state7_ds):
    f = state7_ds.folded()
    assert f.theta.max() < math.pi
    a = homodyne.reconstruct(state7_ds, "x_phi_sq", 0.4)
    b = homodyne.reconstruct(f, "x_phi_sq", 0.4)
    assert a.value == pytest.approx(b.value, rel=1e-10)


def test_dataset_io_roundtrip(tmp_path, state7_ds):
    path, sidecar = homodyne.save_dataset(state7_ds, tmp_path / "d.csv")
    back = homodyne.load_dataset(path)
    assert np.array_equal(back.x, state7_ds.x)
    assert np.array_equal(back.theta, state7_ds.theta)
    assert back.meta == state7_ds.meta
