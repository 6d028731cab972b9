import math

import numpy as np
import pytest

from tomofid import cv_core, dv_core, mle, resample
from tomofid.cv_core import StsParams
from tomofid.errors import FitError, InvalidParameterError
from tomofid.measured import STS_ROWS, sts_row

STATE7 = StsParams(0.41, 0.53)


@pytest.fixture(scope="module")
def cv_state7():
    return resample.cv_replicas(STATE7, 7000, 200, seed=5)


@pytest.fixture(scope="module")
def dv_state4():
    base = mle.simulate_counts(dv_core.werner(0.44), 1000, np.random.default_rng(40), repetitions=30)
    e = resample.dv_replicas(base, 60, seed=41)
    resample.dv_quantities(e)
    return e


def test_child_rngs_independent():
    n = 400
    means = np.array([g.normal(size=500).mean() for g in resample.child_rngs(1, n)])
    # neighbouring replica streams share no generator state
    assert abs(np.corrcoef(means[:-1], means[1:])[0, 1]) < 3 / math.sqrt(n)
    half = n // 2
    assert abs(np.corrcoef(means[:half], means[half:])[0, 1]) < 3 / math.sqrt(half)
    again = np.array([g.normal(size=500).mean() for g in resample.child_rngs(1, n)])
    assert np.array_equal(means, again)


def test_cv_cloud_centered(cv_state7):
    d = cv_state7.derived
    for key, truth in (("s", 0.41), ("mu", 0.53)):
        se = d[key].std(ddof=1) / math.sqrt(cv_state7.n_mc)
        # the reconstructed parameters are ratios of noisy moments; allow their O(1/M) bias
        assert abs(d[key].mean() - truth) < 3 * se + 0.005


def test_cv_energy_matches_closed_form(cv_state7):
    n = cv_state7.derived["n_tot"]
    assert abs(n.mean() - STATE7.energy.n_tot) < 3 * n.std(ddof=1) / math.sqrt(n.size)


def test_cv_determinism():
    a = resample.cv_replicas(STATE7, 500, 5, seed=3)
    b = resample.cv_replicas(STATE7, 500, 5, seed=3)
    for k in a.derived:
        assert np.array_equal(a.derived[k], b.derived[k])


def test_parallel_matches_serial():
    a = resample.cv_replicas(STATE7, 500, 6, seed=8, workers=1)
    b = resample.cv_replicas(STATE7, 500, 6, seed=8, workers=2)
    assert np.array_equal(a.derived["s"], b.derived["s"])


def test_single_replica_is_degenerate():
    e = resample.cv_replicas(STATE7, 500, 1, seed=0)
    st = resample.classify_ensemble(e)
    assert e.n_mc == 1
    assert st.quantities["s"].degenerate and st.quantities["s"].std == 0
    assert st.fractions["nonclassicality"]["nonclassical"] in (0.0, 1.0)


def test_nonclassical_fraction_near_boundary():
    row = sts_row(9)
    e = resample.cv_replicas(StsParams(row.s, row.mu), 7000, 200, seed=9)
    frac = resample.classify_ensemble(e).fractions["nonclassicality"]["nonclassical"]
    assert 0 < frac < 1


def test_invalid_ensemble_requests():
    with pytest.raises(InvalidParameterError):
        resample.cv_replicas(STATE7, 500, 0, seed=0)
    with pytest.raises(InvalidParameterError):
        resample.dv_replicas(mle.simulate_counts(np.eye(4) / 4, 100, noise_model="none"), 0, seed=0)


def test_dv_determinism_and_zero_noise():
    base = mle.simulate_counts(dv_core.werner(0.3), 1000, noise_model="none")
    a = resample.dv_replicas(base, 3, seed=2)
    b = resample.dv_replicas(base, 3, seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a.replicas, b.replicas))
    quiet = resample.dv_replicas(base, 3, seed=2, noise_scale=0.0)
    assert all(np.array_equal(quiet.replicas[0], r) for r in quiet.replicas)


def test_dv_failure_rate_aborts(monkeypatch):
    def broken(*args, **kwargs):
        raise FitError("forced")

    monkeypatch.setattr(mle, "mle_fit", broken)
    base = mle.simulate_counts(dv_core.werner(0.3), 1000, noise_model="none")
    with pytest.raises(FitError):
        resample.dv_replicas(base, 5, seed=0)


def test_dv_state4_statistics(dv_state4):
    q = dv_state4.derived
    assert abs(q["e_m"].mean() - (-0.07)) < 3 * 0.03
    assert q["discord"].mean() < dv_core.discord_analytic_werner(0.44)
    assert all(np.isfinite(q["werner_p"]))


def test_separable_target_crosses_boundary():
    base = mle.simulate_counts(dv_core.werner(0.28), 1000, np.random.default_rng(28), repetitions=30)
    e = resample.dv_replicas(base, 60, seed=29)
    frac = resample.classify_ensemble(e).fractions["entanglement"]["entangled"]
    assert 0 < frac < 1


def test_projection_on_werner_curve(dv_state4):
    target = dv_core.werner(0.44)
    proj = resample.werner_projection_ensemble(dv_state4, target)
    p = proj.derived["werner_p"]
    # the projection lies exactly on the Werner manifold
    assert np.allclose(proj.derived["e_m"], np.minimum((1 - 3 * p) / 4, (1 + p) / 4), atol=1e-12)
    ev = lambda x: np.array([(1 + 3 * x) / 4] + [(1 - x) / 4] * 3)
    f_curve = np.array([np.sum(np.sqrt(ev(x) * ev(0.44))) ** 2 for x in p])
    assert np.allclose(proj.derived["fidelity_to_target"], f_curve, atol=1e-7)


def test_projection_overestimates_discord(dv_state4):
    proj = resample.werner_projection_ensemble(dv_state4)
    conf = resample.bootstrap_exceedance(proj.derived["discord"], dv_state4.derived["discord"], seed=1)
    assert conf >= 0.95


def test_projection_identity_on_werner_replicas():
    ps = [0.1, 0.28, 0.44]
    e = resample.ReplicaEnsemble("w", [dv_core.werner(p) for p in ps], 0, "dv")
    proj = resample.werner_projection_ensemble(e)
    assert np.allclose(proj.derived["werner_p"], ps, atol=1e-6)


def test_fidelity_to_target_not_stale(dv_state4):
    a = resample.dv_quantities(dv_state4, dv_core.werner(0.44))["fidelity_to_target"].copy()
    b = resample.dv_quantities(dv_state4, dv_core.werner(0.1))["fidelity_to_target"]
    assert not np.allclose(a, b)


def test_balloon_examples():
    target = StsParams(0.41, 0.53)
    b = resample.fidelity_balloon(resample.BalloonSpec(target, 0.90))
    tcm = cv_core.cm_from_params(target)
    for row in STS_ROWS:
        assert cv_core.gaussian_fidelity(cv_core.cm_from_params(StsParams(row.s, row.mu)), tcm) > 0.90
    assert b.in_balloon.any()
    row9 = sts_row(9)
    b9 = resample.fidelity_balloon(resample.BalloonSpec(StsParams(row9.s, row9.mu), 0.995))
    inside = b9.nonclassical[b9.in_balloon]
    assert inside.any() and (~inside).any()
    tight = resample.fidelity_balloon(resample.BalloonSpec(target, 0.99999))
    assert 0 < tight.in_balloon.sum() <= 4


def test_balloon_monotone():
    target = StsParams(0.41, 0.53)
    grid = resample.LatticeSpec(n_s=80, n_mu=80)
    prev = None
    for th in (0.8, 0.9, 0.95, 0.99):
        cur = resample.fidelity_balloon(resample.BalloonSpec(target, th), grid).in_balloon
        if prev is not None:
            assert not np.any(cur & ~prev)
        prev = cur


def test_fidelity_grid_matches_scalar():
    target = StsParams(0.41, 0.53)
    s = np.array([0.3, 0.8, 1.1])
    mu = np.array([0.4, 0.9, 0.6])
    grid = resample.gaussian_fidelity_grid(target, s, mu)
    tcm = cv_core.cm_from_params(target)
    for i in range(3):
        assert grid[i] == pytest.approx(cv_core.gaussian_fidelity(cv_core.cm_from_params(StsParams(s[i], mu[i])), tcm))


def test_balloon_spec_validation():
    with pytest.raises(InvalidParameterError):
        resample.BalloonSpec(STATE7, 1.0)
    with pytest.raises(InvalidParameterError):
        resample.BalloonSpec(STATE7, 0.9, (0.8, 0.0))


def test_beta_fit_uniform():
    u = np.random.default_rng(0).uniform(size=50_000)
    a, b, _, ok = resample.beta_moments(u, support=(0, 1))
    assert ok
    assert a == pytest.approx(1, rel=0.1) and b == pytest.approx(1, rel=0.1)


def test_histogram_degenerate():
    h = resample.histogram_with_beta(np.full(10, 0.97))
    assert not h.fit_ok


def test_histogram_self_target_near_one(dv_state4):
    h = resample.fidelity_histogram(dv_state4, dv_core.werner(0.44), bins=10)
    assert h.mean > 0.95 and h.counts.sum() == dv_state4.n_mc


def test_ensemble_csv(tmp_path, cv_state7):
    path = tmp_path / "e.csv"
    resample.write_ensemble_csv(cv_state7, path, "seed=5")
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=5" and lines[1].startswith("replica_id,")
    assert len(lines) == cv_state7.n_mc + 2
