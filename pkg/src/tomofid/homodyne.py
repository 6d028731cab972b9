"""Homodyne data simulation and pattern-function reconstruction.

Observables are estimated as sample means of kernel functions evaluated on
the ``(theta_k, x_k)`` pairs. Kernels are accumulated in a single streaming
pass (sum and sum of squares), so the standard error comes for free.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .cv_core import (
    CovarianceMatrix2,
    StsParams,
    _squeeze_gain,
    squeezing_db,
    variances_from_energy,
)
from .errors import CoverageError, FitError, InvalidParameterError

OBSERVABLES = ("x_phi", "x_phi_sq", "photon_number")
CHUNK = 1 << 16


@dataclass
class HomodyneDataset:
    theta: np.ndarray
    x: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.theta.shape != self.x.shape or self.theta.ndim != 1:
            raise InvalidParameterError("theta and x must be 1-D arrays of equal length")
        if self.m < 2:
            raise InvalidParameterError("a dataset needs at least two samples")

    @property
    def m(self) -> int:
        return self.x.size

    def folded(self) -> "HomodyneDataset":
        """Map phases to [0, pi), flipping the sign of x for theta >= pi."""
        t = np.mod(self.theta, 2 * np.pi)
        upper = t >= np.pi
        return HomodyneDataset(
            np.where(upper, t - np.pi, t), np.where(upper, -self.x, self.x), dict(self.meta)
        )


@dataclass(frozen=True)
class ReconstructedMoment:
    value: float
    sigma: float


@dataclass(frozen=True)
class CmReconstruction:
    cm: CovarianceMatrix2
    cm_sigma: tuple[float, float, float]  # (vxx, vpp, vxp)
    first_moments: tuple[float, float]  # (<x>, <p>)
    first_moments_sigma: tuple[float, float]
    n_tot: ReconstructedMoment
    zero_mean_ok: bool
    diagonal_ok: bool

    @property
    def sts_compatible(self) -> bool:
        return self.zero_mean_ok and self.diagonal_ok


@dataclass(frozen=True)
class VarianceFitResult:
    n_s: float
    n_s_sigma: float
    residuals: np.ndarray
    db: float
    chi2: float


def quadrature_variance(p: StsParams, theta):
    """Variance of the quadrature at LO phase ``theta``."""
    return (1 / p.mu) * (p.s * np.cos(theta) ** 2 + np.sin(theta) ** 2 / p.s)


def phase_schedule(m: int, schedule: str, rng: np.random.Generator | None = None):
    if schedule == "ramp":
        return 2 * np.pi * np.arange(m) / m
    if schedule == "uniform":
        if rng is None:
            raise InvalidParameterError("a uniform schedule needs a random source")
        return rng.uniform(0.0, 2 * np.pi, size=m)
    raise InvalidParameterError(f"unknown phase schedule {schedule!r}")


def simulate_homodyne(
    p: StsParams, m: int, rng: np.random.Generator, schedule: str = "ramp"
) -> HomodyneDataset:
    if m < 2:
        raise InvalidParameterError("m must be >= 2")
    theta = phase_schedule(m, schedule, rng)
    x = rng.standard_normal(m) * np.sqrt(quadrature_variance(p, theta))
    return HomodyneDataset(theta, x, {"s": p.s, "mu": p.mu, "m": m, "schedule": schedule})


def estimator_quadrature(x, theta, phi):
    return 2 * x * np.cos(theta - phi)


def estimator_quadrature_sq(x, theta, phi):
    return (x**2 - 1) * (1 + 2 * np.cos(2 * (theta - phi))) + 1


def estimator_photon_number(x, theta=None):
    return 0.5 * (x**2 - 1)


def _kernel(which: str, phi: float):
    if which == "x_phi":
        return lambda x, t: estimator_quadrature(x, t, phi)
    if which == "x_phi_sq":
        return lambda x, t: estimator_quadrature_sq(x, t, phi)
    if which == "photon_number":
        return lambda x, t: estimator_photon_number(x)
    raise InvalidParameterError(f"unknown observable {which!r}; expected one of {OBSERVABLES}")


def check_coverage(theta, max_gap: float = np.pi / 2) -> None:
    """Raise CoverageError if the phases, folded onto the half circle, leave a gap wider than ``max_gap``."""
    t = np.sort(np.mod(theta, np.pi))
    gaps = np.diff(np.concatenate([t, [t[0] + np.pi]]))
    if gaps.max() > max_gap:
        raise CoverageError(f"phase coverage gap {gaps.max():.3f} rad exceeds {max_gap:.3f}")


def reconstruct(ds: HomodyneDataset, which: str, phi: float = 0.0) -> ReconstructedMoment:
    check_coverage(ds.theta)
    kern = _kernel(which, phi)
    total = 0.0
    total_sq = 0.0
    for start in range(0, ds.m, CHUNK):
        vals = kern(ds.x[start : start + CHUNK], ds.theta[start : start + CHUNK])
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
    mean = total / ds.m
    spread = max(total_sq / ds.m - mean**2, 0.0)
    return ReconstructedMoment(mean, math.sqrt(spread / ds.m))


def variance_moment(ds: HomodyneDataset, phi: float) -> tuple[ReconstructedMoment, ReconstructedMoment]:
    """Return (variance, first moment) of the quadrature at ``phi``."""
    first = reconstruct(ds, "x_phi", phi)
    second = reconstruct(ds, "x_phi_sq", phi)
    var = second.value - first.value**2
    sigma = math.hypot(second.sigma, 2 * first.value * first.sigma)
    return ReconstructedMoment(var, sigma), first


def reconstruct_cm(ds: HomodyneDataset, n_sigma: float = 3.0) -> CmReconstruction:
    vx, mx = variance_moment(ds, 0.0)
    vp, mp = variance_moment(ds, np.pi / 2)
    vd, _ = variance_moment(ds, np.pi / 4)
    # Var(x_{pi/4}) = (vxx + vpp) / 2 + vxp
    vxp = vd.value - 0.5 * (vx.value + vp.value)
    vxp_sigma = math.sqrt(vd.sigma**2 + 0.25 * (vx.sigma**2 + vp.sigma**2))
    n_tot = reconstruct(ds, "photon_number")
    # a phase-independent offset cancels in the cosine kernels; the plain mean catches it
    offset = float(np.mean(ds.x))
    offset_sigma = float(np.std(ds.x) / math.sqrt(ds.m))
    zero_mean = (
        abs(mx.value) <= n_sigma * mx.sigma
        and abs(mp.value) <= n_sigma * mp.sigma
        and abs(offset) <= n_sigma * offset_sigma
    )
    diagonal = abs(vxp) <= n_sigma * vxp_sigma
    return CmReconstruction(
        cm=CovarianceMatrix2(vx.value, vp.value, vxp),
        cm_sigma=(vx.sigma, vp.sigma, vxp_sigma),
        first_moments=(mx.value, mp.value),
        first_moments_sigma=(mx.sigma, mp.sigma),
        n_tot=n_tot,
        zero_mean_ok=zero_mean,
        diagonal_ok=diagonal,
    )


def binned_variances(ds: HomodyneDataset, bins: int = 20):
    """Sample variance of x in equal phase bins over [0, 2 pi). Returns (centers, variances)."""
    t = np.mod(ds.theta, 2 * np.pi)
    edges = np.linspace(0, 2 * np.pi, bins + 1)
    idx = np.clip(np.digitize(t, edges) - 1, 0, bins - 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    var = np.array([np.var(ds.x[idx == b], ddof=1) if np.sum(idx == b) > 1 else np.nan for b in range(bins)])
    return centers, var


def fit_squeezed_photons(n_tot, vxx, vpp, vxx_err=None, vpp_err=None) -> VarianceFitResult:
    """Weighted least-squares fit of the shared squeezing photon number.

    Both variance branches are modelled as linear functions of the total
    energy with one common parameter ``n_s``. Energies are taken as exact.
    """
    n_tot = np.asarray(n_tot, dtype=float)
    vxx = np.asarray(vxx, dtype=float)
    vpp = np.asarray(vpp, dtype=float)
    if n_tot.size < 2:
        raise FitError("need at least two points to fit")
    wx = 1 / np.asarray(vxx_err, dtype=float) if vxx_err is not None else np.ones_like(vxx)
    wp = 1 / np.asarray(vpp_err, dtype=float) if vpp_err is not None else np.ones_like(vpp)

    def resid(theta):
        ns = theta[0]
        thermal = 1 + 2 * (n_tot - ns) / (2 * ns + 1)
        g = _squeeze_gain(ns)
        return np.concatenate([(thermal * g - vxx) * wx, (thermal / g - vpp) * wp])

    upper = float(n_tot.min())
    if upper <= 0:
        raise FitError("all energies must be positive")
    start = [min(0.2, 0.5 * upper)]
    sol = least_squares(resid, start, bounds=([0.0], [upper]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if sol.status <= 0 or not np.isfinite(sol.x[0]):
        raise FitError(f"variance fit did not converge: {sol.message}")
    ns = float(sol.x[0])
    jac = sol.jac
    try:
        cov = np.linalg.inv(jac.T @ jac)
        dof = max(sol.fun.size - 1, 1)
        ns_sigma = float(np.sqrt(cov[0, 0] * max(2 * sol.cost / dof, 1e-300)))
    except np.linalg.LinAlgError:
        ns_sigma = float("nan")
    return VarianceFitResult(
        n_s=ns,
        n_s_sigma=ns_sigma,
        residuals=sol.fun,
        db=squeezing_db(_squeeze_gain(ns)),
        chi2=float(2 * sol.cost),
    )


def fitted_curves(n_s: float, n_grid):
    """Model variances on an energy grid for plotting the fit."""
    vals = np.array([variances_from_energy(n, n_s) if n >= n_s else (np.nan, np.nan) for n in n_grid])
    return vals[:, 0], vals[:, 1]


# -- file format: CSV "theta,x" plus a JSON sidecar --


def save_dataset(ds: HomodyneDataset, path) -> tuple[Path, Path]:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("theta,x\n")
        for t, x in zip(ds.theta, ds.x):
            fh.write(f"{t:.17g},{x:.17g}\n")
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(ds.meta, indent=2, sort_keys=True))
    return path, sidecar


def load_dataset(path) -> HomodyneDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["theta", "x"]:
            raise InvalidParameterError(f"unexpected header {header}")
        rows = np.array([[float(a), float(b)] for a, b in reader])
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return HomodyneDataset(rows[:, 0], rows[:, 1], meta)
