"""Single-mode squeezed thermal states.

Units are shot-noise units throughout: the vacuum has
``<dx^2> = <dp^2> = 1``. A state is described by its squeezing factor
``s = exp(2 r)`` and purity ``mu``; its covariance matrix is
``diag(s / mu, 1 / (mu s))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidParameterError, NonStsFormError, UnphysicalStateError
from .linalg import trace_distance, uhlmann_fidelity_matrix

PHYS_TOL = 1e-9
CROSS_TOL = 1e-9


@dataclass(frozen=True)
class EnergyBudget:
    n_th: float
    n_s: float
    n_tot: float


@dataclass(frozen=True)
class StsParams:
    s: float
    mu: float

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise InvalidParameterError(f"squeezing factor must be > 0, got {self.s}")
        if not (0 < self.mu <= 1):
            raise InvalidParameterError(f"purity must lie in (0, 1], got {self.mu}")

    @classmethod
    def from_r_nth(cls, r: float, n_th: float) -> "StsParams":
        if n_th < 0:
            raise InvalidParameterError("n_th must be >= 0")
        return cls(s=math.exp(2 * r), mu=1 / (2 * n_th + 1))

    @property
    def r(self) -> float:
        return 0.5 * math.log(self.s)

    @property
    def n_th(self) -> float:
        return 0.5 * (1 / self.mu - 1)

    @property
    def n_s(self) -> float:
        return math.sinh(self.r) ** 2

    @property
    def energy(self) -> EnergyBudget:
        return EnergyBudget(self.n_th, self.n_s, total_energy(self.n_th, self.n_s))


@dataclass(frozen=True)
class CovarianceMatrix2:
    vxx: float
    vpp: float
    vxp: float = 0.0

    def __post_init__(self):
        if not (self.vxx > 0 and self.vpp > 0):
            raise InvalidParameterError(
                f"variances must be positive, got ({self.vxx}, {self.vpp})"
            )

    @property
    def det(self) -> float:
        return self.vxx * self.vpp - self.vxp**2

    def as_array(self) -> np.ndarray:
        return np.array([[self.vxx, self.vxp], [self.vxp, self.vpp]])

    def is_physical(self, tol: float = PHYS_TOL) -> bool:
        return self.det >= 1 - tol

    def check_physical(self, tol: float = PHYS_TOL) -> None:
        if not self.is_physical(tol):
            raise UnphysicalStateError(
                f"det sigma = {self.det:.6g} violates the uncertainty relation"
            )


def cm_from_params(p: StsParams) -> CovarianceMatrix2:
    return CovarianceMatrix2(p.s / p.mu, 1 / (p.mu * p.s), 0.0)


def params_from_cm(c: CovarianceMatrix2, cross_tol: float = CROSS_TOL) -> StsParams:
    """Invert ``cm_from_params``.

    Raises NonStsFormError if ``|vxp| > cross_tol`` and UnphysicalStateError if
    the determinant is below one.
    """
    if abs(c.vxp) > cross_tol:
        raise NonStsFormError(f"cross term {c.vxp:.3e} exceeds {cross_tol:.1e}")
    c.check_physical()
    mu = min(1 / math.sqrt(c.vxx * c.vpp), 1.0)
    return StsParams(s=math.sqrt(c.vxx / c.vpp), mu=mu)


def total_energy(n_th: float, n_s: float) -> float:
    if n_th < 0 or n_s < 0:
        raise InvalidParameterError("photon numbers must be non-negative")
    return n_th + n_s + 2 * n_th * n_s


def _squeeze_gain(n_s: float) -> float:
    # e^{-2|r|} expressed through the squeezing photon number
    return 1 + 2 * n_s - 2 * math.sqrt(n_s + n_s**2)


def variances_from_energy(n_tot: float, n_s: float) -> tuple[float, float]:
    """Variances of the squeezed and anti-squeezed quadratures at fixed energy.

    Both are linear in ``n_tot`` for a fixed squeezing photon number.
    """
    if n_s < 0:
        raise InvalidParameterError("n_s must be >= 0")
    if n_tot < n_s:
        raise InvalidParameterError(f"n_tot={n_tot} is below n_s={n_s}")
    thermal = 1 + 2 * (n_tot - n_s) / (2 * n_s + 1)
    g = _squeeze_gain(n_s)
    return thermal * g, thermal / g


def is_nonclassical(p: StsParams) -> bool:
    return p.s < p.mu or p.s > 1 / p.mu


def gaussian_fidelity(c1: CovarianceMatrix2, c2: CovarianceMatrix2) -> float:
    """Fidelity of two zero-mean single-mode Gaussian states from their CMs."""
    c1.check_physical()
    c2.check_physical()
    big = 0.25 * np.linalg.det(c1.as_array() + c2.as_array())
    small = 0.25 * max(c1.det - 1, 0.0) * max(c2.det - 1, 0.0)
    f = 1 / (math.sqrt(big + small) - math.sqrt(small))
    return min(f, 1.0)


def _check_fidelity(f: float) -> None:
    if not (0 <= f <= 1):
        raise InvalidParameterError(f"fidelity must lie in [0, 1], got {f}")


def bures_distance(f: float) -> float:
    _check_fidelity(f)
    return math.sqrt(2 * (1 - math.sqrt(f)))


def trace_distance_bounds(f: float) -> tuple[float, float]:
    _check_fidelity(f)
    return 1 - math.sqrt(f), math.sqrt(1 - f)


def sample_thermal_amplitude(n_th: float, rng: np.random.Generator, size=None):
    """Draw coherent amplitudes whose phase-averaged mixture is a thermal state.

    ``|alpha|^2`` is exponential with mean ``n_th`` (equivalently ``|alpha|``
    has density ``2|a|/n_th exp(-|a|^2/n_th)``) and the phase is uniform.
    """
    if not n_th > 0:
        raise InvalidParameterError("n_th must be > 0")
    modulus = np.sqrt(rng.exponential(n_th, size=size))
    phase = rng.uniform(0.0, 2 * np.pi, size=size)
    return modulus * np.exp(1j * phase)


def squeezing_db(s: float) -> float:
    """Squeezing in dB, ``-10 log10(s)``; positive for ``s < 1``."""
    if not s > 0:
        raise InvalidParameterError("s must be > 0")
    return -10 * math.log10(s)


# -- Fock-basis representation, used as an independent fidelity oracle --


def fock_cutoff(p: StsParams) -> int:
    return max(30, math.ceil(10 * (p.energy.n_tot + 1)))


def fock_density_matrix(p: StsParams, n_max: int | None = None, deficit_tol=1e-8):
    """Truncated Fock matrix ``S(r) nu(n_th) S(r)^dag`` on photon numbers 0..n_max.

    The squeezer is exponentiated in a padded space and cropped afterwards.
    The cutoff grows until the lost trace is below ``deficit_tol``.
    """
    n_max = fock_cutoff(p) if n_max is None else n_max
    while True:
        dim = n_max + 1
        big = dim + 80
        a = np.diag(np.sqrt(np.arange(1, big)), 1)
        gen = 0.5 * p.r * (a.T @ a.T - a @ a)
        sq = expm(gen)
        n = np.arange(big)
        nth = p.n_th
        thermal = (nth / (1 + nth)) ** n / (1 + nth) if nth > 0 else (n == 0) * 1.0
        rho = (sq * thermal) @ sq.T
        rho = rho[:dim, :dim]
        deficit = 1 - np.trace(rho)
        if deficit < deficit_tol:
            return rho
        n_max = int(n_max * 1.5) + 1


def fock_fidelity(p1: StsParams, p2: StsParams) -> float:
    n_max = max(fock_cutoff(p1), fock_cutoff(p2))
    r1 = fock_density_matrix(p1, n_max)
    r2 = fock_density_matrix(p2, r1.shape[0] - 1)
    if r2.shape != r1.shape:
        r1 = fock_density_matrix(p1, r2.shape[0] - 1)
    return uhlmann_fidelity_matrix(r1, r2)


def fock_trace_distance(p1: StsParams, p2: StsParams) -> float:
    n_max = max(fock_cutoff(p1), fock_cutoff(p2))
    r1 = fock_density_matrix(p1, n_max)
    r2 = fock_density_matrix(p2, r1.shape[0] - 1)
    if r2.shape != r1.shape:
        r1 = fock_density_matrix(p1, r2.shape[0] - 1)
    return trace_distance(r1, r2)
