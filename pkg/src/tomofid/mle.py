"""Polarization tomography: 16-projector counts and maximum-likelihood fitting.

The density matrix is parametrized as ``rho(T) = T^dag T / Tr[T^dag T]`` with
``T`` complex lower triangular, so every parameter vector maps to a physical
state and the fit is unconstrained.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .dv_core import check_density_matrix
from .errors import ConvergenceError, InvalidParameterError, UnphysicalStateError

PROB_FLOOR = 1e-12
NORM_COUNT = 4  # the first four projectors form a complete basis

_S2 = 1 / math.sqrt(2)
POLARIZATIONS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "L": np.array([_S2, 1j * _S2], dtype=complex),
    "R": np.array([_S2, -1j * _S2], dtype=complex),
}
STANDARD_LABELS = (
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
    "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
)  # fmt: skip


@dataclass(frozen=True)
class ProjectorSet:
    labels: tuple[str, ...]
    kets: np.ndarray  # (16, 4)
    name: str = "standard16"

    @property
    def projectors(self) -> np.ndarray:
        return np.einsum("ja,jb->jab", self.kets, self.kets.conj())

    def gram(self) -> np.ndarray:
        P = self.projectors
        return np.real(np.einsum("iab,jba->ij", P, P))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.gram()))

    def probabilities(self, rho) -> np.ndarray:
        return np.real(np.einsum("ja,ab,jb->j", self.kets.conj(), rho, self.kets))


def projector_set(labels) -> ProjectorSet:
    kets = np.array([np.kron(POLARIZATIONS[a], POLARIZATIONS[b]) for a, b in labels])
    return ProjectorSet(tuple(labels), kets, name="custom")


def standard_projector_set() -> ProjectorSet:
    ps = projector_set(STANDARD_LABELS)
    return ProjectorSet(ps.labels, ps.kets, name="standard16")


@dataclass
class CountRecord:
    counts: np.ndarray
    labels: tuple[str, ...] = STANDARD_LABELS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.labels),):
            raise InvalidParameterError("one count per projector is required")
        if np.any(self.counts < 0):
            raise InvalidParameterError("counts must be non-negative")
        if self.norm <= 0:
            raise InvalidParameterError("normalization count must be positive")

    @property
    def norm(self) -> float:
        return float(self.counts[:NORM_COUNT].sum())


def simulate_counts(
    rho,
    n_scale: float,
    rng: np.random.Generator | None = None,
    noise_model: str = "poisson",
    ps: ProjectorSet | None = None,
    repetitions: int = 1,
) -> CountRecord:
    """Expected counts ``n_scale * <psi_j|rho|psi_j>``, optionally Poisson-sampled.

    ``n_scale`` is the expected count per basis in one acquisition window.
    With ``repetitions > 1`` the record holds the per-window mean over that
    many independent Poisson windows.
    """
    if not n_scale > 0:
        raise InvalidParameterError("n_scale must be > 0")
    if repetitions < 1:
        raise InvalidParameterError("repetitions must be >= 1")
    ps = ps or standard_projector_set()
    mean = n_scale * np.clip(ps.probabilities(rho), 0.0, None)
    if noise_model == "none":
        counts = mean
    elif noise_model == "poisson":
        if rng is None:
            raise InvalidParameterError("Poisson counts need a random source")
        # a sum of Poisson windows is Poisson with the summed mean
        counts = rng.poisson(mean * repetitions).astype(float) / repetitions
    else:
        raise InvalidParameterError(f"unknown noise model {noise_model!r}")
    meta = {"n_scale": n_scale, "noise_model": noise_model, "repetitions": repetitions}
    return CountRecord(counts, ps.labels, meta)


# -- Cholesky parametrization --

_TRIL = np.tril_indices(4, -1)


def t_matrix(t) -> np.ndarray:
    """Lower-triangular T from 16 reals: 4 diagonal, then 6 (re, im) pairs."""
    t = np.asarray(t, dtype=float)
    if t.shape != (16,):
        raise InvalidParameterError("expected 16 parameters")
    T = np.diag(t[:4]).astype(complex)
    T[_TRIL] = t[4::2] + 1j * t[5::2]
    return T


def t_params(T) -> np.ndarray:
    low = T[_TRIL]
    out = np.empty(16)
    out[:4] = np.real(np.diag(T))
    out[4::2] = low.real
    out[5::2] = low.imag
    return out


def rho_from_choleski(t) -> np.ndarray:
    T = t_matrix(t)
    G = T.conj().T @ T
    tr = np.real(np.trace(G))
    if tr <= 0:
        raise UnphysicalStateError("all-zero Cholesky parameters give no state")
    rho = G / tr
    return 0.5 * (rho + rho.conj().T)


def choleski_from_rho(rho, mix: float = 1e-6) -> np.ndarray:
    """Parameters of a lower-triangular T with ``T^dag T`` proportional to rho.

    A small admixture of the identity keeps the factorization defined for
    rank-deficient input.
    """
    rho = (1 - mix) * np.asarray(rho, dtype=complex) + mix * np.eye(4) / 4
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ rho @ J)
    T = (J @ L @ J).conj().T
    return t_params(T)


def _probs_and_grad(t, kets):
    T = t_matrix(t)
    tv = kets @ T.T  # row j holds T psi_j
    a = np.sum(np.abs(tv) ** 2, axis=1)
    b = float(np.sum(np.abs(T) ** 2))
    q = a / b
    return T, tv, a, b, q


def likelihood(t, c: CountRecord, ps: ProjectorSet | None = None) -> float:
    ps = ps or standard_projector_set()
    q = np.maximum(ps.probabilities(rho_from_choleski(t)), PROB_FLOOR)
    big = c.norm
    return float(np.sum((big * q - c.counts) ** 2 / (2 * big * q)))


def likelihood_and_grad(t, c: CountRecord, ps: ProjectorSet) -> tuple[float, np.ndarray]:
    T, tv, a, b, q = _probs_and_grad(t, ps.kets)
    big = c.norm
    n = c.counts
    floored = q < PROB_FLOOR
    qf = np.where(floored, PROB_FLOOR, q)
    val = float(np.sum((big * qf - n) ** 2 / (2 * big * qf)))
    dq = np.where(floored, 0.0, big / 2 - n**2 / (2 * big * qf**2))
    # Wirtinger derivative dq_j/dconj(T) = (T psi psi^dag b - a T) / b^2
    G = (np.einsum("j,ja,jb->ab", dq, tv, ps.kets.conj()) * b - np.sum(dq * a) * T) / b**2
    G = 2 * G  # gradient w.r.t. (Re T, Im T)
    grad = np.empty(16)
    grad[:4] = np.real(np.diag(G))
    low = G[_TRIL]
    grad[4::2] = low.real
    grad[5::2] = low.imag
    return val, grad


def linear_inversion(c: CountRecord, ps: ProjectorSet | None = None) -> np.ndarray:
    """Unconstrained least-squares state, projected to the nearest physical one."""
    ps = ps or standard_projector_set()
    freqs = c.counts / c.norm
    A = np.einsum("ja,jb->jab", ps.kets.conj(), ps.kets).reshape(len(freqs), 16)
    vec, *_ = np.linalg.lstsq(A, freqs.astype(complex), rcond=None)
    rho = vec.reshape(4, 4)
    rho = 0.5 * (rho + rho.conj().T)
    return project_to_state(rho)


def project_to_state(mat) -> np.ndarray:
    """Closest density matrix in Frobenius norm (eigenvalue simplex projection)."""
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1
    k = np.nonzero(u - css / np.arange(1, u.size + 1) > 0)[0][-1]
    w = np.clip(w - css[k] / (k + 1), 0.0, None)
    return (v * w) @ v.conj().T


@dataclass
class FitDiagnostics:
    likelihood: float
    iterations: int
    restarts: int
    converged: bool
    starts_tried: int
    all_values: list = field(default_factory=list)


def mle_fit(
    c: CountRecord,
    ps: ProjectorSet | None = None,
    init=None,
    n_starts: int = 2,
    rng: np.random.Generator | None = None,
    gtol: float = 1e-10,
) -> tuple[np.ndarray, FitDiagnostics]:
    """Minimize the count likelihood over the 16 Cholesky parameters.

    The first start is the linear-inversion estimate (or ``init``); the rest
    are random. Returns the best state and diagnostics.
    """
    ps = ps or standard_projector_set()
    rng = rng if rng is not None else np.random.default_rng(0)
    scale = math.sqrt(c.norm)
    # parameters are rescaled so the objective is O(1)-conditioned
    starts = [np.asarray(init, dtype=float) if init is not None else choleski_from_rho(linear_inversion(c, ps), mix=1e-3)]
    for _ in range(n_starts - 1):
        starts.append(rng.normal(size=16))

    def fun(t):
        v, g = likelihood_and_grad(t, c, ps)
        return v / scale, g / scale

    best = None
    iters = 0
    values = []
    for x0 in starts:
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": 5000, "gtol": gtol, "ftol": 1e-15})
        iters += int(res.nit)
        val = float(res.fun * scale)
        values.append(val)
        if np.isfinite(val) and (best is None or val < best[0]):
            best = (val, res)
    if best is None:
        raise ConvergenceError("all MLE starts failed", {"values": values})
    val, res = best
    rho = rho_from_choleski(res.x)
    check_density_matrix(rho)
    diag = FitDiagnostics(
        likelihood=val,
        iterations=iters,
        restarts=len(starts) - 1,
        converged=bool(res.success),
        starts_tried=len(starts),
        all_values=values,
    )
    return rho, diag


# -- files: counts CSV "label,count" and a JSON fit report --


def save_counts(c: CountRecord, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "count"])
        for lab, n in zip(c.labels, c.counts):
            w.writerow([lab, repr(float(n))])


def load_counts(path) -> CountRecord:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["label", "count"]:
        raise InvalidParameterError(f"unexpected header {rows[0]}")
    body = rows[1:]
    if len(body) != 16:
        raise InvalidParameterError(f"expected 16 rows, got {len(body)}")
    return CountRecord([float(r[1]) for r in body], tuple(r[0] for r in body))


def fit_report(rho, diag: FitDiagnostics, ps: ProjectorSet, seed=None) -> dict:
    return {
        "rho": {"re": np.real(rho).tolist(), "im": np.imag(rho).tolist()},
        "likelihood": diag.likelihood,
        "iterations": diag.iterations,
        "restarts": diag.restarts,
        "converged": diag.converged,
        "projector_set": ps.name,
        "projector_labels": list(ps.labels),
        "seed": seed,
    }


def save_fit_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2))
