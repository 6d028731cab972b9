"""Two-qubit states: Bell and Werner construction, fidelity, PPT test, discord.

Matrices are 4x4 complex arrays in the ``{HH, HV, VH, VV}`` product basis,
with the first qubit (A) as the most significant index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import ConvergenceError, InvalidParameterError, UnphysicalStateError
from .linalg import uhlmann_fidelity_matrix, von_neumann_entropy

DM_TOL = 1e-10
P_MIN = -1.0 / 3.0

_S2 = 1 / math.sqrt(2)
BELL_VECTORS = {
    "phi+": np.array([_S2, 0, 0, _S2], dtype=complex),
    "phi-": np.array([_S2, 0, 0, -_S2], dtype=complex),
    "psi+": np.array([0, _S2, _S2, 0], dtype=complex),
    "psi-": np.array([0, _S2, -_S2, 0], dtype=complex),
}


def check_density_matrix(rho, tol: float = DM_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0]
    if rho.shape != (n, n):
        raise UnphysicalStateError(f"density matrix must be square, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise UnphysicalStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise UnphysicalStateError(f"trace is {np.trace(rho).real:.12g}, not 1")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -tol:
        raise UnphysicalStateError(f"negative eigenvalue {w.min():.3e}")
    return rho


def bell_state(which: str) -> np.ndarray:
    key = which.lower().replace("Φ", "phi").replace("Ψ", "psi").replace("φ", "phi").replace("ψ", "psi")
    if key not in BELL_VECTORS:
        raise InvalidParameterError(f"unknown Bell state {which!r}")
    v = BELL_VECTORS[key]
    return np.outer(v, v.conj())


def _check_p(p: float) -> None:
    if not (P_MIN - 1e-12 <= p <= 1 + 1e-12):
        raise InvalidParameterError(f"Werner parameter must lie in [-1/3, 1], got {p}")


def werner(p: float) -> np.ndarray:
    _check_p(p)
    return p * bell_state("psi-") + (1 - p) / 4 * np.eye(4, dtype=complex)


def mixing_weights(p: float) -> tuple[float, float, float]:
    """Weights ``(f1, f2, lam)`` reproducing the Werner state from two mixable sources.

    ``lam = (1+3p) / (2(1+p))`` is the Psi- share of the Psi blend; it lies in
    [0, 1] exactly on the Werner range p in [-1/3, 1].
    """
    if not (-1 < p <= 1):
        raise InvalidParameterError(f"mixing construction needs p in (-1, 1], got {p}")
    return (1 + p) / 2, (1 - p) / 2, (1 + 3 * p) / (2 * (1 + p))


def werner_from_mixing(p: float) -> np.ndarray:
    """Werner state as ``f1 [lam Psi- + (1-lam) Psi+] + f2 (Phi+ + Phi-)/2``."""
    f1, f2, lam = mixing_weights(p)
    rho_lam = lam * bell_state("psi-") + (1 - lam) * bell_state("psi+")
    rho_mix = 0.5 * (bell_state("phi+") + bell_state("phi-"))
    return f1 * rho_lam + f2 * rho_mix


def uhlmann_fidelity(r1, r2) -> float:
    return uhlmann_fidelity_matrix(check_density_matrix(r1), check_density_matrix(r2))


def partial_trace(rho, keep: str = "A") -> np.ndarray:
    r = np.asarray(rho).reshape(2, 2, 2, 2)
    if keep.upper() == "A":
        return np.einsum("ajbj->ab", r)
    if keep.upper() == "B":
        return np.einsum("jajb->ab", r)
    raise InvalidParameterError("keep must be 'A' or 'B'")


def partial_transpose(rho, side: str = "B") -> np.ndarray:
    r = np.asarray(rho).reshape(2, 2, 2, 2)
    if side.upper() == "B":
        return r.transpose(0, 3, 2, 1).reshape(4, 4)
    if side.upper() == "A":
        return r.transpose(2, 1, 0, 3).reshape(4, 4)
    raise InvalidParameterError("side must be 'A' or 'B'")


def swap_qubits(rho) -> np.ndarray:
    return np.asarray(rho).reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)


def entropy(rho) -> float:
    return von_neumann_entropy(np.asarray(rho))


def min_ppt_eigenvalue(rho) -> float:
    """Smallest eigenvalue of the partial transpose over the second qubit.

    Negative exactly when the two-qubit state is entangled.
    """
    pt = partial_transpose(rho, "B")
    return float(np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))[0])


def _xlog2x(x: float) -> float:
    return 0.0 if x <= 0 else x * math.log2(x)


def discord_analytic_werner(p: float) -> float:
    if not (0 <= p <= 1):
        raise InvalidParameterError(f"closed-form Werner discord needs p in [0, 1], got {p}")
    # (1+3p)/4 log2(1+3p) + (1-p)/4 log2(1-p) - (1+p)/2 log2(1+p)
    return _xlog2x(1 + 3 * p) / 4 + _xlog2x(1 - p) / 4 - _xlog2x(1 + p) / 2


@dataclass(frozen=True)
class DiscordResult:
    value: float
    optimal_angles: tuple[float, float]
    mutual_info: float
    classical_corr: float
    conditional_entropy: float
    measured: str = "A"


def _bloch_vectors(theta, phi):
    """Unit kets |n> and |-n> for Bloch angles; arrays of shape (..., 2)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2) * np.exp(1j * phi)
    plus = np.stack([c + 0j, s], axis=-1)
    minus = np.stack([-np.conj(s), c + 0j], axis=-1)
    return plus, minus


def _binary_entropy_2x2(blocks):
    """Entropy (bits) of unnormalized 2x2 PSD blocks after normalization, plus their weights."""
    tr = np.real(blocks[..., 0, 0] + blocks[..., 1, 1])
    det = np.real(blocks[..., 0, 0] * blocks[..., 1, 1] - blocks[..., 0, 1] * blocks[..., 1, 0])
    safe_tr = np.where(tr > 1e-300, tr, 1.0)
    disc = np.sqrt(np.clip(0.25 - det / safe_tr**2, 0.0, None))
    out = np.zeros_like(tr)
    for lam in (0.5 + disc, 0.5 - disc):
        term = np.where(lam > 1e-300, -lam * np.log2(np.where(lam > 1e-300, lam, 1.0)), 0.0)
        out = out + term
    return np.where(tr > 1e-300, out, 0.0), tr


def conditional_entropy(rho, theta, phi):
    """Average entropy of qubit B after a projective measurement on A along (theta, phi).

    Vectorized over the angle arrays.
    """
    r = np.asarray(rho).reshape(2, 2, 2, 2)
    total = 0.0
    for ket in _bloch_vectors(theta, phi):
        # unnormalized conditional state <n|_A rho |n>_A
        blk = np.einsum("...a,abcd,...c->...bd", ket.conj(), r, ket)
        h, w = _binary_entropy_2x2(blk)
        total = total + w * h
    return total


def discord_numeric(
    rho,
    measured: str = "A",
    grid=(32, 64),
    xatol: float = 1e-8,
) -> DiscordResult:
    """Discord with a projective measurement on one qubit.

    The conditional entropy is minimized over Bloch angles: coarse grid
    first, then a Nelder-Mead polish from the best few cells.
    """
    rho = check_density_matrix(rho, tol=1e-8)
    if measured.upper() == "B":
        rho = swap_qubits(rho)
    elif measured.upper() != "A":
        raise InvalidParameterError("measured must be 'A' or 'B'")
    s_ab = entropy(rho)
    s_a = entropy(partial_trace(rho, "A"))
    s_b = entropy(partial_trace(rho, "B"))
    mutual = s_a + s_b - s_ab

    n_t, n_p = grid
    thetas = (np.arange(n_t) + 0.5) * np.pi / n_t
    phis = np.arange(n_p) * 2 * np.pi / n_p
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    landscape = conditional_entropy(rho, tt, pp)
    order = np.argsort(landscape, axis=None)[:3]

    def objective(v):
        return float(conditional_entropy(rho, v[0], v[1]))

    best_val = float(landscape.flat[order[0]])
    best_x = (float(tt.flat[order[0]]), float(pp.flat[order[0]]))
    # the z axis is a coordinate singularity the grid never hits
    for x0 in [best_x, (0.0, 0.0)] + [(float(tt.flat[i]), float(pp.flat[i])) for i in order[1:]]:
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": xatol, "fatol": 1e-13, "maxiter": 4000},
        )
        if not np.isfinite(res.fun):
            continue
        if res.fun < best_val:
            best_val, best_x = float(res.fun), (float(res.x[0]), float(res.x[1]))
    if not np.isfinite(best_val):
        raise ConvergenceError("conditional entropy minimization failed", {"landscape_min": landscape.min()})

    classical = s_b - best_val
    value = mutual - classical
    if value < 0:
        if value < -1e-6:
            raise ConvergenceError(
                f"negative discord {value:.3e}", {"mutual": mutual, "classical": classical}
            )
        value = 0.0
    theta, phi = best_x
    theta = float(np.mod(theta, 2 * np.pi))
    if theta > np.pi:
        theta, phi = 2 * np.pi - theta, phi + np.pi
    return DiscordResult(
        value=float(value),
        optimal_angles=(theta, float(np.mod(phi, 2 * np.pi))),
        mutual_info=float(mutual),
        classical_corr=float(classical),
        conditional_entropy=best_val,
        measured=measured.upper(),
    )


def closest_werner(rho, coarse_step: float = 1e-2, xatol: float = 1e-7) -> tuple[float, float]:
    """Werner parameter maximizing the fidelity to ``rho``, with the fidelity reached.

    A coarse scan over [-1/3, 1] locates the peak; a bounded Brent search
    refines it inside the neighbouring cells.
    """
    rho = check_density_matrix(rho, tol=1e-8)
    grid = np.linspace(P_MIN, 1.0, int(round((1 - P_MIN) / coarse_step)) + 1)
    vals = np.array([uhlmann_fidelity_matrix(rho, werner(p)) for p in grid])
    k = int(np.argmax(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda p: -uhlmann_fidelity_matrix(rho, werner(p)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": xatol},
    )
    p_best, f_best = float(res.x), float(-res.fun)
    if vals[k] > f_best:
        p_best, f_best = float(grid[k]), float(vals[k])
    return p_best, f_best


# -- JSON serialization: {"re": 4x4, "im": 4x4} row-major --


def density_to_json(rho) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"re": rho.real.tolist(), "im": rho.imag.tolist()}


def density_from_json(obj) -> np.ndarray:
    rho = np.array(obj["re"], dtype=float) + 1j * np.array(obj["im"], dtype=float)
    if rho.shape != (4, 4):
        raise UnphysicalStateError(f"expected a 4x4 matrix, got {rho.shape}")
    return check_density_matrix(rho)


def save_density(rho, path) -> None:
    Path(path).write_text(json.dumps(density_to_json(rho), indent=2))


def load_density(path) -> np.ndarray:
    return density_from_json(json.loads(Path(path).read_text()))
