"""Monte Carlo replicas and their statistics.

Every replica draws from its own generator, spawned from a master seed, so
ensembles are reproducible and independent of execution order. Aggregation
always folds replicas in index order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cv_core, dv_core, homodyne, mle
from .errors import FitError, InvalidParameterError

PERCENTILES = (2.5, 16.0, 84.0, 97.5)
MAX_DV_FAILURE_RATE = 0.01


def child_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class ReplicaEnsemble:
    target_id: str
    replicas: list
    seed: int
    kind: str  # "cv" or "dv"
    failures: list = field(default_factory=list)  # (replica index, message)
    derived: dict = field(default_factory=dict)  # quantity name -> array over replicas

    @property
    def n_mc(self) -> int:
        return len(self.replicas)


@dataclass(frozen=True)
class BalloonSpec:
    target: cv_core.StsParams
    f_threshold: float
    energy_window: tuple[float, float] | None = None

    def __post_init__(self):
        if not (0 < self.f_threshold < 1):
            raise InvalidParameterError("fidelity threshold must lie in (0, 1)")
        if self.energy_window is not None and not self.energy_window[1] > 0:
            raise InvalidParameterError("energy half-width must be positive")


@dataclass(frozen=True)
class LatticeSpec:
    s_min: float = 0.2
    s_max: float = 1.2
    n_s: int = 300
    mu_min: float = 0.2
    mu_max: float = 1.0
    n_mu: int = 300


@dataclass
class BalloonMap:
    s: np.ndarray
    mu: np.ndarray
    fidelity: np.ndarray
    in_balloon: np.ndarray
    in_stripe: np.ndarray
    nonclassical: np.ndarray

    @property
    def classical_fraction(self) -> float:
        """Share of in-balloon lattice points with a classical analogue."""
        n = int(self.in_balloon.sum())
        return float((~self.nonclassical & self.in_balloon).sum() / n) if n else float("nan")

    @property
    def classical_fraction_stripe(self) -> float:
        sel = self.in_balloon & self.in_stripe
        n = int(sel.sum())
        return float((~self.nonclassical & sel).sum() / n) if n else float("nan")


@dataclass
class QuantityStats:
    mean: float
    std: float
    percentiles: dict
    degenerate: bool


@dataclass
class EnsembleStats:
    n_mc: int
    quantities: dict  # name -> QuantityStats
    fractions: dict  # classification name -> {label: fraction}


@dataclass
class HistogramResult:
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    alpha: float
    beta: float
    support: tuple[float, float]
    mode: float
    fit_ok: bool


# -- replica generation --


def _cv_one(args):
    target, m, rng, schedule = args
    ds = homodyne.simulate_homodyne(target, m, rng, schedule)
    rec = homodyne.reconstruct_cm(ds)
    cm = cv_core.CovarianceMatrix2(rec.cm.vxx, rec.cm.vpp)
    params = cv_core.params_from_cm(cm)
    return params, {
        "vxx": rec.cm.vxx,
        "vpp": rec.cm.vpp,
        "vxp": rec.cm.vxp,
        "n_tot": rec.n_tot.value,
        "n_tot_sigma": rec.n_tot.sigma,
        "vxx_sigma": rec.cm_sigma[0],
        "vpp_sigma": rec.cm_sigma[1],
        "sts_compatible": rec.sts_compatible,
    }


class _SafeCall:
    """Picklable wrapper that turns per-job failures into messages."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, job):
        try:
            return self.fn(job), None
        except (ValueError, RuntimeError) as exc:
            return None, f"{type(exc).__name__}: {exc}"


def _run(fn, jobs, workers):
    call = _SafeCall(fn)
    if workers <= 1:
        return [call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, jobs))


def cv_replicas(
    target: cv_core.StsParams,
    m: int,
    n_mc: int,
    seed: int,
    schedule: str = "ramp",
    target_id: str = "sts",
    workers: int = 1,
) -> ReplicaEnsemble:
    """Re-simulate the homodyne experiment ``n_mc`` times and reconstruct each run."""
    if n_mc < 1 or m < 2:
        raise InvalidParameterError("need n_mc >= 1 and m >= 2")
    jobs = [(target, m, rng, schedule) for rng in child_rngs(seed, n_mc)]
    results = _run(_cv_one, jobs, workers)
    replicas, records, failures = [], [], []
    for i, (res, err) in enumerate(results):
        if err is not None:
            failures.append((i, err))
            continue
        replicas.append(res[0])
        records.append(res[1])
    if not replicas:
        raise FitError(f"all {n_mc} CV replicas failed: {failures[0][1]}")
    derived = {k: np.array([r[k] for r in records]) for k in records[0]}
    derived["s"] = np.array([p.s for p in replicas])
    derived["mu"] = np.array([p.mu for p in replicas])
    derived["model_n_tot"] = np.array([p.energy.n_tot for p in replicas])
    return ReplicaEnsemble(target_id, replicas, seed, "cv", failures, derived)


def resample_counts(base: mle.CountRecord, rng: np.random.Generator, noise_scale: float = 1.0):
    """One normal redraw of all counts with std ``noise_scale * sqrt(n_j)``, clipped at zero."""
    noisy = rng.normal(base.counts, noise_scale * np.sqrt(base.counts))
    return mle.CountRecord(np.clip(noisy, 0.0, None), base.labels)


def _dv_one(args):
    base, ps, rng, noise_scale = args
    rho, _ = mle.mle_fit(resample_counts(base, rng, noise_scale), ps, n_starts=1)
    return rho


def dv_replicas(
    base_counts: mle.CountRecord,
    n_mc: int,
    seed: int,
    noise_scale: float = 1.0,
    ps: mle.ProjectorSet | None = None,
    target_id: str = "werner",
    workers: int = 1,
) -> ReplicaEnsemble:
    """Redraw the 16 counts ``n_mc`` times and refit each redraw by maximum likelihood."""
    if n_mc < 1:
        raise InvalidParameterError("n_mc must be >= 1")
    ps = ps or mle.standard_projector_set()
    jobs = [(base_counts, ps, rng, noise_scale) for rng in child_rngs(seed, n_mc)]
    results = _run(_dv_one, jobs, workers)
    replicas, failures = [], []
    for i, (rho, err) in enumerate(results):
        if err is not None:
            failures.append((i, err))
        else:
            replicas.append(rho)
    if len(failures) > MAX_DV_FAILURE_RATE * n_mc:
        raise FitError(f"{len(failures)} of {n_mc} MLE fits failed; first: {failures[0][1]}")
    return ReplicaEnsemble(target_id, replicas, seed, "dv", failures)


# -- DV derived quantities --


def dv_quantities(e: ReplicaEnsemble, target=None) -> dict:
    """Per-replica e_m, discord, closest-Werner p and fidelity.

    Target-independent quantities are cached on the ensemble; the fidelity
    to ``target`` is recomputed whenever a target is given.
    """
    if e.kind != "dv":
        raise InvalidParameterError("DV ensemble required")
    if not {"e_m", "discord", "werner_p", "werner_fidelity"} <= e.derived.keys():
        em, disc, wp, wf = [], [], [], []
        for rho in e.replicas:
            em.append(dv_core.min_ppt_eigenvalue(rho))
            disc.append(dv_core.discord_numeric(rho).value)
            p, f = dv_core.closest_werner(rho)
            wp.append(p)
            wf.append(f)
        e.derived.update(
            e_m=np.array(em), discord=np.array(disc), werner_p=np.array(wp), werner_fidelity=np.array(wf)
        )
    if target is not None:
        e.derived["fidelity_to_target"] = np.array([dv_core.uhlmann_fidelity(r, target) for r in e.replicas])
    return e.derived


def werner_projection_ensemble(e: ReplicaEnsemble, target=None) -> ReplicaEnsemble:
    """Replace every replica by its closest Werner state."""
    q = dv_quantities(e, target)
    ps = q["werner_p"]
    replicas = [dv_core.werner(float(np.clip(p, dv_core.P_MIN, 1.0))) for p in ps]
    derived = {
        "werner_p": ps.copy(),
        "e_m": np.array([dv_core.min_ppt_eigenvalue(r) for r in replicas]),
        "discord": np.array([werner_discord(p) for p in ps]),
        "werner_fidelity": np.ones(len(replicas)),
    }
    if target is not None:
        derived["fidelity_to_target"] = np.array([dv_core.uhlmann_fidelity(r, target) for r in replicas])
    return ReplicaEnsemble(e.target_id + ":werner", replicas, e.seed, "dv", list(e.failures), derived)


def werner_discord(p: float) -> float:
    """Closed form on [0, 1]; the numeric route below zero."""
    if p >= 0:
        return dv_core.discord_analytic_werner(min(p, 1.0))
    return dv_core.discord_numeric(dv_core.werner(max(p, dv_core.P_MIN))).value


# -- statistics --


def summarize(values) -> QuantityStats:
    v = np.asarray(values, dtype=float)
    degenerate = v.size < 2
    std = 0.0 if degenerate else float(np.std(v, ddof=1))
    pct = {p: float(np.percentile(v, p)) for p in PERCENTILES}
    return QuantityStats(float(np.mean(v)), std, pct, degenerate)


def _fractions(flags, labels):
    flags = np.asarray(flags, dtype=bool)
    yes = float(flags.mean())
    return {labels[0]: yes, labels[1]: 1.0 - yes}


def classify_ensemble(e: ReplicaEnsemble, target=None) -> EnsembleStats:
    if e.n_mc == 0:
        raise InvalidParameterError("empty ensemble")
    if e.kind == "cv":
        names = ("s", "mu", "vxx", "vpp", "n_tot")
        quantities = {k: summarize(e.derived[k]) for k in names}
        nonclassical = [cv_core.is_nonclassical(p) for p in e.replicas]
        fractions = {"nonclassicality": _fractions(nonclassical, ("nonclassical", "classical"))}
    else:
        q = dv_quantities(e, target)
        names = ["e_m", "discord", "werner_p", "werner_fidelity"]
        if "fidelity_to_target" in q:
            names.append("fidelity_to_target")
        quantities = {k: summarize(q[k]) for k in names}
        fractions = {"entanglement": _fractions(q["e_m"] < 0, ("entangled", "separable"))}
    return EnsembleStats(e.n_mc, quantities, fractions)


def mean_state(e: ReplicaEnsemble) -> np.ndarray:
    return np.mean(np.stack(e.replicas), axis=0)


def bootstrap_exceedance(a, b, n_boot: int = 2000, seed: int = 0) -> float:
    """Fraction of paired bootstrap resamples in which mean(a) > mean(b)."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diff.size, size=(n_boot, diff.size))
    return float(np.mean(diff[idx].mean(axis=1) > 0))


# -- balloons --


def lattice(grid: LatticeSpec):
    if grid.n_s < 1 or grid.n_mu < 1:
        raise InvalidParameterError("empty lattice")
    if grid.s_min <= 0 or grid.mu_min <= 0 or grid.mu_max > 1:
        raise InvalidParameterError("lattice must stay inside s > 0, 0 < mu <= 1")
    s = np.linspace(grid.s_min, grid.s_max, grid.n_s)
    mu = np.linspace(grid.mu_min, grid.mu_max, grid.n_mu)
    return np.meshgrid(s, mu, indexing="ij")


def gaussian_fidelity_grid(target: cv_core.StsParams, s, mu):
    """Vectorized single-mode Gaussian fidelity between diagonal CMs and ``target``."""
    tx, tp = target.s / target.mu, 1 / (target.mu * target.s)
    vx, vp = s / mu, 1 / (mu * s)
    big = 0.25 * (vx + tx) * (vp + tp)
    small = 0.25 * np.clip(vx * vp - 1, 0, None) * max(tx * tp - 1, 0.0)
    return np.minimum(1 / (np.sqrt(big + small) - np.sqrt(small)), 1.0)


def fidelity_balloon(spec: BalloonSpec, grid: LatticeSpec | None = None) -> BalloonMap:
    s, mu = lattice(grid or LatticeSpec())
    fid = gaussian_fidelity_grid(spec.target, s, mu)
    in_balloon = fid > spec.f_threshold
    nth = 0.5 * (1 / mu - 1)
    ns = np.sinh(0.5 * np.log(s)) ** 2
    energy = nth + ns + 2 * nth * ns
    if spec.energy_window is None:
        in_stripe = np.ones_like(in_balloon)
    else:
        n_exp, dn = spec.energy_window
        in_stripe = np.abs(energy - n_exp) < dn
    nonclassical = (s < mu) | (s > 1 / mu)
    return BalloonMap(s.ravel(), mu.ravel(), fid.ravel(), in_balloon.ravel(), in_stripe.ravel(), nonclassical.ravel())


# -- fidelity histogram with a moment-matched beta law --


def beta_moments(values, support=None):
    """Method-of-moments beta fit on values rescaled to ``support`` (default: observed range)."""
    v = np.asarray(values, dtype=float)
    lo, hi = support if support is not None else (float(v.min()), float(v.max()))
    if not hi > lo:
        return float("nan"), float("nan"), (lo, hi), False
    u = (v - lo) / (hi - lo)
    m = float(u.mean())
    var = float(u.var(ddof=1)) if u.size > 1 else 0.0
    if var <= 0 or not (0 < m < 1) or var >= m * (1 - m):
        return float("nan"), float("nan"), (lo, hi), False
    common = m * (1 - m) / var - 1
    return m * common, (1 - m) * common, (lo, hi), True


def fidelity_histogram(e: ReplicaEnsemble, target, bins: int = 30, fidelities=None) -> HistogramResult:
    if bins < 5:
        raise InvalidParameterError("use at least 5 bins")
    if fidelities is None:
        fidelities = np.array([dv_core.uhlmann_fidelity(r, target) for r in e.replicas])
    return histogram_with_beta(fidelities, bins)


def histogram_with_beta(values, bins: int = 30) -> HistogramResult:
    values = np.asarray(values, dtype=float)
    a, b, (lo, hi), ok = beta_moments(values)
    if hi > lo:
        counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    else:
        counts, edges = np.histogram(values, bins=bins)
    if ok and a > 1 and b > 1:
        mode = lo + (hi - lo) * (a - 1) / (a + b - 2)
    else:
        mode = float(edges[np.argmax(counts)] + 0.5 * (edges[1] - edges[0]))
    return HistogramResult(counts, edges, float(values.mean()), a, b, (lo, hi), float(mode), ok)


# -- output files --


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_ensemble_csv(e: ReplicaEnsemble, path, header_comment: str | None = None) -> None:
    cols = sorted(e.derived)
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["replica_id", *cols])
        for i in range(e.n_mc):
            w.writerow([i, *(_fmt(e.derived[c][i]) for c in cols)])


def stats_to_dict(st: EnsembleStats) -> dict:
    return {
        "n_mc": st.n_mc,
        "quantities": {
            k: {"mean": q.mean, "std": q.std, "degenerate": q.degenerate,
                "percentiles": {str(p): v for p, v in q.percentiles.items()}}
            for k, q in st.quantities.items()
        },
        "fractions": st.fractions,
    }  # fmt: skip


def write_balloon_csv(b: BalloonMap, path, header_comment: str | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["s", "mu", "fidelity", "in_balloon", "in_stripe", "nonclassical"])
        for row in zip(b.s, b.mu, b.fidelity, b.in_balloon, b.in_stripe, b.nonclassical):
            w.writerow([_fmt(x) for x in row])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, float) and math.isnan(o):
        return None
    raise TypeError(f"not JSON serializable: {type(o)}")
