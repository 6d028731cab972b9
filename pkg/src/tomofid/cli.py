"""Command-line runner: one experiment per published table or figure.

Every run is a pure function of its resolved configuration. Output files
carry the configuration hash and seed, in a leading ``#`` line for CSV and
as top-level keys for JSON.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cv_core, dv_core, homodyne, measured, mle, resample
from .errors import ConvergenceError, FitError, InvalidParameterError, UnphysicalStateError

log = logging.getLogger("tomofid")

EXPERIMENTS = ("table1", "fig2", "fig3", "fig5", "table2", "fig4", "fig6", "fig7")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "n_mc": 1000,
    "m_samples": measured.M_SAMPLES,
    "n_scale": 1000.0,
    "repetitions": 30,
    "threshold": None,
    "states": None,
    "n_s": None,
    "noiseless": False,
    "source": "simulate",
    "grid": asdict(resample.LatticeSpec()),
    "bins": 30,
    "workers": 1,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int
    experiment: str
    out_dir: Path
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit non-negative integer")
        unknown = set(self.overrides) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown override keys {sorted(unknown)}")
        self.out_dir = Path(self.out_dir)

    def get(self, key):
        val = self.overrides.get(key)
        return DEFAULTS[key] if val is None else val

    def resolved(self) -> dict:
        return {
            "seed": self.seed,
            "experiment": self.experiment,
            "params": {k: self.get(k) for k in sorted(DEFAULTS)},
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def header(self) -> str:
        return f"config_hash={self.config_hash} seed={self.seed} experiment={self.experiment}"


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 63-bit child seed for a (seed, keys) path, independent of sibling selection."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- writers --


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.10g}"


def write_csv(cfg: RunConfig, name: str, columns, rows) -> Path:
    path = cfg.out_dir / name
    with path.open("w", newline="") as fh:
        fh.write(f"# {cfg.header}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(cfg: RunConfig, name: str, payload: dict) -> Path:
    body = {"config_hash": cfg.config_hash, "seed": cfg.seed, "experiment": cfg.experiment, **payload}
    path = cfg.out_dir / name
    resample.write_json(body, path)
    return path


def _selected(cfg: RunConfig, available):
    states = cfg.get("states")
    if states is None:
        return list(available)
    bad = [s for s in states if s not in available]
    if bad:
        raise ConfigError(f"unknown states {bad}; available {list(available)}")
    return list(states)


def _thresholds(cfg: RunConfig, default):
    th = cfg.get("threshold")
    if th is None:
        return list(default)
    th = th if isinstance(th, (list, tuple)) else [th]
    for t in th:
        if not 0 < t < 1:
            raise ConfigError(f"threshold {t} outside (0, 1)")
    return [float(t) for t in th]


# -- CV experiments --


def _propagate_params(vxx, sx, vpp, sp):
    rel = 0.5 * math.hypot(sx / vxx, sp / vpp)
    s = math.sqrt(vxx / vpp)
    mu = 1 / math.sqrt(vxx * vpp)
    return s, s * rel, mu, mu * rel


def characterize_state(row: measured.StsRow, m: int, seed: int, schedule: str = "ramp") -> dict:
    target = cv_core.StsParams(row.s, row.mu)
    ds = homodyne.simulate_homodyne(target, m, np.random.default_rng(seed), schedule)
    rec = homodyne.reconstruct_cm(ds)
    vx, vp = rec.cm.vxx, rec.cm.vpp
    sx, sp = rec.cm_sigma[0], rec.cm_sigma[1]
    s, s_err, mu, mu_err = _propagate_params(vx, sx, vp, sp)
    return {
        "state": row.index,
        "vxx": vx,
        "vxx_err": sx,
        "vpp": vp,
        "vpp_err": sp,
        "n_tot": rec.n_tot.value,
        "n_tot_err": rec.n_tot.sigma,
        "s": s,
        "s_err": s_err,
        "mu": mu,
        "mu_err": mu_err,
        "nonclassical": s < mu or s > 1 / mu,
        "sts_compatible": rec.sts_compatible,
    }


TABLE1_COLUMNS = (
    "state", "vxx", "vxx_err", "vpp", "vpp_err", "n_tot", "n_tot_err",
    "s", "s_err", "mu", "mu_err", "nonclassical", "sts_compatible",
)  # fmt: skip


def cmd_cv_characterize(cfg: RunConfig) -> dict:
    idx = _selected(cfg, [r.index for r in measured.STS_ROWS])
    m = int(cfg.get("m_samples"))
    rows = [characterize_state(measured.sts_row(k), m, derive_seed(cfg.seed, 1, k)) for k in idx]
    write_csv(cfg, "table1.csv", TABLE1_COLUMNS, ([r[c] for c in TABLE1_COLUMNS] for r in rows))
    return {"rows": rows}


def _fig2_points(cfg: RunConfig):
    idx = _selected(cfg, [r.index for r in measured.STS_ROWS])
    rows = [measured.sts_row(k) for k in idx]
    n_s = cfg.get("n_s")
    if cfg.get("source") == "table":
        return [(r.n_tot, r.n_tot_err, r.vxx, r.vxx_err, r.vpp, r.vpp_err) for r in rows]
    if n_s is None and not cfg.get("noiseless"):
        out = []
        m = int(cfg.get("m_samples"))
        for r in rows:
            c = characterize_state(r, m, derive_seed(cfg.seed, 2, r.index))
            out.append((c["n_tot"], c["n_tot_err"], c["vxx"], c["vxx_err"], c["vpp"], c["vpp_err"]))
        return out
    # fixed squeezing photon number, energies from the table
    n_s = 0.2 if n_s is None else float(n_s)
    out = []
    m = int(cfg.get("m_samples"))
    for r in rows:
        vx, vp = cv_core.variances_from_energy(max(r.n_tot, n_s), n_s)
        if cfg.get("noiseless"):
            out.append((max(r.n_tot, n_s), 0.0, vx, r.vxx_err, vp, r.vpp_err))
            continue
        p = cv_core.params_from_cm(cv_core.CovarianceMatrix2(vx, vp))
        c = characterize_state(
            measured.StsRow(r.index, vx, 0, vp, 0, r.n_tot, 0, p.s, 0, p.mu, 0),
            m,
            derive_seed(cfg.seed, 2, r.index),
        )
        out.append((c["n_tot"], c["n_tot_err"], c["vxx"], c["vxx_err"], c["vpp"], c["vpp_err"]))
    return out


def cmd_variance_fit(cfg: RunConfig) -> dict:
    pts = np.array(_fig2_points(cfg))
    fit = homodyne.fit_squeezed_photons(pts[:, 0], pts[:, 2], pts[:, 4], pts[:, 3], pts[:, 5])
    write_csv(cfg, "fig2_points.csv", ("n_tot", "n_tot_err", "vxx", "vxx_err", "vpp", "vpp_err"), pts.tolist())
    grid = np.linspace(fit.n_s, max(pts[:, 0].max() * 1.1, fit.n_s + 0.1), 101)
    cx, cp = homodyne.fitted_curves(fit.n_s, grid)
    write_csv(cfg, "fig2_curves.csv", ("n_tot", "vxx_fit", "vpp_fit"), zip(grid, cx, cp))
    summary = {"n_s": fit.n_s, "n_s_sigma": fit.n_s_sigma, "db": fit.db, "chi2": fit.chi2, "points": len(pts)}
    write_json(cfg, "fig2_fit.json", summary)
    return summary


def _grid(cfg: RunConfig) -> resample.LatticeSpec:
    g = dict(DEFAULTS["grid"])
    g.update(cfg.get("grid"))
    return resample.LatticeSpec(**g)


def _balloon_rows(b: resample.BalloonMap):
    return zip(b.s, b.mu, b.fidelity, b.in_balloon, b.in_stripe, b.nonclassical)


BALLOON_COLUMNS = ("s", "mu", "fidelity", "in_balloon", "in_stripe", "nonclassical")


def cmd_balloon(cfg: RunConfig) -> dict:
    grid = _grid(cfg)
    summary = {}
    if cfg.experiment == "fig3":
        n_mc = int(cfg.get("n_mc"))
        m = int(cfg.get("m_samples"))
        states = cfg.get("states") or [7, 9, 13]
        available = [r.index for r in measured.STS_ROWS]
        if any(k not in available for k in states):
            raise ConfigError(f"unknown states {states}; available {available}")
        for k in states:
            row = measured.sts_row(k)
            target = cv_core.StsParams(row.s, row.mu)
            ens = resample.cv_replicas(target, m, n_mc, derive_seed(cfg.seed, 3, k), target_id=f"state{k}")
            fid = resample.gaussian_fidelity_grid(target, ens.derived["s"], ens.derived["mu"])
            ens.derived["fidelity_to_target"] = fid
            resample.write_ensemble_csv(ens, cfg.out_dir / f"fig3_replicas_state{k}.csv", cfg.header)
            st = resample.classify_ensemble(ens)
            in_stripe = np.abs(ens.derived["n_tot"] - row.n_tot) < row.n_tot_err
            for th in _thresholds(cfg, [0.995]):
                spec = resample.BalloonSpec(target, th, (row.n_tot, row.n_tot_err))
                b = resample.fidelity_balloon(spec, grid)
                write_csv(cfg, f"fig3_balloon_state{k}_F{th:g}.csv", BALLOON_COLUMNS, _balloon_rows(b))
                summary[f"state{k}_F{th:g}"] = {
                    "target": [row.s, row.mu],
                    "balloon_points": int(b.in_balloon.sum()),
                    "balloon_classical_fraction": b.classical_fraction,
                    "stripe_classical_fraction": b.classical_fraction_stripe,
                    "replicas_in_balloon": float(np.mean(fid > th)),
                    "replicas_in_stripe": float(np.mean(in_stripe)),
                    "replica_fractions": st.fractions,
                    "replica_stats": resample.stats_to_dict(st),
                    "failures": len(ens.failures),
                }
        write_json(cfg, "fig3_summary.json", summary)
        return summary

    s0, mu0 = measured.BALLOON_TARGET
    target = cv_core.StsParams(s0, mu0)
    tcm = cv_core.cm_from_params(target)
    fids = {
        r.index: cv_core.gaussian_fidelity(cv_core.cm_from_params(cv_core.StsParams(r.s, r.mu)), tcm)
        for r in measured.STS_ROWS
    }
    row7 = measured.sts_row(7)
    for th in _thresholds(cfg, [0.90, 0.95]):
        for window, tag in ((None, ""), ((row7.n_tot, row7.n_tot_err), "_energy")):
            b = resample.fidelity_balloon(resample.BalloonSpec(target, th, window), grid)
            write_csv(cfg, f"fig5_balloon_F{th:g}{tag}.csv", BALLOON_COLUMNS, _balloon_rows(b))
            key = f"F{th:g}{tag}"
            summary[key] = {
                "balloon_points": int(b.in_balloon.sum()),
                "classical_fraction": b.classical_fraction,
                "stripe_classical_fraction": b.classical_fraction_stripe,
                "all_states_inside": bool(all(f > th for f in fids.values())),
            }
    summary["state_fidelities"] = {str(k): v for k, v in fids.items()}
    write_json(cfg, "fig5_summary.json", summary)
    return summary


# -- DV experiments --


def dv_state_analysis(p: float, n_scale: float, repetitions: int, n_mc: int, seed: int, workers: int = 1) -> dict:
    """Simulate one polarization experiment and analyse its replica ensemble both ways."""
    rng = np.random.default_rng(derive_seed(seed, 0))
    base = mle.simulate_counts(dv_core.werner(p), n_scale, rng, repetitions=repetitions)
    ens = resample.dv_replicas(base, n_mc, derive_seed(seed, 1), workers=workers, target_id=f"p={p}")
    avg = resample.mean_state(ens)
    p_w, f_avg = dv_core.closest_werner(avg)
    target = dv_core.werner(p_w)
    q = resample.dv_quantities(ens, target)
    proj = resample.werner_projection_ensemble(ens, target)
    return {
        "p_true": p,
        "base": base,
        "ensemble": ens,
        "projected": proj,
        "mean_state": avg,
        "p_w": p_w,
        "f_mean_state": f_avg,
        "direct": resample.classify_ensemble(ens, target),
        "werner": resample.classify_ensemble(proj, target),
        "discord_mean_state": dv_core.discord_numeric(avg).value,
        "em_mean_state": dv_core.min_ppt_eigenvalue(avg),
        "overestimation_confidence": resample.bootstrap_exceedance(
            proj.derived["discord"], q["discord"], seed=derive_seed(seed, 2) % (2**32)
        ),
    }


TABLE2_COLUMNS = (
    "state", "p_true", "p_w", "p_w_err", "F_mean_state", "F_median", "F_p16", "F_p84",
    "em_direct", "em_direct_err", "em_werner", "em_werner_err",
    "D_direct", "D_direct_err", "D_werner", "D_werner_err",
    "D_mean_state", "em_mean_state", "entangled_fraction", "overestimation_confidence",
)  # fmt: skip


def _table2_row(k, res):
    d, w = res["direct"].quantities, res["werner"].quantities
    f = d["fidelity_to_target"]
    return (
        k, res["p_true"], res["p_w"], d["werner_p"].std, res["f_mean_state"],
        float(np.median(res["ensemble"].derived["fidelity_to_target"])), f.percentiles[16.0], f.percentiles[84.0],
        d["e_m"].mean, d["e_m"].std, w["e_m"].mean, w["e_m"].std,
        d["discord"].mean, d["discord"].std, w["discord"].mean, w["discord"].std,
        res["discord_mean_state"], res["em_mean_state"],
        res["direct"].fractions["entanglement"]["entangled"], res["overestimation_confidence"],
    )  # fmt: skip


def cmd_dv_pipeline(cfg: RunConfig) -> dict:
    n_mc = int(cfg.get("n_mc"))
    n_scale = float(cfg.get("n_scale"))
    reps = int(cfg.get("repetitions"))
    workers = int(cfg.get("workers"))
    if n_scale <= 0 or n_mc < 1 or reps < 1:
        raise ConfigError("n_scale, n_mc and repetitions must be positive")
    targets = dict(enumerate((p for p, _ in measured.WERNER_TARGETS), start=1))

    if cfg.experiment == "fig7":
        src = (cfg.get("states") or [3])[0]
        if src not in targets:
            raise ConfigError(f"unknown source state {src}; available {list(targets)}")
        res = dv_state_analysis(targets[src], n_scale, reps, n_mc, derive_seed(cfg.seed, 4, src), workers)
        target = dv_core.werner(targets[4])
        fids = np.array([dv_core.uhlmann_fidelity(r, target) for r in res["ensemble"].replicas])
        hist = resample.histogram_with_beta(fids, int(cfg.get("bins")))
        write_csv(
            cfg, "fig7_histogram.csv", ("bin_lo", "bin_hi", "count"),
            zip(hist.edges[:-1], hist.edges[1:], hist.counts),
        )  # fmt: skip
        summary = {
            "source_state": src,
            "target_p": targets[4],
            "mean_fidelity": hist.mean,
            "alpha": hist.alpha,
            "beta": hist.beta,
            "support": list(hist.support),
            "mode": hist.mode,
            "fit_ok": hist.fit_ok,
        }
        write_json(cfg, "fig7_fit.json", summary)
        return summary

    results = {}
    for k in _selected(cfg, list(targets)):
        log.info("state %d: p=%.2f, %d replicas", k, targets[k], n_mc)
        results[k] = dv_state_analysis(targets[k], n_scale, reps, n_mc, derive_seed(cfg.seed, 4, k), workers)
    write_csv(cfg, "table2.csv", TABLE2_COLUMNS, (_table2_row(k, r) for k, r in results.items()))

    scatter_rows = []
    for k, r in results.items():
        d, pj = r["ensemble"].derived, r["projected"].derived
        for i in range(r["ensemble"].n_mc):
            scatter_rows.append(
                (k, i, d["werner_p"][i], d["e_m"][i], d["discord"][i], d["fidelity_to_target"][i],
                 pj["e_m"][i], pj["discord"][i], pj["fidelity_to_target"][i])
            )  # fmt: skip
    cols = ("state", "replica_id", "werner_p", "e_m", "discord", "fidelity", "werner_e_m", "werner_discord", "werner_fidelity")
    write_csv(cfg, "fig4_fig6_scatter.csv", cols, scatter_rows)
    summary = {
        str(k): {
            "p_w": r["p_w"],
            "direct": resample.stats_to_dict(r["direct"]),
            "werner": resample.stats_to_dict(r["werner"]),
            "discord_mean_state": r["discord_mean_state"],
            "overestimation_confidence": r["overestimation_confidence"],
            "fit_failures": len(r["ensemble"].failures),
            "mean_state": dv_core.density_to_json(r["mean_state"]),
            "counts": dict(zip(r["base"].labels, r["base"].counts.tolist())),
            "projector_set": mle.standard_projector_set().name,
        }
        for k, r in results.items()
    }
    write_json(cfg, f"{cfg.experiment}_summary.json", summary)
    return summary


COMMANDS = {
    "table1": cmd_cv_characterize,
    "fig2": cmd_variance_fit,
    "fig3": cmd_balloon,
    "fig5": cmd_balloon,
    "table2": cmd_dv_pipeline,
    "fig4": cmd_dv_pipeline,
    "fig6": cmd_dv_pipeline,
    "fig7": cmd_dv_pipeline,
}


def run(cfg: RunConfig) -> dict:
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        probe = cfg.out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from exc
    return COMMANDS[cfg.experiment](cfg)


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tomofid", description=__doc__.splitlines()[0])
    ap.add_argument("--experiment", choices=EXPERIMENTS)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="out")
    ap.add_argument("--n-mc", type=int)
    ap.add_argument("--m-samples", type=int)
    ap.add_argument("--n-scale", type=float)
    ap.add_argument("--threshold", type=_csv_list(float))
    ap.add_argument("--states", type=_csv_list(int))
    ap.add_argument("--config", help="JSON file; its keys override the flags")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> RunConfig:
    overrides = {
        "n_mc": args.n_mc,
        "m_samples": args.m_samples,
        "n_scale": args.n_scale,
        "threshold": args.threshold,
        "states": args.states,
    }
    seed, experiment, out = args.seed, args.experiment, args.out
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        seed = file_cfg.pop("seed", seed)
        experiment = file_cfg.pop("experiment", experiment)
        out = file_cfg.pop("out", out)
        overrides.update(file_cfg.pop("overrides", {}))
        overrides.update(file_cfg)
    if seed is None:
        raise ConfigError("a seed is required (--seed or config file)")
    if experiment is None:
        raise ConfigError("an experiment is required (--experiment or config file)")
    return RunConfig(seed=seed, experiment=experiment, out_dir=Path(out), overrides={k: v for k, v in overrides.items() if v is not None})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        run(cfg)
    except (ConfigError, InvalidParameterError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, ConvergenceError, UnphysicalStateError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {cfg.experiment} outputs to {cfg.out_dir} ({cfg.header})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
