"""Monte-Carlo experiment driver: metrics, scenario synthesis, per-trial and
aggregate CSV output."""

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import channel as ch
from . import estimator as est
from . import geometry as geo

log = logging.getLogger(__name__)

RATE_CAP_BITS = 60.0
WORKERS_ENV = "AEMMP_WORKERS"
GEOMETRIES = ("ula", "lens", "arbitrary", "ura")
SCENARIOS = ("clustered", "known_grid")

TRIAL_COLUMNS = ["snr_db", "trial", "nmse_x", "nmse_h", "rate_blind", "em_iters", "failed"]
SUMMARY_COLUMNS = ["snr_db", "mean_nmse_x_db", "sem_nmse_x", "mean_nmse_h_db", "sem_nmse_h",
                   "mean_rate", "n_ok", "n_fail"]


def nmse(estimate, truth):
    estimate, truth = np.asarray(estimate), np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must share a shape")
    den = np.sum(np.abs(truth) ** 2)
    if den == 0:
        raise ValueError("NMSE undefined for an all-zero truth")
    return float(np.sum(np.abs(estimate - truth) ** 2) / den)


def _log_terms(X, X_hat, cap):
    X, X_hat = np.asarray(X), np.asarray(X_hat)
    if X.shape != X_hat.shape:
        raise ValueError("X and X_hat must share a shape")
    sig = np.sum(np.abs(X) ** 2, axis=1)
    err = np.sum(np.abs(X - X_hat) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        terms = np.log2(1.0 + sig / err)
    return np.minimum(terms, cap)


def rate_blind(X, X_hat, cap=RATE_CAP_BITS):
    """Blind-system achievable rate in bits per channel use; one reference
    symbol and the user-labelling overhead are charged."""
    K, T = np.shape(X)
    terms = _log_terms(X, X_hat, cap)
    return float((1 - 1 / T) * terms.sum() - K * math.ceil(math.log2(K)) / T)


def rate_training(X, X_hat, t_train, cap=RATE_CAP_BITS):
    K, T = np.shape(X)
    if not 0 <= t_train < T:
        raise ValueError("t_train must satisfy 0 <= t_train < T")
    return float((1 - t_train / T) * _log_terms(X, X_hat, cap).sum())


@dataclass
class ExperimentSpec:
    geometry: str = "ula"
    n_antennas: int = 64
    k_users: int = 4
    t_len: int = 60
    grid_size: int = 80
    l_c: int = 2
    l_p: int = 10
    spread_deg: float = 20.0
    snr_db_list: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])
    n_trials: int = 100
    seed: int = 0
    estimator_variant: str = "markov"
    output_path: str = "results.csv"
    # scenario knobs beyond the core fields
    scenario: str = "clustered"
    sparsity: float = 0.2
    tune_angles: bool = True
    n_restarts: int = 5
    n_vertical: int = 4
    n_elevations: int = 1
    max_em_iters: int = 14

    def __post_init__(self):
        self.snr_db_list = [float(s) for s in self.snr_db_list]
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.snr_db_list:
            raise ValueError("snr_db_list must be non-empty")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.estimator_variant not in est.VARIANTS:
            raise ValueError(f"estimator_variant must be one of {est.VARIANTS}")
        if self.scenario == "known_grid" and self.geometry != "ula":
            raise ValueError("the known-grid scenario is defined for ULA only")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def _parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def parse_spec_text(text):
    """JSON object, or ``key = value`` lines (``#`` comments, JSON-style values)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        return ExperimentSpec.from_dict(json.loads(stripped))
    d = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = line.split("=", 1)
        d[key.strip()] = _parse_value(val)
    return ExperimentSpec.from_dict(d)


def load_spec(path):
    return parse_spec_text(Path(path).read_text())


def build_geometry(spec):
    n = spec.n_antennas
    if spec.geometry == "ula":
        return geo.ULA(n)
    if spec.geometry == "lens":
        return geo.Lens(n, (n - 1) / 2.0)
    if spec.geometry == "arbitrary":
        # one fixed random layout per experiment
        return geo.ArbitraryLinear.random(n, np.random.default_rng([spec.seed, 0xA7]))
    if n % spec.n_vertical:
        raise ValueError("URA needs n_antennas divisible by n_vertical")
    return geo.URA(n // spec.n_vertical, spec.n_vertical)


def estimator_config(spec):
    return est.EstimatorConfig(grid_size=spec.grid_size, variant=spec.estimator_variant,
                               tune_angles=spec.tune_angles, n_restarts=spec.n_restarts,
                               n_elevations=spec.n_elevations,
                               max_em_iters=spec.max_em_iters)


def trial_rng(seed, trial):
    return np.random.default_rng([seed, trial])


def synthesize(spec, geom, snr_db, rng):
    """Ground truth and the initial grid override (None: uniform grid)."""
    if spec.scenario == "known_grid":
        gt = ch.simulate_known_grid(spec.n_antennas, spec.k_users, spec.t_len, spec.grid_size,
                                    spec.sparsity, snr_db, rng)
        return gt, (gt.extra["grid"], None)
    gt = ch.simulate(geom, spec.k_users, spec.t_len, spec.l_c, spec.l_p,
                     np.deg2rad(spec.spread_deg), snr_db, rng)
    return gt, None


def run_trial(spec, snr_db, trial, geom=None):
    geom = geom or build_geometry(spec)
    rng = trial_rng(spec.seed, trial)
    gt, grid = synthesize(spec, geom, snr_db, rng)
    row = {"snr_db": snr_db, "trial": trial}
    try:
        res = est.run(gt.Y, geom, spec.k_users, estimator_config(spec), rng, grid=grid)
    except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d at %g dB failed: %s", trial, snr_db, exc)
        row.update(nmse_x=math.nan, nmse_h=math.nan, rate_blind=math.nan, em_iters=0, failed=1)
        return row
    perm = est.match_permutation(res.X_hat, gt.X)
    X_hat = res.X_hat[perm]
    row.update(nmse_x=nmse(X_hat, gt.X), nmse_h=nmse(res.H_hat[:, perm], gt.H),
               rate_blind=rate_blind(gt.X, X_hat), em_iters=res.em_iters, failed=0)
    return row


def _trial_job(args):
    spec_dict, snr_db, trial = args
    return run_trial(ExperimentSpec.from_dict(spec_dict), snr_db, trial)


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_trials(spec, workers=None):
    workers = worker_count() if workers is None else workers
    jobs = [(spec.to_dict(), snr, trial) for snr in spec.snr_db_list
            for trial in range(spec.n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial_job, jobs))
    else:
        geom = build_geometry(spec)
        rows = [run_trial(spec, snr, trial, geom) for _, snr, trial in jobs]
    rows.sort(key=lambda r: (spec.snr_db_list.index(r["snr_db"]), r["trial"]))
    return rows


def _db(x):
    return 10 * math.log10(x) if x > 0 else -math.inf


def _sem(vals):
    return float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0


def aggregate(rows, snr_db_list):
    out = []
    for snr in snr_db_list:
        sel = [r for r in rows if r["snr_db"] == snr]
        ok = [r for r in sel if not r["failed"]]
        nx = np.array([r["nmse_x"] for r in ok])
        nh = np.array([r["nmse_h"] for r in ok])
        rates = np.array([r["rate_blind"] for r in ok])
        out.append({
            "snr_db": snr,
            "mean_nmse_x_db": _db(nx.mean()) if ok else math.nan,
            "sem_nmse_x": _sem(nx),
            "mean_nmse_h_db": _db(nh.mean()) if ok else math.nan,
            "sem_nmse_h": _sem(nh),
            "mean_rate": float(rates.mean()) if ok else math.nan,
            "n_ok": len(ok),
            "n_fail": len(sel) - len(ok),
        })
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12)) if math.isfinite(v) else str(v)
    return str(v)


def to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def summary_path(path):
    p = Path(path)
    return p.with_name(p.stem + "_summary" + (p.suffix or ".csv"))


def run_experiment(spec, workers=None, write=True):
    """Run every (SNR, trial) pair; returns ``(trial_rows, summary_rows)`` and,
    if ``write``, stores both CSVs next to ``spec.output_path``."""
    rows = run_trials(spec, workers)
    summary = aggregate(rows, spec.snr_db_list)
    if write:
        out = Path(spec.output_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(to_csv(rows, TRIAL_COLUMNS))
        summary_path(out).write_text(to_csv(summary, SUMMARY_COLUMNS))
    return rows, summary
