"""Command line entry point: ``aemmp {run,sweep-snr,phase-diagram,demo}``."""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from . import estimator as est
from . import geometry as geo
from . import harness as h


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _add_scenario_args(p):
    d = h.ExperimentSpec()
    p.add_argument("--geometry", choices=h.GEOMETRIES, default=d.geometry)
    p.add_argument("--scenario", choices=h.SCENARIOS, default=d.scenario)
    p.add_argument("--n-antennas", type=int, default=d.n_antennas)
    p.add_argument("--k-users", type=int, default=d.k_users)
    p.add_argument("--t-len", type=int, default=d.t_len)
    p.add_argument("--grid-size", type=int, default=d.grid_size)
    p.add_argument("--l-c", type=int, default=d.l_c)
    p.add_argument("--l-p", type=int, default=d.l_p)
    p.add_argument("--spread-deg", type=float, default=d.spread_deg,
                   help="total angular width of a cluster, degrees")
    p.add_argument("--sparsity", type=float, default=d.sparsity,
                   help="active fraction of grid points (known-grid scenario)")
    p.add_argument("--trials", type=int, default=d.n_trials)
    p.add_argument("--variant", choices=est.VARIANTS, default=d.estimator_variant)
    p.add_argument("--restarts", type=int, default=d.n_restarts)
    p.add_argument("--no-tune", action="store_true", help="keep the angle grid fixed")
    p.add_argument("--output", default=None)


def _spec_from_args(args, **overrides):
    kw = dict(geometry=args.geometry, scenario=args.scenario, n_antennas=args.n_antennas,
              k_users=args.k_users, t_len=args.t_len, grid_size=args.grid_size, l_c=args.l_c,
              l_p=args.l_p, spread_deg=args.spread_deg, sparsity=args.sparsity,
              n_trials=args.trials, estimator_variant=args.variant,
              n_restarts=args.restarts, tune_angles=not args.no_tune)
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.output:
        kw["output_path"] = args.output
    kw.update(overrides)
    return h.ExperimentSpec(**kw)


def _report(summary, out=None):
    (out or sys.stdout).write(h.to_csv(summary, h.SUMMARY_COLUMNS))


def cmd_run(args):
    spec = h.load_spec(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if args.output:
        spec = dataclasses.replace(spec, output_path=args.output)
    _, summary = h.run_experiment(spec)
    _report(summary)
    return 0


def cmd_sweep_snr(args):
    spec = _spec_from_args(args, snr_db_list=args.snr,
                           output_path=args.output or "sweep_snr.csv")
    _, summary = h.run_experiment(spec)
    _report(summary)
    return 0


def cmd_phase_diagram(args):
    """Mean NMSE of X over an antenna-count by cluster-count lattice at one SNR."""
    out_path = Path(args.output or "phase_diagram.csv")
    rows = []
    for n in args.n_list:
        for lc in args.lc_list:
            spec = _spec_from_args(args, n_antennas=n, l_c=lc, snr_db_list=[args.snr],
                                   output_path=str(out_path))
            trial_rows, summary = h.run_experiment(spec, write=False)
            s = summary[0]
            rows.append({"n_antennas": n, "l_c": lc, "snr_db": args.snr,
                         "mean_nmse_x_db": s["mean_nmse_x_db"], "n_ok": s["n_ok"],
                         "n_fail": s["n_fail"]})
    cols = ["n_antennas", "l_c", "snr_db", "mean_nmse_x_db", "n_ok", "n_fail"]
    text = h.to_csv(rows, cols)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_demo(args):
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    geom = geo.ULA(32)
    gt = ch.simulate(geom, 2, 40, 1, 5, np.deg2rad(10.0), args.snr, rng)
    res = est.run(gt.Y, geom, 2, est.EstimatorConfig(grid_size=40), rng)
    perm = est.match_permutation(res.X_hat, gt.X)
    print(f"ULA N=32, K=2, T=40, SNR={args.snr:g} dB, seed={seed}")
    print(f"EM iterations: {res.em_iters} (converged: {res.converged})")
    print(f"learned noise variance: {res.learned.noise_var:.3e} (true {gt.noise_var:.3e})")
    print(f"NMSE X: {10 * np.log10(h.nmse(res.X_hat[perm], gt.X)):.2f} dB")
    print(f"NMSE H: {10 * np.log10(h.nmse(res.H_hat[:, perm], gt.H)):.2f} dB")
    print(f"blind rate: {h.rate_blind(gt.X, res.X_hat[perm]):.2f} bit/channel use")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="aemmp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec file (JSON or key = value)")
    r.add_argument("spec")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--output", default=None)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-snr", help="NMSE and rate against SNR")
    _add_scenario_args(s)
    s.add_argument("--snr", type=_floats, default=[0.0, 10.0, 20.0, 30.0],
                   help="comma separated SNR values in dB")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_sweep_snr)

    ph = sub.add_parser("phase-diagram", help="NMSE over antenna count x cluster count")
    _add_scenario_args(ph)
    ph.add_argument("--n-list", type=_ints, default=[16, 32, 48, 64])
    ph.add_argument("--lc-list", type=_ints, default=[1, 2, 3, 4])
    ph.add_argument("--snr", type=float, default=20.0)
    ph.add_argument("--seed", type=int, default=None)
    ph.set_defaults(func=cmd_phase_diagram)

    d = sub.add_parser("demo", help="one small run with a printed report")
    d.add_argument("--snr", type=float, default=20.0)
    d.add_argument("--seed", type=int, default=None)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
