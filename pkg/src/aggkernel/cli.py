"""Command-line front end.

Subcommands mirror the pipeline stages: simulate, assemble, solve, prune,
score, sweep, run, plus preset listing.  A run is specified either by a
preset name or by a JSON config file (the same shape `preset show` prints).
All reported indices are 0-based.  Exit status is 0 on success and 2 on a
expected failure, with the failing stage named in the diagnostic.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .assembly import load_system, save_system
from .errors import AggKernelError
from .grids import save_trajectory
from .metrics import reconstruction_error
from .presets import ExperimentConfig, config_from_dict, get_preset, list_presets
from .solvers import coherence


def _add_selection(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", help="named configuration, see 'preset list'")
    g.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--noise", type=float, help="override the noise percent")
    p.add_argument("--out", help="directory for artifacts")
    p.add_argument("--cache", help="directory for reusable stage artifacts")


def _config(args) -> ExperimentConfig:
    if args.preset:
        cfg = get_preset(args.preset)
    else:
        cfg = config_from_dict(json.loads(Path(args.config).read_text()))
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.noise is not None:
        updates["noise_percent"] = args.noise
    if getattr(args, "solver", None):
        updates["solver"] = args.solver
    if getattr(args, "k", None):
        updates["sparsity"] = args.k
    return cfg.with_updates(**updates) if updates else cfg


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _observed(cfg, args):
    traj = pipeline.simulate(cfg, args.cache)
    return traj, pipeline.observe(cfg, traj)


def cmd_preset(args) -> int:
    if args.action == "list":
        for name in list_presets():
            cfg = get_preset(name)
            print(f"{name:18s} {cfg.ndim}D  n={cfg.basis.n:3d}  K={cfg.sparsity}"
                  f"  noise={cfg.noise_percent:g}%  {cfg.notes}")
        return 0
    if args.name is None:
        print("preset show needs a name", file=sys.stderr)
        return 2
    print(json.dumps(get_preset(args.name).to_dict(), sort_keys=True, indent=1))
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    traj, obs = _observed(cfg, args)
    drift = max(abs(obs.mass(l) - traj.mass(0)) for l in range(obs.grid.L + 1))
    print(f"[simulate] {cfg.name}: solver slices {traj.values.shape}, "
          f"observed {obs.values.shape}, mass {traj.mass(0):.6g} "
          f"(max abs drift {drift:.3e})")
    out = _out_dir(args)
    if out is not None:
        save_trajectory(obs, out / "data.traj")
        if args.raw:
            save_trajectory(traj, out / "solver.traj")
        print(f"[simulate] wrote {out / 'data.traj'}")
    return 0


def cmd_assemble(args) -> int:
    cfg = _config(args)
    _, obs = _observed(cfg, args)
    system = pipeline.assemble(cfg, obs, args.cache)
    print(f"[assemble] {cfg.name}: n={system.b.shape[0]}, "
          f"coherence={coherence(system.A):.6f}, "
          f"|A|_F={np.linalg.norm(system.A):.6g}, |b|={np.linalg.norm(system.b):.6g}")
    out = _out_dir(args)
    if out is not None:
        save_system(system, out / "system")
        print(f"[assemble] wrote {out / 'system'}.json/.bin")
    return 0


def _solved(cfg, args):
    if getattr(args, "system", None):
        system = load_system(Path(args.system))
        obs = None
    else:
        _, obs = _observed(cfg, args)
        system = pipeline.assemble(cfg, obs, args.cache)
    return obs, system, pipeline.solve_sparse(cfg, system)


def _print_solution(cfg, sol) -> None:
    coeffs = {int(i): round(float(sol.c[i]), 6) for i in sol.support}
    print(f"[solve] {cfg.name}: solver={sol.solver}, support={list(sol.support)}, "
          f"coefficients={coeffs}, quadratic loss={sol.re}")
    c_true = cfg.true_c()
    if c_true is not None:
        print(f"[solve] reconstruction error vs known kernel: "
              f"{reconstruction_error(c_true, sol.c):.6g}")


def cmd_solve(args) -> int:
    cfg = _config(args)
    _, _, sol = _solved(cfg, args)
    _print_solution(cfg, sol)
    out = _out_dir(args)
    if out is not None:
        (out / "solution.json").write_text(json.dumps({
            "solver": sol.solver, "support": [int(i) for i in sol.support],
            "c": sol.c.tolist(), "quadratic_loss": sol.re},
            sort_keys=True, indent=1))
        print(f"[solve] wrote {out / 'solution.json'}")
    return 0


def cmd_prune(args) -> int:
    cfg = _config(args)
    obs, system, sol = _solved(cfg, args)
    if obs is None:
        print("[prune] pruning needs trajectory data; do not pass --system",
              file=sys.stderr)
        return 2
    _print_solution(cfg, sol)
    report = pipeline.prune_support(cfg, system, obs, sol)
    for cand in report.candidates:
        mark = " <-- selected" if cand.support == report.selected.support else ""
        in_cluster = any(c.support == cand.support for c in report.cluster)
        tee = "skipped" if cand.tee is None else f"{cand.tee:.6g}"
        print(f"[prune] support={list(cand.support)} loss={cand.re:.6g} "
              f"tee={tee}{' (cluster)' if in_cluster else ''}{mark}")
    out = _out_dir(args)
    if out is not None:
        (out / "pruning.json").write_text(report.to_json())
        (out / "pruning.csv").write_text(report.to_csv())
        print(f"[prune] wrote {out / 'pruning.json'}")
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    result = pipeline.run(cfg, out_dir=None, cache_dir=args.cache,
                          do_prune=not args.no_prune)
    print(json.dumps(result.scores, sort_keys=True, indent=1))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    result = pipeline.run(cfg, out_dir=args.out, cache_dir=args.cache,
                          do_prune=not args.no_prune)
    print(json.dumps(result.scores, sort_keys=True, indent=1))
    if args.out:
        print(f"[run] manifest at {Path(args.out) / 'manifest.json'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    levels = [float(x) for x in args.levels.split(",")]
    base = args.seed if args.seed is not None else cfg.seed
    trials, summary = pipeline.sweep_noise(cfg, levels, args.trials,
                                           base_seed=base,
                                           cache_dir=args.cache)
    for level in sorted(summary):
        s = summary[level]
        print(f"[sweep] p={level:g}%: mean={s['recon_error_mean']:.6g} "
              f"std={s['recon_error_std']:.6g} "
              f"modal support={s['modal_support']} "
              f"rate={s['modal_support_rate']:.2f} (n={s['n']})")
    out = _out_dir(args)
    if out is not None:
        pipeline.write_sweep_csv(trials, summary, out)
        print(f"[sweep] wrote {out / 'trials.csv'} and {out / 'summary.csv'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="aggkernel",
        description="Identify nonlocal interaction kernels from density data.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preset", help="list or show named configurations")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("simulate", help="integrate and downsample a trajectory")
    _add_selection(p)
    p.add_argument("--raw", action="store_true",
                   help="also write the solver-scale trajectory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assemble", help="build the quadratic system (A, b)")
    _add_selection(p)
    p.set_defaults(func=cmd_assemble)

    for name, fn, hlp in (("solve", cmd_solve, "solve for sparse coefficients"),
                          ("prune", cmd_prune, "enumerate, cluster and "
                                               "re-simulate candidate supports")):
        p = sub.add_parser(name, help=hlp)
        _add_selection(p)
        p.add_argument("--solver", choices=("partinv", "subspace_pursuit",
                                            "stls", "least_squares"))
        p.add_argument("-k", type=int, help="override the sparsity budget")
        if name == "solve":
            p.add_argument("--system", help="load a saved system instead of "
                                            "assembling")
        p.set_defaults(func=fn)

    for name, fn, hlp in (("score", cmd_score, "run end to end and print scores"),
                          ("run", cmd_run, "run end to end and save artifacts")):
        p = sub.add_parser(name, help=hlp)
        _add_selection(p)
        p.add_argument("--solver", choices=("partinv", "subspace_pursuit",
                                            "stls", "least_squares"))
        p.add_argument("-k", type=int, help="override the sparsity budget")
        p.add_argument("--no-prune", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep", help="noise robustness sweep")
    _add_selection(p)
    p.add_argument("--levels", default="0,1,2,3,5",
                   help="comma-separated noise percents")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_sweep)

    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AggKernelError as exc:
        stage = getattr(args, "command", "cli")
        print(f"[{stage}] error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
