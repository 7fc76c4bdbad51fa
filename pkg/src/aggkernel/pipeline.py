"""End-to-end identification runs.

Stage order: simulate (or tile analytic steady data), downsample, add noise,
assemble the quadratic system, solve for a sparse coefficient vector,
optionally prune the support, score against the known kernel.

Expensive stages cache to disk under content-derived keys, so reruns with an
unchanged configuration reuse artifacts bitwise.  Every file this module
writes has deterministic bytes (no archive metadata, no timestamps), and
`run` emits a manifest listing each artifact with its sha256, which makes a
finished run reproducible and verifiable from the manifest alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fv
from .assembly import LinearSystem, assemble_direct, load_system, save_system
from .errors import InvalidParameterError
from .grids import (DensityTrajectory, load_trajectory, restrict,
                    save_trajectory)
from .metrics import NoiseTrial, reconstruction_error, summarize_noise_sweep
from .models import sha256_of
from .noise import NoiseSpec, add_noise
from .presets import ExperimentConfig
from .pruning import PruningReport, prune
from .solvers import (SparseSolution, least_squares, partinv, stls,
                      subspace_pursuit)


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# cache keys: each stage hashes exactly the fields that determine its output

def _sim_fields(c: ExperimentConfig) -> dict:
    return {"stage": "simulate", "model": c.model.to_dict(), "ic": c.ic,
            "R": c.R, "dx": c.dx, "dt": c.dt, "T": c.T, "ndim": c.ndim,
            "mode": c.mode, "cfl_safety": c.cfl_safety,
            "data_source": c.data_source}


def _obs_fields(c: ExperimentConfig) -> dict:
    return {"stage": "observe", "base": _sim_fields(c),
            "downsample": list(c.downsample),
            "noise_percent": c.noise_percent, "seed": c.seed}


def _sys_fields(c: ExperimentConfig) -> dict:
    return {"stage": "assemble", "base": _obs_fields(c),
            "basis": c.basis.to_dict()}


def _key(fields: dict) -> str:
    return sha256_of(fields)[:16]


# ---------------------------------------------------------------------------
# stages

def simulate(config: ExperimentConfig, cache_dir=None) -> DensityTrajectory:
    """Solver-scale clean trajectory; analytic steady data skips the solver."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"sim-{_key(_sim_fields(config))}.traj"
        if path.exists():
            return load_trajectory(path)
    if config.data_source == "stationary":
        g = config.solver_grid()
        rho = config.initial()
        values = np.repeat(rho[None, ...], g.L + 1, axis=0)
        traj = DensityTrajectory(grid=g, values=values, noisy=False,
                                 provenance={"data_source": "stationary",
                                             "ic": config.ic})
    else:
        traj = fv.solve(config.model, config.initial(), config.solver_config())
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_trajectory(traj, path)
    return traj


def observe(config: ExperimentConfig,
            traj: DensityTrajectory) -> DensityTrajectory:
    """Downsample to the observation mesh, then corrupt (never clipped)."""
    cx, ct = config.downsample
    if cx == 1 and ct == 1:
        obs = traj
    elif config.ndim == 1:
        obs = restrict(traj, cx, ct)
    else:
        obs = restrict(traj, cx, ct, cy=cx)
    if config.noise_percent > 0:
        obs = add_noise(obs, NoiseSpec(percent=config.noise_percent,
                                       seed=config.seed))
    return obs


def assemble(config: ExperimentConfig, obs: DensityTrajectory,
             cache_dir=None) -> LinearSystem:
    prefix = None
    if cache_dir is not None:
        prefix = Path(cache_dir) / f"sys-{_key(_sys_fields(config))}"
        if prefix.with_suffix(".bin").exists():
            return load_system(prefix)
    system = assemble_direct(config.basis, obs, config.model)
    if prefix is not None:
        prefix.parent.mkdir(parents=True, exist_ok=True)
        save_system(system, prefix)
    return system


def solve_sparse(config: ExperimentConfig,
                 system: LinearSystem) -> SparseSolution:
    A, b, k = system.A, system.b, config.sparsity
    if config.solver == "partinv":
        return partinv(A, b, k)
    if config.solver == "subspace_pursuit":
        return subspace_pursuit(A, b, k)
    if config.solver == "least_squares":
        return least_squares(A, b)
    if config.solver == "stls":
        lam = 0.1 if config.solver_threshold is None else config.solver_threshold
        return stls(A, b, threshold=lam)
    raise InvalidParameterError(f"unknown solver {config.solver!r}")


def prune_support(config: ExperimentConfig, system: LinearSystem,
                  obs: DensityTrajectory,
                  solution: SparseSolution) -> PruningReport:
    return prune(system, obs, config.model, config.basis, solution.support,
                 rel_width=config.prune_rel_width, refine=config.prune_refine,
                 n_steps=config.prune_n_steps, stride=config.prune_stride)


def score_run(config: ExperimentConfig, solution: SparseSolution,
              report: PruningReport | None = None) -> dict:
    """Reference-aware summary; silently partial when the kernel is outside
    the dictionary span (no ground truth to compare against)."""
    out = {
        "solver": solution.solver,
        "support": [int(i) for i in solution.support],
        "iterations": solution.iterations,
        "residual_norm": solution.residual_norm,
        "quadratic_loss": solution.re,
    }
    c_true = config.true_c()
    if c_true is not None:
        out["true_support"] = [int(i) for i in np.nonzero(c_true)[0]]
        out["reconstruction_error"] = reconstruction_error(c_true, solution.c)
        out["support_correct"] = out["support"] == out["true_support"]
    if report is not None:
        sel = report.selected
        out["pruned_support"] = [int(i) for i in sel.support]
        if c_true is not None:
            out["pruned_reconstruction_error"] = reconstruction_error(
                c_true, sel.c)
    return out


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class RunResult:
    config: ExperimentConfig
    data: DensityTrajectory
    system: LinearSystem
    solution: SparseSolution
    report: PruningReport | None
    scores: dict
    manifest: dict


def run(config: ExperimentConfig, out_dir=None, cache_dir=None,
        do_prune: bool | None = None) -> RunResult:
    """Full pipeline.  `do_prune` defaults to True whenever the sparsity
    budget exceeds 1 (a 1-support has nothing to prune)."""
    traj = simulate(config, cache_dir)
    obs = observe(config, traj)
    system = assemble(config, obs, cache_dir)
    solution = solve_sparse(config, system)
    if do_prune is None:
        do_prune = config.sparsity > 1 and len(solution.support) > 1
    report = (prune_support(config, system, obs, solution)
              if do_prune and solution.support else None)
    scores = score_run(config, solution, report)

    manifest = {
        "config": config.to_dict(),
        "config_hash": config.content_hash(),
        "stage_keys": {"simulate": _key(_sim_fields(config)),
                       "observe": _key(_obs_fields(config)),
                       "assemble": _key(_sys_fields(config))},
        "results": scores,
        "artifacts": {},
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(
            json.dumps(config.to_dict(), sort_keys=True, indent=1))
        save_trajectory(obs, out / "data.traj")
        save_system(system, out / "system")
        (out / "solution.json").write_text(json.dumps({
            "solver": solution.solver,
            "support": [int(i) for i in solution.support],
            "c": solution.c.tolist(),
            "iterations": solution.iterations,
            "residual_norm": solution.residual_norm,
            "quadratic_loss": solution.re,
        }, sort_keys=True, indent=1))
        if report is not None:
            (out / "pruning.json").write_text(report.to_json())
            (out / "pruning.csv").write_text(report.to_csv())
        (out / "scores.json").write_text(
            json.dumps(scores, sort_keys=True, indent=1))
        for f in sorted(out.iterdir()):
            if f.name != "manifest.json" and f.is_file():
                manifest["artifacts"][f.name] = _file_sha256(f)
        (out / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=1))

    return RunResult(config=config, data=obs, system=system, solution=solution,
                     report=report, scores=scores, manifest=manifest)


# ---------------------------------------------------------------------------
# noise sweeps

def sweep_noise(config: ExperimentConfig, p_list, trials: int,
                base_seed: int = 0, cache_dir=None):
    """Repeat observe/assemble/solve across noise levels and trials.

    Trial i draws with seed base_seed ^ i, so a given trial shares its
    normalized noise shape across levels (common random numbers) while
    distinct trials use unrelated streams.  Returns (trials, summary).
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    c_true = config.true_c()
    if c_true is None:
        raise InvalidParameterError(
            "noise sweeps need a kernel representable in the dictionary")
    clean = simulate(config, cache_dir)
    out: list[NoiseTrial] = []
    for p in p_list:
        if p < 0:
            raise InvalidParameterError("noise percent must be >= 0")
        for i in range(trials):
            seed = base_seed ^ i
            cfg = config.with_updates(noise_percent=float(p), seed=seed)
            obs = observe(cfg, clean)
            system = assemble(cfg, obs)
            solution = solve_sparse(cfg, system)
            out.append(NoiseTrial(
                noise_percent=float(p), seed=seed,
                support=solution.support,
                recon_error=reconstruction_error(c_true, solution.c),
                extras={"quadratic_loss": solution.re}))
    return out, summarize_noise_sweep(out)


def write_sweep_csv(trials: list[NoiseTrial], summary: dict, out_dir) -> None:
    """trials.csv holds raw rows; summary.csv one row per noise level."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trials.csv", "w") as f:
        f.write("noise_percent,seed,support,recon_error\n")
        for t in trials:
            supp = "+".join(str(i) for i in t.support)
            f.write(f"{t.noise_percent!r},{t.seed},{supp},{t.recon_error!r}\n")
    with open(out / "summary.csv", "w") as f:
        f.write("noise_percent,n_trials,mean_error,std_error,max_error,"
                "modal_support,modal_rate\n")
        for p in sorted(summary):
            s = summary[p]
            supp = "+".join(str(i) for i in s["modal_support"])
            f.write(f"{p!r},{s['n']},{s['recon_error_mean']!r},"
                    f"{s['recon_error_std']!r},{s['recon_error_max']!r},"
                    f"{supp},{s['modal_support_rate']!r}\n")
