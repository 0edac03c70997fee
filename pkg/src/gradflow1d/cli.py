"""Configuration-driven batch runner.

Reads a JSON config, assembles the energy and initial datum, runs the
scheme, evaluates the enabled certificates, and writes trajectory.json,
certificates.csv and summary.json into the output directory.

Exit codes: 0 success, 1 certificate failure, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .report import CSV_HEADER, CSV_SCHEMA_VERSION, CertificateReport
from .transport import ConfigurationError, GridDensity, Interval
from .lagrangian import (LagrangianSpec, MobilitySpec, TemporalWeight,
                         TestFunction, alpha_window, dissipation_constants,
                         validate_assumption_A, validate_assumption_f)
from .jko import (JkoConfig, MobilityMapEnergy, ThinFilmMapEnergy, run,
                  refine_study)
from . import diagnostics as dg

ALL_CHECKS = ("energy_monotone", "total_square_distance", "holder_continuity",
              "entropy_dissipation", "discrete_weak", "apriori",
              "boundary_sign")

DEFAULTS = {
    "domain": [0.0, 1.0],
    "m": 256,
    "k": 256,
    "lagrangian": {"name": "thin_film"},
    "initial": {"name": "cosine", "eps": 0.5, "k": 2},
    "tau": 1e-4,
    "n_steps": 50,
    "refine_levels": 0,
    "checks": list(ALL_CHECKS),
    "out": "out",
    "seed": 0,
}


@dataclass
class RunConfig:
    domain: Interval
    m: int
    k: int
    lagrangian: dict
    initial: dict
    tau: float
    n_steps: int
    refine_levels: int
    checks: list
    out: Path
    seed: int
    inject_corruption: bool = False
    raw: dict = field(default_factory=dict)

    @property
    def is_mobility(self) -> bool:
        return self.lagrangian.get("name") != "thin_film"

    def build_mobility(self) -> MobilitySpec | None:
        lag = self.lagrangian
        name = lag.get("name")
        if name == "thin_film":
            return None
        if name == "sqrt_mobility":
            return MobilitySpec.sqrt_mobility()
        if name == "power_mobility":
            return MobilitySpec.power_mobility(lag.get("C", 1.0), lag["alpha"])
        raise ConfigurationError(f"unknown lagrangian '{name}'")

    def build_energy(self):
        f = self.build_mobility()
        return ThinFilmMapEnergy() if f is None else MobilityMapEnergy(f)

    def build_initial(self) -> GridDensity:
        ini = self.initial
        name = ini.get("name")
        if name == "uniform":
            return GridDensity.uniform(self.domain, self.m)
        if name == "cosine":
            return GridDensity.cosine(self.domain, self.m,
                                      eps=ini.get("eps", 0.5),
                                      k=ini.get("k", 2))
        if name == "bump":
            return GridDensity.bump(self.domain, self.m,
                                    center=ini.get("center"),
                                    width=ini.get("width"))
        if name == "file":
            data = np.loadtxt(ini["path"], delimiter=",")
            return GridDensity.from_samples(self.domain, data[:, 1])
        raise ConfigurationError(f"unknown initial datum '{name}'")


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse, default-fill and eagerly validate a JSON run configuration."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    merged = {**DEFAULTS, **raw, **(overrides or {})}
    for key in raw:
        if key not in DEFAULTS and key != "inject_corruption":
            raise ConfigurationError(f"unknown config key '{key}'")
    unknown = [c for c in merged["checks"] if c not in ALL_CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown checks {unknown}")
    cfg = RunConfig(
        domain=Interval(float(merged["domain"][0]), float(merged["domain"][1])),
        m=int(merged["m"]), k=int(merged["k"]),
        lagrangian=dict(merged["lagrangian"]),
        initial=dict(merged["initial"]),
        tau=float(merged["tau"]), n_steps=int(merged["n_steps"]),
        refine_levels=int(merged["refine_levels"]),
        checks=list(merged["checks"]), out=Path(merged["out"]),
        seed=int(merged["seed"]),
        inject_corruption=bool(merged.get("inject_corruption", False)),
        raw=merged)
    if cfg.tau <= 0 or cfg.n_steps < 0 or cfg.m < 8 or cfg.k < 8:
        raise ConfigurationError("tau > 0, n_steps >= 0, m >= 8, k >= 8 required")
    # eager assumption validation before any stepping
    f = cfg.build_mobility()
    if f is not None:
        if not alpha_window(1) < f.alpha <= 1.0:
            raise ConfigurationError(
                f"mobility exponent {f.alpha} outside the admissible window "
                f"({alpha_window(1)}, 1]")
        rep = validate_assumption_f(f, dimension=1)
        if not rep.passed:
            raise ConfigurationError(
                "mobility fails structure assumption, clause "
                + rep.context["worst_clause"])
    else:
        rep = validate_assumption_A(LagrangianSpec.thin_film())
        if not rep.passed:
            raise ConfigurationError("thin-film Lagrangian validation failed")
    cfg.build_initial()  # raises on bad initial-datum parameters
    return cfg


def _certificates(cfg: RunConfig, traj) -> list[CertificateReport]:
    reports = []
    enabled = set(cfg.checks)
    f = cfg.build_mobility()

    def eval_check(name):
        if name == "energy_monotone":
            return dg.check_energy_monotone(traj)
        if name == "total_square_distance":
            return [dg.check_total_square_distance(traj)]
        if name == "holder_continuity":
            return [dg.check_holder_continuity(traj)]
        if name == "entropy_dissipation":
            if f is None:
                return dg.check_entropy_dissipation_A(
                    traj, LagrangianSpec.thin_film())
            delta = dissipation_constants(f, 1)[1]
            return dg.check_entropy_dissipation_f(traj, f, delta)
        if name == "discrete_weak":
            horizon = cfg.tau * cfg.n_steps
            phi = TestFunction.cosine(cfg.domain.lo, cfg.domain.hi, k=2)
            eta = TemporalWeight.smooth_bump(0.1 * horizon, 0.8 * horizon)
            if f is None:
                return [dg.check_discrete_weak_A(
                    traj, LagrangianSpec.thin_film(), phi, eta)]
            return [dg.check_discrete_weak_f(traj, f, phi, eta)]
        if name == "apriori":
            c_lower = 0.5
            transform = None if f is None else (lambda v: f.f(np.maximum(v, 0.0)))
            return [dg.apriori_bounds(traj, c_lower, transform)]
        if name == "boundary_sign":
            return [dg.boundary_sign_check(traj.states[-1])]
        raise ConfigurationError(f"unknown check '{name}'")

    names = [n for n in ALL_CHECKS if n in enabled]
    with ThreadPoolExecutor(max_workers=4) as pool:
        for result in pool.map(eval_check, names):
            reports.extend(result)
    return reports


def _write_outputs(cfg: RunConfig, traj, reports, elapsed: float,
                   gaps=None) -> dict:
    cfg.out.mkdir(parents=True, exist_ok=True)
    traj_doc = {
        "config": {k: v for k, v in cfg.raw.items() if k != "out"},
        "times": traj.times.tolist(),
        "energies": traj.energies.tolist(),
        "entropies": traj.entropies.tolist(),
        "step_distances": traj.step_distances.tolist(),
        "converged": traj.converged.tolist(),
        "states": [s.values.tolist() for s in traj.states],
    }
    (cfg.out / "trajectory.json").write_text(json.dumps(traj_doc))

    with open(cfg.out / "certificates.csv", "w", newline="") as fh:
        fh.write(f"# schema_version={CSV_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rep in reports:
            writer.writerow(rep.row())

    n_pass = int(sum(bool(r.passed) for r in reports))
    worst = {}
    for rep in reports:
        if rep.name not in worst or rep.slack < worst[rep.name]:
            worst[rep.name] = float(rep.slack)
    summary = {
        "config": traj_doc["config"],
        "n_certificates": len(reports),
        "n_passed": n_pass,
        "n_failed": len(reports) - n_pass,
        "worst_slack": worst,
        "final_energy": float(traj.energies[-1]),
        "elapsed_seconds": elapsed,
    }
    if gaps is not None:
        summary["refinement_gaps"] = [float(g) for g in gaps]
    (cfg.out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def execute(cfg: RunConfig) -> int:
    """Run the scheme and certificate suite; returns the process exit code."""
    np.random.seed(cfg.seed)
    t0 = time.time()
    try:
        energy = cfg.build_energy()
        u0 = cfg.build_initial()
        jcfg = JkoConfig(tau=cfg.tau, n_steps=cfg.n_steps, k=cfg.k, m=cfg.m)
        corrupt = (max(cfg.n_steps // 2, 1),) if cfg.inject_corruption else ()
        traj = run(u0, energy, jcfg, corrupt_steps=corrupt)
        gaps = None
        if cfg.refine_levels > 1:
            _, gaps = refine_study(u0, energy, jcfg, levels=cfg.refine_levels)
        reports = _certificates(cfg, traj)
        summary = _write_outputs(cfg, traj, reports, time.time() - t0, gaps)
    except ConfigurationError:
        raise
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0 if summary["n_failed"] == 0 else 1


def sweep(cfg: RunConfig, axis: str, values: list) -> tuple[list, int]:
    """One run per value of the swept parameter; rows evaluated in parallel."""
    if axis not in ("tau", "alpha", "eps"):
        raise ConfigurationError(f"unknown sweep axis '{axis}'")

    def one(val):
        raw = dict(cfg.raw)
        raw["out"] = str(cfg.out / f"{axis}={val:g}")
        if axis == "tau":
            raw["tau"] = val
        elif axis == "alpha":
            raw["lagrangian"] = {**raw["lagrangian"], "alpha": val}
        else:
            raw["initial"] = {**raw["initial"], "eps": val}
        row = {axis: val}
        try:
            sub = load_config_dict(raw)
            code = execute(sub)
            summary = json.loads((sub.out / "summary.json").read_text())
            row.update(final_energy=summary["final_energy"],
                       path_length=float(np.sum(json.loads(
                           (sub.out / "trajectory.json").read_text()
                       )["step_distances"])),
                       worst_slack=min(summary["worst_slack"].values(),
                                       default=0.0),
                       exit_code=code)
        except (ConfigurationError, OSError) as exc:
            row.update(error=str(exc), exit_code=2)
        return row

    with ThreadPoolExecutor(max_workers=4) as pool:
        rows = list(pool.map(one, values))
    worst = max((r["exit_code"] for r in rows), default=0)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "sweep.json").write_text(json.dumps(rows, indent=2))
    return rows, worst


def load_config_dict(raw: dict) -> RunConfig:
    import tempfile
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(raw, fh)
        name = fh.name
    try:
        return load_config(name)
    finally:
        Path(name).unlink(missing_ok=True)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="gradflow1d",
        description="1D Wasserstein gradient-flow solver and certificate suite")
    ap.add_argument("--config", required=True)
    ap.add_argument("--out")
    ap.add_argument("--tau", type=float)
    ap.add_argument("--steps", type=int)
    ap.add_argument("--check-all", action="store_true")
    ap.add_argument("--check", action="append", default=None, metavar="NAME")
    ap.add_argument("--sweep", metavar="AXIS=V1,V2,...")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--inject-corruption", action="store_true")
    args = ap.parse_args(argv)

    overrides = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.steps is not None:
        overrides["n_steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.check_all:
        overrides["checks"] = list(ALL_CHECKS)
    elif args.check:
        overrides["checks"] = args.check
    if args.inject_corruption:
        overrides["inject_corruption"] = True

    try:
        cfg = load_config(args.config, overrides)
        if args.sweep:
            axis, _, vals = args.sweep.partition("=")
            values = [float(v) for v in vals.split(",") if v]
            _, code = sweep(cfg, axis, values)
            return code
        return execute(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
