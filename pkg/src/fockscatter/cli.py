"""Command-line front end.

Subcommands: exact, classical, trajectory, semiclassical, cbs, validate.
Each reads one INI config (--config), writes tab-separated result files plus a
JSON run manifest to --out, and exits 0 on success, 2 on validation failure,
1 on error.  Results are independent of --threads; --seed overrides the
config seed.  Setting FOCKSCATTER_CACHE to a directory caches Hamiltonian
builds keyed by the model checksum.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys

import numpy as np
import scipy.sparse

from . import __version__, cbs, fock, semiclassics
from .config import ConfigError, disorder_spec, model_config, parse_config, resolved_lines
from .model import analyze_time_reversal, build_model
from .trajectory import ShootingConfig, dump_trajectory, shoot_fock


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def cached_hamiltonian(model, basis) -> scipy.sparse.csr_matrix:
    """build_hamiltonian with an optional on-disk cache (FOCKSCATTER_CACHE)."""
    cache_dir = os.environ.get("FOCKSCATTER_CACHE")
    if not cache_dir:
        return fock.build_hamiltonian(model, basis)
    os.makedirs(cache_dir, exist_ok=True)
    key = f"{model.checksum()}_{basis.L}_{basis.N}"
    path = os.path.join(cache_dir, f"H_{key}.npz")
    if os.path.exists(path):
        return scipy.sparse.load_npz(path)
    H = fock.build_hamiltonian(model, basis)
    scipy.sparse.save_npz(path, H)
    return H


class _Run:
    """Output directory plus manifest bookkeeping for one subcommand."""

    def __init__(self, subcommand: str, cfg: dict, out_dir: str):
        self.subcommand = subcommand
        self.cfg = cfg
        self.out_dir = out_dir
        self.started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.files: dict[str, str] = {}
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name: str, text: str):
        path = os.path.join(self.out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        self.files[name] = _sha256_file(path)

    def finish(self):
        manifest = {
            "artifact_version": __version__,
            "subcommand": self.subcommand,
            "resolved_config": resolved_lines(self.cfg),
            "seed": self.cfg["run"]["seed"],
            "started": self.started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "result_checksums": self.files,
        }
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def cmd_exact(cfg, out_dir):
    run = _Run("exact", cfg, out_dir)
    model = build_model(model_config(cfg))
    n_i = tuple(cfg["run"]["n_initial"])
    times = cfg["run"]["times"]
    basis = fock.enumerate_basis(model.L, int(sum(n_i)))
    P = fock.transition_probabilities_all(model, basis, n_i, times)
    lines = ["# n_i\tn_f\tt\tprobability"]
    ni_text = ",".join(str(v) for v in n_i)
    for it, t in enumerate(times):
        for k in range(basis.dim):
            nf_text = ",".join(str(int(v)) for v in basis.states[k])
            lines.append(f"{ni_text}\t{nf_text}\t{t:.12g}\t{P[it, k]:.12g}")
    run.write("exact.tsv", "\n".join(lines) + "\n")
    run.finish()
    return 0


def cmd_classical(cfg, out_dir):
    run = _Run("classical", cfg, out_dir)
    model = build_model(model_config(cfg))
    n_i = tuple(cfg["run"]["n_initial"])
    records = []
    for t in cfg["run"]["times"]:
        est = semiclassics.classical_transition_probability(
            model, n_i, None, t, cfg["classical"]["samples"],
            seed=(cfg["run"]["seed"], 0),
        )
        for n_f, e in est.items():
            records.append({
                "n_i": n_i, "n_f": n_f, "t": t, "method": e.method,
                "value": e.value, "stderr": e.stderr, "samples": e.samples,
            })
    run.write("classical.tsv", semiclassics.format_transition_records(records))
    run.finish()
    return 0


def _final_state(cfg):
    n_f = cfg["trajectory"]["n_final"]
    if n_f is None:
        raise ConfigError("this subcommand needs n_final in [trajectory]")
    return tuple(n_f)


def cmd_trajectory(cfg, out_dir):
    run = _Run("trajectory", cfg, out_dir)
    model = build_model(model_config(cfg))
    n_i = tuple(cfg["run"]["n_initial"])
    n_f = _final_state(cfg)
    t = cfg["run"]["times"][-1]
    scfg = ShootingConfig(
        multistart_count=cfg["trajectory"]["multistart"],
        residual_tol=cfg["trajectory"]["residual_tol"],
        seed=cfg["run"]["seed"],
    )
    trajs = shoot_fock(model, n_i, n_f, (0.0, t), scfg)
    summary = ["# index\taction\tenergy\tresidual\tcaustic"]
    for k, traj in enumerate(trajs):
        run.write(f"trajectory_{k}.txt", dump_trajectory(traj))
        summary.append(
            f"{k}\t{traj.action:.12g}\t{traj.energy:.12g}"
            f"\t{traj.residual:.3g}\t{int(traj.caustic)}"
        )
    run.write("trajectories.tsv", "\n".join(summary) + "\n")
    run.finish()
    return 0


def cmd_semiclassical(cfg, out_dir):
    run = _Run("semiclassical", cfg, out_dir)
    model = build_model(model_config(cfg))
    n_i = tuple(cfg["run"]["n_initial"])
    n_f = _final_state(cfg)
    scfg = ShootingConfig(
        multistart_count=cfg["trajectory"]["multistart"],
        residual_tol=cfg["trajectory"]["residual_tol"],
        seed=cfg["run"]["seed"],
    )
    records = []
    for t in cfg["run"]["times"]:
        amp, diag = semiclassics.propagator_fock_semiclassical(
            model, n_i, n_f, t, scfg
        )
        records.append({
            "n_i": n_i, "n_f": n_f, "t": t, "method": "semiclassical",
            "value": abs(amp) ** 2, "stderr": 0.0, "samples": 0,
            "family_count": diag.family_count,
            "caustic_count": diag.caustic_count,
        })
    run.write("semiclassical.tsv", semiclassics.format_transition_records(records))
    run.finish()
    return 0


def cmd_cbs(cfg, out_dir):
    run = _Run("cbs", cfg, out_dir)
    experiment = cbs.CbsExperimentConfig(
        model_config=model_config(cfg),
        disorder=disorder_spec(cfg),
        n_i=tuple(cfg["run"]["n_initial"]),
        times=tuple(cfg["run"]["times"]),
        mc_samples=cfg["cbs"]["mc_samples"],
        master_seed=cfg["run"]["seed"],
        threads=cfg["run"]["threads"],
        bootstrap_resamples=cfg["cbs"]["bootstrap_resamples"],
        transfer_top_k=cfg["cbs"]["transfer_top_k"],
    )
    result = cbs.run_cbs_experiment(experiment)
    run.write("cbs.tsv", cbs.format_cbs_records(result))
    run.finish()
    return 0


def cmd_validate(cfg, out_dir):
    """Fast invariant suite on the configured model; exit 2 on any failure."""
    run = _Run("validate", cfg, out_dir)
    model = build_model(model_config(cfg))
    n_i = tuple(cfg["run"]["n_initial"])
    N = int(sum(n_i))
    checks = []

    basis = fock.enumerate_basis(model.L, N)
    H = cached_hamiltonian(model, basis)
    checks.append(("hamiltonian_hermitian",
                   abs(H - H.getH()).max() < 1e-12 if basis.dim else True))

    t = min(1.0, cfg["run"]["times"][-1])
    v0 = np.zeros(basis.dim, dtype=complex)
    v0[basis.index_of(n_i)] = 1.0
    v1 = fock.evolve(v0, model, basis, t, H=H)
    checks.append(("exact_norm_conserved", abs(np.linalg.norm(v1) - 1.0) < 1e-9))
    e0 = np.vdot(v0, H @ v0).real
    e1 = np.vdot(v1, H @ v1).real
    checks.append(("exact_energy_conserved",
                   abs(e1 - e0) <= 1e-9 * max(abs(e0), 1.0)))

    from .meanfield import integrate
    from .trajectory import fock_initial_field
    psi0 = fock_initial_field(np.array(n_i, dtype=float), np.zeros(model.L))
    path = integrate(model, psi0, (0.0, t), with_tangent=True)
    checks.append(("meanfield_norm_drift", path.norm_drift < 1e-8))
    checks.append(("meanfield_energy_drift", path.energy_drift < 1e-8))
    checks.append(("monodromy_symplectic",
                   path.tangent.symplectic_defect() < 1e-6))

    report = analyze_time_reversal(model)
    checks.append(("trs_analysis_ran", report.phases.size == model.L))

    lines = ["# check\tpassed"]
    ok = True
    for name, passed in checks:
        ok &= bool(passed)
        lines.append(f"{name}\t{int(bool(passed))}")
    run.write("validate.tsv", "\n".join(lines) + "\n")
    run.finish()
    return 0 if ok else 2


COMMANDS = {
    "exact": cmd_exact,
    "classical": cmd_classical,
    "trajectory": cmd_trajectory,
    "semiclassical": cmd_semiclassical,
    "cbs": cmd_cbs,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fockscatter",
        description="Semiclassical bosonic Fock-space propagation toolkit",
    )
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (does not affect results)")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.threads is not None:
            cfg["run"]["threads"] = args.threads
        return COMMANDS[args.subcommand](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
