"""Semiclassical Fock propagator and the classical transition probability.

The propagator sums van Vleck amplitudes over trajectory families found by
Fock-boundary shooting.  The classical (equivalently diagonal-approximation)
transition probability is a phase-space Monte Carlo over uniformly random
initial relative phases; final occupations are assigned to unit-width integer
cells via n_l = round(|psi_l|^2 - 1/2), which preserves normalization exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .meanfield import integrate_batch
from .model import BoseHubbardModel
from .trajectory import (
    ShootingConfig,
    ShootingDiagnostics,
    prefactor_fock,
    shoot_fock,
)


@dataclass(frozen=True)
class TransitionEstimate:
    value: float
    stderr: float
    samples: int
    method: str

    def __post_init__(self):
        if self.value < 0 or self.stderr < 0:
            raise ValueError("probability estimates must be non-negative")


@dataclass
class PropagatorDiagnostics:
    family_count: int = 0
    caustic_count: int = 0
    no_trajectory: bool = False
    shooting: ShootingDiagnostics = field(default_factory=ShootingDiagnostics)


def propagator_fock_semiclassical(
    model: BoseHubbardModel,
    n_i,
    n_f,
    t: float,
    cfg: ShootingConfig = ShootingConfig(),
    trajectories=None,
) -> tuple[complex, PropagatorDiagnostics]:
    """K_sc(n_f, t; n_i) = sum over non-caustic families of A exp(i R / hbar).

    Precomputed trajectories may be passed to amortize shooting across
    amplitude evaluations.
    """
    diag = PropagatorDiagnostics()
    if trajectories is None:
        trajectories = shoot_fock(model, n_i, n_f, (0.0, t), cfg,
                                  diagnostics=diag.shooting)
    amp = 0.0 + 0.0j
    for traj in trajectories:
        if traj.caustic:
            diag.caustic_count += 1
            continue
        diag.family_count += 1
        amp += prefactor_fock(traj) * np.exp(1j * traj.action / model.hbar)
    if diag.family_count == 0:
        diag.no_trajectory = True
    return amp, diag


def sample_initial_phases(L: int, sample_count: int, seed) -> np.ndarray:
    """Uniform relative phases on [0, 2 pi)^(L-1), first phase gauge-fixed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    theta = np.zeros((sample_count, L))
    if L > 1:
        theta[:, 1:] = rng.uniform(0.0, 2 * np.pi, size=(sample_count, L - 1))
    return theta


def classical_occupation_counts(
    model: BoseHubbardModel,
    n_i,
    times,
    sample_count: int,
    seed,
    rel_tol: float = 1e-8,
    batch_size: int = 256,
    discard_abort_fraction: float = 0.01,
):
    """Monte Carlo final-occupation histograms at each requested time.

    Returns (counts, kept, discarded) where counts[it] maps an occupation
    tuple to its hit count.  The delta constraints of the classical sum rule
    are realized as unit cells centred on integers.
    """
    n_i = np.asarray(n_i, dtype=float)
    L = model.L
    times = np.atleast_1d(np.asarray(times, dtype=float))
    counts = [dict() for _ in times]
    discarded = 0
    kept = 0
    theta = sample_initial_phases(L, sample_count, seed)
    psi0 = np.sqrt(n_i + 0.5)[None, :] * np.exp(1j * theta)
    for start in range(0, sample_count, batch_size):
        block = psi0[start : start + batch_size]
        try:
            fields = integrate_batch(model, block, times, rel_tol=rel_tol)
        except Exception:
            # retry one-by-one so a single bad sample is discarded, not the block
            fields = np.full((times.size, block.shape[0], L), np.nan, complex)
            for j in range(block.shape[0]):
                try:
                    fields[:, j : j + 1, :] = integrate_batch(
                        model, block[j : j + 1], times, rel_tol=rel_tol
                    )
                except Exception:
                    pass
        occ = np.abs(fields) ** 2 - 0.5
        finite = np.all(np.isfinite(occ), axis=(0, 2))
        discarded += int(np.count_nonzero(~finite))
        kept += int(np.count_nonzero(finite))
        binned = np.rint(occ).astype(np.int64)
        for it in range(times.size):
            for j in np.nonzero(finite)[0]:
                key = tuple(int(v) for v in binned[it, j])
                c = counts[it]
                c[key] = c.get(key, 0) + 1
    if sample_count > 0 and discarded > discard_abort_fraction * sample_count:
        raise RuntimeError(
            f"{discarded}/{sample_count} Monte Carlo samples discarded; aborting"
        )
    return counts, kept, discarded


def classical_transition_probability(
    model: BoseHubbardModel,
    n_i,
    n_f_selector,
    t: float,
    sample_count: int,
    seed,
    method_tag: str = "classical-MC",
) -> dict[tuple, TransitionEstimate]:
    """Sum-rule Monte Carlo estimate of P^(cl)(n_f, t; n_i).

    n_f_selector: iterable of final occupation vectors, or None for every
    cell observed in the sample.  Standard errors are binomial.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    counts, kept, _ = classical_occupation_counts(
        model, n_i, [t], sample_count, seed
    )
    c = counts[0]
    if n_f_selector is None:
        keys = sorted(c.keys())
    else:
        keys = [tuple(int(v) for v in n_f) for n_f in n_f_selector]
    out = {}
    for key in keys:
        k = c.get(key, 0)
        p = k / kept if kept else 0.0
        stderr = np.sqrt(p * (1 - p) / kept) if kept else 0.0
        out[key] = TransitionEstimate(value=p, stderr=float(stderr),
                                      samples=kept, method=method_tag)
    return out


def diagonal_approximation(
    model: BoseHubbardModel,
    n_i,
    n_f_selector,
    t: float,
    sample_count: int,
    seed,
) -> dict[tuple, TransitionEstimate]:
    """Diagonal-approximation transition probability.

    Identical estimator to classical_transition_probability (the two sides of
    the trajectory-sum identity); only the method tag differs.
    """
    return classical_transition_probability(
        model, n_i, n_f_selector, t, sample_count, seed, method_tag="diagonal"
    )


def trajectory_sum_rule_lhs(
    model: BoseHubbardModel,
    n_i,
    n_f,
    t: float,
    cfg: ShootingConfig = ShootingConfig(),
) -> tuple[float, PropagatorDiagnostics]:
    """Sum over families of |det' dtheta(t_i)/dn_f| / (2 pi)^(L-1).

    This is the trajectory side of the classical sum rule; it should match the
    Monte Carlo estimate when shooting finds every family.
    """
    from .trajectory import reduced_theta_i_by_n_f

    diag = PropagatorDiagnostics()
    trajectories = shoot_fock(model, n_i, n_f, (0.0, t), cfg,
                              diagnostics=diag.shooting)
    L = model.L
    total = 0.0
    for traj in trajectories:
        if traj.caustic:
            diag.caustic_count += 1
            continue
        diag.family_count += 1
        det = np.linalg.det(reduced_theta_i_by_n_f(traj.path))
        total += abs(det) / (2 * np.pi) ** (L - 1)
    if diag.family_count == 0:
        diag.no_trajectory = True
    return total, diag


def format_transition_records(records) -> str:
    """Tab-separated records with a fixed header line.

    records: iterable of dicts with keys n_i, n_f, t, method, value, stderr,
    samples, family_count, caustic_count.
    """
    header = "# n_i\tn_f\tt\tmethod\tvalue\tstderr\tsamples\tfamily_count\tcaustic_count"
    lines = [header]
    for r in records:
        lines.append("\t".join([
            ",".join(str(int(v)) for v in r["n_i"]),
            ",".join(str(int(v)) for v in r["n_f"]),
            f"{r['t']:.12g}",
            str(r["method"]),
            f"{r['value']:.12g}",
            f"{r['stderr']:.12g}",
            str(int(r["samples"])),
            str(int(r.get("family_count", 0))),
            str(int(r.get("caustic_count", 0))),
        ]))
    return "\n".join(lines) + "\n"
