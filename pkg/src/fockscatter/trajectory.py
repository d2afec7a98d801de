"""Two-point boundary-value problems for mean-field trajectories.

Two flavours of shooting problem are solved by damped Newton iteration with
multistart seeding:

* quadrature boundary conditions fix Re psi at both ends; unknowns are the L
  initial imaginary parts,
* Fock boundary conditions fix site occupations |psi_l|^2 = n_l + 1/2 at both
  ends; the U(1) gauge is fixed by theta_1(t_i) = 0 and the unknowns are the
  L-1 initial relative phases.

Each solution carries its action, monodromy matrix, and a van Vleck stability
prefactor whose complex square-root branch is continued in time from the
short-time limit (accumulating -pi/2 per sign change of the relevant
fluctuation determinant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .meanfield import (
    IntegratorConfig,
    MeanfieldPath,
    TangentFrame,
    classical_hamiltonian,
    integrate,
)
from .model import BoseHubbardModel, analyze_time_reversal
from .quadrature import QuadratureConfig


@dataclass(frozen=True)
class ShootingConfig:
    residual_tol: float = 1e-9
    max_newton_iter: int = 50
    multistart_count: int = 64
    damping: float = 0.5
    dedup_distance: float = 1e-6
    seed: int = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if min(self.residual_tol, self.max_newton_iter, self.multistart_count,
               self.damping, self.dedup_distance) <= 0:
            raise ValueError("shooting configuration values must be positive")


@dataclass
class Trajectory:
    """A boundary-value solution with action and stability data."""

    kind: str  # "quadrature-BVP" | "fock-BVP"
    path: object
    action: float
    energy: float
    boundary: dict
    monodromy: TangentFrame | None
    residual: float
    caustic: bool = False

    def psi(self, t):
        return self.path.psi(t)

    @property
    def t_i(self):
        return self.path.t_i

    @property
    def t_f(self):
        return self.path.t_f


class ShootingDiagnostics:
    """Bookkeeping for a multistart run (seeds tried, failures, caustics)."""

    def __init__(self):
        self.seeds_tried = 0
        self.converged = 0
        self.failed = 0
        self.integration_errors = 0
        self.duplicates = 0
        self.caustic_count = 0
        self.notes: list[str] = []


# ---------------------------------------------------------------------------
# coordinate maps between (Re psi, Im psi) and (n, theta)
# ---------------------------------------------------------------------------

def fock_initial_field(n_i, phases) -> np.ndarray:
    """psi_l = sqrt(n_l + 1/2) exp(i theta_l)."""
    n_i = np.asarray(n_i, dtype=float)
    return np.sqrt(n_i + 0.5) * np.exp(1j * np.asarray(phases, dtype=float))


def _nt_jacobian_inv(psi: np.ndarray) -> np.ndarray:
    """d(n, theta)/d(x, y) at a phase-space point, x + i y = psi."""
    x, y = psi.real, psi.imag
    r2 = x * x + y * y
    L = psi.size
    out = np.zeros((2 * L, 2 * L))
    out[:L, :L] = np.diag(2 * x)
    out[:L, L:] = np.diag(2 * y)
    out[L:, :L] = np.diag(-y / r2)
    out[L:, L:] = np.diag(x / r2)
    return out


def _nt_jacobian(psi: np.ndarray) -> np.ndarray:
    """d(x, y)/d(n, theta), inverse of _nt_jacobian_inv."""
    x, y = psi.real, psi.imag
    r2 = x * x + y * y
    L = psi.size
    out = np.zeros((2 * L, 2 * L))
    out[:L, :L] = np.diag(x / (2 * r2))
    out[:L, L:] = np.diag(-y)
    out[L:, :L] = np.diag(y / (2 * r2))
    out[L:, L:] = np.diag(x)
    return out


def monodromy_fock_blocks(path, t: float | None = None):
    """Monodromy in (n, theta) coordinates; returns blocks (A, B, C, D) with
    dn_f = A dn_i + B dtheta_i and dtheta_f = C dn_i + D dtheta_i."""
    t = path.t_f if t is None else t
    M = path.monodromy(t)
    Mnt = _nt_jacobian_inv(path.psi(t)) @ M @ _nt_jacobian(path.psi(path.t_i))
    L = M.shape[0] // 2
    return Mnt[:L, :L], Mnt[:L, L:], Mnt[L:, :L], Mnt[L:, L:]


def reduced_theta_f_by_n_i(path, t: float | None = None) -> np.ndarray:
    """(L-1) x (L-1) boundary-value derivative d theta(t_f) / d n_i with the
    gauge direction removed, n_f held fixed.

    Reduced coordinates respect total-number conservation (dn_1 compensates
    dn_2..dn_L) and use phases relative to site 1; in them the flow map is
    symplectic and this matrix equals minus the inverse transpose of
    d n_f / d theta_i.
    """
    A, B, C, D = monodromy_fock_blocks(path, t)
    Bt = B[1:, 1:]
    Ar = A[1:, 1:] - A[1:, :1]
    Cr = (C[1:, 1:] - C[:1, 1:]) - (C[1:, :1] - C[:1, :1])
    Dr = D[1:, 1:] - D[:1, 1:]
    return Cr - Dr @ np.linalg.solve(Bt, Ar)


def reduced_theta_i_by_n_f(path, t: float | None = None) -> np.ndarray:
    """(L-1) x (L-1) derivative d theta(t_i) / d n_f at fixed n_i."""
    _, B, _, _ = monodromy_fock_blocks(path, t)
    return np.linalg.inv(B[1:, 1:])


# ---------------------------------------------------------------------------
# quadrature-boundary shooting
# ---------------------------------------------------------------------------

def shoot_quadrature(
    model: BoseHubbardModel,
    q_i,
    q_f,
    t_span,
    cfg: ShootingConfig = ShootingConfig(),
    qcfg: QuadratureConfig = QuadratureConfig(),
    seeds=None,
    diagnostics: ShootingDiagnostics | None = None,
) -> list[Trajectory]:
    """All distinct real trajectories with Re psi fixed at both ends."""
    q_i = np.asarray(q_i, dtype=float)
    q_f = np.asarray(q_f, dtype=float)
    L = model.L
    b = qcfg.b
    x_i = q_i / (2 * b)
    x_target = q_f / (2 * b)
    diag = diagnostics if diagnostics is not None else ShootingDiagnostics()

    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x71)))
    sigma = np.sqrt(np.mean(x_i**2) + 0.5)
    seed_list = [np.zeros(L)] if seeds is None else [np.asarray(s, float) for s in seeds]
    while len(seed_list) < cfg.multistart_count:
        seed_list.append(rng.normal(scale=sigma, size=L))

    roots = []
    for v0 in seed_list:
        diag.seeds_tried += 1
        v = _newton_quadrature(model, x_i, v0, x_target, t_span, cfg, diag)
        if v is None:
            diag.failed += 1
            continue
        if any(np.max(np.abs(v - r)) < cfg.dedup_distance for r in roots):
            diag.duplicates += 1
            continue
        roots.append(v)
        diag.converged += 1

    roots.sort(key=lambda v: tuple(v))
    trajs = []
    for v in roots:
        psi0 = x_i + 1j * v
        path = integrate(model, psi0, t_span, cfg.integrator,
                         track_phases=False, with_tangent=True)
        resid = 2 * b * float(np.max(np.abs(path.psi_f.real - x_target)))
        caustic = _is_singular(path.tangent.block_qp())
        if caustic:
            diag.caustic_count += 1
        trajs.append(Trajectory(
            kind="quadrature-BVP",
            path=path,
            action=path.action_quadrature,
            energy=path.energy,
            boundary={
                "q_i": q_i, "q_f": 2 * b * path.psi_f.real,
                "p_i": 2 * b * v, "p_f": 2 * b * path.psi_f.imag,
                "b": b,
            },
            monodromy=path.tangent,
            residual=resid,
            caustic=caustic,
        ))
    return trajs


def _newton_quadrature(model, x_i, v0, x_target, t_span, cfg, diag):
    v = np.array(v0, dtype=float)
    fast = IntegratorConfig(rel_tol=min(1e-10, cfg.residual_tol * 0.1),
                            abs_tol=1e-12)
    # iterates far outside the boundary scale cannot converge back and make
    # the interaction frequencies (~ U |psi|^2) arbitrarily stiff; cap them
    cap = 10.0 * (1.0 + np.max(np.abs(x_i)) + np.max(np.abs(v)))
    r_norm = np.inf
    for _ in range(cfg.max_newton_iter):
        try:
            path = integrate(model, x_i + 1j * v, t_span, fast,
                             track_phases=False, with_tangent=True)
        except Exception:
            diag.integration_errors += 1
            return None
        r = path.psi_f.real - x_target
        r_norm = np.max(np.abs(r))
        if r_norm < cfg.residual_tol:
            return v
        J = path.tangent.block_qp()
        if _is_singular(J):
            return None
        step = np.linalg.solve(J, r)
        # backtracking line search on the residual norm
        alpha = 1.0
        for _ in range(20):
            candidate = v - alpha * step
            if np.max(np.abs(candidate)) <= cap:
                try:
                    p2 = integrate(model, x_i + 1j * candidate, t_span,
                                   fast, track_phases=False, with_tangent=False)
                    if np.max(np.abs(p2.psi_f.real - x_target)) < r_norm:
                        break
                except Exception:
                    pass
            alpha *= cfg.damping
        else:
            return None
        v = v - alpha * step
    return None


def _is_singular(J: np.ndarray, rel: float = 1e-10) -> bool:
    sv = np.linalg.svd(J, compute_uv=False)
    return sv[-1] < rel * max(sv[0], 1.0)


# ---------------------------------------------------------------------------
# Fock-boundary shooting
# ---------------------------------------------------------------------------

def shoot_fock(
    model: BoseHubbardModel,
    n_i,
    n_f,
    t_span,
    cfg: ShootingConfig = ShootingConfig(),
    seeds=None,
    diagnostics: ShootingDiagnostics | None = None,
) -> list[Trajectory]:
    """Gauge-fixed representatives of trajectory families n_i -> n_f.

    Unknowns are the initial relative phases theta_2..theta_L; theta_1(t_i)=0.
    Returns [] with a diagnostic note when total particle number differs.
    """
    n_i = np.asarray(n_i, dtype=float)
    n_f = np.asarray(n_f, dtype=float)
    L = model.L
    diag = diagnostics if diagnostics is not None else ShootingDiagnostics()
    if abs(n_i.sum() - n_f.sum()) > 1e-12:
        diag.notes.append("particle number not conserved between boundary states")
        return []

    if L == 1:
        return _shoot_fock_single_site(model, n_i, n_f, t_span, cfg, diag)

    if seeds is None:
        sampler = qmc.Halton(d=L - 1, seed=cfg.seed)
        seed_list = list(2 * np.pi * sampler.random(cfg.multistart_count))
    else:
        seed_list = [np.atleast_1d(np.asarray(s, float)) for s in seeds]

    roots = []
    for phi0 in seed_list:
        diag.seeds_tried += 1
        phi = _newton_fock(model, n_i, n_f, phi0, t_span, cfg, diag)
        if phi is None:
            diag.failed += 1
            continue
        phi = np.mod(phi, 2 * np.pi)
        if any(_angular_distance(phi, r) < cfg.dedup_distance for r in roots):
            diag.duplicates += 1
            continue
        roots.append(phi)
        diag.converged += 1

    roots.sort(key=lambda v: tuple(v))
    trajs = []
    for phi in roots:
        theta0 = np.concatenate([[0.0], phi])
        psi0 = fock_initial_field(n_i, theta0)
        path = integrate(model, psi0, t_span, cfg.integrator,
                         track_phases=True, theta0=theta0, with_tangent=True)
        resid = float(np.max(np.abs(path.occupations(path.t_f) - n_f)))
        _, B, _, _ = monodromy_fock_blocks(path)
        caustic = _is_singular(B[1:, 1:])
        if caustic:
            diag.caustic_count += 1
        trajs.append(Trajectory(
            kind="fock-BVP",
            path=path,
            action=path.action_fock,
            energy=path.energy,
            boundary={
                "n_i": n_i, "n_f": n_f,
                "theta_i": theta0, "theta_f": path.theta(path.t_f),
            },
            monodromy=path.tangent,
            residual=resid,
            caustic=caustic,
        ))
    return trajs


def _shoot_fock_single_site(model, n_i, n_f, t_span, cfg, diag):
    # single site: occupation is conserved, the only phase is gauged away
    if abs(n_i[0] - n_f[0]) > 1e-12:
        return []
    psi0 = fock_initial_field(n_i, [0.0])
    path = integrate(model, psi0, t_span, cfg.integrator,
                     track_phases=True, theta0=np.zeros(1), with_tangent=True)
    diag.converged += 1
    return [Trajectory(
        kind="fock-BVP",
        path=path,
        action=path.action_fock,
        energy=path.energy,
        boundary={"n_i": n_i, "n_f": n_f,
                  "theta_i": np.zeros(1), "theta_f": path.theta(path.t_f)},
        monodromy=path.tangent,
        residual=float(abs(path.occupations(path.t_f)[0] - n_f[0])),
        caustic=False,
    )]


def _newton_fock(model, n_i, n_f, phi0, t_span, cfg, diag):
    phi = np.array(phi0, dtype=float)
    fast = IntegratorConfig(rel_tol=min(1e-10, cfg.residual_tol * 0.1),
                            abs_tol=1e-12)
    for _ in range(cfg.max_newton_iter):
        theta0 = np.concatenate([[0.0], phi])
        psi0 = fock_initial_field(n_i, theta0)
        try:
            path = integrate(model, psi0, t_span, fast,
                             track_phases=False, with_tangent=True)
        except Exception:
            diag.integration_errors += 1
            return None
        r = (np.abs(path.psi_f) ** 2 - 0.5 - n_f)[1:]
        r_norm = np.max(np.abs(r))
        if r_norm < cfg.residual_tol:
            return phi
        J = _fock_residual_jacobian(path, psi0)
        if _is_singular(J):
            return None
        step = np.linalg.solve(J, r)
        alpha = 1.0
        for _ in range(20):
            trial = np.concatenate([[0.0], phi - alpha * step])
            try:
                p2 = integrate(model, fock_initial_field(n_i, trial), t_span,
                               fast, track_phases=False, with_tangent=False)
                r2 = (np.abs(p2.psi_f) ** 2 - 0.5 - n_f)[1:]
                if np.max(np.abs(r2)) < r_norm:
                    break
            except Exception:
                pass
            alpha *= cfg.damping
        else:
            return None
        phi = phi - alpha * step
    return None


def _fock_residual_jacobian(path, psi0):
    """d occupations(t_f)[1:] / d theta_i[1:] from the monodromy matrix."""
    L = psi0.size
    M = path.monodromy(path.t_f)
    # initial variation per phase: d(x, y)_j = (-Im psi0_j, Re psi0_j)
    V = np.zeros((2 * L, L - 1))
    for j in range(1, L):
        V[j, j - 1] = -psi0.imag[j]
        V[L + j, j - 1] = psi0.real[j]
    W = M @ V
    psif = path.psi_f
    dn = 2 * (psif.real[:, None] * W[:L] + psif.imag[:, None] * W[L:])
    return dn[1:, :]


def _angular_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = np.mod(a - b, 2 * np.pi)
    return float(np.max(np.minimum(d, 2 * np.pi - d)))


# ---------------------------------------------------------------------------
# van Vleck prefactors with branch continuation in time
# ---------------------------------------------------------------------------

def _maslov_branch(det_samples: np.ndarray):
    """(reference sign, sign-change count) along a sampled determinant."""
    signs = np.sign(det_samples)
    nonzero = signs[signs != 0]
    if nonzero.size == 0:
        return 1.0, 0
    s_ref = nonzero[0]
    flips = int(np.count_nonzero(np.diff(nonzero) != 0))
    return s_ref, flips


def _branch_sample_times(t_i, t_f, count=129):
    dt = t_f - t_i
    return t_i + dt * np.linspace(0.01, 1.0, count)


def prefactor_quadrature(traj: Trajectory) -> complex:
    """Gaussian-fluctuation amplitude sqrt(det[(d^2 R / dq_f dq_i)/(-2 pi i hbar)]).

    The mixed action derivative equals -hbar/(2 b^2) (dq_f/dp_i)^{-1}; the
    square-root branch follows det(dq_f/dp_i)(t) by continuity from the
    short-time limit.
    """
    if traj.kind != "quadrature-BVP":
        raise ValueError("prefactor_quadrature requires a quadrature-BVP trajectory")
    if traj.caustic:
        raise ValueError("caustic trajectory has no finite van Vleck prefactor")
    b = traj.boundary["b"]
    path = traj.path
    L = traj.monodromy.L
    ts = _branch_sample_times(path.t_i, path.t_f)
    dets = np.array([np.linalg.det(path.monodromy(t)[:L, L:]) for t in ts])
    s_ref, flips = _maslov_branch(dets)
    det_f = dets[-1]
    modulus = (4 * np.pi * b**2) ** (-L / 2.0) * abs(det_f) ** -0.5
    base = np.sqrt(s_ref * (-1j) ** L + 0j)
    return modulus * base * np.exp(-0.5j * np.pi * flips)


def prefactor_fock(traj: Trajectory) -> complex:
    """Reduced-determinant amplitude for Fock-boundary trajectory families.

    Equals sqrt(det'[(d^2 R / dn_f dn_i)/(-2 pi i hbar)]) on the (L-1)x(L-1)
    submatrix with the gauge direction removed; |amplitude|^2 =
    |det' dtheta(t_i)/dn_f| / (2 pi)^(L-1).  Conjugate points are detected as
    sign changes of det dn_f/dtheta_i along the trajectory.
    """
    if traj.kind != "fock-BVP":
        raise ValueError("prefactor_fock requires a fock-BVP trajectory")
    L = traj.monodromy.L
    if L == 1:
        return 1.0 + 0.0j
    if traj.caustic:
        raise ValueError("caustic trajectory has no finite van Vleck prefactor")
    path = traj.path
    ts = _branch_sample_times(path.t_i, path.t_f)
    dets = np.empty(ts.size)
    for k, t in enumerate(ts):
        _, B, _, _ = monodromy_fock_blocks(path, t)
        dets[k] = np.linalg.det(B[1:, 1:])
    s_ref, flips = _maslov_branch(dets)
    det_f = dets[-1]
    modulus = (2 * np.pi) ** (-(L - 1) / 2.0) * abs(det_f) ** -0.5
    base = np.sqrt(s_ref * (-1j) ** (L - 1) + 0j)
    return modulus * base * np.exp(-0.5j * np.pi * flips)


# ---------------------------------------------------------------------------
# time reversal
# ---------------------------------------------------------------------------

class _ReversedPath:
    """View of a path run backwards under complex conjugation."""

    def __init__(self, inner):
        self._inner = inner
        self.t_i = inner.t_i
        self.t_f = inner.t_f
        self.track_phases = getattr(inner, "track_phases", False)

    def _mirror(self, t):
        return self.t_f + self.t_i - np.asarray(t, dtype=float)

    def psi(self, t):
        return np.conj(self._inner.psi(self._mirror(t)))

    def theta(self, t):
        return -self._inner.theta(self._mirror(t))

    def occupations(self, t):
        return np.abs(self.psi(t)) ** 2 - 0.5

    @property
    def psi_i(self):
        return self.psi(self.t_i)

    @property
    def psi_f(self):
        return self.psi(self.t_f)


def time_reverse(traj: Trajectory, model: BoseHubbardModel) -> Trajectory:
    """Trajectory with path conj(psi(t_f + t_i - t)); equal action, swapped
    and negated boundary phases.  Requires a time-reversal-symmetric model."""
    if not analyze_time_reversal(model).is_trs:
        raise ValueError("time reversal requires a TRS (gauged-real) model")
    rpath = _ReversedPath(traj.path)
    boundary = dict(traj.boundary)
    if traj.kind == "fock-BVP":
        boundary = {
            "n_i": traj.boundary["n_f"], "n_f": traj.boundary["n_i"],
            "theta_i": -np.asarray(traj.boundary["theta_f"]),
            "theta_f": -np.asarray(traj.boundary["theta_i"]),
        }
    elif traj.kind == "quadrature-BVP":
        boundary = {
            "q_i": traj.boundary["q_f"], "q_f": traj.boundary["q_i"],
            "p_i": -np.asarray(traj.boundary["p_f"]),
            "p_f": -np.asarray(traj.boundary["p_i"]),
            "b": traj.boundary["b"],
        }
    return Trajectory(
        kind=traj.kind,
        path=rpath,
        action=traj.action,
        energy=traj.energy,
        boundary=boundary,
        monodromy=None,
        residual=traj.residual,
        caustic=traj.caustic,
    )


# ---------------------------------------------------------------------------
# plain-text trajectory dump
# ---------------------------------------------------------------------------

def dump_trajectory(traj: Trajectory, sample_count: int = 200) -> str:
    """Header block plus (time, Re psi_l, Im psi_l) records."""
    lines = [
        f"# kind\t{traj.kind}",
        f"# action\t{traj.action!r}",
        f"# energy\t{traj.energy!r}",
        f"# residual\t{traj.residual!r}",
        f"# caustic\t{int(traj.caustic)}",
    ]
    ts = np.linspace(traj.t_i, traj.t_f, sample_count)
    L = traj.psi(traj.t_i).size
    cols = ["t"] + [f"re_psi_{l}" for l in range(L)] + [f"im_psi_{l}" for l in range(L)]
    lines.append("# " + "\t".join(cols))
    for t in ts:
        psi = traj.psi(t)
        row = [f"{t:.12g}"] + [f"{v:.12g}" for v in psi.real] + [f"{v:.12g}" for v in psi.imag]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
