"""Classical limit of the Bose-Hubbard model: Gross-Pitaevskii dynamics.

The classical Hamiltonian follows from the replacement
a+_l a_l' -> psi*_l psi_l' - delta_ll'/2, including the constant terms that the
replacement generates.  Real canonical coordinates are (q, p) = 2b (Re psi,
Im psi); the Jacobian of the flow in these coordinates (the monodromy matrix)
is independent of b and is co-integrated analytically for stability prefactors.

Along every trajectory the integrator accumulates both action forms,
  R_quad = int [ hbar/(2 b^2) p . dq/dt - H ] dt,
  R_fock = int [ hbar theta . dn/dt - H ] dt,
with theta the continuously unwrapped site phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import BoseHubbardModel


class MeanfieldError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    method: str = "DOP853"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("integrator tolerances must be positive")


@dataclass
class TangentFrame:
    """Monodromy matrix M = d(q(t), p(t)) / d(q(t_i), p(t_i)), shape (2L, 2L)."""

    M: np.ndarray

    @property
    def L(self) -> int:
        return self.M.shape[0] // 2

    def block_qq(self):
        return self.M[: self.L, : self.L]

    def block_qp(self):
        return self.M[: self.L, self.L :]

    def block_pq(self):
        return self.M[self.L :, : self.L]

    def block_pp(self):
        return self.M[self.L :, self.L :]

    def symplectic_defect(self) -> float:
        L = self.L
        J = np.block([[np.zeros((L, L)), np.eye(L)], [-np.eye(L), np.zeros((L, L))]])
        return float(np.max(np.abs(self.M.T @ J @ self.M - J)))

    def stability_block_ratio(self) -> np.ndarray:
        """X = -(dq/dp_i) (dp/dp_i)^{-1}, the fluctuation-determinant ratio."""
        return -self.block_qp() @ np.linalg.inv(self.block_pp())


def _interaction_terms(model: BoseHubbardModel):
    """(k, l, m, n, u) tuples with u entering as (u/2) A_km A_ln,
    A_km = psi*_k psi_m - delta_km / 2."""
    return [(k, l, m, n, u) for (k, l, m, n), u in model.interaction.items() if u != 0.0]


def classical_hamiltonian(model: BoseHubbardModel, psi: np.ndarray) -> float:
    """Mean-field energy including the constant replacement-rule terms."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != model.L:
        raise MeanfieldError(f"field length {psi.shape[-1]} != L={model.L}")
    return _classical_hamiltonian_complex(model, psi).real


def _classical_hamiltonian_complex(model: BoseHubbardModel, psi: np.ndarray) -> complex:
    h = model.hopping
    val = np.vdot(psi, h @ psi) - 0.5 * np.trace(h)
    for k, l, m, n, u in _interaction_terms(model):
        A_km = np.conj(psi[k]) * psi[m] - (0.5 if k == m else 0.0)
        A_ln = np.conj(psi[l]) * psi[n] - (0.5 if l == n else 0.0)
        val += 0.5 * u * A_km * A_ln
    return complex(val)


def hamiltonian_gradient(model: BoseHubbardModel, psi: np.ndarray) -> np.ndarray:
    """G_l = dH_cl / dpsi*_l (analytic)."""
    psi = np.asarray(psi, dtype=complex)
    G = model.hopping @ psi
    if model.onsite_only:
        u = model.onsite_interactions()
        return G + u * (np.abs(psi) ** 2 - 0.5) * psi
    for k, l, m, n, u in _interaction_terms(model):
        A_km = np.conj(psi[k]) * psi[m] - (0.5 if k == m else 0.0)
        A_ln = np.conj(psi[l]) * psi[n] - (0.5 if l == n else 0.0)
        G[k] += 0.5 * u * psi[m] * A_ln
        G[l] += 0.5 * u * psi[n] * A_km
    return G


def eom_rhs(model: BoseHubbardModel, psi: np.ndarray) -> np.ndarray:
    """dpsi/dt = -(i/hbar) dH_cl/dpsi*."""
    return -1j * hamiltonian_gradient(model, psi) / model.hbar


def gradient_jacobians(model: BoseHubbardModel, psi: np.ndarray):
    """(dG/dpsi, dG/dpsi*) as L x L complex matrices.

    The first is Hermitian, the second symmetric; both feed the tangent flow.
    """
    psi = np.asarray(psi, dtype=complex)
    L = model.L
    A = np.array(model.hopping, dtype=complex)
    B = np.zeros((L, L), dtype=complex)
    if model.onsite_only:
        u = model.onsite_interactions()
        A[np.diag_indices(L)] += u * (2.0 * np.abs(psi) ** 2 - 0.5)
        B[np.diag_indices(L)] = u * psi**2
        return A, B
    for k, l, m, n, u in _interaction_terms(model):
        A_km = np.conj(psi[k]) * psi[m] - (0.5 if k == m else 0.0)
        A_ln = np.conj(psi[l]) * psi[n] - (0.5 if l == n else 0.0)
        A[k, m] += 0.5 * u * A_ln
        A[k, n] += 0.5 * u * psi[m] * np.conj(psi[l])
        A[l, n] += 0.5 * u * A_km
        A[l, m] += 0.5 * u * psi[n] * np.conj(psi[k])
        B[k, l] += 0.5 * u * psi[m] * psi[n]
        B[l, k] += 0.5 * u * psi[n] * psi[m]
    return A, B


def tangent_generator(model: BoseHubbardModel, psi: np.ndarray) -> np.ndarray:
    """2L x 2L generator T with dM/dt = T M in (q, p) coordinates."""
    A, B = gradient_jacobians(model, psi)
    C = A + B
    D = A - B
    hbar = model.hbar
    return np.block(
        [[C.imag / hbar, D.real / hbar], [-C.real / hbar, D.imag / hbar]]
    )


@dataclass
class MeanfieldPath:
    """Dense mean-field solution with accumulated actions.

    psi(t) interpolates the integrated field; theta(t) gives continuously
    unwrapped site phases when phase tracking was enabled.  Actions are the
    totals over [t_i, t_f].
    """

    model: BoseHubbardModel
    t_i: float
    t_f: float
    _sol: object
    track_phases: bool
    with_tangent: bool = False
    tangent: TangentFrame | None = None
    caustic_flag: bool = field(default=False)

    @property
    def L(self) -> int:
        return self.model.L

    def _y(self, t):
        return self._sol.sol(t)

    def psi(self, t):
        y = self._y(t)
        L = self.L
        if np.ndim(t) == 0:
            return y[:L] + 1j * y[L : 2 * L]
        return (y[:L] + 1j * y[L : 2 * L]).T

    def theta(self, t):
        if not self.track_phases:
            raise MeanfieldError("phase tracking was disabled for this path")
        L = self.L
        y = self._y(t)
        out = y[2 * L + 2 : 3 * L + 2]
        return out if np.ndim(t) == 0 else out.T

    def occupations(self, t):
        return np.abs(self.psi(t)) ** 2 - 0.5

    @property
    def psi_i(self):
        return self.psi(self.t_i)

    @property
    def psi_f(self):
        return self.psi(self.t_f)

    @property
    def action_quadrature(self) -> float:
        L = self.L
        return float(self._y(self.t_f)[2 * L] - self._y(self.t_i)[2 * L])

    @property
    def action_fock(self) -> float:
        if not self.track_phases:
            raise MeanfieldError("phase tracking was disabled for this path")
        L = self.L
        return float(self._y(self.t_f)[2 * L + 1] - self._y(self.t_i)[2 * L + 1])

    @property
    def energy(self) -> float:
        return classical_hamiltonian(self.model, self.psi_i)

    @property
    def norm_drift(self) -> float:
        n0 = float(np.sum(np.abs(self.psi_i) ** 2))
        nf = float(np.sum(np.abs(self.psi_f) ** 2))
        return abs(nf - n0) / max(n0, 1e-300)

    @property
    def energy_drift(self) -> float:
        e0 = self.energy
        ef = classical_hamiltonian(self.model, self.psi_f)
        return abs(ef - e0) / max(abs(e0), 1.0)

    def monodromy(self, t) -> np.ndarray:
        if not self.with_tangent:
            raise MeanfieldError("tangent dynamics was not integrated for this path")
        L = self.L
        base = (3 * L + 2) if self.track_phases else (2 * L + 1)
        return self._y(t)[base : base + 4 * L * L].reshape(2 * L, 2 * L)


def _pack_rhs(model: BoseHubbardModel, track_phases: bool, with_tangent: bool):
    L = model.L
    hbar = model.hbar

    def rhs(t, y):
        psi = y[:L] + 1j * y[L : 2 * L]
        G = hamiltonian_gradient(model, psi)
        H = _classical_hamiltonian_complex(model, psi).real
        dx = G.imag / hbar
        dy = -G.real / hbar
        # hbar/(2b^2) p . dq/dt in b-free form: 2 hbar Im(psi) . Re(dpsi/dt)
        dR_quad = 2.0 * hbar * float(np.dot(y[L : 2 * L], dx)) - H
        out = [dx, dy, [dR_quad]]
        if track_phases:
            absq = np.abs(psi) ** 2
            dn = 2.0 * np.imag(np.conj(psi) * G) / hbar
            theta = y[2 * L + 2 : 3 * L + 2]
            dtheta = -np.real(G * np.conj(psi)) / (hbar * absq)
            dR_fock = hbar * float(np.dot(theta, dn)) - H
            out = [dx, dy, [dR_quad], [dR_fock], dtheta]
        if with_tangent:
            M = y[-4 * L * L :].reshape(2 * L, 2 * L)
            T = tangent_generator(model, psi)
            out.append((T @ M).ravel())
        return np.concatenate(out)

    return rhs


def integrate(
    model: BoseHubbardModel,
    psi0: np.ndarray,
    t_span,
    cfg: IntegratorConfig = IntegratorConfig(),
    track_phases: bool = True,
    theta0: np.ndarray | None = None,
    with_tangent: bool = False,
) -> MeanfieldPath:
    """Integrate the mean-field equations with dense output and action totals.

    theta0 fixes the initial unwrapped phases (defaults to arg(psi0)); raises
    MeanfieldError on step-size underflow.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if not np.all(np.isfinite(psi0)):
        raise MeanfieldError("non-finite initial field")
    t_i, t_f = float(t_span[0]), float(t_span[1])
    if not t_f > t_i:
        raise MeanfieldError("require t_f > t_i")
    L = model.L
    y0 = [psi0.real, psi0.imag, [0.0]]
    if track_phases:
        if np.min(np.abs(psi0)) < 1e-12:
            raise MeanfieldError("phase tracking needs nonvanishing site amplitudes")
        theta0 = np.angle(psi0) if theta0 is None else np.asarray(theta0, dtype=float)
        y0 += [[0.0], theta0]
    if with_tangent:
        y0.append(np.eye(2 * L).ravel())
    sol = solve_ivp(
        _pack_rhs(model, track_phases, with_tangent),
        (t_i, t_f),
        np.concatenate(y0),
        method=cfg.method,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
        dense_output=True,
    )
    if not sol.success:
        raise MeanfieldError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    path = MeanfieldPath(
        model=model, t_i=t_i, t_f=t_f, _sol=sol, track_phases=track_phases,
        with_tangent=with_tangent,
    )
    if with_tangent:
        path.tangent = TangentFrame(M=path.monodromy(t_f))
    return path


def integrate_with_tangent(
    model: BoseHubbardModel,
    psi0: np.ndarray,
    t_span,
    cfg: IntegratorConfig = IntegratorConfig(),
    track_phases: bool = True,
    theta0: np.ndarray | None = None,
) -> tuple[MeanfieldPath, TangentFrame]:
    """Field plus linearized (monodromy) dynamics; flags near-caustic frames."""
    path = integrate(
        model, psi0, t_span, cfg, track_phases=track_phases, theta0=theta0,
        with_tangent=True,
    )
    frame = path.tangent
    # near-singular dp/dp(t_i) signals a caustic of the quadrature problem
    sv = np.linalg.svd(frame.block_pp(), compute_uv=False)
    if sv[-1] < 1e-10 * max(sv[0], 1.0):
        path.caustic_flag = True
    return path, frame


def integrate_batch(
    model: BoseHubbardModel,
    psi0_batch: np.ndarray,
    times,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
) -> np.ndarray:
    """Evolve many initial fields at once; returns (len(times), B, L) fields.

    Shares one adaptive integration across the batch (on-site interactions
    only), which is how the Monte Carlo sampler stays fast.
    """
    if not model.onsite_only:
        raise MeanfieldError("batched integration supports on-site interactions only")
    psi0_batch = np.asarray(psi0_batch, dtype=complex)
    B, L = psi0_batch.shape
    h = model.hopping
    u = model.onsite_interactions()
    hbar = model.hbar
    times = np.atleast_1d(np.asarray(times, dtype=float))

    def rhs(t, y):
        psi = (y[: B * L] + 1j * y[B * L :]).reshape(B, L)
        G = psi @ h.T + u[None, :] * (np.abs(psi) ** 2 - 0.5) * psi
        dpsi = (-1j / hbar) * G
        return np.concatenate([dpsi.real.ravel(), dpsi.imag.ravel()])

    y0 = np.concatenate([psi0_batch.real.ravel(), psi0_batch.imag.ravel()])
    t_end = float(times.max())
    if t_end == 0.0:
        return np.broadcast_to(psi0_batch, (times.size, B, L)).copy()
    sol = solve_ivp(
        rhs, (0.0, t_end), y0, method="DOP853", rtol=rel_tol, atol=abs_tol,
        t_eval=times, dense_output=False,
    )
    if not sol.success:
        raise MeanfieldError(f"batched integration failed: {sol.message}")
    out = np.empty((times.size, B, L), dtype=complex)
    for it in range(times.size):
        y = sol.y[:, it]
        out[it] = (y[: B * L] + 1j * y[B * L :]).reshape(B, L)
    return out
