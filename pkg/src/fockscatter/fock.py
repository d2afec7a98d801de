"""Fock basis enumeration and numerically exact quantum evolution.

This module is the ground truth against which every semiclassical quantity is
measured.  Hamiltonians are assembled as sparse matrices from ladder-operator
matrix elements; propagation uses dense scaling-and-squaring exponentiation up
to dimension DENSE_DIM_MAX and an adaptive Lanczos-Krylov stepper beyond.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg
import scipy.sparse

from .model import BoseHubbardModel

DENSE_DIM_MAX = 512
DEFAULT_DIM_CAP = 200_000
KRYLOV_DIM = 30


class FockError(ValueError):
    pass


class KrylovBreakdown(RuntimeError):
    """Krylov propagation failed to reach the requested accuracy."""


@dataclass(frozen=True)
class FockBasis:
    """All occupation vectors of N bosons on L sites, first site descending."""

    L: int
    N: int
    states: np.ndarray  # (dim, L) int array
    index: dict

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def index_of(self, n) -> int:
        key = tuple(int(x) for x in n)
        if key not in self.index:
            raise FockError(f"occupation {key} not in basis (L={self.L}, N={self.N})")
        return self.index[key]


def enumerate_basis(L: int, N: int, dim_cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    """Ordered Fock basis for N particles on L sites.

    Ordering is lexicographic with the first-site occupation descending, e.g.
    (2,0), (1,1), (0,2) for L=2, N=2.
    """
    if L < 1 or N < 0:
        raise FockError(f"invalid basis parameters L={L}, N={N}")
    dim = comb(N + L - 1, L - 1)
    if dim > dim_cap:
        raise FockError(f"basis dimension {dim} exceeds cap {dim_cap}")
    states = np.zeros((dim, L), dtype=np.int64)
    row = 0

    def fill(site: int, remaining: int, prefix: list):
        nonlocal row
        if site == L - 1:
            states[row, :] = prefix + [remaining]
            row += 1
            return
        for n in range(remaining, -1, -1):
            fill(site + 1, remaining - n, prefix + [n])

    fill(0, N, [])
    index = {tuple(int(x) for x in s): k for k, s in enumerate(states)}
    states.setflags(write=False)
    return FockBasis(L=L, N=N, states=states, index=index)


def build_hamiltonian(model: BoseHubbardModel, basis: FockBasis) -> scipy.sparse.csr_matrix:
    """Sparse matrix of the Bose-Hubbard Hamiltonian in the given basis.

    H = sum_{ll'} h_{ll'} a+_l a_l' + (1/2) sum U_{klmn} a+_k a+_l a_m a_n.
    """
    if model.L != basis.L:
        raise FockError(f"model has L={model.L} but basis has L={basis.L}")
    h = model.hopping
    L, dim = basis.L, basis.dim
    states = basis.states
    rows, cols, vals = [], [], []

    # one-body part
    n_arr = states.astype(float)
    diag = n_arr @ np.diag(h).real
    for l in range(L):
        for lp in range(L):
            if l == lp or h[l, lp] == 0:
                continue
            # a+_l a_lp : move one particle lp -> l
            movable = states[:, lp] > 0
            src = np.nonzero(movable)[0]
            if src.size == 0:
                continue
            amp = np.sqrt((states[src, l] + 1.0) * states[src, lp]) * h[l, lp]
            new_states = states[src].copy()
            new_states[:, lp] -= 1
            new_states[:, l] += 1
            dst = np.fromiter(
                (basis.index[tuple(int(x) for x in s)] for s in new_states),
                dtype=np.int64,
                count=src.size,
            )
            rows.append(dst)
            cols.append(src)
            vals.append(amp)

    # interaction part, generic four-index action on occupation vectors
    for (k, l, m, n), u in model.interaction.items():
        if u == 0.0:
            continue
        if k == l == m == n:
            occ = states[:, k].astype(float)
            diag = diag + 0.5 * u * occ * (occ - 1.0)
            continue
        # apply a_n, a_m, a+_l, a+_k in sequence
        work = states.copy()
        amp = np.full(dim, 0.5 * u, dtype=complex)
        ok = np.ones(dim, dtype=bool)
        for op, site in (("a", n), ("a", m), ("ad", l), ("ad", k)):
            if op == "a":
                ok &= work[:, site] > 0
                amp = amp * np.sqrt(np.maximum(work[:, site], 0))
                work[:, site] -= 1
            else:
                work[:, site] += 1
                amp = amp * np.sqrt(work[:, site])
        src = np.nonzero(ok)[0]
        if src.size == 0:
            continue
        dst = np.fromiter(
            (basis.index[tuple(int(x) for x in s)] for s in work[src]),
            dtype=np.int64,
            count=src.size,
        )
        rows.append(dst)
        cols.append(src)
        vals.append(amp[src])

    rows.append(np.arange(dim))
    cols.append(np.arange(dim))
    vals.append(diag.astype(complex))
    H = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    herm_defect = abs(H - H.conj().T).max()
    if herm_defect > 1e-12:
        raise FockError(f"assembled Hamiltonian not Hermitian (defect {herm_defect:.2e})")
    return H


def _lanczos_step(H, v, dt, hbar, m=KRYLOV_DIM):
    """One Lanczos exp(-i H dt / hbar) v step; returns (w, error_estimate)."""
    dim = v.shape[0]
    m = min(m, dim)
    V = np.zeros((dim, m + 1), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m + 1)
    nrm = np.linalg.norm(v)
    V[:, 0] = v / nrm
    for j in range(m):
        w = H @ V[:, j]
        if j > 0:
            w -= beta[j] * V[:, j - 1]
        alpha[j] = np.real(np.vdot(V[:, j], w))
        w -= alpha[j] * V[:, j]
        # full reorthogonalization keeps norm drift at round-off level
        w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        beta[j + 1] = np.linalg.norm(w)
        if beta[j + 1] < 1e-14:
            m = j + 1
            break
        V[:, j + 1] = w / beta[j + 1]
    T = np.diag(alpha[:m]) + np.diag(beta[1:m], 1) + np.diag(beta[1:m], -1)
    eT = scipy.linalg.expm(-1j * T * dt / hbar)
    coeff = eT[:, 0]
    w = nrm * (V[:, :m] @ coeff)
    err = float(nrm * beta[m] * abs(coeff[m - 1])) if m < dim else 0.0
    return w, err


def evolve(
    state: np.ndarray,
    model: BoseHubbardModel,
    basis: FockBasis,
    t: float,
    tol: float = 1e-12,
    H: scipy.sparse.spmatrix | None = None,
) -> np.ndarray:
    """Apply exp(-i H t / hbar) to ``state``.

    Dense scaling-and-squaring below DENSE_DIM_MAX, adaptive Lanczos above.
    A prebuilt Hamiltonian may be passed to amortize construction.
    """
    state = np.asarray(state, dtype=complex)
    if not np.all(np.isfinite(state)) or not np.isfinite(t):
        raise FockError("non-finite input to evolve")
    if t < 0 or tol <= 0:
        raise FockError("require t >= 0 and tol > 0")
    if t == 0:
        return state.copy()
    if H is None:
        H = build_hamiltonian(model, basis)
    if basis.dim <= DENSE_DIM_MAX:
        K = scipy.linalg.expm(-1j * H.toarray() * t / model.hbar)
        return K @ state
    # adaptive Lanczos substepping
    remaining = t
    dt = t
    v = state.copy()
    max_halvings = 60
    while remaining > 0:
        dt = min(dt, remaining)
        for attempt in range(max_halvings + 1):
            w, err = _lanczos_step(H, v, dt, model.hbar)
            if err <= tol * max(1.0, np.linalg.norm(v)) * (dt / t):
                break
            dt /= 2
        else:
            raise KrylovBreakdown(
                f"no convergent Krylov step at t_remaining={remaining:.3e}, err={err:.3e}"
            )
        v = w
        remaining -= dt
        if err < 0.1 * tol * (dt / t):
            dt *= 2
    return v


def transition_probability_exact(
    model: BoseHubbardModel,
    n_i,
    n_f,
    t: float,
    basis: FockBasis | None = None,
    tol: float = 1e-12,
) -> float:
    """|<n_f| exp(-i H t / hbar) |n_i>|^2."""
    n_i = np.asarray(n_i, dtype=int)
    n_f = np.asarray(n_f, dtype=int)
    if basis is None:
        basis = enumerate_basis(len(n_i), int(n_i.sum()))
    ki = basis.index_of(n_i)
    kf = basis.index_of(n_f)
    psi0 = np.zeros(basis.dim, dtype=complex)
    psi0[ki] = 1.0
    psi_t = evolve(psi0, model, basis, t, tol=tol)
    return float(np.abs(psi_t[kf]) ** 2)


def transition_probabilities_all(
    model: BoseHubbardModel,
    basis: FockBasis,
    n_i,
    times,
    H: scipy.sparse.spmatrix | None = None,
) -> np.ndarray:
    """Exact P(n_f, t; n_i) for every basis state, shape (len(times), dim).

    Uses one eigendecomposition for dense-scale bases, so many times come at
    marginal cost; falls back to repeated Krylov evolution otherwise.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ki = basis.index_of(n_i)
    if H is None:
        H = build_hamiltonian(model, basis)
    if basis.dim <= 4 * DENSE_DIM_MAX:
        evals, evecs = np.linalg.eigh(H.toarray())
        c0 = evecs.conj().T[:, ki]
        out = np.empty((times.size, basis.dim))
        for it, t in enumerate(times):
            amp = evecs @ (np.exp(-1j * evals * t / model.hbar) * c0)
            out[it] = np.abs(amp) ** 2
        return out
    psi0 = np.zeros(basis.dim, dtype=complex)
    psi0[ki] = 1.0
    out = np.empty((times.size, basis.dim))
    for it, t in enumerate(times):
        out[it] = np.abs(evolve(psi0, model, basis, t, H=H)) ** 2
    return out
