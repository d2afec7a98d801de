"""Bose-Hubbard model definitions, disorder ensembles, and time-reversal analysis.

A model is fully specified by its one-body hopping matrix (on-site energies on
the diagonal), a sparse four-index interaction tensor, and hbar.  Disorder
enters only through the diagonal of the hopping matrix; realizations are
deterministic functions of (master_seed, index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
TRS_TOL = 1e-10


class ModelError(ValueError):
    """Invalid model construction input."""


@dataclass(frozen=True)
class BoseHubbardModel:
    """Bose-Hubbard system with hopping h_{ll'} and quartic couplings U_{klmn}.

    hopping : (L, L) complex Hermitian matrix; diagonal entries are the
        on-site energies.
    interaction : map (k, l, m, n) -> real coefficient, entering the
        Hamiltonian as (1/2) U_{klmn} a+_k a+_l a_m a_n.  Hermiticity demands
        U*_{klmn} = U_{mnkl} and U_{klmn} = U_{lkmn} = U_{klnm}; every stored
        tensor must contain all its symmetry partners.
    hbar : action scale, default 1.
    """

    hopping: np.ndarray
    interaction: dict[tuple[int, int, int, int], float] = field(default_factory=dict)
    hbar: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.hopping, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
            raise ModelError(f"hopping must be a square LxL matrix, got shape {h.shape}")
        if np.max(np.abs(h - h.conj().T)) > HERMITICITY_TOL:
            raise ModelError("hopping matrix is not Hermitian")
        h.setflags(write=False)
        object.__setattr__(self, "hopping", h)
        if self.hbar <= 0:
            raise ModelError("hbar must be positive")
        L = h.shape[0]
        U = dict(self.interaction)
        for (k, l, m, n), u in U.items():
            if not all(0 <= i < L for i in (k, l, m, n)):
                raise ModelError(f"interaction index {(k, l, m, n)} out of range for L={L}")
            for partner in ((m, n, k, l), (l, k, m, n), (k, l, n, m)):
                if abs(U.get(partner, 0.0) - u) > 1e-12:
                    raise ModelError(
                        f"interaction symmetry violated between {(k, l, m, n)} and {partner}"
                    )
        object.__setattr__(self, "interaction", U)

    @property
    def L(self) -> int:
        return self.hopping.shape[0]

    @property
    def onsite_only(self) -> bool:
        return all(k == l == m == n for (k, l, m, n) in self.interaction)

    def onsite_interactions(self) -> np.ndarray:
        """Vector of U_llll couplings (zeros where absent)."""
        u = np.zeros(self.L)
        for (k, l, m, n), val in self.interaction.items():
            if k == l == m == n:
                u[k] = val
        return u

    def with_onsite_energies(self, eps: np.ndarray) -> "BoseHubbardModel":
        h = np.array(self.hopping, dtype=complex)
        np.fill_diagonal(h, np.asarray(eps, dtype=float))
        return BoseHubbardModel(h, self.interaction, self.hbar)

    def checksum(self) -> str:
        """Stable hex digest of the full model content."""
        import hashlib

        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.hopping).tobytes())
        for key in sorted(self.interaction):
            m.update(repr((key, self.interaction[key])).encode())
        m.update(repr(self.hbar).encode())
        return m.hexdigest()


@dataclass(frozen=True)
class DisorderSpec:
    """Uniform on-site disorder of width W on [-W/2, W/2]."""

    width: float
    master_seed: int
    realization_count: int
    distribution: str = "uniform"

    def __post_init__(self):
        if self.width < 0:
            raise ModelError("disorder width must be >= 0")
        if self.distribution != "uniform":
            raise ModelError(f"unsupported disorder distribution {self.distribution!r}")
        if self.realization_count < 1:
            raise ModelError("realization_count must be >= 1")


@dataclass(frozen=True)
class GaugeReport:
    """Result of the time-reversal-symmetry analysis.

    When ``is_trs`` holds, ``phases`` is a site-phase vector chi such that
    exp(i chi_l) h_{ll'} exp(-i chi_{l'}) is real to within TRS_TOL.
    """

    is_trs: bool
    phases: np.ndarray
    max_residual_imag: float


def build_model(config: dict) -> BoseHubbardModel:
    """Build a chain or ring model from a structured description.

    Recognized keys: L, geometry ('chain'|'ring'), J (hopping amplitude >= 0),
    flux (phase per bond, ring only; optional), U (on-site interaction, scalar
    or per-site), eps (on-site energies, scalar or per-site), hbar.
    Alternatively an explicit 'hopping' matrix may be given, which overrides
    the geometric construction.
    """
    L = int(config["L"])
    if L < 1:
        raise ModelError("L must be >= 1")
    hbar = float(config.get("hbar", 1.0))

    if "hopping" in config:
        h = np.asarray(config["hopping"], dtype=complex)
    else:
        geometry = config.get("geometry", "chain")
        J = float(config.get("J", 1.0))
        if J < 0:
            raise ModelError("hopping amplitude J must be >= 0")
        flux = float(config.get("flux", 0.0))
        h = np.zeros((L, L), dtype=complex)
        amp = -J * np.exp(1j * flux)
        for l in range(L - 1):
            h[l, l + 1] = amp
            h[l + 1, l] = np.conj(amp)
        if geometry == "ring":
            if L > 2:
                h[L - 1, 0] = amp
                h[0, L - 1] = np.conj(amp)
        elif geometry != "chain":
            raise ModelError(f"unknown geometry {geometry!r}")

    eps = np.broadcast_to(np.asarray(config.get("eps", 0.0), dtype=float), (L,))
    h = np.array(h)
    if "hopping" in config:
        np.fill_diagonal(h, np.diag(h).real + eps)
    else:
        np.fill_diagonal(h, eps)

    u = np.broadcast_to(np.asarray(config.get("U", 0.0), dtype=float), (L,))
    interaction = {(l, l, l, l): float(u[l]) for l in range(L) if u[l] != 0.0}
    return BoseHubbardModel(h, interaction, hbar)


def disorder_energies(spec: DisorderSpec, index: int, L: int) -> np.ndarray:
    """Deterministic on-site energy draw for realization ``index``."""
    if not 0 <= index < spec.realization_count:
        raise ModelError(
            f"realization index {index} out of range [0, {spec.realization_count})"
        )
    rng = np.random.default_rng(np.random.SeedSequence((spec.master_seed, index)))
    return rng.uniform(-spec.width / 2, spec.width / 2, size=L)


def sample_disorder(model: BoseHubbardModel, spec: DisorderSpec, index: int) -> BoseHubbardModel:
    """Copy of ``model`` with on-site energies replaced by a disorder draw."""
    return model.with_onsite_energies(disorder_energies(spec, index, model.L))


def analyze_time_reversal(model: BoseHubbardModel) -> GaugeReport:
    """Decide whether a site-local gauge makes the hopping matrix real.

    Phases are propagated along a BFS spanning tree of the hopping graph;
    the model is time-reversal symmetric iff every non-tree bond closes a
    cycle whose accumulated flux is 0 or pi (mod 2pi).  Chains are therefore
    always symmetric.
    """
    h = model.hopping
    L = model.L
    chi = np.zeros(L)
    visited = np.zeros(L, dtype=bool)
    adj = [
        [l2 for l2 in range(L) if l2 != l and abs(h[l, l2]) > 0.0]
        for l in range(L)
    ]
    for root in range(L):
        if visited[root]:
            continue
        visited[root] = True
        queue = [root]
        while queue:
            u = queue.pop(0)
            for v in adj[u]:
                if not visited[v]:
                    visited[v] = True
                    # want arg(h_uv) + chi_u - chi_v = 0 (mod pi)
                    chi[v] = chi[u] + np.angle(h[u, v])
                    queue.append(v)
    transformed = np.exp(1j * chi)[:, None] * h * np.exp(-1j * chi)[None, :]
    # realness up to a sign per bond: fold residual phases into [0, pi)
    resid = np.abs(transformed.imag)
    max_imag = float(resid.max()) if L > 0 else 0.0
    is_trs = max_imag < TRS_TOL
    return GaugeReport(is_trs=is_trs, phases=chi, max_residual_imag=max_imag)


def gauge_transform(model: BoseHubbardModel, chi: np.ndarray) -> BoseHubbardModel:
    """Apply the site-phase gauge exp(i chi_l) to the hopping matrix."""
    chi = np.asarray(chi, dtype=float)
    h = np.exp(1j * chi)[:, None] * model.hopping * np.exp(-1j * chi)[None, :]
    if np.max(np.abs(h.imag)) < TRS_TOL:
        h = h.real.astype(complex)
    return BoseHubbardModel(h, model.interaction, model.hbar)
