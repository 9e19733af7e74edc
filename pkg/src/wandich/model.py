"""Tight-binding Bloch Hamiltonians and their occupied-band spectral projectors.

k-points live in lattice coordinates (k1, k2) with the dual lattice generated
by (1, 0) and (0, 1); all built-in Hamiltonians are 1-periodic in each
coordinate (periodic gauge, hopping phases absorbed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import (
    ConfigError,
    CovarianceMismatch,
    GapClosure,
    NonCommutingGenerators,
    NonCoprimeFlux,
)

DEFAULT_GAP_TOL = 1e-8

HamFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BlochModel:
    """A Bloch Hamiltonian k -> H(k) plus the occupied-band window.

    Parameters
    ----------
    dim : int
        Internal Hilbert-space dimension n (number of orbitals).
    lattice_basis : (2, 2) array
        Rows are the real-space lattice vectors a1, a2 in Cartesian units.
    hamiltonian : callable
        Maps an array of k-points with shape (..., 2) to Hermitian matrices
        of shape (..., dim, dim).  Must be 1-periodic in each k-coordinate.
    occupied : tuple of int
        Contiguous, ascending band indices (0-based, sorted-eigenvalue order).
    params : dict
        Named model parameters, recorded for reports.
    name : str
        Short model tag used in file headers and JSON output.
    """

    dim: int
    lattice_basis: np.ndarray
    hamiltonian: HamFn
    occupied: tuple[int, ...]
    params: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        occ = tuple(int(a) for a in self.occupied)
        if len(occ) == 0 or len(occ) >= self.dim:
            raise ConfigError(f"occupied window must satisfy 1 <= m < dim, got {occ}")
        if any(b - a != 1 for a, b in zip(occ, occ[1:])):
            raise ConfigError(f"occupied band indices must be contiguous, got {occ}")
        if occ[0] < 0 or occ[-1] >= self.dim:
            raise ConfigError(f"occupied indices out of range for dim={self.dim}: {occ}")
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "lattice_basis", np.asarray(self.lattice_basis, float))

    @property
    def n_occupied(self) -> int:
        return len(self.occupied)

    def h(self, k) -> np.ndarray:
        """Bloch Hamiltonian at a single k-point, shape (dim, dim)."""
        return self.hamiltonian(np.asarray(k, float))

    def h_many(self, ks) -> np.ndarray:
        """Bloch Hamiltonians at a batch of k-points, shape (..., dim, dim)."""
        return self.hamiltonian(np.asarray(ks, float))


@dataclass(frozen=True)
class GapReport:
    """Result of a spectral-gap scan over a uniform mesh."""

    min_gap: float
    argmin_k: tuple[float, float]
    mesh_size: int


@dataclass(frozen=True)
class ProjectorFamily:
    """Periodic family k -> P(k) of rank-m orthogonal projectors.

    ``gap_floor`` is the certified minimum spectral gap over the reference
    mesh used at construction (0.0 for families not backed by a model).
    """

    dim: int
    rank: int
    gap_floor: float
    _eval_many: Callable[[np.ndarray], np.ndarray]

    def eval(self, k) -> np.ndarray:
        return self._eval_many(np.asarray(k, float))

    def eval_many(self, ks) -> np.ndarray:
        return self._eval_many(np.asarray(ks, float))

    @classmethod
    def from_model(
        cls,
        model: BlochModel,
        gap_tol: float = DEFAULT_GAP_TOL,
        cert_mesh: int = 48,
    ) -> "ProjectorFamily":
        """Spectral-projector family of a model, gap-certified on a reference mesh.

        Raises GapClosure if the occupied window is not isolated (gap below
        ``gap_tol``) somewhere on the certification mesh.  The default mesh
        size is a multiple of 6 so honeycomb Dirac points are sampled exactly.
        """
        report = check_gap(model, cert_mesh)
        if report.min_gap < gap_tol:
            raise GapClosure(report.argmin_k, report.min_gap)

        def _eval(ks: np.ndarray) -> np.ndarray:
            return spectral_projectors(model, ks, gap_tol=gap_tol)

        return cls(
            dim=model.dim,
            rank=model.n_occupied,
            gap_floor=report.min_gap,
            _eval_many=_eval,
        )

    @classmethod
    def constant(cls, P0) -> "ProjectorFamily":
        """The k-independent family P(k) = P0 (useful as a smoke-test fixture)."""
        P0 = np.asarray(P0, complex)
        rank = int(round(np.trace(P0).real))

        def _eval(ks: np.ndarray) -> np.ndarray:
            shape = ks.shape[:-1] + P0.shape
            return np.broadcast_to(P0, shape).copy()

        return cls(dim=P0.shape[0], rank=rank, gap_floor=1.0, _eval_many=_eval)


@dataclass(frozen=True)
class CovariantFamily:
    """Projector family covariant under unitaries tau_j instead of periodic:
    P(k + e_j) = tau_j P(k) tau_j^{-1}."""

    dim: int
    rank: int
    eval_many: Callable[[np.ndarray], np.ndarray]
    taus: tuple[np.ndarray, np.ndarray]


def build_haldane(t1: float, t2: float, phi: float, M: float) -> BlochModel:
    """Honeycomb model with complex next-nearest-neighbor hoppings.

    Two orbitals per cell; nearest-neighbor hopping t1, next-nearest t2 with
    Peierls phase phi (opposite sign on the two sublattices), staggered onsite
    term +/- M.  The lower band carries Chern number -1 for phi = pi/2,
    0 < M < 3*sqrt(3)*t2 under the dk1^dk2 > 0 orientation used throughout.
    """
    if t1 == 0:
        raise ConfigError("build_haldane requires t1 != 0")

    def _ham(ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, float)
        w1 = 2.0 * np.pi * ks[..., 0]
        w2 = 2.0 * np.pi * ks[..., 1]
        f = t1 * (1.0 + np.exp(-1j * w1) + np.exp(-1j * w2))
        # next-nearest-neighbor triangle a1, a2-a1, -a2
        sum_cos = np.cos(w1) + np.cos(w2 - w1) + np.cos(w2)
        sum_sin = np.sin(w1) + np.sin(w2 - w1) - np.sin(w2)
        h = np.zeros(ks.shape[:-1] + (2, 2), complex)
        h[..., 0, 0] = M + 2.0 * t2 * (np.cos(phi) * sum_cos + np.sin(phi) * sum_sin)
        h[..., 1, 1] = -M + 2.0 * t2 * (np.cos(phi) * sum_cos - np.sin(phi) * sum_sin)
        h[..., 0, 1] = f
        h[..., 1, 0] = np.conj(f)
        return h

    return BlochModel(
        dim=2,
        lattice_basis=np.array([[1.0, 0.0], [0.5, 0.5 * math.sqrt(3.0)]]),
        hamiltonian=_ham,
        occupied=(0,),
        params={"t1": t1, "t2": t2, "phi": phi, "M": M},
        name="haldane",
    )


def build_hofstadter(p: int, q: int) -> BlochModel:
    """Square-lattice Harper model at rational flux p/q per plaquette.

    The magnetic unit cell holds q sites; H(k) is the standard q x q Harper
    matrix, periodic in both reduced momenta.  The lowest band, when isolated,
    carries the Chern number solving p*c = 1 (mod q) with |c| <= q/2.
    """
    p, q = int(p), int(q)
    if q < 2 or math.gcd(p, q) != 1:
        raise NonCoprimeFlux(f"flux p/q = {p}/{q} requires gcd(p, q) = 1 and q >= 2")

    js = np.arange(q)

    def _ham(ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, float)
        w1 = 2.0 * np.pi * ks[..., 0]
        w2 = 2.0 * np.pi * ks[..., 1]
        h = np.zeros(ks.shape[:-1] + (q, q), complex)
        diag = 2.0 * np.cos(w2[..., None] + 2.0 * np.pi * p * js / q)
        h[..., js, js] = diag
        hop = np.zeros(ks.shape[:-1] + (q, q), complex)
        for j in range(q - 1):
            hop[..., j, j + 1] = 1.0
        hop[..., q - 1, 0] = hop[..., q - 1, 0] + np.exp(-1j * w1)
        return h + hop + np.conj(np.swapaxes(hop, -1, -2))

    return BlochModel(
        dim=q,
        lattice_basis=np.eye(2),
        hamiltonian=_ham,
        occupied=(0,),
        params={"p": p, "q": q},
        name="hofstadter",
    )


def load_matrix_model(path, occupied=(0,), lattice_basis=None) -> BlochModel:
    """Read hopping matrices from a text file: one row ``l1 l2 i j re im`` per
    entry of T_lambda, building H(k) = sum_lambda exp(2 pi i k.lambda) T_lambda.

    Hermiticity T_{-lambda} = T_lambda^dagger is validated to 1e-12.
    """
    hops: dict[tuple[int, int], list[tuple[int, int, complex]]] = {}
    dim = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ConfigError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            l1, l2, i, j = (int(x) for x in parts[:4])
            re, im = (float(x) for x in parts[4:])
            hops.setdefault((l1, l2), []).append((i, j, complex(re, im)))
            dim = max(dim, i + 1, j + 1)
    if not hops:
        raise ConfigError(f"{path}: no hopping entries found")

    mats = {}
    for lam, entries in hops.items():
        T = np.zeros((dim, dim), complex)
        for i, j, v in entries:
            T[i, j] += v
        mats[lam] = T
    for (l1, l2), T in mats.items():
        T_rev = mats.get((-l1, -l2))
        if T_rev is None or np.max(np.abs(T_rev - T.conj().T)) > 1e-12:
            raise ConfigError(
                f"{path}: Hermiticity violated, T({-l1},{-l2}) != T({l1},{l2})^dagger"
            )

    lams = np.array(sorted(mats.keys()))
    stack = np.stack([mats[tuple(l)] for l in lams])

    def _ham(ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, float)
        phases = np.exp(2j * np.pi * (ks[..., None, :] @ lams.T.astype(float))[..., 0, :])
        return np.einsum("...l,lij->...ij", phases, stack)

    basis = np.eye(2) if lattice_basis is None else np.asarray(lattice_basis, float)
    return BlochModel(
        dim=dim,
        lattice_basis=basis,
        hamiltonian=_ham,
        occupied=tuple(occupied),
        params={},
        name="matrixfile",
    )


def _local_gap(evals: np.ndarray, occupied: tuple[int, ...]) -> np.ndarray:
    """Distance between the occupied eigenvalue window and the rest, batched."""
    lo, hi = occupied[0], occupied[-1]
    n = evals.shape[-1]
    gap = np.full(evals.shape[:-1], np.inf)
    if hi + 1 < n:
        gap = np.minimum(gap, evals[..., hi + 1] - evals[..., hi])
    if lo > 0:
        gap = np.minimum(gap, evals[..., lo] - evals[..., lo - 1])
    return gap


def spectral_projectors(
    model: BlochModel, ks, gap_tol: float = DEFAULT_GAP_TOL
) -> np.ndarray:
    """Occupied-band spectral projectors P(k) for a batch of k-points.

    P(k) = sum_{a in occupied} |u_a(k)><u_a(k)| from the sorted Hermitian
    eigendecomposition; raises GapClosure if the window is not isolated by
    at least ``gap_tol`` at any requested point.
    """
    ks = np.asarray(ks, float)
    h = model.h_many(ks)
    if model.dim == 2 and model.occupied == (0,):
        # closed-form rank-1 projector for two-band models (hot path)
        a = h[..., 0, 0].real
        b = h[..., 1, 1].real
        c = h[..., 0, 1]
        r = np.sqrt(0.25 * (a - b) ** 2 + np.abs(c) ** 2)
        gap = 2.0 * r
        if np.min(gap) < gap_tol:
            idx = np.unravel_index(np.argmin(gap), gap.shape) if gap.ndim else ()
            raise GapClosure(ks[idx] if gap.ndim else ks, np.min(gap))
        mean = 0.5 * (a + b)
        eye = np.eye(2)
        P = ((mean + r)[..., None, None] * eye - h) / (2.0 * r)[..., None, None]
        return P

    evals, evecs = np.linalg.eigh(h)
    gap = _local_gap(evals, model.occupied)
    if np.min(gap) < gap_tol:
        idx = np.unravel_index(np.argmin(gap), gap.shape) if gap.ndim else ()
        raise GapClosure(ks[idx] if gap.ndim else ks, np.min(gap))
    occ = evecs[..., :, model.occupied[0] : model.occupied[-1] + 1]
    return occ @ np.conj(np.swapaxes(occ, -1, -2))


def spectral_projector(model: BlochModel, k, gap_tol: float = DEFAULT_GAP_TOL) -> np.ndarray:
    """Occupied-band spectral projector at a single k-point."""
    return spectral_projectors(model, np.asarray(k, float), gap_tol=gap_tol)


def occupied_frames(model: BlochModel, ks) -> np.ndarray:
    """Orthonormal occupied eigenvector frames, shape (..., dim, m).

    The per-point gauge is whatever the eigensolver returns; use only in
    gauge-invariant expressions (e.g. overlap-determinant link variables).
    """
    ks = np.asarray(ks, float)
    _, evecs = np.linalg.eigh(model.h_many(ks))
    return evecs[..., :, model.occupied[0] : model.occupied[-1] + 1]


def check_gap(model: BlochModel, mesh_size: int) -> GapReport:
    """Minimum occupied-window gap over a uniform mesh_size x mesh_size grid.

    The scan grid is row-major and independent of the frame-construction
    meshes (odd sizes are allowed here).
    """
    N = int(mesh_size)
    if N < 2:
        raise ConfigError(f"check_gap requires mesh_size >= 2, got {N}")
    axis = np.arange(N) / N - 0.5
    k1, k2 = np.meshgrid(axis, axis, indexing="ij")
    ks = np.stack([k1, k2], axis=-1)
    evals = np.linalg.eigvalsh(model.h_many(ks))
    gap = _local_gap(evals, model.occupied)
    flat = np.argmin(gap)
    i, j = np.unravel_index(flat, gap.shape)
    return GapReport(
        min_gap=float(gap[i, j]),
        argmin_k=(float(axis[i]), float(axis[j])),
        mesh_size=N,
    )


def periodize(family: CovariantFamily, generators) -> ProjectorFamily:
    """Conjugate a covariant family into a periodic one via V(k) = exp(-i sum k_j M_j).

    The Hermitian generators must commute pairwise and satisfy
    exp(i M_j) = tau_j; the returned family obeys P(k + lambda) = P(k).
    """
    Ms = [np.asarray(M, complex) for M in generators]
    if len(Ms) != 2:
        raise ConfigError("periodize expects exactly two generators")
    comm = Ms[0] @ Ms[1] - Ms[1] @ Ms[0]
    if np.linalg.norm(comm) > 1e-10:
        raise NonCommutingGenerators(
            f"||[M1, M2]||_F = {np.linalg.norm(comm):.3e} exceeds 1e-10"
        )
    for j, (M, tau) in enumerate(zip(Ms, family.taus), start=1):
        rebuilt = expm(1j * M)
        if np.linalg.norm(rebuilt - np.asarray(tau, complex)) > 1e-8:
            raise CovarianceMismatch(f"exp(i M_{j}) does not reproduce tau_{j}")

    M1, M2 = Ms

    def _eval(ks: np.ndarray) -> np.ndarray:
        ks = np.atleast_2d(np.asarray(ks, float))
        flat = ks.reshape(-1, 2)
        P = family.eval_many(flat)
        out = np.empty_like(P)
        for idx, k in enumerate(flat):
            V = expm(-1j * (k[0] * M1 + k[1] * M2))
            out[idx] = V @ P[idx] @ V.conj().T
        shape = np.asarray(ks, float).shape[:-1] + (family.dim, family.dim)
        return out.reshape(shape)

    def _eval_dispatch(ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, float)
        if ks.ndim == 1:
            return _eval(ks[None])[0]
        return _eval(ks)

    return ProjectorFamily(
        dim=family.dim, rank=family.rank, gap_floor=0.0, _eval_many=_eval_dispatch
    )
