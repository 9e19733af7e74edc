"""Finite-dimensional (Galerkin) reduction of a projector family and the
frame/projector truncation diagnostics.

V_n is the span of the first n ambient coordinates (the model's declared
orbital order); the reduced family is the orthogonal projector onto the image
of the occupied fibers under the coordinate truncation, a faithful scale
model of compressing an infinite ambient space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GramTooSmall, TruncationNotInjective
from .frames import Frame, gram_schmidt
from .kmesh import KMesh
from .model import ProjectorFamily
from .topology import chern_fhs

HARD_INJECTIVITY = 1e-6
SOFT_INJECTIVITY = 1e-3


@dataclass(frozen=True)
class TruncationReport:
    n: int
    min_injectivity: float
    chern_preserved: bool | None  # None when the certificate is too weak
    projector_h1_distance: float

    @property
    def certified(self) -> bool:
        return self.min_injectivity >= SOFT_INJECTIVITY


def _occupied_vectors(family: ProjectorFamily, ks: np.ndarray) -> np.ndarray:
    P = family.eval_many(ks)
    _, vecs = np.linalg.eigh(P)
    return vecs[..., :, P.shape[-1] - family.rank :]


def truncate_family(
    family: ProjectorFamily,
    n: int,
    mesh: KMesh,
    check_chern: bool = True,
) -> tuple[ProjectorFamily, TruncationReport]:
    """Compress the family onto the first n coordinates.

    The reduced projector at k is the orthogonal projector (inside C^n) onto
    the image of Ran P(k) under coordinate truncation; the injectivity
    certificate is the smallest singular value of the truncated occupied
    frames over the mesh.  Below 1e-6 the truncation is rejected
    (TruncationNotInjective); below 1e-3 the output is flagged non-certified
    and the Chern comparison is skipped.
    """
    n = int(n)
    if not 1 <= n <= family.dim:
        raise ConfigError(f"truncation dimension must be in [1, {family.dim}], got {n}")
    m = family.rank
    if n < m:
        raise TruncationNotInjective(
            f"truncation dimension {n} below the occupied rank {m}"
        )

    psi = _occupied_vectors(family, mesh.points)  # (N, N, dim, m)
    sigma = np.linalg.svd(psi[..., :n, :], compute_uv=False)
    min_inj = float(sigma[..., -1].min())
    if min_inj < HARD_INJECTIVITY:
        raise TruncationNotInjective(
            f"min singular value {min_inj:.3e} < {HARD_INJECTIVITY:g}"
        )

    def _eval(ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, float)
        vec = _occupied_vectors(family, ks)[..., :n, :]
        u, _, _ = np.linalg.svd(vec, full_matrices=False)
        return u @ np.conj(np.swapaxes(u, -1, -2))

    reduced = ProjectorFamily(dim=n, rank=m, gap_floor=0.0, _eval_many=_eval)

    chern_preserved = None
    if check_chern and min_inj >= SOFT_INJECTIVITY:
        chern_preserved = chern_fhs(reduced, mesh) == chern_fhs(family, mesh)

    report = TruncationReport(
        n=n,
        min_injectivity=min_inj,
        chern_preserved=chern_preserved,
        projector_h1_distance=projector_h1_distance(
            embed_family(reduced, family.dim), family, mesh
        ),
    )
    return reduced, report


def embed_family(family: ProjectorFamily, dim: int) -> ProjectorFamily:
    """View a low-dimensional family inside a larger ambient space (zero
    padding on the extra coordinates)."""
    if dim < family.dim:
        raise ConfigError("embedding dimension smaller than the family's")
    small = family.dim

    def _eval(ks: np.ndarray) -> np.ndarray:
        P = family.eval_many(ks)
        out = np.zeros(P.shape[:-2] + (dim, dim), complex)
        out[..., :small, :small] = P
        return out

    return ProjectorFamily(
        dim=dim, rank=family.rank, gap_floor=family.gap_floor, _eval_many=_eval
    )


def frame_truncate(frame: Frame, n: int) -> Frame:
    """Project the frame onto the first n coordinates and re-orthonormalize
    with the Gram-determinant formula.

    Requires every leading Gram determinant of the projected vectors to stay
    above 1/2 pointwise (GramTooSmall names the first failing k-point).  The
    output keeps the ambient dimension, with zeros beyond coordinate n.
    """
    n = int(n)
    n_amb, m = frame.n_orbitals, frame.n_bands
    if not m <= n <= n_amb:
        raise ConfigError(f"need rank {m} <= n <= {n_amb}, got n={n}")
    vectors = np.zeros_like(frame.vectors)
    N = frame.mesh.n_per_side
    for i in range(N):
        for j in range(N):
            if not frame.mask[i, j]:
                continue
            block = frame.vectors[i, j, :n, :]  # (n, m) columns
            gram = block.conj().T @ block
            for jdx in range(1, m + 1):
                G = np.linalg.det(gram[:jdx, :jdx]).real
                if abs(G) <= 0.5:
                    raise GramTooSmall(tuple(frame.mesh.points[i, j]), G)
            vectors[i, j, :n, :] = gram_schmidt(block.T).T
    return Frame(
        mesh=frame.mesh,
        vectors=vectors,
        mask=frame.mask.copy(),
        singular_points=frame.singular_points,
    )


def projector_h1_distance(
    Q: ProjectorFamily, P: ProjectorFamily, mesh: KMesh
) -> float:
    """Discrete H1 distance of two families on a mesh: mean-square Frobenius
    distance plus mean-square Frobenius distance of the central-difference
    gradients."""
    if Q.dim != P.dim:
        raise ConfigError("families must share the ambient dimension")
    N = mesh.n_per_side
    dP = Q.eval_many(mesh.points) - P.eval_many(mesh.points)
    total = np.sum(np.abs(dP) ** 2) / N**2
    for axis in (0, 1):
        g = (np.roll(dP, -1, axis=axis) - np.roll(dP, 1, axis=axis)) * (N / 2.0)
        total += np.sum(np.abs(g) ** 2) / N**2
    return float(np.sqrt(total))
