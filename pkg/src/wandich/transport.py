"""Parallel transport with respect to the Berry connection of a projector family.

The transport t(x, y) along the straight segment from y to x solves
dY/ds = [dP/ds, P(y + s(x-y))] Y, Y(0) = Id, and intertwines the fibers:
t(x, y) P(y) = P(x) t(x, y).  The integrator is a classical 4th-order
one-step scheme with re-unitarization (polar projection) after every step,
so unitarity holds to machine precision while the intertwining error carries
the 4th-order truncation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BranchDegenerate, CertificateError, ConfigError
from .model import ProjectorFamily

DEFAULT_STEPS_PER_UNIT = 256
# k-space step of the central difference used for dP/ds inside the integrator
FD_DELTA_K = 1e-6
BRANCH_TOL = 1e-8


@dataclass(frozen=True)
class TransportOp:
    """Unitary parallel transport from `from_k` to `to_k`."""

    matrix: np.ndarray
    from_k: tuple[float, float]
    to_k: tuple[float, float]
    steps: int


@dataclass(frozen=True)
class HolonomyLog:
    """Principal logarithm M = -i log U of a unitary, spectrum in (-pi, pi]."""

    M: np.ndarray
    eigenphases: tuple[float, ...]


def polar_project(Y: np.ndarray) -> np.ndarray:
    """Nearest matrix with orthonormal columns (unitary polar factor), batched."""
    u, _, vh = np.linalg.svd(Y, full_matrices=False)
    return u @ vh


def evolve_transport(
    family: ProjectorFamily,
    starts: np.ndarray,
    ends: np.ndarray,
    steps: int,
    Y0: np.ndarray,
    fd_delta_k: float = FD_DELTA_K,
) -> np.ndarray:
    """Transport a batch of column blocks along straight segments.

    Parameters
    ----------
    starts, ends : (B, 2) arrays
        Segment endpoints in lattice coordinates (transport runs start -> end).
    steps : int
        Number of integrator steps, shared by the whole batch.
    Y0 : (B, n, r) array
        Initial columns at `starts`; r = n transports the full unitary,
        r = m transports a frame.

    Returns the transported (B, n, r) array, with orthonormal columns.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    ends = np.atleast_2d(np.asarray(ends, float))
    Y = np.array(Y0, complex)
    if Y.ndim == 2:
        Y = Y[None]
    B = starts.shape[0]
    S = int(steps)
    if S < 1:
        raise ConfigError(f"transport needs steps >= 1, got {steps}")
    h = 1.0 / S

    d = ends - starts
    seg_len = np.linalg.norm(d, axis=-1)
    delta_s = np.where(seg_len > 0, fd_delta_k / np.maximum(seg_len, 1e-300), 1e-3)

    # P at all half-step nodes j*h/2, each with +-delta shifts for dP/ds
    s_nodes = np.arange(2 * S + 1) * (h / 2.0)
    svals = (
        s_nodes[None, :, None]
        + np.array([-1.0, 0.0, 1.0])[None, None, :] * delta_s[:, None, None]
    )  # (B, 2S+1, 3)
    pos = starts[:, None, None, :] + svals[..., None] * d[:, None, None, :]
    n = family.dim
    P = family.eval_many(pos.reshape(-1, 2)).reshape(B, 2 * S + 1, 3, n, n)
    Pdot = (P[:, :, 2] - P[:, :, 0]) / (2.0 * delta_s)[:, None, None, None]
    Pc = P[:, :, 1]
    # generator [dP/ds, P]: the unique sign for which the transported columns
    # stay parallel (covariant derivative zero) and fibers are intertwined
    A = Pdot @ Pc - Pc @ Pdot

    for j in range(S):
        A0, Am, A1 = A[:, 2 * j], A[:, 2 * j + 1], A[:, 2 * j + 2]
        k1 = A0 @ Y
        k2 = Am @ (Y + (0.5 * h) * k1)
        k3 = Am @ (Y + (0.5 * h) * k2)
        k4 = A1 @ (Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Y = polar_project(Y)
    return Y


def transport(family: ProjectorFamily, x, y, steps: int) -> TransportOp:
    """Berry parallel transport t(x, y) from y to x as a full unitary."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    eye = np.eye(family.dim, dtype=complex)
    Y = evolve_transport(family, y[None], x[None], steps, eye[None])[0]
    return TransportOp(
        matrix=Y, from_k=tuple(y), to_k=tuple(x), steps=int(steps)
    )


def holonomy_log(U: np.ndarray) -> HolonomyLog:
    """Hermitian M with exp(iM) = U and spec(M) in (-pi, pi].

    Raises BranchDegenerate when an eigenphase sits within 1e-8 of the branch
    cut at -pi (equivalently +pi), where the principal log is ill-defined.
    """
    U = np.asarray(U, complex)
    n = U.shape[0]
    if np.linalg.norm(U.conj().T @ U - np.eye(n)) > 1e-9:
        raise ConfigError("holonomy_log requires a unitary input (tolerance 1e-9)")
    T, Z = scipy.linalg.schur(U, output="complex")
    phases = np.angle(np.diagonal(T))
    dist_to_cut = np.minimum(np.abs(phases - np.pi), np.abs(phases + np.pi))
    if np.min(dist_to_cut) < BRANCH_TOL:
        raise BranchDegenerate(
            f"eigenphase within {BRANCH_TOL:g} of the -pi branch cut"
        )
    M = (Z * phases[None, :]) @ Z.conj().T
    M = 0.5 * (M + M.conj().T)
    return HolonomyLog(M=M, eigenphases=tuple(float(p) for p in np.sort(phases)))


def _blockwise_holonomy_log(U: np.ndarray, P0: np.ndarray) -> np.ndarray:
    """Hermitian log of a loop holonomy, taken block-by-block over Ran P + Ran P^perp.

    The holonomy commutes with P0 up to integration error; logging the two
    diagonal blocks separately keeps [M, P0] = 0 exactly and stays stable
    when eigenphases from the two blocks collide at the -pi branch cut
    (eigenvalues exactly at -1 get the +pi branch of the (-pi, pi] convention,
    deterministically; symmetry can pin Zak phases there, e.g. the Haldane
    model at M = 0 along the cell edges).
    """
    evals, Q = np.linalg.eigh(P0)  # ascending: Ran P^perp columns first
    m0 = int(round(np.sum(evals < 0.5)))
    Ub = Q.conj().T @ U @ Q
    M_block = np.zeros_like(Ub)
    for sl in (slice(0, m0), slice(m0, None)):
        blk = Ub[sl, sl]
        if blk.shape[0] == 0:
            continue
        T, Z = scipy.linalg.schur(blk, output="complex")
        phases = np.angle(np.diagonal(T))
        Mb = (Z * phases[None, :]) @ Z.conj().T
        M_block[sl, sl] = 0.5 * (Mb + Mb.conj().T)
    M = Q @ M_block @ Q.conj().T
    return 0.5 * (M + M.conj().T)


def line_frame(
    family: ProjectorFamily,
    direction,
    base_k,
    base_frame: np.ndarray,
    N: int,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
) -> np.ndarray:
    """Periodic smooth frame along one lattice period of a straight line.

    Samples Phi(j) at base_k + (j/N) * direction for j = 0..N, built as
    Phi(t) = t(t, 0) exp(-i t M) Phi(0) with M a Hermitian log of the loop
    holonomy, so Phi(N) equals Phi(0) up to integration error.

    Returns an (N+1, n, m) array of frames.
    """
    base_k = np.asarray(base_k, float)
    direction = np.asarray(direction, float)
    Phi0 = np.asarray(base_frame, complex)
    if Phi0.ndim == 1:
        Phi0 = Phi0[:, None]
    m = Phi0.shape[1]

    P0 = family.eval(base_k)
    if np.linalg.norm(Phi0.conj().T @ Phi0 - np.eye(m)) > 1e-8:
        raise ConfigError("base_frame must be orthonormal")
    if np.linalg.norm(P0 @ Phi0 - Phi0) > 1e-6:
        raise ConfigError("base_frame must span a subspace of Ran P(base_k)")

    N = int(N)
    length = float(np.linalg.norm(direction))
    sub_steps = max(1, round(steps_per_unit * length / N))

    # N sub-segment transports, composed via the group property
    js = np.arange(N)[:, None]
    starts = base_k[None, :] + (js / N) * direction[None, :]
    ends = base_k[None, :] + ((js + 1) / N) * direction[None, :]
    eye = np.eye(family.dim, dtype=complex)
    subs = evolve_transport(
        family, starts, ends, sub_steps, np.broadcast_to(eye, (N,) + eye.shape)
    )

    W = np.empty((N + 1,) + eye.shape, complex)
    W[0] = eye
    for j in range(N):
        W[j + 1] = subs[j] @ W[j]

    M = _blockwise_holonomy_log(W[N], P0)
    comm = M @ P0 - P0 @ M
    if np.linalg.norm(comm) > 1e-7:
        raise CertificateError(
            f"loop holonomy log fails to commute with P(base): {np.linalg.norm(comm):.3e}"
        )

    theta, Z = np.linalg.eigh(M)
    out = np.empty((N + 1, family.dim, m), complex)
    for j in range(N + 1):
        phase = np.exp(-1j * (j / N) * theta)
        out[j] = W[j] @ ((Z * phase[None, :]) @ (Z.conj().T @ Phi0))
    return out
