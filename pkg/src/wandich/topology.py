"""Berry curvature, Chern numbers, the abelian Berry connection, and
discrete Stokes checks.

Orientation convention: dk1 ^ dk2 > 0 (right-handed lattice coordinates);
the Haldane lower band at (t1=1, t2=0.1, phi=pi/2, M=0) then carries
Chern number -1 and the Hofstadter (1,3) lowest band +1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PlaquetteTooCoarse
from .frames import Frame
from .kmesh import KMesh
from .model import ProjectorFamily

PLAQUETTE_PHASE_LIMIT = np.pi - 0.1
ROUNDING_LIMIT = 0.05


@dataclass(frozen=True)
class CurvatureField:
    """Berry curvature integrand tr(P [d1 P, d2 P]) / i on the mesh."""

    mesh: KMesh
    omega: np.ndarray  # (N, N) real
    max_imag_residual: float  # |Re tr(P[d1P, d2P])|, should vanish

    def integral(self) -> float:
        """Integral over the torus (lattice-coordinate cell has unit area)."""
        return float(self.omega.mean())


@dataclass(frozen=True)
class ChernResult:
    value_float: float
    value_int: int
    discrepancy: float


@dataclass(frozen=True)
class ConnectionField:
    """Abelian Berry connection A_j = sum_a Im<phi_a, d_j phi_a> on the mesh.

    ``max_real_residual`` records the discarded real part of <phi, d phi>
    (zero for exact derivatives of normalized frames, O(h^2)-small for the
    finite-difference approximation)."""

    mesh: KMesh
    a: np.ndarray  # (N, N, 2) real
    mask: np.ndarray  # (N, N) bool
    max_real_residual: float


@dataclass(frozen=True)
class Region:
    """Half-open index rectangle [i0, i1) x [j0, j1) on the periodic mesh,
    optionally with one rectangular hole."""

    i0: int
    i1: int
    j0: int
    j1: int
    hole: "Region | None" = None

    def __post_init__(self):
        if self.i1 <= self.i0 or self.j1 <= self.j0:
            raise ConfigError("region index ranges must be nonempty")
        if self.hole is not None and self.hole.hole is not None:
            raise ConfigError("nested holes are not supported")


def _mesh_projectors(family: ProjectorFamily, mesh: KMesh) -> np.ndarray:
    return family.eval_many(mesh.points)


def berry_curvature(
    family: ProjectorFamily, mesh: KMesh, derivative: str = "central"
) -> CurvatureField:
    """Curvature integrand from derivatives of P with periodic wrap.

    derivative = "central" (default, second order) or "spectral" (FFT
    differentiation of the periodic projector field, exponentially accurate
    for analytic families — the higher-accuracy path for identity-level
    checks like band additivity)."""
    N = mesh.n_per_side
    P = _mesh_projectors(family, mesh)
    if derivative == "central":
        d1 = (np.roll(P, -1, axis=0) - np.roll(P, 1, axis=0)) * (N / 2.0)
        d2 = (np.roll(P, -1, axis=1) - np.roll(P, 1, axis=1)) * (N / 2.0)
    elif derivative == "spectral":
        gamma = np.fft.fftfreq(N, d=1.0 / N)
        Pf = np.fft.fft2(P, axes=(0, 1))
        d1 = np.fft.ifft2(2j * np.pi * gamma[:, None, None, None] * Pf, axes=(0, 1))
        d2 = np.fft.ifft2(2j * np.pi * gamma[None, :, None, None] * Pf, axes=(0, 1))
    else:
        raise ConfigError(f"unknown derivative scheme '{derivative}'")
    comm = d1 @ d2 - d2 @ d1
    tr = np.trace(P @ comm, axis1=-2, axis2=-1)
    return CurvatureField(
        mesh=mesh,
        omega=tr.imag,
        max_imag_residual=float(np.max(np.abs(tr.real))),
    )


def chern_continuum(family: ProjectorFamily, mesh: KMesh) -> float:
    """Discretized curvature integral (1/2 pi) int tr(P[d1P, d2P])/i."""
    field = berry_curvature(family, mesh)
    return field.integral() / (2.0 * np.pi)


def _occupied_mesh_frames(family: ProjectorFamily, mesh: KMesh) -> np.ndarray:
    """Per-point orthonormal bases of Ran P(k) in the eigensolver gauge."""
    P = _mesh_projectors(family, mesh)
    _, vecs = np.linalg.eigh(P)
    return vecs[..., :, P.shape[-1] - family.rank :]


def _fhs_from_frames(psi: np.ndarray) -> tuple[int, float, float]:
    """Link-variable invariant from an (N, N, n, m) array of occupied frames.

    Returns (integer, pre-rounding float, max plaquette phase).  The result
    depends only on span(psi) per point: per-point gauge factors cancel in
    the plaquette product.
    """
    psi_d = np.conj(np.swapaxes(psi, -1, -2))
    U1 = np.linalg.det(psi_d @ np.roll(psi, -1, axis=0))
    U2 = np.linalg.det(psi_d @ np.roll(psi, -1, axis=1))
    if np.min(np.abs(U1)) < 1e-12 or np.min(np.abs(U2)) < 1e-12:
        raise PlaquetteTooCoarse("vanishing link overlap determinant")
    plaq = U1 * np.roll(U2, -1, axis=0) * np.conj(np.roll(U1, -1, axis=1) * U2)
    F = np.angle(plaq)
    max_phase = float(np.max(np.abs(F)))
    if max_phase >= PLAQUETTE_PHASE_LIMIT:
        raise PlaquetteTooCoarse(
            f"plaquette phase {max_phase:.3f} >= pi - 0.1; refine the mesh"
        )
    total = float(F.sum() / (2.0 * np.pi))
    value = int(round(total))
    if abs(total - value) >= ROUNDING_LIMIT:
        raise PlaquetteTooCoarse(
            f"rounding residual {abs(total - value):.3f} >= {ROUNDING_LIMIT}"
        )
    return value, total, max_phase


def chern_fhs(family: ProjectorFamily, mesh: KMesh) -> int:
    """Integer Chern number via plaquette phases of link-overlap determinants
    (exact integer by construction; certificate errors when the mesh is too
    coarse)."""
    psi = _occupied_mesh_frames(family, mesh)
    value, _, _ = _fhs_from_frames(psi)
    return value


def chern_result(family: ProjectorFamily, mesh: KMesh) -> ChernResult:
    """Both Chern estimates on one mesh, with their discrepancy."""
    value_int = chern_fhs(family, mesh)
    value_float = chern_continuum(family, mesh)
    return ChernResult(
        value_float=value_float,
        value_int=value_int,
        discrepancy=abs(value_float - value_int),
    )


def abelian_connection(frame: Frame, mesh: KMesh | None = None) -> ConnectionField:
    """Trace of the Berry connection 1-form of a frame, by finite differences.

    Central differences where both neighbors are defined, one-sided next to
    undefined neighbors; points with no usable neighbor pair along an axis
    are masked out."""
    mesh = mesh or frame.mesh
    N = mesh.n_per_side
    v = np.where(frame.mask[..., None, None], frame.vectors, 0.0)
    a = np.zeros((N, N, 2))
    residual = 0.0
    ok = frame.mask.copy()
    for axis in (0, 1):
        fwd_v = np.roll(v, -1, axis=axis)
        bwd_v = np.roll(v, 1, axis=axis)
        fwd_ok = np.roll(frame.mask, -1, axis=axis)
        bwd_ok = np.roll(frame.mask, 1, axis=axis)
        central = (fwd_v - bwd_v) * (N / 2.0)
        one_fwd = (fwd_v - v) * N
        one_bwd = (v - bwd_v) * N
        d = np.where(
            (fwd_ok & bwd_ok)[..., None, None],
            central,
            np.where(
                fwd_ok[..., None, None],
                one_fwd,
                np.where(bwd_ok[..., None, None], one_bwd, 0.0),
            ),
        )
        ip = np.einsum("ijka,ijka->ij", np.conj(v), d)
        a[..., axis] = ip.imag
        usable = frame.mask & (fwd_ok | bwd_ok)
        ok &= usable
        if usable.any():
            residual = max(residual, float(np.max(np.abs(ip.real[usable]))))
    return ConnectionField(mesh=mesh, a=a, mask=ok, max_real_residual=residual)


def _link_phase(frame: Frame, i0, j0, i1, j1) -> float:
    N = frame.mesh.n_per_side
    i0, j0, i1, j1 = i0 % N, j0 % N, i1 % N, j1 % N
    if not (frame.mask[i0, j0] and frame.mask[i1, j1]):
        raise ConfigError(f"circulation path hits undefined frame point ({i1},{j1})")
    ov = np.linalg.det(frame.vectors[i0, j0].conj().T @ frame.vectors[i1, j1])
    return float(np.angle(ov))


def circulation(frame: Frame, region: Region) -> float:
    """Counterclockwise line integral of the abelian connection around the
    region boundary, as a sum of link phases Im log det(Phi^dag Phi')."""
    total = 0.0
    for i in range(region.i0, region.i1):
        total += _link_phase(frame, i, region.j0, i + 1, region.j0)
        total -= _link_phase(frame, i, region.j1, i + 1, region.j1)
    for j in range(region.j0, region.j1):
        total += _link_phase(frame, region.i1, j, region.i1, j + 1)
        total -= _link_phase(frame, region.i0, j, region.i0, j + 1)
    if region.hole is not None:
        total -= circulation(frame, region.hole)
    return total


def region_flux(field: CurvatureField, region: Region) -> float:
    """Curvature integral over the region (plaquettes keyed by their
    lower-left mesh point)."""
    N = field.mesh.n_per_side
    total = 0.0
    for i in range(region.i0, region.i1):
        for j in range(region.j0, region.j1):
            if region.hole is not None and (
                region.hole.i0 <= i < region.hole.i1
                and region.hole.j0 <= j < region.hole.j1
            ):
                continue
            total += field.omega[i % N, j % N]
    return total / N**2


def stokes_residual(
    frame: Frame, family: ProjectorFamily, mesh: KMesh, region: Region
) -> float:
    """|int_region Omega - oint_{d region} A|, with the curvature from the
    projector family and the line integral from frame link phases."""
    field = berry_curvature(family, mesh)
    return abs(region_flux(field, region) - circulation(frame, region))
