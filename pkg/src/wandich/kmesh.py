"""Uniform discretization of the Brillouin torus.

The unit cell is [-1/2, 1/2]^2 in lattice coordinates; a mesh of size N
stores the points k_ij = (i/N - 1/2, j/N - 1/2) in row-major order, so the
cell vertex v1 = (-1/2, -1/2) sits at index (0, 0) and the origin k = 0 at
(N/2, N/2).  Opposite cell boundaries are periodic images of the stored
left/bottom rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OddMeshSize

# vertices of the fundamental cell, counterclockwise from (-1/2, -1/2)
VERTICES = (
    (-0.5, -0.5),
    (0.5, -0.5),
    (0.5, 0.5),
    (-0.5, 0.5),
)


@dataclass(frozen=True)
class KMesh:
    n_per_side: int
    points: np.ndarray  # (N, N, 2)

    @property
    def step(self) -> float:
        return 1.0 / self.n_per_side

    @property
    def origin_index(self) -> tuple[int, int]:
        half = self.n_per_side // 2
        return (half, half)

    def wrap(self, i: int, j: int) -> tuple[int, int]:
        N = self.n_per_side
        return (i % N, j % N)

    def index_of(self, k) -> tuple[int, int]:
        """Storage index of a k-point that lies on the mesh (modulo the lattice)."""
        N = self.n_per_side
        i = round((k[0] + 0.5) * N)
        j = round((k[1] + 0.5) * N)
        if abs((k[0] + 0.5) * N - i) > 1e-9 or abs((k[1] + 0.5) * N - j) > 1e-9:
            raise ConfigError(f"point {tuple(k)} is not a mesh point at N={N}")
        return (i % N, j % N)


def build_mesh(N: int) -> KMesh:
    """Uniform N x N mesh; N must be even so k=0 and the vertices are mesh points."""
    N = int(N)
    if N < 2:
        raise ConfigError(f"mesh size must be >= 2, got {N}")
    if N % 2 != 0:
        raise OddMeshSize(f"mesh size must be even, got {N}")
    axis = np.arange(N) / N - 0.5
    k1, k2 = np.meshgrid(axis, axis, indexing="ij")
    return KMesh(n_per_side=N, points=np.stack([k1, k2], axis=-1))


def boundary_loop(mesh: KMesh) -> tuple[np.ndarray, np.ndarray]:
    """Closed counterclockwise traversal of the cell boundary, 4N points.

    Returns ``(points, indices)``: unreduced coordinates along
    E1 (bottom, +k1), E2 (right, +k2), E3 (top, -k1), E4 (left, -k2),
    starting at v1, plus the (i, j) storage index of each point's periodic
    representative.  Consecutive points are 1/N apart; the loop closes back
    to v1 after the last point.
    """
    N = mesh.n_per_side
    up = np.arange(N) / N - 0.5
    down = 0.5 - np.arange(N) / N
    half = np.full(N, 0.5)
    pts = np.concatenate(
        [
            np.stack([up, -half], axis=-1),    # E1: v1 -> v2
            np.stack([half, up], axis=-1),     # E2: v2 -> v3
            np.stack([down, half], axis=-1),   # E3: v3 -> v4
            np.stack([-half, down], axis=-1),  # E4: v4 -> v1
        ]
    )
    i = np.rint((pts[:, 0] + 0.5) * N).astype(int) % N
    j = np.rint((pts[:, 1] + 0.5) * N).astype(int) % N
    return pts, np.stack([i, j], axis=-1)


@dataclass(frozen=True)
class RayFan:
    """Assignment of every non-origin mesh point to one boundary ray.

    ``assignment[i, j]`` is the index into ``boundary_points`` of the ray the
    point belongs to (nearest polar angle, ties broken toward the smaller
    angle), or -1 at the origin.
    """

    boundary_points: np.ndarray  # (4N, 2) unreduced
    boundary_indices: np.ndarray  # (4N, 2) storage indices
    assignment: np.ndarray  # (N, N) int
    steps_per_unit: int


def build_ray_fan(mesh: KMesh, steps_per_unit: int = 256) -> RayFan:
    bpts, bidx = boundary_loop(mesh)
    bangles = np.arctan2(bpts[:, 1], bpts[:, 0])
    order = np.argsort(bangles, kind="stable")

    k = mesh.points
    angles = np.arctan2(k[..., 1], k[..., 0])
    N = mesh.n_per_side
    assignment = np.full((N, N), -1, dtype=int)

    sorted_angles = bangles[order]
    pos = np.searchsorted(sorted_angles, angles.ravel())
    flat = assignment.ravel()
    n_b = len(order)
    for t_i, p in enumerate(pos):
        a = angles.ravel()[t_i]
        # candidates on both sides, with circular wrap
        best = None
        best_d = None
        for cand in ((p - 1) % n_b, p % n_b):
            d = abs(sorted_angles[cand] - a)
            d = min(d, 2 * np.pi - d)
            if best is None or d < best_d - 1e-15 or (
                abs(d - best_d) <= 1e-15
                and sorted_angles[cand] < sorted_angles[best]
            ):
                best, best_d = cand, d
        flat[t_i] = order[best]
    oi, oj = mesh.origin_index
    assignment[oi, oj] = -1
    return RayFan(
        boundary_points=bpts,
        boundary_indices=bidx,
        assignment=assignment,
        steps_per_unit=int(steps_per_unit),
    )
