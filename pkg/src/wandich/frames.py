"""Global periodic Bloch frames on the 2D unit cell.

Construction pipeline: a frame on the cell boundary built from two periodic
line frames through v1 (skeleton), radial parallel-transport extension to the
cell interior minus k=0, and an optional Kato-Nagy smoothing pass that removes
the k=0 singularity whenever the topology allows it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigError,
    NearDependent,
    ProjectorsTooFar,
    ReprojectionSingular,
    SmoothingGramSingular,
)
from .kmesh import KMesh, build_mesh
from .model import ProjectorFamily
from .transport import DEFAULT_STEPS_PER_UNIT, evolve_transport, line_frame

V1 = np.array([-0.5, -0.5])


@dataclass(frozen=True)
class Frame:
    """Per-mesh-point orthonormal frames spanning Ran P(k).

    ``vectors[i, j]`` is an (n, m) matrix whose columns are the frame vectors
    at mesh point (i, j); ``mask`` marks the points where the frame is
    defined.  ``singular_points`` lists excluded indices (e.g. k=0 for the
    radial construction).
    """

    mesh: KMesh
    vectors: np.ndarray  # (N, N, n, m) complex
    mask: np.ndarray  # (N, N) bool
    singular_points: tuple[tuple[int, int], ...] = ()

    @property
    def n_orbitals(self) -> int:
        return self.vectors.shape[2]

    @property
    def n_bands(self) -> int:
        return self.vectors.shape[3]


@dataclass(frozen=True)
class SkeletonResult:
    """Boundary frame plus its vertex/edge compatibility residuals."""

    frame: Frame
    vertex_residual: float
    edge_residual: float


@dataclass(frozen=True)
class GradientBoundReport:
    """Finite-difference check of the 1/|k| gradient bound."""

    sup_weighted: float  # max over k != 0 of |k| * ||grad phi(k)||
    sup_unweighted: float
    per_radius_profile: tuple[tuple[float, float], ...]  # (radius, max ||grad||)


def orthonormality_defect(frame: Frame) -> float:
    """Max over defined points of ||Phi^dag Phi - I|| (Frobenius)."""
    v = frame.vectors[frame.mask]
    if len(v) == 0:
        return 0.0
    g = np.conj(np.swapaxes(v, -1, -2)) @ v
    g = g - np.eye(frame.n_bands)
    return float(np.max(np.linalg.norm(g, axis=(-2, -1))))


def subordination_defect(frame: Frame, family: ProjectorFamily) -> float:
    """Max over defined points of ||P(k) phi_a(k) - phi_a(k)||."""
    pts = frame.mesh.points[frame.mask]
    v = frame.vectors[frame.mask]
    if len(v) == 0:
        return 0.0
    P = family.eval_many(pts)
    return float(np.max(np.linalg.norm(P @ v - v, axis=(-2, -1))))


def _default_base_frame(family: ProjectorFamily, k) -> np.ndarray:
    """Eigenvectors of P(k) on the eigenvalue-1 subspace with a deterministic
    phase fix: the largest-magnitude component of each column is made real
    positive (ties resolved to the smallest index)."""
    P = family.eval(k)
    _, vecs = np.linalg.eigh(P)
    base = vecs[:, P.shape[0] - family.rank :].copy()
    for a in range(base.shape[1]):
        idx = int(np.argmax(np.abs(base[:, a])))
        ph = base[idx, a]
        if abs(ph) > 0:
            base[:, a] *= np.conj(ph) / abs(ph)
    return base


def skeleton_frame(
    family: ProjectorFamily,
    mesh: KMesh,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
    base_frame: np.ndarray | None = None,
) -> SkeletonResult:
    """Periodic frame on the cell boundary from two line frames through v1.

    The bottom edge carries the line frame along e1, the left edge the one
    along e2; the top and right edges are their periodic copies.  The vertex
    residual measures the periodicity defect of the two line frames at v1;
    the edge residual measures how well the copied values still span
    Ran P(k) at the shifted momenta.
    """
    N = mesh.n_per_side
    if base_frame is None:
        base_frame = _default_base_frame(family, V1)
    phi_left = line_frame(family, (0.0, 1.0), V1, base_frame, N, steps_per_unit)
    phi_bottom = line_frame(family, (1.0, 0.0), V1, base_frame, N, steps_per_unit)

    vertex_residual = max(
        float(np.linalg.norm(phi_left[N] - phi_left[0])),
        float(np.linalg.norm(phi_bottom[N] - phi_bottom[0])),
    )

    n, m = phi_left.shape[1], phi_left.shape[2]
    vectors = np.zeros((N, N, n, m), complex)
    mask = np.zeros((N, N), bool)
    vectors[0, :] = phi_left[:N]
    vectors[:, 0] = phi_bottom[:N]
    vectors[0, 0] = phi_left[0]
    mask[0, :] = True
    mask[:, 0] = True

    # copied edges: right edge takes the left-edge values, top the bottom ones
    t = np.arange(N) / N - 0.5
    right = np.stack([np.full(N, 0.5), t], axis=-1)
    top = np.stack([t, np.full(N, 0.5)], axis=-1)
    P_right = family.eval_many(right)
    P_top = family.eval_many(top)
    res_right = np.linalg.norm(P_right @ phi_left[:N] - phi_left[:N], axis=(-2, -1))
    res_top = np.linalg.norm(P_top @ phi_bottom[:N] - phi_bottom[:N], axis=(-2, -1))
    edge_residual = float(max(np.max(res_right), np.max(res_top)))

    frame = Frame(mesh=mesh, vectors=vectors, mask=mask)
    return SkeletonResult(
        frame=frame, vertex_residual=vertex_residual, edge_residual=edge_residual
    )


def _step_ladder(max_steps: int) -> list[int]:
    ladder = [1, 2, 3]
    while ladder[-1] < max_steps:
        ladder.append(ladder[-1] + max(1, ladder[-1] // 2))
    return ladder


def _boundary_ray_values(
    family: ProjectorFamily, boundary: Frame, ks: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact boundary intersection of the ray through each k, with the frame
    there interpolated linearly between the adjacent stored samples, projected
    onto Ran P and re-orthonormalized."""
    from .transport import polar_project

    N = boundary.mesh.n_per_side
    k1, k2 = ks[:, 0], ks[:, 1]
    vertical = np.abs(k1) >= np.abs(k2)  # exits through k1 = +-1/2
    denom = np.where(vertical, np.abs(k1), np.abs(k2))
    b = ks * (0.5 / denom)[:, None]

    t = np.where(vertical, b[:, 1], b[:, 0])
    u = (t + 0.5) * N
    j0 = np.floor(u + 1e-9).astype(int)
    alpha = np.clip(u - j0, 0.0, 1.0)
    j0m, j1m = j0 % N, (j0 + 1) % N

    n, m = boundary.vectors.shape[2], boundary.vectors.shape[3]
    V0 = np.empty((len(ks), n, m), complex)
    V1 = np.empty((len(ks), n, m), complex)
    # vertical exits use the stored left edge (column i=0), horizontal ones
    # the stored bottom edge (row j=0); edge symmetry makes these the values
    # at the unreduced exit points
    V0[vertical] = boundary.vectors[0, j0m[vertical]]
    V1[vertical] = boundary.vectors[0, j1m[vertical]]
    V0[~vertical] = boundary.vectors[j0m[~vertical], 0]
    V1[~vertical] = boundary.vectors[j1m[~vertical], 0]

    interp = (1.0 - alpha)[:, None, None] * V0 + alpha[:, None, None] * V1
    P = family.eval_many(b)
    return b, polar_project(P @ interp)


def radial_extension(
    family: ProjectorFamily,
    boundary: Frame,
    mesh: KMesh,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
    chunk_points: int = 150_000,
) -> Frame:
    """Extend a boundary frame to the cell interior minus k=0 by parallel
    transport along the ray through each mesh point.

    Each strict-interior point k != 0 receives the transport, along the
    segment from the exact boundary intersection b = k / (2 max|k_i|) to k,
    of the boundary frame at b (interpolated between the adjacent stored
    samples).  Boundary points keep their skeleton values; the origin stays
    undefined.
    """
    N = mesh.n_per_side
    n, m = boundary.vectors.shape[2], boundary.vectors.shape[3]

    vectors = boundary.vectors.copy()
    mask = boundary.mask.copy()

    pts = mesh.points.reshape(-1, 2)
    oi, oj = mesh.origin_index
    maxnorm = np.max(np.abs(pts), axis=-1)
    interior = (maxnorm < 0.5 - 1e-12) & (maxnorm > 1e-12)
    idx_flat = np.flatnonzero(interior)

    seg_end = pts[interior]
    seg_start, seg_Y0 = _boundary_ray_values(family, boundary, seg_end)
    steps_needed = np.maximum(
        1, np.ceil(np.linalg.norm(seg_end - seg_start, axis=-1) * steps_per_unit)
    ).astype(int)

    ladder = _step_ladder(int(steps_needed.max(initial=1)))
    ladder_arr = np.array(ladder)
    buckets = ladder_arr[np.searchsorted(ladder_arr, steps_needed)]

    out_flat = vectors.reshape(-1, n, m)
    mask_flat = mask.ravel()
    for S in ladder:
        sel = np.flatnonzero(buckets == S)
        if len(sel) == 0:
            continue
        # keep the batched projector evaluations inside a memory budget
        per_seg = 3 * (2 * S + 1)
        group = max(1, chunk_points // per_seg)
        for lo in range(0, len(sel), group):
            part = sel[lo : lo + group]
            Y = evolve_transport(
                family, seg_start[part], seg_end[part], S, seg_Y0[part]
            )
            out_flat[idx_flat[part]] = Y
            mask_flat[idx_flat[part]] = True

    mask[oi, oj] = False
    return Frame(
        mesh=mesh, vectors=vectors, mask=mask, singular_points=((oi, oj),)
    )


def kato_nagy(Pk: np.ndarray, Pk0: np.ndarray) -> np.ndarray:
    """Unitary W with W P(k) W^* = P(k0), defined whenever ||P(k0) - P(k)|| < 1.

    W = (I - (P(k0) - P(k))^2)^{-1/2} (P(k0) P(k) + (I - P(k0))(I - P(k))).
    """
    Pk = np.asarray(Pk, complex)
    Pk0 = np.asarray(Pk0, complex)
    n = Pk.shape[0]
    D = Pk0 - Pk
    dist = float(np.max(np.abs(np.linalg.eigvalsh(D))))
    if dist >= 1.0 - 1e-6:
        raise ProjectorsTooFar(f"||P(k0) - P(k)|| = {dist:.6f} >= 1")
    G = np.eye(n) - D @ D
    w, V = np.linalg.eigh(G)
    G_inv_sqrt = (V / np.sqrt(w)[None, :]) @ V.conj().T
    eye = np.eye(n)
    return G_inv_sqrt @ (Pk0 @ Pk + (eye - Pk0) @ (eye - Pk))


def kato_nagy_frame(
    family: ProjectorFamily,
    mesh: KMesh | int,
    k0=(0.0, 0.0),
    base_frame: np.ndarray | None = None,
) -> Frame:
    """Global analytic periodic frame W(k)^{-1} Phi_0 from the Kato-Nagy
    unitaries against a fixed reference fiber.

    Exists iff ||P(k) - P(k0)|| < 1 on the whole mesh, which forces a trivial
    family; raises ProjectorsTooFar otherwise.  When it succeeds, the frame
    inherits the analyticity of k -> P(k), so the associated Wannier set is
    the exponential-localization witness of the trivial phase.
    """
    if isinstance(mesh, int):
        mesh = build_mesh(mesh)
    N = mesh.n_per_side
    k0 = np.asarray(k0, float)
    P0 = family.eval(k0)
    n = family.dim
    if base_frame is None:
        base_frame = _default_base_frame(family, k0)
    Phi0 = np.asarray(base_frame, complex)

    P = family.eval_many(mesh.points.reshape(-1, 2))
    D = P0[None] - P
    dist = np.max(np.abs(np.linalg.eigvalsh(D)), axis=-1)
    worst = float(dist.max())
    if worst >= 1.0 - 1e-6:
        raise ProjectorsTooFar(
            f"max ||P(k) - P(k0)|| = {worst:.6f} >= 1; no global Kato-Nagy gauge"
        )
    G = np.eye(n)[None] - D @ D
    w, V = np.linalg.eigh(G)
    G_inv_sqrt = (V / np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    eye = np.eye(n)
    W = G_inv_sqrt @ (P0[None] @ P + (eye - P0)[None] @ (eye[None] - P))
    vecs = (np.conj(np.swapaxes(W, -1, -2)) @ Phi0[None]).reshape(
        N, N, n, Phi0.shape[1]
    )
    return Frame(mesh=mesh, vectors=vecs, mask=np.ones((N, N), bool))


def _torus_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise displacement a - b wrapped to [-1/2, 1/2)."""
    d = a - b
    return d - np.round(d)


def _bump_weights(offsets: np.ndarray, width: float) -> np.ndarray:
    r = np.linalg.norm(offsets, axis=-1) / width
    w = np.zeros(r.shape)
    inside = r < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return w


def local_smooth(
    family: ProjectorFamily,
    frame: Frame,
    region,
    kernel_width: float,
    k0_index: tuple[int, int] | None = None,
) -> Frame:
    """Mollify the frame inside ``region`` after mapping to the fixed fiber
    Ran P(k0) with Kato-Nagy unitaries, then restore orthonormality with the
    inverse-square-root Gram correction.

    Points of ``region`` that were undefined (e.g. the radial frame's k=0)
    are filled by the mollification.  Raises SmoothingGramSingular when the
    mollified candidate has ||G - I|| > 1/2 anywhere in the region, which is
    the signature of averaging over a topological obstruction.
    """
    mesh = frame.mesh
    N = mesh.n_per_side
    region_mask = np.zeros((N, N), bool)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        region_mask[:] = region
    else:
        for i, j in region:
            region_mask[i % N, j % N] = True
    if not region_mask.any():
        return frame

    # kernel footprint on the index grid
    reach = int(math.ceil(kernel_width * N))
    off_range = np.arange(-reach, reach + 1)
    oi_g, oj_g = np.meshgrid(off_range, off_range, indexing="ij")
    offsets_k = np.stack([oi_g, oj_g], axis=-1) / N
    weights = _bump_weights(offsets_k, kernel_width)
    foot = weights > 0

    # support: region dilated by the kernel footprint (periodic)
    support = np.zeros((N, N), bool)
    reg_idx = np.argwhere(region_mask)
    for di, dj in zip(oi_g[foot], oj_g[foot]):
        support[(reg_idx[:, 0] + di) % N, (reg_idx[:, 1] + dj) % N] = True

    # reference point: region point nearest the (torus) centroid
    pts = mesh.points
    reg_pts = pts[region_mask]
    ref = reg_pts[0]
    centroid = ref + _torus_delta(reg_pts, ref).mean(axis=0)
    d2 = np.linalg.norm(_torus_delta(reg_pts, centroid), axis=-1)
    order = np.lexsort((reg_idx[:, 1], reg_idx[:, 0], np.round(d2, 12)))
    if k0_index is None:
        k0_index = tuple(reg_idx[order[0]])
    P0 = family.eval(pts[k0_index])

    # map the support values to the fixed fiber
    sup_idx = np.argwhere(support)
    n, m = frame.n_orbitals, frame.n_bands
    phiW = np.zeros((N, N, n, m), complex)
    W_store = np.zeros((N, N, n, n), complex)
    P_sup = family.eval_many(pts[support])
    for row, (i, j) in enumerate(sup_idx):
        W = kato_nagy(P_sup[row], P0)
        W_store[i, j] = W
        if frame.mask[i, j]:
            phiW[i, j] = W @ frame.vectors[i, j]

    # normalized masked convolution at region points
    conv = np.zeros((N, N, n, m), complex)
    norm = np.zeros((N, N))
    for di, dj, w in zip(oi_g[foot], oj_g[foot], weights[foot]):
        src_i = (reg_idx[:, 0] + di) % N
        src_j = (reg_idx[:, 1] + dj) % N
        has = frame.mask[src_i, src_j]
        conv[reg_idx[has, 0], reg_idx[has, 1]] += w * phiW[src_i[has], src_j[has]]
        norm[reg_idx[has, 0], reg_idx[has, 1]] += w
    if np.any(norm[region_mask] == 0):
        raise SmoothingGramSingular("kernel support contains no defined frame points")
    conv[region_mask] /= norm[region_mask][:, None, None]

    # blend toward the untouched values at the region edge; only complement
    # points within the kernel reach matter (farther ones give chi = 1)
    near_comp = np.zeros((N, N), bool)  # region points with complement in reach
    cand_comp = np.zeros((N, N), bool)  # complement points with region in reach
    for di, dj in zip(oi_g[foot], oj_g[foot]):
        near_comp |= np.roll(np.roll(~region_mask, di, axis=0), dj, axis=1)
        cand_comp |= np.roll(np.roll(region_mask, di, axis=0), dj, axis=1)
    near_comp &= region_mask
    cand_comp &= ~region_mask
    comp_pts = pts[cand_comp]
    dist_out = np.full((N, N), np.inf)
    for i, j in reg_idx:
        if len(comp_pts) and near_comp[i, j]:
            d = np.linalg.norm(_torus_delta(comp_pts, pts[i, j]), axis=-1)
            dist_out[i, j] = d.min()
    chi = np.clip(dist_out / max(kernel_width, 1e-12), 0.0, 1.0)
    chi = chi * chi * (3.0 - 2.0 * chi)

    vectors = frame.vectors.copy()
    mask = frame.mask.copy()
    max_gram_dev = 0.0
    for i, j in reg_idx:
        c = chi[i, j] if frame.mask[i, j] else 1.0
        cand_W = c * conv[i, j] + (1.0 - c) * phiW[i, j]
        cand = W_store[i, j].conj().T @ cand_W
        G = cand.conj().T @ cand
        dev = float(np.max(np.abs(np.linalg.eigvalsh(G - np.eye(m)))))
        max_gram_dev = max(max_gram_dev, dev)
        if dev > 0.5:
            raise SmoothingGramSingular(
                f"||G - I|| = {dev:.3f} > 1/2 at mesh point {(int(i), int(j))}"
            )
        w_g, V_g = np.linalg.eigh(G)
        cand = cand @ ((V_g / np.sqrt(w_g)[None, :]) @ V_g.conj().T)
        vectors[i, j] = cand
        mask[i, j] = True

    singular = tuple(
        s for s in frame.singular_points if not region_mask[s[0], s[1]]
    )
    return Frame(mesh=mesh, vectors=vectors, mask=mask, singular_points=singular)


def gram_schmidt(vectors) -> np.ndarray:
    """Orthonormalize a sequence of m vectors via the Gram-determinant formula.

    The a-th output is the formal determinant whose last row holds the first
    a input vectors, normalized by sqrt(G_{a-1} G_a) with G_j the leading
    Gram determinants.  Input and output are (m, n) arrays of row vectors.
    Raises NearDependent when any |G_j| falls below 1e-12.
    """
    V = np.asarray(vectors, complex)
    if V.ndim == 1:
        V = V[None, :]
    m, n = V.shape
    if m > n:
        raise ConfigError(f"cannot orthonormalize {m} vectors in dimension {n}")
    gram = V.conj() @ V.T  # gram[a, b] = <v_a, v_b>, conjugate-linear first slot
    G = np.empty(m + 1)
    G[0] = 1.0
    for j in range(1, m + 1):
        G[j] = np.linalg.det(gram[:j, :j]).real
        if abs(G[j]) <= 1e-12:
            raise NearDependent(f"Gram determinant G_{j} = {G[j]:.3e}")

    out = np.empty((m, n), complex)
    for a in range(1, m + 1):
        if a == 1:
            out[0] = V[0] / math.sqrt(G[1])
            continue
        # numeric rows r = 1..a-1 have entries <v_r, v_c>; expand along the
        # vector-valued last row (the duplicated-row argument then gives
        # <v_r, xi_a> = 0 for r < a)
        M = gram[: a - 1, :a]
        coeffs = np.empty(a, complex)
        cols = np.arange(a)
        for c in range(a):
            sub = M[:, cols != c]
            coeffs[c] = (-1) ** ((a - 1) + c) * (
                np.linalg.det(sub) if sub.size else 1.0
            )
        out[a - 1] = (coeffs @ V[:a]) / math.sqrt(G[a - 1] * G[a])
    return out


def gram_schmidt_sequential(vectors) -> np.ndarray:
    """Classical sequential Gram-Schmidt ((m, n) rows in and out), the
    cross-check for the determinant formula."""
    V = np.asarray(vectors, complex)
    if V.ndim == 1:
        V = V[None, :]
    m, n = V.shape
    out = np.empty((m, n), complex)
    for a in range(m):
        u = V[a].copy()
        for b in range(a):
            u -= out[b] * np.vdot(out[b], V[a])
        nrm = np.linalg.norm(u)
        if nrm <= 1e-12:
            raise NearDependent(f"vector {a} nearly dependent on predecessors")
        out[a] = u / nrm
    return out


def mollify_reproject(frame: Frame, width: float) -> Frame:
    """Convolve the frame with a periodic bump kernel of the given k-space
    width and project each point back to the nearest orthonormal m-frame
    (unitary polar factor).

    Raises ReprojectionSingular when the mollified matrix is rank-deficient
    (smallest singular value below 1e-8), as happens when the kernel averages
    over the winding of a Chern-nontrivial frame.
    """
    mesh = frame.mesh
    N = mesh.n_per_side
    reach = int(math.ceil(width * N))
    off_range = np.arange(-reach, reach + 1)
    oi_g, oj_g = np.meshgrid(off_range, off_range, indexing="ij")
    offsets_k = np.stack([oi_g, oj_g], axis=-1) / N
    weights = _bump_weights(offsets_k, width)
    if weights.sum() == 0:
        weights[reach, reach] = 1.0
    foot = weights > 0

    n, m = frame.n_orbitals, frame.n_bands
    conv = np.zeros((N, N, n, m), complex)
    norm = np.zeros((N, N))
    masked_vals = np.where(frame.mask[..., None, None], frame.vectors, 0.0)
    for di, dj, w in zip(oi_g[foot], oj_g[foot], weights[foot]):
        shifted = np.roll(np.roll(masked_vals, -di, axis=0), -dj, axis=1)
        shifted_mask = np.roll(np.roll(frame.mask, -di, axis=0), -dj, axis=1)
        conv += w * shifted
        norm += w * shifted_mask
    if np.any(norm == 0):
        raise ReprojectionSingular("kernel support misses all defined points")
    conv /= norm[..., None, None]

    u, s, vh = np.linalg.svd(conv, full_matrices=False)
    smin = float(s.min())
    if smin < 1e-8:
        raise ReprojectionSingular(f"smallest singular value {smin:.3e} < 1e-8")
    return Frame(mesh=mesh, vectors=u @ vh, mask=np.ones((N, N), bool))


def gradient_bound(frame: Frame, mesh: KMesh | None = None) -> GradientBoundReport:
    """Finite-difference gradients with periodic wrap; central differences at
    interior points and one-sided next to undefined neighbors.  The singular
    points and their 4-neighborhoods are excluded from all suprema.
    """
    mesh = mesh or frame.mesh
    N = mesh.n_per_side
    v = np.where(frame.mask[..., None, None], frame.vectors, 0.0)

    grads = []
    for axis in (0, 1):
        fwd_v = np.roll(v, -1, axis=axis)
        bwd_v = np.roll(v, 1, axis=axis)
        fwd_ok = np.roll(frame.mask, -1, axis=axis)
        bwd_ok = np.roll(frame.mask, 1, axis=axis)
        central = (fwd_v - bwd_v) * (N / 2.0)
        one_fwd = (fwd_v - v) * N
        one_bwd = (v - bwd_v) * N
        g = np.where(
            (fwd_ok & bwd_ok)[..., None, None],
            central,
            np.where(
                fwd_ok[..., None, None],
                one_fwd,
                np.where(bwd_ok[..., None, None], one_bwd, 0.0),
            ),
        )
        grads.append(g)
    gnorm = np.sqrt(
        np.linalg.norm(grads[0], axis=(-2, -1)) ** 2
        + np.linalg.norm(grads[1], axis=(-2, -1)) ** 2
    )

    included = frame.mask.copy()
    for si, sj in frame.singular_points:
        included[si, sj] = False
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            included[(si + di) % N, (sj + dj) % N] = False

    radii = np.linalg.norm(mesh.points, axis=-1)
    if not included.any():
        return GradientBoundReport(0.0, 0.0, ())
    sup_weighted = float(np.max(radii[included] * gnorm[included]))
    sup_unweighted = float(np.max(gnorm[included]))

    bin_width = 1.0 / 16.0
    profile = []
    n_bins = int(math.ceil(radii[included].max() / bin_width)) + 1
    for b in range(n_bins):
        sel = included & (radii >= b * bin_width) & (radii < (b + 1) * bin_width)
        if sel.any():
            profile.append(((b + 0.5) * bin_width, float(gnorm[sel].max())))
    return GradientBoundReport(
        sup_weighted=sup_weighted,
        sup_unweighted=sup_unweighted,
        per_radius_profile=tuple(profile),
    )


def frame_h1_distance(f1: Frame, f2: Frame) -> float:
    """Discrete H1 distance: mean-square Frobenius difference plus mean-square
    difference of central-difference gradients, over jointly defined points."""
    if f1.mesh.n_per_side != f2.mesh.n_per_side:
        raise ConfigError("frames live on different meshes")
    N = f1.mesh.n_per_side
    both = f1.mask & f2.mask
    diff = np.where(both[..., None, None], f1.vectors - f2.vectors, 0.0)
    val = np.sum(np.abs(diff) ** 2) / N**2
    grad = 0.0
    for axis in (0, 1):
        ok = both & np.roll(both, -1, axis=axis) & np.roll(both, 1, axis=axis)
        d = (np.roll(diff, -1, axis=axis) - np.roll(diff, 1, axis=axis)) * (N / 2.0)
        grad += np.sum(np.abs(d[ok]) ** 2) / N**2
    return math.sqrt(val + grad)


@dataclass(frozen=True)
class FrameBuildResult:
    frame: Frame
    skeleton: SkeletonResult
    smoothed: bool


def build_frame(
    family: ProjectorFamily,
    mesh: KMesh | int,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
    smooth: str = "auto",
    smooth_radius: float = 0.125,
    kernel_width: float = 0.0625,
    base_frame: np.ndarray | None = None,
) -> FrameBuildResult:
    """Full pipeline: skeleton, radial extension, and (when the topology
    allows) a Kato-Nagy smoothing pass over a disk around k=0 that removes
    the radial singularity.

    smooth = "auto" keeps the raw radial frame when the smoothing pass fails
    on the obstruction; "force" re-raises; "off" skips smoothing.
    """
    if isinstance(mesh, int):
        mesh = build_mesh(mesh)
    skel = skeleton_frame(family, mesh, steps_per_unit, base_frame=base_frame)
    frame = radial_extension(family, skel.frame, mesh, steps_per_unit)
    smoothed = False
    if smooth != "off":
        radii = np.linalg.norm(mesh.points, axis=-1)
        region = radii <= smooth_radius
        try:
            frame = local_smooth(family, frame, region, kernel_width)
            smoothed = True
        except (SmoothingGramSingular, ProjectorsTooFar):
            if smooth == "force":
                raise
    return FrameBuildResult(frame=frame, skeleton=skel, smoothed=smoothed)


def save_frame(frame: Frame, path, header: dict | None = None) -> None:
    """Columnar text export: one row per (k-index, band, orbital) with real
    and imaginary parts.  Undefined points are omitted."""
    N = frame.mesh.n_per_side
    lines = [f"# N={N} n={frame.n_orbitals} m={frame.n_bands}"]
    for key, val in (header or {}).items():
        lines.append(f"# {key}={val}")
    lines.append("i j band orbital re im")
    for i in range(N):
        for j in range(N):
            if not frame.mask[i, j]:
                continue
            for a in range(frame.n_bands):
                for orb in range(frame.n_orbitals):
                    z = frame.vectors[i, j, orb, a]
                    lines.append(
                        f"{i} {j} {a} {orb} {float(z.real)!r} {float(z.imag)!r}"
                    )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_frame(path) -> Frame:
    """Read a frame written by save_frame."""
    N = n = m = None
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("N="):
                        N = int(tok[2:])
                    elif tok.startswith("n="):
                        n = int(tok[2:])
                    elif tok.startswith("m="):
                        m = int(tok[2:])
                continue
            if not line or line[0].isalpha():
                continue
            rows.append(line.split())
    if N is None or n is None or m is None:
        raise ConfigError(f"{path}: missing N/n/m header")
    mesh = build_mesh(N)
    vectors = np.zeros((N, N, n, m), complex)
    mask = np.zeros((N, N), bool)
    for i_s, j_s, a_s, orb_s, re_s, im_s in rows:
        i, j, a, orb = int(i_s), int(j_s), int(a_s), int(orb_s)
        vectors[i, j, orb, a] = complex(float(re_s), float(im_s))
        mask[i, j] = True
    singular = tuple(
        (int(i), int(j)) for i, j in np.argwhere(~mask)
    )
    return Frame(mesh=mesh, vectors=vectors, mask=mask, singular_points=singular)
