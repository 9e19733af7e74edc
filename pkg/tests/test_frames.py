import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wandich.errors import (
    NearDependent,
    ProjectorsTooFar,
    ReprojectionSingular,
    SmoothingGramSingular,
)
from wandich.frames import (
    Frame,
    build_frame,
    frame_h1_distance,
    gradient_bound,
    gram_schmidt,
    gram_schmidt_sequential,
    kato_nagy,
    kato_nagy_frame,
    load_frame,
    local_smooth,
    mollify_reproject,
    orthonormality_defect,
    radial_extension,
    save_frame,
    skeleton_frame,
    subordination_defect,
)
from wandich.kmesh import build_mesh


def constant_frame(N=16, n=2, m=1):
    mesh = build_mesh(N)
    vec = np.zeros((N, N, n, m), complex)
    for a in range(m):
        vec[..., a, a] = 1.0
    return Frame(mesh=mesh, vectors=vec, mask=np.ones((N, N), bool))


# ---------------------------------------------------------------- skeleton

def test_skeleton_constant_family(constant_family):
    mesh = build_mesh(16)
    res = skeleton_frame(constant_family, mesh)
    assert res.vertex_residual == pytest.approx(0.0, abs=1e-14)
    assert res.edge_residual == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("phase", ["nontrivial", "trivial"])
def test_skeleton_haldane_residuals(phase, fam_nontrivial, fam_trivial):
    fam = fam_nontrivial if phase == "nontrivial" else fam_trivial
    res = skeleton_frame(fam, build_mesh(64))
    assert res.vertex_residual < 1e-6
    assert res.edge_residual < 1e-6
    assert orthonormality_defect(res.frame) < 1e-8


# ---------------------------------------------------------- radial extension

def test_radial_constant_family(constant_family):
    mesh = build_mesh(16)
    skel = skeleton_frame(constant_family, mesh)
    frame = radial_extension(constant_family, skel.frame, mesh)
    want = np.zeros((2, 1), complex)
    want[0, 0] = 1.0
    phase_fixed = frame.vectors[frame.mask]
    # constant family: every vector equals the base frame up to nothing at all
    assert np.max(np.abs(phase_fixed - want)) < 1e-12
    assert frame.singular_points == ((8, 8),)


@pytest.mark.parametrize("phase", ["nontrivial", "trivial"])
def test_radial_frame_invariants(phase, built_frames, fam_nontrivial, fam_trivial):
    fam = fam_nontrivial if phase == "nontrivial" else fam_trivial
    frame = built_frames(phase, 32).frame
    assert orthonormality_defect(frame) <= 1e-8
    assert subordination_defect(frame, fam) <= 1e-6


def test_radial_gradient_bound_stable_under_refinement(built_frames):
    g32 = gradient_bound(built_frames("nontrivial", 32).frame)
    g64 = gradient_bound(built_frames("nontrivial", 64).frame)
    ratio = g64.sup_weighted / g32.sup_weighted
    assert 1 / 1.5 <= ratio <= 1.5


def test_trivial_frame_smooth_across_origin(built_frames):
    built = built_frames("trivial", 32)
    assert built.smoothed
    frame = built.frame
    assert frame.mask.all()
    # nearest-neighbor increments near 0 comparable to elsewhere
    N = 32
    d = np.linalg.norm(
        np.diff(frame.vectors, axis=0).reshape(N - 1, N, -1), axis=-1
    )
    sl = slice(N // 2 - 2, N // 2 + 2)
    center = d[sl, sl].max()
    away = d.copy()
    away[sl, sl] = 0.0
    assert center <= 1.5 * away.max()


def test_nontrivial_frame_keeps_singularity(built_frames):
    built = built_frames("nontrivial", 32)
    assert not built.smoothed
    assert built.frame.singular_points == ((16, 16),)


# ----------------------------------------------------------------- kato_nagy

def test_kato_nagy_identity():
    P = np.diag([1.0, 0.0]).astype(complex)
    assert np.allclose(kato_nagy(P, P), np.eye(2), atol=1e-14)


def test_kato_nagy_rotated_rank_one():
    th = 0.3
    P1 = np.diag([1.0, 0.0]).astype(complex)
    v = np.array([np.cos(th), np.sin(th)])
    P2 = np.outer(v, v).astype(complex)
    W = kato_nagy(P2, P1)
    assert np.linalg.norm(W.conj().T @ W - np.eye(2)) < 1e-12
    assert np.linalg.norm(W @ P2 @ W.conj().T - P1) < 1e-12


def test_kato_nagy_orthogonal_projectors_rejected():
    P1 = np.diag([1.0, 0.0]).astype(complex)
    P2 = np.diag([0.0, 1.0]).astype(complex)
    with pytest.raises(ProjectorsTooFar):
        kato_nagy(P2, P1)


def random_projector_pair(rng, n, max_dist=0.9):
    """Random rank-r projector and a unitary rotation of it with
    ||P1 - P2|| <= max_dist."""
    r = int(rng.integers(1, n))
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, _ = np.linalg.qr(A)
    P1 = Q[:, :r] @ Q[:, :r].conj().T
    for scale in (1.0, 0.5, 0.25, 0.1, 0.02):
        K = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        K = scale * (K - K.conj().T) / 2
        from scipy.linalg import expm

        V = expm(K)
        P2 = V @ P1 @ V.conj().T
        dist = np.max(np.abs(np.linalg.eigvalsh(P1 - P2)))
        if dist <= max_dist:
            return P1, P2
    return P1, P1


def test_kato_nagy_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        P1, P2 = random_projector_pair(rng, n)
        W = kato_nagy(P2, P1)
        assert np.linalg.norm(W.conj().T @ W - np.eye(n)) <= 1e-9
        assert np.linalg.norm(W @ P2 @ W.conj().T - P1) <= 1e-9


# ---------------------------------------------------------------- local_smooth

def test_local_smooth_constant_unchanged(constant_family):
    frame = constant_frame(16)
    region = np.zeros((16, 16), bool)
    region[6:10, 6:10] = True
    out = local_smooth(constant_family, frame, region, kernel_width=0.2)
    assert np.max(np.abs(out.vectors - frame.vectors)) < 1e-12


def test_local_smooth_reduces_seam_increments(fam_nontrivial, built_frames):
    frame = built_frames("nontrivial", 32).frame
    N = 32
    radii = np.linalg.norm(frame.mesh.points, axis=-1)
    region = (radii > 0.25 - 0.08) & (radii < 0.25 + 0.08)

    def max_increment(fr, sel):
        d1 = np.linalg.norm(np.diff(fr.vectors, axis=0), axis=(-2, -1))
        return d1[sel[:-1, :] & sel[1:, :]].max()

    before = max_increment(frame, region)
    out = local_smooth(fam_nontrivial, frame, region, kernel_width=1.5 / N)
    after = max_increment(out, region)
    assert after <= before
    assert subordination_defect(out, fam_nontrivial) < 1e-6


def test_local_smooth_collapses_on_obstruction(fam_nontrivial, built_frames):
    frame = built_frames("nontrivial", 32).frame
    radii = np.linalg.norm(frame.mesh.points, axis=-1)
    region = radii <= 0.2  # covers the singular point of a Chern -1 frame
    with pytest.raises((SmoothingGramSingular, ProjectorsTooFar)):
        local_smooth(fam_nontrivial, frame, region, kernel_width=0.15)


# ---------------------------------------------------------------- gram_schmidt

def test_gram_schmidt_orthonormal_input_fixed():
    V = np.eye(3)[:2]
    out = gram_schmidt(V)
    assert np.max(np.abs(out - V)) < 1e-12


def test_gram_schmidt_two_vectors_c2():
    V = np.array([[1.0, 0.0], [1 / np.sqrt(2), 1 / np.sqrt(2)]], complex)
    out = gram_schmidt(V)
    assert np.max(np.abs(out - np.eye(2))) < 1e-12
    seq = gram_schmidt_sequential(V)
    assert np.max(np.abs(out - seq)) < 1e-12


def test_gram_schmidt_near_dependent():
    V = np.array([[1.0, 0.0], [1.0, 1e-8]], complex)
    with pytest.raises(NearDependent):
        gram_schmidt(V)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_gram_schmidt_matches_sequential(m, extra, seed):
    n = m + extra
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
    # keep the instance well-conditioned
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] < 0.3:
        V = V + 2.0 * np.eye(m, n)
        if np.linalg.svd(V, compute_uv=False)[-1] < 0.3:
            return
    det_form = gram_schmidt(V)
    seq = gram_schmidt_sequential(V)
    assert np.max(np.abs(det_form - seq)) <= 1e-9
    gram = det_form.conj() @ det_form.T
    assert np.max(np.abs(gram - np.eye(m))) < 1e-10


# -------------------------------------------------------------- mollify

def test_mollify_constant_unchanged():
    frame = constant_frame(16)
    out = mollify_reproject(frame, width=0.2)
    assert np.max(np.abs(out.vectors - frame.vectors)) < 1e-12


def test_mollify_orthonormal_and_width_monotone(built_frames):
    frame = built_frames("trivial", 32).frame
    N = 32
    dists = []
    for width in (4 / N, 2 / N, 1 / N):
        out = mollify_reproject(frame, width)
        assert orthonormality_defect(out) <= 1e-10
        dists.append(np.max(np.abs(out.vectors - frame.vectors)))
    assert dists[0] >= dists[1] >= dists[2]


def test_mollify_winding_frame_singular():
    """A unit-winding frame (the obstruction in its purest form) mollifies to
    an exact zero at the origin: the symmetric kernel cancels e^{i theta}
    pairwise, so the polar factor collapses."""
    N = 32
    mesh = build_mesh(N)
    theta = np.arctan2(mesh.points[..., 1], mesh.points[..., 0])
    vec = np.zeros((N, N, 2, 1), complex)
    vec[..., 0, 0] = np.exp(1j * theta)
    mask = np.ones((N, N), bool)
    mask[N // 2, N // 2] = False
    frame = Frame(mesh=mesh, vectors=vec, mask=mask, singular_points=((N // 2, N // 2),))
    with pytest.raises(ReprojectionSingular):
        mollify_reproject(frame, width=4 / N)


def _mollified_min_sigma(frame, width):
    from wandich.frames import _bump_weights

    N = frame.mesh.n_per_side
    reach = int(np.ceil(width * N))
    offs = np.arange(-reach, reach + 1)
    oi, oj = np.meshgrid(offs, offs, indexing="ij")
    w = _bump_weights(np.stack([oi, oj], axis=-1) / N, width)
    masked = np.where(frame.mask[..., None, None], frame.vectors, 0.0)
    conv = np.zeros_like(frame.vectors)
    norm = np.zeros((N, N))
    for a in range(len(offs)):
        for b in range(len(offs)):
            if w[a, b] == 0:
                continue
            conv += w[a, b] * np.roll(np.roll(masked, -offs[a], 0), -offs[b], 1)
            norm += w[a, b] * np.roll(np.roll(frame.mask, -offs[a], 0), -offs[b], 1)
    conv /= norm[..., None, None]
    return float(np.linalg.svd(conv, compute_uv=False)[..., -1].min())


def test_mollify_haldane_collapse_signature(built_frames):
    """On the Chern -1 radial frame the mollified polar factor collapses far
    below the trivial phase's (near 1) smallest singular value, though not to
    an exact zero on a finite mesh."""
    s_nontrivial = _mollified_min_sigma(built_frames("nontrivial", 32).frame, 4 / 32)
    s_trivial = _mollified_min_sigma(built_frames("trivial", 32).frame, 4 / 32)
    assert s_nontrivial < 0.2
    assert s_trivial > 0.8
    out = mollify_reproject(built_frames("nontrivial", 32).frame, width=4 / 32)
    assert orthonormality_defect(out) <= 1e-10


# -------------------------------------------------------------- gradient bound

def test_gradient_bound_constant_zero():
    rep = gradient_bound(constant_frame(16))
    assert rep.sup_weighted == 0.0
    assert rep.sup_unweighted == 0.0


def test_gradient_bound_trivial_profile_bounded(built_frames):
    frame = built_frames("trivial", 32).frame
    rep = gradient_bound(frame)
    values = [g for _, g in rep.per_radius_profile]
    assert max(values) <= rep.sup_unweighted + 1e-12
    # no 1/|k| blowup: the inner bins stay comparable to the outer ones
    assert values[0] <= 3.0 * max(values[2:])


# ---------------------------------------------------------- kato_nagy_frame

def test_kato_nagy_frame_trivial_analytic(fam_trivial):
    frame = kato_nagy_frame(fam_trivial, 16)
    assert orthonormality_defect(frame) < 1e-10
    assert subordination_defect(frame, fam_trivial) < 1e-9


def test_kato_nagy_frame_impossible_for_nontrivial(fam_nontrivial):
    with pytest.raises(ProjectorsTooFar):
        kato_nagy_frame(fam_nontrivial, 16)


# -------------------------------------------------------------- serialization

def test_frame_save_load_round_trip(tmp_path, built_frames):
    frame = built_frames("nontrivial", 32).frame
    path = tmp_path / "frame.csv"
    save_frame(frame, path, header={"model": "haldane", "M": 0.0})
    back = load_frame(path)
    assert back.mesh.n_per_side == 32
    assert np.array_equal(back.mask, frame.mask)
    assert np.max(np.abs(back.vectors - frame.vectors)) == 0.0
    assert back.singular_points == frame.singular_points


def test_frame_h1_distance_zero_on_equal(built_frames):
    frame = built_frames("trivial", 32).frame
    assert frame_h1_distance(frame, frame) == 0.0
