import numpy as np
import pytest

from conftest import blockdiag_model, fourband_model
from wandich.errors import GramTooSmall, TruncationNotInjective
from wandich.frames import Frame, frame_h1_distance, kato_nagy_frame
from wandich.galerkin import (
    TruncationReport,
    embed_family,
    frame_truncate,
    projector_h1_distance,
    truncate_family,
)
from wandich.kmesh import build_mesh
from wandich.model import ProjectorFamily
from wandich.topology import chern_fhs


@pytest.fixture(scope="module")
def fam4():
    return ProjectorFamily.from_model(fourband_model())


@pytest.fixture(scope="module")
def mesh24():
    return build_mesh(24)


def test_truncate_full_dimension_is_identity(fam4, mesh24):
    reduced, rep = truncate_family(fam4, 4, mesh24)
    assert rep.min_injectivity == pytest.approx(1.0, abs=1e-12)
    assert rep.projector_h1_distance <= 1e-10
    ks = mesh24.points[::6, ::6].reshape(-1, 2)
    assert np.max(np.abs(reduced.eval_many(ks) - fam4.eval_many(ks))) < 1e-10


def test_truncate_concentrated_family(fam4, mesh24):
    _, rep2 = truncate_family(fam4, 2, mesh24)
    assert rep2.min_injectivity > 0.9
    assert rep2.chern_preserved is True


def test_truncate_orthogonal_support_rejected(mesh24):
    fam = ProjectorFamily.from_model(blockdiag_model())
    with pytest.raises(TruncationNotInjective):
        truncate_family(fam, 2, mesh24)


def test_truncate_below_rank_rejected(fam4, mesh24):
    with pytest.raises(TruncationNotInjective):
        truncate_family(fam4, 1, mesh24)


def test_truncate_hofstadter_preserves_chern(fam_hofstadter, mesh24):
    reduced, rep = truncate_family(fam_hofstadter, 2, mesh24)
    assert rep.min_injectivity >= 1e-3
    assert rep.chern_preserved is True
    assert chern_fhs(reduced, mesh24) == 1


def test_h1_distance_decreases_with_n(fam4, mesh24):
    dists = [
        truncate_family(fam4, n, mesh24)[1].projector_h1_distance for n in (2, 3, 4)
    ]
    assert dists[0] > dists[1] > dists[2]


def test_isomorphism_invariance_whenever_certified(fam4, fam_hofstadter, mesh24):
    for fam in (fam4, fam_hofstadter):
        for n in range(fam.rank, fam.dim + 1):
            try:
                reduced, rep = truncate_family(fam, n, mesh24)
            except TruncationNotInjective:
                continue
            if rep.certified:
                assert chern_fhs(reduced, mesh24) == chern_fhs(fam, mesh24)


def test_projector_h1_distance_metric_properties(fam4, mesh24):
    fam_h = ProjectorFamily.from_model(fourband_model(eps=0.2))
    d_self = projector_h1_distance(fam4, fam4, mesh24)
    assert d_self == 0.0
    d_ab = projector_h1_distance(fam4, fam_h, mesh24)
    d_ba = projector_h1_distance(fam_h, fam4, mesh24)
    assert d_ab == pytest.approx(d_ba, abs=1e-12)
    fam_c = ProjectorFamily.from_model(fourband_model(eps=0.05))
    d_ac = projector_h1_distance(fam4, fam_c, mesh24)
    d_cb = projector_h1_distance(fam_c, fam_h, mesh24)
    assert d_ab <= d_ac + d_cb + 1e-10


def test_projector_h1_distance_closed_form():
    """Constant rank-1 families differing by a rotation angle theta: the
    distance is the closed-form Frobenius distance, gradients vanish."""
    theta = 0.2
    P1 = np.diag([1.0, 0.0]).astype(complex)
    v = np.array([np.cos(theta), np.sin(theta)])
    P2 = np.outer(v, v).astype(complex)
    f1 = ProjectorFamily.constant(P1)
    f2 = ProjectorFamily.constant(P2)
    mesh = build_mesh(8)
    dist = projector_h1_distance(f1, f2, mesh)
    assert dist == pytest.approx(np.sqrt(2.0) * abs(np.sin(theta)), abs=1e-12)


def test_frame_truncate_identity(fam4, mesh24):
    frame = kato_nagy_frame(fam4, mesh24)
    out = frame_truncate(frame, 4)
    assert np.max(np.abs(out.vectors - frame.vectors)) < 1e-12


def test_frame_truncate_negligible_weight():
    """A 2-orbital model embedded in 3 orbitals: dropping the empty orbital
    is an H1-negligible operation."""
    from conftest import haldane_trivial
    from wandich.model import BlochModel

    base = haldane_trivial()

    def ham(ks):
        ks = np.asarray(ks, float)
        h2 = base.h_many(ks)
        out = np.zeros(ks.shape[:-1] + (3, 3), complex)
        out[..., :2, :2] = h2
        out[..., 2, 2] = 10.0
        return out

    model = BlochModel(3, base.lattice_basis, ham, (0,), name="embedded")
    fam = ProjectorFamily.from_model(model)
    frame = kato_nagy_frame(fam, 16)
    out = frame_truncate(frame, 2)
    assert frame_h1_distance(out, frame) < 1e-6
    # output vectors live in V_2
    assert np.max(np.abs(out.vectors[..., 2, :])) == 0.0


def test_frame_truncate_vanishing_weight_rejected():
    N = 8
    mesh = build_mesh(N)
    vec = np.zeros((N, N, 3, 1), complex)
    vec[..., 2, 0] = 1.0  # unit weight on the orbital being dropped
    frame = Frame(mesh=mesh, vectors=vec, mask=np.ones((N, N), bool))
    with pytest.raises(GramTooSmall):
        frame_truncate(frame, 2)


def test_truncation_report_certification():
    rep = TruncationReport(
        n=2, min_injectivity=5e-4, chern_preserved=None, projector_h1_distance=0.1
    )
    assert not rep.certified


def test_embed_family_round_trip(fam4, mesh24):
    reduced, _ = truncate_family(fam4, 3, mesh24)
    big = embed_family(reduced, 4)
    ks = mesh24.points[::8, ::8].reshape(-1, 2)
    P = big.eval_many(ks)
    assert P.shape[-1] == 4
    assert np.max(np.abs(P[..., 3, :])) == 0.0
    tr = np.trace(P, axis1=-2, axis2=-1)
    assert np.max(np.abs(tr - 2.0)) < 1e-10
