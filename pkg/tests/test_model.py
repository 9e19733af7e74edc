import numpy as np
import pytest
from scipy.linalg import expm

from conftest import haldane_nontrivial, haldane_trivial
from wandich.errors import ConfigError, GapClosure, NonCommutingGenerators, NonCoprimeFlux
from wandich.model import (
    BlochModel,
    CovariantFamily,
    ProjectorFamily,
    build_haldane,
    build_hofstadter,
    check_gap,
    load_matrix_model,
    periodize,
    spectral_projector,
    spectral_projectors,
)

RNG = np.random.default_rng(7)


def sample_ks(n=40):
    return RNG.uniform(-0.5, 0.5, size=(n, 2))


@pytest.mark.parametrize(
    "model",
    [haldane_nontrivial(), haldane_trivial(), build_hofstadter(1, 3), build_hofstadter(2, 5)],
    ids=["haldane-nt", "haldane-tr", "hof13", "hof25"],
)
def test_hermiticity_and_periodicity(model):
    ks = sample_ks()
    H = model.h_many(ks)
    herm = np.linalg.norm(H - np.conj(np.swapaxes(H, -1, -2)), axis=(-2, -1))
    scale = np.linalg.norm(H, axis=(-2, -1))
    assert np.all(herm / scale <= 1e-12)
    for lam in ((1.0, 0.0), (0.0, 1.0)):
        H_shift = model.h_many(ks + np.array(lam))
        assert np.max(np.abs(H_shift - H)) <= 1e-12


def test_haldane_graphene_limit_gapless():
    rep = check_gap(build_haldane(1.0, 0.0, 0.0, 0.0), 96)
    assert rep.min_gap < 1e-6


def test_haldane_requires_t1():
    with pytest.raises(ConfigError):
        build_haldane(0.0, 0.1, 0.3, 0.0)


def test_hofstadter_preconditions():
    with pytest.raises(NonCoprimeFlux):
        build_hofstadter(0, 1)
    with pytest.raises(NonCoprimeFlux):
        build_hofstadter(2, 4)
    assert build_hofstadter(1, 3).dim == 3


def test_hofstadter_lowest_band_isolated():
    rep = check_gap(build_hofstadter(1, 3), 64)
    assert rep.min_gap > 0.5


def test_hofstadter_half_flux_touching():
    rep = check_gap(build_hofstadter(1, 2), 32)
    assert rep.min_gap < 1e-10


def test_spectral_projector_constant_model():
    def ham(ks):
        ks = np.asarray(ks, float)
        out = np.zeros(ks.shape[:-1] + (2, 2), complex)
        out[..., 0, 0] = -1.0
        out[..., 1, 1] = 1.0
        return out

    model = BlochModel(2, np.eye(2), ham, (0,), name="diag")
    P = spectral_projector(model, (0.3, -0.2))
    assert np.allclose(P, np.diag([1.0, 0.0]), atol=1e-14)


def test_spectral_projector_invariants(fam_nontrivial):
    ks = sample_ks()
    P = fam_nontrivial.eval_many(ks)
    assert np.max(np.linalg.norm(P @ P - P, axis=(-2, -1))) <= 1e-10
    assert np.max(np.linalg.norm(P - np.conj(np.swapaxes(P, -1, -2)), axis=(-2, -1))) <= 1e-10
    tr = np.trace(P, axis1=-2, axis2=-1)
    assert np.max(np.abs(tr - fam_nontrivial.rank)) <= 1e-10
    for lam in ((1.0, 0.0), (0.0, 1.0)):
        P_shift = fam_nontrivial.eval_many(ks + np.array(lam))
        assert np.max(np.linalg.norm(P_shift - P, axis=(-2, -1))) <= 1e-10


def test_spectral_projector_haldane_at_origin():
    model = haldane_nontrivial()
    P = spectral_projector(model, (0.0, 0.0))
    assert abs(np.trace(P) - 1.0) < 1e-12
    assert np.linalg.norm(P @ P - P) < 1e-12


def test_spectral_projector_gap_closure_at_dirac():
    model = build_haldane(1.0, 0.0, 0.0, 0.0)
    with pytest.raises(GapClosure):
        spectral_projectors(model, np.array([[-1 / 3, 1 / 3], [0.0, 0.0]]))


def test_spectral_projector_interior_window():
    """Gap check guards both edges of an interior occupied window."""
    model = build_hofstadter(1, 3)
    mid = BlochModel(
        dim=3,
        lattice_basis=model.lattice_basis,
        hamiltonian=model.hamiltonian,
        occupied=(1,),
        params=model.params,
        name="hof-mid",
    )
    rep = check_gap(mid, 32)
    assert rep.min_gap >= 0.0  # scan always reports


def test_check_gap_constant_diag():
    def ham(ks):
        ks = np.asarray(ks, float)
        out = np.zeros(ks.shape[:-1] + (2, 2), complex)
        out[..., 0, 0] = -1.0
        out[..., 1, 1] = 1.0
        return out

    model = BlochModel(2, np.eye(2), ham, (0,), name="diag")
    assert check_gap(model, 8).min_gap == pytest.approx(2.0)


def test_check_gap_dirac_straddle_vs_hit():
    graphene = build_haldane(1.0, 0.0, 0.0, 0.0)
    off = check_gap(graphene, 63)  # odd mesh allowed here; grid straddles K
    hit = check_gap(graphene, 96)
    assert off.min_gap > 1e-3
    assert hit.min_gap < 1e-8


def test_check_gap_nested_mesh_monotone(fam_trivial):
    model = haldane_trivial()
    g32 = check_gap(model, 32).min_gap
    g64 = check_gap(model, 64).min_gap
    assert g64 <= g32 + 1e-14  # coarse grid is a subset of the fine one


def test_gap_certified_family_rejects_closure():
    with pytest.raises(GapClosure):
        ProjectorFamily.from_model(build_hofstadter(1, 2))


def test_periodize_identity_generators(fam_trivial):
    taus = (np.eye(2, dtype=complex), np.eye(2, dtype=complex))
    cov = CovariantFamily(
        dim=2, rank=1, eval_many=fam_trivial.eval_many, taus=taus
    )
    out = periodize(cov, [np.zeros((2, 2)), np.zeros((2, 2))])
    ks = sample_ks(10)
    assert np.max(np.abs(out.eval_many(ks) - fam_trivial.eval_many(ks))) < 1e-14


def test_periodize_recovers_periodicity(fam_trivial):
    theta = 0.8
    M1 = np.diag([0.0, theta])
    M2 = np.zeros((2, 2))
    taus = (expm(1j * M1), expm(1j * M2))

    def cov_eval(ks):
        ks = np.atleast_2d(np.asarray(ks, float))
        P = fam_trivial.eval_many(ks)
        out = np.empty_like(P)
        for idx, k in enumerate(ks.reshape(-1, 2)):
            V = expm(1j * (k[0] * M1 + k[1] * M2))  # undo the periodization
            out.reshape(-1, 2, 2)[idx] = V @ P.reshape(-1, 2, 2)[idx] @ V.conj().T
        return out

    cov = CovariantFamily(dim=2, rank=1, eval_many=cov_eval, taus=taus)
    out = periodize(cov, [M1, M2])
    ks = sample_ks(10)
    for lam in ((1.0, 0.0), (0.0, 1.0)):
        res = np.max(np.abs(out.eval_many(ks + np.array(lam)) - out.eval_many(ks)))
        assert res < 1e-10


def test_periodize_noncommuting_generators(fam_trivial):
    taus = (np.eye(2, dtype=complex), np.eye(2, dtype=complex))
    cov = CovariantFamily(dim=2, rank=1, eval_many=fam_trivial.eval_many, taus=taus)
    M1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    M2 = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NonCommutingGenerators):
        periodize(cov, [M1, M2])


def test_matrixfile_round_trip(tmp_path):
    # nearest-neighbor square lattice: H(k) = 2cos(2 pi k1) + 2cos(2 pi k2) on site 0
    path = tmp_path / "hops.txt"
    rows = [
        "0 0 0 0 0.0 0.0",
        "0 0 1 1 5.0 0.0",
        "1 0 0 0 1.0 0.0",
        "-1 0 0 0 1.0 0.0",
        "0 1 0 0 1.0 0.0",
        "0 -1 0 0 1.0 0.0",
    ]
    path.write_text("\n".join(rows) + "\n")
    model = load_matrix_model(path, occupied=(0,))
    H = model.h((0.25, 0.0))
    assert abs(H[0, 0] - (2 * np.cos(np.pi / 2) + 2)) < 1e-12
    assert abs(H[1, 1] - 5.0) < 1e-12


def test_matrixfile_hermiticity_validated(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 0 0 0 1.0 0.0\n")  # missing the -1 0 partner
    with pytest.raises(ConfigError):
        load_matrix_model(path)


def test_occupied_window_validation():
    def ham(ks):
        ks = np.asarray(ks, float)
        return np.zeros(ks.shape[:-1] + (3, 3), complex)

    with pytest.raises(ConfigError):
        BlochModel(3, np.eye(2), ham, (0, 2))  # not contiguous
    with pytest.raises(ConfigError):
        BlochModel(3, np.eye(2), ham, (0, 1, 2))  # m == dim
