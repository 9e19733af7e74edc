import numpy as np
import pytest

from wandich.model import BlochModel, ProjectorFamily, build_haldane, build_hofstadter

HEX_BASIS = np.array([[1.0, 0.0], [0.5, 0.5 * np.sqrt(3.0)]])


def haldane_nontrivial() -> BlochModel:
    return build_haldane(t1=1.0, t2=0.1, phi=np.pi / 2, M=0.0)


def haldane_trivial() -> BlochModel:
    return build_haldane(t1=1.0, t2=0.1, phi=np.pi / 2, M=1.0)


def fourband_model(eps: float = 0.35, swap: bool = False) -> BlochModel:
    """Synthetic 4-orbital model with a rank-2 occupied family concentrated on
    orbitals {0, 1} (or {2, 3} with swap=True)."""
    D = np.diag([-2.0, -1.0, 1.0, 2.0])

    def ham(ks):
        ks = np.asarray(ks, float)
        w1 = 2 * np.pi * ks[..., 0]
        w2 = 2 * np.pi * ks[..., 1]
        V = np.zeros(ks.shape[:-1] + (4, 4), complex)
        V[..., 0, 1] = np.cos(w1) + 0.3j * np.sin(w2)
        V[..., 0, 2] = 0.4 * np.exp(1j * w1)
        V[..., 1, 3] = 0.5 * np.exp(-1j * w2)
        V[..., 2, 3] = 0.2 * np.cos(w2)
        V = V + np.conj(np.swapaxes(V, -1, -2))
        h = D + eps * V
        if swap:
            perm = np.zeros((4, 4))
            perm[0, 2] = perm[1, 3] = perm[2, 0] = perm[3, 1] = 1.0
            h = perm @ h @ perm.T
        return h

    return BlochModel(
        dim=4,
        lattice_basis=np.eye(2),
        hamiltonian=ham,
        occupied=(0, 1),
        params={"eps": eps},
        name="fourband",
    )


def blockdiag_model() -> BlochModel:
    """Occupied bands supported exactly on orbitals {2, 3}: the coordinate
    truncation to n=2 has zero injectivity."""

    def ham(ks):
        ks = np.asarray(ks, float)
        w1 = 2 * np.pi * ks[..., 0]
        h = np.zeros(ks.shape[:-1] + (4, 4), complex)
        h[..., 0, 0] = 3.0 + np.cos(w1)
        h[..., 1, 1] = 4.0
        h[..., 2, 2] = -3.0 + 0.5 * np.cos(w1)
        h[..., 3, 3] = -4.0
        h[..., 2, 3] = 0.3 * np.exp(1j * w1)
        h[..., 3, 2] = 0.3 * np.exp(-1j * w1)
        return h

    return BlochModel(
        dim=4,
        lattice_basis=np.eye(2),
        hamiltonian=ham,
        occupied=(0, 1),
        params={},
        name="blockdiag",
    )


@pytest.fixture(scope="session")
def fam_nontrivial() -> ProjectorFamily:
    return ProjectorFamily.from_model(haldane_nontrivial())


@pytest.fixture(scope="session")
def fam_trivial() -> ProjectorFamily:
    return ProjectorFamily.from_model(haldane_trivial())


@pytest.fixture(scope="session")
def fam_hofstadter() -> ProjectorFamily:
    return ProjectorFamily.from_model(build_hofstadter(1, 3))


@pytest.fixture(scope="session")
def constant_family() -> ProjectorFamily:
    return ProjectorFamily.constant(np.diag([1.0, 0.0]).astype(complex))


@pytest.fixture(scope="session")
def built_frames(fam_nontrivial, fam_trivial):
    """Pipeline frames cached per (phase, N); built lazily on first use."""
    from wandich.frames import build_frame

    cache = {}

    def get(phase: str, N: int):
        key = (phase, N)
        if key not in cache:
            fam = fam_nontrivial if phase == "nontrivial" else fam_trivial
            cache[key] = build_frame(fam, N)
        return cache[key]

    return get
