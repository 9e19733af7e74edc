"""Exception hierarchy.

Three branches map onto the CLI exit-code contract: configuration and
precondition problems (exit 1), spectral-gap and branch-cut failures
(exit 2), and numerical-certificate failures (exit 3).
"""


class WandichError(Exception):
    """Base class for all library errors."""


class ConfigError(WandichError):
    """Invalid configuration, parameters, or input files."""


class NonCoprimeFlux(ConfigError):
    """Hofstadter flux p/q with gcd(p, q) != 1 or q < 2."""


class OddMeshSize(ConfigError):
    """Mesh size must be even so k=0 and the cell vertices are mesh points."""


class SupercellTooSmall(ConfigError):
    """Supercell radius L < N/2 would alias the Wannier tail."""


class NonCommutingGenerators(ConfigError):
    """Covariance generators must commute pairwise."""


class CovarianceMismatch(ConfigError):
    """exp(i M_j) does not reproduce the declared covariance unitaries."""


class GapError(WandichError):
    """Spectral-gap or branch-cut failure (CLI exit 2)."""


class GapClosure(GapError):
    """Occupied bands touch the rest of the spectrum at some k-point."""

    def __init__(self, k, gap):
        self.k = tuple(float(x) for x in k)
        self.gap = float(gap)
        super().__init__(f"spectral gap {self.gap:.3e} below tolerance at k={self.k}")


class BranchDegenerate(GapError):
    """Unitary has an eigenphase at the -pi branch cut of the logarithm."""


class CertificateError(WandichError):
    """A numerical certificate failed (CLI exit 3)."""


class PlaquetteTooCoarse(CertificateError):
    """Link-variable plaquette phases too large, or rounding residual too big."""


class ProjectorsTooFar(CertificateError):
    """||P - P0|| >= 1: the two projectors cannot be conjugated into each other."""


class SmoothingGramSingular(CertificateError):
    """Mollified frame candidate has Gram matrix too far from the identity."""


class NearDependent(CertificateError):
    """Gram determinant below threshold: input vectors nearly dependent."""


class ReprojectionSingular(CertificateError):
    """Mollified frame matrix is rank-deficient; no nearby orthonormal frame."""


class InsufficientSupport(CertificateError):
    """Too few populated radial shells for a decay fit."""


class TruncationNotInjective(CertificateError):
    """Coordinate truncation is (numerically) not injective on the occupied fibers."""


class GramTooSmall(CertificateError):
    """Pointwise Gram determinant of a projected frame below 1/2."""

    def __init__(self, k, value):
        self.k = tuple(float(x) for x in k)
        self.value = float(value)
        super().__init__(f"Gram determinant |G|={self.value:.3e} <= 1/2 at k={self.k}")
