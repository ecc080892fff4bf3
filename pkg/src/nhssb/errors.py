"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid parameters, configuration shapes or job specifications."""


class SpectralError(RuntimeError):
    """A spectral computation failed or produced an inconsistent result.

    Raised for eigensolver failures, broken conjugate pairing (a Monte Carlo
    weight that is not real and non-negative) and ill-conditioned eigenbases
    that could not be repaired by regularization.
    """
