"""Exception hierarchy shared by the solver modules."""


class CutFEMError(Exception):
    """Base class for all errors raised by the package."""


class DegenerateGradient(CutFEMError):
    pass


class NoRoot(CutFEMError):
    """No zero of the level set along the search segment."""


class DegenerateCut(CutFEMError):
    pass


class DegenerateElement(CutFEMError):
    pass


class ConfigError(CutFEMError):
    pass


class NoConvergence(CutFEMError):
    """Iterative solve stopped before reaching the tolerance.

    The best iterate found is kept on ``best`` so callers can still inspect it.
    """

    def __init__(self, max_iter, best=None, residual=None):
        super().__init__(f"no convergence after {max_iter} iterations (residual {residual})")
        self.max_iter = max_iter
        self.best = best
        self.residual = residual


class SingularMatrix(CutFEMError):
    pass
