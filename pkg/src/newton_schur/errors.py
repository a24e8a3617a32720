"""Exception types raised by the solver stack."""


class NewtonSchurError(Exception):
    pass


class ConfigurationError(NewtonSchurError, ValueError):
    """Invalid mesh sizes, domains or experiment settings."""


class AssemblyError(NewtonSchurError):
    pass


class ShiftTooLargeError(NewtonSchurError):
    """An interior block ``A_kk - rho M_kk`` is not positive definite (rho >= alpha)."""

    def __init__(self, rho: float, subdomain: int, pivot: float):
        super().__init__(
            f"shift rho={rho!r} is not below the interior coercivity threshold "
            f"(subdomain {subdomain}, pivot {pivot:.3e})"
        )
        self.rho = rho
        self.subdomain = subdomain
        self.pivot = pivot


class ConvergenceError(NewtonSchurError):
    def __init__(self, message: str, best_residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (best residual {best_residual:.3e} after {iterations} iterations)")
        self.best_residual = best_residual
        self.iterations = iterations
