"""Exception types shared across the package."""


class LatticeMismatchError(ValueError):
    pass


class InvalidFieldError(ValueError):
    pass


class BlowUpError(FloatingPointError):
    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite state detected at t={t:.17g}")


class StabilityError(RuntimeError):
    def __init__(self, dt, dt_max):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"dt={dt:.6g} exceeds the stability budget {dt_max:.6g}")


class PicardError(RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Picard iteration on the viscosity coefficient did not converge in "
            f"{iterations} iterations (relative change {residual:.3e})"
        )


class InsufficientDataError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class TangentCollapseError(RuntimeError):
    def __init__(self, step, index):
        self.step = step
        self.index = index
        super().__init__(f"tangent {index} collapsed during re-orthonormalization at step {step}")


class ConfigError(ValueError):
    pass
