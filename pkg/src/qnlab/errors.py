"""Exception types shared across the package."""


class ChargeImbalanceError(ValueError):
    """Source term of a periodic Poisson problem has the wrong mean."""

    def __init__(self, defect):
        self.defect = float(defect)
        super().__init__(f"mean(rho) - 1 = {self.defect:.3e}; torus Poisson problem is not solvable")


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual_history):
        self.residual_history = list(residual_history)
        super().__init__(f"{message}; residual history: {self.residual_history}")


class TruncationError(RuntimeError):
    """Mass reached the velocity cut-off layer or negative undershoots were too large."""


class TimeStepError(ValueError):
    def __init__(self, message, suggested_dt):
        self.suggested_dt = float(suggested_dt)
        super().__init__(f"{message}; suggested dt <= {self.suggested_dt:.6g}")


class VacuumError(RuntimeError):
    pass


class CapacityError(ValueError):
    """Transport problem exceeds the exact solver's size cap."""
