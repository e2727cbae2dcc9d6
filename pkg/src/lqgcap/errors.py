"""Exception types shared across the package."""


class LqgcapError(Exception):
    """Base class for all errors raised by lqgcap."""


class ConfigError(LqgcapError):
    """Malformed configuration input (bad JSON, unknown or missing keys)."""


class DimensionMismatch(LqgcapError):
    """A matrix does not have the shape implied by the rest of the system."""


class NotPsd(LqgcapError):
    """A matrix that must be positive semidefinite is not."""

    def __init__(self, name, min_eig):
        self.name = name
        self.min_eig = float(min_eig)
        super().__init__(f"{name} is not positive semidefinite "
                         f"(smallest eigenvalue {self.min_eig:.3e})")


class NotPd(LqgcapError):
    """A matrix that must be positive definite is not."""

    def __init__(self, name, min_eig):
        self.name = name
        self.min_eig = float(min_eig)
        super().__init__(f"{name} is not positive definite "
                         f"(smallest eigenvalue {self.min_eig:.3e})")


class NoConvergence(LqgcapError):
    """A fixed-point iteration did not converge within its iteration budget."""

    def __init__(self, what, iterations, defect):
        self.what = what
        self.iterations = int(iterations)
        self.defect = float(defect)
        super().__init__(f"{what} did not converge after {iterations} iterations "
                         f"(last defect {defect:.3e})")


class NotStabilizing(LqgcapError):
    """A computed fixed point does not stabilize its closed loop."""


class NotStabilizable(LqgcapError):
    """The pair (F, G) is not stabilizable; the regulator problem is ill posed."""


class SingularInnovation(LqgcapError):
    """An innovation covariance lost positive definiteness during a recursion."""


class ProblemStructureError(LqgcapError):
    """A determinant-maximization problem is structurally invalid
    (non-symmetric or non-affine constraint maps)."""


class SolverFailure(LqgcapError):
    """The optimization engine failed to produce a usable solution."""

    def __init__(self, status, notes=()):
        self.status = status
        self.notes = list(notes)
        msg = f"solver failed with status {status}"
        if self.notes:
            msg += ": " + "; ".join(self.notes)
        super().__init__(msg)


class BudgetBelowFloor(LqgcapError):
    """The control cost budget is below the minimum achievable LQG cost."""

    def __init__(self, budget, floor):
        self.budget = float(budget)
        self.floor = float(floor)
        super().__init__(f"budget {self.budget:.9g} is below the minimum achievable "
                         f"control cost {self.floor:.9g}; no policy exists")


class AssumptionViolation(LqgcapError):
    """The system fails a structural assumption required downstream."""

    def __init__(self, report, needed):
        self.report = report
        self.needed = list(needed)
        super().__init__("system fails required structural checks: "
                         + ", ".join(needed))


class NumericalBlowup(LqgcapError):
    """A simulated trajectory exceeded the divergence guard."""

    def __init__(self, step, norm):
        self.step = int(step)
        self.norm = float(norm)
        super().__init__(f"state norm {norm:.3e} exceeded the divergence guard "
                         f"at step {step}")


class TooFewSamples(LqgcapError):
    """Not enough samples to form a meaningful covariance estimate."""
