"""Exception hierarchy shared by all microlab modules."""


class LabError(ValueError):
    """Base class for every error raised by microlab."""


class NonHermitianError(LabError):
    def __init__(self, asymmetry, tol):
        self.asymmetry = float(asymmetry)
        self.tol = float(tol)
        super().__init__(
            f"matrix is not Hermitian: max |H - H^dagger| = {asymmetry:.3e} > {tol:.1e}"
        )


class ExponentOverflowError(LabError):
    def __init__(self, eigenvalue, bound):
        self.eigenvalue = float(eigenvalue)
        self.bound = float(bound)
        super().__init__(
            f"exponent eigenvalue {eigenvalue:.6g} exceeds the overflow bound {bound:.6g}"
        )


class SpectralFloorError(LabError):
    def __init__(self, eigenvalue, floor):
        self.eigenvalue = float(eigenvalue)
        self.floor = float(floor)
        super().__init__(
            f"eigenvalue {eigenvalue:.3e} is below the spectral floor {floor:.1e}; "
            "a full-rank state is required"
        )


class DimensionError(LabError):
    """Mismatched or excessive dimensions."""


class AdmissibilityError(LabError):
    """An observable violates the sector (number-conservation) requirement."""


class ConvergenceError(LabError):
    """An iterative procedure could not reach its tolerance."""


class StepSizeError(LabError):
    def __init__(self, value, bound):
        self.value = float(value)
        self.bound = float(bound)
        super().__init__(
            f"step size too large: dt * ||generator|| = {value:.4g} exceeds the "
            f"stability bound {bound:.4g}"
        )


class ScenarioError(LabError):
    """Invalid scenario file (parse or semantic validation)."""
