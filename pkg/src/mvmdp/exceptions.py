"""Exception types raised across the package."""


class MVMDPError(Exception):
    """Base class for all package errors."""


class OutOfBounds(MVMDPError, ValueError):
    pass


class EmptyActionGrid(MVMDPError, ValueError):
    pass


class CapExceeded(MVMDPError, RuntimeError):
    """An enumeration would exceed its configured size cap.

    The exact count that was requested is kept on ``count``.
    """

    def __init__(self, what, count, cap):
        self.what = what
        self.count = int(count)
        self.cap = int(cap)
        super().__init__(f"{what}: {self.count} items exceeds cap {self.cap}")


class SupportMismatch(MVMDPError, ValueError):
    pass


class SizeMismatch(MVMDPError, ValueError):
    pass


class InvalidAction(MVMDPError, ValueError):
    pass


class NonStochasticKernel(MVMDPError, ValueError):
    def __init__(self, row, total):
        self.row = row
        self.total = total
        super().__init__(f"kernel row {row} sums to {total!r}, not 1")


class UnreachableState(MVMDPError, KeyError):
    pass


class ContractionViolated(MVMDPError, ValueError):
    pass


class ArtifactMismatch(MVMDPError, ValueError):
    pass


class ConfigError(MVMDPError, ValueError):
    pass
