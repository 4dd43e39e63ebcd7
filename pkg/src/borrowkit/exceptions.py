class BorrowkitError(Exception):
    """Base class for errors raised by borrowkit."""


class NonConvergence(BorrowkitError):
    pass


class Separation(BorrowkitError):
    """Source labels are (quasi-)perfectly separated by the covariates."""


class SingularDesign(BorrowkitError):
    pass


class RankDeficient(BorrowkitError):
    pass


class TooFewRows(BorrowkitError):
    pass


class EssTooSmall(BorrowkitError):
    """Effective external sample size is at most one, so the weighted variance is undefined."""


class SchemaError(BorrowkitError):
    """Dataset or configuration does not match the expected schema."""
