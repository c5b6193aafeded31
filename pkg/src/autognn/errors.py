"""Exception types shared across the package."""


class DatasetLoadError(Exception):
    """A mandatory dataset file is missing or unreadable."""


class DatasetFormatError(Exception):
    """A dataset file is present but malformed (bad ids, conflicts, ...)."""


class CapacityError(Exception):
    """An operation would exceed a hard size cap (e.g. one-hot unrolling)."""


class BudgetExhaustedError(Exception):
    """A trial was refused because the time budget is already spent."""


class ScoringError(Exception):
    """Prediction and truth files disagree on the covered node ids."""
