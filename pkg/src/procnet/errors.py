"""Exception types shared across the pipeline."""


class DataError(Exception):
    """Input data (or a statistic's precondition on it) is unusable.

    Raised for unreadable files, wrong column mappings, empty markets and
    statistics that are undefined on the observed data. The CLI maps this
    to exit code 1; programming errors stay ordinary ValueErrors.
    """
