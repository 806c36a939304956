"""Exception types shared across the toolkit."""


class MixnormError(Exception):
    """Base class for all errors raised by mixnorm."""


class DataError(MixnormError):
    """User or data problem (bad file, bad dataset layout, bad parameters).

    The CLI maps this to exit code 2; everything else exits 1.
    """
