"""Exception types shared across the package."""


class CsiCryptError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CsiCryptError, ValueError):
    """An argument violated a documented precondition."""


class UnderdeterminedError(CsiCryptError):
    """A least-squares block has fewer equations than unknowns."""


class SingularBlockError(CsiCryptError):
    """A decryption block design matrix is numerically rank deficient.

    Attributes:
        block_index: Index of the offending block.
        condition_number: Its 2-norm condition number.
    """

    def __init__(self, block_index: int, condition_number: float):
        self.block_index = block_index
        self.condition_number = condition_number
        super().__init__(
            f"block {block_index} is rank deficient (cond={condition_number:.3e})")


class UndefinedSimilarityError(CsiCryptError):
    """Cosine similarity requested for a zero-magnitude sequence."""


class EqualizationError(CsiCryptError):
    """Channel estimate is zero so the payload cannot be equalized."""


class DivergedError(CsiCryptError):
    """The optimizer objective is not finite."""


class ContractViolationError(CsiCryptError):
    """A model was used in a state its contract forbids (e.g. unfrozen R)."""


class UninitializedModelError(CsiCryptError):
    """A model was used for inference before training."""
