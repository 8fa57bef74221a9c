"""Exception types shared across the package."""


class NumericError(RuntimeError):
    """A computation produced (or received) non-finite values."""


class DegenerateAttentionError(NumericError):
    """An attention normalizer vanished or went negative for some output row."""

    def __init__(self, row: int, value: float):
        self.row = int(row)
        self.value = float(value)
        super().__init__(
            f"attention normalizer for output row {self.row} is {self.value!r}; "
            "every row needs positive total attention mass"
        )


class DivergenceError(NumericError):
    """An optimizer reached a non-finite loss."""
