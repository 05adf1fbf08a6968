"""Error taxonomy. The CLI maps these onto distinct exit codes."""


class DataError(ValueError):
    """Base for all rejections of caller-supplied data."""


class SchemaError(DataError):
    """Malformed file or record: bad header, bad field, bad manifest."""


class MissingSeriesError(DataError):
    """A required series or file is absent."""


class GridMismatchError(DataError):
    """Series that must share a timestamp grid do not."""


class InsufficientInputsError(DataError):
    """Not enough evaluated inputs to produce a result."""
