"""Exception types shared across the toolkit."""


class RsmtError(Exception):
    """Base class for all toolkit errors."""


class DegenerateNet(RsmtError):
    """Net has fewer than 2 distinct pins."""


class EmptyBatch(RsmtError):
    """disjoint_batch called with no grids."""


class EmptyPointSet(RsmtError):
    """MST requested over zero points."""


class DegreeTooLarge(RsmtError):
    """Net degree exceeds the exact-solver enumeration guard."""


class DegreeTooSmall(RsmtError):
    """Requested net degree below 2."""


class ShapeError(RsmtError):
    """Array shapes inconsistent with the declared model structure."""


class CacheMismatch(RsmtError):
    """Forward cache does not belong to the given parameters."""


class TooFewNets(RsmtError):
    """Dataset too small to split 80/10/10."""


class MissingOracle(RsmtError):
    """Evaluation requires oracle labels and optimal wirelength."""


class DatasetFormatError(RsmtError):
    """Dataset file is malformed; message carries file position."""


class CheckpointFormatError(RsmtError):
    """Checkpoint file is malformed; message carries file position."""


class UnsupportedVersion(RsmtError):
    """Checkpoint or dataset format version not recognized."""
