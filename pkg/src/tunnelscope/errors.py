"""Exception hierarchy shared across the toolkit.

Two broad families matter for the CLI exit codes: input errors (bad files,
bad capture bytes, bad feature specs) exit with 2, experiment errors
(degenerate stages, infeasible stratification, missing strata) exit with 1.
"""


class TunnelscopeError(Exception):
    """Base class for all errors raised by this package."""


class InputError(TunnelscopeError):
    """Unusable input: file contents, capture bytes, specs, model files."""


class ExperimentError(TunnelscopeError):
    """A requested experiment cannot run on the given data."""


# capture-io

class UnsupportedFormatError(InputError):
    """File does not start with a recognized pcap magic number."""


class UnsupportedLinkTypeError(InputError):
    """Capture uses a link type other than Ethernet."""


class CorruptCaptureError(InputError):
    """Truncated or inconsistent capture structure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# features

class InvalidSpecError(InputError):
    """Feature spec is malformed or contains duplicate families."""


# learners

class InvalidModelInputError(InputError):
    """Matrix handed to fit/predict violates the model contract."""


class DegenerateTrainingError(ExperimentError):
    """Training set does not contain at least two classes."""


class UnsupportedModelError(ExperimentError):
    """Operation requires a model family that does not support it."""


# evaluation

class StratificationError(ExperimentError):
    """A class is too small for the requested fold count."""

    def __init__(self, class_name, class_size: int, k: int):
        super().__init__(
            f"class {class_name!r} has {class_size} members, "
            f"fewer than k={k} folds"
        )
        self.class_name = class_name
        self.class_size = class_size
        self.k = k


class InvalidSizeError(ExperimentError):
    """Requested training size exceeds the available rows."""


# pipeline

class DegenerateStageError(ExperimentError):
    """Stage dataset would contain fewer than two classes."""


class MissingModelError(ExperimentError):
    """Pipeline routed a flow to a tunnel kind without an app model."""

    def __init__(self, kind: str):
        super().__init__(f"no application model for tunnel kind {kind!r}")
        self.kind = kind


# domain shift

class DegenerateDomainError(ExperimentError):
    """A dataset in a cross-domain evaluation lacks a detection class."""


class MissingStratumError(ExperimentError):
    """Corpus has no rows for a requested MTU value."""

    def __init__(self, mtu: int):
        super().__init__(f"no rows with MTU {mtu}")
        self.mtu = mtu


# synthgen

class InvalidMtuError(InputError):
    """MTU leaves no room for a single payload byte."""
