"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class CitegaugeError(Exception):
    """Base class for all engine errors."""


# -- corpus ------------------------------------------------------------------

class EmptyKnowledge(CitegaugeError):
    """A prompt or reward computation was requested with zero knowledge passages."""


class EmptyText(CitegaugeError):
    """Language detection called on a whitespace-only string."""


class MalformedRecord(CitegaugeError):
    """A JSONL line could not be parsed into a dialogue example."""

    def __init__(self, line_no: int, line: str, reason: str = ""):
        self.line_no = line_no
        self.line = line
        self.reason = reason
        super().__init__(f"line {line_no}: {reason or 'malformed record'}")


class IndexGap(CitegaugeError):
    """Knowledge passage indices are not a contiguous 1..n range."""

    def __init__(self, example_id: str, detail: str = ""):
        self.example_id = example_id
        super().__init__(f"example {example_id!r}: {detail or 'non-contiguous knowledge indices'}")


class MarkerLoss(CitegaugeError):
    """A translator dropped or duplicated citation-marker placeholders."""

    def __init__(self, indices):
        self.indices = sorted(indices)
        super().__init__(f"citation markers lost in translation: {self.indices}")


class EmptyPool(CitegaugeError):
    """Mixture sampling attempted from an empty language pool."""

    def __init__(self, language: str):
        self.language = language
        super().__init__(f"empty {language} pool")


# -- metrics -----------------------------------------------------------------

class EmptyCorpus(CitegaugeError):
    """Corpus-level aggregation over zero examples."""


class LengthMismatch(CitegaugeError):
    """Paired sequences have different lengths."""


class GroupTooSmall(CitegaugeError):
    """Advantage normalization needs a group of at least two candidates."""


class DimensionMismatch(CitegaugeError):
    """Embedding matrices disagree on vector dimension."""


# -- xai ---------------------------------------------------------------------

class IndexOutOfRange(CitegaugeError):
    """A cited token index falls outside the attention input length."""


class NonStochastic(CitegaugeError):
    """An attention row does not sum to one."""

    def __init__(self, layer: int, head: int, out: int, row_sum: float):
        self.layer = layer
        self.head = head
        self.out = out
        self.row_sum = row_sum
        super().__init__(
            f"attention row (layer={layer}, head={head}, out={out}) sums to {row_sum:.6f}"
        )


class FormatError(CitegaugeError):
    """A tensor dump file is structurally invalid."""

    def __init__(self, offset: int, reason: str = ""):
        self.offset = offset
        super().__init__(f"bad tensor dump at byte {offset}: {reason or 'format error'}")


class ShapeMismatch(CitegaugeError):
    """Tensor dump payload size disagrees with its header dims."""


class NoCitations(CitegaugeError):
    """Occlusion analysis needs at least one in-range citation in the baseline output."""


# -- backends ----------------------------------------------------------------

class BackendError(CitegaugeError):
    """Base class for model-backend failures."""


class Timeout(BackendError):
    """Backend call exceeded its deadline."""


class Unavailable(BackendError):
    """Backend unreachable after all retries."""


class ProtocolError(BackendError):
    """Backend answered with a bad status or unparseable body."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"backend protocol error (status {status}): {body[:200]}")


# -- report ------------------------------------------------------------------

class StageOrderError(CitegaugeError):
    """Stage results are not in pipeline order with the baseline first."""


class ColumnMismatch(CitegaugeError):
    """Records in one series carry different metric registries."""
