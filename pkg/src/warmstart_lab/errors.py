"""Exception types shared across the lab.

Grouped by the subsystem that raises them; everything derives from
``WarmstartLabError`` so callers can catch broadly at trial boundaries.
"""

from __future__ import annotations


class WarmstartLabError(Exception):
    """Base class for all lab-specific errors."""


# -- dataset loading and configuration admission ----------------------------

class DatasetError(WarmstartLabError):
    pass


class MissingHeader(DatasetError):
    pass


class NoObjectiveColumns(DatasetError):
    pass


class RaggedRow(DatasetError):
    pass


class NonNumericInNumericColumn(DatasetError):
    pass


class UnknownFeature(DatasetError):
    pass


class EmptySubset(DatasetError):
    pass


class EmptyConfiguration(DatasetError):
    pass


class InvalidValue(DatasetError):
    """A value cannot be admitted for its feature (bad type or category)."""


# -- metrics -----------------------------------------------------------------

class MetricError(WarmstartLabError):
    pass


class ArityMismatch(MetricError):
    pass


class EmptyWarmStartSet(MetricError):
    pass


class PartialConfiguration(MetricError):
    pass


class NegativeCount(MetricError):
    pass


# -- statistics --------------------------------------------------------------

class StatError(WarmstartLabError):
    pass


class TooFewTreatments(StatError):
    pass


class LengthMismatch(StatError):
    pass


class TooFewSessions(StatError):
    pass


# -- LLM gateway -------------------------------------------------------------

class GatewayError(WarmstartLabError):
    pass


class ProviderUnreachable(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class EmptyResponse(GatewayError):
    pass


class MissingSlot(GatewayError):
    pass


class NoParsableBlock(GatewayError):
    pass


class AllCandidatesInvalid(GatewayError):
    pass


# -- methods -----------------------------------------------------------------

class MethodError(WarmstartLabError):
    pass


class PoolTooSmall(MethodError):
    pass


class SingularKernel(MethodError):
    pass


class UnparsableAnalysis(MethodError):
    pass


class DegenerateSamples(MethodError):
    """Raised only when callers opt into strict mode; normally a warning."""


class FeedbackTimeout(MethodError):
    """A feedback source produced no reply; the session stays frozen."""


# -- runner ------------------------------------------------------------------

class RunnerError(WarmstartLabError):
    pass


class ConfigInvalid(RunnerError):
    pass


class EmptyStore(RunnerError):
    pass


class EmptyCorpus(RunnerError):
    """Corpus directory had no readable documents (flagged, not fatal)."""


class UnknownSession(RunnerError):
    pass


class IterationMismatch(RunnerError):
    pass
