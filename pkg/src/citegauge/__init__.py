"""citegauge: evaluation, reward, and interpretability engine for
citation-grounded bilingual dialogue responses, with pluggable model
backends and deterministic in-process mocks."""

__version__ = "0.1.0"
