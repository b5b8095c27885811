"""citegauge-bridge: thin HTTP service exposing transformer inference
(generation with log-probs, NLI, embeddings, translation, attention and
integrated-gradients tensor dumps) over the citegauge wire protocol."""

__version__ = "0.1.0"
