"""HTTP sidecar serving transformer-based schema representations, sentence
embeddings and POS tags for the text-to-SQL pipeline."""

__version__ = "0.1.0"
