"""skelsql: retrieval-augmented text-to-SQL with question de-semanticization,
skeleton-based demonstration retrieval, schema filtering and execution-guided
revision."""

__version__ = "0.1.0"
