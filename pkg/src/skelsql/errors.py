"""Exception types shared across the pipeline."""


class SkelSqlError(Exception):
    """Base class for all pipeline errors."""


# --- dataset ingestion ---

class FileMissing(SkelSqlError):
    pass


class MalformedSchema(SkelSqlError):
    def __init__(self, db_id: str, reason: str):
        super().__init__(f"malformed schema for {db_id!r}: {reason}")
        self.db_id = db_id
        self.reason = reason


class MalformedExample(SkelSqlError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"malformed example at index {index}: {reason}")
        self.index = index
        self.reason = reason


class UnknownDbId(SkelSqlError):
    def __init__(self, db_id: str):
        super().__init__(f"unknown db_id {db_id!r}")
        self.db_id = db_id


class DbUnreadable(SkelSqlError):
    pass


class NotAColumn(SkelSqlError):
    pass


# --- encoder backends ---

class BackendUnavailable(SkelSqlError):
    pass


class DimensionMismatch(SkelSqlError):
    pass


# --- geometry / matrices ---

class NonFiniteInput(SkelSqlError):
    pass


class OutsideBall(SkelSqlError):
    pass


class ShapeMismatch(SkelSqlError):
    pass


# --- skeleton index ---

class EmptyIndex(SkelSqlError):
    pass


class VersionMismatch(SkelSqlError):
    pass


class CorruptIndex(SkelSqlError):
    pass


# --- llm clients ---

class CredentialMissing(SkelSqlError):
    pass


class ScriptExhausted(SkelSqlError):
    pass


class CassetteMiss(SkelSqlError):
    pass


class HttpError(SkelSqlError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"http error {status}: {message}")
        self.status = status


# --- execution ---

class NotExecutable(SkelSqlError):
    pass
