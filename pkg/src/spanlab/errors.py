"""Exception hierarchy shared by all spanlab modules."""


class SpanlabError(Exception):
    """Base class for toolkit errors."""


class ConfigError(SpanlabError):
    """Invalid or conflicting configuration (includes malformed rule files)."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class CorpusFormatError(SpanlabError):
    """Corpus file does not follow the token-per-line or JSON-lines format."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class SplitError(SpanlabError):
    """Stratified split cannot satisfy its preconditions."""


class AgreementUndefined(SpanlabError):
    """Chance agreement is total, so the chance-corrected coefficient is 0/0."""

    def __init__(self, message, p_o=None):
        self.p_o = p_o
        super().__init__(message)


class NonFiniteError(SpanlabError):
    """A score, loss or gradient became NaN/inf."""

    def __init__(self, message, name=None):
        self.name = name
        super().__init__(message)


class ParamsFileError(SpanlabError):
    """Parameter file is corrupt, truncated, of the wrong version or shape."""


class UnsupportedEncoder(SpanlabError):
    """Operation requires an encoder kind other than the one supplied."""


class TrainingDiverged(SpanlabError):
    """Loss went non-finite; carries the last good checkpoint and log."""

    def __init__(self, message, params=None, log=None):
        self.params = params
        self.log = log
        super().__init__(message)
