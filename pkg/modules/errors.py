"""Exception types shared by the pipeline stages."""


class VridError(Exception):
    """Base class for every error raised by the pipeline."""


class TraceFormatError(VridError, ValueError):
    """A packet trace (pcap or canonical CSV) could not be parsed."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None,
                 packet_index: int | None = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if packet_index is not None:
            location.append(f"packet {packet_index}")
        if offset is not None:
            location.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.line = line
        self.offset = offset
        self.packet_index = packet_index


class UnsupportedFormatError(TraceFormatError):
    """The capture is well-formed but uses a format variant we do not read."""


class DatasetFormatError(VridError, ValueError):
    def __init__(self, message: str, *, missing=(), extra=(), line: int | None = None):
        details = []
        if missing:
            details.append("missing columns: " + ", ".join(missing))
        if extra:
            details.append("unexpected columns: " + ", ".join(extra))
        if line is not None:
            details.append(f"line {line}")
        super().__init__(f"{message} ({'; '.join(details)})" if details else message)
        self.missing = tuple(missing)
        self.extra = tuple(extra)
        self.line = line


class ContractError(VridError, ValueError):
    """A caller broke an operation's precondition."""


class ConfigError(VridError, ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid run config: " + "; ".join(problems))
        self.problems = list(problems)


class GridSearchError(VridError):
    """Training failed for one grid candidate."""
