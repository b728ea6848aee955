"""Provenance headers for generated artifacts."""

from datetime import datetime, timezone
from pathlib import Path

from config.config import TOOL_NAME, TOOL_VERSION

HEADER_PREFIX = "#"
TIMESTAMP_KEY = "generated_at"


def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if value is None:
        return ""
    return str(value)


def provenance_lines(config: dict, command: str, now: datetime | None = None) -> list[str]:
    """Header lines: tool, command, timestamp, then the resolved config sorted by key."""
    now = now or datetime.now(timezone.utc)
    lines = [
        f"# tool={TOOL_NAME} {TOOL_VERSION}",
        f"# command={command}",
        f"# {TIMESTAMP_KEY}={now.strftime('%Y-%m-%dT%H:%M:%SZ')}",
    ]
    for key in sorted(config):
        lines.append(f"# {key}={_format_value(config[key])}")
    return lines


def provenance_dict(config: dict, command: str) -> dict:
    """The same information for JSON artifacts."""
    return {
        "tool": f"{TOOL_NAME} {TOOL_VERSION}",
        "command": command,
        TIMESTAMP_KEY: datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "config": {key: config[key] for key in sorted(config)},
    }


def write_text_artifact(path, body: str, config: dict, command: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "\n".join(provenance_lines(config, command))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n" + body)
    return path


def strip_provenance(text: str, keep_header: bool = False) -> str:
    """Drop leading '#' lines; with keep_header, drop only the timestamp line."""
    lines = text.splitlines(keepends=True)
    if keep_header:
        return "".join(line for line in lines if not line.startswith(f"# {TIMESTAMP_KEY}="))
    i = 0
    while i < len(lines) and lines[i].startswith(HEADER_PREFIX):
        i += 1
    return "".join(lines[i:])


def read_provenance(path) -> dict:
    """Key/value pairs from a file's leading header lines."""
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith(HEADER_PREFIX):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                values[key.strip()] = value
    return values
