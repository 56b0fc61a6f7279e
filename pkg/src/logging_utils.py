from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

try:
    import coloredlogs
except ModuleNotFoundError:
    coloredlogs = None


LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    if coloredlogs is not None:
        coloredlogs.install(level=level, fmt=LOG_FORMAT)
    else:
        logging.basicConfig(level=level, format=LOG_FORMAT)


def utc_ts() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


def write_text(path: str | Path, text: str) -> None:
    """Write a file atomically: temp file in the same folder, then rename."""

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{p.name}.", suffix=".tmp", dir=str(p.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, p)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(path: str | Path, data: Any) -> None:
    write_text(path, json.dumps(data, ensure_ascii=False, indent=2) + "\n")


def append_jsonl(path: str | Path, record: Dict[str, Any]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False) + "\n")


def config_hash(data: Any) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def library_versions() -> Dict[str, Optional[str]]:
    from . import __version__

    versions: Dict[str, Optional[str]] = {"strategio": __version__, "python": platform.python_version()}
    for name in ("numpy", "scipy", "pandas"):
        try:
            module = __import__(name)
            versions[name] = getattr(module, "__version__", None)
        except ModuleNotFoundError:
            versions[name] = None
    return versions


def write_run_manifest(
    out_dir: str | Path,
    command: str,
    config: Any,
    seed: Optional[int],
    outputs: list[str],
) -> Dict[str, Any]:
    """Write run_manifest.json next to the outputs and append the run to runs.jsonl."""

    manifest = {
        "ts": utc_ts(),
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "versions": library_versions(),
        "outputs": outputs,
    }
    out_p = Path(out_dir)
    write_json(out_p / "run_manifest.json", manifest)
    append_jsonl(out_p / "runs.jsonl", {k: manifest[k] for k in ("ts", "command", "config_hash", "seed", "outputs")})
    return manifest
