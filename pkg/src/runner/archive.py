"""Run archive: event log, artifact index and metadata for one pipeline run.

Every file is a pure function of the run's inputs. Events carry a sequence
number instead of a wall-clock timestamp and artifact paths are stored
relative to the output directory, so reruns produce byte-identical archives.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

ARCHIVE_FILENAMES = {
    "events": "events.jsonl",
    "artifacts": "run_artifacts.json",
    "metadata": "run_metadata.json",
}


def write_json_file(path: Path, payload: Any) -> None:
    path.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )


def build_run_id(command: str, payload: Dict[str, Any]) -> str:
    """``<command>-<digest>`` where the digest covers the canonical JSON of ``payload``."""
    canonical = json.dumps(payload, sort_keys=True, default=str, separators=(",", ":"))
    return "{}-{}".format(command, hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12])


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunArchive:
    out_dir: Path
    run_id: str
    paths: Dict[str, Path]
    outputs: List[Dict[str, str]] = field(default_factory=list)
    sequence: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def initialize_run_archive(out_dir: Path, run_id: str) -> RunArchive:
    """Create ``out_dir`` and start a fresh event log, dropping any earlier one."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: out_dir / name for key, name in ARCHIVE_FILENAMES.items()}
    paths["events"].write_text("", encoding="utf-8")
    return RunArchive(out_dir=out_dir, run_id=run_id, paths=paths)


def append_run_event(
    archive: RunArchive,
    *,
    level: str,
    event: str,
    step: str,
    message: str,
    data: Optional[Dict[str, Any]] = None,
) -> None:
    with archive.lock:
        archive.sequence += 1
        payload = {
            "seq": archive.sequence,
            "level": level,
            "event": event,
            "run_id": archive.run_id,
            "step": step,
            "message": message,
            "data": data or {},
        }
        encoded = json.dumps(payload, ensure_ascii=False, sort_keys=True, default=str)
        with open(archive.paths["events"], "a", encoding="utf-8") as fh:
            fh.write(encoded + "\n")


def register_output(archive: RunArchive, path: Path, kind: str) -> None:
    archive.outputs.append({"path": path.relative_to(archive.out_dir).as_posix(), "kind": kind})


def _artifact_items(archive: RunArchive) -> List[Dict[str, Any]]:
    items: List[Dict[str, Any]] = []
    seen: set[str] = set()
    for entry in sorted(archive.outputs, key=lambda item: item["path"]):
        if entry["path"] in seen:
            continue
        seen.add(entry["path"])
        path = archive.out_dir / entry["path"]
        items.append(
            {
                "name": entry["path"],
                "kind": entry["kind"],
                "exists": path.exists(),
                "sha256": file_digest(path) if path.exists() else None,
            }
        )
    items.append({"name": ARCHIVE_FILENAMES["events"], "kind": "log", "exists": archive.paths["events"].exists()})
    return items


def write_run_artifacts_index(archive: RunArchive) -> Path:
    payload = {"run_id": archive.run_id, "artifacts": _artifact_items(archive)}
    write_json_file(archive.paths["artifacts"], payload)
    return archive.paths["artifacts"]


def format_run_metadata(
    archive: RunArchive,
    *,
    command: str,
    return_code: int,
    settings: Dict[str, Any],
    summary: Optional[Dict[str, Any]] = None,
    error: Optional[str] = None,
) -> Dict[str, Any]:
    """Metadata describing a finished run.

    Args:
        archive: Archive of the run.
        command: CLI command that produced the run.
        return_code: Process exit status (``0`` = success).
        settings: Resolved configuration the run used.
        summary: Command-specific results.
        error: Error message of a failed run.

    Returns:
        A JSON-serialisable dict with status, settings and per-file counts.
    """
    status = "success" if return_code == 0 else "failed"
    return {
        "run_id": archive.run_id,
        "command": command,
        "status": status,
        "return_code": return_code,
        "error": error,
        "settings": settings,
        "summary": summary or {},
        "event_count": archive.sequence,
        "output_count": len({entry["path"] for entry in archive.outputs}),
        "events_path": ARCHIVE_FILENAMES["events"],
        "artifacts_path": ARCHIVE_FILENAMES["artifacts"],
    }


def finalize_run_archive(archive: RunArchive, metadata: Dict[str, Any]) -> None:
    write_run_artifacts_index(archive)
    write_json_file(archive.paths["metadata"], metadata)
    logger.debug("Run archive {} written to {}", archive.run_id, archive.out_dir)
