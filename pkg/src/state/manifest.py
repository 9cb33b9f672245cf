"""Corpus manifest and alignment file persistence.

Manifest: two ``#`` header lines (seed, digest) then one tab-separated record per
utterance: id, audio path, transcript (space-joined words), alignment path, split.
Alignment files hold one integer state id per line.
This module imports from state — NEVER from corpus/ or higher layers.
"""

import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.state.errors import InputError
from src.state.models import CorpusManifest, ManifestEntry, Split

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"


def format_manifest(manifest: CorpusManifest) -> str:
    """Render a manifest in its on-disk text form."""
    lines = [f"# seed={manifest.seed}", f"# digest={manifest.digest}"]
    for e in manifest.entries:
        lines.append("\t".join([e.utterance_id, e.audio_path, " ".join(e.transcript), e.alignment_path, e.split]))
    return "\n".join(lines) + "\n"


def write_manifest(path: Path, manifest: CorpusManifest) -> None:
    """Write a manifest file, creating parent directories."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_manifest(manifest), encoding="utf-8")
    logger.info("manifest_written | path=%s entries=%d", path, len(manifest.entries))


def read_manifest(path: Path) -> CorpusManifest:
    """Parse a manifest file.

    Raises:
        InputError: If the file is missing or a record is malformed.
    """
    if not path.is_file():
        msg = f"Manifest not found: {path}"
        raise InputError(msg)
    header: dict[str, str] = {}
    entries: list[ManifestEntry] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            msg = f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}"
            raise InputError(msg)
        uid, audio, transcript, alignment, split = fields
        try:
            entries.append(
                ManifestEntry(
                    utterance_id=uid,
                    audio_path=audio,
                    transcript=transcript.split(),
                    alignment_path=alignment,
                    split=Split(split),
                )
            )
        except (ValueError, ValidationError) as e:
            msg = f"{path}:{lineno}: {e}"
            raise InputError(msg) from e
    try:
        return CorpusManifest(entries=entries, seed=int(header.get("seed", "0")), digest=header.get("digest", ""))
    except ValidationError as e:
        msg = f"Invalid manifest {path}: {e}"
        raise InputError(msg) from e


def write_alignment(path: Path, states: np.ndarray) -> None:
    """Write one state id per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{int(s)}\n" for s in states), encoding="utf-8")


def read_alignment(path: Path) -> np.ndarray:
    """Read an alignment file into an int64 array.

    Raises:
        InputError: If the file is missing or holds a non-integer line.
    """
    if not path.is_file():
        msg = f"Alignment file not found: {path}"
        raise InputError(msg)
    try:
        return np.array([int(tok) for tok in path.read_text(encoding="utf-8").split()], dtype=np.int64)
    except ValueError as e:
        msg = f"Malformed alignment file {path}: {e}"
        raise InputError(msg) from e
