"""Run manifests: config snapshot plus checksums of every output file.

Consumers verify an artifact against the manifest sitting next to it before
any computation; a checksum mismatch aborts with an artifact error.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from .errors import FormatError

MANIFEST_NAME = "manifest.json"


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path, command: str, seed: int | None, config_snapshot: dict, outputs: list[Path]
) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "seed": seed,
        "config": config_snapshot,
        "outputs": {p.name: sha256_of(p) for p in sorted(outputs)},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def verify_artifact(path: str | Path) -> None:
    """Check a file against the manifest in its directory, if one exists."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"artifact not found: {path}")
    manifest_path = path.parent / MANIFEST_NAME
    if not manifest_path.exists():
        return
    try:
        manifest = json.loads(manifest_path.read_text())
        listed = manifest.get("outputs", {})
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid manifest ({exc})") from exc
    expected = listed.get(path.name)
    if expected is None:
        return
    actual = sha256_of(path)
    if actual != expected:
        raise FormatError(
            f"{path}: checksum {actual[:12]}... does not match manifest entry "
            f"{expected[:12]}... (file modified since the run?)"
        )
