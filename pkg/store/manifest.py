"""Run hashes, run manifests and wall-time records."""

import hashlib
import json
import logging
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

logger = logging.getLogger(__name__)

_TRACKED_PACKAGES = ("plsae", "numpy", "scipy", "pandas", "scikit-learn", "joblib")


def manifest_name(command: str) -> str:
    return f"manifest_{command}.json"


def timings_name(command: str) -> str:
    return f"timings_{command}.json"


def package_versions() -> dict[str, str]:
    versions = {}
    for name in _TRACKED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def run_hash(config: dict, seed: int) -> str:
    """Short digest of the resolved config, seed and package versions."""
    payload = _canonical({"config": config, "seed": seed, "versions": package_versions()})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, seed: int, digest: str,
                   files: list[Path], artifacts: list[Path] = ()) -> Path:
    """Write manifest.json: config, seed, versions, run hash and per-file SHA-256.

    ``artifacts`` (binary files whose bytes carry timings) are listed by name
    only, so the manifest is identical across reruns.
    """
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "run_hash": digest,
        "seed": seed,
        "versions": package_versions(),
        "config": config,
        "files": {p.name: file_digest(p) for p in sorted(files, key=lambda p: p.name)},
        "artifacts": sorted(Path(p).name for p in artifacts),
    }
    path = out_dir / manifest_name(command)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    logger.info("Wrote %s (run hash %s)", path, digest)
    return path


def write_timings(out_dir: Path, command: str, timings: dict) -> Path:
    path = Path(out_dir) / timings_name(command)
    path.write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
