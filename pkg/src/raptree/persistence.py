"""On-disk index: a directory holding a manifest, the node store, fitted models, and prompts."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from raptree.prompts import TEMPLATES, PromptTemplate, templates_as_dict, templates_from_dict
from raptree.text import ChunkingConfig
from raptree.tree import LayerModel, RaTree, TreeConfig, TreeNode

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
NODES = "nodes.jsonl"
MODELS = "models.json"
PROMPTS = "prompts.json"
LOCK = ".lock"
DATA_FILES = (NODES, MODELS, PROMPTS)


class IndexStoreError(RuntimeError):
    pass


class VersionError(IndexStoreError):
    pass


class CorruptIndexError(IndexStoreError):
    pass


class DimensionMismatchError(IndexStoreError):
    pass


class LockedError(IndexStoreError):
    pass


class IncompatibleDirectoryError(IndexStoreError):
    pass


@dataclass
class LoadedIndex:
    tree: RaTree
    manifest: dict[str, Any]
    prompts: dict[str, PromptTemplate]


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dumps(obj: Any) -> str:
    # repr-based float formatting round-trips every double exactly
    return json.dumps(obj, sort_keys=True, allow_nan=False, separators=(",", ":"))


def tree_counts(tree: RaTree) -> dict[str, int]:
    leaves = len(tree.leaves())
    return {"leaves": leaves, "internal": len(tree.nodes) - leaves, "layers": len(tree.layers)}


def _embedding_dim(tree: RaTree) -> int | None:
    for node in tree.nodes.values():
        if node.embedding is not None:
            return int(node.embedding.shape[0])
    return None


class IndexLock:
    """Exclusive writer lock: a file created with O_EXCL inside the index directory."""

    def __init__(self, index_dir: str | Path):
        self.path = Path(index_dir) / LOCK
        self._held = False

    def acquire(self) -> "IndexLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        except FileExistsError:
            raise LockedError(f"index {self.path.parent} is locked by another writer") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        self._held = True
        return self

    def release(self) -> None:
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False

    def __enter__(self) -> "IndexLock":
        return self.acquire()

    def __exit__(self, *exc: object) -> None:
        self.release()


def save_index(
    tree: RaTree,
    index_dir: str | Path,
    embedder_name: str,
    embedder_dim: int,
    chunking: ChunkingConfig | None = None,
    prompts: Mapping[str, PromptTemplate] = TEMPLATES,
    created: str | None = None,
    extra: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Write the index into a sibling temp directory, then swap it into place."""
    index_dir = Path(index_dir)
    if index_dir.exists():
        if not index_dir.is_dir():
            raise IncompatibleDirectoryError(f"{index_dir} is not a directory")
        foreign = [p.name for p in index_dir.iterdir() if p.name not in (MANIFEST, LOCK, *DATA_FILES)]
        if foreign:
            raise IncompatibleDirectoryError(f"{index_dir} holds unrelated files: {sorted(foreign)[:3]}")
    dim = _embedding_dim(tree)
    if dim is not None and dim != embedder_dim:
        raise DimensionMismatchError(f"tree vectors have dimension {dim}, embedder reports {embedder_dim}")

    data = tree.to_dict()
    node_lines = "".join(_dumps(n) + "\n" for n in data["nodes"])
    models = {
        "layers": data["layers"],
        "layer_models": data["layer_models"],
        "config": data["config"],
        "next_seq": data["next_seq"],
    }
    payloads = {
        NODES: node_lines.encode("utf-8"),
        MODELS: _dumps(models).encode("utf-8"),
        PROMPTS: _dumps(templates_as_dict(prompts)).encode("utf-8"),
    }
    chunking = chunking or ChunkingConfig()
    manifest = {
        "format_version": FORMAT_VERSION,
        "embedder": {"name": embedder_name, "dim": embedder_dim},
        "chunking": {"max_body_tokens": chunking.max_body_tokens, "overlap_tokens": chunking.overlap_tokens},
        "counts": tree_counts(tree),
        "created": created or _now(),
        "updated": _now(),
        "files": {name: {"sha256": _sha256(b), "bytes": len(b)} for name, b in payloads.items()},
        "extra": dict(extra or {}),
    }

    parent = index_dir.parent
    parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{index_dir.name}.tmp-", dir=parent))
    try:
        for name, blob in payloads.items():
            (staging / name).write_bytes(blob)
        (staging / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if index_dir.exists():
            retired = Path(tempfile.mkdtemp(prefix=f".{index_dir.name}.old-", dir=parent))
            retired.rmdir()
            # a held lock stays with the live directory
            lock_present = (index_dir / LOCK).exists()
            if lock_present:
                os.replace(index_dir / LOCK, staging / LOCK)
            os.replace(index_dir, retired)
            os.replace(staging, index_dir)
            shutil.rmtree(retired, ignore_errors=True)
        else:
            os.replace(staging, index_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return manifest


def read_manifest(index_dir: str | Path) -> dict[str, Any]:
    path = Path(index_dir) / MANIFEST
    if not path.is_file():
        raise CorruptIndexError(f"no manifest in {index_dir}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptIndexError(f"unreadable manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"index format {version!r}, this reader understands {FORMAT_VERSION}")
    return manifest


def load_index(index_dir: str | Path, expected_dim: int | None = None) -> LoadedIndex:
    index_dir = Path(index_dir)
    manifest = read_manifest(index_dir)
    blobs: dict[str, bytes] = {}
    for name in DATA_FILES:
        path = index_dir / name
        if not path.is_file():
            raise CorruptIndexError(f"missing {name}")
        blob = path.read_bytes()
        expected = manifest.get("files", {}).get(name, {})
        if _sha256(blob) != expected.get("sha256"):
            raise CorruptIndexError(f"{name} does not match its manifest checksum")
        blobs[name] = blob
    try:
        nodes = [json.loads(line) for line in blobs[NODES].decode("utf-8").splitlines() if line]
        models = json.loads(blobs[MODELS])
        prompts = templates_from_dict(json.loads(blobs[PROMPTS]))
        tree = RaTree(
            layers=[list(layer) for layer in models["layers"]],
            nodes={n["id"]: TreeNode.from_dict(n) for n in nodes},
            layer_models=[LayerModel.from_dict(x) for x in models["layer_models"]],
            config=TreeConfig.from_dict(models["config"]),
            next_seq=int(models["next_seq"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptIndexError(f"malformed index content: {exc}") from exc
    if tree_counts(tree) != manifest.get("counts"):
        raise CorruptIndexError("node store disagrees with manifest counts")
    dim = manifest["embedder"]["dim"]
    stored = _embedding_dim(tree)
    if stored is not None and stored != dim:
        raise CorruptIndexError(f"stored vectors have dimension {stored}, manifest says {dim}")
    if expected_dim is not None and expected_dim != dim:
        raise DimensionMismatchError(f"index built with dimension {dim}, embedder has {expected_dim}")
    return LoadedIndex(tree, manifest, prompts)
