"""Artifact stores for scenario outputs."""

import io
import json
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

CSV_FORMAT = "%.12e"

Content = Union[str, Dict[str, Any]]


def csv_table(
    header: Sequence[str],
    columns: Sequence[Any],
    fmt: Union[str, Sequence[str]] = CSV_FORMAT,
) -> str:
    """Render equal-length numeric columns as CSV text, one header line first."""
    if len(columns) != len(header):
        raise ValueError(f"Got {len(columns)} columns for {len(header)} header names")
    data = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    buf = io.StringIO()
    np.savetxt(buf, data, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


class BaseArtifactStore(ABC):
    """Abstract base class for artifact stores.

    Artifacts are addressed as ``<scenario>/<stage>/<name>``; text is stored
    verbatim, dicts as sorted-key JSON.
    """

    @abstractmethod
    def put(self, scenario: str, stage: str, name: str, content: Content) -> str:
        """Store an artifact.

        Args:
            scenario: Scenario name
            stage: Stage tag (solve, harness, ...)
            name: File name including extension
            content: CSV/text body or a JSON-serializable dict

        Returns:
            The artifact key.
        """
        raise NotImplementedError

    @abstractmethod
    def get(self, key: str) -> str:
        """Return the stored text of an artifact."""
        raise NotImplementedError

    @abstractmethod
    def keys(self, prefix: Optional[str] = None) -> List[str]:
        """List artifact keys, optionally restricted to a prefix."""
        raise NotImplementedError

    @abstractmethod
    def clear(self) -> None:
        raise NotImplementedError

    @staticmethod
    def _encode(content: Content) -> str:
        if isinstance(content, str):
            return content
        return json.dumps(content, sort_keys=True, indent=2, default=str) + "\n"


class InMemoryArtifactStore(BaseArtifactStore):
    """Keeps artifacts in a dict; used by tests."""

    def __init__(self) -> None:
        self._items: Dict[str, str] = {}
        self._lock = threading.Lock()

    def put(self, scenario: str, stage: str, name: str, content: Content) -> str:
        key = f"{scenario}/{stage}/{name}"
        with self._lock:
            self._items[key] = self._encode(content)
        return key

    def get(self, key: str) -> str:
        return self._items[key]

    def keys(self, prefix: Optional[str] = None) -> List[str]:
        return sorted(k for k in self._items if prefix is None or k.startswith(prefix))

    def clear(self) -> None:
        with self._lock:
            self._items.clear()


class DirectoryArtifactStore(BaseArtifactStore):
    """Writes ``<root>/<scenario>/<stage>/<name>`` on disk."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)

    def put(self, scenario: str, stage: str, name: str, content: Content) -> str:
        path = self.root / scenario / stage / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self._encode(content), encoding="utf-8")
        return path.relative_to(self.root).as_posix()

    def get(self, key: str) -> str:
        return (self.root / key).read_text(encoding="utf-8")

    def keys(self, prefix: Optional[str] = None) -> List[str]:
        if not self.root.exists():
            return []
        files = (p for p in self.root.rglob("*") if p.is_file())
        found = [p.relative_to(self.root).as_posix() for p in files]
        return sorted(k for k in found if prefix is None or k.startswith(prefix))

    def clear(self) -> None:
        for key in self.keys():
            (self.root / key).unlink()
