"""Immutable, content-addressed code branches and exact-match patching."""
from __future__ import annotations

import hashlib
import posixpath
import shutil
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path, PurePosixPath
from typing import Iterable, Optional, Sequence

from .case import CASE_FILE, CaseConfig


class PatchError(Exception):
    pass


class PatchNotFound(PatchError):
    pass


class PatchAmbiguous(PatchError):
    pass


class ProtectedPath(PatchError):
    pass


class IoFailure(Exception):
    pass


@dataclass(frozen=True)
class Patch:
    file: str
    search: str
    replace: str

    def to_dict(self) -> dict:
        return {"file": self.file, "search": self.search, "replace": self.replace}

    def render(self) -> str:
        return (f"{self.file}\n<<<<<<< SEARCH\n{self.search.rstrip(chr(10))}\n=======\n"
                f"{self.replace.rstrip(chr(10))}\n>>>>>>> REPLACE\n")


@dataclass(frozen=True)
class CodeBranch:
    id: str
    parent: Optional[str]
    files: tuple[tuple[str, str], ...]  # (relative path, blob digest), sorted
    patches: tuple[Patch, ...] = ()  # edits relative to the parent

    @property
    def key(self) -> tuple[tuple[str, str], ...]:
        """Content identity: equal keys mean byte-identical sources."""
        return self.files


def blob_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def apply_patch(text: str, patch: Patch) -> str:
    if not patch.search:
        raise PatchNotFound("the search block is empty")
    count = text.count(patch.search)
    if count == 0:
        raise PatchNotFound(f"search block not found in {patch.file}")
    if count > 1:
        raise PatchAmbiguous(f"search block occurs {count} times in {patch.file}")
    return text.replace(patch.search, patch.replace, 1)


class Workspace:
    """Branch store plus checkout management for one case.

    The store is append-only and shared by every search state; checkouts go
    to fresh directories under a private temporary root.
    """

    def __init__(self, case: CaseConfig, tmp_root: Optional[str] = None):
        self.case = case
        self.sources = list(case.sources)
        self.protected = case.protected
        self._blobs: dict[str, bytes] = {}
        self._branches: dict[str, CodeBranch] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._tmp = Path(tempfile.mkdtemp(prefix="rtlfix-", dir=tmp_root))
        try:
            self._protected_bytes = {p: (case.root / p).read_bytes() for p in self.protected}
            files = {s: (case.root / s).read_bytes() for s in self.sources}
        except OSError as exc:
            raise IoFailure(str(exc)) from None
        self.root = self._store(None, files, ())

    # -- store -------------------------------------------------------------
    def _store(self, parent: Optional[str], files: dict[str, bytes],
               patches: tuple[Patch, ...]) -> CodeBranch:
        entries = []
        with self._lock:
            for path in sorted(files):
                digest = blob_digest(files[path])
                self._blobs.setdefault(digest, files[path])
                entries.append((path, digest))
            bid = f"b{self._counter:04d}"
            self._counter += 1
            branch = CodeBranch(bid, parent, tuple(entries), patches)
            self._branches[bid] = branch
        return branch

    def branch(self, bid: str) -> CodeBranch:
        return self._branches[bid]

    def __len__(self) -> int:
        return len(self._branches)

    def snapshot(self, branch: CodeBranch) -> dict[str, bytes]:
        return {p: self._blobs[d] for p, d in branch.files}

    def text(self, branch: CodeBranch, path: str) -> str:
        for p, d in branch.files:
            if p == path:
                return self._blobs[d].decode("utf-8", errors="replace")
        raise KeyError(path)

    def texts(self, branch: CodeBranch) -> list[tuple[str, str]]:
        return [(p, self._blobs[d].decode("utf-8", errors="replace")) for p, d in branch.files]

    # -- patching ----------------------------------------------------------
    def resolve_source(self, path: str) -> str:
        """Map a user-supplied path onto a modifiable source file."""
        if not isinstance(path, str) or not path.strip() or "\x00" in path:
            raise PatchNotFound(f"invalid file name {path!r}")
        raw = path.strip().replace("\\", "/")
        pp = PurePosixPath(raw)
        if pp.is_absolute():
            try:
                raw = Path(raw).resolve().relative_to(self.case.root).as_posix()
            except (ValueError, OSError):
                raise ProtectedPath(f"{path} is outside the case sources") from None
        norm = posixpath.normpath(raw)
        if norm == ".." or norm.startswith("../"):
            raise ProtectedPath(f"{path} is outside the case sources")
        if norm in self.sources:
            return norm
        top = norm.split("/", 1)[0]
        if norm in self.protected or norm == CASE_FILE or top in ("tb", "golden"):
            raise ProtectedPath(f"{path} is protected; only design sources may change")
        by_name = [s for s in self.sources if posixpath.basename(s) == posixpath.basename(norm)]
        if len(by_name) == 1 and "/" not in norm:
            return by_name[0]
        raise PatchNotFound(f"{path} is not one of the modifiable sources {self.sources}")

    def normalize(self, patch: Patch) -> Patch:
        return Patch(self.resolve_source(patch.file), patch.search, patch.replace)

    def create_branch(self, parent: CodeBranch, edits: Sequence[Patch] = ()) -> CodeBranch:
        """New branch = ``parent`` with ``edits`` applied in order.  Nothing is
        stored when any edit fails."""
        files = self.snapshot(parent)
        applied = []
        for patch in edits:
            patch = self.normalize(patch)
            text = files[patch.file].decode("utf-8", errors="replace")
            files[patch.file] = apply_patch(text, patch).encode("utf-8")
            applied.append(patch)
        return self._store(parent.id, files, tuple(applied))

    def lineage(self, branch: CodeBranch) -> list[CodeBranch]:
        chain = [branch]
        while chain[-1].parent is not None:
            chain.append(self._branches[chain[-1].parent])
        return chain[::-1]

    def patch_set(self, branch: CodeBranch) -> list[Patch]:
        """Every patch from the root to ``branch``, in application order."""
        return [p for b in self.lineage(branch) for p in b.patches]

    # -- checkouts ---------------------------------------------------------
    def checkout(self, branch: CodeBranch) -> Path:
        """Materialize ``branch`` and the protected files in a new directory."""
        try:
            d = Path(tempfile.mkdtemp(prefix=f"{branch.id}-", dir=self._tmp))
            for path, data in list(self.snapshot(branch).items()) + list(self._protected_bytes.items()):
                target = d / path
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
        except OSError as exc:
            raise IoFailure(f"checkout of {branch.id} failed: {exc}") from None
        return d

    def release(self, path: Path) -> None:
        shutil.rmtree(path, ignore_errors=True)

    def close(self) -> None:
        shutil.rmtree(self._tmp, ignore_errors=True)

    def __enter__(self) -> "Workspace":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def apply_to_directory(root: Path, patches: Iterable[Patch]) -> None:
    """Apply a recorded patch set to a pristine case directory in place."""
    for patch in patches:
        target = Path(root) / patch.file
        text = target.read_text(encoding="utf-8")
        target.write_text(apply_patch(text, patch), encoding="utf-8")
