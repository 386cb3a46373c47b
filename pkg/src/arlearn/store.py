"""Durable persistence: one directory per application key.

Layout per key: ``meta.json`` (single JSON object), ``rows.log`` and
``quarantine.log`` (append-only JSON lines), ``rules.log`` (JSON-lines
snapshot). Snapshots are replaced atomically via temp-file + rename;
row appends are flushed and fsynced before returning. A torn trailing
record in an append log is dropped with a warning on open.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Union

from .engine import AppContext
from .errors import EngineError
from .model import Rule, TrainingRow, is_key

logger = logging.getLogger(__name__)

META_FILE = "meta.json"
ROWS_FILE = "rows.log"
RULES_FILE = "rules.log"
QUARANTINE_FILE = "quarantine.log"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _read_log(path: Path, tolerate_torn_tail: bool) -> list[dict]:
    """Parse a JSON-lines log; optionally drop a torn trailing record."""
    if not path.exists():
        return []
    raw = path.read_text(encoding="utf-8")
    records: list[dict] = []
    lines = raw.split("\n")
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            is_last = all(not later.strip() for later in lines[number:])
            if tolerate_torn_tail and is_last:
                logger.warning("dropping torn trailing record in %s (line %d)", path, number)
                return records
            raise EngineError(
                "corrupt-meta", f"{path}: malformed record at line {number}"
            ) from exc
    return records


class Store:
    """Handle over a store root; tracks the live context objects it loaded."""

    def __init__(self, root: Path):
        self.root = root
        self._contexts: dict[str, AppContext] = {}

    # -- loading -------------------------------------------------------

    def _load_all(self) -> None:
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and is_key(child.name):
                self._contexts[child.name] = self._load_context(child)

    def _load_context(self, app_dir: Path) -> AppContext:
        meta_path = app_dir / META_FILE
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            if not isinstance(meta, dict) or meta.get("key") != app_dir.name:
                raise ValueError("meta does not describe this directory")
        except (OSError, ValueError) as exc:
            raise EngineError("corrupt-meta", f"{meta_path}: {exc}") from exc
        rows = [TrainingRow.from_dict(r) for r in _read_log(app_dir / ROWS_FILE, True)]
        quarantine = [
            TrainingRow.from_dict(r) for r in _read_log(app_dir / QUARANTINE_FILE, True)
        ]
        rules = [Rule.from_dict(r) for r in _read_log(app_dir / RULES_FILE, False)]
        try:
            return AppContext.from_state(meta, rows, quarantine, rules)
        except (KeyError, ValueError, TypeError) as exc:
            raise EngineError("corrupt-meta", f"{meta_path}: {exc}") from exc

    def contexts(self) -> dict[str, AppContext]:
        return dict(self._contexts)

    # -- writing -------------------------------------------------------

    def _app_dir(self, key: str) -> Path:
        return self.root / key

    def persist_context(self, ctx: AppContext) -> None:
        """Write meta and the rules snapshot; the rows log is left untouched."""
        app_dir = self._app_dir(ctx.key)
        try:
            app_dir.mkdir(parents=True, exist_ok=True)
            _atomic_write(
                app_dir / META_FILE, json.dumps(ctx.state_dict(), sort_keys=True) + "\n"
            )
            rules_text = "".join(json.dumps(r.to_dict()) + "\n" for r in ctx.rules)
            _atomic_write(app_dir / RULES_FILE, rules_text)
        except OSError as exc:
            raise EngineError("io-error", f"persisting {ctx.key}: {exc}") from exc
        self._contexts[ctx.key] = ctx

    def append_row(self, key: str, row: TrainingRow) -> None:
        """Append one record to the rows log, flushed and fsynced before return."""
        app_dir = self._app_dir(key)
        if key not in self._contexts or not app_dir.is_dir():
            raise EngineError("unknown-key", f"no persisted application under {key!r}")
        try:
            with open(app_dir / ROWS_FILE, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row.to_dict()) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise EngineError("io-error", f"appending to {key}: {exc}") from exc

    def compact(self, key: str) -> None:
        """Rewrite the rows and quarantine logs to match the in-memory dataset."""
        ctx = self._contexts.get(key)
        if ctx is None:
            raise EngineError("unknown-key", f"no persisted application under {key!r}")
        rows = ctx.dataset.rows if ctx.dataset is not None else ()
        try:
            _atomic_write(
                self._app_dir(key) / ROWS_FILE,
                "".join(json.dumps(r.to_dict()) + "\n" for r in rows),
            )
            _atomic_write(
                self._app_dir(key) / QUARANTINE_FILE,
                "".join(json.dumps(r.to_dict()) + "\n" for r in ctx.quarantine),
            )
        except OSError as exc:
            raise EngineError("io-error", f"compacting {key}: {exc}") from exc


def open_store(root: Union[str, Path]) -> Store:
    """Open (creating if needed) a store root and load every application context."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EngineError("unreadable-root", f"{root}: {exc}") from exc
    if not root.is_dir() or not os.access(root, os.R_OK):
        raise EngineError("unreadable-root", f"{root} is not a readable directory")
    store = Store(root)
    store._load_all()
    return store
