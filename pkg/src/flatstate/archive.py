"""Append-only historical state database built from sorted change logs.

Every attribute or storage mutation becomes one immutable log entry
tagged with its block number. Entries live in sorted run files, one run
per committed block, periodically merged into larger runs (the usual
log-structured organization, which a forkless chain makes safe because
each block has at most one successor state). A point-in-time query is a
floor search: the entry with the greatest block less than or equal to
the requested one.

Ingestion is asynchronous: callers enqueue a block diff and return; a
background appender converts it to entries, computes the per-account
and per-block hashes, persists everything, and only then publishes the
new watermark. Readers never see a partially written block.
"""

from __future__ import annotations

import heapq
import json
import os
import queue
import threading
from dataclasses import dataclass
from pathlib import Path

from .digest import HASH_SIZE, ZERO_HASH, digest
from .errors import BoundsError, CorruptionError, SequenceError, StorageError, UnavailableError
from .types import (
    ADDRESS_SIZE,
    BALANCE_SIZE,
    BlockDiff,
    KEY_SIZE,
    NONCE_SIZE,
    REINC_SIZE,
    VALUE_SIZE,
    ZERO_VALUE,
    canonicalize_diff,
    serialize_update,
)

FORMAT_VERSION = 1
BLOCK_FIELD = 8
EMPTY_CODE_HASH = digest(b"")

# Queue sentinels: cut the current commit batch (and stop, for _CLOSE).
_FLUSH = object()
_CLOSE = object()


@dataclass(frozen=True)
class TableSpec:
    name: str
    prefix_size: int
    payload_size: int

    @property
    def entry_size(self) -> int:
        return self.prefix_size + BLOCK_FIELD + self.payload_size


TABLES = {
    "storage": TableSpec("storage", ADDRESS_SIZE + REINC_SIZE + KEY_SIZE, VALUE_SIZE),
    "balance": TableSpec("balance", ADDRESS_SIZE, BALANCE_SIZE),
    "nonce": TableSpec("nonce", ADDRESS_SIZE, NONCE_SIZE),
    "code": TableSpec("code", ADDRESS_SIZE, HASH_SIZE),
    "state": TableSpec("state", ADDRESS_SIZE, 1 + REINC_SIZE),
    "accthash": TableSpec("accthash", ADDRESS_SIZE, HASH_SIZE),
}


@dataclass
class RunRef:
    file: str
    level: int
    count: int
    data: bytes | None = None  # run bytes, pinned before the file may vanish


@dataclass
class ArchiveConfig:
    queue_depth: int = 256
    merge_fanout: int = 4  # runs per level that trigger a merge; 0 disables merging
    batch_blocks: int = 16  # blocks persisted per commit batch; flush cuts a batch early


class _SortedTable:
    """Run bookkeeping and floor search for one log table."""

    def __init__(self, spec: TableSpec, directory: Path):
        self.spec = spec
        self.directory = directory
        self.runs: list[RunRef] = []

    def entry_count(self) -> int:
        return sum(run.count for run in self.runs)

    def run_bytes(self, run: RunRef) -> bytes:
        if run.data is None:
            try:
                run.data = (self.directory / run.file).read_bytes()
            except FileNotFoundError:
                # A merge unlinks a run only after pinning its bytes, so a
                # reader losing this race finds the data in memory.
                if run.data is None:
                    raise
        return run.data

    def floor(self, runs: list[RunRef], prefix: bytes, block: int) -> tuple[int, bytes] | None:
        """Best (block', payload) with matching prefix and block' <= block."""
        size = self.spec.entry_size
        upper = prefix + block.to_bytes(BLOCK_FIELD, "big") + b"\xff" * self.spec.payload_size
        best: tuple[int, bytes] | None = None
        for run in runs:
            data = self.run_bytes(run)
            lo, hi = 0, run.count
            while lo < hi:
                mid = (lo + hi) // 2
                if data[mid * size : (mid + 1) * size] <= upper:
                    lo = mid + 1
                else:
                    hi = mid
            if lo == 0:
                continue
            entry = data[(lo - 1) * size : lo * size]
            if entry[: self.spec.prefix_size] != prefix:
                continue
            found = int.from_bytes(entry[self.spec.prefix_size : self.spec.prefix_size + BLOCK_FIELD], "big")
            if best is None or found > best[0]:
                best = (found, entry[self.spec.prefix_size + BLOCK_FIELD :])
        return best

    def iter_entries(self, run: RunRef):
        data = self.run_bytes(run)
        size = self.spec.entry_size
        for i in range(run.count):
            yield data[i * size : (i + 1) * size]


class ArchiveDb:
    def __init__(self, data_dir: Path, config: ArchiveConfig | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or ArchiveConfig()
        self._lock = threading.Lock()
        self._tables = {name: _SortedTable(spec, self.data_dir) for name, spec in TABLES.items()}
        self._block_hashes: list[bytes] = [ZERO_HASH]
        self._next_seq = 0
        self.watermark = 0
        self._load_meta()
        self._open_blockhash_file()
        self._open_code_blob()
        # Appender-private running state, rebuilt from the tables on open.
        self._account_hash: dict[bytes, bytes] = {}
        self._account_state: dict[bytes, tuple[bool, int]] = {}
        self._rebuild_account_maps()
        self._queue: queue.Queue = queue.Queue(maxsize=self.config.queue_depth)
        self._next_block = self.watermark
        self._error: Exception | None = None
        self._closed = False
        self._appender = threading.Thread(target=self._appender_loop, name="archive-appender", daemon=True)
        self._appender.start()

    # -- ingestion -------------------------------------------------------

    def append_block(self, diff: BlockDiff) -> None:
        """Enqueue one block for the background appender.

        Returns as soon as the diff is queued; blocks only while the queue
        is full (backpressure). The appender persists blocks in commit
        batches (``batch_blocks`` at a time, or earlier when flush/close
        cuts a batch) and readers see the new watermark only after the
        whole batch is on disk.
        """
        self._raise_pending_error()
        if self._closed:
            raise StorageError("archive is closed")
        diff = canonicalize_diff(diff)
        if diff.block != self._next_block + 1:
            raise SequenceError(f"expected block {self._next_block + 1}, got {diff.block}")
        self._next_block = diff.block
        self._queue.put(diff)

    def flush(self) -> None:
        """Cut the current commit batch and wait until it is published."""
        self._queue.put(_FLUSH)
        self._queue.join()
        self._raise_pending_error()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._queue.put(_CLOSE)
        self._appender.join()
        self._blockhash_fh.close()
        self._blob_fh.close()
        self._raise_pending_error()

    # -- queries ---------------------------------------------------------

    def get_storage_at(self, address: bytes, key: bytes, block: int) -> bytes:
        runs, _ = self._published("storage", block)
        _, reinc = self._state_at(address, block)
        prefix = address + reinc.to_bytes(REINC_SIZE, "big") + key
        best = self._tables["storage"].floor(runs, prefix, block)
        return best[1] if best else ZERO_VALUE

    def get_balance_at(self, address: bytes, block: int) -> int:
        runs, _ = self._published("balance", block)
        best = self._tables["balance"].floor(runs, address, block)
        return int.from_bytes(best[1], "big") if best else 0

    def get_nonce_at(self, address: bytes, block: int) -> int:
        runs, _ = self._published("nonce", block)
        best = self._tables["nonce"].floor(runs, address, block)
        return int.from_bytes(best[1], "big") if best else 0

    def get_code_at(self, address: bytes, block: int) -> bytes:
        runs, _ = self._published("code", block)
        best = self._tables["code"].floor(runs, address, block)
        if best is None:
            return b""
        return self._read_code(best[1])

    def account_exists_at(self, address: bytes, block: int) -> bool:
        exists, _ = self._state_at(address, block)
        return exists

    def block_hash(self, block: int) -> bytes:
        if block < 0:
            raise BoundsError(f"negative block {block}")
        with self._lock:
            if block > self.watermark:
                raise UnavailableError(f"block {block} beyond watermark {self.watermark}")
            return self._block_hashes[block]

    def account_hash(self, address: bytes, block: int) -> bytes:
        """Stored per-account composite hash as of ``block`` (zero if untouched)."""
        runs, _ = self._published("accthash", block)
        best = self._tables["accthash"].floor(runs, address, block)
        return best[1] if best else ZERO_HASH

    def entry_count(self, table: str) -> int:
        with self._lock:
            return self._tables[table].entry_count()

    def run_files(self) -> dict[str, list[str]]:
        with self._lock:
            return {name: [run.file for run in table.runs] for name, table in self._tables.items()}

    def _state_at(self, address: bytes, block: int) -> tuple[bool, int]:
        runs, _ = self._published("state", block)
        best = self._tables["state"].floor(runs, address, block)
        if best is None:
            return False, 0
        return best[1][0] == 1, int.from_bytes(best[1][1:], "big")

    def _published(self, table: str, block: int) -> tuple[list[RunRef], int]:
        if block < 0:
            raise BoundsError(f"negative block {block}")
        with self._lock:
            if block > self.watermark:
                raise UnavailableError(f"block {block} beyond watermark {self.watermark}")
            return self._tables[table].runs, self.watermark

    # -- appender --------------------------------------------------------

    def _appender_loop(self) -> None:
        batch: list[BlockDiff] = []

        def commit() -> None:
            if batch and self._error is None:
                try:
                    self._process_batch(batch)
                except Exception as exc:  # surfaced on the caller's next call
                    self._error = exc
            for _ in batch:
                self._queue.task_done()
            batch.clear()

        while True:
            item = self._queue.get()
            if item is _FLUSH or item is _CLOSE:
                commit()
                self._queue.task_done()
                if item is _CLOSE:
                    return
                continue
            batch.append(item)
            if len(batch) >= max(1, self.config.batch_blocks):
                commit()

    def _process_batch(self, diffs: list[BlockDiff]) -> None:
        entries: dict[str, list[bytes]] = {name: [] for name in TABLES}
        block_hashes: list[bytes] = []
        new_codes: list[bytes] = []
        pending_code_hashes: set[bytes] = set()
        previous = self._block_hashes[-1]
        for diff in diffs:
            block_field = diff.block.to_bytes(BLOCK_FIELD, "big")
            account_hashes: list[bytes] = []
            for update in diff.updates:
                addr = update.address
                exists, reinc = self._account_state.get(addr, (False, 0))
                state_changed = update.created or update.deleted
                if update.deleted:
                    exists, reinc = False, reinc + 1
                if update.created:
                    exists = True
                if state_changed:
                    self._account_state[addr] = (exists, reinc)
                    payload = (b"\x01" if exists else b"\x00") + reinc.to_bytes(REINC_SIZE, "big")
                    entries["state"].append(addr + block_field + payload)
                balance = update.balance if update.balance is not None else (0 if update.deleted else None)
                if balance is not None:
                    entries["balance"].append(addr + block_field + balance.to_bytes(BALANCE_SIZE, "big"))
                nonce = update.nonce if update.nonce is not None else (0 if update.deleted else None)
                if nonce is not None:
                    entries["nonce"].append(addr + block_field + nonce.to_bytes(NONCE_SIZE, "big"))
                code = update.code if update.code is not None else (b"" if update.deleted else None)
                if code is not None:
                    code_hash = digest(code)
                    entries["code"].append(addr + block_field + code_hash)
                    if code and code_hash not in self._code_offsets and code_hash not in pending_code_hashes:
                        pending_code_hashes.add(code_hash)
                        new_codes.append(code)
                reinc_field = reinc.to_bytes(REINC_SIZE, "big")
                for key, value in update.slots:
                    entries["storage"].append(addr + reinc_field + key + block_field + value)
                update_hash = digest(serialize_update(update))
                account_hash = digest(self._account_hash.get(addr, ZERO_HASH) + update_hash)
                self._account_hash[addr] = account_hash
                account_hashes.append(account_hash)
                entries["accthash"].append(addr + block_field + account_hash)
            previous = digest(previous + b"".join(account_hashes))
            block_hashes.append(previous)

        for code in new_codes:
            self._append_code(code)
        new_runs: dict[str, RunRef] = {}
        for name, rows in entries.items():
            if rows:
                new_runs[name] = self._write_run(name, sorted(rows), level=0)
        self._append_block_hashes(diffs[0].block, block_hashes)
        with self._lock:
            for name, run in new_runs.items():
                self._tables[name].runs.append(run)
            self._block_hashes.extend(block_hashes)
            self.watermark = diffs[-1].block
            self._write_meta()
        if self.config.merge_fanout > 0:
            for name in new_runs:
                self._maybe_merge(name)

    def _write_run(self, table: str, rows: list[bytes], level: int) -> RunRef:
        # A run is reachable only once the metadata lists it, so a partial
        # file from a crash is just an ignored orphan; no rename dance needed.
        seq = self._next_seq
        self._next_seq += 1
        file = f"{table}-{seq:08d}.run"
        with open(self.data_dir / file, "wb") as fh:
            fh.write(b"".join(rows))
        return RunRef(file=file, level=level, count=len(rows))

    def _maybe_merge(self, table: str) -> None:
        spec = TABLES[table]
        while True:
            with self._lock:
                runs = list(self._tables[table].runs)
            by_level: dict[int, list[RunRef]] = {}
            for run in runs:
                by_level.setdefault(run.level, []).append(run)
            target = None
            for level in sorted(by_level):
                if len(by_level[level]) >= self.config.merge_fanout:
                    target = level
                    break
            if target is None:
                return
            victims = by_level[target]
            sorted_table = self._tables[table]
            # iter_entries pins each victim's bytes in memory, so readers
            # holding a pre-merge run list stay serviceable after unlink.
            merged = heapq.merge(*(list(sorted_table.iter_entries(run)) for run in victims))
            new_run = self._write_run(table, list(merged), level=target + 1)
            victim_files = {run.file for run in victims}
            with self._lock:
                kept = [run for run in sorted_table.runs if run.file not in victim_files]
                sorted_table.runs = kept + [new_run]
                self._write_meta()
            for file in victim_files:
                (self.data_dir / file).unlink(missing_ok=True)

    def _append_code(self, code: bytes) -> None:
        code_hash = digest(code)
        offset = self._blob_size
        record = code_hash + len(code).to_bytes(4, "big") + code
        self._blob_fh.seek(offset)
        self._blob_fh.write(record)
        self._blob_fh.flush()
        self._blob_size += len(record)
        self._code_offsets[code_hash] = (offset + HASH_SIZE + 4, len(code))

    def _read_code(self, code_hash: bytes) -> bytes:
        if code_hash == EMPTY_CODE_HASH:
            return b""
        located = self._code_offsets.get(code_hash)
        if located is None:
            raise CorruptionError(f"code body for digest {code_hash.hex()} is missing from the blob")
        offset, length = located
        return os.pread(self._blob_fh.fileno(), length, offset)

    def _append_block_hashes(self, first_block: int, hashes: list[bytes]) -> None:
        self._blockhash_fh.seek(first_block * HASH_SIZE)
        self._blockhash_fh.write(b"".join(hashes))
        self._blockhash_fh.flush()

    # -- persistence -----------------------------------------------------

    def _meta_path(self) -> Path:
        return self.data_dir / "meta.json"

    def _write_meta(self) -> None:
        meta = {
            "format": FORMAT_VERSION,
            "watermark": self.watermark,
            "next_seq": self._next_seq,
            "tables": {
                name: [{"file": run.file, "level": run.level, "count": run.count} for run in table.runs]
                for name, table in self._tables.items()
            },
        }
        path = self._meta_path()
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
        os.replace(tmp, path)

    def _load_meta(self) -> None:
        path = self._meta_path()
        if not path.exists():
            return
        meta = json.loads(path.read_text())
        if meta.get("format") != FORMAT_VERSION:
            raise CorruptionError(f"unsupported archive format in {path}: {meta.get('format')}")
        self.watermark = meta["watermark"]
        self._next_seq = meta["next_seq"]
        for name, runs in meta["tables"].items():
            self._tables[name].runs = [RunRef(file=r["file"], level=r["level"], count=r["count"]) for r in runs]

    def _open_blockhash_file(self) -> None:
        path = self.data_dir / "blockhash.dat"
        fresh = not path.exists()
        self._blockhash_fh = open(path, "r+b" if not fresh else "w+b")
        if fresh:
            self._blockhash_fh.write(ZERO_HASH)
            self._blockhash_fh.flush()
        else:
            data = path.read_bytes()
            if len(data) < (self.watermark + 1) * HASH_SIZE:
                raise CorruptionError(f"block hash file shorter than watermark {self.watermark}")
            self._block_hashes = [
                data[i * HASH_SIZE : (i + 1) * HASH_SIZE] for i in range(self.watermark + 1)
            ]

    def _open_code_blob(self) -> None:
        path = self.data_dir / "codeblob.dat"
        self._blob_fh = open(path, "r+b" if path.exists() else "w+b")
        self._code_offsets: dict[bytes, tuple[int, int]] = {}
        data = path.read_bytes()
        offset = 0
        while offset < len(data):
            code_hash = data[offset : offset + HASH_SIZE]
            length = int.from_bytes(data[offset + HASH_SIZE : offset + HASH_SIZE + 4], "big")
            body_at = offset + HASH_SIZE + 4
            self._code_offsets[code_hash] = (body_at, length)
            offset = body_at + length
        self._blob_size = len(data)

    def _rebuild_account_maps(self) -> None:
        latest_state: dict[bytes, tuple[int, bytes]] = {}
        for run in self._tables["state"].runs:
            for entry in self._tables["state"].iter_entries(run):
                addr = entry[:ADDRESS_SIZE]
                block = int.from_bytes(entry[ADDRESS_SIZE : ADDRESS_SIZE + BLOCK_FIELD], "big")
                if addr not in latest_state or block > latest_state[addr][0]:
                    latest_state[addr] = (block, entry[ADDRESS_SIZE + BLOCK_FIELD :])
        for addr, (_, payload) in latest_state.items():
            self._account_state[addr] = (payload[0] == 1, int.from_bytes(payload[1:], "big"))
        latest_hash: dict[bytes, tuple[int, bytes]] = {}
        for run in self._tables["accthash"].runs:
            for entry in self._tables["accthash"].iter_entries(run):
                addr = entry[:ADDRESS_SIZE]
                block = int.from_bytes(entry[ADDRESS_SIZE : ADDRESS_SIZE + BLOCK_FIELD], "big")
                if addr not in latest_hash or block > latest_hash[addr][0]:
                    latest_hash[addr] = (block, entry[ADDRESS_SIZE + BLOCK_FIELD :])
        for addr, (_, payload) in latest_hash.items():
            self._account_hash[addr] = payload

    def _raise_pending_error(self) -> None:
        if self._error is not None:
            error, self._error = self._error, None
            raise error
