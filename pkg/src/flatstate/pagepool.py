"""Fixed-size binary pages over one backing file with a bounded resident set.

Pages are addressed by a dense id starting at 0. Page i lives at file
offset ``i * page_size``. A configured number of pages stays in memory;
the least recently used page is evicted (written back first when dirty)
when the pool is full. Reads past the end of the file yield zero-filled
pages, matching the convention that the absent value is zero.
"""

from __future__ import annotations

import os
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .errors import BoundsError, FormatError, StorageError

DEFAULT_PAGE_SIZE = 4096
MIN_PAGE_SIZE = 64


@dataclass
class PoolConfig:
    file_path: Path
    page_size: int = DEFAULT_PAGE_SIZE
    capacity: int = 256

    def __post_init__(self):
        self.file_path = Path(self.file_path)
        if self.page_size < MIN_PAGE_SIZE or self.page_size & (self.page_size - 1):
            raise FormatError(f"page_size must be a power of two >= {MIN_PAGE_SIZE}, got {self.page_size}")
        if self.capacity < 2:
            raise FormatError(f"capacity must be >= 2, got {self.capacity}")


class Page:
    """A resident page: mutable bytes plus a dirty flag.

    Callers that mutate ``data`` must call ``PagePool.mark_dirty`` before
    the next pool operation, or the change may be lost on eviction.
    """

    __slots__ = ("data", "dirty")

    def __init__(self, data: bytearray, dirty: bool):
        self.data = data
        self.dirty = dirty


class PagePool:
    def __init__(self, config: PoolConfig):
        self.config = config
        self._pages: OrderedDict[int, Page] = OrderedDict()
        try:
            self._fh = open(config.file_path, "r+b" if config.file_path.exists() else "w+b")
            size = os.fstat(self._fh.fileno()).st_size
        except OSError as exc:
            raise StorageError(f"cannot open pool file: {exc}", path=config.file_path) from exc
        if size % config.page_size:
            raise FormatError(f"{config.file_path} size {size} is not a multiple of page_size {config.page_size}")
        self._page_count = size // config.page_size
        self._file_pages = self._page_count

    @property
    def page_size(self) -> int:
        return self.config.page_size

    @property
    def page_count(self) -> int:
        return self._page_count

    @property
    def resident_count(self) -> int:
        return len(self._pages)

    def get_page(self, page_id: int) -> Page:
        """Return page ``page_id``, loading or creating it as needed.

        ``page_id == page_count`` extends the pool by one zeroed page;
        anything beyond that is a bounds error.
        """
        page = self._pages.get(page_id)
        if page is not None:
            self._pages.move_to_end(page_id)
            return page
        if page_id > self._page_count or page_id < 0:
            raise BoundsError(f"page {page_id} beyond pool end {self._page_count}")
        if page_id == self._page_count:
            self._page_count += 1
            page = Page(bytearray(self.page_size), dirty=True)
        else:
            page = Page(self._load(page_id), dirty=False)
        self._pages[page_id] = page
        self._evict_over_capacity()
        return page

    def mark_dirty(self, page_id: int) -> None:
        page = self._pages.get(page_id)
        if page is None:
            raise BoundsError(f"page {page_id} is not resident")
        page.dirty = True

    def flush(self) -> None:
        """Persist all dirty pages; afterwards the file covers every page."""
        for page_id in sorted(pid for pid, p in self._pages.items() if p.dirty):
            self._write(page_id, self._pages[page_id])
        if self._file_pages < self._page_count:
            try:
                self._fh.truncate(self._page_count * self.page_size)
            except OSError as exc:
                raise StorageError(f"cannot extend pool file: {exc}", path=self.config.file_path) from exc
            self._file_pages = self._page_count
        try:
            self._fh.flush()
        except OSError as exc:
            raise StorageError(f"cannot flush pool file: {exc}", path=self.config.file_path) from exc

    def close(self) -> None:
        self.flush()
        self._fh.close()
        self._pages.clear()

    def _evict_over_capacity(self) -> None:
        while len(self._pages) > self.config.capacity:
            page_id, page = self._pages.popitem(last=False)
            if page.dirty:
                self._write(page_id, page)

    def _load(self, page_id: int) -> bytearray:
        offset = page_id * self.page_size
        try:
            self._fh.seek(offset)
            data = self._fh.read(self.page_size)
        except OSError as exc:
            raise StorageError(f"read failed: {exc}", path=self.config.file_path, offset=offset) from exc
        if len(data) < self.page_size:
            data = data + b"\x00" * (self.page_size - len(data))
        return bytearray(data)

    def _write(self, page_id: int, page: Page) -> None:
        offset = page_id * self.page_size
        try:
            self._fh.seek(offset)
            self._fh.write(page.data)
        except OSError as exc:
            raise StorageError(f"write failed: {exc}", path=self.config.file_path, offset=offset) from exc
        page.dirty = False
        self._file_pages = max(self._file_pages, page_id + 1)
