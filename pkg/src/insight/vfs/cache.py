"""Global block cache fronting file content reads.

One cache serves every machine in the simulation. Keys carry a layer tag
so a template file shared by hundreds of machines occupies each block
once, while a machine's private copy caches under its own key and never
collides with its former template blocks.

The cache is transparent: disabling it changes hit/miss counters and
nothing else.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable

BLOCK_SIZE = 4096
DEFAULT_CAPACITY = 64 * 1024 * 1024


class FileCache:
    def __init__(self, capacity: int = DEFAULT_CAPACITY, enabled: bool = True):
        if capacity < BLOCK_SIZE:
            raise ValueError("capacity below one block")
        self.capacity = capacity
        self.enabled = enabled
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        # key -> block bytes, in LRU order (oldest first)
        self._blocks: OrderedDict[tuple, bytes] = OrderedDict()
        self._bytes = 0

    @property
    def used_bytes(self) -> int:
        return self._bytes

    def __len__(self) -> int:
        return len(self._blocks)

    def reset_counters(self) -> None:
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def fetch(self, layer: tuple, path: str, index: int,
              loader: Callable[[int], bytes]) -> bytes:
        """Return block `index` of (layer, path), consulting the cache.

        loader(index) produces the block on a miss and is the only thing
        that runs when the cache is disabled.
        """
        if not self.enabled:
            self.misses += 1
            return loader(index)
        key = (layer, path, index)
        block = self._blocks.get(key)
        if block is not None:
            self.hits += 1
            self._blocks.move_to_end(key)
            return block
        self.misses += 1
        block = loader(index)
        self._store(key, block)
        return block

    def _store(self, key: tuple, block: bytes) -> None:
        if len(block) > self.capacity:
            return
        old = self._blocks.pop(key, None)
        if old is not None:
            self._bytes -= len(old)
        self._blocks[key] = block
        self._bytes += len(block)
        while self._bytes > self.capacity:
            _, evicted = self._blocks.popitem(last=False)
            self._bytes -= len(evicted)
            self.evictions += 1

    def invalidate(self, layer: tuple, path: str,
                   start: int | None = None, end: int | None = None) -> int:
        """Drop cached blocks of (layer, path) overlapping [start, end);
        with no range, drop them all. Returns blocks dropped."""
        lo = 0 if start is None else start // BLOCK_SIZE
        hi = None if end is None else (max(end, 1) - 1) // BLOCK_SIZE
        doomed = [k for k in self._blocks
                  if k[0] == layer and k[1] == path
                  and k[2] >= lo and (hi is None or k[2] <= hi)]
        for k in doomed:
            self._bytes -= len(self._blocks.pop(k))
        return len(doomed)

    def invalidate_layer(self, layer: tuple) -> int:
        doomed = [k for k in self._blocks if k[0] == layer]
        for k in doomed:
            self._bytes -= len(self._blocks.pop(k))
        return len(doomed)

    def clear(self) -> None:
        self._blocks.clear()
        self._bytes = 0
