"""On-disk cache of distance tables keyed by a content hash."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np
from filelock import FileLock

from .errors import IoError
from .kantorovich import DistanceTable, distance_table

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


def default_cache_dir():
    env = os.environ.get("SROTLAB_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "srotlab"


def _digest(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


def table_key(frame, X, Y, opts):
    """sha256 over the frame, both point sets and every solver option."""
    payload = {
        "format": FORMAT_VERSION,
        "frame": {"name": frame.name, "n": frame.n, "m": frame.m},
        "X": _digest(X),
        "Y": _digest(Y),
        "opts": opts.as_dict(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class DistanceCache:
    """Distance tables stored as ``<key>.npz`` with one advisory lock per key."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.hits = 0
        self.misses = 0

    def path(self, key):
        return self.root / f"{key}.npz"

    def _load(self, key):
        p = self.path(key)
        if not p.exists():
            return None
        try:
            with np.load(p, allow_pickle=False) as z:
                return DistanceTable(
                    values=z["values"].copy(),
                    covectors=z["covectors"].copy(),
                    methods=z["methods"].astype(object),
                    multiplicity=z["multiplicity"].copy(),
                )
        except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
            log.warning("cache entry %s is unreadable (%s); recomputing", p.name, exc)
            return None

    def _store(self, key, table):
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                np.savez(
                    fh,
                    values=table.values,
                    covectors=table.covectors,
                    methods=np.asarray(table.methods, dtype=str),
                    multiplicity=np.asarray(table.multiplicity),
                )
            os.replace(tmp, self.path(key))
        except OSError as exc:
            raise IoError(f"cannot write cache entry under {self.root}: {exc}") from exc

    def get_or_compute(self, key, computation):
        """Cached table for ``key``; on a miss run ``computation()`` and persist it."""
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cache directory {self.root} is not writable: {exc}") from exc
        hit = self._load(key)
        if hit is not None:
            self.hits += 1
            log.info("cache hit %s", key[:12])
            return hit
        with FileLock(str(self.root / f"{key}.lock")):
            hit = self._load(key)  # another writer may have finished meanwhile
            if hit is not None:
                self.hits += 1
                return hit
            self.misses += 1
            log.info("cache miss %s", key[:12])
            table = computation()
            self._store(key, table)
        return table

    def table(self, frame, X, Y, opts, threads=1):
        key = table_key(frame, X, Y, opts)
        return self.get_or_compute(key, lambda: distance_table(frame, X, Y, opts, threads=threads))

    def cost_matrix(self, frame, X, Y, opts, threads=1):
        return self.table(frame, X, Y, opts, threads).cost
