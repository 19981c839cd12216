"""Content-addressed dataset storage and deterministic batch schedules.

Datasets are addressed by the sha256 of their encoded bytes, so two
submissions of the same data share one copy on disk and one copy of the
accounting. Batch order for an epoch is a pure function of the dataset
hash, the job seed, and the epoch number; it never depends on which
other jobs share the run.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats, rng
from .errors import UnknownDatasetError


@dataclass(frozen=True)
class Dataset:
    """Decoded splits plus the content hash that names them."""

    content_hash: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    @property
    def sample_count(self) -> int:
        return int(self.train_x.shape[0])

    @property
    def nbytes(self) -> int:
        return int(
            self.train_x.nbytes
            + self.train_y.nbytes
            + self.test_x.nbytes
            + self.test_y.nbytes
        )

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.train_x.shape[1:])


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    y: np.ndarray


def content_hash(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def decode(blob: bytes) -> Dataset:
    splits = formats.decode_dataset(blob)
    return Dataset(content_hash=content_hash(blob), **splits)


def batch_count(samples: int, batch_size: int) -> int:
    return -(-samples // batch_size)


def batches(dataset: Dataset, batch_size: int, job_seed: int, epoch: int) -> list[Batch]:
    """The batch sequence one job sees in one epoch.

    A fresh permutation per epoch, keyed so the schedule is identical in
    any run containing this job. The final batch keeps the remainder.
    """
    perm = rng.permutation(
        dataset.sample_count, "shuffle", dataset.content_hash, job_seed, epoch
    )
    out = []
    for start in range(0, dataset.sample_count, batch_size):
        idx = perm[start : start + batch_size]
        out.append(Batch(x=dataset.train_x[idx], y=dataset.train_y[idx]))
    return out


class DatasetStore:
    """On-disk dataset pool under one directory, one file per content hash."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, Dataset] = {}

    def path(self, digest: str) -> Path:
        return self.root / f"{digest}.unnd"

    def put(self, blob: bytes) -> str:
        """Store encoded bytes, returning the content hash. Idempotent."""
        formats.decode_dataset(blob)  # reject malformed uploads up front
        digest = content_hash(blob)
        target = self.path(digest)
        if not target.exists():
            tmp = target.with_suffix(".tmp")
            tmp.write_bytes(blob)
            tmp.rename(target)
        return digest

    def put_splits(self, splits: dict[str, np.ndarray]) -> str:
        return self.put(formats.encode_dataset(splits))

    def has(self, digest: str) -> bool:
        return digest in self._cache or self.path(digest).exists()

    def get(self, digest: str) -> Dataset:
        if digest in self._cache:
            return self._cache[digest]
        target = self.path(digest)
        if not target.exists():
            raise UnknownDatasetError(digest)
        ds = decode(target.read_bytes())
        self._cache[digest] = ds
        return ds

    def hashes(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.unnd"))
