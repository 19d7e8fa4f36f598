"""Descriptor data model, normalization, distances, and multi-scale fusion.

Vectors are stored as float32 rows of a set-level matrix; all scalar results
(norms, distances, inner products) are accumulated in float64. Final
descriptors — the output of :func:`fuse_multiscale` (and of stretching, which
preserves the dimension) — are capped at :data:`MAX_FINAL_DIM` components.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import DuplicateIdError, ValidationError, ZeroVectorError
from .validation import as_matrix, as_vector, check_same_dim

MAX_FINAL_DIM = 256


class Role(enum.IntEnum):
    """Which side of the matching problem a descriptor set belongs to."""

    QUERY = 0
    REFERENCE = 1
    TRAINING = 2


@dataclass(frozen=True)
class Descriptor:
    """One id plus its fixed-dimension real vector."""

    id: str
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", as_vector(self.vector, f"descriptor {self.id!r}"))


@dataclass(frozen=True)
class FusionConfig:
    """Settings for multi-scale fusion; `scale_count` pins the expected input count."""

    scale_count: int = 4

    def __post_init__(self):
        if self.scale_count < 1:
            raise ValidationError(f"scale_count must be >= 1, got {self.scale_count}")


class DescriptorSet:
    """An immutable, homogeneous collection of descriptors with a role.

    Ids are unique and ordered; `vectors` is the (n, dim) float32 matrix in
    the same order. The matrix is marked read-only so sets can be shared
    across threads without copying.
    """

    __slots__ = ("_role", "_ids", "_vectors", "_index")

    def __init__(self, role: Role, ids: Sequence[str], vectors) -> None:
        mat = as_matrix(vectors, "vectors")
        ids = tuple(str(i) for i in ids)
        if len(ids) != mat.shape[0]:
            raise ValidationError(
                f"got {len(ids)} ids for {mat.shape[0]} vectors"
            )
        index: dict[str, int] = {}
        for pos, name in enumerate(ids):
            if name in index:
                raise DuplicateIdError(f"duplicate descriptor id {name!r}")
            index[name] = pos
        mat = mat.copy()
        mat.setflags(write=False)
        self._role = Role(role)
        self._ids = ids
        self._vectors = mat
        self._index = index

    @classmethod
    def from_descriptors(cls, role: Role, entries: Iterable[Descriptor]) -> "DescriptorSet":
        entries = list(entries)
        if not entries:
            raise ValidationError("descriptor set must be non-empty")
        ids = [e.id for e in entries]
        dims = {e.vector.shape[0] for e in entries}
        if len(dims) != 1:
            raise ValidationError(f"entries have mixed dimensions {sorted(dims)}")
        return cls(role, ids, np.stack([e.vector for e in entries]))

    @property
    def role(self) -> Role:
        return self._role

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    def __len__(self) -> int:
        return self._vectors.shape[0]

    def __iter__(self) -> Iterator[Descriptor]:
        for name, row in zip(self._ids, self._vectors):
            yield Descriptor(name, row)

    def __getitem__(self, id_: str) -> Descriptor:
        return Descriptor(id_, self._vectors[self._index[id_]])

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, DescriptorSet):
            return NotImplemented
        return (
            self._role == other._role
            and self._ids == other._ids
            and np.array_equal(self._vectors, other._vectors)
        )

    def __repr__(self) -> str:
        return (
            f"DescriptorSet(role={self._role.name.lower()}, n={len(self)}, dim={self.dim})"
        )

    def with_role(self, role: Role) -> "DescriptorSet":
        return DescriptorSet(role, self._ids, self._vectors)

    def reorder(self, id_order: Sequence[str]) -> "DescriptorSet":
        """Return a new set with entries in `id_order` (must be a permutation)."""
        order = tuple(str(i) for i in id_order)
        if sorted(order) != sorted(self._ids):
            raise ValidationError("id_order is not a permutation of this set's ids")
        rows = [self._index[i] for i in order]
        return DescriptorSet(self._role, order, self._vectors[rows])


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm (float32 output, float64 norm).

    Raises :class:`ZeroVectorError` for the zero vector, which has no direction.
    """
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize a zero vector")
    return (arr.astype(np.float64) / norm).astype(np.float32)


def l2_normalize_rows(X: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization in float64, cast back to float32."""
    mat = as_matrix(X)
    wide = mat.astype(np.float64)
    norms = np.linalg.norm(wide, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroVectorError(f"cannot normalize zero vector at row {bad}")
    return (wide / norms[:, None]).astype(np.float32)


def euclidean_distance(a, b) -> float:
    """L2 distance between two equal-dimension vectors, accumulated in float64."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    check_same_dim(va, vb, "a", "b")
    diff = va.astype(np.float64) - vb.astype(np.float64)
    return float(np.linalg.norm(diff))


def inner_product(a, b) -> float:
    """Dot product of two equal-dimension vectors, accumulated in float64."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    check_same_dim(va, vb, "a", "b")
    return float(va.astype(np.float64) @ vb.astype(np.float64))


def fuse_multiscale(
    per_scale: Sequence[DescriptorSet], config: FusionConfig | None = None
) -> DescriptorSet:
    """Fuse per-scale descriptor sets into one final set.

    Each vector is unit-normalized, the normalized vectors are averaged
    across scales per id, and the mean is normalized again. Inputs must share
    role, dimension, and the exact ordered id list (use
    :meth:`DescriptorSet.reorder` first if they do not); this strictness
    catches pipeline wiring errors early.
    """
    sets = list(per_scale)
    if not sets:
        raise ValidationError("fuse_multiscale needs at least one descriptor set")
    if config is not None and len(sets) != config.scale_count:
        raise ValidationError(
            f"expected {config.scale_count} scales, got {len(sets)}"
        )
    first = sets[0]
    for s in sets[1:]:
        if s.role != first.role:
            raise ValidationError(
                f"mixed roles in fusion inputs: {first.role.name} vs {s.role.name}"
            )
        if s.dim != first.dim:
            raise ValidationError(f"mixed dims in fusion inputs: {first.dim} vs {s.dim}")
        if s.ids != first.ids:
            raise ValidationError(
                "fusion inputs must list identical ids in identical order"
            )
    if first.dim > MAX_FINAL_DIM:
        raise ValidationError(
            f"final descriptors are capped at {MAX_FINAL_DIM} dims, got {first.dim}"
        )

    acc = np.zeros((len(first), first.dim), dtype=np.float64)
    for s in sets:
        wide = s.vectors.astype(np.float64)
        norms = np.linalg.norm(wide, axis=1)
        if np.any(norms == 0.0):
            bad = first.ids[int(np.flatnonzero(norms == 0.0)[0])]
            raise ZeroVectorError(f"zero vector for id {bad!r} in a fusion input")
        acc += wide / norms[:, None]
    acc /= len(sets)
    mean_norms = np.linalg.norm(acc, axis=1)
    if np.any(mean_norms == 0.0):
        bad = first.ids[int(np.flatnonzero(mean_norms == 0.0)[0])]
        raise ZeroVectorError(
            f"per-scale vectors for id {bad!r} cancel to a zero mean; cannot fuse"
        )
    fused = (acc / mean_norms[:, None]).astype(np.float32)
    return DescriptorSet(first.role, first.ids, fused)
