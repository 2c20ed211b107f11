"""Embedding sources: precomputed blobs, the deterministic synthetic
generator, and the file-exchange adapter for external backbones.

The synthetic generator stands in for a CNN at desk scale. Each row is

    mean[g] + drift_rate * t * direction[subject] + noise

where the per-subject drift direction and per-item Gaussian noise are
drawn from hashes of (seed, subject) and (seed, item id), so identical
inputs produce identical bits on every platform.
"""

from __future__ import annotations

import hashlib
import json
import time as _time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .pludemb import read_embeddings, write_embeddings


class EmbedderKind(str, Enum):
    PRECOMPUTED = "PRECOMPUTED"
    SYNTHETIC = "SYNTHETIC"
    EXTERNAL = "EXTERNAL"


@dataclass
class EmbedderSpec:
    kind: EmbedderKind = EmbedderKind.PRECOMPUTED
    dimension: int = 1
    class_means: np.ndarray | None = None  # (G, d), SYNTHETIC only
    noise_sd: float = 0.0
    drift_rate: float = 0.0
    seed: int = 0
    exchange_dir: str | None = None  # EXTERNAL only

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.noise_sd < 0 or self.drift_rate < 0:
            raise ValueError("noise_sd and drift_rate must be >= 0")
        if self.class_means is not None:
            self.class_means = np.asarray(self.class_means, dtype=np.float64)
            if self.class_means.shape[1] != self.dimension:
                raise ValueError(
                    f"class means have dimension {self.class_means.shape[1]}, "
                    f"spec says {self.dimension}"
                )


@dataclass(frozen=True)
class SyntheticItem:
    """Generator-side view of an item: class index and a scalar time."""

    item_id: str
    subject_id: str
    class_index: int
    time: float = 0.0


def _hashed_rng(seed: int, *parts: object) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed).encode())
    for part in parts:
        h.update(b"\x00")
        h.update(str(part).encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def subject_direction(seed: int, subject_id: str, d: int) -> np.ndarray:
    """Deterministic unit drift direction for a subject."""
    v = _hashed_rng(seed, "subject", subject_id).standard_normal(d)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.zeros(d)
        v[0] = 1.0
        return v
    return v / norm


def synth_embed(items: Sequence[SyntheticItem], spec: EmbedderSpec) -> np.ndarray:
    """Generate (len(items), d) float32 embeddings from the spec."""
    if spec.kind is not EmbedderKind.SYNTHETIC:
        raise ValueError("synth_embed requires a SYNTHETIC spec")
    if spec.class_means is None:
        raise ValueError("SYNTHETIC spec needs class means")
    means = spec.class_means
    g_count, d = means.shape
    rows = np.empty((len(items), d), dtype=np.float64)
    directions: dict[str, np.ndarray] = {}
    for i, item in enumerate(items):
        if not 0 <= item.class_index < g_count:
            raise ValueError(
                f"item {item.item_id}: class index {item.class_index} "
                f"out of range [0, {g_count})"
            )
        u = directions.get(item.subject_id)
        if u is None:
            u = subject_direction(spec.seed, item.subject_id, d)
            directions[item.subject_id] = u
        noise = 0.0
        if spec.noise_sd > 0:
            noise = _hashed_rng(spec.seed, "noise", item.item_id).normal(
                0.0, spec.noise_sd, d
            )
        rows[i] = means[item.class_index] + spec.drift_rate * item.time * u + noise
    return rows.astype(np.float32)


def load_precomputed(source) -> np.ndarray:
    """PLUDEMB1 blob -> matrix, exactly the stored bits, no normalization."""
    return read_embeddings(source)


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit Euclidean norm; zero rows untouched."""
    m = np.asarray(matrix)
    norms = np.linalg.norm(m.astype(np.float64), axis=1)
    scale = np.where(norms > 0.0, norms, 1.0)
    return (m / scale[:, None]).astype(m.dtype)


# ---------------------------------------------------------------------------
# EXTERNAL exchange-directory protocol: the caller drops `request.jsonl`
# (one {"item_id", "source_uri"} line per item), the external backbone
# answers with `embeddings.pludemb` plus an empty `done.marker`.
# ---------------------------------------------------------------------------

REQUEST_FILE = "request.jsonl"
DONE_MARKER = "done.marker"
RESPONSE_BLOB = "embeddings.pludemb"


def request_external(
    items: Sequence[tuple[str, str | None]],
    spec: EmbedderSpec,
    timeout_s: float = 60.0,
    poll_s: float = 0.05,
) -> np.ndarray:
    """Run one round of the exchange protocol and return the embeddings.

    Rows come back in request order; the external process decides which
    backbone and layer to use and must document that choice itself.
    """
    if spec.kind is not EmbedderKind.EXTERNAL or not spec.exchange_dir:
        raise ValueError("request_external requires an EXTERNAL spec with a directory")
    exchange = Path(spec.exchange_dir)
    exchange.mkdir(parents=True, exist_ok=True)
    marker = exchange / DONE_MARKER
    blob = exchange / RESPONSE_BLOB
    for stale in (marker, blob):
        if stale.exists():
            stale.unlink()
    with open(exchange / REQUEST_FILE, "w", encoding="utf-8") as fh:
        for item_id, source_uri in items:
            fh.write(json.dumps({"item_id": item_id, "source_uri": source_uri}) + "\n")
    deadline = _time.monotonic() + timeout_s
    while not marker.exists():
        if _time.monotonic() > deadline:
            raise TimeoutError(f"external embedder did not answer within {timeout_s}s")
        _time.sleep(poll_s)
    matrix = read_embeddings(str(blob))
    if matrix.shape[0] != len(items):
        raise ValueError(
            f"external embedder returned {matrix.shape[0]} rows for "
            f"{len(items)} requested items"
        )
    return matrix


__all__ = [
    "EmbedderKind",
    "EmbedderSpec",
    "SyntheticItem",
    "synth_embed",
    "subject_direction",
    "load_precomputed",
    "l2_normalize",
    "request_external",
    "write_embeddings",
]
