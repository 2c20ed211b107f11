"""Construction of synthetic datasets (manifest + truth + embedding blob)
for campaigns, tests, and the desk-scale experiment presets.

Class structure is decoupled from the generator: each *mode* is one
generator component with its own mean vector, and a label may own several
modes. Multi-modal classes make the classification problem benefit from
training data volume while k-means still finds coherent groups — the
regime the labeling workflow is designed for.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedder import EmbedderKind, EmbedderSpec, SyntheticItem, synth_embed
from .pludemb import write_embeddings


@dataclass
class Specimen:
    """One planned item: identity, generator mode, label, time, split."""

    item_id: str
    subject_id: str
    mode: int
    label: str
    time: float = 0.0
    test: bool = False


@dataclass
class SyntheticDataset:
    specimens: list[Specimen]
    embeddings: np.ndarray

    @property
    def truth(self) -> dict[str, str]:
        return {s.item_id: s.label for s in self.specimens}

    def manifest_lines(self) -> list[str]:
        lines = []
        for row, s in enumerate(self.specimens):
            obj = {
                "item_id": s.item_id,
                "subject_id": s.subject_id,
                "embedding_row": row,
            }
            if s.test:
                obj["test"] = True
            lines.append(json.dumps(obj, separators=(",", ":")))
        return lines

    def truth_lines(self, test_only: bool = False) -> list[str]:
        return [
            json.dumps({"item_id": s.item_id, "label": s.label}, separators=(",", ":"))
            for s in self.specimens
            if s.test or not test_only
        ]

    def write(self, directory: str | Path) -> dict[str, str]:
        """Materialize manifest/blob/truth files; returns their paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "manifest": str(directory / "manifest.jsonl"),
            "embeddings": str(directory / "source.pludemb"),
            "truth": str(directory / "truth.jsonl"),
            "test_labels": str(directory / "test_labels.jsonl"),
        }
        Path(paths["manifest"]).write_text(
            "\n".join(self.manifest_lines()) + "\n", encoding="utf-8"
        )
        write_embeddings(self.embeddings, paths["embeddings"])
        Path(paths["truth"]).write_text(
            "\n".join(self.truth_lines()) + "\n", encoding="utf-8"
        )
        Path(paths["test_labels"]).write_text(
            "\n".join(self.truth_lines(test_only=True)) + "\n", encoding="utf-8"
        )
        return paths


def mode_means(
    labels: list[str],
    modes_per_label: int,
    d: int,
    label_scale: float = 1.0,
    mode_spread: float = 0.5,
    seed: int = 0,
) -> tuple[np.ndarray, list[str]]:
    """Mean vectors for modes_per_label modes per label.

    Each label gets a base direction on the sphere of radius label_scale;
    its modes sit at base + mode_spread * (random unit vector). Returns
    (means, label_of_mode).
    """
    rng = np.random.default_rng(seed)
    means = []
    label_of_mode = []
    for label in labels:
        base = rng.standard_normal(d)
        base *= label_scale / np.linalg.norm(base)
        for _ in range(modes_per_label):
            offset = rng.standard_normal(d)
            offset *= mode_spread / np.linalg.norm(offset)
            means.append(base + offset)
            label_of_mode.append(label)
    return np.asarray(means), label_of_mode


def build_dataset(
    specimens: list[Specimen],
    means: np.ndarray,
    noise_sd: float,
    drift_rate: float = 0.0,
    seed: int = 0,
) -> SyntheticDataset:
    spec = EmbedderSpec(
        kind=EmbedderKind.SYNTHETIC,
        dimension=means.shape[1],
        class_means=means,
        noise_sd=noise_sd,
        drift_rate=drift_rate,
        seed=seed,
    )
    items = [
        SyntheticItem(s.item_id, s.subject_id, s.mode, s.time) for s in specimens
    ]
    return SyntheticDataset(specimens=specimens, embeddings=synth_embed(items, spec))


def balanced_pool(
    labels: list[str],
    label_of_mode: list[str],
    n_pool: int,
    n_test: int,
    seed: int = 0,
    subjects: int = 20,
) -> list[Specimen]:
    """Pool and test specimens with labels (and modes) drawn uniformly."""
    rng = np.random.default_rng(seed)
    modes_of = {
        label: [m for m, lab in enumerate(label_of_mode) if lab == label]
        for label in labels
    }
    out: list[Specimen] = []

    def draw(count: int, prefix: str, test: bool) -> None:
        for i in range(count):
            label = labels[int(rng.integers(len(labels)))]
            mode = modes_of[label][int(rng.integers(len(modes_of[label])))]
            out.append(
                Specimen(
                    item_id=f"{prefix}{i:06d}",
                    subject_id=f"subj{int(rng.integers(subjects)):03d}",
                    mode=mode,
                    label=label,
                    time=float(rng.random()),
                    test=test,
                )
            )

    draw(n_pool, "p", False)
    draw(n_test, "t", True)
    return out
