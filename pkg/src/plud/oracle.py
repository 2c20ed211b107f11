"""Simulated expert answering review tasks from ground truth.

Every decision (the cluster label, each per-member toggle, each label
given to a toggled member) is independently flipped to a uniformly random
wrong alternative with probability ``noise``. Decisions draw from hashes
of (seed, task or item id), so a submission is a pure function of the
task contents and the config — campaigns replay identically.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass
class OracleConfig:
    noise: float = 0.0
    seed: int = 0
    truth: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise rate must lie in [0, 1]")


@dataclass
class Submission:
    label: str
    misclustered: list[str]
    item_labels: dict[str, str]
    reviewer: str = "ORACLE"


def _rng(seed: int, *parts: object) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed).encode())
    for p in parts:
        h.update(b"\x00")
        h.update(str(p).encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


class SimulatedExpert:
    def __init__(self, cfg: OracleConfig):
        self.cfg = cfg
        self._universe = sorted(set(cfg.truth.values()))

    def _truth_of(self, item_id: str) -> str:
        if item_id not in self.cfg.truth:
            raise KeyError(f"oracle has no truth for item {item_id}")
        return self.cfg.truth[item_id]

    def _maybe_flip_label(self, correct: str, rng: np.random.Generator) -> str:
        flip = rng.random() < self.cfg.noise
        alternatives = [c for c in self._universe if c != correct]
        if not flip or not alternatives:
            return correct
        return alternatives[int(rng.integers(len(alternatives)))]

    def label_item(self, item_id: str) -> str:
        """True label, flipped to a random wrong one with rate ``noise``."""
        rng = _rng(self.cfg.seed, "item_label", item_id)
        return self._maybe_flip_label(self._truth_of(item_id), rng)

    def review_cluster(self, task) -> Submission:
        """Answer one cluster page: pick its label, toggle the outliers.

        ``task`` needs ``task_id`` and ``members`` attributes. The noise-free
        answer is the true majority label (ties to the smallest label) with
        exactly the disagreeing members toggled and given their true labels.
        """
        members = sorted(task.members)
        if not members:
            raise ValueError(f"task {task.task_id} has no members")
        truths = {m: self._truth_of(m) for m in members}
        counts = Counter(truths.values())
        best = max(counts.values())
        majority = min(label for label, c in counts.items() if c == best)

        label = self._maybe_flip_label(
            majority, _rng(self.cfg.seed, "cluster_label", task.task_id)
        )
        misclustered: list[str] = []
        item_labels: dict[str, str] = {}
        for member in members:
            should_toggle = truths[member] != label
            rng = _rng(self.cfg.seed, "toggle", task.task_id, member)
            if rng.random() < self.cfg.noise:
                should_toggle = not should_toggle
            if should_toggle:
                misclustered.append(member)
                item_labels[member] = self._maybe_flip_label(
                    truths[member],
                    _rng(self.cfg.seed, "member_label", task.task_id, member),
                )
        return Submission(label=label, misclustered=misclustered, item_labels=item_labels)
