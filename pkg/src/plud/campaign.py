"""Campaign orchestration: the iterative cluster -> review -> classify loop.

A campaign lives in one directory: an append-only JSONL journal (items,
truth, label assignments, review rounds, task submissions, iteration
records), the embedding blob, model checkpoints, and the config document.
Replaying the journal reconstructs the exact in-memory state, which is
what makes interrupted runs resumable and oracle-driven runs comparable
byte-for-byte.

Each round has two phases. ``begin`` draws a batch, routes it by
confidence (self-training vs review), clusters the review share on the
classifier's feature embedding, and opens one ReviewTask per cluster.
``complete`` fires once every task is submitted: it moves the newly
labeled items into the training partition, retrains the classifier
warm-started, evaluates on the held-out test split, and appends an
IterationRecord. Round 0 is the cluster-only bootstrap, where the batch
comes from the sampling strategy and everything is reviewed.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import pludemb
from .classifier import EmbeddingClassifier, Prediction
from .clustering import ClusterConfig, cluster_items, default_k, majority_label
from .embedder import l2_normalize
from .evaluation import report as metrics_report
from .model import (
    DataFormatError,
    DatasetSnapshot,
    LabelStore,
    Provenance,
    ingest as build_snapshot,
    iter_jsonl,
)
from .oracle import OracleConfig, SimulatedExpert, Submission

JOURNAL_FILE = "journal.jsonl"
CONFIG_FILE = "config.json"
EMBEDDINGS_FILE = "embeddings.pludemb"
LOCK_FILE = "lock"
CHECKPOINT_DIR = "checkpoints"


# -- errors -----------------------------------------------------------------


class CampaignStateError(RuntimeError):
    """Operation not valid in the campaign's current phase."""


class PendingReview(RuntimeError):
    """The round cannot complete while review tasks are pending."""


class CampaignComplete(Exception):
    """The unlabeled pool is exhausted."""


class StaleRevision(RuntimeError):
    """Optimistic-concurrency check failed."""


class UnknownTask(KeyError):
    pass


class InvalidSubmission(ValueError):
    pass


class LockHeld(RuntimeError):
    pass


# -- config -----------------------------------------------------------------


class SamplingKind(str, Enum):
    RANDOM = "RANDOM"
    SUBJECT_COMPLETE = "SUBJECT_COMPLETE"


@dataclass
class SamplingStrategy:
    kind: SamplingKind = SamplingKind.RANDOM
    size: int | None = None
    subjects: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.kind = SamplingKind(self.kind)


class ThresholdMode(str, Enum):
    FIXED = "FIXED"
    PERCENTILE = "PERCENTILE"


@dataclass
class RoutingConfig:
    mode: ThresholdMode = ThresholdMode.FIXED
    tau: float = 0.9
    percentile: float = 50.0
    batch_size: int = 1000

    def __post_init__(self):
        self.mode = ThresholdMode(self.mode)
        if self.mode is ThresholdMode.FIXED and not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.mode is ThresholdMode.PERCENTILE and not 0.0 < self.percentile < 100.0:
            raise ValueError("percentile must lie in (0, 100)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class TrainSettings:
    architecture: str = "mlp1"
    hidden: int = 128
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 64
    weight_decay: float = 1e-4
    seed: int = 0
    patience: int = 5
    val_fraction: float = 0.1

    def estimator(self, seed: int) -> EmbeddingClassifier:
        return EmbeddingClassifier(
            architecture=self.architecture,
            hidden=self.hidden,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            seed=seed,
            patience=self.patience,
            val_fraction=self.val_fraction,
        )


@dataclass
class CampaignConfig:
    name: str = "campaign"
    seed: int = 0
    sampling: SamplingStrategy = field(default_factory=SamplingStrategy)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    oracle_noise: float = 0.0
    oracle_seed: int = 0
    normalize_before_cluster: bool = True
    return_misclustered_to_pool: bool = False
    service_port: int = 8080
    service_static_dir: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "sampling": {
                "kind": self.sampling.kind.value,
                "size": self.sampling.size,
                "subjects": self.sampling.subjects,
                "seed": self.sampling.seed,
            },
            "routing": {
                "mode": self.routing.mode.value,
                "tau": self.routing.tau,
                "percentile": self.routing.percentile,
                "batch_size": self.routing.batch_size,
            },
            "cluster": self.cluster.to_dict()
            | {"normalize": self.normalize_before_cluster},
            "train": asdict(self.train),
            "oracle": {"noise": self.oracle_noise, "seed": self.oracle_seed},
            "review": {
                "return_misclustered_to_pool": self.return_misclustered_to_pool
            },
            "service": {
                "port": self.service_port,
                "static_dir": self.service_static_dir,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CampaignConfig":
        cluster_doc = dict(doc.get("cluster", {}))
        normalize = cluster_doc.pop("normalize", True)
        return cls(
            name=doc.get("name", "campaign"),
            seed=doc.get("seed", 0),
            sampling=SamplingStrategy(**doc.get("sampling", {})),
            routing=RoutingConfig(**doc.get("routing", {})),
            cluster=ClusterConfig(**cluster_doc),
            train=TrainSettings(**doc.get("train", {})),
            oracle_noise=doc.get("oracle", {}).get("noise", 0.0),
            oracle_seed=doc.get("oracle", {}).get("seed", 0),
            normalize_before_cluster=normalize,
            return_misclustered_to_pool=doc.get("review", {}).get(
                "return_misclustered_to_pool", False
            ),
            service_port=doc.get("service", {}).get("port", 8080),
            service_static_dir=doc.get("service", {}).get("static_dir"),
        )


def derive_seed(base: int, *parts: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(base).encode())
    for p in parts:
        h.update(b"\x00")
        h.update(str(p).encode())
    return int.from_bytes(h.digest(), "little") % (2**63)


# -- review tasks and records -------------------------------------------------


class TaskStatus(str, Enum):
    PENDING = "PENDING"
    SUBMITTED = "SUBMITTED"


@dataclass
class ReviewTask:
    task_id: str
    iteration: int
    members: list[str]
    suggested: str | None = None
    status: TaskStatus = TaskStatus.PENDING
    submission: Submission | None = None


@dataclass
class EffortReport:
    basic_clicks: int
    assisted_clicks: int
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def account_effort(
    n_items: int, k_clusters: int, misclustered: int, classes_present: int
) -> EffortReport:
    """Click-count effort model for one submitted review round.

    Basic labeling costs one selection per image plus one confirm per
    class present; assisted labeling costs one toggle per misclustered
    image plus one label action per cluster.
    """
    if misclustered > n_items:
        raise ValueError("misclustered count exceeds reviewed items")
    if n_items > 0 and k_clusters < 1:
        raise ValueError("a non-empty review round needs at least one cluster")
    basic = n_items + classes_present if n_items > 0 else 0
    assisted = misclustered + k_clusters if n_items > 0 else 0
    ratio = assisted / basic if basic > 0 else 0.0
    return EffortReport(basic_clicks=basic, assisted_clicks=assisted, ratio=ratio)


@dataclass
class IterationRecord:
    index: int
    train_before: int
    train_after: int
    batch_size: int
    high_confidence: int
    low_confidence: int
    clusters_created: int
    review_decisions: int
    misclustered: int
    effort: EffortReport
    metrics: dict
    checkpoint: str | None
    cluster_purity: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effort"] = self.effort.to_dict()
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "IterationRecord":
        doc = dict(doc)
        doc["effort"] = EffortReport(**doc["effort"])
        return cls(**doc)

    @property
    def review_fraction(self) -> float:
        return self.low_confidence / self.batch_size if self.batch_size else 0.0


# -- free-standing operations -------------------------------------------------


def sample_initial(
    snapshot: DatasetSnapshot, strategy: SamplingStrategy
) -> list[str]:
    """Pick the bootstrap working set from the unlabeled pool."""
    pool = sorted(snapshot.unlabeled_pool)
    if not pool:
        raise CampaignStateError("unlabeled pool is empty")
    rng = np.random.default_rng(strategy.seed)
    if strategy.kind is SamplingKind.RANDOM:
        size = strategy.size if strategy.size is not None else len(pool)
        if size > len(pool):
            raise ValueError(f"sample size {size} exceeds pool size {len(pool)}")
        picked = rng.choice(len(pool), size=size, replace=False)
        return [pool[i] for i in sorted(picked)]
    subjects = sorted(
        {
            snapshot.items[i].subject_id
            for i in pool
            if snapshot.items[i].subject_id is not None
        }
    )
    count = strategy.subjects if strategy.subjects is not None else len(subjects)
    if count > len(subjects):
        raise ValueError(
            f"{count} subjects requested but only {len(subjects)} present"
        )
    picked_idx = rng.choice(len(subjects), size=count, replace=False)
    chosen = {subjects[i] for i in picked_idx}
    return [i for i in pool if snapshot.items[i].subject_id in chosen]


def route(
    predictions: Sequence[Prediction], cfg: RoutingConfig
) -> tuple[list[Prediction], list[Prediction]]:
    """Split a batch into (self_train, review) by prediction confidence."""
    if cfg.mode is ThresholdMode.FIXED:
        self_train = [p for p in predictions if p.confidence >= cfg.tau]
        review = [p for p in predictions if p.confidence < cfg.tau]
        return self_train, review
    if not predictions:
        raise ValueError("PERCENTILE routing needs a non-empty batch")
    ordered = sorted(predictions, key=lambda p: (-p.confidence, p.item_id))
    keep = int(len(ordered) * (100.0 - cfg.percentile) / 100.0)
    return list(ordered[:keep]), list(ordered[keep:])


# -- locking ------------------------------------------------------------------


def acquire_lock(directory: Path, owner: str) -> Path:
    path = directory / LOCK_FILE
    while True:
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            try:
                pid = int(path.read_text().split()[0])
            except (ValueError, OSError):
                pid = -1
            alive = False
            if pid > 0:
                try:
                    os.kill(pid, 0)
                    alive = True
                except OSError:
                    alive = False
            if alive:
                raise LockHeld(f"campaign locked by pid {pid} ({path})")
            path.unlink(missing_ok=True)  # stale lock from a dead process
            continue
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()} {owner}\n")
        return path


def release_lock(directory: Path) -> None:
    (directory / LOCK_FILE).unlink(missing_ok=True)


def lock_holder(directory: Path) -> int | None:
    path = directory / LOCK_FILE
    if not path.exists():
        return None
    try:
        pid = int(path.read_text().split()[0])
        os.kill(pid, 0)
        return pid
    except (ValueError, OSError):
        return None


# -- the campaign --------------------------------------------------------------


@dataclass
class _Round:
    iteration: int
    batch: list[str]
    self_train: list[str]
    review: list[str]
    cluster_purity: float | None = None


class Campaign:
    """Single-writer campaign state bound to a directory.

    All mutations are serialized through the journal writer; readers can
    take cheap consistent views because every mutation happens under the
    GIL within one method call and bumps ``revision``.
    """

    def __init__(self, directory: str | Path, config: CampaignConfig):
        self.directory = Path(directory)
        self.config = config
        self.snapshot: DatasetSnapshot | None = None
        self.store = LabelStore(on_event=self._emit)
        self.truth: dict[str, str] = {}
        self.model: EmbeddingClassifier | None = None
        self.records: list[IterationRecord] = []
        self.tasks: dict[str, ReviewTask] = {}
        self.round: _Round | None = None
        self.revision = 0
        self._journal_fh = None

    # -- construction / persistence ----------------------------------------

    @classmethod
    def create(cls, directory: str | Path, config: CampaignConfig) -> "Campaign":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / CHECKPOINT_DIR).mkdir(exist_ok=True)
        with open(directory / CONFIG_FILE, "w", encoding="utf-8") as fh:
            json.dump(config.to_dict(), fh, indent=2)
            fh.write("\n")
        return cls(directory, config)

    @classmethod
    def load(cls, directory: str | Path) -> "Campaign":
        directory = Path(directory)
        config_path = directory / CONFIG_FILE
        if not config_path.exists():
            raise FileNotFoundError(f"no campaign at {directory}")
        config = CampaignConfig.from_dict(json.loads(config_path.read_text()))
        campaign = cls(directory, config)
        journal = directory / JOURNAL_FILE
        if journal.exists():
            campaign._replay(journal)
        return campaign

    def save_config(self) -> None:
        with open(self.directory / CONFIG_FILE, "w", encoding="utf-8") as fh:
            json.dump(self.config.to_dict(), fh, indent=2)
            fh.write("\n")

    @property
    def ingested(self) -> bool:
        return self.snapshot is not None

    @property
    def bootstrapped(self) -> bool:
        return bool(self.records) or self.round is not None

    def pending_tasks(self) -> list[ReviewTask]:
        return [
            t
            for t in self.tasks.values()
            if t.status is TaskStatus.PENDING
        ]

    # -- journal ------------------------------------------------------------

    def _emit(self, event: dict) -> None:
        if self._journal_fh is None:
            self._journal_fh = open(
                self.directory / JOURNAL_FILE, "a", encoding="utf-8"
            )
        self._journal_fh.write(json.dumps(event, separators=(",", ":")) + "\n")
        self._journal_fh.flush()

    def close(self) -> None:
        if self._journal_fh is not None:
            self._journal_fh.close()
            self._journal_fh = None

    def _replay(self, journal: Path) -> None:
        events: list[dict] = []
        with open(journal, "r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    events.append(json.loads(raw))
                except json.JSONDecodeError:
                    break  # torn trailing record from an interrupted write

        # build the snapshot first so completion events can re-apply moves
        items_lines = [
            json.dumps({k: v for k, v in ev.items() if k != "event"})
            for ev in events
            if ev.get("event") == "item"
        ]
        if items_lines:
            embeddings = pludemb.read_embeddings(str(self.directory / EMBEDDINGS_FILE))
            self.snapshot = build_snapshot(items_lines, embeddings)
            self.store.restrict_items(set(self.snapshot.items))

        for event in events:
            kind = event.get("event")
            if kind == "meta":
                self.revision += 1
            elif kind == "truth":
                self.truth[event["item_id"]] = event["label"]
            elif kind == "label":
                self.store.apply(event)
            elif kind == "round":
                self.round = _Round(
                    iteration=event["iteration"],
                    batch=event["batch"],
                    self_train=event["self_train"],
                    review=event["review"],
                )
                self.tasks = {}
                self.revision += 1
            elif kind == "round_purity":
                if self.round is not None:
                    self.round.cluster_purity = event["purity"]
            elif kind == "task":
                self.tasks[event["task_id"]] = ReviewTask(
                    task_id=event["task_id"],
                    iteration=event["iteration"],
                    members=event["members"],
                    suggested=event.get("suggested"),
                )
            elif kind == "submit":
                task = self.tasks[event["task_id"]]
                task.status = TaskStatus.SUBMITTED
                task.submission = Submission(
                    label=event["label"],
                    misclustered=event["misclustered"],
                    item_labels=event["item_labels"],
                    reviewer=event["reviewer"],
                )
                self.revision += 1
            elif kind == "iteration":
                record = IterationRecord.from_dict(event["record"])
                self._apply_completion(record)
                self.revision += 1

        if self.records:
            last = self.records[-1]
            if last.checkpoint:
                path = self.directory / last.checkpoint
                if path.exists():
                    self.model = EmbeddingClassifier.load(str(path))

    def _apply_completion(self, record: IterationRecord) -> None:
        """Shared between live completion and journal replay."""
        if self.snapshot is not None and self.round is not None:
            labeled = [
                i for i in self.round.batch if self.store.active(i) is not None
            ]
            self.snapshot.move_to_train(labeled)
        self.records.append(record)
        self.round = None
        self.tasks = {}

    # -- ingest ---------------------------------------------------------------

    def ingest(
        self,
        manifest_path: str,
        embeddings_path: str,
        test_labels_path: str | None = None,
    ) -> DatasetSnapshot:
        if self.ingested:
            raise CampaignStateError("campaign already ingested")
        embeddings = pludemb.read_embeddings(embeddings_path)
        manifest_lines = list(iter_jsonl(manifest_path))
        snapshot = build_snapshot(manifest_lines, embeddings)
        target = self.directory / EMBEDDINGS_FILE
        if Path(embeddings_path).resolve() != target.resolve():
            shutil.copyfile(embeddings_path, target)
        self._emit({"event": "meta", "format": 1, "name": self.config.name})
        for raw in manifest_lines:
            raw = raw.strip()
            if raw:
                obj = json.loads(raw)
                self._emit({"event": "item", **obj})
        truth_count = 0
        if test_labels_path:
            for lineno, raw in enumerate(iter_jsonl(test_labels_path), 1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    obj = json.loads(raw)
                    item_id, label = obj["item_id"], obj["label"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataFormatError(
                        f"test labels line {lineno}: expected "
                        f'{{"item_id", "label"}}'
                    ) from exc
                if item_id not in snapshot.items:
                    raise DataFormatError(
                        f"test labels line {lineno}: unknown item {item_id!r}"
                    )
                self.truth[item_id] = label
                self._emit({"event": "truth", "item_id": item_id, "label": label})
                truth_count += 1
        self.snapshot = snapshot
        self.store.restrict_items(set(snapshot.items))
        self.revision += 1
        return snapshot

    def add_truth(self, labels: dict[str, str]) -> None:
        """Register ground truth (e.g. for oracle review) post-ingest."""
        for item_id, label in labels.items():
            if self.snapshot and item_id not in self.snapshot.items:
                raise DataFormatError(f"truth for unknown item {item_id!r}")
            self.truth[item_id] = label
            self._emit({"event": "truth", "item_id": item_id, "label": label})

    # -- round mechanics ------------------------------------------------------

    def _require_ingested(self) -> DatasetSnapshot:
        if self.snapshot is None:
            raise CampaignStateError("ingest a dataset first")
        return self.snapshot

    def _cluster_rows(
        self, X: np.ndarray, ids: list[str], k: int, round_index: int
    ):
        cfg = ClusterConfig(
            algorithm=self.config.cluster.algorithm,
            k=min(k, len(ids)),
            seed=derive_seed(self.config.seed, "cluster", round_index),
            max_iters=self.config.cluster.max_iters,
            tol=self.config.cluster.tol,
            restarts=self.config.cluster.restarts,
            linkage=self.config.cluster.linkage,
        )
        if self.config.normalize_before_cluster:
            X = l2_normalize(X)
        return cluster_items(X, ids, cfg)

    def _note_purity(self, cluster_set) -> None:
        members = [i for c in cluster_set.clusters for i in c]
        if not members or any(i not in self.truth for i in members):
            return
        from .clustering import purity

        value = purity(cluster_set, self.truth)
        self.round.cluster_purity = value
        self._emit(
            {
                "event": "round_purity",
                "iteration": self.round.iteration,
                "purity": value,
            }
        )

    def _open_tasks(
        self,
        round_index: int,
        cluster_set,
        suggestions: dict[str, str] | None,
    ) -> list[ReviewTask]:
        tasks = []
        for ci, members in enumerate(cluster_set.clusters):
            if not members:
                continue
            task_id = f"r{round_index:04d}-c{ci:03d}"
            suggested = None
            if suggestions:
                known = [suggestions[m] for m in members if m in suggestions]
                if known:
                    suggested, _ = majority_label(known)
            task = ReviewTask(
                task_id=task_id,
                iteration=round_index,
                members=list(members),
                suggested=suggested,
            )
            self.tasks[task_id] = task
            self._emit(
                {
                    "event": "task",
                    "task_id": task_id,
                    "iteration": round_index,
                    "members": task.members,
                    "suggested": suggested,
                }
            )
            tasks.append(task)
        return tasks

    def begin_bootstrap(self) -> list[ReviewTask]:
        snapshot = self._require_ingested()
        if self.bootstrapped:
            raise CampaignStateError("campaign already bootstrapped")
        sample = sample_initial(snapshot, self.config.sampling)
        self.round = _Round(iteration=0, batch=sample, self_train=[], review=sample)
        self.tasks = {}
        self._emit(
            {
                "event": "round",
                "iteration": 0,
                "batch": sample,
                "self_train": [],
                "review": sample,
            }
        )
        self.revision += 1
        X = snapshot.rows_for(sample)
        k = self.config.cluster.k or default_k(len(sample))
        cluster_set = self._cluster_rows(X, sample, k, 0)
        self._note_purity(cluster_set)
        return self._open_tasks(0, cluster_set, None)

    def begin_iteration(self) -> list[ReviewTask]:
        snapshot = self._require_ingested()
        if self.round is not None:
            raise CampaignStateError("a round is already in flight")
        if self.model is None:
            raise CampaignStateError("bootstrap the campaign before iterating")
        pool = sorted(snapshot.unlabeled_pool)
        if not pool:
            raise CampaignComplete("unlabeled pool is exhausted")
        index = len(self.records)
        B = min(self.config.routing.batch_size, len(pool))
        rng = np.random.default_rng(
            [derive_seed(self.config.seed, "batch"), index]
        )
        batch = [pool[i] for i in sorted(rng.choice(len(pool), size=B, replace=False))]
        predictions = self.model.predict_ranked(batch, snapshot.rows_for(batch))
        self_train, review = route(predictions, self.config.routing)

        self.round = _Round(
            iteration=index,
            batch=batch,
            self_train=[p.item_id for p in self_train],
            review=[p.item_id for p in review],
        )
        self.tasks = {}
        self._emit(
            {
                "event": "round",
                "iteration": index,
                "batch": batch,
                "self_train": self.round.self_train,
                "review": self.round.review,
            }
        )
        self.revision += 1
        for p in self_train:
            self.store.assign(
                p.item_id,
                p.ranked[0][0],
                Provenance.SELF_TRAINED,
                p.confidence,
                index,
            )
        if review:
            feats = np.vstack([p.features for p in review])
            suggestions = {p.item_id: p.ranked[0][0] for p in review}
            k = max(1, len(self.store.registry))
            cluster_set = self._cluster_rows(
                feats, [p.item_id for p in review], k, index
            )
            self._note_purity(cluster_set)
            return self._open_tasks(index, cluster_set, suggestions)
        self._complete_round()
        return []

    def submit_task(
        self,
        task_id: str,
        label: str,
        misclustered: Iterable[str],
        item_labels: dict[str, str] | None = None,
        reviewer: str = "HUMAN",
        revision: int | None = None,
        auto_complete: bool = True,
    ) -> ReviewTask:
        if task_id not in self.tasks:
            raise UnknownTask(task_id)
        task = self.tasks[task_id]
        if revision is not None and revision != self.revision:
            raise StaleRevision(
                f"submitted against revision {revision}, current is {self.revision}"
            )
        if task.status is not TaskStatus.PENDING:
            raise StaleRevision(f"task {task_id} already submitted")
        if not label:
            raise InvalidSubmission("a cluster label is required")
        misclustered = list(misclustered)
        item_labels = dict(item_labels or {})
        members = set(task.members)
        stray = [i for i in misclustered if i not in members]
        if stray:
            raise InvalidSubmission(
                f"misclustered ids not in the cluster: {stray[:3]}"
            )
        if not self.config.return_misclustered_to_pool:
            missing = [i for i in misclustered if i not in item_labels]
            if missing:
                raise InvalidSubmission(
                    f"toggled items without a label: {missing[:3]}"
                )
        toggled = set(misclustered)
        iteration = task.iteration
        for item_id in task.members:
            if item_id in toggled:
                if item_id in item_labels:
                    self.store.assign(
                        item_id, item_labels[item_id], Provenance.MANUAL, 1.0, iteration
                    )
            else:
                self.store.assign(
                    item_id, label, Provenance.CLUSTER_MAJORITY, 1.0, iteration
                )
        task.status = TaskStatus.SUBMITTED
        task.submission = Submission(
            label=label,
            misclustered=sorted(toggled),
            item_labels=item_labels,
            reviewer=reviewer,
        )
        self._emit(
            {
                "event": "submit",
                "task_id": task_id,
                "label": label,
                "misclustered": task.submission.misclustered,
                "item_labels": item_labels,
                "reviewer": reviewer,
            }
        )
        self.revision += 1
        if auto_complete and not self.pending_tasks():
            self._complete_round()
        return task

    def round_ready_to_complete(self) -> bool:
        return self.round is not None and not self.pending_tasks()

    def _review_effort(self) -> tuple[EffortReport, int, int]:
        """Effort for the current round; returns (report, misclustered, k)."""
        assert self.round is not None
        submitted = [
            t for t in self.tasks.values() if t.status is TaskStatus.SUBMITTED
        ]
        n = len(self.round.review)
        k = len(submitted)
        m = sum(len(t.submission.misclustered) for t in submitted)
        classes = set()
        for t in submitted:
            classes.add(t.submission.label)
            classes.update(t.submission.item_labels.values())
        return account_effort(n, k, m, len(classes)), m, k

    def _complete_round(self) -> IterationRecord:
        snapshot = self._require_ingested()
        if self.round is None:
            raise CampaignStateError("no round in flight")
        if self.pending_tasks():
            raise PendingReview(
                f"{len(self.pending_tasks())} review tasks still pending"
            )
        rnd = self.round
        effort, misclustered, k_clusters = self._review_effort()
        train_before = len(snapshot.labeled_train)

        labeled = [i for i in rnd.batch if self.store.active(i) is not None]
        will_train = train_before + len(
            [i for i in labeled if i in snapshot.unlabeled_pool]
        )

        # retrain on everything active in the train partition plus the
        # incoming items (they move below; order events like the journal)
        train_ids = sorted(
            set(snapshot.labeled_train)
            | {i for i in labeled if i in snapshot.unlabeled_pool}
        )
        X = snapshot.rows_for(train_ids)
        y = [self.store.active(i).label for i in train_ids]
        classes = self.store.registry.names
        seed = derive_seed(self.config.train.seed, "train", rnd.iteration)
        est = self.config.train.estimator(seed)
        est.fit(
            X,
            y,
            classes=classes,
            warm_start_from=self.model,
            registry_version=self.store.registry.version,
            iteration=rnd.iteration,
        )
        self.model = est
        checkpoint = f"{CHECKPOINT_DIR}/model_{rnd.iteration:04d}.ckpt"
        est.save(str(self.directory / checkpoint))

        metrics = self._evaluate()
        record = IterationRecord(
            index=rnd.iteration,
            train_before=train_before,
            train_after=will_train,
            batch_size=len(rnd.batch),
            high_confidence=len(rnd.self_train),
            low_confidence=len(rnd.review),
            clusters_created=k_clusters,
            review_decisions=k_clusters,
            misclustered=misclustered,
            effort=effort,
            metrics=metrics,
            checkpoint=checkpoint,
            cluster_purity=rnd.cluster_purity,
        )
        self._apply_completion(record)
        self._emit({"event": "iteration", "record": record.to_dict()})
        self.revision += 1
        return record

    def _evaluate(self) -> dict:
        snapshot = self._require_ingested()
        test_ids = sorted(
            i for i in snapshot.held_out_test if i in self.truth
        )
        if not test_ids or self.model is None:
            return {}
        predictions = self.model.predict_ranked(
            test_ids, snapshot.rows_for(test_ids)
        )
        truth = {i: self.truth[i] for i in test_ids}
        rep = metrics_report(predictions, truth, ks=(1, 3))
        return rep.summary()

    # -- high-level drivers ---------------------------------------------------

    def oracle(self) -> SimulatedExpert:
        if not self.truth:
            raise CampaignStateError("no ground truth available for the oracle")
        return SimulatedExpert(
            OracleConfig(
                noise=self.config.oracle_noise,
                seed=self.config.oracle_seed,
                truth=self.truth,
            )
        )

    def _submit_with_oracle(self, tasks: list[ReviewTask]) -> None:
        expert = self.oracle()
        for task in tasks:
            sub = expert.review_cluster(task)
            self.submit_task(
                task.task_id,
                sub.label,
                sub.misclustered,
                sub.item_labels,
                reviewer=sub.reviewer,
                auto_complete=False,
            )
        if self.round_ready_to_complete():
            self._complete_round()

    def run_bootstrap(self, use_oracle: bool = True) -> IterationRecord | list[ReviewTask]:
        tasks = self.begin_bootstrap()
        if not use_oracle:
            return tasks
        self._submit_with_oracle(tasks)
        return self.records[-1]

    def run_iteration(self, use_oracle: bool = True) -> IterationRecord | list[ReviewTask]:
        tasks = self.begin_iteration()
        if self.round is None:  # completed inline (no review items)
            return self.records[-1]
        if not use_oracle:
            return tasks
        self._submit_with_oracle(tasks)
        return self.records[-1]

    def run_campaign(self, iterations: int) -> list[IterationRecord]:
        """Oracle-driven bootstrap plus up to ``iterations`` rounds."""
        if not self.bootstrapped:
            self.run_bootstrap(use_oracle=True)
        for _ in range(iterations):
            try:
                self.run_iteration(use_oracle=True)
            except CampaignComplete:
                break
        return self.records

    # -- exploration ------------------------------------------------------------

    def peek_batch_confidences(self) -> np.ndarray:
        """Confidences of the batch the next iteration would draw.

        Uses the same seeded draw as begin_iteration, so exploring the
        threshold does not perturb the campaign.
        """
        snapshot = self._require_ingested()
        if self.model is None:
            raise CampaignStateError("no trained model yet")
        pool = sorted(snapshot.unlabeled_pool)
        if not pool:
            return np.empty(0)
        index = len(self.records)
        B = min(self.config.routing.batch_size, len(pool))
        rng = np.random.default_rng(
            [derive_seed(self.config.seed, "batch"), index]
        )
        batch = [pool[i] for i in sorted(rng.choice(len(pool), size=B, replace=False))]
        probs = self.model.predict_proba(snapshot.rows_for(batch))
        return probs.max(axis=1)

    def status(self) -> dict:
        latest = self.records[-1].metrics if self.records else {}
        return {
            "name": self.config.name,
            "iteration": len(self.records),
            "train_size": len(self.snapshot.labeled_train) if self.snapshot else 0,
            "pool_size": len(self.snapshot.unlabeled_pool) if self.snapshot else 0,
            "test_size": len(self.snapshot.held_out_test) if self.snapshot else 0,
            "pending_tasks": len(self.pending_tasks()),
            "revision": self.revision,
            "metrics_latest": latest,
            "round_in_flight": self.round.iteration if self.round else None,
        }
