"""Operator command line: ingest, bootstrap, iterate, eval, confidences,
serve, simulate.

Exit codes are a stable scripting contract: 0 success, 2 input format,
3 state conflict, 4 lock held, 5 missing prerequisites, 6 environment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .campaign import (
    Campaign,
    CampaignComplete,
    CampaignConfig,
    CampaignStateError,
    LockHeld,
    PendingReview,
    SamplingKind,
    acquire_lock,
    lock_holder,
    release_lock,
)
from .model import DataFormatError
from .pludemb import BlobFormatError

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_STATE = 3
EXIT_LOCK = 4
EXIT_MISSING = 5
EXIT_ENV = 6


def default_dir() -> str:
    return os.environ.get("PLUD_HOME", "./campaign")


class CliError(SystemExit):
    def __init__(self, code: int, message: str):
        print(f"plud: {message}", file=sys.stderr)
        super().__init__(code)


def _load_campaign(directory: str) -> Campaign:
    try:
        return Campaign.load(directory)
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, f"no campaign at {directory}; run `plud ingest` first")


def _guard_lock(directory: str) -> None:
    pid = lock_holder(Path(directory))
    if pid is not None and pid != os.getpid():
        raise CliError(EXIT_LOCK, f"campaign is locked by pid {pid} (is `plud serve` running?)")


def cmd_ingest(args) -> int:
    directory = Path(args.dir)
    if (directory / "journal.jsonl").exists():
        raise CliError(EXIT_STATE, f"{directory} already holds an ingested campaign")
    config = CampaignConfig()
    if args.config:
        try:
            config = CampaignConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError(EXIT_FORMAT, f"bad config: {exc}")
    if args.name:
        config.name = args.name
    campaign = Campaign.create(directory, config)
    try:
        snapshot = campaign.ingest(args.manifest, args.embeddings, args.test_labels)
    except FileNotFoundError as exc:
        raise CliError(EXIT_FORMAT, str(exc))
    except (DataFormatError, BlobFormatError) as exc:
        raise CliError(EXIT_FORMAT, str(exc))
    finally:
        campaign.close()
    print(
        f"ingested {len(snapshot.items)} items "
        f"(pool {len(snapshot.unlabeled_pool)}, test {len(snapshot.held_out_test)}, "
        f"truth entries {len(campaign.truth)})"
    )
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    _guard_lock(args.dir)
    campaign = _load_campaign(args.dir)
    if not campaign.ingested:
        raise CliError(EXIT_MISSING, "nothing ingested yet")
    if campaign.bootstrapped:
        raise CliError(EXIT_STATE, "campaign already bootstrapped")
    if args.strategy:
        campaign.config.sampling.kind = (
            SamplingKind.SUBJECT_COMPLETE
            if args.strategy == "subject-complete"
            else SamplingKind.RANDOM
        )
    if args.size is not None:
        campaign.config.sampling.size = args.size
    if args.subjects is not None:
        campaign.config.sampling.subjects = args.subjects
    if args.seed is not None:
        campaign.config.sampling.seed = args.seed
        campaign.config.seed = args.seed
    if args.k is not None:
        campaign.config.cluster.k = args.k
    campaign.save_config()
    lock = acquire_lock(Path(args.dir), "cli-bootstrap")
    try:
        result = campaign.run_bootstrap(use_oracle=args.oracle)
    except ValueError as exc:
        raise CliError(EXIT_FORMAT, str(exc))
    except CampaignStateError as exc:
        raise CliError(EXIT_STATE, str(exc))
    finally:
        release_lock(Path(args.dir))
        campaign.close()
    if args.oracle:
        record = result
        acc = record.metrics.get("accuracy_top1")
        acc_text = f", test accuracy {acc:.2f}%" if acc is not None else ""
        print(
            f"bootstrap complete: train size {record.train_after}, "
            f"{record.clusters_created} clusters reviewed{acc_text}"
        )
    else:
        print(
            f"bootstrap clustered: {len(result)} review tasks pending "
            f"(submit them via the service, then iterate)"
        )
    return EXIT_OK


def _print_iteration_table(records) -> None:
    header = (
        f"{'round':>5} {'train':>7} {'high':>6} {'low':>6} "
        f"{'effort':>7} {'accuracy':>9}"
    )
    print(header)
    for rec in records:
        acc = rec.metrics.get("accuracy_top1")
        acc_text = f"{acc:9.2f}" if acc is not None else f"{'n/a':>9}"
        print(
            f"{rec.index:>5} {rec.train_after:>7} {rec.high_confidence:>6} "
            f"{rec.low_confidence:>6} {rec.effort.ratio:>7.3f} {acc_text}"
        )


def cmd_iterate(args) -> int:
    _guard_lock(args.dir)
    campaign = _load_campaign(args.dir)
    if not campaign.bootstrapped or campaign.model is None:
        if campaign.round is not None:
            raise CliError(EXIT_STATE, "bootstrap review still pending")
        raise CliError(EXIT_MISSING, "bootstrap the campaign first")
    if args.batch is not None:
        campaign.config.routing.batch_size = args.batch
    if args.threshold is not None:
        campaign.config.routing.tau = args.threshold
    if args.percentile is not None:
        campaign.config.routing.mode = "PERCENTILE"
        campaign.config.routing.percentile = args.percentile
    campaign.config.routing.__post_init__()
    campaign.save_config()
    lock = acquire_lock(Path(args.dir), "cli-iterate")
    done: list = []
    try:
        for _ in range(args.n):
            try:
                result = campaign.run_iteration(use_oracle=args.oracle)
            except CampaignComplete:
                print("pool exhausted: campaign complete")
                break
            if not args.oracle and campaign.round is not None:
                print(
                    f"{len(campaign.pending_tasks())} review tasks pending; "
                    f"submit them via the service, then rerun iterate"
                )
                break
            done.append(result)
    except PendingReview as exc:
        raise CliError(EXIT_STATE, str(exc))
    finally:
        release_lock(Path(args.dir))
        campaign.close()
    if done:
        _print_iteration_table(done)
    return EXIT_OK


def cmd_eval(args) -> int:
    campaign = _load_campaign(args.dir)
    campaign.close()
    if campaign.model is None:
        raise CliError(EXIT_MISSING, "no trained model yet")
    snapshot = campaign.snapshot
    test_ids = sorted(i for i in snapshot.held_out_test if i in campaign.truth)
    if not test_ids:
        raise CliError(EXIT_MISSING, "no labeled held-out test items")
    from .evaluation import report as metrics_report

    ks = tuple(args.k) if args.k else (1, 3)
    predictions = campaign.model.predict_ranked(test_ids, snapshot.rows_for(test_ids))
    truth = {i: campaign.truth[i] for i in test_ids}
    rep = metrics_report(predictions, truth, ks=ks)
    print(rep.to_text())
    out_path = Path(args.json) if args.json else Path(args.dir) / "metrics.json"
    out_path.write_text(rep.to_json() + "\n", encoding="utf-8")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_confidences(args) -> int:
    campaign = _load_campaign(args.dir)
    campaign.close()
    if campaign.model is None:
        raise CliError(EXIT_MISSING, "no trained model yet")
    if args.batch is not None:
        campaign.config.routing.batch_size = args.batch
    confidences = campaign.peek_batch_confidences()
    if confidences.size == 0:
        print("pool is empty; nothing to explore")
        return EXIT_OK
    bins = np.histogram(confidences, bins=20, range=(0.0, 1.0))[0]
    peak = bins.max()
    print(f"confidence histogram over next batch ({confidences.size} items):")
    for i, count in enumerate(bins):
        lo, hi = i * 0.05, (i + 1) * 0.05
        bar = "#" * int(round(40 * count / peak)) if peak else ""
        print(f"  [{lo:4.2f},{hi:4.2f}) {count:>6} {bar}")
    print("suggested percentile cuts:")
    for p in (50, 75, 90):
        print(f"  p{p:<3} -> confidence {np.percentile(confidences, p):.4f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    directory = Path(args.dir)
    if not (directory / "config.json").exists():
        raise CliError(EXIT_MISSING, f"no campaign at {directory}")
    _guard_lock(args.dir)
    try:
        lock = acquire_lock(directory, "serve")
    except LockHeld as exc:
        raise CliError(EXIT_LOCK, str(exc))
    try:
        from .service import serve

        campaign = Campaign.load(directory)
        port = args.port or campaign.config.service_port
        static_dir = args.static_dir or campaign.config.service_static_dir
        try:
            serve(campaign, port=port, static_dir=static_dir)
        except OSError as exc:
            if "address" in str(exc).lower() or getattr(exc, "errno", None) in (48, 98):
                raise CliError(EXIT_ENV, f"port {port} unavailable: {exc}")
            raise
        finally:
            campaign.close()
    finally:
        release_lock(directory)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .presets import PRESETS

    runner = PRESETS.get(args.preset)
    if runner is None:
        raise CliError(EXIT_FORMAT, f"unknown preset {args.preset!r}")
    result = runner(seeds=args.seeds) if args.preset == "table3" else runner()
    out_dir = Path(args.out) if args.out else Path(args.dir) / "reports"
    csv_path = result.write(out_dir)
    print(f"preset {result.name}: {'PASS' if result.passed else 'FAIL'}")
    print(json.dumps(result.summary, indent=2))
    print(f"wrote {csv_path}")
    return EXIT_OK if result.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plud",
        description="Iterative cluster-review-classify labeling workbench",
    )
    parser.add_argument(
        "--dir",
        default=default_dir(),
        help="campaign directory (default $PLUD_HOME or ./campaign)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a manifest and embedding blob")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--test-labels", dest="test_labels")
    p.add_argument("--config", help="campaign config JSON")
    p.add_argument("--name")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("bootstrap", help="sample, cluster, and review the initial set")
    p.add_argument("--strategy", choices=["random", "subject-complete"])
    p.add_argument("--size", type=int)
    p.add_argument("--subjects", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", action="store_true", help="answer reviews from truth")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("iterate", help="run confidence-routed labeling rounds")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--batch", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--percentile", type=float)
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("eval", help="score the model on the held-out test split")
    p.add_argument("--k", type=int, action="append")
    p.add_argument("--json", help="metrics JSON output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("confidences", help="histogram of next-batch confidences")
    p.add_argument("--batch", type=int)
    p.set_defaults(func=cmd_confidences)

    p = sub.add_parser("serve", help="run the review HTTP service")
    p.add_argument("--port", type=int)
    p.add_argument("--static-dir", dest="static_dir")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a desk-scale experiment preset")
    p.add_argument("--preset", required=True, choices=["fig2", "table1", "table3"])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out", help="CSV output directory")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError:
        raise
    except LockHeld as exc:
        print(f"plud: {exc}", file=sys.stderr)
        return EXIT_LOCK
    except (DataFormatError, BlobFormatError) as exc:
        print(f"plud: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except CampaignStateError as exc:
        print(f"plud: {exc}", file=sys.stderr)
        return EXIT_STATE


if __name__ == "__main__":
    sys.exit(main())
