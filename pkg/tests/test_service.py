import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from plud.campaign import Campaign, CampaignConfig, SamplingStrategy, TrainSettings
from plud.clustering import ClusterConfig
from plud.model import Provenance
from plud.pludemb import write_embeddings
from plud.service import create_app


def wait_until(predicate, timeout=30.0, interval=0.02):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return False


@pytest.fixture
def campaign(tmp_path):
    """Six pool items in two obvious blobs plus two labeled test items."""
    rows = np.array(
        [
            [0.0, 0.0], [0.1, 0.0], [0.0, 0.1],         # left blob
            [5.0, 5.0], [5.1, 5.0], [5.0, 5.1],         # right blob
            [0.05, 0.05], [5.05, 5.05],                  # held-out test
        ],
        dtype=np.float32,
    )
    image = tmp_path / "item0.png"
    image.write_bytes(b"\x89PNG\r\n\x1a\nfakepayload")
    manifest = []
    for i in range(8):
        obj = {"item_id": f"item{i}", "embedding_row": i, "subject_id": f"s{i % 2}"}
        if i >= 6:
            obj["test"] = True
        if i == 0:
            obj["source_uri"] = str(image)
        manifest.append(json.dumps(obj))
    manifest_path = tmp_path / "manifest.jsonl"
    manifest_path.write_text("\n".join(manifest) + "\n")
    blob_path = tmp_path / "emb.pludemb"
    write_embeddings(rows, str(blob_path))
    truth = {f"item{i}": ("left" if rows[i, 0] < 2 else "right") for i in range(8)}
    truth_path = tmp_path / "truth.jsonl"
    truth_path.write_text(
        "\n".join(
            json.dumps({"item_id": k, "label": v}) for k, v in truth.items()
        )
        + "\n"
    )
    config = CampaignConfig(
        name="svc-test",
        seed=0,
        sampling=SamplingStrategy(size=6, seed=0),
        cluster=ClusterConfig(k=2, seed=0, restarts=2),
        train=TrainSettings(architecture="linear", epochs=10, batch_size=4, seed=0),
    )
    c = Campaign.create(tmp_path / "campaign", config)
    c.ingest(str(manifest_path), str(blob_path), str(truth_path))
    yield c
    c.close()


@pytest.fixture
def client(campaign):
    campaign.begin_bootstrap()
    app = create_app(campaign)
    with TestClient(app) as tc:
        tc.campaign = campaign
        yield tc


def oracle_submission(campaign, task):
    return campaign.oracle().review_cluster(task)


class TestStatus:
    def test_before_ingest_503(self, tmp_path):
        fresh = Campaign.create(tmp_path / "empty", CampaignConfig(name="empty"))
        app = create_app(fresh)
        with TestClient(app) as tc:
            assert tc.get("/api/status").status_code == 503

    def test_unknown_campaign_404(self, client):
        assert client.get("/api/status", params={"campaign": "nope"}).status_code == 404

    def test_fresh_bootstrap_reports_pending(self, client):
        doc = client.get("/api/status").json()
        assert doc["pending_tasks"] == 2
        assert doc["train_size"] == 0
        assert doc["pool_size"] == 6
        assert doc["iteration"] == 0


class TestTasks:
    def test_pagination_two_then_one(self, client):
        # k=2 bootstrap yields 2 tasks; page_size=1 -> pages of 1 and 1
        first = client.get("/api/tasks", params={"page_size": 1, "page": 0}).json()
        second = client.get("/api/tasks", params={"page_size": 1, "page": 1}).json()
        third = client.get("/api/tasks", params={"page_size": 1, "page": 2}).json()
        assert len(first["tasks"]) == 1
        assert len(second["tasks"]) == 1
        assert len(third["tasks"]) == 0
        assert first["total"] == 2
        ids = [first["tasks"][0]["task_id"], second["tasks"][0]["task_id"]]
        assert ids == sorted(ids)

    def test_submitted_filter_empty_on_fresh(self, client):
        doc = client.get("/api/tasks", params={"status": "SUBMITTED"}).json()
        assert doc["tasks"] == []

    def test_negative_page_400(self, client):
        assert client.get("/api/tasks", params={"page": -1}).status_code == 400

    def test_bad_status_400(self, client):
        assert client.get("/api/tasks", params={"status": "WEIRD"}).status_code == 400

    def test_thumbnail_uri_only_when_source_present(self, client):
        docs = client.get("/api/tasks", params={"page_size": 50}).json()["tasks"]
        members = {m["item_id"]: m for t in docs for m in t["members"]}
        assert members["item0"]["thumbnail"] == "/api/items/item0/thumbnail"
        assert members["item1"]["thumbnail"] is None


class TestSubmit:
    def test_submit_applies_labels_and_bumps_revision_once(self, client):
        campaign = client.campaign
        status = client.get("/api/status").json()
        task = client.get("/api/tasks").json()["tasks"][0]
        members = [m["item_id"] for m in task["members"]]
        toggled = members[0]
        body = {
            "label": "left",
            "misclustered": [toggled],
            "item_labels": {toggled: "right"},
            "revision": status["revision"],
        }
        resp = client.post(f"/api/tasks/{task['task_id']}/submit", json=body)
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["revision"] == status["revision"] + 1
        assert doc["pending"] == 1
        active = {r.item_id: r for r in campaign.store.active_labels()}
        assert active[toggled].provenance is Provenance.MANUAL
        assert active[toggled].label == "right"
        for member in members[1:]:
            assert active[member].provenance is Provenance.CLUSTER_MAJORITY
            assert active[member].label == "left"

    def test_stale_revision_409_no_mutation(self, client):
        campaign = client.campaign
        status = client.get("/api/status").json()
        task = client.get("/api/tasks").json()["tasks"][0]
        body = {
            "label": "left",
            "misclustered": [],
            "item_labels": {},
            "revision": status["revision"] - 1,
        }
        before = len(campaign.store)
        resp = client.post(f"/api/tasks/{task['task_id']}/submit", json=body)
        assert resp.status_code == 409
        assert len(campaign.store) == before

    def test_replay_after_success_is_409(self, client):
        status = client.get("/api/status").json()
        task = client.get("/api/tasks").json()["tasks"][0]
        body = {
            "label": "left",
            "misclustered": [],
            "item_labels": {},
            "revision": status["revision"],
        }
        assert client.post(f"/api/tasks/{task['task_id']}/submit", json=body).status_code == 200
        resp = client.post(f"/api/tasks/{task['task_id']}/submit", json=body)
        assert resp.status_code == 409

    def test_toggled_without_label_422(self, client):
        status = client.get("/api/status").json()
        task = client.get("/api/tasks").json()["tasks"][0]
        member = task["members"][0]["item_id"]
        body = {
            "label": "left",
            "misclustered": [member],
            "item_labels": {},
            "revision": status["revision"],
        }
        resp = client.post(f"/api/tasks/{task['task_id']}/submit", json=body)
        assert resp.status_code == 422

    def test_misclustered_outside_cluster_422(self, client):
        status = client.get("/api/status").json()
        task = client.get("/api/tasks").json()["tasks"][0]
        body = {
            "label": "left",
            "misclustered": ["not-a-member"],
            "item_labels": {"not-a-member": "x"},
            "revision": status["revision"],
        }
        assert (
            client.post(f"/api/tasks/{task['task_id']}/submit", json=body).status_code
            == 422
        )

    def test_unknown_task_404(self, client):
        body = {"label": "x", "misclustered": [], "item_labels": {}, "revision": 0}
        assert client.post("/api/tasks/zzz/submit", json=body).status_code == 404

    def test_last_submit_triggers_completion(self, client):
        campaign = client.campaign
        for _ in range(2):
            status = client.get("/api/status").json()
            tasks = client.get("/api/tasks").json()["tasks"]
            if not tasks:
                break
            task = tasks[0]
            sub = oracle_submission(campaign, campaign.tasks[task["task_id"]])
            body = {
                "label": sub.label,
                "misclustered": sub.misclustered,
                "item_labels": sub.item_labels,
                "revision": status["revision"],
            }
            assert (
                client.post(f"/api/tasks/{task['task_id']}/submit", json=body).status_code
                == 200
            )
        assert wait_until(
            lambda: client.get("/api/status").json()["iteration"] == 1
        )
        doc = client.get("/api/status").json()
        assert doc["train_size"] == 6
        assert doc["pending_tasks"] == 0
        assert "accuracy_top1" in doc["metrics_latest"]


class TestIterate:
    def test_iterate_with_pending_tasks_409(self, client):
        assert client.post("/api/iterate").status_code == 409

    def test_iterate_after_completion(self, client):
        campaign = client.campaign
        for task_id in list(campaign.tasks):
            status = client.get("/api/status").json()
            sub = oracle_submission(campaign, campaign.tasks[task_id])
            client.post(
                f"/api/tasks/{task_id}/submit",
                json={
                    "label": sub.label,
                    "misclustered": sub.misclustered,
                    "item_labels": sub.item_labels,
                    "revision": status["revision"],
                },
            )
        assert wait_until(lambda: client.get("/api/status").json()["iteration"] == 1)
        resp = client.post("/api/iterate")
        assert resp.status_code in (200, 202)
        if resp.status_code == 200:
            assert resp.json()["complete"] is True
        else:
            assert wait_until(
                lambda: not client.get("/api/status").json()["busy"]
            )

    def test_iterate_empty_pool_reports_complete(self, campaign):
        campaign.run_bootstrap()  # oracle answers; pool 6 -> 0 needs iterations
        while campaign.snapshot.unlabeled_pool:
            try:
                campaign.run_iteration()
            except Exception:
                break
        app = create_app(campaign)
        with TestClient(app) as tc:
            resp = tc.post("/api/iterate")
            assert resp.status_code == 200
            assert resp.json()["complete"] is True


class TestThumbnail:
    def test_present_file_served(self, client):
        resp = client.get("/api/items/item0/thumbnail")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content.startswith(b"\x89PNG")

    def test_item_without_source_404(self, client):
        assert client.get("/api/items/item1/thumbnail").status_code == 404

    def test_traversal_rejected(self, client):
        # %2e%2e decodes to ".." inside the path parameter
        assert client.get("/api/items/%2e%2e/thumbnail").status_code == 400
        # the encoded-slash form never even routes to the handler
        assert client.get("/api/items/..%2Fsecret/thumbnail").status_code in (400, 404)
