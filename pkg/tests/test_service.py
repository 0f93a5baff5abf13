import http.client
import threading

import pytest
import requests

from canopydw.query import run_query, spec_from_strings
from canopydw.storage import open_warehouse

from conftest import running_server
from helpers import checksum_for

MIB = 2**20


def manifest_row(name: str, **overrides) -> dict:
    row = {
        "file_name": name,
        "capture_date": "2024-01-15",
        "platform": "uav",
        "width_px": "100",
        "height_px": "100",
        "gsd_cm_per_px": "10.0",
        "gt_origin_x": "0.0",
        "gt_origin_y": "0.0",
        "gt_a": "0.1",
        "gt_b": "0.0",
        "gt_d": "0.0",
        "gt_e": "-0.1",
        "size_bytes": "4000000",
        "checksum": checksum_for(name),
    }
    row.update(overrides)
    return row


def post_image(base, name, detections, class_map=("PSME", "TSHE"), **kwargs):
    return requests.post(
        f"{base}/v1/images",
        json={
            "manifest": manifest_row(name),
            "detections": list(detections),
            "class_map": list(class_map),
        },
        timeout=10,
        **kwargs,
    )


def fact_count(base, **kwargs) -> int:
    payload = requests.get(f"{base}/v1/stats", timeout=10, **kwargs).json()
    for row in payload["rows"]:
        if row[0] == "fact_tree_metrics":
            return int(row[1])
    raise AssertionError(payload)


@pytest.fixture
def root(tmp_path):
    path = tmp_path / "wh"
    with open_warehouse(path, "rw"):
        pass
    return path


# -- protocol basics ---------------------------------------------------------------


def test_health(root):
    with running_server(root) as base:
        r = requests.get(f"{base}/v1/health", timeout=10)
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}


def test_unknown_endpoint_404(root):
    with running_server(root) as base:
        r = requests.get(f"{base}/v1/nope", timeout=10)
        assert r.status_code == 404
        assert "error" in r.json()


def test_wrong_method_405(root):
    with running_server(root) as base:
        assert requests.get(f"{base}/v1/images", timeout=10).status_code == 405
        assert requests.post(f"{base}/v1/query", json={}, timeout=10).status_code == 405


def test_auth_required_when_configured(root):
    with running_server(root, auth_token="sesame") as base:
        # health stays open for probes
        assert requests.get(f"{base}/v1/health", timeout=10).status_code == 200
        assert requests.get(f"{base}/v1/stats", timeout=10).status_code == 401
        bad = {"Authorization": "Bearer wrong"}
        assert requests.get(f"{base}/v1/stats", headers=bad, timeout=10).status_code == 401
        good = {"Authorization": "Bearer sesame"}
        assert requests.get(f"{base}/v1/stats", headers=good, timeout=10).status_code == 200


def test_no_auth_needed_by_default(root):
    with running_server(root) as base:
        assert requests.get(f"{base}/v1/stats", timeout=10).status_code == 200


def test_malformed_json_400(root):
    with running_server(root) as base:
        r = requests.post(
            f"{base}/v1/reconcile",
            data=b"{not json",
            headers={"Content-Type": "application/json"},
            timeout=10,
        )
        assert r.status_code == 400


def test_non_object_json_400(root):
    with running_server(root) as base:
        r = requests.post(f"{base}/v1/reconcile", json=[1, 2], timeout=10)
        assert r.status_code == 400


def test_missing_content_length_400(root):
    with running_server(root) as base:
        host, port = base.removeprefix("http://").rsplit(":", 1)
        conn = http.client.HTTPConnection(host, int(port), timeout=10)
        try:
            conn.putrequest("POST", "/v1/reconcile")
            conn.endheaders()
            assert conn.getresponse().status == 400
        finally:
            conn.close()


def test_oversized_body_413(root):
    with running_server(root, max_body_bytes=MIB) as base:
        host, port = base.removeprefix("http://").rsplit(":", 1)
        conn = http.client.HTTPConnection(host, int(port), timeout=10)
        try:
            conn.putrequest("POST", "/v1/images")
            conn.putheader("Content-Length", str(MIB + 1))
            conn.endheaders()
            assert conn.getresponse().status == 413
        finally:
            conn.close()


def test_body_limit_floor():
    from canopydw.service import ServiceConfig

    with pytest.raises(ValueError):
        ServiceConfig(max_body_bytes=MIB - 1)
    with pytest.raises(ValueError):
        ServiceConfig(bind_address="nohost")


# -- writes ------------------------------------------------------------------------


def test_post_image_adds_facts(root):
    with running_server(root) as base:
        before = fact_count(base)
        r = post_image(base, "cam_001.jpg", ["0 0.5 0.5 0.2 0.2 0.9", "1 0.25 0.25 0.1 0.1"])
        assert r.status_code == 200
        body = r.json()
        assert body["images_added"] == 1
        assert body["facts_added"] == 2
        assert fact_count(base) == before + 2


def test_post_image_idempotent(root):
    with running_server(root) as base:
        assert post_image(base, "cam_001.jpg", ["0 0.5 0.5 0.2 0.2 0.9"]).status_code == 200
        r = post_image(base, "cam_001.jpg", ["0 0.5 0.5 0.2 0.2 0.9"])
        assert r.status_code == 200
        assert r.json()["images_skipped"] == 1
        assert r.json()["facts_added"] == 0
        assert fact_count(base) == 1


def test_post_image_bad_detection_rejected_without_writes(root):
    with running_server(root) as base:
        r = post_image(base, "cam_002.jpg", ["0 0.5 0.5 0.2"])
        assert r.status_code == 400
        assert fact_count(base) == 0
        with open_warehouse(root, "ro") as handle:
            assert len(handle.state.images) == 0


def test_post_image_unknown_class_rejected_without_writes(root):
    with running_server(root) as base:
        r = post_image(base, "cam_003.jpg", ["7 0.5 0.5 0.2 0.2"])
        assert r.status_code == 400
        with open_warehouse(root, "ro") as handle:
            assert len(handle.state.images) == 0


def test_post_image_bad_manifest_400(root):
    with running_server(root) as base:
        r = requests.post(
            f"{base}/v1/images",
            json={
                "manifest": manifest_row("x.jpg", width_px="abc"),
                "detections": [],
                "class_map": ["PSME"],
            },
            timeout=10,
        )
        assert r.status_code == 400


def test_post_image_shape_validation(root):
    with running_server(root) as base:
        bad_bodies = [
            {"detections": [], "class_map": ["PSME"]},
            {"manifest": "nope", "detections": [], "class_map": ["PSME"]},
            {"manifest": manifest_row("x.jpg"), "detections": "0 0.5", "class_map": ["PSME"]},
            {"manifest": manifest_row("x.jpg"), "detections": [], "class_map": []},
        ]
        for body in bad_bodies:
            r = requests.post(f"{base}/v1/images", json=body, timeout=10)
            assert r.status_code == 400, body


def test_post_survey_then_reconcile(root):
    with running_server(root) as base:
        assert post_image(base, "cam_010.jpg", ["0 0.5 0.5 0.2 0.2 0.9"]).status_code == 200
        r = requests.post(
            f"{base}/v1/surveys",
            json={
                "survey_id": "s1",
                "rows": [
                    {"record_id": "t1", "geo_x": 5.0, "geo_y": -5.0,
                     "species_code": "PSME", "dbh_cm": 40.0, "height_m": 25.0,
                     "surveyed_date": "2024-01-10"},
                ],
            },
            timeout=10,
        )
        assert r.status_code == 200
        assert r.json() == {"survey_id": "s1", "records": 1}

        r = requests.post(f"{base}/v1/reconcile", json={"radius_m": 2.0}, timeout=10)
        assert r.status_code == 200
        body = r.json()
        assert body["matched_pairs"] == 1
        assert body["agreeing_pairs"] == 1
        assert body["accuracy"] == 1.0
        assert body["facts_updated"] == 1
        assert body["per_species"][0]["species_code"] == "PSME"
        assert body["per_species"][0]["tp"] == 1

        with open_warehouse(root, "ro") as handle:
            fact = handle.state.facts[1]
            assert fact.validation == "confirmed"
            assert fact.dbh_cm == 40.0


def test_post_survey_immutable(root):
    with running_server(root) as base:
        assert post_image(base, "cam_011.jpg", ["0 0.5 0.5 0.2 0.2"]).status_code == 200
        row = {"record_id": "t1", "geo_x": 1.0, "geo_y": 1.0, "species_code": "PSME",
               "dbh_cm": None, "height_m": None, "surveyed_date": "2024-01-10"}
        body = {"survey_id": "s1", "rows": [row]}
        assert requests.post(f"{base}/v1/surveys", json=body, timeout=10).status_code == 200
        # identical re-post is a no-op
        assert requests.post(f"{base}/v1/surveys", json=body, timeout=10).status_code == 200
        changed = dict(row, geo_x=9.0)
        r = requests.post(
            f"{base}/v1/surveys", json={"survey_id": "s1", "rows": [changed]}, timeout=10
        )
        assert r.status_code == 400


def test_post_survey_unknown_field_400(root):
    with running_server(root) as base:
        r = requests.post(
            f"{base}/v1/surveys",
            json={"survey_id": "s1", "rows": [{"record_id": "t1", "elevation": 12}]},
            timeout=10,
        )
        assert r.status_code == 400
        assert "elevation" in r.json()["error"]


def test_post_reconcile_bad_radius_400(root):
    with running_server(root) as base:
        r = requests.post(f"{base}/v1/reconcile", json={"radius_m": "wide"}, timeout=10)
        assert r.status_code == 400
        r = requests.post(f"{base}/v1/reconcile", json={"radius_m": True}, timeout=10)
        assert r.status_code == 400


def test_write_blocked_by_live_writer_409(root):
    with running_server(root, lock_timeout=0.05) as base:
        with open_warehouse(root, "rw"):
            r = requests.post(f"{base}/v1/reconcile", json={}, timeout=10)
            assert r.status_code == 409
        # once the writer is gone the same call goes through
        assert requests.post(f"{base}/v1/reconcile", json={}, timeout=10).status_code == 200


# -- reads -------------------------------------------------------------------------


def test_query_rows_match_library(reference_root):
    with running_server(reference_root) as base:
        r = requests.get(
            f"{base}/v1/query",
            params={"group_by": "platform", "measures": "tree_count,image_count"},
            timeout=10,
        )
        assert r.status_code == 200
    with open_warehouse(reference_root, "ro") as handle:
        table = run_query(handle, spec_from_strings(
            {"group_by": "platform", "measures": "tree_count,image_count"}
        ))
    payload = r.json()
    assert payload["columns"] == list(table.columns)
    assert [list(row) for row in payload["rows"]] == [list(row) for row in table.rendered_rows()]


def test_query_bad_param_400(root):
    with running_server(root) as base:
        r = requests.get(f"{base}/v1/query", params={"group_by": "planet"}, timeout=10)
        assert r.status_code == 400


def test_estimate_endpoint(reference_root):
    with running_server(reference_root) as base:
        r = requests.get(f"{base}/v1/estimate", params={"years": 10}, timeout=10)
        assert r.status_code == 200
        payload = r.json()
        assert payload["parameters"]["projected_records"] == 2278
        assert payload["parameters"]["yearly_growth"] == 204
        assert "2072" in payload["note"]

        assert requests.get(f"{base}/v1/estimate", params={"years": -2}, timeout=10).status_code == 400
        assert requests.get(f"{base}/v1/estimate", params={"horizon": 5}, timeout=10).status_code == 400


def test_stats_payload_shape(reference_root):
    with running_server(reference_root) as base:
        payload = requests.get(f"{base}/v1/stats", timeout=10).json()
    assert payload["columns"] == ["name", "row_count", "file_bytes", "mib"]
    by_name = {row[0]: row for row in payload["rows"]}
    assert by_name["image_payload"][3] == "920.9"
    assert by_name["dim_image"][1] == "238"


# -- concurrent clients --------------------------------------------------------------


def test_concurrent_posts_all_land(root):
    n_threads, per_thread, per_image = 4, 5, 2
    detections = ["0 0.5 0.5 0.2 0.2 0.9", "1 0.25 0.25 0.1 0.1 0.8"][:per_image]
    failures = []

    def worker(tid: int):
        with requests.Session() as session:
            for i in range(per_thread):
                r = session.post(
                    f"{base}/v1/images",
                    json={
                        "manifest": manifest_row(f"w{tid}_{i:03d}.jpg"),
                        "detections": detections,
                        "class_map": ["PSME", "TSHE"],
                    },
                    timeout=30,
                )
                if r.status_code != 200:
                    failures.append((tid, i, r.status_code, r.text))

    with running_server(root) as base:
        threads = [threading.Thread(target=worker, args=(t,)) for t in range(n_threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not failures, failures
        assert fact_count(base) == n_threads * per_thread * per_image

    with open_warehouse(root, "ro") as handle:
        assert len(handle.state.images) == n_threads * per_thread
        # every fact still resolves through its dimensions
        for fact in handle.state.facts.values():
            assert fact.image_key in handle.state.images
            assert fact.species_key in handle.state.species
