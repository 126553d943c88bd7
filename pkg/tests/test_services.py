"""Mock services enforce complete mediation and a small item-store API."""

from __future__ import annotations

from leastscope.grants import CredentialRecord
from leastscope.services import AUTH_HEADER, STAMP_HEADER, MockService

CRED = CredentialRecord(app_id="demo", secret_material="sk-demo-xyz", canary_tag="CANARY-demo")
GOOD = {STAMP_HEADER: "stamp-1", AUTH_HEADER: CRED.secret_material}


def service() -> MockService:
    return MockService(app_id="demo", credential=CRED, stamp="stamp-1")


def test_unstamped_request_rejected():
    svc = service()
    out = svc.handle("items.list", None, headers={})
    assert out["ok"] is False
    assert out["error"]["code"] == "service_rejected"
    assert svc.rejected_direct == 1
    assert svc.served == 0


def test_wrong_credential_rejected():
    svc = service()
    bad = {STAMP_HEADER: "stamp-1", AUTH_HEADER: "sk-wrong"}
    assert svc.handle("items.list", None, headers=bad)["ok"] is False
    assert svc.rejected_direct == 1


def test_wrong_stamp_rejected():
    svc = service()
    bad = {STAMP_HEADER: "stamp-2", AUTH_HEADER: CRED.secret_material}
    assert svc.handle("items.list", None, headers=bad)["ok"] is False


def test_mediated_request_served():
    svc = service()
    svc.seed([{"title": "a"}])
    out = svc.handle("items.list", None, headers=GOOD)
    assert out["ok"] is True
    assert out["result"]["items"] == [{"title": "a"}]
    assert svc.served == 1


def test_item_store_verbs():
    svc = service()
    svc.handle("items.insert", {"item": {"title": "a"}}, headers=GOOD)
    svc.handle("items.insert", {"item": {"title": "b"}}, headers=GOOD)
    got = svc.handle("items.get", {"index": 1}, headers=GOOD)
    assert got["result"]["item"] == {"title": "b"}
    missing = svc.handle("items.get", {"index": 9}, headers=GOOD)
    assert missing["result"]["item"] is None
    removed = svc.handle("items.delete", None, headers=GOOD)
    assert removed["result"]["removed"] == 2
    other = svc.handle("items.watch", None, headers=GOOD)
    assert other["result"]["done"] is True
