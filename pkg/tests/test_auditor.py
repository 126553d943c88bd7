"""The auditor must catch what the gateway would never produce."""

from __future__ import annotations

import copy
import json

from leastscope.auditor import audit_trace
from leastscope.gateway import Gateway, ToolCall
from leastscope.grants import GrantStore, Verdict


def run_clean_session(calendar_map):
    gw = Gateway(GrantStore(None), [calendar_map])
    opened = gw.open_session("alice")
    token = opened["token"]
    response = gw.submit_plan(token, [ToolCall("calendar", "events.list")], prompt="reads")
    gw.resolve_request(response["request_id"], Verdict.SESSION)
    gw.intercept_call(token, ToolCall("calendar", "events.list"), response["plan_id"])
    return gw, gw.export_trace(), gw.store.log_records()


def test_clean_trace_passes(calendar_map):
    _, trace, records = run_clean_session(calendar_map)
    result = audit_trace(trace, records, [calendar_map])
    assert result.ok
    assert result.checked_calls == 1
    assert result.violations == ()


def test_forged_uncovered_call_flagged(calendar_map):
    _, trace, records = run_clean_session(calendar_map)
    tampered = copy.deepcopy(trace)
    forged = dict(tampered["steps"][0]["executed_calls"][0])
    forged["method"] = "events.delete"
    tampered["steps"][0]["executed_calls"].append(forged)
    result = audit_trace(tampered, records, [calendar_map])
    assert not result.ok
    assert len(result.violations) == 1
    assert "events.delete" in result.violations[0].reason


def test_call_before_decision_flagged(calendar_map):
    # Rewind the call's log cursor to before the grant landed: the replay
    # must judge it against the earlier, emptier state.
    _, trace, records = run_clean_session(calendar_map)
    tampered = copy.deepcopy(trace)
    tampered["steps"][0]["executed_calls"][0]["log_seq"] = 1
    result = audit_trace(tampered, records, [calendar_map])
    assert not result.ok


def test_call_without_log_seq_flagged(calendar_map):
    _, trace, records = run_clean_session(calendar_map)
    tampered = copy.deepcopy(trace)
    del tampered["steps"][0]["executed_calls"][0]["log_seq"]
    result = audit_trace(tampered, records, [calendar_map])
    assert not result.ok
    assert "no log sequence" in result.violations[0].reason


def test_call_after_revoke_now_flagged(calendar_map):
    gw = Gateway(GrantStore(None), [calendar_map])
    opened = gw.open_session("alice")
    token = opened["token"]
    response = gw.submit_plan(token, [ToolCall("calendar", "events.list")])
    gw.resolve_request(response["request_id"], Verdict.ALWAYS)
    gw.intercept_call(token, ToolCall("calendar", "events.list"), response["plan_id"])
    gw.revoke("alice", "calendar", "calendar.events.readonly", now=True)
    records = gw.store.log_records()
    trace = gw.export_trace()

    # Forge a post-revocation execution the gateway itself refused to do.
    forged = dict(trace["steps"][0]["executed_calls"][0])
    forged["log_seq"] = records[-1]["seq"]
    trace["steps"][0]["executed_calls"].append(forged)
    result = audit_trace(trace, records, [calendar_map])
    assert not result.ok
    # the original pre-revocation call stays clean
    assert result.checked_calls == 2
    assert len(result.violations) == 1


def test_once_consumption_orders_calls(calendar_map):
    gw = Gateway(GrantStore(None), [calendar_map])
    opened = gw.open_session("alice")
    token = opened["token"]
    call = ToolCall("calendar", "events.insert")
    response = gw.submit_plan(token, [call])
    gw.resolve_request(response["request_id"], Verdict.ONCE)
    gw.intercept_call(token, call, response["plan_id"])
    records = gw.store.log_records()
    trace = gw.export_trace()
    assert audit_trace(trace, records, [calendar_map]).ok

    # Replaying the same call after the consume record must fail.
    tampered = copy.deepcopy(trace)
    replayed = dict(tampered["steps"][0]["executed_calls"][0])
    replayed["log_seq"] = records[-1]["seq"]
    tampered["steps"][0]["executed_calls"].append(replayed)
    assert not audit_trace(tampered, records, [calendar_map]).ok


def test_unknown_granted_node_flagged(calendar_map):
    _, trace, records = run_clean_session(calendar_map)
    records = copy.deepcopy(records)
    for record in records:
        if record["type"] == "decision":
            record["nodes"] = ["not.a.node"]
    result = audit_trace(trace, records, [calendar_map])
    assert not result.ok
    assert "unknown nodes" in result.violations[0].reason


def test_result_serializes(calendar_map):
    _, trace, records = run_clean_session(calendar_map)
    result = audit_trace(trace, records, [calendar_map])
    dumped = json.dumps(result.to_dict())
    assert '"ok": true' in dumped
