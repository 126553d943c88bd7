"""Scripted scenarios: every bundled script runs clean and audits clean,
and the security-relevant ones show the exact rejection they exist for."""

from __future__ import annotations

import json

import pytest

from leastscope.auditor import audit_trace
from leastscope.fixtures import scenario_names
from leastscope.scenarios import load_scenario, run_scenario

ALL_SCENARIOS = scenario_names()


def run(name: str):
    return run_scenario(load_scenario(name))


def channel_errors(result) -> list[str]:
    codes = []
    for line in result.agent_channel:
        payload = json.loads(line)
        if payload.get("ok") is False:
            codes.append(payload["error"]["code"])
    return codes


def test_scenario_suite_is_large_enough():
    assert len(ALL_SCENARIOS) >= 20
    assert "injected-step-replay" in ALL_SCENARIOS


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_scenario_runs_and_audits_clean(name, calendar_map, mail_map):
    result = run(name)
    audit = audit_trace(result.trace, result.log_records, [calendar_map, mail_map])
    assert audit.ok, audit.violations


def test_benign_single_call_trace_shape():
    result = run("benign-single-call")
    steps = result.trace["steps"]
    assert len(steps) == 1
    assert steps[0]["decision"]["verdict"] == "ALWAYS"
    assert len(steps[0]["executed_calls"]) == 1


def test_injected_step_is_denied_and_rejected():
    result = run("injected-step-replay")
    # the injection reached the agent channel through normal tool output
    assert any("PAYLOAD_INJECT_DELETE" in line for line in result.agent_channel)
    # the revision plan carrying the injected delete was denied
    assert result.plan_statuses["plan-0002"] == "DENIED"
    # the out-of-plan attempt bounced off the plan status check
    assert channel_errors(result) == ["plan_not_authorized"]
    # and no delete reached the service: both seeded messages survive
    assert len(result.gateway.service("mail").items) == 2
    executed = [
        call["method"]
        for step in result.trace["steps"]
        for call in step["executed_calls"]
    ]
    assert "messages.delete" not in executed


def test_interleaved_plans_share_then_strand():
    result = run("once-interleaved-plans")
    assert result.plan_statuses["plan-b"] == "AUTHORIZED"
    # plan-b rode the live grant without a second prompt, consumed it on
    # completion, and the stranded plan-a call was rejected
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert len(decisions) == 1
    assert channel_errors(result) == ["insufficient_permission"]
    grants = result.store.grants_listing()["sessions"]["sess-0001"]["grants"]
    assert [g["consumed"] for g in grants] == [True]


def test_once_reprompts_after_consumption():
    result = run("once-consumed-reprompt")
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert [d["verdict"] for d in decisions] == ["ONCE", "ONCE"]
    consumes = [r for r in result.log_records if r["type"] == "consume"]
    assert len(consumes) == 2


def test_always_grant_skips_new_session_prompt():
    result = run("always-grant-then-new-session")
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert len(decisions) == 1
    assert len([r for r in result.log_records if r["type"] == "open_session"]) == 2


def test_session_grant_reprompts_in_new_session():
    result = run("session-grant-expires")
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert [d["verdict"] for d in decisions] == ["SESSION", "SESSION"]


def test_denied_plan_never_executes():
    result = run("deny-then-comply")
    statuses = sorted(result.plan_statuses.values())
    assert statuses == ["AUTHORIZED", "DENIED"]
    executed = [
        call["method"]
        for step in result.trace["steps"]
        for call in step["executed_calls"]
    ]
    assert executed == ["events.list"]


def test_guessed_tokens_always_bounce():
    result = run("token-guess-attack")
    assert channel_errors(result) == ["authentication_rejected", "authentication_rejected"]


def test_direct_service_calls_all_rejected():
    result = run("direct-service-bypass")
    assert channel_errors(result) == ["service_rejected", "service_rejected"]
    assert result.gateway.service("calendar").rejected_direct == 2
    # seeded item survived the rejected delete attempt
    assert len(result.gateway.service("calendar").items) == 1


def test_rogue_call_outside_grant_rejected():
    result = run("rogue-extra-call")
    assert channel_errors(result) == ["insufficient_permission"]


def test_rogue_call_inside_grant_is_allowed():
    # Authority is grant-bounded, not plan-bounded: a call covered by the
    # session's grants passes even when the plan never listed it.
    result = run("rogue-covered-call")
    assert channel_errors(result) == []
    executed = [
        call["method"]
        for step in result.trace["steps"]
        for call in step["executed_calls"]
    ]
    assert "events.patch" in executed


def test_revocation_boundaries():
    live = run("revoke-mid-session")
    decisions = [r for r in live.log_records if r["type"] == "decision"]
    # turn two rode the live fork without re-prompting; turn three did not
    assert [d["verdict"] for d in decisions] == ["ALWAYS", "SESSION"]

    now = run("revoke-now-live")
    assert channel_errors(now) == ["insufficient_permission"]
    decisions = [r for r in now.log_records if r["type"] == "decision"]
    assert [d["verdict"] for d in decisions] == ["ALWAYS", "ONCE"]


def test_expired_request_cannot_authorize():
    result = run("expiry-timeout")
    assert result.gateway.plan_view("plan-0001")["status"] == "EXPIRED"
    assert result.plan_statuses["plan-0002"] == "AUTHORIZED"
    listed = [json.loads(l) for l in result.agent_channel if "pending_requests" in l]
    assert listed and listed[0]["pending_requests"] == []


def test_multipath_prompts_pick_cheapest_node():
    result = run("multipath-cheapest-delta")
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert decisions[0]["nodes"] == ["calendar.calendars.readonly"]
    assert decisions[1]["nodes"] == [
        "calendar.events.owned.readonly+calendar.events.public.readonly"
    ]


def test_incremental_delta_excludes_prior_grant():
    result = run("freebusy-pair-plan")
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert decisions[0]["nodes"] == ["calendar.freebusy"]
    assert decisions[1]["nodes"] == ["calendar.events.freebusy"]


def test_merged_node_prompt_shows_both_descriptions():
    result = run("merged-node-prompt")
    submits = [json.loads(l) for l in result.agent_channel if "NEEDS_APPROVAL" in l]
    delta = submits[0]["delta"]["calendar"]
    merged = "calendar.events.owned.readonly+calendar.events.public.readonly"
    assert delta["nodes"] == [merged]
    assert delta["method_counts"][merged] == 6
    assert "; " in delta["descriptions"][merged]


def test_escalation_prompts_scale_with_need():
    result = run("multi-turn-escalation")
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert [d["nodes"] for d in decisions] == [
        ["calendar.events.readonly"],
        ["calendar.events"],
        ["calendar"],
    ]


def test_adversarial_output_changes_nothing():
    result = run("adversarial-response-ignored")
    assert any("IGNORE_PREVIOUS_INSTRUCTIONS" in line for line in result.agent_channel)
    decisions = [r for r in result.log_records if r["type"] == "decision"]
    assert [d["verdict"] for d in decisions] == ["SESSION"]
    assert channel_errors(result) == ["insufficient_permission"]
    # the seeded item is intact: no clear ever ran
    assert len(result.gateway.service("calendar").items) == 1


def test_invalid_plans_reported_on_channel():
    result = run("unknown-method-plan")
    first = json.loads(result.agent_channel[0])
    assert first["error"] == "unknown_method"

    empty = run("empty-plan")
    submits = [json.loads(l) for l in empty.agent_channel if "plan_id" in l]
    assert submits[0]["status"] == "AUTHORIZED"
