"""Independent trace-soundness checking.

The auditor decides whether every call a trace claims was executed was
actually permitted at that moment. It trusts only two inputs: the
decision log and the scope maps. Permission state is reconstructed by a
replay state machine written here, on purpose not shared with the grant
store, and permitted methods are recomputed from freshly built forests;
none of the gateway's own bookkeeping is consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scopes import ScopeMap, build_forest


@dataclass(frozen=True)
class Violation:
    step_index: int
    call: dict
    reason: str


@dataclass(frozen=True)
class AuditResult:
    ok: bool
    checked_calls: int
    violations: tuple[Violation, ...]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checked_calls": self.checked_calls,
            "violations": [
                {"step_index": v.step_index, "call": dict(v.call), "reason": v.reason}
                for v in self.violations
            ],
        }


@dataclass
class _ReplaySession:
    user: str
    live: bool = True
    base: dict[str, set[str]] = field(default_factory=dict)
    session_nodes: dict[str, set[str]] = field(default_factory=dict)
    once_grants: dict[str, list[list]] = field(default_factory=dict)


class _Replay:
    """Reconstructs effective node sets by folding decision-log records."""

    def __init__(self) -> None:
        self.persistent: dict[str, dict[str, set[str]]] = {}
        self.sessions: dict[str, _ReplaySession] = {}

    def apply(self, record: dict) -> None:
        kind = record["type"]
        if kind == "open_session":
            user = record["user"]
            persistent = self.persistent.setdefault(user, {})
            self.sessions[record["session"]] = _ReplaySession(
                user=user,
                base={app: set(nodes) for app, nodes in persistent.items()},
            )
        elif kind == "decision":
            session = self.sessions[record["session"]]
            app, nodes = record["app"], set(record["nodes"])
            verdict = record["verdict"]
            if verdict == "ALWAYS":
                self.persistent.setdefault(session.user, {}).setdefault(app, set()).update(nodes)
                session.base.setdefault(app, set()).update(nodes)
            elif verdict == "SESSION":
                session.session_nodes.setdefault(app, set()).update(nodes)
            elif verdict == "ONCE":
                grants = session.once_grants.setdefault(app, [])
                for node in nodes:
                    grants.append([node, False])
            elif verdict != "DENY":
                raise ValueError(f"unknown verdict {verdict!r}")
        elif kind == "consume":
            session = self.sessions[record["session"]]
            grants = session.once_grants.get(record["app"], [])
            targets = set(record["nodes"])
            for grant in grants:
                if grant[0] in targets:
                    grant[1] = True
        elif kind == "revoke":
            self.persistent.get(record["user"], {}).get(record["app"], set()).discard(
                record["node"]
            )
        elif kind == "revoke_now":
            self.persistent.get(record["user"], {}).get(record["app"], set()).discard(
                record["node"]
            )
            for session in self.sessions.values():
                if session.user != record["user"] or not session.live:
                    continue
                session.base.get(record["app"], set()).discard(record["node"])
                session.session_nodes.get(record["app"], set()).discard(record["node"])
                session.once_grants[record["app"]] = [
                    g
                    for g in session.once_grants.get(record["app"], [])
                    if g[0] != record["node"]
                ]
        elif kind == "close_session":
            session = self.sessions.get(record["session"])
            if session is not None:
                session.live = False
        elif kind == "credential_access":
            pass
        else:
            raise ValueError(f"unknown log record type {kind!r}")

    def effective(self, session_id: str, app_id: str) -> set[str]:
        session = self.sessions.get(session_id)
        if session is None or not session.live:
            return set()
        nodes = set(session.base.get(app_id, ()))
        nodes |= session.session_nodes.get(app_id, set())
        nodes |= {node for node, consumed in session.once_grants.get(app_id, []) if not consumed}
        return nodes


def audit_trace(
    trace: dict,
    log_records: list[dict],
    scope_maps: list[ScopeMap],
) -> AuditResult:
    """Check that every executed call was permitted when it ran.

    Each call records the log sequence number observed at validation
    time; the replay advances exactly that far before the check, so ONCE
    consumption and revocation land on the correct side of each call.
    """
    forests = {sm.app_id: build_forest(sm) for sm in scope_maps}
    records = sorted(log_records, key=lambda r: r["seq"])

    calls: list[tuple[int, int, dict]] = []
    for step_index, step in enumerate(trace.get("steps", [])):
        for call in step.get("executed_calls", []):
            calls.append((int(call.get("log_seq", -1)), step_index, call))
    calls.sort(key=lambda item: item[0])

    replay = _Replay()
    violations: list[Violation] = []
    cursor = 0
    for log_seq, step_index, call in calls:
        if log_seq < 0:
            violations.append(Violation(step_index, call, "call carries no log sequence"))
            continue
        while cursor < len(records) and records[cursor]["seq"] <= log_seq:
            replay.apply(records[cursor])
            cursor += 1
        app_id = call.get("app")
        forest = forests.get(app_id)
        if forest is None:
            violations.append(Violation(step_index, call, f"unknown app {app_id!r}"))
            continue
        effective = replay.effective(call.get("session_id", ""), app_id)
        known = {nid for nid in effective if nid in forest.nodes}
        if known != effective:
            violations.append(
                Violation(step_index, call, f"log granted unknown nodes {sorted(effective - known)}")
            )
            continue
        permitted = forest.methods_under(known)
        if call.get("method") not in permitted:
            violations.append(
                Violation(
                    step_index,
                    call,
                    f"method {call.get('method')!r} not permitted by effective grants "
                    f"{sorted(known)}",
                )
            )
    return AuditResult(
        ok=not violations,
        checked_calls=len(calls),
        violations=tuple(violations),
    )
