"""Session-forked grant state, decision log, and credential vault.

Permission state is owned by a per-user persistent set of ALWAYS grants.
Opening a session forks a snapshot of that set; SESSION and ONCE grants
live only inside the fork. Every state change appends one structured
record to the decision log, which is the single source of truth: replaying
the log reproduces effective node sets exactly. Revoking a grant takes
effect at the next fork; an explicit revoke-now also strips live forks.
"""

from __future__ import annotations

import hmac
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    AuthenticationError,
    ConfigurationError,
    NotFoundError,
    SessionError,
)

LOG_VERSION = 1
SNAPSHOT_EVERY = 50

LOG_FILE = "decision-log.jsonl"
SNAPSHOT_FILE = "snapshot.json"
CREDENTIALS_FILE = "credentials.json"


class Verdict(Enum):
    """User answer to a permission prompt."""

    ALWAYS = "ALWAYS"
    SESSION = "SESSION"
    ONCE = "ONCE"
    DENY = "DENY"


class GrantDuration(Enum):
    ALWAYS = "ALWAYS"
    SESSION = "SESSION"
    ONCE = "ONCE"


@dataclass(frozen=True)
class Grant:
    """One granted node for one app; ``granted_at`` is the log sequence."""

    app_id: str
    node_id: str
    duration: GrantDuration
    granted_at: int
    consumed: bool = False


@dataclass(frozen=True)
class Decision:
    """One applied verdict over a node set."""

    session_id: str
    app_id: str
    node_ids: frozenset[str]
    verdict: Verdict
    seq: int


@dataclass(frozen=True)
class CredentialRecord:
    """Tool-service credential; the canary tag is embedded in the secret
    so any leak of secret material is detectable by tag search."""

    app_id: str
    secret_material: str
    canary_tag: str


@dataclass
class Session:
    """A live fork: snapshot of persistent grants plus session-local ones."""

    session_id: str
    user: str
    token: str | None
    base: dict[str, set[str]] = field(default_factory=dict)
    session_grants: list[Grant] = field(default_factory=list)
    plan_uses: dict[str, dict[str, frozenset[str]]] = field(default_factory=dict)
    live: bool = True
    version: int = 0


class GrantStore:
    """Grant state with an append-only decision log.

    ``root`` selects on-disk persistence (log, snapshot, credentials);
    ``None`` keeps everything in memory for tests and simulations.
    """

    def __init__(self, root: str | Path | None = None) -> None:
        self._root = Path(root) if root is not None else None
        self._lock = threading.RLock()
        self._seq = 0
        self._records: list[dict] = []
        self._persistent: dict[str, dict[str, dict[str, Grant]]] = {}
        self._sessions: dict[str, Session] = {}
        self._credentials: dict[str, CredentialRecord] = {}
        self._session_counter = 0
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            self._load()

    # ------------------------------------------------------------------
    # log plumbing

    def _append(self, record: dict) -> int:
        self._seq += 1
        record = {"v": LOG_VERSION, "seq": self._seq, "ts": time.time(), **record}
        self._records.append(record)
        if self._root is not None:
            with open(self._root / LOG_FILE, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            if self._seq % SNAPSHOT_EVERY == 0:
                self._write_snapshot()
        return self._seq

    def _write_snapshot(self) -> None:
        snapshot = {
            "v": LOG_VERSION,
            "seq": self._seq,
            "persistent": {
                user: {app: sorted(grants) for app, grants in apps.items() if grants}
                for user, apps in self._persistent.items()
            },
        }
        path = self._root / SNAPSHOT_FILE
        path.write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def _load(self) -> None:
        log_path = self._root / LOG_FILE
        if log_path.exists():
            with open(log_path, "r", encoding="utf-8") as fh:
                records = [json.loads(line) for line in fh if line.strip()]
            self.apply_records(records)
            # Sessions from previous processes have no live token.
            for session in self._sessions.values():
                session.live = False
        cred_path = self._root / CREDENTIALS_FILE
        if cred_path.exists():
            raw = json.loads(cred_path.read_text(encoding="utf-8"))
            for app_id, body in raw.items():
                self._credentials[app_id] = CredentialRecord(
                    app_id=app_id,
                    secret_material=body["secret"],
                    canary_tag=body["canary"],
                )

    def apply_records(self, records: list[dict]) -> None:
        """Replay decision-log records into this store's state.

        Used both to load from disk and by tests that check replay
        determinism. Tokens are never logged, so replayed sessions carry
        none.
        """
        with self._lock:
            for record in records:
                self._apply_record(record)

    def _apply_record(self, record: dict) -> None:
        kind = record["type"]
        self._seq = max(self._seq, record["seq"])
        self._records.append(record)
        if kind == "open_session":
            user = record["user"]
            persistent = self._persistent.setdefault(user, {})
            session = Session(
                session_id=record["session"],
                user=user,
                token=None,
                base={app: set(grants) for app, grants in persistent.items()},
            )
            self._sessions[session.session_id] = session
            suffix = record["session"].rsplit("-", 1)[-1]
            if suffix.isdigit():
                self._session_counter = max(self._session_counter, int(suffix))
            else:
                self._session_counter += 1
        elif kind == "decision":
            self._apply_decision_state(
                record["session"],
                record["app"],
                frozenset(record["nodes"]),
                Verdict(record["verdict"]),
                record["seq"],
            )
        elif kind == "consume":
            session = self._sessions[record["session"]]
            self._consume_state(session, record["app"], set(record["nodes"]))
        elif kind == "revoke":
            self._revoke_state(record["user"], record["app"], record["node"])
        elif kind == "revoke_now":
            self._revoke_state(record["user"], record["app"], record["node"])
            self._strip_forks(record["user"], record["app"], record["node"])
        elif kind == "close_session":
            session = self._sessions.get(record["session"])
            if session is not None:
                session.live = False
        elif kind == "credential_access":
            pass
        else:
            raise ConfigurationError(f"unknown log record type {kind!r}")

    def log_records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    # ------------------------------------------------------------------
    # sessions

    def open_session(self, user: str = "default") -> Session:
        with self._lock:
            self._session_counter += 1
            session_id = f"sess-{self._session_counter:04d}"
            token = secrets.token_urlsafe(16)
            persistent = self._persistent.setdefault(user, {})
            session = Session(
                session_id=session_id,
                user=user,
                token=token,
                base={app: set(grants) for app, grants in persistent.items()},
            )
            self._sessions[session_id] = session
            self._append({"type": "open_session", "user": user, "session": session_id})
            return session

    def close_session(self, session_id: str) -> None:
        with self._lock:
            session = self._session(session_id)
            session.live = False
            session.version += 1
            self._append({"type": "close_session", "session": session_id})

    def _session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(f"unknown session {session_id!r}")
        return session

    def _live_session(self, session_id: str) -> Session:
        session = self._session(session_id)
        if not session.live:
            raise SessionError(f"session {session_id!r} is closed")
        return session

    def session_for_token(self, token: str) -> Session:
        """Resolve a session token using constant-time comparison."""
        with self._lock:
            candidate = token.encode("utf-8")
            found: Session | None = None
            for session in self._sessions.values():
                if session.token is None or not session.live:
                    continue
                if hmac.compare_digest(candidate, session.token.encode("utf-8")):
                    found = session
            if found is None:
                raise AuthenticationError("invalid session token")
            return found

    def session_version(self, session_id: str) -> int:
        with self._lock:
            return self._session(session_id).version

    # ------------------------------------------------------------------
    # decisions and grants

    def apply_decision(
        self,
        session_id: str,
        app_id: str,
        node_ids: frozenset[str] | set[str],
        verdict: Verdict,
    ) -> frozenset[str]:
        """Apply one verdict and return the new effective node set."""
        node_ids = frozenset(node_ids)
        if not node_ids:
            raise ConfigurationError("decision needs a non-empty node set")
        with self._lock:
            session = self._live_session(session_id)
            seq = self._append(
                {
                    "type": "decision",
                    "user": session.user,
                    "session": session_id,
                    "app": app_id,
                    "nodes": sorted(node_ids),
                    "verdict": verdict.value,
                }
            )
            self._apply_decision_state(session_id, app_id, node_ids, verdict, seq)
            return self.effective_nodes(session_id, app_id)

    def _apply_decision_state(
        self,
        session_id: str,
        app_id: str,
        node_ids: frozenset[str],
        verdict: Verdict,
        seq: int,
    ) -> None:
        session = self._session(session_id)
        session.version += 1
        if verdict is Verdict.DENY:
            return
        if verdict is Verdict.ALWAYS:
            grants = self._persistent.setdefault(session.user, {}).setdefault(app_id, {})
            for node_id in node_ids:
                grants[node_id] = Grant(app_id, node_id, GrantDuration.ALWAYS, seq)
            # An ALWAYS grant answers this session's prompt too, so the live
            # fork sees it immediately; other live forks keep their snapshot.
            session.base.setdefault(app_id, set()).update(node_ids)
            return
        duration = GrantDuration(verdict.value)
        for node_id in node_ids:
            session.session_grants.append(Grant(app_id, node_id, duration, seq))

    def effective_nodes(self, session_id: str, app_id: str) -> frozenset[str]:
        with self._lock:
            session = self._session(session_id)
            if not session.live:
                return frozenset()
            nodes = set(session.base.get(app_id, ()))
            for grant in session.session_grants:
                if grant.app_id == app_id and not grant.consumed:
                    nodes.add(grant.node_id)
            return frozenset(nodes)

    def durable_nodes(self, session_id: str, app_id: str) -> frozenset[str]:
        """Effective nodes backed by ALWAYS or SESSION grants only."""
        with self._lock:
            session = self._session(session_id)
            if not session.live:
                return frozenset()
            nodes = set(session.base.get(app_id, ()))
            for grant in session.session_grants:
                if grant.app_id == app_id and grant.duration is GrantDuration.SESSION:
                    nodes.add(grant.node_id)
            return frozenset(nodes)

    def record_plan_grant_use(
        self, session_id: str, plan_id: str, uses: dict[str, frozenset[str]]
    ) -> None:
        """Remember which ONCE-granted nodes a plan's authorization needed."""
        with self._lock:
            session = self._live_session(session_id)
            session.plan_uses[plan_id] = dict(uses)

    def consume_once_grants(self, session_id: str, plan_id: str) -> int:
        """Mark the ONCE grants a completed plan depended on as consumed."""
        with self._lock:
            session = self._live_session(session_id)
            if plan_id not in session.plan_uses:
                raise NotFoundError(f"plan {plan_id!r} was not authorized in this session")
            uses = session.plan_uses.pop(plan_id)
            consumed_total = 0
            for app_id, nodes in sorted(uses.items()):
                consumed = self._consume_state(session, app_id, set(nodes))
                if consumed:
                    self._append(
                        {
                            "type": "consume",
                            "session": session_id,
                            "app": app_id,
                            "nodes": sorted(consumed),
                            "plan": plan_id,
                        }
                    )
                    consumed_total += len(consumed)
            if consumed_total:
                session.version += 1
            return consumed_total

    def _consume_state(self, session: Session, app_id: str, nodes: set[str]) -> set[str]:
        consumed: set[str] = set()
        for i, grant in enumerate(session.session_grants):
            if (
                grant.app_id == app_id
                and grant.duration is GrantDuration.ONCE
                and not grant.consumed
                and grant.node_id in nodes
            ):
                session.session_grants[i] = Grant(
                    grant.app_id, grant.node_id, grant.duration, grant.granted_at, consumed=True
                )
                consumed.add(grant.node_id)
        session.version += 1
        return consumed

    # ------------------------------------------------------------------
    # revocation

    def revoke(self, user: str, app_id: str, node_id: str) -> None:
        """Remove a persistent grant; live forks keep their snapshot."""
        with self._lock:
            self._check_persistent(user, app_id, node_id)
            self._append({"type": "revoke", "user": user, "app": app_id, "node": node_id})
            self._revoke_state(user, app_id, node_id)

    def revoke_now(self, user: str, app_id: str, node_id: str) -> None:
        """Remove a grant everywhere, including live session forks."""
        with self._lock:
            in_persistent = node_id in self._persistent.get(user, {}).get(app_id, {})
            in_fork = any(
                session.live
                and session.user == user
                and (
                    node_id in session.base.get(app_id, ())
                    or any(
                        g.app_id == app_id and g.node_id == node_id
                        for g in session.session_grants
                    )
                )
                for session in self._sessions.values()
            )
            if not in_persistent and not in_fork:
                raise NotFoundError(f"no grant of {node_id!r} on {app_id!r} for {user!r}")
            self._append({"type": "revoke_now", "user": user, "app": app_id, "node": node_id})
            self._revoke_state(user, app_id, node_id)
            self._strip_forks(user, app_id, node_id)

    def _check_persistent(self, user: str, app_id: str, node_id: str) -> None:
        if node_id not in self._persistent.get(user, {}).get(app_id, {}):
            raise NotFoundError(f"no persistent grant of {node_id!r} on {app_id!r} for {user!r}")

    def _revoke_state(self, user: str, app_id: str, node_id: str) -> None:
        self._persistent.get(user, {}).get(app_id, {}).pop(node_id, None)

    def _strip_forks(self, user: str, app_id: str, node_id: str) -> None:
        for session in self._sessions.values():
            if not session.live or session.user != user:
                continue
            session.base.get(app_id, set()).discard(node_id)
            session.session_grants = [
                g
                for g in session.session_grants
                if not (g.app_id == app_id and g.node_id == node_id)
            ]
            session.version += 1

    # ------------------------------------------------------------------
    # listings

    def persistent_grants(self, user: str = "default") -> dict[str, frozenset[str]]:
        with self._lock:
            return {
                app: frozenset(grants)
                for app, grants in self._persistent.get(user, {}).items()
                if grants
            }

    def grants_listing(self) -> dict:
        """Grant inventory for the operator surface."""
        with self._lock:
            return {
                "persistent": {
                    user: {app: sorted(grants) for app, grants in apps.items() if grants}
                    for user, apps in self._persistent.items()
                },
                "sessions": {
                    sid: {
                        "user": session.user,
                        "live": session.live,
                        "grants": [
                            {
                                "app": g.app_id,
                                "node": g.node_id,
                                "duration": g.duration.value,
                                "consumed": g.consumed,
                            }
                            for g in session.session_grants
                        ],
                    }
                    for sid, session in self._sessions.items()
                },
            }

    # ------------------------------------------------------------------
    # credentials

    def set_credential(
        self, app_id: str, secret_material: str | None = None, canary_tag: str | None = None
    ) -> CredentialRecord:
        """Create or replace an app credential; the canary tag is always
        embedded inside the secret material."""
        with self._lock:
            if canary_tag is None:
                canary_tag = f"CANARY-{app_id}-{secrets.token_hex(8)}"
            if secret_material is None:
                secret_material = f"sk-{app_id}-{secrets.token_hex(12)}-{canary_tag}"
            elif canary_tag not in secret_material:
                secret_material = f"{secret_material}-{canary_tag}"
            record = CredentialRecord(
                app_id=app_id, secret_material=secret_material, canary_tag=canary_tag
            )
            self._credentials[app_id] = record
            if self._root is not None:
                path = self._root / CREDENTIALS_FILE
                payload = {
                    app: {"secret": rec.secret_material, "canary": rec.canary_tag}
                    for app, rec in sorted(self._credentials.items())
                }
                path.write_text(
                    json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
                )
                os.chmod(path, 0o600)
            return record

    def fetch_credential(self, app_id: str) -> CredentialRecord:
        with self._lock:
            record = self._credentials.get(app_id)
            if record is None:
                raise ConfigurationError(f"no credential configured for app {app_id!r}")
            self._append({"type": "credential_access", "app": app_id})
            return record
