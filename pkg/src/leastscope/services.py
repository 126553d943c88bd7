"""Mock tool services used as gateway targets.

Each service enforces complete mediation: a request is served only when it
carries the gateway's per-instance stamp header and the app's credential.
Anything else is rejected and counted, which lets tests assert that no
code path reaches a service except through the gateway. State is a simple
item store, seedable with adversarial payloads for injection scenarios.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass, field

from .grants import CredentialRecord

STAMP_HEADER = "x-internal-gateway"
AUTH_HEADER = "authorization"


@dataclass
class MockService:
    app_id: str
    credential: CredentialRecord
    stamp: str
    items: list[dict] = field(default_factory=list)
    rejected_direct: int = 0
    served: int = 0

    def seed(self, items: list[dict]) -> None:
        self.items = [dict(item) for item in items]

    def handle(self, method: str, payload: dict | None, headers: dict[str, str]) -> dict:
        """Serve one call, or reject it when it did not come via the gateway."""
        payload = payload or {}
        stamp_ok = hmac.compare_digest(headers.get(STAMP_HEADER, ""), self.stamp)
        cred_ok = hmac.compare_digest(
            headers.get(AUTH_HEADER, ""), self.credential.secret_material
        )
        if not (stamp_ok and cred_ok):
            self.rejected_direct += 1
            return {
                "ok": False,
                "error": {
                    "code": "service_rejected",
                    "message": "requests must be mediated by the gateway",
                },
            }
        self.served += 1
        return {"ok": True, "result": self._dispatch(method, payload)}

    def _dispatch(self, method: str, payload: dict) -> dict:
        """Tiny verb-keyed state machine over the item store."""
        verb = method.rsplit(".", 1)[-1]
        if verb in ("list", "search", "instances", "query"):
            return {"method": method, "items": [dict(item) for item in self.items]}
        if verb == "get":
            index = payload.get("index", 0)
            item = self.items[index] if 0 <= index < len(self.items) else None
            return {"method": method, "item": item}
        if verb in ("insert", "create", "send", "quickadd", "import"):
            item = dict(payload.get("item", {"body": ""}))
            self.items.append(item)
            return {"method": method, "stored": len(self.items)}
        if verb in ("delete", "clear", "trash"):
            removed = len(self.items)
            self.items = []
            return {"method": method, "removed": removed}
        return {"method": method, "done": True}
