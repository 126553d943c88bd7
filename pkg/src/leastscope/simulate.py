"""Persona simulations measuring user confirmation effort.

A profile draws a seeded, frequency-weighted request sequence against one
fixture app. Each persona answers every permission prompt with a fixed
policy; a run counts cumulative confirmations (one per surfaced prompt)
per request. HIERARCHY mode prompts over the real permission forest;
PER_METHOD treats every method as its own singleton node, which is the
flat baseline the hierarchy is supposed to beat.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .fixtures import fixture_json
from .gateway import Gateway, ToolCall
from .grants import GrantStore, Verdict
from .scopes import NODE_ID_SEPARATOR, ScopeMap, flat_scope_map

READ_MARKERS = ("readonly", "read", "get", "list")

MODES = ("HIERARCHY", "PER_METHOD")


def node_is_read_only(node_id: str, markers: tuple[str, ...] = READ_MARKERS) -> bool:
    """Name-based heuristic: every member scope name carries a read marker.

    Node ids are the sorted member scope names joined with ``+``, so the
    members are recoverable from the id alone.
    """
    members = node_id.split(NODE_ID_SEPARATOR)
    return all(any(marker in member for marker in markers) for member in members)


class Persona:
    """Answers permission prompts; subclasses implement one policy."""

    name = "persona"

    def decide(self, request_view: dict) -> Verdict:
        raise NotImplementedError

    def _delta_nodes(self, request_view: dict) -> list[str]:
        out: list[str] = []
        for body in request_view["delta"].values():
            out.extend(body["nodes"])
        return out


class AlwaysAllowPersona(Persona):
    name = "always-always"

    def decide(self, request_view: dict) -> Verdict:
        return Verdict.ALWAYS


class AlwaysOncePersona(Persona):
    name = "always-once"

    def decide(self, request_view: dict) -> Verdict:
        return Verdict.ONCE


class ReadOnlyAlwaysPersona(Persona):
    """ALWAYS for all-read prompts, ONCE otherwise."""

    name = "readonly-always"

    def __init__(self, markers: tuple[str, ...] = READ_MARKERS) -> None:
        self.markers = markers

    def decide(self, request_view: dict) -> Verdict:
        if all(node_is_read_only(n, self.markers) for n in self._delta_nodes(request_view)):
            return Verdict.ALWAYS
        return Verdict.ONCE


class CautiousPersona(Persona):
    """ALWAYS for reads, SESSION for small writes, ONCE for broad asks."""

    name = "cautious"

    def __init__(
        self,
        markers: tuple[str, ...] = READ_MARKERS,
        session_max_methods: int = 4,
    ) -> None:
        self.markers = markers
        self.session_max_methods = session_max_methods

    def decide(self, request_view: dict) -> Verdict:
        nodes = self._delta_nodes(request_view)
        if all(node_is_read_only(n, self.markers) for n in nodes):
            return Verdict.ALWAYS
        counts = [
            body["method_counts"][n]
            for body in request_view["delta"].values()
            for n in body["nodes"]
        ]
        if max(counts) <= self.session_max_methods:
            return Verdict.SESSION
        return Verdict.ONCE


class ScriptedPersona(Persona):
    """Plays back a fixed verdict list; running out is a scenario bug."""

    name = "scripted"

    def __init__(self, verdicts: list[str]) -> None:
        self._verdicts = [Verdict(v) for v in verdicts]
        self._next = 0

    def decide(self, request_view: dict) -> Verdict:
        if self._next >= len(self._verdicts):
            raise ConfigurationError("scripted persona ran out of verdicts")
        verdict = self._verdicts[self._next]
        self._next += 1
        return verdict


def make_persona(spec: str | dict) -> Persona:
    if isinstance(spec, dict):
        if spec.get("type") != "scripted" or "verdicts" not in spec:
            raise ConfigurationError(f"bad persona spec {spec!r}")
        return ScriptedPersona(spec["verdicts"])
    factories = {
        "always-always": AlwaysAllowPersona,
        "always-once": AlwaysOncePersona,
        "readonly-always": ReadOnlyAlwaysPersona,
        "cautious": CautiousPersona,
    }
    if spec not in factories:
        raise ConfigurationError(f"unknown persona {spec!r}")
    return factories[spec]()


@dataclass(frozen=True)
class SimProfile:
    """Frequency-weighted request mix for one app."""

    name: str
    app_id: str
    length: int
    weights: dict[str, float]
    multi_method_fraction: float = 0.3

    def __post_init__(self) -> None:
        if not self.weights:
            raise ConfigurationError(f"profile {self.name!r} has no method weights")
        if self.length < 1:
            raise ConfigurationError(f"profile {self.name!r} has non-positive length")
        for method, weight in self.weights.items():
            if weight <= 0:
                raise ConfigurationError(
                    f"profile {self.name!r} has non-positive weight for {method!r}"
                )
        if not 0.0 <= self.multi_method_fraction <= 1.0:
            raise ConfigurationError("multi_method_fraction must be within [0, 1]")


def load_profile(name_or_path: str) -> SimProfile:
    """Load a bundled profile by name or any profile file by path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        raw = json.loads(path.read_text(encoding="utf-8"))
    else:
        raw = fixture_json(f"profiles/{name_or_path}.json")
    if raw.get("schema_version") != 1:
        raise ConfigurationError(f"unsupported profile schema {raw.get('schema_version')!r}")
    return SimProfile(
        name=raw["name"],
        app_id=raw["app"],
        length=raw["length"],
        weights=dict(raw["weights"]),
        multi_method_fraction=raw.get("multi_method_fraction", 0.3),
    )


@dataclass(frozen=True)
class SimRequest:
    index: int
    prompt: str
    methods: tuple[str, ...]


def generate_sequence(seed: int, profile: SimProfile) -> list[SimRequest]:
    """Deterministic frequency-weighted sequence with a multi-method mix."""
    rng = random.Random(seed)
    methods = sorted(profile.weights)
    weights = [profile.weights[m] for m in methods]
    requests: list[SimRequest] = []
    for index in range(profile.length):
        want = 1
        if rng.random() < profile.multi_method_fraction:
            want = rng.randint(2, 4)
        chosen: list[str] = []
        for _ in range(8 * want):
            method = rng.choices(methods, weights)[0]
            if method not in chosen:
                chosen.append(method)
            if len(chosen) == want:
                break
        requests.append(
            SimRequest(
                index=index,
                prompt=f"request {index:03d}: {', '.join(chosen)}",
                methods=tuple(chosen),
            )
        )
    return requests


@dataclass(frozen=True)
class EffortCurve:
    """Cumulative confirmation counts over one persona/mode run."""

    persona: str
    mode: str
    seed: int
    cumulative: tuple[int, ...]

    @property
    def total(self) -> int:
        return self.cumulative[-1] if self.cumulative else 0

    def rows(self) -> list[tuple[int, int, str, str, int]]:
        return [
            (i, value, self.persona, self.mode, self.seed)
            for i, value in enumerate(self.cumulative)
        ]


def run_personas(
    sequence: list[SimRequest],
    personas: list[str | dict],
    scope_map: ScopeMap,
    modes: tuple[str, ...] = MODES,
    seed: int = 0,
    collect_gateways: dict | None = None,
) -> dict[tuple[str, str], EffortCurve]:
    """Run every persona/mode combination on a fresh store each time.

    One confirmation is one surfaced permission prompt. Gateways can be
    collected for post-run trace auditing.
    """
    curves: dict[tuple[str, str], EffortCurve] = {}
    for mode in modes:
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}")
        run_map = scope_map if mode == "HIERARCHY" else flat_scope_map(scope_map)
        for spec in personas:
            persona = make_persona(spec)
            store = GrantStore(None)
            gateway = Gateway(store, [run_map])
            session = gateway.open_session()
            token = session["token"]
            confirmations = 0
            cumulative: list[int] = []
            for request in sequence:
                calls = [ToolCall(app_id=run_map.app_id, method=m) for m in request.methods]
                response = gateway.submit_plan(token, calls, prompt=request.prompt)
                if response["status"] == "NEEDS_APPROVAL":
                    verdict = persona.decide(gateway.request_view(response["request_id"]))
                    gateway.resolve_request(response["request_id"], verdict)
                    confirmations += 1
                for call in calls:
                    gateway.intercept_call(token, call, response["plan_id"])
                cumulative.append(confirmations)
            curves[(persona.name, mode)] = EffortCurve(
                persona=persona.name, mode=mode, seed=seed, cumulative=tuple(cumulative)
            )
            if collect_gateways is not None:
                collect_gateways[(persona.name, mode)] = gateway
    return curves


def write_curves(directory: str | Path, curves: list[EffortCurve]) -> dict[str, Path]:
    """Write a plot-ready TSV table plus a structured JSON file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table_path = directory / "curves.tsv"
    json_path = directory / "curves.json"
    rows = []
    for curve in sorted(curves, key=lambda c: (c.persona, c.mode, c.seed)):
        rows.extend(curve.rows())
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("request_index\tcumulative_confirmations\tpersona\tmode\tseed\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")
    payload = {
        "schema_version": 1,
        "curves": [
            {
                "persona": c.persona,
                "mode": c.mode,
                "seed": c.seed,
                "total": c.total,
                "cumulative": list(c.cumulative),
            }
            for c in sorted(curves, key=lambda c: (c.persona, c.mode, c.seed))
        ],
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"table": table_path, "json": json_path}
