"""Connector overprivilege reports.

Compares the scopes a connector manifest actually requests against the
minimal hierarchy nodes that would cover its advertised tool methods.
The ratio of method counts (requested over minimal) is kept as an exact
rational; anything above 1 is overprivileged, and requested scope sets
that cannot even run the tools are flagged infeasible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigurationError, UnknownMethodError
from .fixtures import fixture_json
from .scopes import PermissionForest, ScopeMap, build_forest
from .solver import solve_plan

VERDICT_OVERPRIVILEGED = "OVERPRIVILEGED"
VERDICT_MINIMAL = "MINIMAL"
VERDICT_INFEASIBLE = "INFEASIBLE_REQUESTED"


@dataclass(frozen=True)
class AuditReport:
    connector: str
    app_id: str
    requested_scopes: tuple[str, ...]
    requested_nodes: tuple[str, ...]
    requested_method_count: int
    minimal_nodes: tuple[str, ...]
    minimal_method_count: int
    ratio: Fraction | None
    verdict: str

    def to_dict(self) -> dict:
        return {
            "connector": self.connector,
            "app": self.app_id,
            "requested_scopes": list(self.requested_scopes),
            "requested_nodes": list(self.requested_nodes),
            "requested_method_count": self.requested_method_count,
            "minimal_nodes": list(self.minimal_nodes),
            "minimal_method_count": self.minimal_method_count,
            "ratio": None
            if self.ratio is None
            else {"numerator": self.ratio.numerator, "denominator": self.ratio.denominator},
            "verdict": self.verdict,
        }

    def ratio_text(self) -> str:
        if self.ratio is None:
            return "n/a"
        return f"{self.ratio.numerator}/{self.ratio.denominator} ({float(self.ratio):.2f})"


def audit_scopes(
    forest: PermissionForest,
    tool_methods: list[str] | tuple[str, ...],
    requested_scopes: list[str] | tuple[str, ...],
    connector: str = "",
) -> AuditReport:
    """Build an overprivilege report for one requested-scope set."""
    if not tool_methods:
        raise ConfigurationError("no tool methods to audit")
    if not requested_scopes:
        raise ConfigurationError("no requested scopes to audit")
    requested_nodes = tuple(
        sorted({forest.node_for_scope(name).node_id for name in requested_scopes})
    )
    requested_methods = forest.methods_under(frozenset(requested_nodes))

    for index, method in enumerate(tool_methods):
        try:
            forest.scopes_for_method(method)
        except UnknownMethodError:
            raise UnknownMethodError(forest.app_id, method, call_index=index) from None

    minimal = solve_plan(forest, list(tool_methods))
    minimal_nodes = tuple(sorted(minimal.selected))
    minimal_method_count = len(forest.methods_under(minimal.selected))

    covered = all(method in requested_methods for method in tool_methods)
    if not covered:
        return AuditReport(
            connector=connector,
            app_id=forest.app_id,
            requested_scopes=tuple(sorted(requested_scopes)),
            requested_nodes=requested_nodes,
            requested_method_count=len(requested_methods),
            minimal_nodes=minimal_nodes,
            minimal_method_count=minimal_method_count,
            ratio=None,
            verdict=VERDICT_INFEASIBLE,
        )
    ratio = Fraction(len(requested_methods), minimal_method_count)
    return AuditReport(
        connector=connector,
        app_id=forest.app_id,
        requested_scopes=tuple(sorted(requested_scopes)),
        requested_nodes=requested_nodes,
        requested_method_count=len(requested_methods),
        minimal_nodes=minimal_nodes,
        minimal_method_count=minimal_method_count,
        ratio=ratio,
        verdict=VERDICT_OVERPRIVILEGED if ratio > 1 else VERDICT_MINIMAL,
    )


def load_connector(name_or_path: str | Path) -> dict:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        raw = json.loads(path.read_text(encoding="utf-8"))
    else:
        raw = fixture_json(f"connectors/{name_or_path}.json")
    if raw.get("schema_version") != 1:
        raise ConfigurationError(f"unsupported connector schema {raw.get('schema_version')!r}")
    for key in ("connector", "app", "requested_scopes", "tool_methods"):
        if key not in raw:
            raise ConfigurationError(f"connector manifest missing {key!r}")
    return raw


def audit_connector(manifest: dict, scope_map: ScopeMap) -> AuditReport:
    if manifest["app"] != scope_map.app_id:
        raise ConfigurationError(
            f"manifest targets app {manifest['app']!r}, scope map is {scope_map.app_id!r}"
        )
    forest = build_forest(scope_map)
    return audit_scopes(
        forest,
        manifest["tool_methods"],
        manifest["requested_scopes"],
        connector=manifest["connector"],
    )
