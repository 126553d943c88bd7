"""Scope maps and permission hierarchies.

A scope map declares, per app, which API methods each OAuth-style scope
unlocks. Scopes with identical method sets are merged into a single
hierarchy node; nodes are linked broader -> narrower by strict method-set
inclusion, keeping only minimal-cardinality parents. The result is a DAG
(a forest when no node has two parents) whose descendant closure drives
cover solving, grant checks, and prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ScopeMapParseError, ScopeMapValidationError, UnknownMethodError

FORMAT_VERSION = 1

_SCOPE_MAP_KEYS = {"format_version", "app", "scopes"}
_ENTRY_KEYS = {"description", "methods"}

NODE_ID_SEPARATOR = "+"


@dataclass(frozen=True)
class ScopeEntry:
    """One declared scope: a name, a description, and its method set."""

    name: str
    description: str
    methods: frozenset[str]


@dataclass(frozen=True)
class ScopeMap:
    """Parsed scope-map document for a single app."""

    app_id: str
    entries: tuple[ScopeEntry, ...]

    def entry(self, name: str) -> ScopeEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise ScopeMapValidationError(f"unknown scope {name!r}", path="scopes")

    @property
    def scope_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    @property
    def all_methods(self) -> frozenset[str]:
        out: set[str] = set()
        for e in self.entries:
            out |= e.methods
        return frozenset(out)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "app": self.app_id,
            "scopes": {
                e.name: {"description": e.description, "methods": sorted(e.methods)}
                for e in sorted(self.entries, key=lambda e: e.name)
            },
        }


@dataclass(frozen=True)
class HierarchyNode:
    """A merged permission node: member scopes sharing one method set."""

    node_id: str
    member_scopes: frozenset[str]
    methods: frozenset[str]


@dataclass(frozen=True)
class PermissionForest:
    """Hierarchy over merged nodes with a precomputed descendant closure.

    ``edges`` point from broader (parent) to narrower (child). The
    descendant closure for a node always includes the node itself.
    """

    app_id: str
    nodes: dict[str, HierarchyNode]
    edges: frozenset[tuple[str, str]]
    descendants: dict[str, frozenset[str]] = field(compare=False)

    def node(self, node_id: str) -> HierarchyNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ScopeMapValidationError(f"unknown node {node_id!r}", path="nodes") from None

    def node_for_scope(self, scope_name: str) -> HierarchyNode:
        for n in self.nodes.values():
            if scope_name in n.member_scopes:
                return n
        raise ScopeMapValidationError(f"unknown scope {scope_name!r}", path="scopes")

    def parents(self, node_id: str) -> frozenset[str]:
        return frozenset(p for p, c in self.edges if c == node_id)

    def children(self, node_id: str) -> frozenset[str]:
        return frozenset(c for p, c in self.edges if p == node_id)

    def roots(self) -> tuple[str, ...]:
        with_parent = {c for _, c in self.edges}
        return tuple(sorted(n for n in self.nodes if n not in with_parent))

    def is_ancestor(self, ancestor: str, descendant: str) -> bool:
        """True when ``descendant`` is reachable from ``ancestor`` (inclusive)."""
        return descendant in self.descendants[ancestor]

    def scopes_for_method(self, method: str) -> frozenset[str]:
        """Node ids whose method set contains ``method``.

        Raises UnknownMethodError when no node holds the method.
        """
        holders = frozenset(n.node_id for n in self.nodes.values() if method in n.methods)
        if not holders:
            raise UnknownMethodError(self.app_id, method)
        return holders

    def methods_under(self, node_ids: frozenset[str] | set[str]) -> frozenset[str]:
        """Union of methods over the descendant-inclusive closure of nodes."""
        out: set[str] = set()
        for nid in node_ids:
            for d in self.descendants[nid]:
                out |= self.nodes[d].methods
        return frozenset(out)

    def to_dict(self) -> dict:
        return {
            "app": self.app_id,
            "nodes": [
                {
                    "id": n.node_id,
                    "scopes": sorted(n.member_scopes),
                    "methods": sorted(n.methods),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.node_id)
            ],
            "edges": sorted([p, c] for p, c in self.edges),
        }


@dataclass(frozen=True)
class HierarchyStats:
    """Shape summary of a permission forest."""

    node_count: int
    max_height: int
    avg_height: Fraction
    multipath_method_count: int

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "max_height": self.max_height,
            "avg_height": float(self.avg_height),
            "multipath_method_count": self.multipath_method_count,
        }


def parse_scope_map(document: bytes | str) -> ScopeMap:
    """Parse and validate a scope-map document.

    Rejects malformed JSON (with line/column), unknown fields, duplicate
    scope names, empty method sets, and non-string or duplicate method
    names.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScopeMapParseError(f"document is not valid UTF-8: {exc}") from exc

    def reject_duplicate_keys(pairs: list[tuple[str, object]]) -> dict:
        seen: dict[str, object] = {}
        for key, value in pairs:
            if key in seen:
                raise ScopeMapValidationError(f"duplicate key {key!r}", path="scopes")
            seen[key] = value
        return seen

    try:
        raw = json.loads(document, object_pairs_hook=reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise ScopeMapParseError(
            f"invalid document at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc

    if not isinstance(raw, dict):
        raise ScopeMapValidationError("top level must be an object", path="$")
    unknown = set(raw) - _SCOPE_MAP_KEYS
    if unknown:
        raise ScopeMapValidationError(f"unknown fields {sorted(unknown)}", path="$")
    missing = _SCOPE_MAP_KEYS - set(raw)
    if missing:
        raise ScopeMapValidationError(f"missing fields {sorted(missing)}", path="$")
    if raw["format_version"] != FORMAT_VERSION:
        raise ScopeMapValidationError(
            f"unsupported format_version {raw['format_version']!r}", path="format_version"
        )
    app_id = raw["app"]
    if not isinstance(app_id, str) or not app_id:
        raise ScopeMapValidationError("app must be a non-empty string", path="app")
    scopes = raw["scopes"]
    if not isinstance(scopes, dict) or not scopes:
        raise ScopeMapValidationError("scopes must be a non-empty object", path="scopes")

    entries = []
    for name, body in scopes.items():
        path = f"scopes.{name}"
        if not isinstance(name, str) or not name:
            raise ScopeMapValidationError("scope name must be a non-empty string", path=path)
        if not isinstance(body, dict):
            raise ScopeMapValidationError("scope entry must be an object", path=path)
        unknown = set(body) - _ENTRY_KEYS
        if unknown:
            raise ScopeMapValidationError(f"unknown fields {sorted(unknown)}", path=path)
        if set(body) != _ENTRY_KEYS:
            raise ScopeMapValidationError(
                f"missing fields {sorted(_ENTRY_KEYS - set(body))}", path=path
            )
        if not isinstance(body["description"], str):
            raise ScopeMapValidationError("description must be a string", path=path)
        methods = body["methods"]
        if not isinstance(methods, list) or not methods:
            raise ScopeMapValidationError("methods must be a non-empty list", path=path)
        seen: set[str] = set()
        for m in methods:
            if not isinstance(m, str) or not m:
                raise ScopeMapValidationError(
                    "method names must be non-empty strings", path=f"{path}.methods"
                )
            if m in seen:
                raise ScopeMapValidationError(
                    f"duplicate method {m!r}", path=f"{path}.methods"
                )
            seen.add(m)
        entries.append(ScopeEntry(name=name, description=body["description"], methods=frozenset(seen)))

    return ScopeMap(app_id=app_id, entries=tuple(sorted(entries, key=lambda e: e.name)))


def load_scope_map(path) -> ScopeMap:
    with open(path, "rb") as fh:
        return parse_scope_map(fh.read())


def build_forest(scope_map: ScopeMap) -> PermissionForest:
    """Reconstruct the permission hierarchy from a scope map.

    Scopes with identical method sets merge into one node whose id is the
    sorted member names joined with ``+``. Each node's parents are all of
    its minimal-cardinality strict supersets; edges point parent -> child.
    """
    by_methods: dict[frozenset[str], list[ScopeEntry]] = {}
    for entry in scope_map.entries:
        by_methods.setdefault(entry.methods, []).append(entry)

    nodes: dict[str, HierarchyNode] = {}
    for methods, members in by_methods.items():
        names = frozenset(e.name for e in members)
        node_id = NODE_ID_SEPARATOR.join(sorted(names))
        nodes[node_id] = HierarchyNode(node_id=node_id, member_scopes=names, methods=methods)

    edges: set[tuple[str, str]] = set()
    for child in nodes.values():
        candidates = [
            parent
            for parent in nodes.values()
            if child.methods < parent.methods
        ]
        if not candidates:
            continue
        best = min(len(p.methods) for p in candidates)
        for parent in candidates:
            if len(parent.methods) == best:
                edges.add((parent.node_id, child.node_id))

    descendants = _descendant_closure(set(nodes), edges)
    return PermissionForest(
        app_id=scope_map.app_id,
        nodes=nodes,
        edges=frozenset(edges),
        descendants=descendants,
    )


def _descendant_closure(
    node_ids: set[str], edges: set[tuple[str, str]]
) -> dict[str, frozenset[str]]:
    children: dict[str, set[str]] = {n: set() for n in node_ids}
    for p, c in edges:
        children[p].add(c)

    closure: dict[str, frozenset[str]] = {}

    def visit(nid: str, trail: tuple[str, ...]) -> frozenset[str]:
        if nid in closure:
            return closure[nid]
        if nid in trail:
            raise ScopeMapValidationError(f"cycle through {nid!r}", path="edges")
        out = {nid}
        for c in children[nid]:
            out |= visit(c, trail + (nid,))
        closure[nid] = frozenset(out)
        return closure[nid]

    for nid in sorted(node_ids):
        visit(nid, ())
    return closure


def compute_stats(forest: PermissionForest) -> HierarchyStats:
    """Node count, chain heights, and multipath method count.

    Height counts nodes along the longest parent-to-child chain (a lone
    node has height 1). avg_height is the mean of per-component maxima
    over weakly connected components. A method is multipath when two of
    its holder nodes are incomparable: neither reaches the other through
    the descendant closure.
    """
    if not forest.nodes:
        return HierarchyStats(0, 0, Fraction(0), 0)

    children: dict[str, set[str]] = {n: set() for n in forest.nodes}
    undirected: dict[str, set[str]] = {n: set() for n in forest.nodes}
    for p, c in forest.edges:
        children[p].add(c)
        undirected[p].add(c)
        undirected[c].add(p)

    height_cache: dict[str, int] = {}

    def height(nid: str) -> int:
        if nid not in height_cache:
            below = [height(c) for c in children[nid]]
            height_cache[nid] = 1 + (max(below) if below else 0)
        return height_cache[nid]

    component_heights: list[int] = []
    seen: set[str] = set()
    for start in sorted(forest.nodes):
        if start in seen:
            continue
        stack, component = [start], set()
        while stack:
            nid = stack.pop()
            if nid in component:
                continue
            component.add(nid)
            stack.extend(undirected[nid] - component)
        seen |= component
        component_heights.append(max(height(n) for n in component))

    all_methods: set[str] = set()
    for n in forest.nodes.values():
        all_methods |= n.methods
    multipath = 0
    for method in all_methods:
        holders = [n.node_id for n in forest.nodes.values() if method in n.methods]
        if any(
            b not in forest.descendants[a] and a not in forest.descendants[b]
            for i, a in enumerate(holders)
            for b in holders[i + 1 :]
        ):
            multipath += 1

    return HierarchyStats(
        node_count=len(forest.nodes),
        max_height=max(component_heights),
        avg_height=Fraction(sum(component_heights), len(component_heights)),
        multipath_method_count=multipath,
    )


def dump_forest(forest: PermissionForest) -> str:
    """Byte-stable serialization: sorted arrays, sorted keys, one newline."""
    return json.dumps(forest.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_forest(document: bytes | str) -> PermissionForest:
    """Parse a serialized forest back into an equal PermissionForest."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScopeMapParseError(
            f"invalid forest document at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict) or set(raw) != {"app", "nodes", "edges"}:
        raise ScopeMapValidationError("forest must have app, nodes, edges", path="$")
    nodes: dict[str, HierarchyNode] = {}
    for item in raw["nodes"]:
        node = HierarchyNode(
            node_id=item["id"],
            member_scopes=frozenset(item["scopes"]),
            methods=frozenset(item["methods"]),
        )
        nodes[node.node_id] = node
    edges = {(p, c) for p, c in raw["edges"]}
    for p, c in edges:
        if p not in nodes or c not in nodes:
            raise ScopeMapValidationError(f"edge references unknown node {p!r}->{c!r}", path="edges")
    return PermissionForest(
        app_id=raw["app"],
        nodes=nodes,
        edges=frozenset(edges),
        descendants=_descendant_closure(set(nodes), set(edges)),
    )


def load_forest(path) -> PermissionForest:
    with open(path, "rb") as fh:
        return parse_forest(fh.read())


def flat_scope_map(scope_map: ScopeMap) -> ScopeMap:
    """Degenerate scope map: every method becomes its own singleton scope.

    Used to compare prompting effort against the real hierarchy; the
    singleton scope name is the method name itself.
    """
    entries = tuple(
        ScopeEntry(name=m, description=f"method {m}", methods=frozenset({m}))
        for m in sorted(scope_map.all_methods)
    )
    return ScopeMap(app_id=scope_map.app_id, entries=entries)


def flat_forest(scope_map: ScopeMap) -> PermissionForest:
    """Forest over ``flat_scope_map``: singleton nodes, no edges."""
    return build_forest(flat_scope_map(scope_map))
