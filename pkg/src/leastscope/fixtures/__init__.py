"""Bundled fixtures: app scope maps, scenario scripts, profiles, goldens."""

from __future__ import annotations

import json
from importlib import resources

from ..errors import ConfigurationError
from ..scopes import ScopeMap, parse_scope_map


def _read(relpath: str) -> bytes:
    root = resources.files(__package__)
    target = root.joinpath(relpath)
    if not target.is_file():
        raise ConfigurationError(f"no bundled fixture {relpath!r}")
    return target.read_bytes()


def fixture_scope_map(app_id: str) -> ScopeMap:
    return parse_scope_map(_read(f"apps/{app_id}.json"))


def fixture_json(relpath: str) -> dict:
    return json.loads(_read(relpath))


def fixture_bytes(relpath: str) -> bytes:
    return _read(relpath)


def scenario_names() -> list[str]:
    root = resources.files(__package__).joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))
