"""Shared fixtures for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from leastscope.fixtures import fixture_scope_map
from leastscope.gateway import Gateway
from leastscope.grants import GrantStore
from leastscope.scopes import build_forest

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def calendar_map():
    return fixture_scope_map("calendar")


@pytest.fixture(scope="session")
def mail_map():
    return fixture_scope_map("mail")


@pytest.fixture(scope="session")
def calendar_forest(calendar_map):
    return build_forest(calendar_map)


@pytest.fixture(scope="session")
def mail_forest(mail_map):
    return build_forest(mail_map)


@pytest.fixture
def gateway(calendar_map, mail_map):
    return Gateway(GrantStore(None), [calendar_map, mail_map])


@pytest.fixture(scope="session")
def cover_golden():
    return json.loads((GOLDEN_DIR / "cover_cases.json").read_text(encoding="utf-8"))


def load_golden_text(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")
