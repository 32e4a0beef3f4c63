import os

import pytest

from rgkit.adapters import AdapterContext, IMP_ADAPTER
from rgkit.semantics import Ctx
from rgkit.values import BoolType, IntType, Schema

CORPUS = os.path.join(os.path.dirname(__file__), "..", "corpus")


def corpus_path(name: str) -> str:
    return os.path.normpath(os.path.join(CORPUS, name))


@pytest.fixture
def xschema() -> Schema:
    return Schema([("x", IntType(0, 3), 0), ("flag", BoolType(), False)])


@pytest.fixture
def xctx(xschema) -> Ctx:
    return Ctx(AdapterContext(xschema), IMP_ADAPTER)
