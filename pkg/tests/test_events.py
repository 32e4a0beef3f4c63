import pytest

from rgkit.adapters import Basic, subst_program
from rgkit.events import (
    EsIter,
    EsTriggered,
    EventTemplate,
    FIN,
    expand_events,
    is_fin,
)
from rgkit.exprs import Cmp, Lit, Var
from rgkit.relations import StateSet, true_set
from rgkit.values import IntType, LoadError, Schema, SymType


def schema():
    return Schema([("x", IntType(0, 3), 0)])


def subst(body, env):
    return subst_program(body, env)


def test_zero_params_singleton():
    t = EventTemplate("e", (), Lit(True), Basic((("x", Lit(1)),)))
    es = expand_events(t, schema(), subst)
    assert len(es.instances) == 1
    assert es.instances[0].label == "e"


def test_binary_domain_two_instances():
    t = EventTemplate(
        "e",
        (("t", SymType(("t1", "t2")), None),),
        Lit(True),
        Basic((("x", Lit(1)),)),
    )
    es = expand_events(t, schema(), subst)
    assert [i.label for i in es.instances] == ["e(t1)", "e(t2)"]


def test_product_counts():
    t = EventTemplate(
        "alloc",
        (
            ("p", SymType(("p1",)), None),
            ("sz", IntType(0, 200), (16, 64)),
            ("tmo", IntType(-1, 1), (0, -1)),
        ),
        Lit(True),
        Basic((("x", Lit(1)),)),
    )
    es = expand_events(t, schema(), subst)
    assert len(es.instances) == 4
    labels = [i.label for i in es.instances]
    assert len(set(labels)) == 4  # injective on labels
    assert labels[0] == "alloc(p1, 16, 0)"


def test_param_substitution_in_guard_and_body():
    t = EventTemplate(
        "set",
        (("v", IntType(0, 3), (1, 2)),),
        Cmp("<", Var("x"), Var("v")),
        Basic((("x", Var("v")),)),
    )
    es = expand_events(t, schema(), subst)
    s = schema()
    assert es.instances[0].guard.holds(s.state(x=0))
    assert not es.instances[0].guard.holds(s.state(x=1))
    assert es.instances[1].body == Basic((("x", Lit(2, IntType(0, 3))),))


def test_param_shadowing_rejected():
    t = EventTemplate("e", (("x", IntType(0, 1), None),), Lit(True), Basic(()))
    with pytest.raises(LoadError):
        expand_events(t, schema(), subst)


def test_value_outside_type_rejected():
    t = EventTemplate("e", (("v", IntType(0, 1), (5,)),), Lit(True), Basic(()))
    with pytest.raises(LoadError):
        expand_events(t, schema(), subst)


def test_fin_is_triggered_terminal():
    assert is_fin(FIN)
    assert is_fin(EsTriggered(None))
    assert not is_fin(EsTriggered(Basic(())))


def test_iter_body_cannot_be_fin():
    with pytest.raises(LoadError):
        EsIter(true_set(schema()), FIN)
