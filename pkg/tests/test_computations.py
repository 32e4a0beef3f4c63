import pytest

from rgkit.adapters import AdapterContext, Basic, IMP_ADAPTER
from rgkit.computations import (
    Computation,
    MODULAR_RULES,
    check_linear_modular_equiv,
    computation_valid,
    cpts_linear,
    cpts_modular,
    lift_seq_cpt,
)
from rgkit.events import (
    EsBasic,
    EsChoice,
    EsIter,
    EsJoin,
    EsSeq,
    EsTriggered,
    EventSet,
    EventSpec,
    FIN,
)
from rgkit.exprs import Cmp, Lit, Var
from rgkit.relations import StateSet, full_rel, identity_rel, true_set
from rgkit.semantics import Ctx, build_graph
from rgkit.values import IntType, Schema


def mk():
    schema = Schema([("x", IntType(0, 2), 0)])
    return schema, Ctx(AdapterContext(schema), IMP_ADAPTER)


def one_event(schema, label="e", body=None):
    return EsBasic(
        EventSet(
            (
                EventSpec(
                    label,
                    true_set(schema),
                    body if body is not None else Basic((("x", Lit(1)),)),
                ),
            )
        )
    )


def test_singleton_at_len_one():
    schema, ctx = mk()
    es = one_event(schema)
    s = schema.state(x=0)
    assert cpts_linear(ctx, es, s, identity_rel(schema), 1) == frozenset(
        {Computation(((es, s),), ())}
    )


def test_fin_with_identity_universe_stutters_only():
    schema, ctx = mk()
    s = schema.state(x=0)
    cs = cpts_linear(ctx, FIN, s, identity_rel(schema), 3)
    assert len(cs) == 3  # lengths 1..3, pure env stutter chains
    for c in cs:
        assert all(k == ("env",) for k in c.kinds)
        assert all(conf == (FIN, s) for conf in c.confs)


def test_one_event_count_hand_enumerated():
    # One event (e, true, x := 1) from x = 0 under the identity universe:
    # configurations B -> triggered -> finished.  At every prefix length
    # each computation extends by one env stutter plus one component step
    # while the component is live: 1 + 2 + 4 computations at max_len 3.
    schema, ctx = mk()
    es = one_event(schema)
    cs = cpts_linear(ctx, es, schema.state(x=0), identity_rel(schema), 3)
    assert len(cs) == 7


def test_lift_seq_cpt_wraps_every_spec():
    schema, ctx = mk()
    es = one_event(schema)
    s = schema.state(x=0)
    c = Computation(((es, s), (es, s)), (("env",),))
    lifted = lift_seq_cpt(c, FIN)
    assert all(isinstance(spec, EsSeq) and spec.b == FIN for spec, _ in lifted.confs)
    assert lifted.kinds == c.kinds
    # projecting the left component back recovers the original
    back = Computation(tuple((sp.a, st) for sp, st in lifted.confs), lifted.kinds)
    assert back == c


def corpus_systems(schema):
    from rgkit.adapters import PSeq
    from rgkit.events import EsAtomic

    e = one_event(schema)
    f = one_event(schema, label="f", body=Basic((("x", Lit(2)),)))
    twostep_body = PSeq(Basic((("x", Lit(1)),)), Basic((("x", Lit(2)),)))
    two = one_event(schema, label="g", body=twostep_body)
    atom = EsAtomic(EventSet((EventSpec("h", true_set(schema), twostep_body),)))
    xlt2 = StateSet(schema, Cmp("<", Var("x"), Lit(2)))
    return [
        e,
        two,
        atom,
        EsSeq(e, f),
        EsChoice(e, f),
        EsJoin(e, f),
        EsIter(xlt2, e),
        EsSeq(EsChoice(e, f), two),
        EsJoin(EsIter(xlt2, e), f),
    ]


def test_linear_equals_modular_on_systems():
    schema, ctx = mk()
    u = full_rel(schema)
    s = schema.state(x=0)
    for es in corpus_systems(schema):
        for ml in (1, 2, 4, 5):
            lin = cpts_linear(ctx, es, s, u, ml)
            mod = cpts_modular(ctx, es, s, u, ml)
            assert lin == mod, (es, ml)


def test_prefix_closure_and_monotone_lengths():
    schema, ctx = mk()
    u = full_rel(schema)
    s = schema.state(x=0)
    es = EsIter(StateSet(schema, Cmp("<", Var("x"), Lit(2))), one_event(schema))
    c4 = cpts_linear(ctx, es, s, u, 4)
    c5 = cpts_linear(ctx, es, s, u, 5)
    assert {c for c in c5 if len(c) <= 4} == c4
    for c in c5:
        for k in range(1, len(c)):
            assert Computation(c.confs[:k], c.kinds[: k - 1]) in c5


def test_every_graph_path_is_a_computation_and_back():
    schema, ctx = mk()
    es = one_event(schema)
    pre = StateSet(schema, Cmp("=", Var("x"), Lit(0)))
    rely = identity_rel(schema)
    g = build_graph(ctx, es, pre, rely)
    cs = cpts_linear(ctx, es, schema.state(x=0), rely, 4)
    edges = {(g.nodes[a], g.nodes[b]) for a, _, b in g.comp_edges}
    for c in cs:
        for i, kind in enumerate(c.kinds):
            if kind != ("env",):
                assert (c.confs[i], c.confs[i + 1]) in edges


@pytest.mark.parametrize("rule", MODULAR_RULES)
def test_disabling_any_rule_is_detected(rule):
    schema, ctx = mk()
    u = full_rel(schema)
    s = schema.state(x=0)
    found = False
    for es in corpus_systems(schema):
        lin = cpts_linear(ctx, es, s, u, 5)
        mod = cpts_modular(ctx, es, s, u, 5, disabled=frozenset([rule]))
        if lin != mod:
            found = True
            break
    assert found, f"disabling {rule} went unnoticed"


def test_equiv_verdict_and_witness():
    schema, ctx = mk()
    u = full_rel(schema)
    pre = StateSet(schema, Cmp("=", Var("x"), Lit(0)))
    es = EsSeq(one_event(schema), one_event(schema, label="f"))
    v = check_linear_modular_equiv(ctx, es, pre, u, 5)
    assert v.passed
    v2 = check_linear_modular_equiv(ctx, es, pre, u, 5, disabled=frozenset(["CptsMSeqFin"]))
    assert v2.failed and v2.clause == "linear-only"


def test_computation_replay():
    schema, ctx = mk()
    es = one_event(schema)
    s = schema.state(x=0)
    for c in cpts_linear(ctx, es, s, identity_rel(schema), 3):
        good, why = computation_valid(ctx, c)
        assert good, why
    # a corrupted computation does not replay
    bad = Computation(((es, s), (FIN, s)), (("env",),))
    good, why = computation_valid(ctx, bad)
    assert not good


def test_dump_computations_deterministic():
    from rgkit.computations import dump_computations

    schema, ctx = mk()
    es = one_event(schema)
    s = schema.state(x=0)
    cs = cpts_linear(ctx, es, s, identity_rel(schema), 3)
    d1 = dump_computations(ctx, cs)
    d2 = dump_computations(ctx, set(cs))
    assert d1 == d2 and len(d1) == len(cs)
