import pytest
from hypothesis import given, strategies as st

from rgkit.exprs import (
    AppendE,
    Arith,
    BoolOp,
    Cmp,
    CondE,
    ExistsLt,
    Field,
    ForallLt,
    HeadE,
    Index,
    Len,
    Lit,
    MkRec,
    MkSeq,
    MkSome,
    NoneLit,
    NotE,
    RecWith,
    RecWithDyn,
    RemoveE,
    TailE,
    TheOpt,
    UpdateE,
    Var,
    check_expr,
    compile_expr,
    eval_expr,
    render_expr,
)
from rgkit.values import (
    BoolType,
    IntType,
    LoadError,
    OptType,
    RecType,
    Schema,
    SeqType,
    SymType,
)


def ev(e, schema, s):
    return eval_expr(e, schema, s)


def test_arithmetic_identities(xschema):
    s = xschema.initial_state()
    assert ev(Arith("+", Lit(1), Lit(1)), xschema, s) == 2
    assert ev(Arith("^", Lit(4), Lit(2)), xschema, s) == 16
    assert ev(Arith("DIV", Lit(7), Lit(2)), xschema, s) == 3
    assert ev(Arith("MOD", Lit(7), Lit(2)), xschema, s) == 1


def test_div_mod_by_zero_totalised(xschema):
    s = xschema.initial_state()
    assert ev(Arith("DIV", Lit(5), Lit(0)), xschema, s) == 0
    assert ev(Arith("MOD", Lit(5), Lit(0)), xschema, s) == 5


def test_forall_over_bits():
    schema = Schema(
        [("bits", SeqType(SymType(("FREE", "USED")), 3), ("FREE", "FREE", "FREE"))]
    )
    q = ForallLt("i", Lit(3), Cmp("=", Index(Var("bits"), Var("i")), Lit("FREE")))
    assert ev(q, schema, schema.initial_state()) is True
    s2 = schema.state(bits=("FREE", "USED", "FREE"))
    assert ev(q, schema, s2) is False
    assert ev(ExistsLt("i", Lit(3), Cmp("=", Index(Var("bits"), Var("i")), Lit("USED"))), schema, s2) is True


def test_sequence_ops(xschema):
    schema = Schema([("xs", SeqType(IntType(0, 9), 4), (1, 2, 3))])
    s = schema.initial_state()
    assert ev(Len(Var("xs")), schema, s) == 3
    assert ev(AppendE(Var("xs"), Lit(7)), schema, s) == (1, 2, 3, 7)
    assert ev(UpdateE(Var("xs"), Lit(1), Lit(9)), schema, s) == (1, 9, 3)
    assert ev(RemoveE(Var("xs"), Lit(2)), schema, s) == (1, 3)
    assert ev(RemoveE(Var("xs"), Lit(5)), schema, s) == (1, 2, 3)
    assert ev(HeadE(Var("xs")), schema, s) == 1
    assert ev(TailE(Var("xs")), schema, s) == (2, 3)
    # totalised partial operations
    empty = schema.state(xs=())
    assert ev(HeadE(Var("xs")), schema, empty) == 0
    assert ev(TailE(Var("xs")), schema, empty) == ()
    assert ev(Index(Var("xs"), Lit(5)), schema, s) == 0


def test_record_and_option():
    from rgkit.exprs import IsSome

    rec_t = RecType((("a", IntType(0, 5)), ("b", BoolType())))
    schema = Schema([("r", rec_t, (1, True)), ("o", OptType(IntType(0, 5)), None)])
    s = schema.initial_state()
    assert ev(Field(Var("r"), "a"), schema, s) == 1
    assert ev(RecWith(Var("r"), "a", Lit(4)), schema, s) == (4, True)
    assert ev(IsSome(Var("o")), schema, s) is False
    assert ev(TheOpt(Var("o")), schema, s) == 0  # totalised extraction
    s2 = schema.state(o=(3,))
    assert ev(TheOpt(Var("o")), schema, s2) == 3
    assert ev(MkSome(Lit(2)), schema, s) == (2,)
    assert ev(NoneLit(), schema, s) is None


def test_dynamic_record_access():
    rec_t = RecType((("t1", IntType(0, 5)), ("t2", IntType(0, 5))))
    schema = Schema([("m", rec_t, (1, 2)), ("k", SymType(("t1", "t2")), "t2")])
    s = schema.initial_state()
    from rgkit.exprs import FieldDyn

    assert ev(FieldDyn(Var("m"), Var("k")), schema, s) == 2
    assert ev(RecWithDyn(Var("m"), Var("k"), Lit(5)), schema, s) == (1, 5)


def test_typecheck_rejections(xschema):
    with pytest.raises(LoadError):
        check_expr(Arith("+", Lit(1), Lit(True)), xschema)
    with pytest.raises(LoadError):
        check_expr(Var("nope"), xschema)
    with pytest.raises(LoadError):
        check_expr(Len(Var("x")), xschema)
    with pytest.raises(LoadError):
        check_expr(BoolOp("AND", Lit(1), Lit(True)), xschema)


EXPRS = [
    Arith("+", Var("x"), Lit(1)),
    Arith("-", Arith("*", Var("x"), Lit(3)), Lit(1)),
    Arith("DIV", Var("x"), Lit(2)),
    Arith("^", Lit(2), Var("x")),
    Cmp("<", Var("x"), Lit(2)),
    BoolOp("AND", Var("flag"), Cmp("=", Var("x"), Lit(1))),
    BoolOp("IMPLIES", Var("flag"), Cmp(">", Var("x"), Lit(0))),
    NotE(Var("flag")),
    CondE(Var("flag"), Var("x"), Arith("+", Var("x"), Lit(1))),
    ForallLt("i", Var("x"), Cmp("<", Var("i"), Lit(3))),
    ExistsLt("i", Var("x"), Cmp("=", Var("i"), Lit(2))),
]


@given(x=st.integers(0, 3), flag=st.booleans())
def test_compiled_agrees_with_interpreter(x, flag):
    schema = Schema([("x", IntType(0, 3), 0), ("flag", BoolType(), False)])
    s = schema.state(x=x, flag=flag)
    for e in EXPRS:
        check_expr(e, schema)
        assert compile_expr(e, schema)(s, []) == eval_expr(e, schema, s)


@given(x=st.integers(0, 3), flag=st.booleans())
def test_eval_is_pure(x, flag):
    schema = Schema([("x", IntType(0, 3), 0), ("flag", BoolType(), False)])
    s = schema.state(x=x, flag=flag)
    for e in EXPRS:
        assert eval_expr(e, schema, s) == eval_expr(e, schema, s)


def test_render_parses_back(xschema):
    from rgkit.modelfile import Parser

    for e in EXPRS:
        text = render_expr(e)
        again = Parser(text).parse_expr()
        assert again == e, text
