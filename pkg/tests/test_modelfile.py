import pytest

from conftest import corpus_path
from rgkit.modelfile import Parser, load, parse_bpc, parse_pcm, serialize, serialize_bpel
from rgkit.values import LoadError

PCM_FILES = [
    "cpts_suite.pcm",
    "prove_suite.pcm",
    "broken_suite.pcm",
    "inv_suite.pcm",
    "loop_variant.pcm",
    "buddy_desk.pcm",
    "buddy_single.pcm",
]


def test_empty_model_is_valid():
    mf = parse_pcm("MODEL nothing")
    assert mf.name == "nothing" and not mf.sets and not mf.esystems


@pytest.mark.parametrize("name", PCM_FILES)
def test_corpus_roundtrip_byte_identical(name):
    mf = load(corpus_path(name))
    s1 = serialize(mf)
    s2 = serialize(parse_pcm(s1))
    assert s1 == s2


def test_bpc_roundtrip_byte_identical():
    bf = load(corpus_path("bpel_suite.bpc"))
    s1 = serialize_bpel(bf)
    s2 = serialize_bpel(parse_bpc(s1))
    assert s1 == s2
    assert len(bf.activities) == 12


def test_missing_end_positioned_error():
    text = """MODEL broken
SCHEMA
  x : INT 0..1 INIT 0
END
EVENT e WHEN true THEN x := 1
"""
    with pytest.raises(LoadError) as ei:
        parse_pcm(text)
    assert ei.value.pos is not None


def test_unresolved_name_is_load_error():
    text = """MODEL broken
SCHEMA
  x : INT 0..1 INIT 0
END
ESYS s := EVT nosuch
"""
    with pytest.raises(LoadError) as ei:
        parse_pcm(text)
    assert "nosuch" in str(ei.value)


def test_init_outside_domain_rejected():
    text = """MODEL broken
SCHEMA
  x : INT 0..1 INIT 7
END
"""
    with pytest.raises(LoadError):
        parse_pcm(text)


def test_type_error_rejected_at_load():
    text = """MODEL broken
SCHEMA
  x : INT 0..1 INIT 0
END
SET s := x + true
"""
    with pytest.raises(LoadError):
        parse_pcm(text)


def test_expression_precedence():
    p = Parser("1 + 2 * 3 ^ 2 = 19 AND NOT false")
    e = p.parse_expr()
    from rgkit.exprs import render_expr
    from rgkit.values import IntType, Schema

    schema = Schema([("x", IntType(0, 1), 0)])
    from rgkit.exprs import eval_expr

    assert eval_expr(e, schema, schema.initial_state()) is True
    # canonical render reparses to the same tree
    assert Parser(render_expr(e)).parse_expr() == e


def test_program_roundtrip():
    text = """MODEL progs
ADAPTER imp
SCHEMA
  x : INT 0..5 INIT 0
  y : INT 0..5 INIT 0
END
PROGRAM p := x := 1 ;; IF x = 1 THEN (x, y) := (2, 3) ELSE SKIP FI ;; WHILE x < 5 DO x := x + 1 OD ;; AWAIT y = 3 THEN y := 4 END ;; ATOM x := 0 END
"""
    mf = parse_pcm(text)
    s1 = serialize(mf)
    assert serialize(parse_pcm(s1)) == s1


def test_for_loop_desugars():
    text = """MODEL fors
ADAPTER imp
SCHEMA
  i : INT 0..5 INIT 0
  acc : INT 0..5 INIT 0
END
PROGRAM p := FOR i := 0; i < 3; i := i + 1 DO acc := acc + 1 ROF
"""
    mf = parse_pcm(text)
    from rgkit.adapters import PSeq, While

    p = mf.programs["p"]
    assert isinstance(p, PSeq) and isinstance(p.b, While)


def test_buddy_section_exposes_model():
    mf = load(corpus_path("buddy_desk.pcm"))
    assert mf.buddy is not None
    assert "kernel" in mf.pes
    assert {"inv", "quiescent", "no_partner_fragmentation", "free_list_valid"} <= set(mf.sets)
    assert "clock" in mf.rels and "guarantee_t1" in mf.rels


def test_event_missing_domain_value_type():
    text = """MODEL bad
ADAPTER imp
SCHEMA
  x : INT 0..1 INIT 0
END
EVENT e(v : INT 0..1 VALUES 7) WHEN true THEN x := v END
ESYS s := EVT e
"""
    with pytest.raises(LoadError):
        parse_pcm(text)
