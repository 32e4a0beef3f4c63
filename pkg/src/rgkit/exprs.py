"""Expression trees over schema states: guards, assertions, updates.

Evaluation in a type-correct state is total and deterministic; everything
that can go wrong is rejected at load time by `check_expr`.  Partial
operations are totalised with conventional theorem-prover defaults
(x div 0 = 0, HEAD [] = element default, THE NONE = inner default) so that
checking never panics at runtime.

Two evaluators are provided: `eval_expr` is the plain recursive
interpreter, and `compile_expr` builds nested closures used by the state
exploration engines.  They agree everywhere (property-tested).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Callable

from .values import (
    BoolType,
    IntType,
    LoadError,
    OptType,
    RecType,
    Schema,
    SeqType,
    SymType,
    Type,
    default_value,
)

Pos = tuple[int, int] | None


def _node(cls):
    cls = dataclass(frozen=True)(cls)
    names = [f.name for f in fields(cls)]

    def __hash__(self):
        try:
            return object.__getattribute__(self, "_h")
        except AttributeError:
            h = hash((cls.__name__,) + tuple(getattr(self, n) for n in names))
            object.__setattr__(self, "_h", h)
            return h

    cls.__hash__ = __hash__
    return cls


@_node
class Lit:
    value: Any
    vtype: Any = None  # explicit type for structured literals (expansion)


@_node
class Var:
    name: str


@_node
class Field:
    rec: "Expr"
    name: str


@_node
class FieldDyn:
    rec: "Expr"
    key: "Expr"


@_node
class Index:
    seq: "Expr"
    idx: "Expr"


@_node
class Len:
    seq: "Expr"


@_node
class AppendE:
    seq: "Expr"
    elem: "Expr"


@_node
class UpdateE:
    seq: "Expr"
    idx: "Expr"
    val: "Expr"


@_node
class RemoveE:
    seq: "Expr"
    elem: "Expr"


@_node
class HeadE:
    seq: "Expr"


@_node
class TailE:
    seq: "Expr"


@_node
class ContainsE:
    seq: "Expr"
    elem: "Expr"


@_node
class RecWith:
    rec: "Expr"
    name: str
    val: "Expr"


@_node
class RecWithDyn:
    rec: "Expr"
    key: "Expr"
    val: "Expr"


@_node
class MkSeq:
    items: tuple


@_node
class MkRec:
    items: tuple  # ((field, Expr), ...)


@_node
class MkSome:
    inner: "Expr"


@_node
class NoneLit:
    pass


@_node
class IsSome:
    opt: "Expr"


@_node
class TheOpt:
    opt: "Expr"


@_node
class Arith:
    op: str  # + - * DIV MOD ^
    a: "Expr"
    b: "Expr"


@_node
class Neg:
    a: "Expr"


@_node
class Cmp:
    op: str  # = != < <= > >=
    a: "Expr"
    b: "Expr"


@_node
class BoolOp:
    op: str  # AND OR IMPLIES
    a: "Expr"
    b: "Expr"


@_node
class NotE:
    a: "Expr"


@_node
class CondE:
    cond: "Expr"
    then: "Expr"
    other: "Expr"


@_node
class ForallLt:
    var: str
    bound: "Expr"  # var ranges over [0, bound)
    body: "Expr"


@_node
class ExistsLt:
    var: str
    bound: "Expr"
    body: "Expr"


Expr = (
    Lit | Var | Field | FieldDyn | Index | Len | AppendE | UpdateE | RemoveE
    | HeadE | TailE | ContainsE | RecWith | RecWithDyn | MkSeq | MkRec
    | MkSome | NoneLit | IsSome | TheOpt | Arith | Neg | Cmp | BoolOp | NotE
    | CondE | ForallLt | ExistsLt
)

BOOL = BoolType()
# Unbounded intermediate integer results; bounds apply on state assignment.
ANYINT = IntType(-(2**62), 2**62)


def _is_int(t: Type) -> bool:
    return isinstance(t, IntType)


def _compat(a: Type, b: Type) -> bool:
    """Structural compatibility for equality and merging (ints ignore bounds)."""
    if isinstance(a, IntType) and isinstance(b, IntType):
        return True
    if isinstance(a, SymType) and isinstance(b, SymType):
        return bool(set(a.values) & set(b.values)) or not a.values or not b.values
    if isinstance(a, SeqType) and isinstance(b, SeqType):
        return _compat(a.elem, b.elem)
    if isinstance(a, RecType) and isinstance(b, RecType):
        return tuple(f for f, _ in a.fields) == tuple(f for f, _ in b.fields) and all(
            _compat(x, y) for (_, x), (_, y) in zip(a.fields, b.fields)
        )
    if isinstance(a, OptType) and isinstance(b, OptType):
        return _compat(a.inner, b.inner)
    return type(a) is type(b)


def check_expr(
    e: Expr,
    schema: Schema,
    expected: Type | None = None,
    binds: dict[str, Type] | None = None,
    pos: Pos = None,
) -> Type:
    """Type-check `e`, returning its type.  Raises LoadError on any misuse."""
    binds = binds or {}

    def err(msg: str) -> LoadError:
        return LoadError(msg, pos)

    def chk(e: Expr, expected: Type | None = None) -> Type:
        t = _infer(e, expected)
        if expected is not None and not _compat(t, expected):
            raise err(f"expected {expected}, got {t} in {render_expr(e)}")
        return t

    def _infer(e: Expr, expected: Type | None) -> Type:
        if isinstance(e, Lit):
            v = e.value
            if e.vtype is not None:
                from .values import conforms

                if not conforms(v, e.vtype):
                    raise err(f"literal {v!r} does not conform to {e.vtype}")
                return e.vtype
            if isinstance(v, bool):
                return BOOL
            if isinstance(v, int):
                return ANYINT
            if isinstance(v, str):
                if expected is not None and isinstance(expected, SymType):
                    if v not in expected.values:
                        raise err(f"symbol {v!r} not in {expected}")
                    return expected
                return SymType((v,))
            raise err(f"unsupported literal {v!r}")
        if isinstance(e, Var):
            if e.name in binds:
                return binds[e.name]
            return schema.var_type(e.name)
        if isinstance(e, Field):
            rt = chk(e.rec)
            if not isinstance(rt, RecType):
                raise err(f"field access on non-record: {render_expr(e)}")
            return rt.field_type(e.name)
        if isinstance(e, FieldDyn):
            rt = chk(e.rec)
            if not isinstance(rt, RecType) or not rt.fields:
                raise err(f"dynamic field access on non-record: {render_expr(e)}")
            ftypes = [t for _, t in rt.fields]
            if not all(_compat(ftypes[0], t) for t in ftypes):
                raise err("dynamic field access requires uniform field types")
            chk(e.key, SymType(tuple(f for f, _ in rt.fields)))
            return ftypes[0]
        if isinstance(e, Index):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err(f"indexing a non-sequence: {render_expr(e)}")
            chk(e.idx, ANYINT)
            return st.elem
        if isinstance(e, Len):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("LEN of a non-sequence")
            return ANYINT
        if isinstance(e, AppendE):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("APPEND to a non-sequence")
            chk(e.elem, st.elem)
            return st
        if isinstance(e, UpdateE):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("UPDATE of a non-sequence")
            chk(e.idx, ANYINT)
            chk(e.val, st.elem)
            return st
        if isinstance(e, RemoveE):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("REMOVE from a non-sequence")
            chk(e.elem, st.elem)
            return st
        if isinstance(e, HeadE):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("HEAD of a non-sequence")
            return st.elem
        if isinstance(e, TailE):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("TAIL of a non-sequence")
            return st
        if isinstance(e, ContainsE):
            st = chk(e.seq)
            if not isinstance(st, SeqType):
                raise err("IN on a non-sequence")
            chk(e.elem, st.elem)
            return BOOL
        if isinstance(e, RecWith):
            rt = chk(e.rec)
            if not isinstance(rt, RecType):
                raise err("record update of a non-record")
            chk(e.val, rt.field_type(e.name))
            return rt
        if isinstance(e, RecWithDyn):
            rt = chk(e.rec)
            if not isinstance(rt, RecType) or not rt.fields:
                raise err("record update of a non-record")
            ftypes = [t for _, t in rt.fields]
            if not all(_compat(ftypes[0], t) for t in ftypes):
                raise err("dynamic record update requires uniform field types")
            chk(e.key, SymType(tuple(f for f, _ in rt.fields)))
            chk(e.val, ftypes[0])
            return rt
        if isinstance(e, MkSeq):
            if expected is not None and isinstance(expected, SeqType):
                for it in e.items:
                    chk(it, expected.elem)
                return expected
            if not e.items:
                raise err("cannot infer the type of an empty sequence literal here")
            t0 = chk(e.items[0])
            for it in e.items[1:]:
                chk(it, t0)
            return SeqType(t0, max(len(e.items), 1))
        if isinstance(e, MkRec):
            if expected is not None and isinstance(expected, RecType):
                declared = dict(expected.fields)
                given = [f for f, _ in e.items]
                if given != [f for f, _ in expected.fields]:
                    raise err(
                        f"record literal fields {given} do not match {list(declared)}"
                    )
                for f, ex in e.items:
                    chk(ex, declared[f])
                return expected
            return RecType(tuple((f, chk(ex)) for f, ex in e.items))
        if isinstance(e, MkSome):
            if expected is not None and isinstance(expected, OptType):
                chk(e.inner, expected.inner)
                return expected
            return OptType(chk(e.inner))
        if isinstance(e, NoneLit):
            if expected is not None and isinstance(expected, OptType):
                return expected
            return OptType(ANYINT)
        if isinstance(e, IsSome):
            t = chk(e.opt)
            if not isinstance(t, OptType):
                raise err("ISSOME of a non-optional")
            return BOOL
        if isinstance(e, TheOpt):
            t = chk(e.opt)
            if not isinstance(t, OptType):
                raise err("THE of a non-optional")
            return t.inner
        if isinstance(e, Arith):
            chk(e.a, ANYINT)
            chk(e.b, ANYINT)
            return ANYINT
        if isinstance(e, Neg):
            chk(e.a, ANYINT)
            return ANYINT
        if isinstance(e, Cmp):
            if e.op in ("<", "<=", ">", ">="):
                chk(e.a, ANYINT)
                chk(e.b, ANYINT)
                return BOOL
            ta = chk(e.a)
            chk(e.b, ta)
            return BOOL
        if isinstance(e, BoolOp):
            chk(e.a, BOOL)
            chk(e.b, BOOL)
            return BOOL
        if isinstance(e, NotE):
            chk(e.a, BOOL)
            return BOOL
        if isinstance(e, CondE):
            chk(e.cond, BOOL)
            tt = chk(e.then, expected)
            chk(e.other, tt if expected is None else expected)
            return tt
        if isinstance(e, (ForallLt, ExistsLt)):
            chk(e.bound, ANYINT)
            inner = dict(binds)
            inner[e.var] = ANYINT
            check_expr(e.body, schema, BOOL, inner, pos)
            return BOOL
        raise err(f"unknown expression node {e!r}")

    return chk(e, expected)


def free_vars(e: Expr, bound: frozenset[str] = frozenset()) -> set[str]:
    if isinstance(e, Var):
        return set() if e.name in bound else {e.name}
    if isinstance(e, (Lit, NoneLit)):
        return set()
    if isinstance(e, (ForallLt, ExistsLt)):
        return free_vars(e.bound, bound) | free_vars(e.body, bound | {e.var})
    out: set[str] = set()
    for f in fields(e):
        v = getattr(e, f.name)
        if isinstance(v, tuple):
            for item in v:
                sub = item[1] if isinstance(item, tuple) else item
                if _is_expr(sub):
                    out |= free_vars(sub, bound)
        elif _is_expr(v):
            out |= free_vars(v, bound)
    return out


def _is_expr(v: Any) -> bool:
    return hasattr(v, "__dataclass_fields__") and not isinstance(v, Schema)


def substitute(e: Expr, env: dict[str, Expr]) -> Expr:
    """Capture-free substitution of variables by expressions (parameter
    expansion; bound quantifier variables shadow)."""
    if isinstance(e, Var):
        return env.get(e.name, e)
    if isinstance(e, (Lit, NoneLit)):
        return e
    if isinstance(e, (ForallLt, ExistsLt)):
        inner = {k: v for k, v in env.items() if k != e.var}
        return type(e)(e.var, substitute(e.bound, env), substitute(e.body, inner))
    kw = {}
    for f in fields(e):
        v = getattr(e, f.name)
        if isinstance(v, tuple) and v and isinstance(v[0], tuple):
            kw[f.name] = tuple((k, substitute(x, env)) for k, x in v)
        elif isinstance(v, tuple) and all(_is_expr(x) for x in v):
            kw[f.name] = tuple(substitute(x, env) for x in v)
        elif _is_expr(v):
            kw[f.name] = substitute(v, env)
        else:
            kw[f.name] = v
    return type(e)(**kw)


def _div(a: int, b: int) -> int:
    if b == 0:
        return 0
    q = a // b
    # match truncation-towards-zero on mixed signs is not needed; domains
    # keep operands non-negative, but keep floor semantics deterministic.
    return q


def _mod(a: int, b: int) -> int:
    if b == 0:
        return a
    return a % b


def eval_expr(e: Expr, schema: Schema, s: tuple, binds: dict[str, Any] | None = None) -> Any:
    """Reference interpreter; pure and total on type-checked input."""
    binds = binds or {}

    def ev(e: Expr) -> Any:
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Var):
            if e.name in binds:
                return binds[e.name]
            return s[schema.index[e.name]]
        if isinstance(e, Field):
            rt = _rec_type_of(e.rec, schema, binds)
            return ev(e.rec)[rt.field_index(e.name)]
        if isinstance(e, FieldDyn):
            rt = _rec_type_of(e.rec, schema, binds)
            return ev(e.rec)[rt.field_index(ev(e.key))]
        if isinstance(e, Index):
            seq, i = ev(e.seq), ev(e.idx)
            if 0 <= i < len(seq):
                return seq[i]
            return _elem_default(e.seq, schema, binds)
        if isinstance(e, Len):
            return len(ev(e.seq))
        if isinstance(e, AppendE):
            return ev(e.seq) + (ev(e.elem),)
        if isinstance(e, UpdateE):
            seq, i, v = ev(e.seq), ev(e.idx), ev(e.val)
            if 0 <= i < len(seq):
                return seq[:i] + (v,) + seq[i + 1 :]
            return seq
        if isinstance(e, RemoveE):
            seq, v = ev(e.seq), ev(e.elem)
            for i, x in enumerate(seq):
                if x == v:
                    return seq[:i] + seq[i + 1 :]
            return seq
        if isinstance(e, HeadE):
            seq = ev(e.seq)
            return seq[0] if seq else _elem_default(e.seq, schema, binds)
        if isinstance(e, TailE):
            return ev(e.seq)[1:]
        if isinstance(e, ContainsE):
            return ev(e.elem) in ev(e.seq)
        if isinstance(e, RecWith):
            rt = _rec_type_of(e.rec, schema, binds)
            r, i = ev(e.rec), rt.field_index(e.name)
            return r[:i] + (ev(e.val),) + r[i + 1 :]
        if isinstance(e, RecWithDyn):
            rt = _rec_type_of(e.rec, schema, binds)
            r, i = ev(e.rec), rt.field_index(ev(e.key))
            return r[:i] + (ev(e.val),) + r[i + 1 :]
        if isinstance(e, MkSeq):
            return tuple(ev(x) for x in e.items)
        if isinstance(e, MkRec):
            return tuple(ev(x) for _, x in e.items)
        if isinstance(e, MkSome):
            return (ev(e.inner),)
        if isinstance(e, NoneLit):
            return None
        if isinstance(e, IsSome):
            return ev(e.opt) is not None
        if isinstance(e, TheOpt):
            v = ev(e.opt)
            if v is not None:
                return v[0]
            t = _type_of(e.opt, schema, binds)
            return default_value(t.inner)
        if isinstance(e, Arith):
            a, b = ev(e.a), ev(e.b)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if e.op == "DIV":
                return _div(a, b)
            if e.op == "MOD":
                return _mod(a, b)
            if e.op == "^":
                return a ** max(b, 0)
            raise AssertionError(e.op)
        if isinstance(e, Neg):
            return -ev(e.a)
        if isinstance(e, Cmp):
            a, b = ev(e.a), ev(e.b)
            if e.op == "=":
                return a == b
            if e.op == "!=":
                return a != b
            if e.op == "<":
                return a < b
            if e.op == "<=":
                return a <= b
            if e.op == ">":
                return a > b
            if e.op == ">=":
                return a >= b
            raise AssertionError(e.op)
        if isinstance(e, BoolOp):
            if e.op == "AND":
                return ev(e.a) and ev(e.b)
            if e.op == "OR":
                return ev(e.a) or ev(e.b)
            if e.op == "IMPLIES":
                return (not ev(e.a)) or ev(e.b)
            raise AssertionError(e.op)
        if isinstance(e, NotE):
            return not ev(e.a)
        if isinstance(e, CondE):
            return ev(e.then) if ev(e.cond) else ev(e.other)
        if isinstance(e, (ForallLt, ExistsLt)):
            n = ev(e.bound)
            want_all = isinstance(e, ForallLt)
            for i in range(n):
                binds[e.var] = i
                r = eval_expr(e.body, schema, s, binds)
                if want_all and not r:
                    del binds[e.var]
                    return False
                if not want_all and r:
                    del binds[e.var]
                    return True
            binds.pop(e.var, None)
            return want_all
        raise AssertionError(f"unknown node {e!r}")

    return ev(e)


def _type_of(e: Expr, schema: Schema, binds: dict[str, Any]) -> Type:
    bind_types = {k: _value_type(v) for k, v in binds.items()}
    return check_expr(e, schema, None, bind_types)


def _value_type(v: Any) -> Type:
    if isinstance(v, bool):
        return BOOL
    if isinstance(v, int):
        return ANYINT
    if isinstance(v, str):
        return SymType((v,))
    raise LoadError(f"cannot type runtime binding {v!r}")


def _rec_type_of(e: Expr, schema: Schema, binds) -> RecType:
    t = _type_of(e, schema, binds)
    assert isinstance(t, RecType)
    return t


def _elem_default(seq_expr: Expr, schema: Schema, binds) -> Any:
    t = _type_of(seq_expr, schema, binds)
    assert isinstance(t, SeqType)
    return default_value(t.elem)


# ----------------------------------------------------------------------
# Compiler: Expr -> f(state, env) with bound variables in a depth-indexed
# list `env`.  Requires a prior check_expr pass (types are consulted).
# ----------------------------------------------------------------------

CompiledExpr = Callable[[tuple, list], Any]


def compile_expr(e: Expr, schema: Schema, binds: dict[str, tuple[int, Type]] | None = None) -> CompiledExpr:
    binds = binds or {}

    def types_env() -> dict[str, Type]:
        return {k: t for k, (_, t) in binds.items()}

    def typ(e: Expr) -> Type:
        return check_expr(e, schema, None, types_env())

    def comp(e: Expr) -> CompiledExpr:
        if isinstance(e, Lit):
            v = e.value
            return lambda s, env: v
        if isinstance(e, Var):
            if e.name in binds:
                d = binds[e.name][0]
                return lambda s, env: env[d]
            i = schema.index[e.name]
            return lambda s, env: s[i]
        if isinstance(e, Field):
            rt = typ(e.rec)
            assert isinstance(rt, RecType)
            i = rt.field_index(e.name)
            f = comp(e.rec)
            return lambda s, env: f(s, env)[i]
        if isinstance(e, FieldDyn):
            rt = typ(e.rec)
            assert isinstance(rt, RecType)
            idx = {name: i for i, (name, _) in enumerate(rt.fields)}
            f, k = comp(e.rec), comp(e.key)
            return lambda s, env: f(s, env)[idx[k(s, env)]]
        if isinstance(e, Index):
            st = typ(e.seq)
            assert isinstance(st, SeqType)
            dflt = default_value(st.elem)
            f, g = comp(e.seq), comp(e.idx)

            def _index(s, env, f=f, g=g, dflt=dflt):
                seq, i = f(s, env), g(s, env)
                return seq[i] if 0 <= i < len(seq) else dflt

            return _index
        if isinstance(e, Len):
            f = comp(e.seq)
            return lambda s, env: len(f(s, env))
        if isinstance(e, AppendE):
            f, g = comp(e.seq), comp(e.elem)
            return lambda s, env: f(s, env) + (g(s, env),)
        if isinstance(e, UpdateE):
            f, g, h = comp(e.seq), comp(e.idx), comp(e.val)

            def _upd(s, env, f=f, g=g, h=h):
                seq, i = f(s, env), g(s, env)
                if 0 <= i < len(seq):
                    return seq[:i] + (h(s, env),) + seq[i + 1 :]
                return seq

            return _upd
        if isinstance(e, RemoveE):
            f, g = comp(e.seq), comp(e.elem)

            def _rm(s, env, f=f, g=g):
                seq, v = f(s, env), g(s, env)
                for i, x in enumerate(seq):
                    if x == v:
                        return seq[:i] + seq[i + 1 :]
                return seq

            return _rm
        if isinstance(e, HeadE):
            st = typ(e.seq)
            assert isinstance(st, SeqType)
            dflt = default_value(st.elem)
            f = comp(e.seq)

            def _head(s, env, f=f, dflt=dflt):
                seq = f(s, env)
                return seq[0] if seq else dflt

            return _head
        if isinstance(e, TailE):
            f = comp(e.seq)
            return lambda s, env: f(s, env)[1:]
        if isinstance(e, ContainsE):
            f, g = comp(e.seq), comp(e.elem)
            return lambda s, env: g(s, env) in f(s, env)
        if isinstance(e, RecWith):
            rt = typ(e.rec)
            assert isinstance(rt, RecType)
            i = rt.field_index(e.name)
            f, g = comp(e.rec), comp(e.val)

            def _rw(s, env, f=f, g=g, i=i):
                r = f(s, env)
                return r[:i] + (g(s, env),) + r[i + 1 :]

            return _rw
        if isinstance(e, RecWithDyn):
            rt = typ(e.rec)
            assert isinstance(rt, RecType)
            idx = {name: i for i, (name, _) in enumerate(rt.fields)}
            f, k, g = comp(e.rec), comp(e.key), comp(e.val)

            def _rwd(s, env, f=f, k=k, g=g, idx=idx):
                r = f(s, env)
                i = idx[k(s, env)]
                return r[:i] + (g(s, env),) + r[i + 1 :]

            return _rwd
        if isinstance(e, MkSeq):
            fs = [comp(x) for x in e.items]
            return lambda s, env: tuple(f(s, env) for f in fs)
        if isinstance(e, MkRec):
            fs = [comp(x) for _, x in e.items]
            return lambda s, env: tuple(f(s, env) for f in fs)
        if isinstance(e, MkSome):
            f = comp(e.inner)
            return lambda s, env: (f(s, env),)
        if isinstance(e, NoneLit):
            return lambda s, env: None
        if isinstance(e, IsSome):
            f = comp(e.opt)
            return lambda s, env: f(s, env) is not None
        if isinstance(e, TheOpt):
            t = typ(e.opt)
            assert isinstance(t, OptType)
            dflt = default_value(t.inner)
            f = comp(e.opt)

            def _the(s, env, f=f, dflt=dflt):
                v = f(s, env)
                return v[0] if v is not None else dflt

            return _the
        if isinstance(e, Arith):
            f, g = comp(e.a), comp(e.b)
            op = e.op
            if op == "+":
                return lambda s, env: f(s, env) + g(s, env)
            if op == "-":
                return lambda s, env: f(s, env) - g(s, env)
            if op == "*":
                return lambda s, env: f(s, env) * g(s, env)
            if op == "DIV":
                return lambda s, env: _div(f(s, env), g(s, env))
            if op == "MOD":
                return lambda s, env: _mod(f(s, env), g(s, env))
            if op == "^":
                return lambda s, env: f(s, env) ** max(g(s, env), 0)
            raise AssertionError(op)
        if isinstance(e, Neg):
            f = comp(e.a)
            return lambda s, env: -f(s, env)
        if isinstance(e, Cmp):
            f, g = comp(e.a), comp(e.b)
            op = e.op
            if op == "=":
                return lambda s, env: f(s, env) == g(s, env)
            if op == "!=":
                return lambda s, env: f(s, env) != g(s, env)
            if op == "<":
                return lambda s, env: f(s, env) < g(s, env)
            if op == "<=":
                return lambda s, env: f(s, env) <= g(s, env)
            if op == ">":
                return lambda s, env: f(s, env) > g(s, env)
            if op == ">=":
                return lambda s, env: f(s, env) >= g(s, env)
            raise AssertionError(op)
        if isinstance(e, BoolOp):
            f, g = comp(e.a), comp(e.b)
            op = e.op
            if op == "AND":
                return lambda s, env: f(s, env) and g(s, env)
            if op == "OR":
                return lambda s, env: f(s, env) or g(s, env)
            if op == "IMPLIES":
                return lambda s, env: (not f(s, env)) or g(s, env)
            raise AssertionError(op)
        if isinstance(e, NotE):
            f = comp(e.a)
            return lambda s, env: not f(s, env)
        if isinstance(e, CondE):
            c, f, g = comp(e.cond), comp(e.then), comp(e.other)
            return lambda s, env: f(s, env) if c(s, env) else g(s, env)
        if isinstance(e, (ForallLt, ExistsLt)):
            depth = len(binds)
            inner_binds = dict(binds)
            inner_binds[e.var] = (depth, ANYINT)
            bf = comp(e.bound)
            body = compile_expr(e.body, schema, inner_binds)
            want_all = isinstance(e, ForallLt)

            def _quant(s, env, bf=bf, body=body, want_all=want_all, depth=depth):
                n = bf(s, env)
                env = env + [None] * (depth + 1 - len(env))
                for i in range(n):
                    env[depth] = i
                    if body(s, env):
                        if not want_all:
                            return True
                    elif want_all:
                        return False
                return want_all

            return _quant
        raise AssertionError(f"unknown node {e!r}")

    return comp(e)


_PREC = {
    "IMPLIES": 1, "OR": 2, "AND": 3,
    "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4, "IN": 4,
    "+": 5, "-": 5, "*": 6, "DIV": 6, "MOD": 6, "^": 7,
}


def render_expr(e: Expr, prec: int = 0) -> str:
    """Concrete-syntax rendering; `parse(render(e)) == e` for parser output."""

    def wrap(s: str, p: int) -> str:
        return f"({s})" if p < prec else s

    if isinstance(e, Lit):
        v = e.value
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Field):
        return f"{render_expr(e.rec, 8)}.{e.name}"
    if isinstance(e, FieldDyn):
        return f"{render_expr(e.rec, 8)}.[{render_expr(e.key)}]"
    if isinstance(e, Index):
        return f"{render_expr(e.seq, 8)}[{render_expr(e.idx)}]"
    if isinstance(e, Len):
        return f"LEN({render_expr(e.seq)})"
    if isinstance(e, AppendE):
        return f"APPEND({render_expr(e.seq)}, {render_expr(e.elem)})"
    if isinstance(e, UpdateE):
        return f"UPDATE({render_expr(e.seq)}, {render_expr(e.idx)}, {render_expr(e.val)})"
    if isinstance(e, RemoveE):
        return f"REMOVE({render_expr(e.seq)}, {render_expr(e.elem)})"
    if isinstance(e, HeadE):
        return f"HEAD({render_expr(e.seq)})"
    if isinstance(e, TailE):
        return f"TAIL({render_expr(e.seq)})"
    if isinstance(e, ContainsE):
        return wrap(f"{render_expr(e.elem, 5)} IN {render_expr(e.seq, 5)}", 4)
    if isinstance(e, RecWith):
        return f"SETFIELD({render_expr(e.rec)}, {e.name}, {render_expr(e.val)})"
    if isinstance(e, RecWithDyn):
        return f"SETFIELDAT({render_expr(e.rec)}, {render_expr(e.key)}, {render_expr(e.val)})"
    if isinstance(e, MkSeq):
        return "[%s]" % ", ".join(render_expr(x) for x in e.items)
    if isinstance(e, MkRec):
        return "{%s}" % ", ".join(f"{f}: {render_expr(x)}" for f, x in e.items)
    if isinstance(e, MkSome):
        return f"SOME({render_expr(e.inner)})"
    if isinstance(e, NoneLit):
        return "NONE"
    if isinstance(e, IsSome):
        return f"ISSOME({render_expr(e.opt)})"
    if isinstance(e, TheOpt):
        return f"THE({render_expr(e.opt)})"
    if isinstance(e, Arith):
        p = _PREC[e.op]
        return wrap(f"{render_expr(e.a, p)} {e.op} {render_expr(e.b, p + 1)}", p)
    if isinstance(e, Neg):
        return wrap(f"-{render_expr(e.a, 8)}", 7)
    if isinstance(e, Cmp):
        return wrap(f"{render_expr(e.a, 5)} {e.op} {render_expr(e.b, 5)}", 4)
    if isinstance(e, BoolOp):
        p = _PREC[e.op]
        return wrap(f"{render_expr(e.a, p)} {e.op} {render_expr(e.b, p + 1)}", p)
    if isinstance(e, NotE):
        return wrap(f"NOT {render_expr(e.a, 4)}", 3)
    if isinstance(e, CondE):
        return f"COND({render_expr(e.cond)}, {render_expr(e.then)}, {render_expr(e.other)})"
    if isinstance(e, ForallLt):
        return wrap(f"ALL {e.var} < {render_expr(e.bound, 5)} : {render_expr(e.body, 1)}", 1)
    if isinstance(e, ExistsLt):
        return wrap(f"ANY {e.var} < {render_expr(e.bound, 5)} : {render_expr(e.body, 1)}", 1)
    raise AssertionError(f"unknown node {e!r}")


TRUE = Lit(True)
FALSE = Lit(False)
