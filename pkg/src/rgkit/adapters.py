"""Program-language adapters behind the rely-guarantee interface.

An adapter supplies the terminal program, a finitely-branching step
function, model-file hooks, and (optionally) a native proof-rule checker.
Two assumptions are imposed on every adapter and tested exhaustively by
`conformance_suite`:

    A1: the terminal program takes no step;
    A2: a step always changes the program component.

Two reference adapters live here: an IMP-style structured language and a
relation-style explicit transition system, which exists to demonstrate the
interface is language-agnostic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, fields
from typing import Any, Callable, Iterable

from .exprs import Expr, render_expr, substitute
from .relations import RGSpec, StateSet, compile_assigns, check_assigns, solve_states
from .values import DomainOverflow, LoadError, Schema
from .verdicts import Verdict, diag, fail, ok


class AwaitDivergence(Exception):
    """A cycle exists in an await/atomic body's configuration graph."""

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"await-divergence in {where}")


@dataclass(frozen=True)
class AdapterContext:
    """Static configuration for programs; immutable during checking."""

    schema: Schema
    extras: tuple = ()


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


# ----------------------------------------------------------------------
# IMP programs.  The terminal program is None.
# ----------------------------------------------------------------------


@_node
class Basic:
    assigns: tuple  # ((var, Expr), ...) simultaneous, pre-state semantics


@_node
class PSeq:
    a: "ImpProgram"
    b: "ImpProgram"


@_node
class Cond:
    cond: StateSet
    then: "ImpProgram"
    other: "ImpProgram"


@_node
class While:
    cond: StateSet
    body: "ImpProgram"


@_node
class Await:
    cond: StateSet
    body: "ImpProgram"


ImpProgram = Basic | PSeq | Cond | While | Await

SKIP = Basic(())


def check_program(schema: Schema, p: ImpProgram | None, in_await: bool = False) -> None:
    if p is None:
        return
    if isinstance(p, Basic):
        check_assigns(schema, p.assigns)
    elif isinstance(p, PSeq):
        check_program(schema, p.a, in_await)
        check_program(schema, p.b, in_await)
    elif isinstance(p, (Cond, While)):
        check_program(schema, p.then if isinstance(p, Cond) else p.body, in_await)
        if isinstance(p, Cond):
            check_program(schema, p.other, in_await)
    elif isinstance(p, Await):
        if in_await:
            raise LoadError("nested AWAIT is not allowed")
        check_program(schema, p.body, True)
    else:
        raise LoadError(f"not an IMP program: {p!r}")


def _basic_apply(schema: Schema, p: Basic) -> Callable[[tuple], tuple]:
    try:
        return object.__getattribute__(p, "_apply")
    except AttributeError:
        fn = compile_assigns(schema, p.assigns)
        object.__setattr__(p, "_apply", fn)
        return fn


def imp_step(ctx: AdapterContext, p: ImpProgram, s: tuple) -> list[tuple[Any, tuple]]:
    """One small step.  Cond/While steps never change the state; Await runs
    its body to completion in a single step or blocks."""
    schema = ctx.schema
    if p is None:
        return []
    if isinstance(p, Basic):
        return [(None, _basic_apply(schema, p)(s))]
    if isinstance(p, PSeq):
        out = []
        for q, t in imp_step(ctx, p.a, s):
            out.append((p.b if q is None else PSeq(q, p.b), t))
        return out
    if isinstance(p, Cond):
        return [(p.then if p.cond.holds(s) else p.other, s)]
    if isinstance(p, While):
        if p.cond.holds(s):
            return [(PSeq(p.body, p), s)]
        return [(None, s)]
    if isinstance(p, Await):
        if not p.cond.holds(s):
            return []
        outs = terminal_states(ctx, imp_step, p.body, s, where="AWAIT body")
        return [(None, t) for t in outs]
    raise LoadError(f"not an IMP program: {p!r}")


def terminal_states(ctx, step, p, s, where: str) -> list[tuple]:
    """All t with (terminal, t) reachable from (p, s) by the step closure.

    Detects cycles in the body's configuration graph and reports them as
    divergence (bodies are assumed to terminate)."""
    start = (p, s)
    seen = {start}
    order: list[tuple] = []
    queue: deque = deque([start])
    edges: dict = {}
    while queue:
        conf = queue.popleft()
        if conf[0] is None and conf[1] not in order:
            order.append(conf[1])
        succs = step(ctx, conf[0], conf[1]) if conf[0] is not None else []
        edges[conf] = succs
        for q, t in succs:
            nxt = (q, t)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    # cycle detection over the explored finite graph
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {c: WHITE for c in edges}
    for root in edges:
        if colour[root] != WHITE:
            continue
        dfs = [(root, iter(edges[root]))]
        colour[root] = GREY
        while dfs:
            node, it = dfs[-1]
            advanced = False
            for q, t in it:
                nxt = (q, t)
                if nxt not in edges:
                    continue
                if colour[nxt] == GREY:
                    raise AwaitDivergence(where)
                if colour[nxt] == WHITE:
                    colour[nxt] = GREY
                    dfs.append((nxt, iter(edges[nxt])))
                    advanced = True
                    break
            if not advanced:
                colour[node] = BLACK
                dfs.pop()
    return order


def _render_cond(c) -> str:
    # Guards are StateSets after loading, raw expressions inside templates.
    if isinstance(c, StateSet):
        return c.render()
    return render_expr(c)


def _is_true_cond(c) -> bool:
    from .exprs import Lit

    e = c.expr if isinstance(c, StateSet) else c
    return e == Lit(True)


def render_program(p) -> str:
    if p is None:
        return "BOT"
    if isinstance(p, Basic):
        if not p.assigns:
            return "SKIP"
        if len(p.assigns) == 1:
            v, e = p.assigns[0]
            return f"{v} := {render_expr(e)}"
        vs = ", ".join(v for v, _ in p.assigns)
        es = ", ".join(render_expr(e) for _, e in p.assigns)
        return f"({vs}) := ({es})"
    if isinstance(p, PSeq):
        return f"{render_program(p.a)} ;; {render_program(p.b)}"
    if isinstance(p, Cond):
        return (
            f"IF {_render_cond(p.cond)} THEN {render_program(p.then)} "
            f"ELSE {render_program(p.other)} FI"
        )
    if isinstance(p, While):
        return f"WHILE {_render_cond(p.cond)} DO {render_program(p.body)} OD"
    if isinstance(p, Await):
        if _is_true_cond(p.cond):
            return f"ATOM {render_program(p.body)} END"
        return f"AWAIT {_render_cond(p.cond)} THEN {render_program(p.body)} END"
    if isinstance(p, RelAt):
        return f"REL<{p.machine.name}@{p.loc}>"
    raise AssertionError(p)


def subst_program(p, env: dict[str, Expr]):
    """Parameter substitution through a program tree (event expansion)."""
    if p is None:
        return None
    if isinstance(p, Basic):
        return Basic(tuple((v, substitute(e, env)) for v, e in p.assigns))
    if isinstance(p, PSeq):
        return PSeq(subst_program(p.a, env), subst_program(p.b, env))
    if isinstance(p, Cond):
        return Cond(
            _subst_cond(p.cond, env), subst_program(p.then, env), subst_program(p.other, env)
        )
    if isinstance(p, While):
        return While(_subst_cond(p.cond, env), subst_program(p.body, env))
    if isinstance(p, Await):
        return Await(_subst_cond(p.cond, env), subst_program(p.body, env))
    if isinstance(p, RelAt):
        return p
    raise LoadError(f"cannot substitute in {p!r}")


def _subst_cond(c, env):
    if isinstance(c, StateSet):
        if c.expr is None:
            return c
        return StateSet(c.schema, substitute(c.expr, env))
    return substitute(c, env)


# ----------------------------------------------------------------------
# Relation-style programs: explicit finite labelled transition systems.
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RelMachine:
    name: str
    edges: tuple  # ((src, guard: StateSet, assigns, dst), ...)
    terminal_loc: str

    def outgoing(self, loc: str):
        return [e for e in self.edges if e[0] == loc]


def make_rel_machine(
    schema: Schema,
    name: str,
    edges: Iterable[tuple[str, StateSet, tuple, str]],
    terminal_loc: str,
    allow_self_loops: bool = False,
) -> RelMachine:
    edges = tuple(edges)
    for src, guard, assigns, dst in edges:
        check_assigns(schema, assigns)
        if src == dst and not allow_self_loops:
            raise LoadError(f"self-loop edge at location {src!r} violates A2")
        if src == terminal_loc:
            raise LoadError("edges out of the terminal location violate A1")
    return RelMachine(name, edges, terminal_loc)


@_node
class RelAt:
    machine: RelMachine
    loc: str


def rel_step(ctx: AdapterContext, p, s: tuple) -> list[tuple[Any, tuple]]:
    if p is None:
        return []
    assert isinstance(p, RelAt)
    out = []
    for src, guard, assigns, dst in p.machine.outgoing(p.loc):
        if guard.holds(s):
            t = compile_assigns(ctx.schema, assigns)(s)
            q = None if dst == p.machine.terminal_loc else RelAt(p.machine, dst)
            out.append((q, t))
    return out


# ----------------------------------------------------------------------
# The adapter contract and the two reference adapters.
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ProgramAdapter:
    name: str
    step: Callable[[AdapterContext, Any, tuple], list]
    samples: Callable[[AdapterContext], list[tuple[Any, tuple]]]
    terminal: Any = None
    prove_hook: Callable | None = None  # optional native proof-rule checker


def _imp_samples(ctx: AdapterContext) -> list[tuple[Any, tuple]]:
    from .exprs import Cmp, Lit, Var

    schema = ctx.schema
    s0 = schema.initial_state()
    progs: list[ImpProgram] = []
    if schema.names:
        v = schema.names[0]
        t = schema.types[0]
        from .values import IntType, BoolType as BT

        if isinstance(t, IntType):
            cond = StateSet(schema, Cmp("<", Var(v), Lit(t.hi)))
            inc = Basic(((v, Lit(t.lo)),))
            progs += [
                inc,
                PSeq(inc, inc),
                Cond(cond, inc, SKIP),
                While(cond, Basic(((v, Lit(t.hi)),))),
                Await(cond, inc),
            ]
        elif isinstance(t, BT):
            cond = StateSet(schema, Var(v))
            progs += [Basic(((v, Lit(False)),)), Cond(cond, SKIP, SKIP)]
    progs.append(SKIP)
    return [(p, s0) for p in progs]


def _rel_samples(ctx: AdapterContext) -> list[tuple[Any, tuple]]:
    from .relations import true_set

    schema = ctx.schema
    m = make_rel_machine(
        schema,
        "sample",
        [("a", true_set(schema), (), "b"), ("b", true_set(schema), (), "end")],
        "end",
    )
    return [(RelAt(m, "a"), schema.initial_state()), (RelAt(m, "b"), schema.initial_state())]


IMP_ADAPTER = ProgramAdapter("imp", imp_step, _imp_samples)
REL_ADAPTER = ProgramAdapter("rel", rel_step, _rel_samples)

ADAPTERS = {"imp": IMP_ADAPTER, "rel": REL_ADAPTER}


@dataclass
class ConformanceEntry:
    assumption: str  # "A1" | "A2"
    passed: bool
    witness: Any = None


@dataclass
class ConformanceReport:
    adapter: str
    entries: list[ConformanceEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def violations(self) -> list[ConformanceEntry]:
        return [e for e in self.entries if not e.passed]


def conformance_suite(
    adapter: ProgramAdapter,
    ctx: AdapterContext,
    samples: list[tuple[Any, tuple]] | None = None,
) -> ConformanceReport:
    """Exhaustively test A1 and A2 over the sample programs and states.
    Violations are report entries with witnesses, not suite failures."""
    samples = list(samples) if samples is not None else adapter.samples(ctx)
    entries: list[ConformanceEntry] = []
    states: list[tuple] = []
    for _, s in samples:
        if s not in states:
            states.append(s)
    for s in states:
        succs = adapter.step(ctx, adapter.terminal, s)
        entries.append(
            ConformanceEntry("A1", not succs, witness=(s, succs) if succs else None)
        )
    for p, s in samples:
        for q, t in adapter.step(ctx, p, s):
            if q == p:
                entries.append(ConformanceEntry("A2", False, witness=(p, s, t)))
                break
        else:
            entries.append(ConformanceEntry("A2", True))
    return ConformanceReport(adapter.name, entries)


# ----------------------------------------------------------------------
# Program-level rely-guarantee validity: exact reachability over the
# program's configuration graph under the constructive rely.
# ----------------------------------------------------------------------


def prog_validity(
    ctx: AdapterContext,
    adapter: ProgramAdapter,
    p: Any,
    spec: RGSpec,
    init_states: list[tuple] | None = None,
    budget: int = 1_000_000,
    init_mode: str = "default",
) -> Verdict:
    """PASS iff every computation of `p` from pre under rely satisfies
    commit(guar, post).  Exact on finite instances; FAIL carries a minimal
    counterexample trace."""
    check = "prog-validity"
    try:
        if init_states is None:
            init_states = solve_states(spec.pre, mode=init_mode)
    except DomainOverflow as d:
        return diag(check, "state-explosion", detail={"cause": str(d)})

    parents: dict = {}
    node_kind: dict = {}
    seen: set = set()
    work: deque = deque()
    for s in init_states:
        c = (p, s)
        if c not in seen:
            seen.add(c)
            parents[c] = None
            work.append(c)

    def trace_to(conf) -> list:
        path = []
        cur = conf
        while cur is not None:
            path.append((cur, node_kind.get(cur)))
            cur = parents[cur]
        path.reverse()
        return [
            {"program": render_program(c[0]), "state": ctx.schema.state_to_dict(c[1]), "via": via}
            for c, via in path
        ]

    try:
        while work:
            prog, s = work.popleft()
            if len(seen) > budget:
                return diag(check, "state-explosion", detail={"nodes": len(seen)})
            if prog is None and not spec.post.holds(s):
                return fail(
                    check,
                    "post-violation",
                    witness={"trace": trace_to((prog, s)), "final_state": ctx.schema.state_to_dict(s)},
                    node_count=len(seen),
                )
            if prog is not None:
                for q, t in adapter.step(ctx, prog, s):
                    if not spec.guar.contains(s, t):
                        w = trace_to((prog, s))
                        w.append({"program": render_program(q), "state": ctx.schema.state_to_dict(t), "via": "comp"})
                        return fail(
                            check,
                            "guar-violation",
                            witness={"trace": w, "pair": [ctx.schema.state_to_dict(s), ctx.schema.state_to_dict(t)]},
                            node_count=len(seen),
                        )
                    c = (q, t)
                    if c not in seen:
                        seen.add(c)
                        parents[c] = (prog, s)
                        node_kind[c] = "comp"
                        work.append(c)
            for t in spec.rely.successors(s):
                c = (prog, t)
                if c not in seen:
                    seen.add(c)
                    parents[c] = (prog, s)
                    node_kind[c] = "env"
                    work.append(c)
    except AwaitDivergence as d:
        return diag(check, "await-divergence", detail={"where": d.where})
    except DomainOverflow as d:
        return diag(check, "domain-overflow", detail={"assignment": f"{d.var} <- {d.value!r}"})
    return ok(check, node_count=len(seen))
