"""Bounded enumeration of the two computation constructions.

A computation alternates component steps (labelled, from the small-step
semantics) and environment steps (state change only).  The raw definitions
admit arbitrary environment state changes, which is infinite even at
length 2 over non-trivial domains; enumeration is therefore parametrized
by a constructive `rely_universe` whose successor sets supply the
environment moves.  Taking the full declared domain product as the
universe recovers the unrestricted definitions exactly on tiny schemas.

The linear construction extends computations one transition at a time;
the modular construction recurses over the structure of the event system.
Both are enumerated to a length bound and compared; individual modular
rules can be disabled to demonstrate the comparison notices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .events import (
    EsAtomic,
    EsBasic,
    EsChoice,
    EsIter,
    EsJoin,
    EsSeq,
    EsTriggered,
    EventSystem,
    FIN,
    is_fin,
    render_system,
    tau,
)
from .adapters import AwaitDivergence, terminal_states
from .semantics import AtomDivergence, Ctx, step_es
from .relations import RelDesc, StateSet, solve_states
from .verdicts import Verdict, fail, ok

ENV = ("env",)


def comp_kind(label) -> tuple:
    return ("comp", label)


@dataclass(frozen=True)
class Computation:
    confs: tuple  # ((spec, state), ...) non-empty
    kinds: tuple  # len(confs) - 1 entries: ENV or ("comp", ActionLabel)

    def __post_init__(self):
        assert len(self.confs) >= 1 and len(self.kinds) == len(self.confs) - 1

    def __len__(self) -> int:
        return len(self.confs)

    def prepend(self, conf, kind) -> "Computation":
        return Computation((conf,) + self.confs, (kind,) + self.kinds)

    def render(self, schema) -> list[dict]:
        out = []
        for i, (spec, s) in enumerate(self.confs):
            step = None
            if i > 0:
                k = self.kinds[i - 1]
                step = "env" if k == ENV else f"comp[{k[1].render()}]"
            out.append(
                {
                    "spec": render_system(spec),
                    "state": schema.state_to_dict(s),
                    "via": step,
                }
            )
        return out

    def sort_key(self, schema) -> str:
        return repr(self.render(schema))


MODULAR_RULES = (
    "CptsMOne",
    "CptsMEnv",
    "CptsMTrgEvt",
    "CptsMTrgEvtFin",
    "CptsMBasicEvt",
    "CptsMAtomEvt",
    "CptsMSeq",
    "CptsMSeqFin",
    "CptsMChc1",
    "CptsMChc2",
    "CptsMJoin1",
    "CptsMJoin2",
    "CptsMJoinFin",
    "CptsMIterF",
    "CptsMIterTOne",
    "CptsMIterTMore",
)


def cpts_linear(
    ctx: Ctx,
    s_sys: EventSystem,
    s: tuple,
    rely_universe: RelDesc,
    max_len: int,
    k: Any = "es",
) -> frozenset[Computation]:
    """Computations of length <= max_len derivable by the three linear
    rules, environment successors drawn from `rely_universe`."""
    assert max_len >= 1
    out: set[Computation] = set()
    stack = [Computation(((s_sys, s),), ())]
    while stack:
        c = stack.pop()
        out.add(c)
        if len(c) >= max_len:
            continue
        spec, st = c.confs[-1]
        for t in rely_universe.successors(st):
            stack.append(
                Computation(c.confs + ((spec, t),), c.kinds + (ENV,))
            )
        for lbl, spec2, t in step_es(ctx, spec, st, k):
            stack.append(
                Computation(c.confs + ((spec2, t),), c.kinds + (comp_kind(lbl),))
            )
    return frozenset(out)


def lift_seq_cpt(c: Computation, q: EventSystem) -> Computation:
    """Sequential lift: every spec S becomes S ;; q; states and step kinds
    are unchanged."""
    return Computation(
        tuple((EsSeq(spec, q), st) for spec, st in c.confs), c.kinds
    )


def _has_fin_spec(c: Computation) -> bool:
    return any(is_fin(spec) for spec, _ in c.confs)


def cpts_modular(
    ctx: Ctx,
    s_sys: EventSystem,
    s: tuple,
    rely_universe: RelDesc,
    max_len: int,
    k: Any = "es",
    disabled: frozenset[str] = frozenset(),
) -> frozenset[Computation]:
    """Computations of length <= max_len built by the modular rules.

    `disabled` removes individual rules (mutation experiments)."""
    assert max_len >= 1
    for d in disabled:
        assert d in MODULAR_RULES, d
    memo: dict = {}

    def on(rule: str) -> bool:
        return rule not in disabled

    def gen(spec: EventSystem, st: tuple, budget: int) -> frozenset[Computation]:
        key = (spec, st, budget)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out: set[Computation] = set()
        me = (spec, st)
        if on("CptsMOne"):
            out.add(Computation((me,), ()))
        if budget >= 2:
            if on("CptsMEnv"):
                for t in rely_universe.successors(st):
                    for c in gen(spec, t, budget - 1):
                        out.add(c.prepend(me, ENV))

            if isinstance(spec, EsTriggered) and spec.prog is not None:
                for q, t in ctx.adapter.step(ctx.actx, spec.prog, st):
                    rule = "CptsMTrgEvtFin" if q is None else "CptsMTrgEvt"
                    if on(rule):
                        for c in gen(EsTriggered(q), t, budget - 1):
                            out.add(c.prepend(me, comp_kind(tau(k))))
            elif isinstance(spec, EsBasic):
                if on("CptsMBasicEvt"):
                    for inst in spec.events.instances:
                        if inst.guard.holds(st):
                            lbl = comp_kind(_evt_label("evt", inst.label, k))
                            for c in gen(EsTriggered(inst.body), st, budget - 1):
                                out.add(c.prepend(me, lbl))
            elif isinstance(spec, EsAtomic):
                if on("CptsMAtomEvt"):
                    for inst in spec.events.instances:
                        if inst.guard.holds(st):
                            try:
                                terms = terminal_states(
                                    ctx.actx, ctx.adapter.step, inst.body, st, inst.label
                                )
                            except AwaitDivergence as d:
                                raise AtomDivergence(inst.label) from d
                            lbl = comp_kind(_evt_label("aevt", inst.label, k))
                            for t in terms:
                                for c in gen(FIN, t, budget - 1):
                                    out.add(c.prepend(me, lbl))
            elif isinstance(spec, EsSeq):
                for lbl, a2, t in step_es(ctx, spec.a, st, k):
                    if is_fin(a2):
                        if on("CptsMSeqFin"):
                            for c in gen(spec.b, t, budget - 1):
                                out.add(c.prepend(me, comp_kind(lbl)))
                    elif on("CptsMSeq"):
                        for c in gen(EsSeq(a2, spec.b), t, budget - 1):
                            out.add(c.prepend(me, comp_kind(lbl)))
            elif isinstance(spec, EsChoice):
                if on("CptsMChc1"):
                    for lbl, a2, t in step_es(ctx, spec.a, st, k):
                        for c in gen(a2, t, budget - 1):
                            out.add(c.prepend(me, comp_kind(lbl)))
                if on("CptsMChc2"):
                    for lbl, b2, t in step_es(ctx, spec.b, st, k):
                        for c in gen(b2, t, budget - 1):
                            out.add(c.prepend(me, comp_kind(lbl)))
            elif isinstance(spec, EsJoin):
                if is_fin(spec.a) and is_fin(spec.b):
                    if on("CptsMJoinFin"):
                        for c in gen(FIN, st, budget - 1):
                            out.add(c.prepend(me, comp_kind(tau(k))))
                if on("CptsMJoin1"):
                    for lbl, a2, t in step_es(ctx, spec.a, st, k):
                        for c in gen(EsJoin(a2, spec.b), t, budget - 1):
                            out.add(c.prepend(me, comp_kind(lbl)))
                if on("CptsMJoin2"):
                    for lbl, b2, t in step_es(ctx, spec.b, st, k):
                        for c in gen(EsJoin(spec.a, b2), t, budget - 1):
                            out.add(c.prepend(me, comp_kind(lbl)))
            elif isinstance(spec, EsIter):
                if not spec.cond.holds(st):
                    if on("CptsMIterF"):
                        for c in gen(FIN, st, budget - 1):
                            out.add(c.prepend(me, comp_kind(tau(k))))
                else:
                    bodies = gen(spec.body, st, budget - 1)
                    head_kind = comp_kind(tau(k))
                    for c in bodies:
                        if _has_fin_spec(c):
                            continue
                        if on("CptsMIterTOne"):
                            out.add(lift_seq_cpt(c, spec).prepend(me, head_kind))
                        if on("CptsMIterTMore"):
                            last_spec, last_st = c.confs[-1]
                            rem = budget - 1 - len(c)
                            if rem >= 1:
                                for lbl, s2, t in step_es(ctx, last_spec, last_st, k):
                                    if not is_fin(s2):
                                        continue
                                    lifted = lift_seq_cpt(c, spec)
                                    for c2 in gen(spec, t, rem):
                                        out.add(
                                            Computation(
                                                (me,) + lifted.confs + c2.confs,
                                                (head_kind,)
                                                + lifted.kinds
                                                + (comp_kind(lbl),)
                                                + c2.kinds,
                                            )
                                        )
        result = frozenset(out)
        memo[key] = result
        return result

    return gen(s_sys, s, max_len)


def _evt_label(kind: str, label: str, k: Any):
    from .events import ActionLabel

    return ActionLabel(kind, label, k)


def dump_computations(ctx: Ctx, comps) -> list[list[dict]]:
    """Deterministic serialized list of a computation set, for golden
    comparisons: sorted by rendered form."""
    return [c.render(ctx.schema) for c in sorted(comps, key=lambda c: c.sort_key(ctx.schema))]


def computation_valid(ctx: Ctx, c: Computation, k: Any = "es") -> tuple[bool, str]:
    """Replay a computation: every adjacent pair must satisfy its recorded
    step kind (env preserves the spec; comp pairs must be semantic steps)."""
    from .events import ParallelEventSystem
    from .semantics import step_pes

    for i in range(len(c) - 1):
        (spec1, s1), (spec2, s2) = c.confs[i], c.confs[i + 1]
        kind = c.kinds[i]
        if kind == ENV:
            if spec1 != spec2:
                return False, f"env step {i} changes the spec"
        else:
            lbl = kind[1]
            if isinstance(spec1, ParallelEventSystem):
                steps = step_pes(ctx, spec1, s1)
            else:
                steps = step_es(ctx, spec1, s1, k)
            if (lbl, spec2, s2) not in steps:
                return False, f"comp step {i} is not a semantic step"
    return True, "ok"


def check_linear_modular_equiv(
    ctx: Ctx,
    s_sys: EventSystem,
    pre: StateSet,
    rely_universe: RelDesc,
    max_len: int,
    init_mode: str = "default",
    disabled: frozenset[str] = frozenset(),
    k: Any = "es",
) -> Verdict:
    """PASS iff the linear and modular sets agree for every initial state,
    up to max_len.  FAIL carries a computation present in exactly one set."""
    check = "equiv-cpts"
    total = 0
    for s in solve_states(pre, mode=init_mode):
        lin = cpts_linear(ctx, s_sys, s, rely_universe, max_len, k)
        mod = cpts_modular(ctx, s_sys, s, rely_universe, max_len, k, disabled)
        total += len(lin)
        if lin != mod:
            only_lin = sorted(lin - mod, key=lambda c: c.sort_key(ctx.schema))
            only_mod = sorted(mod - lin, key=lambda c: c.sort_key(ctx.schema))
            side = "linear-only" if only_lin else "modular-only"
            w = (only_lin or only_mod)[0]
            return fail(
                check,
                side,
                witness={
                    "computation": w.render(ctx.schema),
                    "linear_count": len(lin),
                    "modular_count": len(mod),
                },
                detail={"initial_state": ctx.schema.state_to_dict(s)},
            )
    return ok(check, detail={"computations": total})
