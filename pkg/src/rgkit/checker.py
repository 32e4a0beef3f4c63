"""Rely-guarantee validity, the proof-rule engine, and invariant checks.

Validity is decided exactly on finite instances: computations are the
prefix-closed paths of the configuration graph, so it suffices that every
component edge lies in the guarantee and every finished configuration
satisfies the postcondition.  FAIL verdicts carry a shortest violating
path that replays step-by-step under the semantics.

The proof-rule engine discharges one rule per outline node.  Set and
relation premises are instantiated over a recorded universe of states
(default: the reachable states of the outer graph, which is sound for the
soundness cross-check because replay only ever visits reachable states;
`full` enumerates the schema product).  Failure reports name the rule and
premise; the engine never claims disproof, only an undischarged premise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable

from .adapters import prog_validity
from .computations import ENV, Computation, comp_kind
from .events import (
    EsAtomic,
    EsBasic,
    EsChoice,
    EsIter,
    EsJoin,
    EsSeq,
    EsTriggered,
    EventSystem,
    ParallelEventSystem,
    is_fin,
    render_system,
)
from .relations import (
    NotGenerative,
    RGSpec,
    RelDesc,
    StateSet,
    identity_rel,
    intersect,
    solve_states,
    true_set,
    univ_rel,
)
from .semantics import ConfigGraph, Ctx, build_graph, graph_diag
from .values import DomainOverflow
from .verdicts import Verdict, diag, fail, ok


# ----------------------------------------------------------------------
# Assumption / commitment of a single computation.
# ----------------------------------------------------------------------


def in_assume(c: Computation, pre: StateSet, rely: RelDesc) -> bool:
    """First state in pre; every environment step's state pair in rely."""
    if not pre.holds(c.confs[0][1]):
        return False
    for i, kind in enumerate(c.kinds):
        if kind == ENV:
            if not rely.contains(c.confs[i][1], c.confs[i + 1][1]):
                return False
    return True


def _conf_finished(spec) -> bool:
    if isinstance(spec, ParallelEventSystem):
        return spec.all_fin()
    return is_fin(spec)


def in_commit(ctx: Ctx, c: Computation, guar: RelDesc, post: StateSet) -> bool:
    """Component steps in guar; a finished final configuration in post."""
    for i, kind in enumerate(c.kinds):
        if kind != ENV:
            if not guar.contains(c.confs[i][1], c.confs[i + 1][1]):
                return False
    spec, s = c.confs[-1]
    if _conf_finished(spec) and not post.holds(s):
        return False
    return True


# ----------------------------------------------------------------------
# Exact validity on the configuration graph.
# ----------------------------------------------------------------------


def _witness_path(ctx: Ctx, g: ConfigGraph, idx: int, extra=None) -> Computation:
    path = g.path_to(idx)
    confs = [g.nodes[i] for i, _, _ in path]
    kinds = []
    for i, kind, lbl in path[1:]:
        kinds.append(ENV if kind == "env" else comp_kind(lbl))
    if extra is not None:
        conf, lbl = extra
        confs.append(conf)
        kinds.append(comp_kind(lbl))
    return Computation(tuple(confs), tuple(kinds))


def check_validity(
    ctx: Ctx,
    target: EventSystem | ParallelEventSystem,
    spec: RGSpec,
    init_states: list[tuple] | None = None,
    budget: int = 1_000_000,
    init_mode: str = "default",
    graph: ConfigGraph | None = None,
) -> Verdict:
    """PASS iff on the graph from (target, pre) under rely: every component
    edge's state pair is in guar, and every finished node's state is in
    post.  Exact for finite instances (computations are prefix-closed
    graph paths).  FAIL returns a shortest violating computation."""
    check = "validity"
    try:
        if graph is None:
            graph = build_graph(
                ctx, target, spec.pre, spec.rely,
                init_states=init_states, budget=budget, init_mode=init_mode,
            )
    except Exception as e:  # noqa: BLE001 - converted to typed diagnostics
        return graph_diag(check, e)

    for src, lbl, dst in graph.comp_edges:
        s, t = graph.nodes[src][1], graph.nodes[dst][1]
        if not spec.guar.contains(s, t):
            w = _witness_path(ctx, graph, src, extra=(graph.nodes[dst], lbl))
            return fail(
                check,
                "guar-violation",
                witness={
                    "computation": w.render(ctx.schema),
                    "pair": [ctx.schema.state_to_dict(s), ctx.schema.state_to_dict(t)],
                    "label": lbl.render(),
                },
                node_count=graph.node_count,
                detail={"_computation": w},
            )
    for idx, (spec_c, s) in enumerate(graph.nodes):
        if _conf_finished(spec_c) and not spec.post.holds(s):
            w = _witness_path(ctx, graph, idx)
            return fail(
                check,
                "post-violation",
                witness={
                    "computation": w.render(ctx.schema),
                    "final_state": ctx.schema.state_to_dict(s),
                },
                node_count=graph.node_count,
                detail={"_computation": w},
            )
    return ok(check, node_count=graph.node_count)


def check_validity_pes(ctx: Ctx, target: ParallelEventSystem, spec: RGSpec, **kw) -> Verdict:
    """Validity over parallel-system steps; finished = every system FIN."""
    assert isinstance(target, ParallelEventSystem)
    v = check_validity(ctx, target, spec, **kw)
    v.check = "validity-pes"
    return v


# ----------------------------------------------------------------------
# Universes and the premise toolbox.
# ----------------------------------------------------------------------


@dataclass
class Universe:
    name: str
    states: list


def reachable_universe(
    ctx: Ctx, target, spec: RGSpec, budget: int = 1_000_000, init_mode: str = "default"
) -> tuple[Universe, ConfigGraph]:
    g = build_graph(ctx, target, spec.pre, spec.rely, budget=budget, init_mode=init_mode)
    seen, states = set(), []
    for _, s in g.nodes:
        if s not in seen:
            seen.add(s)
            states.append(s)
    return Universe("reachable", states), g


def full_universe(ctx: Ctx, budget: int = 200_000) -> Universe:
    return Universe("full", ctx.schema.all_states(budget))


def set_subset(f: StateSet, g: StateSet, u: Universe) -> tuple[bool, Any]:
    for s in u.states:
        if f.holds(s) and not g.holds(s):
            return False, s
    return True, None


def stable(f: StateSet, g: RelDesc, u: Universe) -> tuple[bool, Any]:
    """stable(f, g): f is closed under g-successors (over the universe)."""
    if not g.generative:
        raise NotGenerative(f"stability against {g.name or g.kind} needs a generator")
    for s in u.states:
        if f.holds(s):
            for t in g.successors(s):
                if not f.holds(t):
                    return False, (s, t)
    return True, None


def rel_subset(r1: RelDesc, r2: RelDesc, u: Universe) -> tuple[bool, Any]:
    """R1 <= R2 checked by generator: every successor pair of R1 is a member
    of R2.  Universal right sides short-circuit."""
    if r2.kind in ("univ", "full"):
        return True, None
    if r1.kind == "univ":
        return False, "UNIV on the left of an inclusion against a non-universal relation"
    if not r1.generative:
        raise NotGenerative(f"inclusion from {r1.name or r1.kind} needs a generator")
    for s in u.states:
        for t in r1.successors(s):
            if not r2.contains(s, t):
                return False, (s, t)
    return True, None


def id_subset(guar: RelDesc, u: Universe) -> tuple[bool, Any]:
    if guar.kind in ("univ", "full"):
        return True, None
    if guar.kind == "rules":
        return (True, None) if guar.includes_identity else (False, "includes_identity is false")
    for s in u.states:
        if not guar.contains(s, s):
            return False, s
    return True, None


# ----------------------------------------------------------------------
# Proof outlines (one node per applied rule).
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BasicEvtNode:
    pass


@dataclass(frozen=True)
class AtomEvtNode:
    pass


@dataclass(frozen=True)
class TrgEvtNode:
    pass


@dataclass(frozen=True)
class SeqNode:
    mid: StateSet
    left: "Outline"
    right: "Outline"


@dataclass(frozen=True)
class ChoiceNode:
    left: "Outline"
    right: "Outline"


@dataclass(frozen=True)
class JoinNode:
    spec1: RGSpec
    spec2: RGSpec
    left: "Outline"
    right: "Outline"


@dataclass(frozen=True)
class IterNode:
    inv: StateSet
    body: "Outline"


@dataclass(frozen=True)
class ConseqNode:
    inner: RGSpec
    child: "Outline"


@dataclass(frozen=True)
class ParNode:
    specs: tuple  # ((kappa, RGSpec), ...)
    children: tuple  # ((kappa, Outline), ...)


Outline = (
    BasicEvtNode | AtomEvtNode | TrgEvtNode | SeqNode | ChoiceNode | JoinNode
    | IterNode | ConseqNode | ParNode
)


@dataclass
class _ProveState:
    ctx: Ctx
    universe: Universe
    budget: int


def _prog_obligation(
    ps: _ProveState, prog, spec: RGSpec, where: str
) -> Verdict | None:
    """Discharge a leaf program obligation.  The adapter's native checker is
    consulted first; the default is the exact semantic checker."""
    ctx = ps.ctx
    if ctx.adapter.prove_hook is not None:
        v = ctx.adapter.prove_hook(ctx.actx, prog, spec)
        if v is not None:
            return None if v.passed else _premise_fail(where, "prog-validity", v.witness)
    inits = [s for s in ps.universe.states if spec.pre.holds(s)]
    v = prog_validity(ctx.actx, ctx.adapter, prog, spec, init_states=inits, budget=ps.budget)
    if v.diagnostic:
        return v
    if v.failed:
        return _premise_fail(where, "prog-validity", v.witness)
    return None


def _premise_fail(rule: str, premise: str, witness: Any) -> Verdict:
    return fail("prove", f"{rule}:{premise}", witness=witness)


def _check_bool(rule: str, premise: str, res: tuple[bool, Any], ctx: Ctx) -> Verdict | None:
    good, w = res
    if good:
        return None
    n = len(ctx.schema)

    def is_state(v) -> bool:
        return isinstance(v, tuple) and len(v) == n

    if isinstance(w, tuple) and len(w) == 2 and is_state(w[0]) and is_state(w[1]):
        w = [ctx.schema.state_to_dict(w[0]), ctx.schema.state_to_dict(w[1])]
    elif is_state(w):
        w = ctx.schema.state_to_dict(w)
    return _premise_fail(rule, premise, w)


def _prove_es(ps: _ProveState, target: EventSystem, spec: RGSpec, outline: Outline) -> Verdict | None:
    ctx, u = ps.ctx, ps.universe

    if isinstance(outline, ConseqNode):
        inner = outline.inner
        for name, res in (
            ("pre-subset", set_subset(spec.pre, inner.pre, u)),
            ("post-subset", set_subset(inner.post, spec.post, u)),
        ):
            v = _check_bool("RG-Conseq", name, res, ctx)
            if v is not None:
                return v
        try:
            for name, res in (
                ("rely-subset", rel_subset(spec.rely, inner.rely, u)),
                ("guar-subset", rel_subset(inner.guar, spec.guar, u)),
            ):
                v = _check_bool("RG-Conseq", name, res, ctx)
                if v is not None:
                    return v
        except NotGenerative as e:
            return diag("prove", "relation-not-generative", detail={"where": str(e)})
        return _prove_es(ps, target, inner, outline.child)

    if isinstance(outline, BasicEvtNode):
        if not isinstance(target, EsBasic):
            return _shape("RG-BasicEvt", target)
        v = _check_bool("RG-BasicEvt", "stable(pre,rely)", stable(spec.pre, spec.rely, u), ctx)
        if v is not None:
            return v
        v = _check_bool("RG-BasicEvt", "Id-subset-guar", id_subset(spec.guar, u), ctx)
        if v is not None:
            return v
        for inst in target.events.instances:
            sub = RGSpec(intersect(spec.pre, inst.guard), spec.rely, spec.guar, spec.post)
            v = _prog_obligation(ps, inst.body, sub, f"RG-BasicEvt[{inst.label}]")
            if v is not None:
                return v
        return None

    if isinstance(outline, AtomEvtNode):
        if not isinstance(target, EsAtomic):
            return _shape("RG-AtomEvt", target)
        for name, res in (
            ("stable(pre,rely)", stable(spec.pre, spec.rely, u)),
            ("stable(post,rely)", stable(spec.post, spec.rely, u)),
        ):
            v = _check_bool("RG-AtomEvt", name, res, ctx)
            if v is not None:
                return v
        schema = ctx.schema
        for inst in target.events.instances:
            vs = [s for s in u.states if spec.pre.holds(s) and inst.guard.holds(s)]
            for v0 in vs:
                guar = spec.guar

                def post_fn(s, v0=v0, guar=guar):
                    return guar.contains(v0, s) and spec.post.holds(s)

                sub = RGSpec(
                    StateSet(schema, native=lambda s, v0=v0: s == v0, name=f"{{V}}"),
                    identity_rel(schema),
                    univ_rel(schema),
                    StateSet(schema, native=post_fn, name="guar-image-and-post"),
                )
                v = _prog_obligation(ps, inst.body, sub, f"RG-AtomEvt[{inst.label}]")
                if v is not None:
                    return v
        return None

    if isinstance(outline, TrgEvtNode):
        if not isinstance(target, EsTriggered) or target.prog is None:
            return _shape("RG-TrgEvt", target)
        return _prog_obligation(ps, target.prog, spec, "RG-TrgEvt")

    if isinstance(outline, SeqNode):
        if not isinstance(target, EsSeq):
            return _shape("RG-Seq", target)
        v = _prove_es(ps, target.a, RGSpec(spec.pre, spec.rely, spec.guar, outline.mid), outline.left)
        if v is not None:
            return v
        return _prove_es(ps, target.b, RGSpec(outline.mid, spec.rely, spec.guar, spec.post), outline.right)

    if isinstance(outline, ChoiceNode):
        if not isinstance(target, EsChoice):
            return _shape("RG-Choice", target)
        v = _prove_es(ps, target.a, spec, outline.left)
        if v is not None:
            return v
        return _prove_es(ps, target.b, spec, outline.right)

    if isinstance(outline, JoinNode):
        if not isinstance(target, EsJoin):
            return _shape("RG-Join", target)
        sp1, sp2 = outline.spec1, outline.spec2
        pre12 = intersect(sp1.pre, sp2.pre)
        post12 = intersect(sp1.post, sp2.post)
        v = _check_bool("RG-Join", "pre-subset", set_subset(spec.pre, pre12, u), ctx)
        if v is not None:
            return v
        v = _check_bool("RG-Join", "post-subset", set_subset(post12, spec.post, u), ctx)
        if v is not None:
            return v
        try:
            for name, res in (
                ("(3) guar1-subset-guar", rel_subset(sp1.guar, spec.guar, u)),
                ("(3) guar2-subset-guar", rel_subset(sp2.guar, spec.guar, u)),
                ("(4) rely-subset-rely1", rel_subset(spec.rely, sp1.rely, u)),
                ("(4) guar2-subset-rely1", rel_subset(sp2.guar, sp1.rely, u)),
                ("(5) rely-subset-rely2", rel_subset(spec.rely, sp2.rely, u)),
                ("(5) guar1-subset-rely2", rel_subset(sp1.guar, sp2.rely, u)),
            ):
                v = _check_bool("RG-Join", name, res, ctx)
                if v is not None:
                    return v
        except NotGenerative as e:
            return diag("prove", "relation-not-generative", detail={"where": str(e)})
        v = _check_bool("RG-Join", "(6) Id-subset-guar", id_subset(spec.guar, u), ctx)
        if v is not None:
            return v
        v = _prove_es(ps, target.a, sp1, outline.left)
        if v is not None:
            return v
        return _prove_es(ps, target.b, sp2, outline.right)

    if isinstance(outline, IterNode):
        if not isinstance(target, EsIter):
            return _shape("RG-Iter", target)
        inv = outline.inv
        from .relations import complement

        checks = (
            ("pre-subset-inv", set_subset(spec.pre, inv, u)),
            ("inv-outside-b-subset-post", set_subset(intersect(inv, complement(target.cond)), spec.post, u)),
            ("Id-subset-guar", id_subset(spec.guar, u)),
        )
        for name, res in checks:
            v = _check_bool("RG-Iter", name, res, ctx)
            if v is not None:
                return v
        for name, res in (
            ("stable(inv,rely)", stable(inv, spec.rely, u)),
            ("stable(post,rely)", stable(spec.post, spec.rely, u)),
        ):
            v = _check_bool("RG-Iter", name, res, ctx)
            if v is not None:
                return v
        body_spec = RGSpec(intersect(inv, target.cond), spec.rely, spec.guar, inv)
        return _prove_es(ps, target.body, body_spec, outline.body)

    if isinstance(outline, ParNode):
        return _shape("RG-ParEvtSys", target)

    raise AssertionError(f"unknown outline node {outline!r}")


def _shape(rule: str, target) -> Verdict:
    return diag(
        "prove",
        "outline-shape",
        detail={"rule": rule, "target": render_system(target)},
    )


def prove(
    ctx: Ctx,
    target: EventSystem | ParallelEventSystem,
    spec: RGSpec,
    outline: Outline,
    universe: Universe | None = None,
    budget: int = 1_000_000,
    init_mode: str = "default",
) -> Verdict:
    """Apply the outline's rule at every node and discharge the generated
    premises over the recorded universe.  PASS, or the first failed premise
    with rule name and witness."""
    try:
        if universe is None:
            universe, _ = reachable_universe(ctx, target, spec, budget=budget, init_mode=init_mode)
    except Exception as e:  # noqa: BLE001
        return graph_diag("prove", e)
    ps = _ProveState(ctx, universe, budget)

    if isinstance(target, ParallelEventSystem):
        if not isinstance(outline, ParNode):
            return _shape("RG-ParEvtSys", target)
        specs = dict(outline.specs)
        children = dict(outline.children)
        if set(specs) != set(target.keys) or set(children) != set(target.keys):
            return diag("prove", "outline-shape", detail={"rule": "RG-ParEvtSys", "expected": target.keys})
        u = universe
        for k in target.keys:
            v = _check_bool("RG-ParEvtSys", f"pre-subset-Pre({k})", set_subset(spec.pre, specs[k].pre, u), ctx)
            if v is not None:
                return _finish(v, universe)
        try:
            for k in target.keys:
                v = _check_bool("RG-ParEvtSys", f"rely-subset-Rely({k})", rel_subset(spec.rely, specs[k].rely, u), ctx)
                if v is not None:
                    return _finish(v, universe)
                v = _check_bool("RG-ParEvtSys", f"Guar({k})-subset-guar", rel_subset(specs[k].guar, spec.guar, u), ctx)
                if v is not None:
                    return _finish(v, universe)
            for k1 in target.keys:
                for k2 in target.keys:
                    if k1 != k2:
                        v = _check_bool(
                            "RG-ParEvtSys",
                            f"Guar({k1})-subset-Rely({k2})",
                            rel_subset(specs[k1].guar, specs[k2].rely, u),
                            ctx,
                        )
                        if v is not None:
                            return _finish(v, universe)
        except NotGenerative as e:
            return diag("prove", "relation-not-generative", detail={"where": str(e)})

        def inter_post(s):
            return all(specs[k].post.holds(s) for k in target.keys)

        v = _check_bool(
            "RG-ParEvtSys",
            "inter-Post-subset-post",
            set_subset(StateSet(ctx.schema, native=inter_post, name="inter-post"), spec.post, u),
            ctx,
        )
        if v is not None:
            return _finish(v, universe)
        for k in target.keys:
            v = _prove_es(ps, target.get(k), specs[k], children[k])
            if v is not None:
                return _finish(v, universe)
        return _finish(None, universe)

    return _finish(_prove_es(ps, target, spec, outline), universe)


def _finish(v: Verdict | None, universe: Universe) -> Verdict:
    if v is None:
        v = ok("prove")
    v.universe = universe.name
    if v.check != "prove":
        v.check = "prove"
    return v


def soundness_crosscheck(
    ctx: Ctx,
    target,
    spec: RGSpec,
    outline: Outline,
    budget: int = 1_000_000,
    init_mode: str = "default",
) -> Verdict:
    """prove = PASS must imply semantic validity = PASS; a FAIL here is an
    engine bug, never a model bug.  Vacuous PASS when prove fails."""
    check = "soundness-crosscheck"
    pv = prove(ctx, target, spec, outline, budget=budget, init_mode=init_mode)
    if not pv.passed:
        return ok(check, detail={"prove": pv.result, "vacuous": True})
    if isinstance(target, ParallelEventSystem):
        vv = check_validity_pes(ctx, target, spec, budget=budget, init_mode=init_mode)
    else:
        vv = check_validity(ctx, target, spec, budget=budget, init_mode=init_mode)
    if vv.passed:
        return ok(check, detail={"prove": "PASS", "validity": "PASS"})
    return fail(
        check,
        "prove-passes-but-validity-fails",
        witness=vv.witness,
        detail={"validity_clause": vv.clause},
    )


def check_invariant(
    ctx: Ctx,
    target: ParallelEventSystem,
    init: StateSet,
    rely: RelDesc,
    guar: RelDesc,
    inv: StateSet,
    outline: Outline | None = None,
    post: StateSet | None = None,
    budget: int = 1_000_000,
    init_mode: str = "default",
) -> Verdict:
    """The three invariant-verification premises, plus a redundant direct
    search of the reachable graph for inv-violating states."""
    check = "invariant"
    post = post if post is not None else true_set(ctx.schema)
    spec = RGSpec(init, rely, guar, post)
    premises: dict[str, str] = {}

    if outline is not None:
        p1 = prove(ctx, target, spec, outline, budget=budget, init_mode=init_mode)
    else:
        p1 = check_validity_pes(ctx, target, spec, budget=budget, init_mode=init_mode)
    premises["spec-satisfaction"] = p1.result

    try:
        init_states = solve_states(init, mode=init_mode)
    except DomainOverflow as e:
        return graph_diag(check, e)
    bad_init = next((s for s in init_states if not inv.holds(s)), None)
    premises["init-subset-inv"] = "FAIL" if bad_init is not None else "PASS"

    try:
        u, graph = reachable_universe(ctx, target, spec, budget=budget, init_mode=init_mode)
    except Exception as e:  # noqa: BLE001
        return graph_diag(check, e)
    try:
        st_rely, w_rely = stable(inv, rely, u)
        st_guar, w_guar = stable(inv, guar, u)
    except NotGenerative as e:
        return diag(check, "relation-not-generative", detail={"where": str(e)})
    premises["stable(inv,rely)"] = "PASS" if st_rely else "FAIL"
    premises["stable(inv,guar)"] = "PASS" if st_guar else "FAIL"

    direct_bad = next(
        (idx for idx, (_, s) in enumerate(graph.nodes) if not inv.holds(s)), None
    )
    premises["direct-reachability"] = "FAIL" if direct_bad is not None else "PASS"

    all_premises = all(
        premises[k] == "PASS"
        for k in ("spec-satisfaction", "init-subset-inv", "stable(inv,rely)", "stable(inv,guar)")
    )
    detail = {"premises": premises, "universe": u.name, "nodes": graph.node_count}
    if all_premises:
        if direct_bad is not None:
            # Theorem premises held but a reachable state violates inv:
            # that is an engine bug by the invariant theorem.
            w = _witness_path(ctx, graph, direct_bad)
            return fail(check, "premises-pass-but-state-violates", witness={"computation": w.render(ctx.schema)}, detail=detail)
        return ok(check, node_count=graph.node_count, detail=detail)
    first_bad = next(
        k for k in ("spec-satisfaction", "init-subset-inv", "stable(inv,rely)", "stable(inv,guar)")
        if premises[k] != "PASS"
    )
    witness: Any = None
    if first_bad == "init-subset-inv" and bad_init is not None:
        witness = ctx.schema.state_to_dict(bad_init)
    elif first_bad == "stable(inv,rely)" and not st_rely:
        witness = [ctx.schema.state_to_dict(w_rely[0]), ctx.schema.state_to_dict(w_rely[1])]
    elif first_bad == "stable(inv,guar)" and not st_guar:
        witness = [ctx.schema.state_to_dict(w_guar[0]), ctx.schema.state_to_dict(w_guar[1])]
    elif first_bad == "spec-satisfaction":
        witness = p1.witness
    detail["note"] = (
        "direct reachability check passed (theorem premises are sufficient, not necessary)"
        if direct_bad is None
        else "direct reachability check also fails"
    )
    return fail(check, f"premise:{first_bad}", witness=witness, detail=detail)


def check_loop_variant(
    ctx: Ctx,
    prog,
    b: StateSet,
    rely: RelDesc,
    guar: RelDesc,
    loopinv: Callable[[int], StateSet],
    alpha_domain: Iterable[int],
    universe: Universe,
    budget: int = 1_000_000,
) -> Verdict:
    """Variant-indexed loop-invariant termination conditions:

    (1) from loopinv(a), a > 0, the body ends in some loopinv(b), b < a;
    (2) loopinv(a), a > 0 entails the loop condition;
    (3) loopinv(0) entails its negation;
    (4) rely maps loopinv(a) into the union of loopinv(b), b <= a."""
    check = "loop-variant"
    alphas = sorted(set(alpha_domain))
    schema = ctx.schema
    inv_sets = {a: loopinv(a) for a in alphas}

    for a in alphas:
        states_a = [s for s in universe.states if inv_sets[a].holds(s)]
        if a > 0:
            smaller = [inv_sets[x] for x in alphas if x < a]

            def post_fn(s, smaller=smaller):
                return any(f.holds(s) for f in smaller)

            spec = RGSpec(
                inv_sets[a],
                rely,
                guar,
                StateSet(schema, native=post_fn, name=f"exists-beta<{a}"),
            )
            v = prog_validity(ctx.actx, ctx.adapter, prog, spec, init_states=states_a, budget=budget)
            if v.diagnostic:
                return v
            if v.failed:
                return fail(check, f"condition-1[alpha={a}]", witness=v.witness, universe=universe.name)
            for s in states_a:
                if not b.holds(s):
                    return fail(
                        check, f"condition-2[alpha={a}]",
                        witness=ctx.schema.state_to_dict(s), universe=universe.name,
                    )
        else:
            for s in states_a:
                if b.holds(s):
                    return fail(
                        check, "condition-3[alpha=0]",
                        witness=ctx.schema.state_to_dict(s), universe=universe.name,
                    )
        # condition 4
        not_smaller_eq = [inv_sets[x] for x in alphas if x <= a]
        for s in states_a:
            for t in rely.successors(s):
                if not any(f.holds(t) for f in not_smaller_eq):
                    return fail(
                        check, f"condition-4[alpha={a}]",
                        witness=[ctx.schema.state_to_dict(s), ctx.schema.state_to_dict(t)],
                        universe=universe.name,
                    )
    return ok(check, universe=universe.name, detail={"alphas": alphas})
