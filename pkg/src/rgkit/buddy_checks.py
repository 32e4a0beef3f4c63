"""Reachability analysis of the buddy kernel corpus model.

Explores the closed parallel system from the well-formed initial state
(all-FREE roots, empty wait queue) under the clock-advance rely and checks:

  * every reachable state satisfies the structural invariants;
  * every quiescent reachable state (no thread holding an ALLOCATING or
    FREEING marker) has no four FREE partners and consistent free lists;
  * every component step of a thread system lies in that thread's
    guarantee relation;
  * at every configuration where a thread system has returned to its
    iteration head, the last completed service's postcondition holds
    (allocation posts per timeout mode; FOREVER instances are checked for
    invariants only since they need not terminate).
"""

from __future__ import annotations

from dataclasses import dataclass

from .buddy import (
    BuddyDims,
    BuddyModel,
    FOREVER,
    alloc_post,
    build_kernel_model,
    free_post,
    partition_theorem_oracle,
)
from .semantics import build_graph, graph_diag
from .verdicts import Verdict, fail, ok


@dataclass
class KernelAnalysis:
    model: BuddyModel
    node_count: int
    verdicts: list[tuple[str, Verdict]]

    @property
    def passed(self) -> bool:
        return all(v.passed for _, v in self.verdicts)


def analyze_kernel(model: BuddyModel, budget: int = 1_000_000) -> KernelAnalysis:
    layout = model.layout
    schema = layout.schema
    verdicts: list[tuple[str, Verdict]] = []

    try:
        graph = build_graph(
            model.ctx,
            model.pes,
            None,
            model.rely,
            init_states=[model.initial_state()],
            budget=budget,
            trace_parents=True,
        )
    except Exception as e:  # noqa: BLE001
        v = graph_diag("kernel-reachability", e)
        return KernelAnalysis(model, 0, [("kernel", v)])

    inv = model.invariants["inv"]
    quiescent = model.invariants["quiescent"]
    frag = model.invariants["no_partner_fragmentation"]
    flv = model.invariants["free_list_valid"]

    def state_witness(idx: int) -> dict:
        return {"state": schema.state_to_dict(graph.nodes[idx][1])}

    bad = next((i for i, (_, s) in enumerate(graph.nodes) if not inv(s)), None)
    verdicts.append(
        (
            "structural-invariants",
            ok("kernel-inv", node_count=graph.node_count)
            if bad is None
            else fail("kernel-inv", "invariant-violated", witness=state_witness(bad)),
        )
    )

    bad = None
    quiescent_count = 0
    for i, (_, s) in enumerate(graph.nodes):
        if quiescent(s):
            quiescent_count += 1
            if not frag(s) or not flv(s):
                bad = i
                break
    verdicts.append(
        (
            "quiescent-properties",
            ok("kernel-quiescent", detail={"quiescent_states": quiescent_count})
            if bad is None
            else fail("kernel-quiescent", "quiescent-property-violated", witness=state_witness(bad)),
        )
    )

    guar_bad = None
    checked_edges = 0
    for src, lbl, dst in graph.comp_edges:
        t = lbl.k
        g = model.guarantees.get(t)
        if g is None:
            continue
        checked_edges += 1
        s, r = graph.nodes[src][1], graph.nodes[dst][1]
        if not g.contains(s, r):
            guar_bad = (t, src, dst, lbl)
            break
    verdicts.append(
        (
            "thread-guarantees",
            ok("kernel-guarantee", detail={"thread_steps": checked_edges})
            if guar_bad is None
            else fail(
                "kernel-guarantee",
                "step-outside-guarantee",
                witness={
                    "thread": guar_bad[0],
                    "label": guar_bad[3].render(),
                    "pre": schema.state_to_dict(graph.nodes[guar_bad[1]][1]),
                    "post": schema.state_to_dict(graph.nodes[guar_bad[2]][1]),
                },
            ),
        )
    )

    posts = {}
    for t in model.dims.threads:
        for sz, tmo in model.alloc_instances[t]:
            posts[(t, "alloc", sz, tmo)] = alloc_post(layout, t, sz, tmo)
        posts[(t, "free")] = free_post(layout, t)

    # A service completes exactly on the step that returns the thread's
    # event system to its iteration head; the step's source state still
    # carries ret/mempoolalloc_ret and the ghost instance markers.
    heads = {t: model.thread_systems[t] for t in model.dims.threads}
    post_bad = None
    head_hits = {"alloc": 0, "free": 0}
    for src, lbl, dst in graph.comp_edges:
        t = lbl.k
        if t not in heads:
            continue
        src_spec, s = graph.nodes[src]
        dst_spec = graph.nodes[dst][0]
        if dst_spec.get(t) != heads[t] or src_spec.get(t) == heads[t]:
            continue
        op = layout.lvar(s, "cur_op", t)
        if op == "none":
            continue
        if op == "alloc":
            sz = layout.lvar(s, "cur_sz", t)
            tmo = layout.lvar(s, "cur_tmo", t)
            if tmo == FOREVER:
                continue  # non-termination mode: invariants only
            head_hits["alloc"] += 1
            if not posts[(t, "alloc", sz, tmo)].holds(s):
                post_bad = (t, op, sz, tmo, src)
                break
        else:
            head_hits["free"] += 1
            if not posts[(t, "free")].holds(s):
                post_bad = (t, op, None, None, src)
                break
    verdicts.append(
        (
            "service-postconditions",
            ok("kernel-post", detail=dict(head_hits))
            if post_bad is None
            else fail(
                "kernel-post",
                "postcondition-violated",
                witness={
                    "thread": post_bad[0],
                    "service": post_bad[1],
                    "size": post_bad[2],
                    "timeout": post_bad[3],
                    **state_witness(post_bad[4]),
                },
            ),
        )
    )

    return KernelAnalysis(model, graph.node_count, verdicts)


def run_buddy_demo(rep, dims: BuddyDims, budget: int = 1_000_000, workers: int = 1) -> None:
    """CLI entry: oracle first, then the full reachability analysis."""
    oracle = partition_theorem_oracle(
        BuddyDims(n_max=dims.n_max, n_levels=dims.n_levels, max_sz=dims.max_sz),
        workers=workers,
    )
    rep.emit(oracle, f"pool({dims.n_max},{dims.n_levels})")

    model = build_kernel_model(dims)
    analysis = analyze_kernel(model, budget=budget)
    for name, v in analysis.verdicts:
        v.node_count = v.node_count or analysis.node_count
        rep.emit(v, name)
