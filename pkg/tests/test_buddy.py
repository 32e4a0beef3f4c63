import pytest

from rgkit.buddy import (
    ALLOCATED,
    ALLOCATING,
    BuddyDims,
    DIVIDED,
    FREE,
    FREEING,
    NOEXIST,
    build_kernel_model,
    inv_bitmap,
    inv_bitmap0,
    inv_bitmapn,
    inv_mempool_info,
    mem_part,
    mp_free_loopinv,
    partition_theorem_oracle,
    valid_assignment_estimate,
)
from rgkit.checker import Universe, check_loop_variant
from rgkit.relations import StateSet, identity_rel, univ_rel
from rgkit.semantics import build_graph, step_pes


D12 = BuddyDims(n_max=1, n_levels=2)


def bits(level0, level1):
    return [tuple(level0), tuple(level1)]


def test_undivided_root_satisfies_all():
    b = bits([FREE], [NOEXIST] * 4)
    assert inv_mempool_info(D12, b)
    assert inv_bitmap(D12, b)
    assert inv_bitmap0(D12, b)
    assert inv_bitmapn(D12, b)
    assert mem_part(D12, b)


def test_divided_root_with_children():
    b = bits([DIVIDED], [FREE, ALLOCATED, FREE, FREE])
    assert inv_bitmap(D12, b) and mem_part(D12, b)


def test_child_of_existing_block_must_not_exist():
    b = bits([FREE], [FREE, NOEXIST, NOEXIST, NOEXIST])
    assert not inv_bitmap(D12, b)


def test_divided_without_children_loses_coverage():
    b = bits([DIVIDED], [NOEXIST] * 4)
    assert not inv_bitmap(D12, b)  # NOEXIST child of a DIVIDED parent
    assert not mem_part(D12, b)


def test_mid_operation_bits_are_blocks():
    b = bits([DIVIDED], [ALLOCATING, FREEING, FREE, ALLOCATED])
    assert inv_bitmap(D12, b) and mem_part(D12, b)


def test_partition_oracle_small_dims():
    v = partition_theorem_oracle(D12)
    assert v.passed and v.detail["examined"] == 260
    assert valid_assignment_estimate(D12) == 260


def test_partition_oracle_premise_necessity():
    v = partition_theorem_oracle(D12, drop_premise="inv_bitmapn")
    assert v.failed and v.clause == "partition-violated"
    v2 = partition_theorem_oracle(D12, drop_premise="inv_bitmap0")
    assert v2.failed


def test_partition_oracle_degenerate_one_level():
    v = partition_theorem_oracle(BuddyDims(n_max=1, n_levels=1, max_sz=16))
    assert v.passed


def test_partition_oracle_refuses_large_dims():
    v = partition_theorem_oracle(BuddyDims(n_max=1, n_levels=3, max_sz=256))
    assert v.diagnostic and v.clause == "dims-too-large"


def test_build_refuses_oversized_models():
    with pytest.raises(ValueError):
        build_kernel_model(BuddyDims(threads=("t1", "t2", "t3", "t4"),
                                     alloc_sizes=(16, 32, 64, 128),
                                     timeouts=(0, 1, 2, -1),
                                     n_levels=3, max_sz=256))


def test_model_shape_three_systems():
    m = build_kernel_model(BuddyDims(tick_max=1))
    assert m.pes.keys == ["sched", "t1", "t2"]
    assert set(m.thread_systems) == {"t1", "t2"}


def test_degenerate_single_alloc_event():
    dims = BuddyDims(threads=("t1",), alloc_sizes=(16,), timeouts=(0,),
                     free_blocks=(), tick_max=1)
    m = build_kernel_model(dims)
    # one guarded alloc instance under the iteration (no free arm at all)
    sys_t1 = m.thread_systems["t1"]
    allocs = sys_t1.body.events.instances
    assert len(allocs) == 1 and allocs[0].label == "mem_pool_alloc(p1, 16, 0)"


def drive(model, choose, max_steps=400):
    """Run the closed system deterministically, choosing steps by label
    preference order; returns the visited states."""
    s = model.initial_state()
    spec = model.pes
    seen = [s]
    for _ in range(max_steps):
        steps = step_pes(model.ctx, spec, s)
        if not steps:
            break
        pick = choose(steps)
        if pick is None:
            break
        _, spec, s = pick
        seen.append(s)
    return spec, s, seen


def prefer(*prefixes):
    def choose(steps):
        for p in prefixes:
            for st in steps:
                if st[0].label is not None and st[0].label.startswith(p):
                    return st
        return steps[0]

    return choose


def test_alloc_then_free_coalesces():
    dims = BuddyDims(threads=("t1",), alloc_sizes=(16,), timeouts=(0,),
                     free_blocks=((1, 0),), tick_max=1)
    m = build_kernel_model(dims)
    layout = m.layout
    inv = m.invariants["inv"]
    script = {"allocated": False}

    def choose(steps):
        # keep the running body moving; at the event choice, allocate
        # first and release afterwards; schedule t1 when it is blocked
        for st in steps:
            if st[0].k == "t1" and st[0].kind == "tau":
                return st
        want = "mem_pool_free" if script["allocated"] else "mem_pool_alloc"
        for st in steps:
            if st[0].k == "t1" and (st[0].label or "").startswith(want):
                return st
        for st in steps:
            if st[0].label == "sched(t1)":
                return st
        for st in steps:  # let the scheduler unfold to reach its events
            if st[0].k == "sched" and st[0].kind == "tau":
                return st
        return None

    def drive_scripted(max_steps=400):
        s = m.initial_state()
        spec = m.pes
        seen = [s]
        for _ in range(max_steps):
            steps = step_pes(m.ctx, spec, s)
            pick = choose(steps)
            if pick is None:
                break
            _, spec, s = pick
            seen.append(s)
            if layout.bits_of(s, 1)[0] == ALLOCATED:
                script["allocated"] = True
        return spec, s, seen

    spec, s, seen = drive_scripted()
    for st in seen:
        assert inv(st)
    # after the full loop the final state must have been through an
    # allocated-then-coalesced cycle: find intermediate evidence
    had_allocated = any(layout.bits_of(st, 1)[0] == ALLOCATED for st in seen)
    had_freeing = any(
        layout.bits_of(st, 0)[0] == FREEING or layout.bits_of(st, 1)[0] == FREEING
        for st in seen
    )
    assert had_allocated and had_freeing
    # coalescing restores the whole root eventually
    restored = any(
        layout.bits_of(st, 0)[0] == FREE
        and all(x == NOEXIST for x in layout.bits_of(st, 1))
        and layout.free_list_of(st, 0) == (0,)
        for st in seen
    )
    assert restored


def test_guarantee_accepts_identity_and_rejects_foreign_local_change():
    m = build_kernel_model(BuddyDims(tick_max=1))
    layout = m.layout
    g1 = m.guarantees["t1"]
    s = m.initial_state()
    assert g1.contains(s, s)
    # t1 touching t2's locals is outside t1's guarantee
    idx = layout.idx["lvl"]
    k2 = layout.tix["t2"]
    rec = list(s[idx])
    rec[k2] = 1
    r = s[:idx] + (tuple(rec),) + s[idx + 1:]
    assert not g1.contains(s, r)
    assert g1.contains(r, r)


def test_mp_free_loopinv_family_on_reachable_states():
    dims = BuddyDims(threads=("t1",), alloc_sizes=(16,), timeouts=(0,),
                     free_blocks=((1, 0), (1, 1)), tick_max=1)
    m = build_kernel_model(dims)
    g = build_graph(m.ctx, m.pes, None, m.rely,
                    init_states=[m.initial_state()], budget=200_000)
    states, seen = [], set()
    for _, st in g.nodes:
        if st not in seen:
            seen.add(st)
            states.append(st)
    u = Universe("reachable", states)
    fam = mp_free_loopinv(m.layout, "t1")
    from rgkit.buddy import build_free_loop_body

    body = build_free_loop_body(m.layout, "t1")
    b = StateSet(m.layout.schema, native=lambda s: m.layout.lvar(s, "free_block_r", "t1"),
                 name="free_block_r[t1]")
    v = check_loop_variant(
        m.ctx, body, b, identity_rel(m.layout.schema), univ_rel(m.layout.schema),
        fam, range(0, dims.n_levels + 1), u,
    )
    assert v.passed, (v.clause, v.witness)
    # mutant that never descends a level fails the decrease condition
    bad = build_free_loop_body(m.layout, "t1", no_decrease=True)
    v2 = check_loop_variant(
        m.ctx, bad, b, identity_rel(m.layout.schema), univ_rel(m.layout.schema),
        fam, range(0, dims.n_levels + 1), u,
    )
    assert v2.failed and v2.clause.startswith("condition-1")
