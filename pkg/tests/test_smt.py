import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlmend.harness import synth
from rtlmend.rtl import CombinationalLoop, apply_patch, elaborate, parse_project
from rtlmend.rtl import expr as E
from rtlmend.smt import (HorizonError, MakeRegistered, RepairTemplate, RewriteLiteral, SolverConfig, SolverProcessError, TargetNotFound,
                         actions_to_prompt, check, condition_sites, encode_bmc, instrument, literal_sites,
                         mechanical_patch, resolve_targets, solve_repair)
from rtlmend.smt.smtlib import bv, render, sym
from rtlmend.waveform import Testbench, WaveformTrace, compare, simulate

from .conftest import requires_z3
from .support.designs import COUNTER, TEMPLATE_CASES, design, golden_testbench, project

# -- expression rendering against the evaluator ---------------------------------------------------------------

_BIN_SAME = ("+", "-", "*", "/", "%", "&", "|", "^", "~^")
_CMP = ("==", "!=", "<", "<=", ">", ">=")


def _var(w):
    return E.Ref(f"v{w}", w)


@st.composite
def exprs(draw, w, depth=3):
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        if draw(st.booleans()):
            return _var(w)
        return E.Literal(w, draw(st.integers(0, (1 << w) - 1)))
    sub = lambda width: exprs(width, depth - 1)  # noqa: E731
    kinds = ["bin", "unary", "shift", "ternary", "slice", "concat"]
    if w == 1:
        kinds += ["cmp", "logic", "reduce", "not"]
    k = draw(st.sampled_from(kinds))
    if k == "bin":
        return E.Binary(draw(st.sampled_from(_BIN_SAME)), draw(sub(w)), draw(sub(w)), w)
    if k == "unary":
        return E.Unary(draw(st.sampled_from(("~", "-"))), draw(sub(w)), w)
    if k == "shift":
        return E.Binary(draw(st.sampled_from(("<<", ">>"))), draw(sub(w)), draw(sub(draw(st.integers(1, 5)))), w)
    if k == "ternary":
        return E.Ternary(draw(sub(draw(st.integers(1, 3)))), draw(sub(w)), draw(sub(w)), w)
    if k == "slice":
        lo = draw(st.integers(0, 3))
        inner = draw(sub(w + lo + draw(st.integers(0, 2))))
        return E.Slice(inner, lo + w - 1, lo)
    if k == "concat" and w > 1:
        cut = draw(st.integers(1, w - 1))
        return E.Concat((draw(sub(cut)), draw(sub(w - cut))))
    if k == "cmp":
        ow = draw(st.integers(1, 6))
        return E.Binary(draw(st.sampled_from(_CMP)), draw(sub(ow)), draw(sub(ow)), 1)
    if k == "logic":
        return E.Binary(draw(st.sampled_from(("&&", "||"))), draw(sub(draw(st.integers(1, 4)))),
                        draw(sub(draw(st.integers(1, 4)))), 1)
    if k == "reduce":
        return E.Reduce(draw(st.sampled_from(E.REDUCE_OPS)), draw(sub(draw(st.integers(1, 6)))))
    if k == "not":
        return E.Unary("!", draw(sub(draw(st.integers(1, 4)))), 1)
    return _var(w)


@st.composite
def expr_batches(draw):
    batch = []
    for _ in range(8):
        w = draw(st.integers(1, 9))
        e = draw(exprs(w))
        E.check(e)
        batch.append(e)
    env = {f"v{w}": draw(st.integers(0, (1 << w) - 1)) for w in range(1, 20)}
    return batch, env


@requires_z3
@settings(max_examples=25)
@given(expr_batches())
def test_smt_rendering_agrees_with_evaluator(case):
    batch, env = case
    lines = [f"(declare-const {sym(n)} (_ BitVec {int(n[1:])}))\n(assert (= {sym(n)} {bv(int(n[1:]), v)}))"
             for n, v in env.items()]
    ref = lambda r: sym(r.name)  # noqa: E731
    for e in batch:
        lines.append(f"(assert (= {render(e, ref)} {bv(e.width, E.evaluate(e, env))}))")
    assert check("\n".join(lines) + "\n").status == "sat"


def test_check_reports_unsat(needs_z3):
    assert check("(declare-const x (_ BitVec 2))\n(assert (= x (bvadd x #b01)))\n").status == "unsat"


def test_check_reads_model(needs_z3):
    r = check("(declare-const |rep$v0| (_ BitVec 4))\n(assert (= |rep$v0| #xa))\n")
    assert r.status == "sat" and r.model["rep$v0"] == 10


def test_solver_errors_are_typed(needs_z3, tmp_path):
    with pytest.raises(SolverProcessError):
        check("(assert true)\n", cmd=str(tmp_path / "no-such-solver"))
    with pytest.raises(SolverProcessError):
        check("(this is not smt\n")


# -- bounded model checking against simulation -----------------------------------------------------------------

def synth_design(seed):
    rng = random.Random(seed)
    d = synth.generate(rng, synth.GenParams(n_cycles=24))
    text = synth.render(d)
    ts = elaborate(parse_project(project(text, synth.TOP, synth.FILE)), synth.TOP)
    return ts, synth._stimulus(rng, d)


def perturbed(trace, rng):
    name = rng.choice(sorted(trace.signals))
    w, vals = trace.signals[name]
    t = rng.randrange(len(vals))
    vals = list(vals)
    vals[t] ^= 1 << rng.randrange(w)
    sig = dict(trace.signals)
    sig[name] = (w, vals)
    return WaveformTrace.build(sig, trace.n_cycles)


@pytest.mark.parametrize("seed", range(6))
def test_bmc_agrees_with_simulation(needs_z3, seed):
    ts, stim = synth_design(seed)
    out = simulate(ts, Testbench(stim, WaveformTrace.build({}, stim.n_cycles))).restrict(ts.outputs)
    script = encode_bmc(ts, Testbench(stim, out))
    assert check(script.text).status == "sat"
    bad = perturbed(out, random.Random(seed))
    assert check(encode_bmc(ts, Testbench(stim, bad)).text).status == "unsat"


def test_bmc_horizon_bounds():
    ts = design(COUNTER.format(lim=6))
    tb = golden_testbench(COUNTER.format(lim=6), n=8)
    assert encode_bmc(ts, tb, 3).horizon == 3
    with pytest.raises(HorizonError):
        encode_bmc(ts, tb, 9)
    with pytest.raises(HorizonError):
        encode_bmc(ts, [])


# -- templates ----------------------------------------------------------------------------------------------

def template_for(kind, ts, rng):
    if kind == "ReplaceLiteral":
        sites = literal_sites(ts)
        return RepairTemplate(kind, tuple(rng.sample(sites, min(3, len(sites))))) if sites else None
    if kind == "AddGuard":
        names = sorted(ts.next) + sorted(ts.comb)
        return RepairTemplate(kind, (rng.choice(names),))
    names = sorted(n for n in list(ts.comb) + list(ts.next) if n not in ts.inputs)
    return RepairTemplate(kind, (rng.choice(names),))


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.sampled_from(("ReplaceLiteral", "AddGuard", "ConditionalOverwrite",
                                                 "CycleShift")))
def test_instrumentation_with_flags_off_is_identity(seed, kind):
    ts, stim = synth_design(seed)
    rng = random.Random(seed)
    tmpl = template_for(kind, ts, rng)
    if tmpl is None:
        return
    try:
        inst, fmap = instrument(ts, tmpl)
    except (TargetNotFound, CombinationalLoop):
        return
    flags = set(fmap.change_flags.values())
    free = {n: (0 if n in flags else rng.randrange(1 << w)) for n, w in inst.free.items()}
    empty = WaveformTrace.build({}, stim.n_cycles)
    want = simulate(ts, Testbench(stim, empty))
    got = simulate(inst, Testbench(stim, empty), free_values=free)
    assert got.restrict(ts.outputs) == want.restrict(ts.outputs)


def repair_case(case):
    _name, ref, buggy, kind, targets, outs = case
    src = project(buggy)
    ts = elaborate(parse_project(src), "top")
    tbs = [golden_testbench(ref, n=40, seed=s, outputs=outs) for s in range(2)]
    tmpl = RepairTemplate(kind, resolve_targets(kind, targets, ts))
    return src, ts, tbs, tmpl


@pytest.mark.parametrize("case", TEMPLATE_CASES, ids=[c[0] for c in TEMPLATE_CASES])
def test_template_repair_is_found_and_patch_verifies(needs_z3, case):
    src, ts, tbs, tmpl = repair_case(case)
    assert not all(compare(simulate(ts, tb), tb.golden)[0] for tb in tbs)
    res = solve_repair(ts, tbs, tmpl, SolverConfig(timeout_s=60), src)
    assert res.sat and res.actions
    assert len(res.actions) == res.stats.active_flags
    fixed = apply_patch(src, mechanical_patch(src, res.actions, ts.clock))
    fts = elaborate(parse_project(fixed), "top")
    for tb in tbs:
        assert compare(simulate(fts, tb), tb.golden)[0]
    text = actions_to_prompt(res, src)
    assert "top.v" in text


def test_replace_literal_needs_both_sites(needs_z3):
    """Brute force over every single-site rewrite: none fixes the counter, so two flags is minimal."""
    src, ts, tbs, tmpl = repair_case(TEMPLATE_CASES[0])
    res = solve_repair(ts, tbs, tmpl, SolverConfig(timeout_s=60), src)
    assert res.stats.active_flags == 2
    inst, fmap = instrument(ts, tmpl, src)
    sites = fmap.sites
    for s in sites:
        for v in range(1 << inst.free[s.value]):
            free = {s.flag: 1, s.value: v}
            assert not all(compare(simulate(inst, tb, free_values=free), tb.golden)[0] for tb in tbs)
    # and the pair the solver found does fix it
    good = {n: res.model.get(n, 0) for n in inst.free}
    assert sum(good[s.flag] for s in sites) == 2
    assert all(compare(simulate(inst, tb, free_values=good), tb.golden)[0] for tb in tbs)


def test_unrepairable_design_reports_unsat(needs_z3):
    src = project(COUNTER.format(lim=4))
    ts = elaborate(parse_project(src), "top")
    # the golden wrap pulses at 6 but the template only touches the comparison literal in the wrap output
    tb = golden_testbench(COUNTER.format(lim=6), n=30, outputs=["count", "wrap"])
    wrap_site = [s for s in literal_sites(ts) if s.line == 4]
    res = solve_repair(ts, [tb], RepairTemplate("ReplaceLiteral", tuple(wrap_site)), SolverConfig(timeout_s=60), src)
    assert not res.sat and res.actions == ()
    assert res.stats.result == "unsat"


def test_resolve_targets_errors():
    ts = design(COUNTER.format(lim=6))
    with pytest.raises(TargetNotFound):
        resolve_targets("CycleShift", ["nope"], ts)
    with pytest.raises(TargetNotFound):
        resolve_targets("ReplaceLiteral", ["top.v:99"], ts)
    with pytest.raises(TargetNotFound):
        resolve_targets("ConditionalOverwrite", ["top.v:4"], ts)
    assert resolve_targets("ReplaceLiteral", ["wrap"], ts)
    assert condition_sites(ts)


def test_template_validation():
    with pytest.raises(ValueError):
        RepairTemplate("Rewrite", ("x",))
    with pytest.raises(ValueError):
        RepairTemplate("CycleShift", ())
    with pytest.raises(ValueError):
        RepairTemplate("ReplaceLiteral", ("x",))


def test_one_flag_per_instrumented_site():
    src, ts, _tbs, tmpl = repair_case(TEMPLATE_CASES[1])
    _inst, fmap = instrument(ts, tmpl, src)
    assert len(fmap.change_flags) == len(fmap.sites) == len(condition_sites(ts, "q"))
    assert all(f in fmap.vars and fmap.vars[f].width == 1 for f in fmap.change_flags.values())


def test_counter_bmc_at_horizon_eight(needs_z3):
    ts = design(COUNTER.format(lim=6))
    stim = WaveformTrace.build({"rst": (1, [1] + [0] * 7), "en": (1, [1] * 8)})
    good = simulate(ts, Testbench(stim, WaveformTrace.build({}, 8))).restrict(ts.outputs)
    assert check(encode_bmc(ts, Testbench(stim, good), horizon=8).text).status == "sat"
    # a golden that wraps one cycle late fails simulation and so must be unsat
    late = WaveformTrace.build({"count": (3, list(good.values("count"))),
                                "wrap": (1, [0] * 8)}, 8)
    assert not compare(simulate(ts, Testbench(stim, late)), late)[0]
    assert check(encode_bmc(ts, Testbench(stim, late), horizon=8).text).status == "unsat"


SINGLE_LIMIT = """module top(input clk, input rst, input en, output [2:0] count, output wrap);
  reg [2:0] c;
  wire at_lim = (c == 3'd{lim});
  assign count = c;
  assign wrap = at_lim;
  always @(posedge clk) begin
    if (rst) c <= 3'd0;
    else if (en) c <= at_lim ? 3'd0 : c + 3'd1;
  end
endmodule
"""


def test_single_literal_counter_is_repaired_to_seven(needs_z3):
    src = project(SINGLE_LIMIT.format(lim=5))
    ts = elaborate(parse_project(src), "top")
    tbs = [golden_testbench(SINGLE_LIMIT.format(lim=7), n=40, seed=s, outputs=["count", "wrap"]) for s in range(2)]
    tmpl = RepairTemplate("ReplaceLiteral", resolve_targets("ReplaceLiteral", ["top.v:3"], ts))
    # brute force oracle: 7 is the only value that matches the golden
    fixes = [v for v in range(8) if all(compare(simulate(design(SINGLE_LIMIT.format(lim=v)), tb), tb.golden)[0]
                                        for tb in tbs)]
    assert fixes == [7]
    res = solve_repair(ts, tbs, tmpl, SolverConfig(timeout_s=60), src)
    assert res.stats.active_flags == 1
    (act,) = res.actions
    assert isinstance(act, RewriteLiteral) and (act.old_value, act.new_value) == (5, 7)


def test_missing_register_becomes_make_registered(needs_z3):
    src, ts, tbs, tmpl = repair_case(TEMPLATE_CASES[4])
    res = solve_repair(ts, tbs, tmpl, SolverConfig(timeout_s=60), src)
    assert [type(a) for a in res.actions] == [MakeRegistered] and res.actions[0].signal == "y"
