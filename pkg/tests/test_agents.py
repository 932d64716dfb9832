import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtlmend.agents import (ENV_KEY, AgentEnv, AgentTranscript, Budget, BudgetExceeded, BudgetExhausted,
                            ContextAgent, Fixed, Hypothesis, LiveBackend, LlmBackendError, Message, Meter,
                            NewHypothesis, NewPatch, OutOfPatience, PatchArgsError, Question,
                            ReplayBackend, ReplayDivergence, ToolCall, TranscriptError, TransportError, Workspace,
                            initial_state, lint_fix_agent, main_agent_step, make_backend, parse_tool_text,
                            patch_from_args, run_tool, tool_schemas, tool_text)
from rtlmend.agents.main import NodeState
from rtlmend.agents.subagents import SUMMARY_CAP, cap_summary
from rtlmend.agents.tools import NAV_TOOLS
from rtlmend.lint import LintMessage
from rtlmend.rtl import Edit, Patch

from .conftest import requires_z3
from .support.designs import golden_testbench, guarded, project
from .support.scripted import Script, call, text

REF = guarded("en && a")
BUGGY = guarded("en")
FIX = {"file": "top.v", "old": "else if (en)", "new": "else if (en && a)"}


def env_for(llm, budget=Budget(), **kw):
    tbs = [golden_testbench(REF, n=30, seed=s, name=f"tb{s}") for s in range(2)]
    return AgentEnv(Meter(llm, budget), tbs, **kw)


def workspace(text_=BUGGY):
    return Workspace(project(text_), [golden_testbench(REF, n=30)])


# -- transcripts ---------------------------------------------------------------------------------------------------

def test_transcript_rejects_orphan_tool_messages():
    t = AgentTranscript("main")
    t.say("user", "hi")
    with pytest.raises(TranscriptError):
        t.say("tool", "[run_sim]\nok")
    t.say("assistant", "", ToolCall("run_sim"))
    t.say("tool", "[run_sim]\nok")
    with pytest.raises(TranscriptError):
        t.say("robot", "x")
    with pytest.raises(TranscriptError):
        AgentTranscript("planner")
    with pytest.raises(TranscriptError):
        t.charge(-1)


def test_transcript_json_roundtrip():
    t = AgentTranscript("context")
    t.say("system", "s")
    t.say("assistant", "look", ToolCall("query_def", {"name": "q"}))
    t.say("tool", "[query_def]\nq: here")
    t.charge(17)
    back = AgentTranscript.from_json(json.loads(json.dumps(t.to_json())))
    assert back == t


_json_values = st.recursive(st.none() | st.booleans() | st.integers() | st.text(max_size=8),
                            lambda c: st.lists(c, max_size=3) | st.dictionaries(st.text(max_size=5), c, max_size=3),
                            max_leaves=8)


@given(st.from_regex(r"[a-z_]{1,12}", fullmatch=True), st.dictionaries(st.text(max_size=6), _json_values, max_size=4))
def test_tool_text_roundtrip(name, args):
    assert parse_tool_text("Some prose first.\n" + tool_text(ToolCall(name, args))) == ToolCall(name, args)


def test_parse_tool_text_without_fence():
    assert parse_tool_text("no tool here") is None


# -- replay --------------------------------------------------------------------------------------------------------

def _conversation():
    return [Message("system", "s"), Message("user", "u")]


def test_replay_reproduces_recorded_turns(tmp_path):
    rec = Script(main=[call("run_sim"), text("done")])
    a = rec.chat("main", _conversation(), [])
    msgs = _conversation() + [Message("assistant", a.content, a.tool_call), Message("tool", "[run_sim]\nok")]
    b = rec.chat("main", msgs, [])
    rec.save(tmp_path)
    rep = ReplayBackend.load(tmp_path)
    assert rep.chat("main", _conversation(), []) == a
    assert rep.chat("main", msgs, []) == b


def test_replay_divergence_names_the_position(tmp_path):
    rec = Script(main=[call("run_sim")])
    rec.chat("main", _conversation(), [])
    rec.save(tmp_path)
    rep = ReplayBackend.load(tmp_path)
    with pytest.raises(ReplayDivergence) as ei:
        rep.chat("main", [Message("system", "s"), Message("user", "something else")], [])
    assert ei.value.position == 2
    with pytest.raises(ReplayDivergence):
        rep.chat("context", _conversation(), [])


def test_replay_loading_errors(tmp_path):
    with pytest.raises(LlmBackendError):
        ReplayBackend.load(tmp_path / "missing")
    (tmp_path / "main.jsonl").write_text("{not json\n")
    with pytest.raises(LlmBackendError):
        ReplayBackend.load(tmp_path)
    with pytest.raises(LlmBackendError):
        make_backend("replay")
    with pytest.raises(LlmBackendError):
        make_backend("oracle")


def test_live_backend_without_key_is_a_transport_error(monkeypatch):
    monkeypatch.delenv(ENV_KEY, raising=False)
    with pytest.raises(TransportError):
        LiveBackend(url="http://127.0.0.1:9").chat("main", _conversation(), [])


def test_live_backend_payload_pairs_tool_results():
    msgs = _conversation() + [Message("assistant", "", ToolCall("run_sim", {})), Message("tool", "[run_sim]\nok")]
    body = LiveBackend(url="http://x", model="m", key="k")._payload(msgs, tool_schemas("main"))
    call_id = body["messages"][2]["tool_calls"][0]["id"]
    assert body["messages"][3] == {"role": "tool", "tool_call_id": call_id, "content": "[run_sim]\nok"}
    assert {t["function"]["name"] for t in body["tools"]} >= {"run_sim", "emit_patch"}


# -- budgets -------------------------------------------------------------------------------------------------------

def test_budget_validation():
    with pytest.raises(ValueError):
        Budget(max_ops_per_hypothesis=0)
    with pytest.raises(ValueError):
        Budget(max_tokens_total=-1)
    Budget(max_tokens_total=0, max_wall_seconds=0)


def test_meter_charges_tokens_and_enforces_limits():
    now = [0.0]
    m = Meter(Script(), Budget(max_tokens_total=10_000, max_wall_seconds=5.0), clock=lambda: now[0])
    t = AgentTranscript("context")
    t.say("user", "one two three")
    r = m.chat(t, [])
    assert m.tokens == r.tokens == t.tokens_used > 0 and m.calls == 1
    now[0] = 5.0
    with pytest.raises(BudgetExceeded):
        m.chat(t, [])
    m2 = Meter(Script(), Budget(max_tokens_total=0))
    with pytest.raises(BudgetExceeded):
        m2.chat(t, [])


# -- tools ---------------------------------------------------------------------------------------------------------

def test_patch_from_args_requires_unique_text():
    ws = workspace()
    p = patch_from_args(ws, FIX)
    assert p.edits[0].file == "top.v" and p.provenance == "agent"
    p = patch_from_args(ws, {"old": "else if (en)", "new": "else if (en && a)"})
    assert p.edits[0].file == "top.v"
    for bad in ({"file": "top.v", "old": "nowhere", "new": "x"},
                {"file": "top.v", "old": "q", "new": "x"},
                {"file": "other.v", "old": "en", "new": "x"},
                {"edits": []},
                {"file": "top.v", "old": 3, "new": "x"},
                {"use_smt_result": True}):
        with pytest.raises(PatchArgsError):
            patch_from_args(ws, bad)


def test_navigation_tools():
    ws = workspace()
    out = run_tool(ws, "query_def", {"name": "q"})
    assert out.startswith("[query_def]") and "top.v:1" in out and "driven at:" in out
    out = run_tool(ws, "query_ref", {"name": "en"})
    assert "top.v:4" in out
    out = run_tool(ws, "read_file", {"path": "top.v", "start": 2, "end": 3})
    assert "   2| " in out and "   4| " not in out
    assert "not found" in run_tool(ws, "read_file", {"path": "nope.v"})
    assert "nope: not found" in run_tool(ws, "query_def", {"name": "nope"})


def test_simulation_tools_report_the_failure():
    ws = workspace()
    assert "0/1 testbenches pass" in run_tool(ws, "run_sim", {})
    out = run_tool(ws, "diff_waveform", {})
    assert ">>" in out and "inputs and internal signals" in out
    ws.set_project(project(REF))
    assert "1/1 testbenches pass" in run_tool(ws, "run_sim", {})


@requires_z3
def test_smt_tool_and_mechanical_patch():
    ws = workspace()
    out = run_tool(ws, "smt_repair", {"template": "AddGuard", "targets": ["q"]})
    assert "found a fix" in out
    p = patch_from_args(ws, {"use_smt_result": True}, "smt_template")
    assert p.provenance == "smt_template"
    assert "could not run" in run_tool(ws, "smt_repair", {"template": "Bogus", "targets": ["q"]})


def test_tool_sets_per_agent_kind():
    assert [t["name"] for t in tool_schemas("context")] == list(NAV_TOOLS)
    assert "emit_patch" in [t["name"] for t in tool_schemas("lint_fix")]
    assert "query_def" not in [t["name"] for t in tool_schemas("main")]


# -- sub-agents ----------------------------------------------------------------------------------------------------

def test_context_agent_navigates_then_summarizes():
    llm = Script(context=[call("query_def", name="q"), call("edit_file", old="a", new="b"),
                          text("q counts enabled cycles. " * 200)])
    meter = Meter(llm, Budget())
    ca = ContextAgent(meter, workspace())
    summary = ca.query(Question("what drives q?"))
    assert len(summary) <= SUMMARY_CAP and summary.endswith("[truncated]")
    tools = [m.content for m in ca.transcript.messages if m.role == "tool"]
    assert tools[0].startswith("[query_def]") and "not available" in tools[1]
    calls = meter.calls
    note = ca.query(NewPatch(Patch((Edit("top.v", 0, 0, "//\n"),))))
    assert meter.calls == calls and "registered" in note
    assert "A patch was applied" in ca.transcript.messages[-1].content


def test_cap_summary_is_identity_below_cap():
    assert cap_summary("  short  ") == "short"
    assert len(cap_summary("x" * 50, 20)) == 20


def _lint(n):
    return [LintMessage("top.v", i + 1, 1, "UNUSED", "warning", f"m{i}", f"s{i}") for i in range(n)]


def test_lint_fix_agent_suppresses_by_index():
    llm = Script(lint_fix=[call("emit_patch", suppress=[{"index": 5, "reason": "x"}]),
                           call("emit_patch", suppress=[{"index": 1, "reason": "unrelated"}])])
    res = lint_fix_agent(Meter(llm, Budget()), workspace(), _lint(2))
    assert res.patch is None
    assert [(s.message.signal, s.reason) for s in res.suppressed] == [("s1", "unrelated")]
    assert "error: no lint message 5" in res.transcript.messages[3].content


def test_lint_fix_agent_patch_and_default():
    llm = Script(lint_fix=[call("emit_patch", **FIX)])
    res = lint_fix_agent(Meter(llm, Budget()), workspace(), _lint(1))
    assert res.patch is not None and res.patch.provenance == "lint_fix"
    res = lint_fix_agent(Meter(Script(), Budget()), workspace(), _lint(3))
    assert res.patch is None and len(res.suppressed) == 3
    with pytest.raises(ValueError):
        lint_fix_agent(Meter(Script(), Budget()), workspace(), [])


# -- the main agent ------------------------------------------------------------------------------------------------

def test_root_step_yields_a_hypothesis():
    llm = Script(main=[text("thinking"), call("run_sim"), call("propose_hypothesis", text="guard misses a")])
    env = env_for(llm)
    root = initial_state(project(BUGGY), env)
    assert root.counters.tb_passed == 0 and root.counters.tb_total == 2
    out = main_agent_step(root, env)
    assert isinstance(out, NewHypothesis)
    assert out.state.hypothesis == out.hypothesis and out.hypothesis.text == "guard misses a"
    assert out.hypothesis.parent is None
    # the root state is untouched by the step
    assert len(root.transcript.messages) == 2
    assert "Reply with exactly one tool call." in [m.content for m in out.state.transcript.messages]


def test_root_step_cannot_patch():
    llm = Script(main=[call("emit_patch", **FIX), call("propose_hypothesis", text="h")])
    env = env_for(llm)
    out = main_agent_step(initial_state(project(BUGGY), env), env)
    assert isinstance(out, NewHypothesis)
    assert any("propose a hypothesis before patching" in m.content for m in out.state.transcript.messages)


def _hyp_state(env):
    root = initial_state(project(BUGGY), env)
    return NodeState(root.project, root.transcript, hypothesis=Hypothesis(1, "guard", None, 2),
                     counters=root.counters)


def test_validation_fixes_the_design():
    llm = Script(main=[call("emit_patch", **FIX)], context=[call("query_def", name="q"), text("q is a counter")])
    env = env_for(llm)
    out = main_agent_step(_hyp_state(env), env)
    assert isinstance(out, Fixed)
    st_ = out.state
    assert st_.counters.tb_passed == st_.counters.tb_total == 2
    assert st_.counters.n_queries == 1 and st_.counters.n_tokens == env.meter.tokens > 0
    assert "(en && a)" in st_.project.text("top.v") and len(st_.patches) == 1


def test_uncompilable_patch_is_counted_and_not_applied():
    llm = Script(main=[call("emit_patch", file="top.v", old="else if (en)", new="else if (en &&"),
                       call("emit_patch", **FIX)])
    env = env_for(llm)
    out = main_agent_step(_hyp_state(env), env)
    assert isinstance(out, Fixed)
    assert out.state.counters.n_compile_errors == 1 and len(out.state.patches) == 1


def test_operation_budget_forces_a_new_hypothesis():
    llm = Script(main=[call("run_sim"), call("run_sim"), call("propose_hypothesis", text="forced")])
    env = env_for(llm, Budget(max_ops_per_hypothesis=2))
    out = main_agent_step(_hyp_state(env), env)
    assert isinstance(out, OutOfPatience)
    assert out.forced is not None and out.forced.text == "forced" and out.forced.parent == 1
    assert out.state.hypothesis == out.forced


def test_give_up_and_unknown_tools():
    llm = Script(main=[call("format_disk"), call("give_up_hypothesis", reason="dead end")])
    env = env_for(llm)
    out = main_agent_step(_hyp_state(env), env)
    assert isinstance(out, OutOfPatience) and out.forced is None and "dead end" in out.reason
    assert any("error: unknown tool" in m.content for m in out.state.transcript.messages)


def test_token_budget_ends_the_step():
    env = env_for(Script(), Budget(max_tokens_total=0))
    out = main_agent_step(initial_state(project(BUGGY), env), env)
    assert isinstance(out, BudgetExhausted) and "token budget" in out.reason


def test_smt_tool_hidden_when_disabled():
    llm = Script(main=[call("smt_repair", template="AddGuard", targets=["q"]), call("propose_hypothesis", text="h")])
    env = env_for(llm, smt_enabled=False)
    out = main_agent_step(initial_state(project(BUGGY), env), env)
    msgs = [m.content for m in out.state.transcript.messages]
    assert any("error: unknown tool" in c for c in msgs)


def test_sub_agent_dialogues_stay_out_of_the_main_transcript():
    lint_src = BUGGY.replace("  assign y = q[0];\n", "  wire spare;\n  assign spare = a;\n  assign y = q[0];\n")
    llm = Script(main=[call("emit_patch", file="top.v", old="else if (en)", new="else if (en && a)")],
                 context=[call("query_ref", name="q"), text("summary: q increments")],
                 lint_fix=[call("query_def", name="spare"), call("emit_patch", suppress=[{"index": 0,
                                                                                             "reason": "spare"}])])
    env = env_for(llm)
    root = initial_state(project(lint_src), env)
    state = NodeState(root.project, root.transcript, hypothesis=Hypothesis(1, "guard", None, 2),
                      counters=root.counters)
    out = main_agent_step(state, env)
    assert isinstance(out, Fixed)
    main_text = [m.content for m in out.state.transcript.messages]
    assert not any(c.startswith(("[query_ref]", "[query_def]")) for c in main_text)
    sub_tool_outputs = [m[-1].content for k, m in llm.seen if k != "main" and m[-1].role == "tool"]
    assert sub_tool_outputs
    assert not any(o in c for o in sub_tool_outputs for c in main_text)
    assert "Context agent: summary: q increments" in main_text
    assert any(c.startswith("Lint-fix agent handled 1 lint message(s) suppressing 1") for c in main_text)
    assert len(out.state.suppressed) == 1


def test_counting_every_tool_as_a_query():
    llm = Script(main=[call("run_sim"), call("diff_waveform"), call("emit_patch", **FIX)])
    env = env_for(llm, count_all_tools=True)
    out = main_agent_step(_hyp_state(env), env)
    # one context query from validation plus three main-agent tool calls
    assert out.state.counters.n_queries == 4


def test_replayed_step_is_identical(tmp_path):
    def script():
        return Script(main=[call("run_sim"), call("emit_patch", **FIX)],
                      context=[call("query_def", name="q"), text("q counts")])
    rec = script()
    env = env_for(rec)
    first = main_agent_step(_hyp_state(env), env)
    rec.save(tmp_path)
    env2 = env_for(ReplayBackend.load(tmp_path))
    second = main_agent_step(_hyp_state(env2), env2)
    assert second.state.transcript == first.state.transcript
    assert second.state.patches == first.state.patches

