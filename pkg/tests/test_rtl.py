import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtlmend.rtl import (CombinationalLoop, Edit, MultipleDrivers, ParseError, Patch, RangeError, ReparseError,
                         SourceProject, UnsupportedFeature, apply_patch, elaborate, parse_project, parse_text,
                         print_modules, replace_text_patch)
from rtlmend.rtl import expr as E
from rtlmend.rtl.lexer import parse_number
from rtlmend.waveform import Testbench, WaveformTrace, simulate

from .support.designs import COUNTER, design, project


@pytest.mark.parametrize("text,expected", [
    ("12", (None, 12)),
    ("4'd9", (4, 9)),
    ("4'b1010", (4, 10)),
    ("8'hFF", (8, 255)),
    ("3'o7", (3, 7)),
    ("4'hFF", (4, 15)),
    ("8'b1010_0101", (8, 0xA5)),
    ("4'bx1x1", (4, 5)),
    ("'h10", (None, 16)),
])
def test_parse_number(text, expected):
    assert parse_number(text) == expected


def test_parse_number_rejects_tristate_and_signed():
    with pytest.raises(UnsupportedFeature):
        parse_number("4'bzz01")
    with pytest.raises(UnsupportedFeature):
        parse_number("4'sd3")


def test_printer_output_reparses_to_the_same_printout():
    text = COUNTER.format(lim=6) + """
module pair(input clk, input [7:0] d, input [1:0] sel, output reg [7:0] o, output [3:0] hi);
  wire [7:0] t = {d[3:0], d[7:4]};
  assign hi = t[7:4] ^ {4{sel[0]}};
  always @* begin
    case (sel)
      2'd0: o = t;
      2'd1: o = ~t;
      default: o = t + 8'd1;
    endcase
  end
endmodule
"""
    once = print_modules(parse_text(text))
    assert print_modules(parse_text(once)) == once


def test_parse_error_carries_location():
    with pytest.raises(ParseError) as ei:
        parse_text("module m(input a, output b);\n  assign b = a +;\nendmodule\n", "m.v")
    d = ei.value.diagnostic
    assert (d.file, d.line, d.code) == ("m.v", 2, "PARSE_ERROR")


@pytest.mark.parametrize("snippet", ["task t; endtask", "initial #5 x = 1;", "assign y = 1'bz;"])
def test_unsupported_constructs_are_rejected(snippet):
    with pytest.raises((UnsupportedFeature, ParseError)):
        parse_text(f"module m(input a, output y);\n  reg x;\n  {snippet}\nendmodule\n")


def test_counter_elaborates_and_counts():
    ts = design(COUNTER.format(lim=6))
    assert ts.inputs == {"rst": 1, "en": 1}
    assert ts.outputs == {"count": 3, "wrap": 1}
    assert ts.clock == "clk"
    ts.check()
    n = 10
    stim = WaveformTrace.build({"rst": (1, [1] + [0] * 9), "en": (1, [1] * 10)})
    got = simulate(ts, Testbench(stim, WaveformTrace.build({}, n)))
    assert got.values("count") == (0, 0, 1, 2, 3, 4, 5, 6, 0, 1)
    assert got.values("wrap") == (0, 0, 0, 0, 0, 0, 0, 1, 0, 0)


def test_hierarchy_is_flattened_with_dotted_names():
    text = """module inv(input [3:0] a, output [3:0] y);
  assign y = ~a;
endmodule
module top(input clk, input [3:0] x, output [3:0] z);
  wire [3:0] m;
  inv u0(.a(x), .y(m));
  reg [3:0] r;
  always @(posedge clk) r <= m;
  assign z = r;
endmodule
"""
    ts = design(text)
    assert "u0.y" in ts.comb or "u0.a" in ts.comb
    stim = WaveformTrace.build({"x": (4, [1, 2, 3])})
    got = simulate(ts, Testbench(stim, WaveformTrace.build({}, 3)))
    assert got.values("z") == (0, 14, 13)


def test_generate_for_is_unrolled():
    text = """module top(input [3:0] a, output [3:0] y);
  genvar i;
  generate
    for (i = 0; i < 4; i = i + 1) begin : g
      assign y[i] = a[3 - i];
    end
  endgenerate
endmodule
"""
    ts = design(text)
    stim = WaveformTrace.build({"a": (4, [0b0001, 0b0110])})
    got = simulate(ts, Testbench(stim, WaveformTrace.build({}, 2)))
    assert got.values("y") == (0b1000, 0b0110)


def test_combinational_loop_is_reported():
    with pytest.raises(CombinationalLoop) as ei:
        design("module top(input a, output y);\n  wire p, q;\n  assign p = q & a;\n  assign q = p;\n"
               "  assign y = q;\nendmodule\n")
    assert set(ei.value.cycle) >= {"p", "q"}


def test_multiple_drivers_are_reported():
    with pytest.raises(MultipleDrivers):
        design("module top(input a, input b, output y);\n  assign y = a;\n  assign y = b;\nendmodule\n")


def test_apply_patch_leaves_input_untouched():
    src = project(COUNTER.format(lim=4))
    p = replace_text_patch(src, "top.v", "(c == 3'd4) ? 3'd0", "(c == 3'd6) ? 3'd0")
    out = apply_patch(src, p)
    assert "3'd6) ? 3'd0" in out.text("top.v")
    assert "3'd6" not in src.text("top.v")


def test_apply_patch_errors():
    src = project(COUNTER.format(lim=4))
    n = len(src.text("top.v"))
    with pytest.raises(RangeError):
        apply_patch(src, Patch((Edit("top.v", 5, n + 1, ""),)))
    with pytest.raises(RangeError):
        apply_patch(src, Patch((Edit("top.v", 0, 10, "a"), Edit("top.v", 5, 12, "b"))))
    with pytest.raises(RangeError):
        apply_patch(src, Patch((Edit("other.v", 0, 0, "x"),)))
    with pytest.raises(ReparseError):
        apply_patch(src, Patch((Edit("top.v", 0, 6, "modul"),)))


def test_patch_json_roundtrip():
    p = Patch((Edit("a.v", 1, 3, "x"), Edit("b.v", 0, 0, "y")), "lint_fix", "d")
    assert Patch.from_json(p.to_json()) == p


def test_project_load_uses_paths_relative_to_root(tmp_path):
    (tmp_path / "rtl").mkdir()
    f = tmp_path / "rtl" / "top.v"
    f.write_text(COUNTER.format(lim=6))
    src = SourceProject.load([f], "top", root=tmp_path)
    assert src.paths == ["rtl/top.v"]
    parse_project(src)
    src.write(tmp_path / "copy")
    assert (tmp_path / "copy" / "rtl" / "top.v").read_text() == f.read_text()


# arithmetic oracle written independently of the evaluator, modulo 2**w
_ORACLE = {
    "+": lambda a, b, w: (a + b) % (1 << w),
    "-": lambda a, b, w: (a - b) % (1 << w),
    "*": lambda a, b, w: (a * b) % (1 << w),
    "&": lambda a, b, w: a & b,
    "|": lambda a, b, w: a | b,
    "^": lambda a, b, w: a ^ b,
    "==": lambda a, b, w: 1 if a == b else 0,
    "<": lambda a, b, w: 1 if a < b else 0,
    "<<": lambda a, b, w: (a * 2 ** b) % (1 << w) if b < w else 0,
    ">>": lambda a, b, w: a // 2 ** b if b < w else 0,
}


@given(st.sampled_from(sorted(_ORACLE)), st.integers(1, 16), st.data())
def test_binary_evaluation_matches_arithmetic_oracle(op, w, data):
    a = data.draw(st.integers(0, (1 << w) - 1))
    b = data.draw(st.integers(0, (1 << w) - 1))
    out_w = 1 if op in ("==", "<") else w
    e = E.Binary(op, E.Ref("a", w), E.Ref("b", w), out_w)
    assert E.evaluate(e, {"a": a, "b": b}) == _ORACLE[op](a, b, w)


@given(st.integers(1, 12), st.data())
def test_reductions_match_bit_counting(w, data):
    a = data.draw(st.integers(0, (1 << w) - 1))
    ones = sum((a >> i) & 1 for i in range(w))
    for op, want in (("&", ones == w), ("|", ones > 0), ("^", ones % 2 == 1)):
        assert E.evaluate(E.Reduce(op, E.Ref("a", w), 1), {"a": a}) == int(want)


def test_delay_control_is_unsupported():
    with pytest.raises(UnsupportedFeature) as ei:
        parse_text("module m(input clk, output reg x);\n  always @(posedge clk) #5 x <= 1;\nendmodule\n")
    assert "delay control" in str(ei.value)


def test_shift_register_has_three_chained_states():
    ts = design("module top(input clk, input d, output q);\n  reg r0, r1, r2;\n  always @(posedge clk) begin\n"
                "    r0 <= d;\n    r1 <= r0;\n    r2 <= r1;\n  end\n  assign q = r2;\nendmodule\n")
    assert ts.state_vars == {"r0": 1, "r1": 1, "r2": 1}
    assert ts.next == {"r0": E.Ref("d", 1), "r1": E.Ref("r0", 1), "r2": E.Ref("r1", 1)}


def test_narrow_operand_is_zero_extended():
    ts = design("module top(input [7:0] a, input [3:0] b, output [7:0] y);\n  assign y = a[7:0] + b[3:0];\nendmodule\n")
    y = ts.comb["y"]
    assert y.width == 8 and y.r == E.Concat((E.Literal(4, 0), E.Ref("b", 4)))
    got = simulate(ts, Testbench(WaveformTrace.build({"a": (8, [250, 3]), "b": (4, [15, 9])}),
                                 WaveformTrace.build({}, 2)))
    assert got.values("y") == ((250 + 15) % 256, 12)
