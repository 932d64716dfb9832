"""Hierarchy flattening and construction of the word-level transition system."""

from __future__ import annotations

import dataclasses
import graphlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from . import ast as A
from . import expr as E
from .source import (CombinationalLoop, HierarchyError, MultipleDrivers, RtlError, Span,
                     UnsupportedFeature)
from .widths import (ConstInfo, NotConstant, Scope, SignalInfo, WidthWarning, assignment_width_warning,
                     const_eval, const_int, lower, lower_cond, lower_to, module_scope, self_width)

GENERATE_LIMIT = 4096
LATCH_SUFFIX = "$latch"


@dataclass(frozen=True)
class TransitionSystem:
    """Word-level state machine of a flattened design with one implicit clock.

    ``comb`` is in topological order: each definition only refers to inputs,
    state variables, free constants and earlier ``comb`` entries.
    """

    top: str
    inputs: dict[str, int]
    outputs: dict[str, int]
    state_vars: dict[str, int]
    init: dict[str, int]
    next: dict[str, E.Expr]
    comb: dict[str, E.Expr]
    clock: Optional[str] = None
    # free constants: unconstrained in BMC, supplied explicitly to the simulator
    free: dict[str, int] = field(default_factory=dict)
    origins: dict[str, Span] = field(default_factory=dict, compare=False, repr=False)

    def widths(self) -> dict[str, int]:
        out = dict(self.inputs)
        out.update(self.state_vars)
        out.update(self.free)
        out.update((k, v.width) for k, v in self.comb.items())
        return out

    def width(self, name: str) -> int:
        return self.widths()[name]

    def is_defined(self, name: str) -> bool:
        return name in self.inputs or name in self.state_vars or name in self.comb or name in self.free

    def check(self) -> None:
        """Validate the structural invariants; raises ValueError."""
        known = set(self.inputs) | set(self.state_vars) | set(self.free)
        for name, e in self.comb.items():
            E.check(e)
            missing = E.refs(e) - known
            if missing:
                raise ValueError(f"comb {name} refers to undefined or later signals {sorted(missing)}")
            known.add(name)
        for name, e in self.next.items():
            E.check(e)
            if name not in self.state_vars:
                raise ValueError(f"next function for non-state {name}")
            if e.width != self.state_vars[name]:
                raise ValueError(f"next[{name}] has width {e.width}, expected {self.state_vars[name]}")
            missing = E.refs(e) - known
            if missing:
                raise ValueError(f"next[{name}] refers to undefined signals {sorted(missing)}")
        if set(self.next) != set(self.state_vars):
            raise ValueError("every state variable needs exactly one next function")
        for o in self.outputs:
            if o not in known:
                raise ValueError(f"output {o} is not defined")

    def replace(self, **changes) -> "TransitionSystem":
        return dataclasses.replace(self, **changes)


def order_comb(comb: dict[str, E.Expr], origins: Optional[dict[str, Span]] = None) -> dict[str, E.Expr]:
    """Topologically order comb definitions; raises CombinationalLoop on a cycle."""
    ts = graphlib.TopologicalSorter()
    for name, e in comb.items():
        ts.add(name, *sorted(r for r in E.refs(e) if r in comb))
    try:
        order = list(ts.static_order())
    except graphlib.CycleError as exc:
        cycle = list(exc.args[1])
        span = (origins or {}).get(cycle[0])
        raise CombinationalLoop(cycle, span) from None
    return {n: comb[n] for n in order}


@dataclass(frozen=True)
class Driver:
    signal: str
    hi: int
    lo: int
    kind: str  # 'assign' | 'port' | 'always_ff' | 'always_comb'
    span: Span


@dataclass
class DesignInfo:
    """Everything learned while elaborating, including defects lint reports on."""

    top: str
    widths: dict[str, int] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)  # input | output | wire | reg
    decl_spans: dict[str, Span] = field(default_factory=dict)
    drivers: dict[str, list[Driver]] = field(default_factory=lambda: defaultdict(list))
    reads: set[str] = field(default_factory=set)
    latches: dict[str, Span] = field(default_factory=dict)
    width_warnings: list[WidthWarning] = field(default_factory=list)
    top_inputs: list[str] = field(default_factory=list)
    top_outputs: list[str] = field(default_factory=list)
    clock: Optional[str] = None
    ts: Optional[TransitionSystem] = None
    error: Optional[RtlError] = None


class _ZeroEnv(dict):
    def __missing__(self, key):
        return 0


class _Exec:
    """Symbolic execution of one procedural block.

    ``read`` holds values visible to later statements (blocking updates only);
    ``out`` holds the value each assigned variable has at the end of the block.
    """

    def __init__(self, el: "_Elaborator", scope: Scope, seq: bool):
        self.el = el
        self.scope = scope
        self.seq = seq
        self.read: dict[str, E.Expr] = {}
        self.out: dict[str, E.Expr] = {}
        self.bits: dict[str, set[int]] = {}  # bits assigned anywhere in the block

    def width(self, name: str) -> int:
        return self.el.info.widths[name]

    def default(self, name: str) -> E.Expr:
        w = self.width(name)
        return E.Ref(name, w) if self.seq else E.Ref(name + LATCH_SUFFIX, w)

    def value(self, e: E.Expr) -> E.Expr:
        self.el.info.reads.update(E.refs(e))
        return E.substitute(e, self.read) if self.read else e

    def stmt(self, s: A.Stmt) -> None:
        if isinstance(s, A.Block):
            for x in s.stmts:
                self.stmt(x)
        elif isinstance(s, A.AssignStmt):
            self.assign(s)
        elif isinstance(s, A.IfStmt):
            c0 = lower_cond(s.cond, self.scope)
            c = self.value(c0)
            if c.site is None:
                c = dataclasses.replace(c, site=c0.site)
            r0, o0 = dict(self.read), dict(self.out)
            self.stmt(s.then)
            r1, o1 = self.read, self.out
            self.read, self.out = dict(r0), dict(o0)
            if s.other is not None:
                self.stmt(s.other)
            r2, o2 = self.read, self.out
            self.out = self.merge(c, o1, o2, o0, self.default, s.span)
            self.read = self.merge(c, r1, r2, r0, lambda n: E.Ref(n, self.width(n)), s.span)
        elif isinstance(s, A.CaseStmt):
            self.case(s)
        elif isinstance(s, A.NullStmt):
            pass
        else:
            raise TypeError(s)

    @staticmethod
    def merge(c, a: dict, b: dict, base: dict, default, span) -> dict:
        out = dict(base)
        for k in list(a) + [k for k in b if k not in a]:
            x = a.get(k) or base.get(k) or default(k)
            y = b.get(k) or base.get(k) or default(k)
            # identical objects only: equal-looking branches may hold distinct literal sites
            same = x is y or (isinstance(x, E.Ref) and x == y)
            out[k] = x if same else E.Ternary(c, x, y, x.width, span)
        return out

    def case(self, s: A.CaseStmt) -> None:
        labels = [l for it in s.items for l in (it.labels or ())]
        sw = max([self_width(s.subject, self.scope)] + [self_width(l, self.scope) for l in labels])
        subj = self.value(lower(s.subject, self.scope, sw))
        r0, o0 = dict(self.read), dict(self.out)
        branches = []
        fallback = (r0, o0)
        for it in s.items:
            self.read, self.out = dict(r0), dict(o0)
            self.stmt(it.body)
            if it.labels is None:
                fallback = (self.read, self.out)
                continue
            conds = [E.Binary("==", subj, self.value(lower(l, self.scope, sw)), 1) for l in it.labels]
            c = conds[0]
            for x in conds[1:]:
                c = E.Binary("||", c, x, 1)
            branches.append((c, self.read, self.out, it.span))
        acc_r, acc_o = fallback
        for c, r, o, span in reversed(branches):
            acc_o = self.merge(c, o, acc_o, o0, self.default, span)
            acc_r = self.merge(c, r, acc_r, r0, lambda n: E.Ref(n, self.width(n)), span)
        self.read, self.out = acc_r, acc_o

    def assign(self, s: A.AssignStmt) -> None:
        lw = self_width(s.lhs, self.scope)
        w = assignment_width_warning(s.lhs, s.rhs, self.scope)
        if w:
            self.el.warn(w)
        rhs = self.value(lower_to(s.rhs, self.scope, lw))
        for name, hi, lo, piece, dyn in self.el.lvalue_pieces(s.lhs, rhs, self.scope, allow_dynamic=True):
            base = self.out.get(name) or self.default(name)
            self.bits.setdefault(name, set()).update(range(base.width) if dyn is not None else range(lo, hi + 1))
            if dyn is not None:
                new = _insert_dynamic(base, self.value(dyn), piece)
            else:
                new = _insert(base, hi, lo, piece)
            self.out[name] = new
            if s.blocking:
                self.read[name] = new


def _bit_runs(bits: set[int]) -> list[tuple[int, int]]:
    """Contiguous ``(hi, lo)`` runs of a bit set, lowest first."""
    runs: list[tuple[int, int]] = []
    for b in sorted(bits):
        if runs and runs[-1][0] == b - 1:
            runs[-1] = (b, runs[-1][1])
        else:
            runs.append((b, b))
    return runs


def _insert(base: E.Expr, hi: int, lo: int, piece: E.Expr) -> E.Expr:
    w = base.width
    if lo == 0 and hi == w - 1:
        return piece
    parts = []
    if hi < w - 1:
        parts.append(E.Slice(base, w - 1, hi + 1))
    parts.append(piece)
    if lo > 0:
        parts.append(E.Slice(base, lo - 1, 0))
    return E.Concat(tuple(parts))


def _insert_dynamic(base: E.Expr, idx: E.Expr, bit: E.Expr) -> E.Expr:
    w = base.width
    sel = E.Binary("<<", E.const(w, 1), idx, w)
    keep = E.Binary("&", base, E.Unary("~", sel, w), w)
    put = E.Binary("<<", E.zext(bit, w), idx, w)
    return E.Binary("|", keep, put, w)


class _Elaborator:
    def __init__(self, modules: list[A.AstModule], top: str, strict: bool):
        self.mods = {m.name: m for m in modules}
        self.strict = strict
        self.info = DesignInfo(top)
        # continuous drivers, possibly partial: (hi, lo, expr, span)
        self.parts: dict[str, list] = defaultdict(list)
        # whole-signal definitions from procedural blocks: (kind, expr, span)
        self.blocks: dict[str, list] = defaultdict(list)
        self.clocks: list[tuple[str, Span]] = []
        self.init: dict[str, int] = {}
        self.initial_blocks: list[tuple[A.InitialBlock, Scope]] = []
        self._warned: set = set()

    def fail(self, exc: RtlError) -> None:
        if self.strict:
            raise exc
        if self.info.error is None:
            self.info.error = exc

    def warn(self, w: WidthWarning) -> None:
        key = (w.span, w.signal)
        if key not in self._warned:
            self._warned.add(key)
            self.info.width_warnings.append(w)

    # -- hierarchy ---------------------------------------------------------

    def instantiate(self, mod: A.AstModule, prefix: str, overrides: dict[str, int], stack: list[str]) -> Scope:
        local = module_scope(mod, overrides)
        scope = Scope({k: dataclasses.replace(v, name=prefix + k) for k, v in local.signals.items()}, local.consts)
        info = self.info
        decl_spans = {p.name: p.name_span for p in mod.ports}
        for d in mod.decls:
            decl_spans.setdefault(d.name, d.name_span)
        for k, v in scope.signals.items():
            info.widths[v.name] = v.width
            info.kinds[v.name] = v.kind
            info.decl_spans[v.name] = decl_spans.get(k, mod.name_span)
        for d in mod.decls:
            if d.init is None:
                continue
            if d.kind == "wire":
                self.cont_assign(A.Ident(d.name, d.name_span), d.init, scope, d.span, "assign")
            else:
                sig = scope.signals[d.name]
                v = lower_to(d.init, scope, sig.width)
                try:
                    self.init[sig.name] = E.evaluate(v, _ZeroEnv(self.init))
                except KeyError:
                    pass
        self.items(mod.items, scope, prefix, stack)
        return scope

    def items(self, items, scope: Scope, prefix: str, stack: list[str], inst_prefix: Optional[str] = None) -> None:
        inst_prefix = prefix if inst_prefix is None else inst_prefix
        for it in items:
            if isinstance(it, A.ContinuousAssign):
                self.cont_assign(it.lhs, it.rhs, scope, it.span, "assign")
            elif isinstance(it, A.AlwaysBlock):
                self.always(it, scope)
            elif isinstance(it, A.InitialBlock):
                self.initial_blocks.append((it, scope))
            elif isinstance(it, A.Instance):
                self.instance(it, scope, stack, inst_prefix)
            elif isinstance(it, A.GenerateFor):
                self.generate(it, scope, prefix, stack, inst_prefix)
            elif isinstance(it, (A.ParamDecl, A.GenvarDecl, A.NetDecl)):
                pass
            else:
                raise TypeError(it)

    def generate(self, g: A.GenerateFor, scope: Scope, prefix: str, stack: list[str], inst_prefix: str) -> None:
        consts = scope.const_values()
        try:
            v = const_eval(g.start, consts)
            n = 0
            while const_eval(g.cond, {**consts, g.var: v}):
                n += 1
                if n > GENERATE_LIMIT:
                    raise UnsupportedFeature(f"generate loop with more than {GENERATE_LIMIT} iterations", g.span)
                sub = scope.child(**{g.var: ConstInfo(v)})
                self.items(g.items, sub, prefix, stack, f"{inst_prefix}{g.label or 'genblk'}[{v}].")
                v = const_eval(g.step, {**consts, g.var: v})
        except NotConstant:
            raise UnsupportedFeature("non-constant generate loop bounds", g.span) from None

    def instance(self, inst: A.Instance, scope: Scope, stack: list[str], inst_prefix: str) -> None:
        child = self.mods.get(inst.module)
        if child is None:
            raise HierarchyError(f"unknown module {inst.module!r}", inst.span)
        if inst.module in stack:
            raise HierarchyError(f"recursive instantiation of {inst.module!r}", inst.span)
        header = [p.name for p in child.params] or [p.name for p in child.items
                                                     if isinstance(p, A.ParamDecl) and not p.local]
        overrides = {}
        for i, c in enumerate(inst.params):
            name = c.port if c.port is not None else (header[i] if i < len(header) else None)
            if name is None or name not in header:
                raise HierarchyError(f"unknown parameter override for {inst.module!r}", c.span)
            if c.expr is not None:
                overrides[name] = const_int(c.expr, scope)
        cprefix = f"{inst_prefix}{inst.name}."
        cscope = self.instantiate(child, cprefix, overrides, stack + [inst.module])
        conns: dict[str, A.Connection] = {}
        for i, c in enumerate(inst.conns):
            name = c.port if c.port is not None else (child.port_order[i] if i < len(child.port_order) else None)
            if name is None or child.port(name) is None:
                raise HierarchyError(f"module {inst.module!r} has no port {c.port or i!r}", c.span)
            conns[name] = c
        for port in child.ports:
            c = conns.get(port.name)
            if c is None or c.expr is None:
                continue
            psig = cscope.signals[port.name]
            if port.direction == "input":
                rhs = lower_to(c.expr, scope, psig.width)
                self.info.reads.update(E.refs(rhs))
                self.add_part(psig.name, psig.width - 1, 0, rhs, c.span, "port")
            else:
                lw = self_width(c.expr, scope)
                rhs = E.fit(E.Ref(psig.name, psig.width, c.span), lw)
                self.info.reads.add(psig.name)
                for name, hi, lo, piece, _ in self.lvalue_pieces(c.expr, rhs, scope):
                    self.add_part(name, hi, lo, piece, c.span, "port")

    # -- drivers -----------------------------------------------------------

    def lvalue_pieces(self, lhs: A.AstExpr, rhs: E.Expr, scope: Scope, allow_dynamic: bool = False):
        """Split an assignment into ``(signal, hi, lo, piece, dynamic_index)`` tuples."""
        if isinstance(lhs, A.ConcatExpr):
            out = []
            top = rhs.width
            for p in lhs.parts:
                w = self_width(p, scope)
                out.extend(self.lvalue_pieces(p, E.Slice(rhs, top - 1, top - w), scope, allow_dynamic))
                top -= w
            return out
        if isinstance(lhs, A.Ident):
            info = self._target(lhs, scope)
            return [(info.name, info.width - 1, 0, E.fit(rhs, info.width), None)]
        if isinstance(lhs, (A.Index, A.RangeSel, A.IndexedSel)):
            if not isinstance(lhs.base, A.Ident):
                raise UnsupportedFeature("nested select on assignment target", lhs.span)
            info = self._target(lhs.base, scope)
            if isinstance(lhs, A.Index):
                try:
                    i = const_eval(lhs.index, scope.const_values())
                except NotConstant:
                    if not allow_dynamic:
                        raise UnsupportedFeature("variable index on a continuous assignment target", lhs.span)
                    if info.lsb != 0:
                        raise UnsupportedFeature("dynamic index into a range with nonzero lsb", lhs.span)
                    return [(info.name, 0, 0, E.fit(rhs, 1), lower(lhs.index, scope))]
                hi = lo = i
            elif isinstance(lhs, A.RangeSel):
                hi, lo = const_int(lhs.msb, scope), const_int(lhs.lsb, scope)
            else:
                s, w = const_int(lhs.start, scope), const_int(lhs.width, scope)
                hi, lo = (s + w - 1, s) if lhs.ascending else (s, s - w + 1)
            lower(lhs, scope)  # range check
            hi, lo = hi - info.lsb, lo - info.lsb
            return [(info.name, hi, lo, E.fit(rhs, hi - lo + 1), None)]
        raise UnsupportedFeature("expression is not assignable", lhs.span)

    def _target(self, ident: A.Ident, scope: Scope) -> SignalInfo:
        if ident.name in scope.consts:
            raise UnsupportedFeature("assignment to a parameter", ident.span)
        return scope.signal(ident)

    def add_part(self, name: str, hi: int, lo: int, e: E.Expr, span: Span, kind: str) -> None:
        self.parts[name].append((hi, lo, e, span))
        self.info.drivers[name].append(Driver(name, hi, lo, kind, span))

    def cont_assign(self, lhs: A.AstExpr, rhs_ast: A.AstExpr, scope: Scope, span: Span, kind: str) -> None:
        lw = self_width(lhs, scope)
        w = assignment_width_warning(lhs, rhs_ast, scope)
        if w:
            self.warn(w)
        rhs = lower_to(rhs_ast, scope, lw)
        self.info.reads.update(E.refs(rhs))
        for name, hi, lo, piece, _ in self.lvalue_pieces(lhs, rhs, scope):
            self.add_part(name, hi, lo, piece, span, kind)

    def always(self, blk: A.AlwaysBlock, scope: Scope) -> None:
        seq = blk.is_sequential
        ex = _Exec(self, scope, seq)
        ex.stmt(blk.body)
        kind = "always_ff" if seq else "always_comb"
        if seq:
            clk = scope.signal(A.Ident(blk.clock, blk.event_span)).name
            self.clocks.append((clk, blk.event_span))
        for name, e in ex.out.items():
            w = self.info.widths[name]
            self.blocks[name].append((kind, e, blk.span))
            for hi, lo in _bit_runs(ex.bits.get(name) or set(range(w))):
                self.info.drivers[name].append(Driver(name, hi, lo, kind, blk.span))
            if not seq and name + LATCH_SUFFIX in E.refs(e):
                self.info.latches[name] = blk.span

    # -- assembly ----------------------------------------------------------

    def run(self) -> DesignInfo:
        info = self.info
        top = self.mods.get(info.top)
        if top is None:
            raise HierarchyError(f"top module {info.top!r} not found")
        self.instantiate(top, "", {}, [top.name])
        info.top_inputs = [p.name for p in top.ports if p.direction == "input"]
        info.top_outputs = [p.name for p in top.ports if p.direction == "output"]
        for p in top.ports:
            if p.direction not in ("input", "output"):
                raise UnsupportedFeature(f"{p.direction} port", p.span)
        self.build()
        return info

    def _resolve_clock(self, comb: dict[str, E.Expr]) -> tuple[Optional[str], set[str]]:
        roots = {}
        aliases = set()
        for clk, span in self.clocks:
            name, seen = clk, {clk}
            while name in comb and isinstance(comb[name], E.Ref):
                name = comb[name].name
                seen.add(name)
            if name not in self.info.top_inputs:
                raise UnsupportedFeature("clock that is not a top-level input", span)
            roots.setdefault(name, span)
            aliases |= seen
        if len(roots) > 1:
            raise UnsupportedFeature("multiple clocks", list(roots.values())[1])
        return (next(iter(roots)) if roots else None), aliases

    def build(self) -> None:
        info = self.info
        inputs = {n: info.widths[n] for n in info.top_inputs}
        state: dict[str, int] = {}
        nxt: dict[str, E.Expr] = {}
        comb: dict[str, E.Expr] = {}
        for name in info.widths:
            w = info.widths[name]
            parts = self.parts.get(name, [])
            blocks = self.blocks.get(name, [])
            if name in inputs:
                if parts or blocks:
                    span = (parts[0][3] if parts else blocks[0][2])
                    self.fail(MultipleDrivers(name, span))
                continue
            if blocks and (parts or len(blocks) > 1):
                span = parts[0][3] if parts else blocks[1][2]
                self.fail(MultipleDrivers(name, span))
            if blocks:
                kind, e, _ = blocks[0]
                if kind == "always_ff":
                    state[name] = w
                    nxt[name] = e
                else:
                    comb[name] = e
                    if name in info.latches:
                        state[name + LATCH_SUFFIX] = w
                        nxt[name + LATCH_SUFFIX] = E.Ref(name, w)
                continue
            if parts:
                comb[name] = self._combine(name, w, parts)
                continue
            comb[name] = E.const(w, self.init.get(name, 0))
        clock, aliases = self._resolve_clock(comb)
        if clock is not None:
            inputs.pop(clock)
            for a in aliases:
                comb.pop(a, None)
            for name, e in list(comb.items()) + list(nxt.items()):
                used = E.refs(e) & (aliases | {clock})
                if used:
                    raise UnsupportedFeature("clock used as data", info.decl_spans.get(name))
        info.clock = clock
        init = {n: self.init.get(n, 0) & E.mask(w) for n, w in state.items()}
        self._run_initial(init, state)
        try:
            comb = order_comb(comb, info.decl_spans)
        except CombinationalLoop as exc:
            self.fail(exc)
            return
        outputs = {n: info.widths[n] for n in info.top_outputs}
        origins = {n: s for n, s in info.decl_spans.items()}
        for n in list(state):
            if n.endswith(LATCH_SUFFIX):
                origins[n] = info.latches[n[:-len(LATCH_SUFFIX)]]
        info.ts = TransitionSystem(info.top, inputs, outputs, state, init, nxt, comb, clock, {}, origins)

    def _combine(self, name: str, w: int, parts: list) -> E.Expr:
        parts = sorted(parts, key=lambda p: (p[1], p[0]))
        for a, b in zip(parts, parts[1:]):
            if b[1] <= a[0]:
                self.fail(MultipleDrivers(name, b[3]))
        chunks: list[E.Expr] = []
        pos = 0
        for hi, lo, e, _ in parts:
            if lo < pos:
                continue  # overlapping driver, already reported
            if lo > pos:
                chunks.append(E.const(lo - pos, 0))
            chunks.append(e)
            pos = hi + 1
        if pos < w:
            chunks.append(E.const(w - pos, 0))
        if len(chunks) == 1:
            return chunks[0]
        return E.Concat(tuple(reversed(chunks)))

    def _run_initial(self, init: dict[str, int], state: dict[str, int]) -> None:
        for blk, scope in self.initial_blocks:
            ex = _Exec(self, scope, seq=True)
            ex.stmt(blk.body)
            env = _ZeroEnv(init)
            for name, e in ex.out.items():
                if name in state:
                    init[name] = E.evaluate(e, env)


def analyze(modules: list[A.AstModule], top: str) -> DesignInfo:
    """Elaborate leniently: driver conflicts and loops are recorded, not raised."""
    el = _Elaborator(modules, top, strict=False)
    try:
        return el.run()
    except RtlError as exc:
        el.info.error = exc
        return el.info


def elaborate(modules: list[A.AstModule], top: str) -> TransitionSystem:
    """Flatten ``top`` and its instances into a transition system.

    Raises CombinationalLoop, MultipleDrivers or HierarchyError (UnsupportedFeature
    for constructs only detectable after flattening, e.g. a second clock).
    """
    info = _Elaborator(modules, top, strict=True).run()
    assert info.ts is not None
    return info.ts
