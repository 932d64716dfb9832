"""Repair templates: instrumentation of a transition system with free repair variables."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from ..rtl import expr as E
from ..rtl.elaborate import TransitionSystem, order_comb
from ..rtl.lexer import parse_number
from ..rtl.source import RtlError, SourceProject, Span
from .actions import (GuardCondition, Literal, MakeCombinational, MakeRegistered, OverwriteUnder, RepairAction,
                      RewriteLiteral)

TEMPLATE_KINDS = ("ReplaceLiteral", "AddGuard", "ConditionalOverwrite", "CycleShift")
MAX_PRODUCT = 4
MAX_CANDIDATES = 16
VAR_PREFIX = "rep$"

Target = Union[str, Span]


class TargetNotFound(ValueError):
    pass


@dataclass(frozen=True)
class RepairTemplate:
    kind: str
    targets: tuple[Target, ...]

    def __post_init__(self):
        if self.kind not in TEMPLATE_KINDS:
            raise ValueError(f"unknown template {self.kind!r}")
        if not self.targets:
            raise ValueError("template needs at least one target")
        if self.kind == "CycleShift" and not all(isinstance(t, str) for t in self.targets):
            raise ValueError("CycleShift targets must be signal names")
        if self.kind == "ReplaceLiteral" and not all(isinstance(t, Span) for t in self.targets):
            raise ValueError("ReplaceLiteral targets must be literal sites")
        if self.kind == "ConditionalOverwrite" and not all(isinstance(t, str) for t in self.targets):
            raise ValueError("ConditionalOverwrite targets must be signal names")


@dataclass(frozen=True)
class FreeVar:
    name: str
    width: int
    kind: str  # 'const_bits' | 'bool_select' | 'phi_select'
    site: Target


@dataclass(frozen=True)
class _Slot:
    enable: str
    negate: str
    select: str


@dataclass(frozen=True)
class SiteInfo:
    """Decoding data for one instrumented site."""

    key: Target
    flag: str
    kind: str
    value: Optional[str] = None
    mode: Optional[str] = None
    slots: tuple[_Slot, ...] = ()
    candidates: tuple[str, ...] = ()
    width: int = 0
    old_value: int = 0
    registered: bool = False
    decl: Optional[Span] = None


@dataclass(frozen=True)
class FreeVarMap:
    template: RepairTemplate
    vars: dict[str, FreeVar]
    change_flags: dict[Target, str]
    sites: tuple[SiteInfo, ...] = field(default=())

    def decode(self, model: dict[str, int]) -> tuple[RepairAction, ...]:
        out: list[RepairAction] = []
        for s in self.sites:
            if not model.get(s.flag, 0):
                continue
            if s.kind == "ReplaceLiteral":
                out.append(RewriteLiteral(s.key, s.old_value, model.get(s.value, 0), s.width))
            elif s.kind == "AddGuard":
                mode = model.get(s.mode, 0)
                out.append(GuardCondition(s.key, bool(mode & 2), "||" if mode & 1 else "&&",
                                          _decode_product(s, model)))
            elif s.kind == "ConditionalOverwrite":
                out.append(OverwriteUnder(s.key, _decode_product(s, model), model.get(s.value, 0), s.width, s.decl))
            elif s.registered:
                out.append(MakeCombinational(s.key, s.decl))
            else:
                out.append(MakeRegistered(s.key, s.decl))
        return tuple(out)


def _decode_product(s: SiteInfo, model: dict[str, int]) -> tuple[Literal, ...]:
    lits: list[Literal] = []
    for slot in s.slots:
        if not model.get(slot.enable, 0):
            continue
        k = min(model.get(slot.select, 0), len(s.candidates) - 1)
        lit = Literal(s.candidates[k], not model.get(slot.negate, 0))
        if lit not in lits:
            lits.append(lit)
    return tuple(lits)


# -- helpers -----------------------------------------------------------------

class _Vars:
    def __init__(self):
        self.vars: dict[str, FreeVar] = {}
        self.n = 0

    def new(self, stem: str, width: int, kind: str, site: Target) -> str:
        name = f"{VAR_PREFIX}{stem}{self.n}"
        self.n += 1
        self.vars[name] = FreeVar(name, width, kind, site)
        return name


def _bit(e: E.Expr, i: int) -> E.Expr:
    return E.Slice(e, i, i) if e.width > 1 else e


def _instance_prefix(name: str) -> str:
    return name.rsplit(".", 1)[0] + "." if "." in name else ""


def _fanin(ts: TransitionSystem, roots: set[str]) -> list[str]:
    """Signals reachable from ``roots`` through comb definitions, nearest first."""
    seen: list[str] = []
    frontier = sorted(roots)
    visited = set(frontier)
    while frontier:
        seen.extend(frontier)
        nxt = set()
        for n in frontier:
            if n in ts.comb:
                nxt |= E.refs(ts.comb[n])
        frontier = sorted(nxt - visited)
        visited |= nxt
    return seen


def candidates_for(ts: TransitionSystem, exprs: list[E.Expr], owner: str) -> tuple[str, ...]:
    """1-bit signals usable in synthesized product terms for a site owned by ``owner``."""
    prefix = _instance_prefix(owner)
    roots = set()
    for e in exprs:
        roots |= E.refs(e)
    pool = [n for n in ts.inputs if ts.inputs[n] == 1] + _fanin(ts, roots)
    widths = ts.widths()
    out: list[str] = []
    for n in pool:
        if n in out or n in ts.free or "$" in n or widths.get(n) != 1:
            continue
        if _instance_prefix(n) != prefix:
            continue
        out.append(n)
    return tuple(out[:MAX_CANDIDATES])


def _product(vs: _Vars, cands: tuple[str, ...], site: Target, widths) -> tuple[E.Expr, tuple[_Slot, ...]]:
    if not cands:
        return E.const(1, 1), ()
    sw = max(1, math.ceil(math.log2(len(cands))))
    slots = []
    prod: Optional[E.Expr] = None
    for _ in range(min(MAX_PRODUCT, len(cands))):
        en = vs.new("en", 1, "bool_select", site)
        neg = vs.new("neg", 1, "bool_select", site)
        sel = vs.new("sel", sw, "bool_select", site)
        slots.append(_Slot(en, neg, sel))
        chosen: E.Expr = E.Ref(cands[-1], 1)
        for k in range(len(cands) - 2, -1, -1):
            hit = E.Binary("==", E.Ref(sel, sw), E.const(sw, k), 1)
            chosen = E.Ternary(hit, E.Ref(cands[k], 1), chosen, 1)
        lit = E.Ternary(E.Ref(en, 1), E.Binary("^", chosen, E.Ref(neg, 1), 1), E.const(1, 1), 1)
        prod = lit if prod is None else E.Binary("&", prod, lit, 1)
    return prod, tuple(slots)


def _owners(ts: TransitionSystem) -> list[tuple[str, str, E.Expr]]:
    return [("comb", n, e) for n, e in ts.comb.items()] + [("next", n, e) for n, e in ts.next.items()]


def _rebuild(ts: TransitionSystem, defs: list[tuple[str, str, E.Expr]], free: dict[str, int],
             **changes) -> TransitionSystem:
    comb = {n: e for k, n, e in defs if k == "comb"}
    nxt = {n: e for k, n, e in defs if k == "next"}
    allfree = dict(ts.free)
    allfree.update(free)
    new = ts.replace(comb=comb, next=nxt, free=allfree, **changes)
    return new.replace(comb=order_comb(new.comb, new.origins))


# -- templates ---------------------------------------------------------------

def literal_sites(ts: TransitionSystem) -> list[Span]:
    sites = {}
    for _, _, e in _owners(ts):
        for n in E.nodes(e):
            if isinstance(n, E.Literal) and n.site is not None:
                sites[(n.site.file, n.site.start, n.site.end)] = n.site
    return [sites[k] for k in sorted(sites)]


def condition_sites(ts: TransitionSystem, signal: Optional[str] = None) -> list[Span]:
    sites = {}
    for _, name, e in _owners(ts):
        if signal is not None and name != signal:
            continue
        for n in E.nodes(e):
            if isinstance(n, E.Ternary) and n.c.site is not None and n.c.width == 1:
                sites[(n.c.site.file, n.c.site.start, n.c.site.end)] = n.c.site
    return [sites[k] for k in sorted(sites)]


def _replace_literal(ts, template, project):
    vs = _Vars()
    sites = []
    defs = _owners(ts)
    for target in template.targets:
        occ = [n for _, _, e in defs for n in E.nodes(e) if isinstance(n, E.Literal) and n.site == target]
        if not occ:
            raise TargetNotFound(f"no literal at {target}")
        width = min(n.width for n in occ)
        old = occ[0].value
        if project is not None and project.has_file(target.file):
            try:
                size, value = parse_number(target.text(project))
                old = value
                if size is not None:
                    width = min(width, size)
            except RtlError:
                pass
        flag = vs.new("flag", 1, "bool_select", target)
        val = vs.new("lit", width, "const_bits", target)
        sites.append(SiteInfo(target, flag, "ReplaceLiteral", value=val, width=width, old_value=old & E.mask(width)))

        def fn(n, target=target, flag=flag, val=val, width=width):
            if isinstance(n, E.Literal) and n.site == target:
                return E.Ternary(E.Ref(flag, 1), E.zext(E.Ref(val, width), n.width), n, n.width)
            return None
        defs = [(k, name, E.transform(e, fn)) for k, name, e in defs]
    return defs, vs, sites, {}


def _add_guard(ts, template, project):
    vs = _Vars()
    sites = []
    defs = _owners(ts)
    widths = ts.widths()
    targets: list[Span] = []
    for t in template.targets:
        if isinstance(t, str):
            found = condition_sites(ts, t)
            if not found:
                raise TargetNotFound(f"signal {t!r} has no condition to guard")
            targets += [s for s in found if s not in targets]
        elif t not in targets:
            targets.append(t)
    for target in targets:
        owners = [(name, e) for _, name, e in defs
                  if any(n.site == target and n.width == 1 for n in E.nodes(e))]
        if not owners:
            raise TargetNotFound(f"no condition at {target}")
        cands = candidates_for(ts, [e for _, e in owners], owners[0][0])
        flag = vs.new("flag", 1, "bool_select", target)
        mode = vs.new("mode", 2, "bool_select", target)
        prod, slots = _product(vs, cands, target, widths)
        sites.append(SiteInfo(target, flag, "AddGuard", mode=mode, slots=slots, candidates=cands))

        def fn(n, target=target, flag=flag, mode=mode, prod=prod):
            if n.site == target and n.width == 1:
                m = E.Ref(mode, 2)
                c = E.Ternary(_bit(m, 1), E.Unary("~", n, 1), n, 1)
                g = E.Ternary(_bit(m, 0), E.Binary("|", c, prod, 1), E.Binary("&", c, prod, 1), 1)
                return E.Ternary(E.Ref(flag, 1), g, n, 1)
            return None
        defs = [(k, name, E.transform(e, fn)) for k, name, e in defs]
    return defs, vs, sites, {}


def _overwrite(ts, template, project):
    vs = _Vars()
    sites = []
    defs = _owners(ts)
    widths = ts.widths()
    for target in template.targets:
        idx = [i for i, (k, name, _) in enumerate(defs) if name == target]
        if not idx:
            raise TargetNotFound(f"signal {target!r} has no definition to overwrite")
        i = idx[0]
        k, name, e = defs[i]
        w = e.width
        cands = candidates_for(ts, [e], name)
        flag = vs.new("flag", 1, "bool_select", target)
        val = vs.new("val", w, "const_bits", target)
        prod, slots = _product(vs, cands, target, widths)
        cond = E.Binary("&", E.Ref(flag, 1), prod, 1)
        defs[i] = (k, name, E.Ternary(cond, E.Ref(val, w), e, w))
        sites.append(SiteInfo(target, flag, "ConditionalOverwrite", value=val, slots=slots, candidates=cands,
                              width=w, decl=ts.origins.get(name)))
    return defs, vs, sites, {}


def _cycle_shift(ts, template, project):
    vs = _Vars()
    sites = []
    comb = dict(ts.comb)
    nxt = dict(ts.next)
    state = dict(ts.state_vars)
    init = dict(ts.init)
    origins = dict(ts.origins)
    for y in template.targets:
        phi = vs.new("phi", 1, "phi_select", y)
        if y in comb:
            w = comb[y].width
            pre, reg = f"{y}$pre", f"{y}$reg"
            comb[pre] = comb.pop(y)
            state[reg] = w
            init[reg] = 0
            nxt[reg] = E.Ref(pre, w)
            comb[y] = E.Ternary(E.Ref(phi, 1), E.Ref(reg, w), E.Ref(pre, w), w)
            registered = False
        elif y in state:
            w = state.pop(y)
            st, cv = f"{y}$state", f"{y}$comb"
            state[st] = w
            init[st] = init.pop(y, 0)
            f = nxt.pop(y)
            nxt[st] = f
            comb[cv] = f
            comb[y] = E.Ternary(E.Ref(phi, 1), E.Ref(cv, w), E.Ref(st, w), w)
            registered = True
        else:
            raise TargetNotFound(f"signal {y!r} is neither combinational nor registered")
        sites.append(SiteInfo(y, phi, "CycleShift", registered=registered, decl=ts.origins.get(y)))
    # references to the old state name now go through the visible mux
    defs = [("comb", n, e) for n, e in comb.items()] + [("next", n, e) for n, e in nxt.items()]
    return defs, vs, sites, {"state_vars": state, "init": init, "origins": origins}


def instrument(ts: TransitionSystem, template: RepairTemplate,
               project: Optional[SourceProject] = None) -> tuple[TransitionSystem, FreeVarMap]:
    """Return ``ts`` with repair choices as free constants, plus the variable map.

    With every change flag at 0 the result behaves exactly like ``ts``.
    ``project`` (optional) supplies literal text so sized literals keep their width.
    Raises TargetNotFound or CombinationalLoop.
    """
    build = {"ReplaceLiteral": _replace_literal, "AddGuard": _add_guard,
             "ConditionalOverwrite": _overwrite, "CycleShift": _cycle_shift}[template.kind]
    defs, vs, sites, changes = build(ts, template, project)
    free = {n: v.width for n, v in vs.vars.items()}
    new = _rebuild(ts, defs, free, **changes)
    flags = {s.key: s.flag for s in sites}
    return new, FreeVarMap(template, dict(vs.vars), flags, tuple(sites))


# -- target resolution from agent text ---------------------------------------

_LOC = re.compile(r"^(?P<file>[^:]+):(?P<line>\d+)(?::(?P<col>\d+))?$")


def resolve_targets(kind: str, specs: list[str], ts: TransitionSystem) -> tuple[Target, ...]:
    """Turn ``file:line[:col]`` locations and signal names into template targets."""
    out: list[Target] = []
    for spec in specs:
        spec = spec.strip()
        m = _LOC.match(spec)
        if m is None:
            if kind == "ReplaceLiteral":
                found = [s for s in literal_sites(ts) if _owned_by(ts, s, spec)]
                if not found:
                    raise TargetNotFound(f"no literal in the logic of {spec!r}")
                out += [s for s in found if s not in out]
            elif ts.is_defined(spec) and spec not in ts.inputs:
                out.append(spec)
            else:
                raise TargetNotFound(f"unknown signal {spec!r}")
            continue
        file, line, col = m.group("file"), int(m.group("line")), m.group("col")
        if kind == "ReplaceLiteral":
            pool = literal_sites(ts)
        elif kind == "AddGuard":
            pool = condition_sites(ts)
        else:
            raise TargetNotFound(f"{kind} targets are signal names, not locations")
        found = [s for s in pool if s.file == file and s.line == line and (col is None or s.col == int(col))]
        if not found:
            raise TargetNotFound(f"nothing to instrument at {spec}")
        out += [s for s in found if s not in out]
    return tuple(out)


def _owned_by(ts: TransitionSystem, site: Span, signal: str) -> bool:
    e = ts.comb.get(signal) or ts.next.get(signal)
    return e is not None and any(isinstance(n, E.Literal) and n.site == site for n in E.nodes(e))
