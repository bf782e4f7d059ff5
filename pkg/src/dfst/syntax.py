"""Abstract syntax shared by every stage of the toolchain.

The language has two sorts of types (functional and session), priorities
attached to every communication operation, and a small call-by-value term
language whose runtime configurations are flagged threads composed in
parallel under channel restrictions.

Everything here is an immutable tree.  Nodes compare structurally; source
locations are carried on expressions for diagnostics but never participate
in equality.  Substitution is capture-avoiding via a module-level fresh-name
supply.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Priorities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bot:
    """The lowest priority; more urgent than every integer."""

    def __repr__(self) -> str:
        return "bot"


@dataclass(frozen=True)
class Top:
    """The highest priority; carried by unrestricted types."""

    def __repr__(self) -> str:
        return "top"


@dataclass(frozen=True)
class Lit:
    n: int

    def __repr__(self) -> str:
        return str(self.n)


@dataclass(frozen=True)
class PVar:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class SeqElem:
    """A (possibly not yet known) element of a channel's priority sequence.

    ``index`` is 1-based.  When ``exact`` is False the element sits at some
    unknown position >= ``index``; this is how continuations returned from
    calls that consumed an unknown number of instantiations are tracked.
    Only the checker manufactures these; source programs denote them with
    ``next^k x``.
    """

    origin: str
    index: int
    exact: bool = True

    def __repr__(self) -> str:
        mark = "" if self.exact else "+"
        return f"next{self.index}{mark} {self.origin}"


@dataclass(frozen=True)
class Disp:
    """Displacement ``base + offset``; kept only over variables and sequence
    elements, everything else normalizes away."""

    base: Union[PVar, SeqElem]
    offset: int

    def __repr__(self) -> str:
        if self.offset >= 0:
            return f"({self.base!r}+{self.offset})"
        return f"({self.base!r}-{-self.offset})"


Priority = Union[Bot, Top, Lit, PVar, SeqElem, Disp]

BOT = Bot()
TOP = Top()


def disp(base: Priority, offset: int) -> Priority:
    """Smart constructor for displacements: ``bot+n = bot``, ``top+n = top``,
    literals add, nested displacements fuse."""
    if offset == 0:
        return base
    if isinstance(base, Bot) or isinstance(base, Top):
        return base
    if isinstance(base, Lit):
        return Lit(base.n + offset)
    if isinstance(base, Disp):
        return disp(base.base, base.offset + offset)
    return Disp(base, offset)


def prio_base(p: Priority) -> Priority:
    return p.base if isinstance(p, Disp) else p


def prio_offset(p: Priority) -> int:
    return p.offset if isinstance(p, Disp) else 0


def is_ground(p: Priority) -> bool:
    """Ground priorities admit direct comparison."""
    return isinstance(p, (Bot, Top, Lit))


def ground_lt(a: Priority, b: Priority) -> bool:
    """Strict order on ground priorities: bot < any literal < top."""
    ra = _rank(a)
    rb = _rank(b)
    if ra != rb:
        return ra < rb
    if isinstance(a, Lit) and isinstance(b, Lit):
        return a.n < b.n
    return False


def _rank(p: Priority) -> int:
    if isinstance(p, Bot):
        return 0
    if isinstance(p, Lit):
        return 1
    if isinstance(p, Top):
        return 2
    raise ValueError(f"not a ground priority: {p!r}")


# ---------------------------------------------------------------------------
# Priority values (arguments of priority application)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prio:
    prio: Priority


@dataclass(frozen=True)
class Next:
    """``next^k x (+ offset)``: the k-th element of the priority sequence of
    endpoint ``x``, displaced by ``offset``.  The offset extension lets
    programs name priorities relative to an already popped element, which
    the tree protocol needs."""

    k: int
    endpoint: str
    offset: int = 0


PriorityValue = Union[Prio, Next]


# ---------------------------------------------------------------------------
# Intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: Priority
    hi: Priority
    lo_open: bool = True
    hi_open: bool = True

    def __repr__(self) -> str:
        lb = "(" if self.lo_open else "["
        rb = ")" if self.hi_open else "]"
        return f"{lb}{self.lo!r},{self.hi!r}{rb}"


# ---------------------------------------------------------------------------
# Multiplicities and thread flags
# ---------------------------------------------------------------------------

class Mult(Enum):
    LIN = "lin"
    UN = "un"


class Flag(Enum):
    MAIN = "main"
    CHILD = "child"


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

class Type:
    """Base class; concrete nodes are frozen dataclasses below."""

    __slots__ = ()


@dataclass(frozen=True)
class TUnit(Type):
    pass


@dataclass(frozen=True)
class TInt(Type):
    """Opaque base type for the integer literals in the example programs."""


@dataclass(frozen=True)
class TArrow(Type):
    dom: Type
    cod: Type
    lo: Priority
    hi: Priority
    mult: Mult


@dataclass(frozen=True)
class TProd(Type):
    fst: Type
    snd: Type


@dataclass(frozen=True)
class TVarF(Type):
    name: str


@dataclass(frozen=True)
class TVarS(Type):
    name: str


@dataclass(frozen=True)
class NegVarS(Type):
    """Negative reference used transiently while dualizing recursive
    sessions; never appears in user-facing types."""

    name: str


@dataclass(frozen=True)
class RecF(Type):
    var: str
    body: Type


@dataclass(frozen=True)
class RecS(Type):
    var: str
    body: Type


@dataclass(frozen=True)
class ForallT(Type):
    """Type quantifier; the bound variable carries a priority."""

    var: str
    prio: Priority
    body: Type


@dataclass(frozen=True)
class ForallPF(Type):
    """Priority quantifier with functional body."""

    var: str
    interval: Interval
    body: Type


@dataclass(frozen=True)
class ForallPS(Type):
    """Priority quantifier with session body; at most one per type."""

    var: str
    interval: Interval
    body: Type


@dataclass(frozen=True)
class TSkip(Type):
    pass


@dataclass(frozen=True)
class TOut(Type):
    payload: Type
    prio: Priority


@dataclass(frozen=True)
class TIn(Type):
    payload: Type
    prio: Priority


@dataclass(frozen=True)
class TIntChoice(Type):
    branches: tuple[tuple[str, Type], ...]
    prio: Priority


@dataclass(frozen=True)
class TExtChoice(Type):
    branches: tuple[tuple[str, Type], ...]
    prio: Priority


@dataclass(frozen=True)
class TSeq(Type):
    fst: Type
    snd: Type


@dataclass(frozen=True)
class TClose(Type):
    prio: Priority


@dataclass(frozen=True)
class TWait(Type):
    prio: Priority


UNIT = TUnit()
INT = TInt()
SKIP = TSkip()

_SESSION_NODES = (TSkip, TOut, TIn, TIntChoice, TExtChoice, TSeq, TClose,
                  TWait, TVarS, NegVarS, RecS, ForallPS)


def is_session(t: Type) -> bool:
    return isinstance(t, _SESSION_NODES)


def choice_branches(t: Type) -> dict[str, Type]:
    assert isinstance(t, (TIntChoice, TExtChoice))
    return dict(t.branches)


def contains_forall_ps(t: Type) -> bool:
    """Whether a session type carries a priority binder (and hence must be
    created with an explicit priority sequence)."""
    if isinstance(t, ForallPS):
        return True
    return any(contains_forall_ps(c) for c in type_children(t))


def type_children(t: Type) -> tuple[Type, ...]:
    if isinstance(t, TArrow):
        return (t.dom, t.cod)
    if isinstance(t, (TProd, TSeq)):
        return (t.fst, t.snd)
    if isinstance(t, (RecF, RecS, ForallT, ForallPF, ForallPS)):
        return (t.body,)
    if isinstance(t, (TOut, TIn)):
        return (t.payload,)
    if isinstance(t, (TIntChoice, TExtChoice)):
        return tuple(s for _, s in t.branches)
    return ()


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class ConstKind(Enum):
    UNIT = "()"
    FORK = "fork"
    SEND = "send"
    RECEIVE = "receive"
    CLOSE = "close"
    WAIT = "wait"
    FIX = "fix"
    SELECT = "select"


class Expr:
    __slots__ = ()


def _loc_field():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class EVar(Expr):
    name: str
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EConst(Expr):
    kind: ConstKind
    label: Optional[str] = None  # for select
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EInt(Expr):
    value: int
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EAbs(Expr):
    param: str
    annot: Type
    body: Expr
    mult: Mult
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EApp(Expr):
    fun: Expr
    arg: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EPair(Expr):
    fst: Expr
    snd: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ELet(Expr):
    var: str
    rhs: Expr
    body: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ELetPair(Expr):
    var1: str
    var2: str
    rhs: Expr
    body: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ESeq(Expr):
    fst: Expr
    snd: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ETAbs(Expr):
    var: str
    body: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ETApp(Expr):
    fun: Expr
    ty: Type
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EPAbs(Expr):
    var: str
    body: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EPApp(Expr):
    fun: Expr
    arg: PriorityValue
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EMatch(Expr):
    scrutinee: Expr
    branches: tuple[tuple[str, str, Expr], ...]  # (label, param, body)
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ENew(Expr):
    ty: Type
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class ENewPoly(Expr):
    ty: Type
    start: int
    step: int
    loc: Optional[tuple[int, int]] = _loc_field()


@dataclass(frozen=True)
class EInst(Expr):
    expr: Expr
    loc: Optional[tuple[int, int]] = _loc_field()


E_UNIT = EConst(ConstKind.UNIT)


def expr_children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, EAbs):
        return (e.body,)
    if isinstance(e, EApp):
        return (e.fun, e.arg)
    if isinstance(e, (EPair, ESeq)):
        return (e.fst, e.snd)
    if isinstance(e, (ELet, ELetPair)):
        return (e.rhs, e.body)
    if isinstance(e, (ETAbs, EPAbs)):
        return (e.body,)
    if isinstance(e, ETApp):
        return (e.fun,)
    if isinstance(e, EPApp):
        return (e.fun,)
    if isinstance(e, EMatch):
        return (e.scrutinee,) + tuple(b for _, _, b in e.branches)
    if isinstance(e, EInst):
        return (e.expr,)
    return ()


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

class Config:
    __slots__ = ()


@dataclass(frozen=True)
class CThread(Config):
    flag: Flag
    expr: Expr


@dataclass(frozen=True)
class CPar(Config):
    left: Config
    right: Config


@dataclass(frozen=True)
class CNu(Config):
    """Channel restriction.  ``ty`` is the current session type of endpoint
    ``x`` (``y``'s is its dual); ``cx``/``cy`` count the sequence elements
    each endpoint has instantiated so far."""

    x: str
    y: str
    seq: "PrioritySeq"
    body: Config
    ty: Type
    cx: int = 0
    cy: int = 0


def flag_add(a: Flag, b: Flag) -> Flag:
    """Partial flag combination: two main threads cannot be composed."""
    if a is Flag.MAIN and b is Flag.MAIN:
        raise ValueError("cannot combine two main threads")
    if a is Flag.MAIN or b is Flag.MAIN:
        return Flag.MAIN
    return Flag.CHILD


# ---------------------------------------------------------------------------
# Priority sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeqEmpty:
    def __repr__(self) -> str:
        return "[]"


@dataclass(frozen=True)
class SeqFinite:
    items: tuple[Priority, ...]

    def __repr__(self) -> str:
        return "[" + ", ".join(repr(p) for p in self.items) + "]"


@dataclass(frozen=True)
class SeqProg:
    """The infinite arithmetic progression ``[start + k*step | k >= consumed]``."""

    start: int
    step: int
    consumed: int = 0

    def __repr__(self) -> str:
        h = self.start + self.consumed * self.step
        return f"[{h}, {h + self.step}, ...]"


@dataclass(frozen=True)
class SeqSym:
    """Checker-internal stand-in for the unknown sequence of a function
    parameter: the remaining elements of ``origin``'s sequence starting at
    the 1-based ``index``.  ``exact`` is False once an unknown number of
    extra elements may already have been consumed."""

    origin: str
    index: int = 1
    exact: bool = True

    def __repr__(self) -> str:
        mark = "" if self.exact else "+"
        return f"[next{self.index}{mark} {self.origin}, ...]"


PrioritySeq = Union[SeqEmpty, SeqFinite, SeqProg, SeqSym]

SEQ_EMPTY = SeqEmpty()


def seq_head(s: PrioritySeq) -> Priority:
    if isinstance(s, SeqProg):
        return Lit(s.start + s.consumed * s.step)
    if isinstance(s, SeqFinite) and s.items:
        return s.items[0]
    if isinstance(s, SeqSym):
        return SeqElem(s.origin, s.index, s.exact)
    raise IndexError("priority sequence exhausted")


def seq_tail(s: PrioritySeq) -> PrioritySeq:
    if isinstance(s, SeqProg):
        return SeqProg(s.start, s.step, s.consumed + 1)
    if isinstance(s, SeqFinite) and s.items:
        return SeqFinite(s.items[1:]) if len(s.items) > 1 else SEQ_EMPTY
    if isinstance(s, SeqSym):
        return SeqSym(s.origin, s.index + 1, s.exact)
    raise IndexError("priority sequence exhausted")


def seq_elem(s: PrioritySeq, k: int) -> Priority:
    """1-based element access; raises IndexError past the end."""
    if k < 1:
        raise IndexError("sequence indices are 1-based")
    if isinstance(s, SeqProg):
        return Lit(s.start + (s.consumed + k - 1) * s.step)
    if isinstance(s, SeqFinite):
        if k <= len(s.items):
            return s.items[k - 1]
    if isinstance(s, SeqSym):
        return SeqElem(s.origin, s.index + k - 1, s.exact)
    raise IndexError("priority sequence exhausted")


def seq_drop(s: PrioritySeq, n: int) -> PrioritySeq:
    for _ in range(n):
        s = seq_tail(s)
    return s


def seq_take(s: PrioritySeq, n: int) -> PrioritySeq:
    if n == 0:
        return SEQ_EMPTY
    return SeqFinite(tuple(seq_elem(s, k) for k in range(1, n + 1)))


def seq_concat(a: PrioritySeq, b: PrioritySeq) -> PrioritySeq:
    if isinstance(a, SeqEmpty):
        return b
    if isinstance(b, SeqEmpty) and isinstance(a, SeqFinite):
        return a
    if isinstance(a, SeqFinite):
        if isinstance(b, SeqFinite):
            return SeqFinite(a.items + b.items)
        if isinstance(b, SeqProg):
            # only meaningful when a is precisely the prefix popped from b
            expected = tuple(
                Lit(b.start + k * b.step)
                for k in range(b.consumed - len(a.items), b.consumed)
            ) if b.consumed >= len(a.items) else None
            if expected == a.items:
                return SeqProg(b.start, b.step, b.consumed - len(a.items))
    raise ValueError(f"cannot concatenate {a!r} and {b!r}")


# ---------------------------------------------------------------------------
# Typing contexts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiEntry:
    ty: Type
    seq: PrioritySeq
    key: object = None  # canonical form of ty, for reverse lookup


class Psi:
    """Priority map from endpoint names to their (type, sequence) entry.
    Ordinary dict semantics with a reverse lookup by (canonicalized) type."""

    def __init__(self, entries: Optional[dict[str, PsiEntry]] = None):
        self.entries: dict[str, PsiEntry] = dict(entries or {})

    def bind(self, name: str, entry: PsiEntry) -> "Psi":
        new = dict(self.entries)
        new[name] = entry
        return Psi(new)

    def lookup(self, name: str) -> Optional[PsiEntry]:
        return self.entries.get(name)

    def vars_of_type(self, ty_key: object) -> list[str]:
        return [x for x, e in self.entries.items()
                if e.key is not None and e.key == ty_key]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __repr__(self) -> str:
        return "Psi(" + ", ".join(f"{x}->{e.seq!r}" for x, e in self.entries.items()) + ")"


# ---------------------------------------------------------------------------
# Free variables
# ---------------------------------------------------------------------------

def free_term_vars(e: Expr) -> set[str]:
    if isinstance(e, EVar):
        return {e.name}
    if isinstance(e, EAbs):
        return free_term_vars(e.body) - {e.param}
    if isinstance(e, ELet):
        return free_term_vars(e.rhs) | (free_term_vars(e.body) - {e.var})
    if isinstance(e, ELetPair):
        return free_term_vars(e.rhs) | (free_term_vars(e.body) - {e.var1, e.var2})
    if isinstance(e, EMatch):
        out = free_term_vars(e.scrutinee)
        for _, param, body in e.branches:
            out |= free_term_vars(body) - {param}
        return out
    if isinstance(e, EPApp):
        out = free_term_vars(e.fun)
        if isinstance(e.arg, Next):
            out.add(e.arg.endpoint)
        return out
    out: set[str] = set()
    for c in expr_children(e):
        out |= free_term_vars(c)
    # sequence elements baked into embedded types reference endpoints too
    for t in _embedded_types(e):
        out |= _seq_origins(t)
    return out


def _embedded_types(e: Expr) -> tuple[Type, ...]:
    if isinstance(e, EAbs):
        return (e.annot,)
    if isinstance(e, ETApp):
        return (e.ty,)
    if isinstance(e, (ENew, ENewPoly)):
        return (e.ty,)
    return ()


def _seq_origins(t: Type) -> set[str]:
    out: set[str] = set()
    for p in _type_priorities(t):
        b = prio_base(p)
        if isinstance(b, SeqElem):
            out.add(b.origin)
    for c in type_children(t):
        out |= _seq_origins(c)
    return out


def _type_priorities(t: Type) -> tuple[Priority, ...]:
    if isinstance(t, TArrow):
        return (t.lo, t.hi)
    if isinstance(t, (TOut, TIn, TIntChoice, TExtChoice, TClose, TWait)):
        return (t.prio,)
    if isinstance(t, ForallT):
        return (t.prio,)
    if isinstance(t, (ForallPF, ForallPS)):
        return (t.interval.lo, t.interval.hi)
    return ()


def free_type_vars(t: Type) -> set[str]:
    if isinstance(t, (TVarF, TVarS, NegVarS)):
        return {t.name}
    if isinstance(t, (RecF, RecS, ForallT)):
        return free_type_vars(t.body) - {t.var}
    out: set[str] = set()
    for c in type_children(t):
        out |= free_type_vars(c)
    return out


def free_prio_vars(x: object) -> set[str]:
    """Free priority variables of a priority, interval, or type."""
    if isinstance(x, (Bot, Top, Lit, SeqElem)):
        return set()
    if isinstance(x, PVar):
        return {x.name}
    if isinstance(x, Disp):
        return free_prio_vars(x.base)
    if isinstance(x, Interval):
        return free_prio_vars(x.lo) | free_prio_vars(x.hi)
    if isinstance(x, Type):
        t = x
        if isinstance(t, (ForallPF, ForallPS)):
            return (free_prio_vars(t.interval)
                    | (free_prio_vars(t.body) - {t.var}))
        out: set[str] = set()
        for p in _type_priorities(t):
            out |= free_prio_vars(p)
        for c in type_children(t):
            out |= free_prio_vars(c)
        return out
    raise TypeError(f"free_prio_vars: unsupported {x!r}")


# ---------------------------------------------------------------------------
# Fresh names and substitution
# ---------------------------------------------------------------------------

_fresh_counter = itertools.count(1)


def fresh_name(base: str) -> str:
    stem = base.split("'")[0] or "v"
    return f"{stem}'{next(_fresh_counter)}"


def subst_type(t: Type, repl: Type, var: str) -> Type:
    """``t[repl/var]`` over both sorts of type variable, capture-avoiding."""
    if isinstance(t, (TVarF, TVarS)) and t.name == var:
        return repl
    if isinstance(t, NegVarS) and t.name == var:
        return repl
    if isinstance(t, (RecF, RecS, ForallT)):
        if t.var == var:
            return t
        if t.var in free_type_vars(repl):
            nv = fresh_name(t.var)
            renamed = subst_type(t.body, _mk_tvar(t, nv), t.var)
            t = replace(t, var=nv, body=renamed)
        return replace(t, body=subst_type(t.body, repl, var))
    return _map_type_children(t, lambda c: subst_type(c, repl, var))


def _mk_tvar(binder: Type, name: str) -> Type:
    if isinstance(binder, RecS):
        return TVarS(name)
    if isinstance(binder, RecF):
        return TVarF(name)
    # ForallT may bind either sort; pick by body usage (session var if the
    # original name occurs as a session var)
    return TVarS(name) if _binds_session_var(binder) else TVarF(name)


def _binds_session_var(binder: Type) -> bool:
    assert isinstance(binder, ForallT)
    var = binder.var

    def walk(t: Type) -> bool:
        if isinstance(t, TVarS) and t.name == var:
            return True
        if isinstance(t, (RecF, RecS, ForallT)) and t.var == var:
            return False
        return any(walk(c) for c in type_children(t))

    return walk(binder.body)


def _map_type_children(t: Type, f) -> Type:
    if isinstance(t, TArrow):
        return TArrow(f(t.dom), f(t.cod), t.lo, t.hi, t.mult)
    if isinstance(t, TProd):
        return TProd(f(t.fst), f(t.snd))
    if isinstance(t, TSeq):
        return TSeq(f(t.fst), f(t.snd))
    if isinstance(t, TOut):
        return TOut(f(t.payload), t.prio)
    if isinstance(t, TIn):
        return TIn(f(t.payload), t.prio)
    if isinstance(t, TIntChoice):
        return TIntChoice(tuple((l, f(s)) for l, s in t.branches), t.prio)
    if isinstance(t, TExtChoice):
        return TExtChoice(tuple((l, f(s)) for l, s in t.branches), t.prio)
    if isinstance(t, (RecF, RecS, ForallT, ForallPF, ForallPS)):
        return replace(t, body=f(t.body))
    return t


def subst_prio_in_prio(p: Priority, repl: Priority, var: str) -> Priority:
    if isinstance(p, PVar) and p.name == var:
        return repl
    if isinstance(p, Disp):
        b = subst_prio_in_prio(p.base, repl, var)
        return disp(b, p.offset)
    return p


def subst_prio_in_interval(iv: Interval, repl: Priority, var: str) -> Interval:
    return Interval(subst_prio_in_prio(iv.lo, repl, var),
                    subst_prio_in_prio(iv.hi, repl, var),
                    iv.lo_open, iv.hi_open)


def subst_prio_in_type(t: Type, repl: Priority, var: str) -> Type:
    if isinstance(t, (ForallPF, ForallPS)):
        iv = subst_prio_in_interval(t.interval, repl, var)
        if t.var == var:
            return replace(t, interval=iv)
        if t.var in free_prio_vars(repl):
            nv = fresh_name(t.var)
            body = subst_prio_in_type(t.body, PVar(nv), t.var)
            return replace(t, var=nv, interval=iv,
                           body=subst_prio_in_type(body, repl, var))
        return replace(t, interval=iv,
                       body=subst_prio_in_type(t.body, repl, var))
    t2 = _map_type_prios(t, lambda p: subst_prio_in_prio(p, repl, var))
    return _map_type_children(t2, lambda c: subst_prio_in_type(c, repl, var))


def _map_type_prios(t: Type, f) -> Type:
    if isinstance(t, TArrow):
        return replace(t, lo=f(t.lo), hi=f(t.hi))
    if isinstance(t, (TOut, TIn, TIntChoice, TExtChoice, TClose, TWait)):
        return replace(t, prio=f(t.prio))
    if isinstance(t, ForallT):
        return replace(t, prio=f(t.prio))
    return t


def subst_prio_in_expr(e: Expr, repl: Priority, var: str) -> Expr:
    if isinstance(e, EPAbs):
        if e.var == var:
            return e
        if e.var in free_prio_vars(repl):
            nv = fresh_name(e.var)
            body = subst_prio_in_expr(e.body, PVar(nv), e.var)
            return replace(e, var=nv, body=subst_prio_in_expr(body, repl, var))
        return replace(e, body=subst_prio_in_expr(e.body, repl, var))
    if isinstance(e, EPApp):
        arg = e.arg
        if isinstance(arg, Prio):
            arg = Prio(subst_prio_in_prio(arg.prio, repl, var))
        return replace(e, fun=subst_prio_in_expr(e.fun, repl, var), arg=arg)
    e2 = _map_expr_types(e, lambda t: subst_prio_in_type(t, repl, var))
    return _map_expr_children(e2, lambda c: subst_prio_in_expr(c, repl, var))


def _map_expr_types(e: Expr, f) -> Expr:
    if isinstance(e, EAbs):
        return replace(e, annot=f(e.annot))
    if isinstance(e, ETApp):
        return replace(e, ty=f(e.ty))
    if isinstance(e, (ENew, ENewPoly)):
        return replace(e, ty=f(e.ty))
    return e


def _map_expr_children(e: Expr, f) -> Expr:
    if isinstance(e, EAbs):
        return replace(e, body=f(e.body))
    if isinstance(e, EApp):
        return replace(e, fun=f(e.fun), arg=f(e.arg))
    if isinstance(e, EPair):
        return replace(e, fst=f(e.fst), snd=f(e.snd))
    if isinstance(e, ESeq):
        return replace(e, fst=f(e.fst), snd=f(e.snd))
    if isinstance(e, ELet):
        return replace(e, rhs=f(e.rhs), body=f(e.body))
    if isinstance(e, ELetPair):
        return replace(e, rhs=f(e.rhs), body=f(e.body))
    if isinstance(e, (ETAbs, EPAbs)):
        return replace(e, body=f(e.body))
    if isinstance(e, ETApp):
        return replace(e, fun=f(e.fun))
    if isinstance(e, EPApp):
        return replace(e, fun=f(e.fun))
    if isinstance(e, EMatch):
        return replace(e, scrutinee=f(e.scrutinee),
                       branches=tuple((l, p, f(b)) for l, p, b in e.branches))
    if isinstance(e, EInst):
        return replace(e, expr=f(e.expr))
    return e


def subst_type_in_expr(e: Expr, repl: Type, var: str) -> Expr:
    if isinstance(e, ETAbs):
        if e.var == var:
            return e
        if e.var in free_type_vars(repl):
            nv = fresh_name(e.var)
            body = subst_type_in_expr(e.body, TVarS(nv), e.var)
            body = subst_type_in_expr(body, TVarF(nv), e.var)
            return replace(e, var=nv, body=subst_type_in_expr(body, repl, var))
        return replace(e, body=subst_type_in_expr(e.body, repl, var))
    e2 = _map_expr_types(e, lambda t: subst_type(t, repl, var))
    return _map_expr_children(e2, lambda c: subst_type_in_expr(c, repl, var))


def _rename_endpoint_in_prio(p: Priority, new: str, old: str) -> Priority:
    if isinstance(p, SeqElem) and p.origin == old:
        return SeqElem(new, p.index, p.exact)
    if isinstance(p, Disp):
        return disp(_rename_endpoint_in_prio(p.base, new, old), p.offset)
    return p


def _rename_endpoint_in_type(t: Type, new: str, old: str) -> Type:
    t2 = _map_type_prios(t, lambda p: _rename_endpoint_in_prio(p, new, old))
    if isinstance(t2, (ForallPF, ForallPS)):
        iv = Interval(_rename_endpoint_in_prio(t2.interval.lo, new, old),
                      _rename_endpoint_in_prio(t2.interval.hi, new, old),
                      t2.interval.lo_open, t2.interval.hi_open)
        t2 = replace(t2, interval=iv)
    return _map_type_children(t2, lambda c: _rename_endpoint_in_type(c, new, old))


def subst_term(e: Expr, val: Expr, var: str) -> Expr:
    """``e[val/var]``, capture-avoiding.  When substituting one variable for
    another, embedded types and ``next`` references follow the rename."""
    rename_to = val.name if isinstance(val, EVar) else None

    def go(e: Expr) -> Expr:
        if isinstance(e, EVar):
            return val if e.name == var else e
        if isinstance(e, EAbs):
            if e.param == var:
                return _retype(e)
            if e.param in free_term_vars(val):
                nv = fresh_name(e.param)
                body = subst_term(e.body, EVar(nv), e.param)
                return go(replace(e, param=nv, body=body))
            return _retype(replace(e, body=go(e.body)))
        if isinstance(e, ELet):
            rhs = go(e.rhs)
            if e.var == var:
                return replace(e, rhs=rhs)
            if e.var in free_term_vars(val):
                nv = fresh_name(e.var)
                body = subst_term(e.body, EVar(nv), e.var)
                return go(replace(e, rhs=e.rhs, var=nv, body=body))
            return replace(e, rhs=rhs, body=go(e.body))
        if isinstance(e, ELetPair):
            rhs = go(e.rhs)
            if var in (e.var1, e.var2):
                return replace(e, rhs=rhs)
            captured = {e.var1, e.var2} & free_term_vars(val)
            if captured:
                e2 = e
                for old in captured:
                    nv = fresh_name(old)
                    body = subst_term(e2.body, EVar(nv), old)
                    e2 = replace(e2,
                                 var1=nv if e2.var1 == old else e2.var1,
                                 var2=nv if e2.var2 == old else e2.var2,
                                 body=body)
                return go(replace(e2, rhs=e.rhs))
            return replace(e, rhs=rhs, body=go(e.body))
        if isinstance(e, EMatch):
            branches = []
            for label, param, body in e.branches:
                if param == var:
                    branches.append((label, param, body))
                elif param in free_term_vars(val):
                    nv = fresh_name(param)
                    branches.append((label, nv, go(subst_term(body, EVar(nv), param))))
                else:
                    branches.append((label, param, go(body)))
            return replace(e, scrutinee=go(e.scrutinee), branches=tuple(branches))
        if isinstance(e, EPApp) and isinstance(e.arg, Next) and e.arg.endpoint == var:
            if rename_to is None:
                # the endpoint reference must remain a name; leave it (the
                # checker rejects programs where this could go wrong)
                return replace(e, fun=go(e.fun))
            return replace(e, fun=go(e.fun),
                           arg=Next(e.arg.k, rename_to, e.arg.offset))
        return _retype(_map_expr_children(e, go))

    def _retype(e: Expr) -> Expr:
        if rename_to is None:
            return e
        return _map_expr_types(e, lambda t: _rename_endpoint_in_type(t, rename_to, var))

    return go(e)


# ---------------------------------------------------------------------------
# Value classification
# ---------------------------------------------------------------------------

def _const_app_spine(e: Expr) -> Optional[tuple[EConst, list[str]]]:
    """Decompose nested priority/type/term applications headed by a constant.
    Returns the constant and the shape string list (p/t/e per application)."""
    shape: list[str] = []
    while True:
        if isinstance(e, EPApp):
            shape.append("p")
            e = e.fun
        elif isinstance(e, ETApp):
            shape.append("t")
            e = e.fun
        elif isinstance(e, EApp):
            shape.append("e")
            e = e.fun
        elif isinstance(e, EConst):
            shape.reverse()
            return (e, shape)
        else:
            return None


# Value spines for partially applied constants (p = priority app, t = type
# app, e = term app); full application of the last shape is a redex/action.
_VALUE_SPINES = {
    ConstKind.SEND: {"p", "pt", "ptp", "ptpp", "ptppt", "ptppte"},
    ConstKind.RECEIVE: {"p", "pt", "ptp", "ptpp", "ptppt"},
    ConstKind.CLOSE: {"p"},
    ConstKind.WAIT: {"p"},
    ConstKind.FORK: {"p", "pp"},
    ConstKind.FIX: {"p", "pt", "pte"},
}


def is_value(e: Expr) -> bool:
    if isinstance(e, (EVar, EConst, EInt, EAbs)):
        return True
    if isinstance(e, EPair):
        return is_value(e.fst) and is_value(e.snd)
    if isinstance(e, (ETAbs, EPAbs)):
        return is_value(e.body)
    if isinstance(e, EPApp) and isinstance(e.fun, EVar):
        return True  # runtime form x<sigma>
    spine = _const_app_spine(e)
    if spine is not None:
        const, shape = spine
        allowed = _VALUE_SPINES.get(const.kind)
        if allowed is not None and "".join(shape) in allowed:
            return _spine_args_are_values(e)
    return False


def _spine_args_are_values(e: Expr) -> bool:
    while not isinstance(e, EConst):
        if isinstance(e, EApp):
            if not is_value(e.arg):
                return False
            e = e.fun
        elif isinstance(e, (ETApp, EPApp)):
            e = e.fun
        else:
            return False
    return True
