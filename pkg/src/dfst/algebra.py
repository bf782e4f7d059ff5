"""Static foundations of the type system: duality, contractivity, type
formation, unravelling, and the priority of a type.

The priority of a type is a *set* of priorities: a singleton for a type whose
head is a concrete operation, an arithmetic progression for a channel whose
priority binder is instantiated from a sequence, or an abstract span when
only an interval is known.  Comparisons against such sets come in two
flavours:

* ordering checks (``le_all``) read universally: the bound must hold for
  every member, and an undecidable comparison is *not* a pass;
* membership checks against spans read existentially, because a span is a
  conservative abstraction of "some integer in this range".

Comparisons return ``True``/``False``/``None``.  ``None`` means the answer
depends on data that is only known where a function is instantiated (e.g.
the step of a parameter's priority sequence); the checker turns ``None``
into deferred constraints, everything here stays pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from .syntax import (
    BOT, TOP, Bot, Top, Lit, PVar, SeqElem, Disp, Priority, Interval,
    Prio, Next, PriorityValue,
    Type, TUnit, TInt, TArrow, TProd, TVarF, TVarS, NegVarS, RecF, RecS,
    ForallT, ForallPF, ForallPS, TSkip, TOut, TIn, TIntChoice, TExtChoice,
    TSeq, TClose, TWait,
    Psi, PsiEntry, PrioritySeq, SeqEmpty, SeqFinite, SeqProg, SeqSym,
    seq_elem,
    disp, prio_base, prio_offset, is_ground, ground_lt,
    free_prio_vars, fresh_name, is_session,
    subst_type, subst_prio_in_type, type_children,
)


class FormationError(Exception):
    """Raised by ``wellformed`` with a machine-usable error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


# ---------------------------------------------------------------------------
# Duality
# ---------------------------------------------------------------------------

def dual(s: Type) -> Type:
    """The type of the opposite endpoint.  Priorities are preserved; payloads
    are untouched.  Recursive sessions go through negative references so that
    payload occurrences of the recursion variable keep denoting the original
    protocol while tail occurrences are dualized."""
    if not is_session(s):
        raise ValueError(f"dual applied to non-session type: {s!r}")
    if isinstance(s, TSkip):
        return s
    if isinstance(s, TSeq):
        return TSeq(dual(s.fst), dual(s.snd))
    if isinstance(s, TOut):
        return TIn(s.payload, s.prio)
    if isinstance(s, TIn):
        return TOut(s.payload, s.prio)
    if isinstance(s, TClose):
        return TWait(s.prio)
    if isinstance(s, TWait):
        return TClose(s.prio)
    if isinstance(s, TIntChoice):
        return TExtChoice(tuple((l, dual(b)) for l, b in s.branches), s.prio)
    if isinstance(s, TExtChoice):
        return TIntChoice(tuple((l, dual(b)) for l, b in s.branches), s.prio)
    if isinstance(s, ForallPS):
        return ForallPS(s.var, s.interval, dual(s.body))
    if isinstance(s, NegVarS):
        return TVarS(s.name)
    if isinstance(s, TVarS):
        # a free session variable is left alone; bound ones go through the
        # negative-reference detour below
        return s
    if isinstance(s, RecS):
        marked = subst_type(s.body, NegVarS(s.var), s.var)
        dualized = dual(marked)
        return RecS(s.var, subst_type(dualized, s, s.var))
    raise AssertionError(f"unhandled session constructor {s!r}")


# ---------------------------------------------------------------------------
# Contractivity
# ---------------------------------------------------------------------------

def _skip_like(t: Type) -> bool:
    if isinstance(t, TSkip):
        return True
    if isinstance(t, TSeq):
        return _skip_like(t.fst) and _skip_like(t.snd)
    return False


def contractive(t: Type) -> bool:
    """No recursion variable reaches its own binder through nothing but
    recursion binders and Skip-absorbing sequence prefixes."""

    def reaches(var: str, t: Type) -> bool:
        if isinstance(t, (TVarS, TVarF)) and t.name == var:
            return True
        if isinstance(t, (RecS, RecF)):
            return t.var != var and reaches(var, t.body)
        if isinstance(t, TSeq):
            if reaches(var, t.fst):
                return True
            return _skip_like(t.fst) and reaches(var, t.snd)
        return False

    def walk(t: Type) -> bool:
        if isinstance(t, (RecS, RecF)) and reaches(t.var, t.body):
            return False
        return all(walk(c) for c in type_children(t))

    return walk(t)


# ---------------------------------------------------------------------------
# Type formation
# ---------------------------------------------------------------------------

def wellformed(delta: dict[str, Priority], theta: dict[str, Interval],
               t: Type) -> None:
    """Check the formation judgement; raises FormationError on the first
    violation.  A session priority binder requires an empty ambient priority
    context, which caps every type at one such binder."""

    def prio_ok(p: Priority, th: dict[str, Interval]) -> None:
        missing = free_prio_vars(p) - set(th)
        if missing:
            raise FormationError(
                "unbound-priority-variable",
                f"priority variable {sorted(missing)[0]} is not in scope")

    def go(t: Type, dl: dict[str, Priority], th: dict[str, Interval]) -> None:
        if isinstance(t, (TUnit, TInt, TSkip)):
            return
        if isinstance(t, TArrow):
            prio_ok(t.lo, th)
            prio_ok(t.hi, th)
            go(t.dom, dl, th)
            go(t.cod, dl, th)
            return
        if isinstance(t, (TProd, TSeq)):
            go(t.fst, dl, th)
            go(t.snd, dl, th)
            return
        if isinstance(t, (TClose, TWait)):
            prio_ok(t.prio, th)
            return
        if isinstance(t, (TOut, TIn)):
            prio_ok(t.prio, th)
            go(t.payload, dl, th)
            return
        if isinstance(t, (TIntChoice, TExtChoice)):
            prio_ok(t.prio, th)
            if not t.branches:
                raise FormationError("empty-choice", "choice with no branches")
            for _, s in t.branches:
                go(s, dl, th)
            return
        if isinstance(t, (TVarF, TVarS)):
            if t.name not in dl:
                raise FormationError(
                    "unbound-type-variable",
                    f"type variable {t.name} is not in scope")
            return
        if isinstance(t, NegVarS):
            raise FormationError("internal", "negative reference escaped duality")
        if isinstance(t, ForallT):
            prio_ok(t.prio, th)
            go(t.body, {**dl, t.var: t.prio}, th)
            return
        if isinstance(t, (RecF, RecS)):
            if not contractive(t):
                raise FormationError(
                    "non-contractive",
                    f"recursive type {t.var} is not contractive")
            go(t.body, {**dl, t.var: TOP}, th)
            return
        if isinstance(t, ForallPF):
            prio_ok(t.interval.lo, th)
            prio_ok(t.interval.hi, th)
            go(t.body, dl, {**th, t.var: t.interval})
            return
        if isinstance(t, ForallPS):
            if th:
                raise FormationError(
                    "nested-session-binder",
                    "a session priority binder must be the only one in scope")
            prio_ok(t.interval.lo, th)
            prio_ok(t.interval.hi, th)
            go(t.body, dl, {t.var: t.interval})
            return
        raise AssertionError(f"unhandled type {t!r}")

    go(t, dict(delta), dict(theta))


# ---------------------------------------------------------------------------
# Unravelling
# ---------------------------------------------------------------------------

def unravel(t: Type, _fuel: int = 1024) -> Type:
    """Expose the leading constructor: unfold recursion, drop Skip prefixes,
    hoist a session priority binder out of a sequence.  Terminates on
    contractive types; the fuel guards against misuse."""
    if _fuel <= 0:
        raise RecursionError("unravel diverged (non-contractive type?)")
    if isinstance(t, (RecS, RecF)):
        return unravel(subst_type(t.body, t, t.var), _fuel - 1)
    if isinstance(t, TSeq):
        head = unravel(t.fst, _fuel - 1)
        if isinstance(head, TSkip):
            return unravel(t.snd, _fuel - 1)
        if isinstance(head, TSeq):
            return unravel(TSeq(head.fst, TSeq(head.snd, t.snd)), _fuel - 1)
        if isinstance(head, ForallPS):
            var, body = head.var, head.body
            if var in free_prio_vars(t.snd):
                nv = fresh_name(var)
                body = subst_prio_in_type(body, PVar(nv), var)
                var = nv
            return ForallPS(var, head.interval, TSeq(body, t.snd))
        return TSeq(head, t.snd)
    return t


# ---------------------------------------------------------------------------
# Priority sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SPoint:
    prio: Priority

    def __repr__(self) -> str:
        return repr(self.prio)


@dataclass(frozen=True)
class SProg:
    """The members ``{start + k*step | k >= floor}`` of a priority sequence."""

    start: int
    step: int
    floor: int = 0

    def __repr__(self) -> str:
        h = self.start + self.floor * self.step
        return f"{{{h}, {h + self.step}, ...}}"


@dataclass(frozen=True)
class STail:
    """All elements of a symbolic sequence from the 1-based ``index`` on,
    displaced by ``offset``."""

    origin: str
    index: int
    offset: int = 0
    exact: bool = True

    def __repr__(self) -> str:
        return f"{{next{self.index}.. {self.origin}}}"


@dataclass(frozen=True)
class SSpan:
    interval: Interval

    def __repr__(self) -> str:
        return repr(self.interval)


Atom = Union[SPoint, SProg, STail, SSpan]
PrioritySet = tuple[Atom, ...]

TOP_SET: PrioritySet = (SPoint(TOP),)


def set_is_top(ps: PrioritySet) -> bool:
    return all(isinstance(a, SPoint) and isinstance(a.prio, Top) for a in ps)


def _set_min_ground(ps: PrioritySet) -> Optional[Priority]:
    best: Optional[Priority] = None
    for a in ps:
        if isinstance(a, SPoint) and is_ground(a.prio):
            m = a.prio
        elif isinstance(a, SProg):
            m = Lit(a.start + a.floor * a.step)
        else:
            return None
        if best is None or ground_lt(m, best):
            best = m
    return best


def set_join(a: PrioritySet, b: PrioritySet) -> PrioritySet:
    """Priority of a product: the minimum of the two least elements when both
    are concrete; the union otherwise (equivalent under the universal
    comparisons that consume it)."""
    ma, mb = _set_min_ground(a), _set_min_ground(b)
    if ma is not None and mb is not None:
        return (SPoint(mb if ground_lt(mb, ma) else ma),)
    return tuple(a) + tuple(b)


def set_inf(ps: PrioritySet) -> Priority:
    """Greatest lower bound, used for arrow lower bounds; the infimum over an
    empty context is top."""
    if not ps:
        return TOP
    m = _set_min_ground(ps)
    if m is not None:
        return m
    if len(ps) == 1:
        a = ps[0]
        if isinstance(a, SPoint):
            return a.prio
        if isinstance(a, STail):
            return disp(SeqElem(a.origin, a.index, a.exact), a.offset)
        if isinstance(a, SSpan):
            return a.interval.lo
    return BOT


# ---------------------------------------------------------------------------
# Three-valued priority comparisons
# ---------------------------------------------------------------------------

Tri = Optional[bool]

# Comparison context: interval bindings for priority variables plus the
# sequence steps that are known (per symbolic origin).
@dataclass(frozen=True)
class CmpCtx:
    theta: tuple[tuple[str, Interval], ...] = ()
    steps: tuple[tuple[str, int], ...] = ()

    @staticmethod
    def make(theta: Optional[dict[str, Interval]] = None,
             steps: Optional[dict[str, int]] = None) -> "CmpCtx":
        return CmpCtx(tuple((theta or {}).items()), tuple((steps or {}).items()))

    def theta_of(self, name: str) -> Optional[Interval]:
        for n, iv in self.theta:
            if n == name:
                return iv
        return None

    def step_of(self, origin: str) -> Optional[int]:
        for n, s in self.steps:
            if n == origin:
                return s
        return None


EMPTY_CTX = CmpCtx()


def _seq_cmp(a: SeqElem, oa: int, b: SeqElem, ob: int, strict: bool,
             ctx: CmpCtx) -> Tri:
    """Same-origin sequence-element comparison.  Inexact indices are lower
    bounds; later views of the same origin never rewind, so an inexact
    element is >= the exact element at the same index."""
    di = b.index - a.index
    step = ctx.step_of(a.origin)
    if a.exact and b.exact:
        if step is not None:
            d = di * step + (ob - oa)
            return d > 0 or (not strict and d == 0)
        if di == 0:
            return oa < ob or (not strict and oa == ob)
        if di > 0:
            return True if (oa - ob) < di else None  # needs di*step > oa-ob
        return False if (ob - oa) < -di else None
    if a.exact and not b.exact:
        # value(b) >= value at b.index; comparing against that suffices
        r = _seq_cmp(a, oa, SeqElem(b.origin, b.index, True), ob, strict, ctx)
        return True if r is True else None
    if not a.exact and not b.exact:
        # both sit on the same monotone chain of views
        if di >= 0:
            r = _seq_cmp(SeqElem(a.origin, a.index, True), oa,
                         SeqElem(b.origin, b.index, True), ob, strict, ctx)
            return True if r is True else None
        return None
    return None


def _resolve_span(p: Priority, ctx: CmpCtx) -> Optional[Interval]:
    b = prio_base(p)
    if isinstance(b, PVar):
        iv = ctx.theta_of(b.name)
        if iv is not None:
            off = prio_offset(p)
            return Interval(disp(iv.lo, off), disp(iv.hi, off),
                            iv.lo_open, iv.hi_open)
    return None


def _cmp(a: Priority, b: Priority, strict: bool, ctx: CmpCtx) -> Tri:
    if a == b:
        return not strict
    if isinstance(a, Bot):
        return True if not strict else not isinstance(b, Bot)
    if isinstance(b, Top):
        return True if not strict else not isinstance(a, Top)
    if isinstance(a, Top):
        return False  # b is not top here
    if isinstance(b, Bot):
        return False
    if is_ground(a) and is_ground(b):
        return ground_lt(a, b) or (not strict and a == b)

    ba, oa = prio_base(a), prio_offset(a)
    bb, ob = prio_base(b), prio_offset(b)
    if isinstance(ba, SeqElem) and isinstance(bb, SeqElem) and ba.origin == bb.origin:
        return _seq_cmp(ba, oa, bb, ob, strict, ctx)

    ia = _resolve_span(a, ctx)
    ib = _resolve_span(b, ctx)
    if ia is not None or ib is not None:
        return _cmp_ranges(a if ia is None else ia, b if ib is None else ib,
                           strict, ctx)
    return None


def _cmp_ranges(ra: object, rb: object, strict: bool, ctx: CmpCtx) -> Tri:
    def bounds(x: object) -> tuple[Priority, bool, Priority, bool]:
        if isinstance(x, Interval):
            return (x.lo, x.lo_open, x.hi, x.hi_open)
        return (x, False, x, False)

    alo, alo_open, ahi, ahi_open = bounds(ra)
    blo, blo_open, bhi, bhi_open = bounds(rb)
    # must-hold check: sup(a) REL inf(b)
    r_must = _cmp(ahi, blo, strict and not (ahi_open or blo_open), EMPTY_CTX) \
        if is_ground(ahi) and is_ground(blo) else None
    if r_must is True:
        return True
    # definitely-fails check: inf(a) beyond sup(b)
    if is_ground(alo) and is_ground(bhi):
        r_may = _cmp(alo, bhi, not strict, EMPTY_CTX)
        if r_may is False:
            return False
    return None


def prio_lt(a: Priority, b: Priority, ctx: CmpCtx = EMPTY_CTX) -> Tri:
    return _cmp(a, b, True, ctx)


def prio_le(a: Priority, b: Priority, ctx: CmpCtx = EMPTY_CTX) -> Tri:
    return _cmp(a, b, False, ctx)


def prio_eq(a: Priority, b: Priority, ctx: CmpCtx = EMPTY_CTX) -> Tri:
    if a == b:
        return True
    if is_ground(a) and is_ground(b):
        return False
    ba, oa = prio_base(a), prio_offset(a)
    bb, ob = prio_base(b), prio_offset(b)
    if isinstance(ba, SeqElem) and isinstance(bb, SeqElem) and ba.origin == bb.origin:
        if ba.exact and bb.exact:
            step = ctx.step_of(ba.origin)
            if step is not None:
                return (bb.index - ba.index) * step + (ob - oa) == 0
            if ba.index == bb.index:
                return oa == ob
            return None
        if ba.index == bb.index and ba.exact == bb.exact and oa == ob:
            # the same element of the same view chain position
            return None
        return None
    le = _cmp(a, b, False, ctx)
    ge = _cmp(b, a, False, ctx)
    if le is True and ge is True:
        return True
    if le is False or ge is False:
        return False
    return None


# ---------------------------------------------------------------------------
# Set-level comparisons
# ---------------------------------------------------------------------------

def le_all(p: Priority, ps: PrioritySet, ctx: CmpCtx = EMPTY_CTX) -> Tri:
    """``p`` at or below every member; the empty set is vacuously satisfied."""
    verdict: Tri = True
    for atom in ps:
        r = _le_atom(p, atom, ctx)
        if r is False:
            return False
        if r is None:
            verdict = None
    return verdict


def _le_atom(p: Priority, atom: Atom, ctx: CmpCtx) -> Tri:
    if isinstance(atom, SPoint):
        return prio_le(p, atom.prio, ctx)
    if isinstance(atom, SProg):
        return prio_le(p, Lit(atom.start + atom.floor * atom.step), ctx)
    if isinstance(atom, STail):
        first = disp(SeqElem(atom.origin, atom.index, atom.exact), atom.offset)
        r = prio_le(p, first, ctx)
        if r is not True:
            return r
        # p <= first element; later elements only grow, so this settles it
        # for ground p and for same-origin elements
        b = prio_base(p)
        if is_ground(p) or (isinstance(b, SeqElem) and b.origin == atom.origin):
            return True
        return None
    if isinstance(atom, SSpan):
        iv = atom.interval
        lo = iv.lo
        if iv.lo_open:
            if isinstance(lo, Top):
                return True  # empty span
            if isinstance(lo, Bot):
                return True if isinstance(p, Bot) else None
            lo = disp(lo, 1)  # integer members sit at lo+1 or above
        r = prio_le(p, lo, ctx)
        return r if r is not False else None if not is_ground(p) else False
    raise AssertionError(atom)


def member(p: Priority, iv: Interval, ctx: CmpCtx = EMPTY_CTX) -> Tri:
    """Interval membership for priority instantiation."""
    lo_ok = prio_lt(iv.lo, p, ctx) if iv.lo_open else prio_le(iv.lo, p, ctx)
    hi_ok = prio_lt(p, iv.hi, ctx) if iv.hi_open else prio_le(p, iv.hi, ctx)
    if lo_ok is False or hi_ok is False:
        return False
    if lo_ok is True and hi_ok is True:
        return True
    return None


def member_of_set(p: Priority, ps: PrioritySet, ctx: CmpCtx = EMPTY_CTX) -> Tri:
    """Existential membership used by type application.  Span atoms are an
    abstraction of "some integer in this range", so the range check decides
    them."""
    verdict: Tri = False
    for atom in ps:
        if isinstance(atom, SPoint):
            r = prio_eq(p, atom.prio, ctx)
        elif isinstance(atom, SProg):
            if isinstance(p, Lit):
                d = p.n - atom.start
                r = d % atom.step == 0 and d // atom.step >= atom.floor
            elif isinstance(p, (Bot, Top)):
                r = False
            else:
                r = None
        elif isinstance(atom, STail):
            b = prio_base(p)
            if isinstance(b, SeqElem) and b.origin == atom.origin \
                    and prio_offset(p) == atom.offset and b.index >= atom.index:
                r = True
            elif isinstance(p, (Bot, Top)):
                r = False
            else:
                r = None
        else:
            r = member(p, atom.interval, ctx)
        if r is True:
            return True
        if r is None:
            verdict = None
    return verdict


# ---------------------------------------------------------------------------
# Priority of a type
# ---------------------------------------------------------------------------

TypeKey = Callable[[Type], object]

_OPERATION_NODES = (TOut, TIn, TIntChoice, TExtChoice, TClose, TWait)


def priority_of(t: Type,
                delta: dict[str, Priority],
                theta: dict[str, Interval],
                psi: Psi,
                type_key: Optional[TypeKey] = None) -> PrioritySet:
    """The set of priorities the next operation of ``t`` may carry."""
    u = unravel(t)
    if isinstance(u, _OPERATION_NODES):
        return (SPoint(u.prio),)
    if isinstance(u, TSeq):
        h = u.fst
        if isinstance(h, _OPERATION_NODES):
            return (SPoint(h.prio),)
        if isinstance(h, (TVarF, TVarS)):
            return _var_prio(h.name, delta, theta)
        return TOP_SET
    if isinstance(u, TArrow):
        return (SPoint(u.lo),)
    if isinstance(u, TProd):
        return set_join(priority_of(u.fst, delta, theta, psi, type_key),
                        priority_of(u.snd, delta, theta, psi, type_key))
    if isinstance(u, ForallPS):
        atoms: list[Atom] = []
        if type_key is not None:
            key = type_key(t)
            for x in psi.vars_of_type(key):
                entry = psi.lookup(x)
                assert entry is not None
                atoms.extend(_seq_atoms(u, x, entry))
        if not atoms:
            return (SSpan(u.interval),)
        return tuple(atoms)
    if isinstance(u, ForallPF):
        return priority_of(u.body, delta, {**theta, u.var: u.interval}, psi,
                           type_key)
    if isinstance(u, ForallT):
        return priority_of(u.body, {**delta, u.var: u.prio}, theta, psi,
                           type_key)
    if isinstance(u, (TVarF, TVarS)):
        return _var_prio(u.name, delta, theta)
    return TOP_SET


def _var_prio(name: str, delta: dict[str, Priority],
              theta: dict[str, Interval]) -> PrioritySet:
    p = delta.get(name)
    if p is None:
        raise FormationError("unbound-type-variable",
                             f"type variable {name} has no priority binding")
    if not free_prio_vars(p):
        return (SPoint(p),)
    b = prio_base(p)
    if isinstance(b, PVar) and b.name in theta:
        iv = theta[b.name]
        off = prio_offset(p)
        return (SSpan(Interval(disp(iv.lo, off), disp(iv.hi, off),
                               iv.lo_open, iv.hi_open)),)
    return (SPoint(p),)


def _head_prio_offset(u: ForallPS) -> Optional[int]:
    """When the body's leading operation runs at the binder (+offset), that
    offset; None when the head priority is unrelated to the binder."""
    inner = unravel(u.body)
    head: Optional[Priority] = None
    if isinstance(inner, _OPERATION_NODES):
        head = inner.prio
    elif isinstance(inner, TSeq) and isinstance(inner.fst, _OPERATION_NODES):
        head = inner.fst.prio
    if head is None:
        return None
    if isinstance(head, PVar) and head.name == u.var:
        return 0
    if isinstance(head, Disp) and isinstance(head.base, PVar) \
            and head.base.name == u.var:
        return head.offset
    return None


def _seq_atoms(u: ForallPS, x: str, entry: PsiEntry) -> list[Atom]:
    off = _head_prio_offset(u)
    if off is None:
        return [SSpan(u.interval)]
    seq = entry.seq
    if isinstance(seq, SeqProg):
        return [SProg(seq.start + off, seq.step, seq.consumed)]
    if isinstance(seq, SeqSym):
        return [STail(seq.origin, seq.index, off, seq.exact)]
    if isinstance(seq, SeqFinite):
        return [SPoint(disp(p, off)) for p in seq.items]
    return [SSpan(u.interval)]


def priority_of_ctx(gamma: dict[str, Type],
                    delta: dict[str, Priority],
                    theta: dict[str, Interval],
                    psi: Psi,
                    type_key: Optional[TypeKey] = None,
                    exclude: Optional[set[str]] = None) -> PrioritySet:
    """Union of the per-binding priority sets (interchangeable with the join
    of minima under the universal reading)."""
    atoms: list[Atom] = []
    for x, t in gamma.items():
        if exclude and x in exclude:
            continue
        atoms.extend(priority_of(t, delta, theta, psi, type_key))
    return tuple(atoms)


def ctx_is_unrestricted(gamma: dict[str, Type],
                        delta: dict[str, Priority],
                        theta: dict[str, Interval],
                        psi: Psi,
                        type_key: Optional[TypeKey] = None) -> tuple[bool, list[str]]:
    """Whether every binding has priority {top}; also returns offenders."""
    offenders = [x for x, t in gamma.items()
                 if not set_is_top(priority_of(t, delta, theta, psi, type_key))]
    return (not offenders, offenders)


# ---------------------------------------------------------------------------
# Priority value evaluation
# ---------------------------------------------------------------------------

def eval_priority(sigma: PriorityValue, psi: Psi) -> Priority:
    """Resolve a priority value against the priority map.  ``next^k x``
    yields the k-th remaining element of x's sequence: a literal when the
    sequence is concrete, a symbolic element otherwise.  Raises KeyError for
    unmapped endpoints and IndexError for exhausted finite sequences."""
    if isinstance(sigma, Prio):
        return sigma.prio
    entry = psi.lookup(sigma.endpoint)
    if entry is None:
        raise KeyError(sigma.endpoint)
    return disp(seq_elem(entry.seq, sigma.k), sigma.offset)
