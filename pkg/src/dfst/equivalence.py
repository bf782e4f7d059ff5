"""Type equivalence: sequential composition is associative with Skip as its
unit, recursion is equi-recursive, and constructors only match at identical
priorities.

The algorithm is normalization plus coinductive syntactic comparison with an
assumption cache.  It is sound but incomplete: differently factored
context-free unrollings may be rejected.  That only ever rejects programs,
never accepts wrong ones.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional

from .syntax import (
    Priority, Interval, PVar,
    Type, TUnit, TInt, TArrow, TProd, TVarF, TVarS, NegVarS, RecF, RecS,
    ForallT, ForallPF, ForallPS, TSkip, TOut, TIn, TIntChoice, TExtChoice,
    TSeq, TClose, TWait, SKIP,
    type_children, subst_prio_in_type, subst_type,
)
from .algebra import unravel

PrioEq = Callable[[Priority, Priority], bool]


def _prio_identical(a: Priority, b: Priority) -> bool:
    return a == b


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def normalize(t: Type) -> Type:
    """Right-associate sequential composition and erase Skip units on either
    side; priorities are untouched.  Applied recursively to every subterm."""
    if isinstance(t, TSeq):
        fst = normalize(t.fst)
        snd = normalize(t.snd)
        if isinstance(fst, TSkip):
            return snd
        if isinstance(snd, TSkip):
            return fst
        if isinstance(fst, TSeq):
            return normalize(TSeq(fst.fst, TSeq(fst.snd, snd)))
        return TSeq(fst, snd)
    if isinstance(t, TArrow):
        return TArrow(normalize(t.dom), normalize(t.cod), t.lo, t.hi, t.mult)
    if isinstance(t, TProd):
        return TProd(normalize(t.fst), normalize(t.snd))
    if isinstance(t, TOut):
        return TOut(normalize(t.payload), t.prio)
    if isinstance(t, TIn):
        return TIn(normalize(t.payload), t.prio)
    if isinstance(t, TIntChoice):
        return TIntChoice(tuple((l, normalize(s)) for l, s in t.branches), t.prio)
    if isinstance(t, TExtChoice):
        return TExtChoice(tuple((l, normalize(s)) for l, s in t.branches), t.prio)
    if isinstance(t, (RecF, RecS, ForallT, ForallPF, ForallPS)):
        return replace(t, body=normalize(t.body))
    return t


# ---------------------------------------------------------------------------
# Alpha-canonical form (for cache keys and fast equality)
# ---------------------------------------------------------------------------

def alpha_canon(t: Type) -> Type:
    """Rename bound type and priority variables positionally."""
    counter = [0]

    def fresh() -> str:
        counter[0] += 1
        return f"%{counter[0]}"

    def go(t: Type) -> Type:
        if isinstance(t, (RecF, RecS, ForallT)):
            nv = fresh()
            repl = TVarS(nv) if isinstance(t, RecS) else TVarF(nv)
            if isinstance(t, ForallT):
                body = subst_type(subst_type(t.body, TVarS(nv), t.var),
                                  TVarF(nv), t.var)
            else:
                body = subst_type(t.body, repl, t.var)
            return replace(t, var=nv, body=go(body))
        if isinstance(t, (ForallPF, ForallPS)):
            nv = fresh()
            body = subst_prio_in_type(t.body, PVar(nv), t.var)
            return replace(t, var=nv, body=go(body))
        return _map_children(t, go)

    return go(t)


def _map_children(t: Type, f: Callable[[Type], Type]) -> Type:
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
    return t


def canon_key(t: Type) -> Type:
    """Canonical, hashable representative used for priority-map reverse
    lookups and equivalence caching."""
    return alpha_canon(normalize(t))


# ---------------------------------------------------------------------------
# Equivalence
# ---------------------------------------------------------------------------

_FUEL = 256


def equiv(delta: dict, theta: dict, t1: Type, t2: Type,
          prio_eq_fn: Optional[PrioEq] = None) -> bool:
    """Sound equivalence check; identical constructors must carry identical
    priorities (modulo ``prio_eq_fn``, which the checker may extend to defer
    symbolic comparisons)."""
    peq = prio_eq_fn or _prio_identical
    seen: set[tuple[Type, Type]] = set()

    def ieq(a: Interval, b: Interval) -> bool:
        return (a.lo_open == b.lo_open and a.hi_open == b.hi_open
                and peq(a.lo, b.lo) and peq(a.hi, b.hi))

    def go(a: Type, b: Type, fuel: int) -> bool:
        a = normalize(a)
        b = normalize(b)
        ka, kb = alpha_canon(a), alpha_canon(b)
        if ka == kb:
            return True
        if fuel <= 0:
            return False
        key = (ka, kb)
        if key in seen:
            return True
        seen.add(key)
        ua, ub = unravel(a), unravel(b)
        return head(ua, ub, fuel - 1)

    def head(a: Type, b: Type, fuel: int) -> bool:
        if isinstance(a, (TUnit, TInt, TSkip)):
            return type(a) is type(b)
        if isinstance(a, TArrow) and isinstance(b, TArrow):
            return (a.mult is b.mult and peq(a.lo, b.lo) and peq(a.hi, b.hi)
                    and go(a.dom, b.dom, fuel) and go(a.cod, b.cod, fuel))
        if isinstance(a, TProd) and isinstance(b, TProd):
            return go(a.fst, b.fst, fuel) and go(a.snd, b.snd, fuel)
        if isinstance(a, TOut) and isinstance(b, TOut):
            return peq(a.prio, b.prio) and go(a.payload, b.payload, fuel)
        if isinstance(a, TIn) and isinstance(b, TIn):
            return peq(a.prio, b.prio) and go(a.payload, b.payload, fuel)
        if isinstance(a, (TIntChoice, TExtChoice)) and type(a) is type(b):
            da, db = dict(a.branches), dict(b.branches)
            if set(da) != set(db) or not peq(a.prio, b.prio):
                return False
            return all(go(da[l], db[l], fuel) for l in da)
        if isinstance(a, TSeq) and isinstance(b, TSeq):
            return go(a.fst, b.fst, fuel) and go(a.snd, b.snd, fuel)
        if isinstance(a, (TVarF, TVarS, NegVarS)) and type(a) is type(b):
            return a.name == b.name
        if isinstance(a, ForallT) and isinstance(b, ForallT):
            if not peq(a.prio, b.prio):
                return False
            body_b = subst_type(subst_type(b.body, TVarS(a.var), b.var),
                                TVarF(a.var), b.var) if a.var != b.var else b.body
            return go(a.body, body_b, fuel)
        if isinstance(a, (ForallPF, ForallPS)) and type(a) is type(b):
            if not ieq(a.interval, b.interval):
                return False
            body_b = subst_prio_in_type(b.body, PVar(a.var), b.var) \
                if a.var != b.var else b.body
            return go(a.body, body_b, fuel)
        return False

    return go(t1, t2, _FUEL)
