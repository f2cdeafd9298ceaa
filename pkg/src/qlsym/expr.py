"""Exact-arithmetic symbolic expression kernel.

Expressions are immutable trees over the variables x, y, u, the jet
coordinates u_x .. u_yy, named symbolic parameters, rational constants,
the builtin functions exp/sin/cos/ln, and applications of named arbitrary
functions carrying a partial-derivative multi-index.

Every constructor returns a canonical form: sums of products, products
flattened and sorted under a fixed total order, numeric coefficients
collected, identical power bases merged by adding exponents, and
exponential factors merged by adding arguments.  Two expressions are
structurally equal exactly when their canonical forms are identical, so
``==`` is semantic equality for this expression class.
"""

from __future__ import annotations

from fractions import Fraction

import mpmath

Rational = Fraction

# Fixed variable vocabulary.  w1..w3 are placeholder slots used only inside
# FunctionRule bodies; they never appear in user-facing expressions.
VARIABLE_NAMES = (
    "x", "y", "u", "u_x", "u_y", "u_xx", "u_xy", "u_yy", "w1", "w2", "w3",
)
JET_NAMES = ("u_x", "u_y", "u_xx", "u_xy", "u_yy")
BUILTIN_NAMES = ("exp", "sin", "cos", "ln")

_POW_EXPAND_LIMIT = 10


class DomainError(ArithmeticError):
    """Numeric evaluation left the real domain (log of a non-positive
    value, fractional power of a negative base, division by zero)."""


class UnboundSymbolError(ValueError):
    """A variable, parameter, or arbitrary function lacked a binding
    during numeric evaluation."""


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ("_hash", "_key", "_free")

    def sort_key(self):
        if self._key is None:
            self._key = self._make_key()
        return self._key

    def free_symbols(self):
        """Frozenset of ('v', name) / ('p', name) / ('f', name) tags."""
        if self._free is None:
            self._free = self._make_free()
        return self._free

    def has_var(self, *names):
        free = self.free_symbols()
        return any(("v", n) in free for n in names)

    def has_funcs(self):
        return any(tag == "f" for tag, _ in self.free_symbols())

    def func_names(self):
        return {name for tag, name in self.free_symbols() if tag == "f"}

    def param_names(self):
        return {name for tag, name in self.free_symbols() if tag == "p"}

    def var_names(self):
        return {name for tag, name in self.free_symbols() if tag == "v"}

    def is_const(self):
        return isinstance(self, Const)

    def __hash__(self):
        return self._hash

    # -- arithmetic sugar (auto-coerces ints and Fractions) --------------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, mul(MINUS_ONE, _coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), mul(MINUS_ONE, self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return mul(self, pow_(_coerce(other), MINUS_ONE))

    def __rtruediv__(self, other):
        return mul(_coerce(other), pow_(self, MINUS_ONE))

    def __pow__(self, other):
        return pow_(self, _coerce(other))

    def __neg__(self):
        return mul(MINUS_ONE, self)

    def __repr__(self):
        from . import parser

        return parser.emit_expr(self)


def _coerce(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return const(v)
    raise TypeError(f"cannot use {type(v).__name__} as an expression")


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value
        self._hash = hash(("C", value))
        self._key = None
        self._free = frozenset()

    def _make_key(self):
        return (0, self.value)

    def _make_free(self):
        return frozenset()

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    __hash__ = Expr.__hash__


class Var(Expr):
    __slots__ = ("name", "index")

    def __init__(self, name):
        if name not in VARIABLE_NAMES:
            raise ValueError(f"unknown variable {name!r}")
        self.name = name
        self.index = VARIABLE_NAMES.index(name)
        self._hash = hash(("V", name))
        self._key = (1, self.index)
        self._free = frozenset({("v", name)})

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name

    __hash__ = Expr.__hash__


class Param(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name
        self._hash = hash(("P", name))
        self._key = (2, name)
        self._free = frozenset({("p", name)})

    def __eq__(self, other):
        return isinstance(other, Param) and self.name == other.name

    __hash__ = Expr.__hash__


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        self.base = base
        self.exponent = exponent
        self._hash = hash(("^", base, exponent))
        self._key = None
        self._free = None

    def _make_key(self):
        return (3, self.base.sort_key(), self.exponent.sort_key())

    def _make_free(self):
        return self.base.free_symbols() | self.exponent.free_symbols()

    def __eq__(self, other):
        return (
            isinstance(other, Pow)
            and self._hash == other._hash
            and self.base == other.base
            and self.exponent == other.exponent
        )

    __hash__ = Expr.__hash__


class Fn(Expr):
    """Builtin function application: exp, sin, cos, ln."""

    __slots__ = ("name", "arg")

    def __init__(self, name, arg):
        if name not in BUILTIN_NAMES:
            raise ValueError(f"unknown builtin {name!r}")
        self.name = name
        self.arg = arg
        self._hash = hash(("B", name, arg))
        self._key = None
        self._free = None

    def _make_key(self):
        return (4, self.name, self.arg.sort_key())

    def _make_free(self):
        return self.arg.free_symbols()

    def __eq__(self, other):
        return (
            isinstance(other, Fn)
            and self._hash == other._hash
            and self.name == other.name
            and self.arg == other.arg
        )

    __hash__ = Expr.__hash__


class Func(Expr):
    """Arbitrary-function application with a derivative multi-index.

    ``Func("F", (u,), (2,))`` is F''(u); ``Func("xi", (x, y), (1, 0))``
    is the x-partial of an unknown two-argument function xi.
    """

    __slots__ = ("name", "args", "dorder")

    def __init__(self, name, args, dorder):
        if len(args) != len(dorder) or not args:
            raise ValueError("argument list and derivative index must match")
        if any(k < 0 for k in dorder):
            raise ValueError("derivative orders must be non-negative")
        self.name = name
        self.args = args
        self.dorder = dorder
        self._hash = hash(("F", name, args, dorder))
        self._key = None
        self._free = None

    def _make_key(self):
        return (5, self.name, self.dorder, tuple(a.sort_key() for a in self.args))

    def _make_free(self):
        free = frozenset({("f", self.name)})
        for a in self.args:
            free |= a.free_symbols()
        return free

    def __eq__(self, other):
        return (
            isinstance(other, Func)
            and self._hash == other._hash
            and self.name == other.name
            and self.dorder == other.dorder
            and self.args == other.args
        )

    __hash__ = Expr.__hash__


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        self.terms = terms
        self._hash = hash(("+", terms))
        self._key = None
        self._free = None

    def _make_key(self):
        return (6, tuple(t.sort_key() for t in self.terms))

    def _make_free(self):
        free = frozenset()
        for t in self.terms:
            free |= t.free_symbols()
        return free

    def __eq__(self, other):
        return (
            isinstance(other, Add)
            and self._hash == other._hash
            and self.terms == other.terms
        )

    __hash__ = Expr.__hash__


class Mul(Expr):
    """coeff * factor1 * ... * factorN with coeff a nonzero Fraction and
    the factors sorted non-constant atoms (Var/Param/Pow/Fn/Func)."""

    __slots__ = ("coeff", "factors")

    def __init__(self, coeff, factors):
        self.coeff = coeff
        self.factors = factors
        self._hash = hash(("*", coeff, factors))
        self._key = None
        self._free = None

    def _make_key(self):
        return (7, tuple(f.sort_key() for f in self.factors), self.coeff)

    def _make_free(self):
        free = frozenset()
        for f in self.factors:
            free |= f.free_symbols()
        return free

    def __eq__(self, other):
        return (
            isinstance(other, Mul)
            and self._hash == other._hash
            and self.coeff == other.coeff
            and self.factors == other.factors
        )

    __hash__ = Expr.__hash__


# ---------------------------------------------------------------------------
# smart constructors
# ---------------------------------------------------------------------------

_CONST_CACHE = {}


def const(v):
    v = Fraction(v)
    node = _CONST_CACHE.get(v)
    if node is None and -64 <= v <= 64:
        node = _CONST_CACHE.setdefault(v, Const(v))
    return node if node is not None else Const(v)


ZERO = const(0)
ONE = const(1)
MINUS_ONE = const(-1)

_VAR_CACHE = {name: Var(name) for name in VARIABLE_NAMES}


def var(name):
    try:
        return _VAR_CACHE[name]
    except KeyError:
        raise ValueError(f"unknown variable {name!r}") from None


X = var("x")
Y = var("y")
U = var("u")


def param(name):
    return Param(name)


def coeff_monomial(e):
    """Decompose into (Fraction coefficient, tuple of non-constant factors)."""
    if isinstance(e, Const):
        return e.value, ()
    if isinstance(e, Mul):
        return e.coeff, e.factors
    return Fraction(1), (e,)


def _term(coeff, factors):
    if coeff == 0:
        return ZERO
    if not factors:
        return const(coeff)
    if coeff == 1 and len(factors) == 1:
        return factors[0]
    return Mul(coeff, tuple(factors))


def add(*exprs):
    acc = {}
    order = {}
    for e in exprs:
        stack = [e]
        while stack:
            t = stack.pop()
            if isinstance(t, Add):
                stack.extend(reversed(t.terms))
                continue
            c, mono = coeff_monomial(t)
            if c == 0:
                continue
            if mono in acc:
                acc[mono] += c
            else:
                acc[mono] = c
                order[mono] = None
    terms = []
    for mono, c in acc.items():
        if c != 0:
            terms.append(_term(c, mono))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    terms.sort(key=Expr.sort_key)
    return Add(tuple(terms))


def _decompose_pow(f):
    """Factor -> (base, exponent)."""
    if isinstance(f, Pow):
        return f.base, f.exponent
    return f, ONE


def mul(*exprs):
    coeff = Fraction(1)
    bases = {}  # base -> list of exponents
    base_order = []
    adds = []
    exp_args = []  # arguments of exp factors, to be merged

    def eat(e):
        nonlocal coeff
        stack = [e]
        while stack:
            f = stack.pop()
            if isinstance(f, Const):
                coeff *= f.value
                continue
            if isinstance(f, Mul):
                coeff *= f.coeff
                stack.extend(f.factors)
                continue
            if isinstance(f, Add):
                adds.append(f)
                continue
            if isinstance(f, Fn) and f.name == "exp":
                exp_args.append(f.arg)
                continue
            b, ex = _decompose_pow(f)
            if b in bases:
                bases[b].append(ex)
            else:
                bases[b] = [ex]
                base_order.append(b)

    for e in exprs:
        eat(e)
        if coeff == 0:
            return ZERO

    # rebuild merged factors; rebuilding may produce non-atoms that need
    # another pass (e.g. (x+1)^2 expanding, 2^2 folding into the coefficient)
    factors = []
    pending = []
    for b in base_order:
        ex = add(*bases[b])
        if ex == ZERO:
            continue
        p = pow_(b, ex)
        if isinstance(p, (Const, Mul, Add)) or (isinstance(p, Fn) and p.name == "exp"):
            pending.append(p)
        else:
            factors.append(p)
    if exp_args:
        s = add(*exp_args)
        p = fn("exp", s)
        if isinstance(p, Const):
            coeff *= p.value
        else:
            factors.append(p)
    if coeff == 0:
        return ZERO
    if pending:
        return mul(_term(coeff, tuple(sorted(factors, key=Expr.sort_key))),
                   *pending, *adds)

    if not adds:
        factors.sort(key=Expr.sort_key)
        return _term(coeff, tuple(factors))

    # distribute over sums
    factors.sort(key=Expr.sort_key)
    terms = [_term(coeff, tuple(factors))]
    for a in adds:
        parts = a.terms if isinstance(a, Add) else (a,)
        terms = [mul(t, p) for t in terms for p in parts]
    return add(*terms)


def _is_int_const(e):
    return isinstance(e, Const) and e.value.denominator == 1


def pow_(base, exponent):
    if exponent == ZERO:
        return ONE
    if exponent == ONE:
        return base
    if isinstance(base, Const):
        if base.value == 1:
            return ONE
        if _is_int_const(exponent):
            n = int(exponent.value)
            if base.value != 0 or n > 0:
                return const(base.value ** n)
            return Pow(base, exponent)  # 0^negative: left for eval to reject
        if base.value == 0 and isinstance(exponent, Const) and exponent.value > 0:
            return ZERO
        return Pow(base, exponent)
    if isinstance(base, Mul) and _is_int_const(exponent):
        n = int(exponent.value)
        return mul(const(base.coeff ** n), *[pow_(f, exponent) for f in base.factors])
    if isinstance(base, Pow) and _is_int_const(exponent):
        return pow_(base.base, mul(base.exponent, exponent))
    if isinstance(base, Fn) and base.name == "exp":
        return fn("exp", mul(base.arg, exponent))
    if isinstance(base, Add) and _is_int_const(exponent):
        n = int(exponent.value)
        if 2 <= n <= _POW_EXPAND_LIMIT:
            out = base
            for _ in range(n - 1):
                out = mul(out, base)
            return out
        if -_POW_EXPAND_LIMIT <= n <= -1:
            # store negative powers of sums as 1/(expanded positive power)
            expanded = pow_(base, const(-n))
            if isinstance(expanded, Add):
                return Pow(expanded, MINUS_ONE)
            return pow_(expanded, MINUS_ONE)
    return Pow(base, exponent)


def fn(name, arg):
    if name == "exp" and arg == ZERO:
        return ONE
    if name == "sin" and arg == ZERO:
        return ZERO
    if name == "cos" and arg == ZERO:
        return ONE
    if name == "ln" and arg == ONE:
        return ZERO
    return Fn(name, arg)


def func(name, args, dorder=None):
    args = tuple(_coerce(a) for a in args)
    if dorder is None:
        dorder = (0,) * len(args)
    return Func(name, args, tuple(dorder))


def normalize(e):
    """Rebuild ``e`` bottom-up through the canonicalizing constructors.

    Constructors already canonicalize, so this is the identity on any
    expression produced by this module; it exists as the explicit
    normalization entry point and as a consistency check.
    """
    if isinstance(e, (Const, Var, Param)):
        return e
    if isinstance(e, Add):
        return add(*[normalize(t) for t in e.terms])
    if isinstance(e, Mul):
        return mul(const(e.coeff), *[normalize(f) for f in e.factors])
    if isinstance(e, Pow):
        return pow_(normalize(e.base), normalize(e.exponent))
    if isinstance(e, Fn):
        return fn(e.name, normalize(e.arg))
    if isinstance(e, Func):
        return Func(e.name, tuple(normalize(a) for a in e.args), e.dorder)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def differentiate(e, v):
    """Partial derivative of ``e`` with respect to the variable ``v``
    (x, y, u, a jet coordinate, or a placeholder slot).

    Arbitrary-function nodes bump the derivative order of the argument
    slots through the chain rule; jet coordinates are treated as
    independent variables.
    """
    if isinstance(v, str):
        v = var(v)
    if not isinstance(v, Var):
        raise TypeError("can only differentiate with respect to a variable")
    memo = {}

    def go(t):
        if ("v", v.name) not in t.free_symbols():
            return ZERO
        cached = memo.get(t)
        if cached is not None:
            return cached
        if isinstance(t, Var):
            out = ONE if t == v else ZERO
        elif isinstance(t, Add):
            out = add(*[go(term) for term in t.terms])
        elif isinstance(t, Mul):
            parts = []
            for i, f in enumerate(t.factors):
                df = go(f)
                if df != ZERO:
                    rest = t.factors[:i] + t.factors[i + 1:]
                    parts.append(mul(const(t.coeff), df, *rest))
            out = add(*parts)
        elif isinstance(t, Pow):
            db = go(t.base)
            de = go(t.exponent)
            parts = []
            if db != ZERO:
                parts.append(mul(t.exponent, pow_(t.base, add(t.exponent, MINUS_ONE)), db))
            if de != ZERO:
                parts.append(mul(t, fn("ln", t.base), de))
            out = add(*parts)
        elif isinstance(t, Fn):
            da = go(t.arg)
            if t.name == "exp":
                outer = fn("exp", t.arg)
            elif t.name == "sin":
                outer = fn("cos", t.arg)
            elif t.name == "cos":
                outer = mul(MINUS_ONE, fn("sin", t.arg))
            else:  # ln
                outer = pow_(t.arg, MINUS_ONE)
            out = mul(outer, da)
        elif isinstance(t, Func):
            parts = []
            for i, a in enumerate(t.args):
                da = go(a)
                if da != ZERO:
                    bumped = tuple(
                        k + 1 if j == i else k for j, k in enumerate(t.dorder)
                    )
                    parts.append(mul(Func(t.name, t.args, bumped), da))
            out = add(*parts)
        else:
            out = ZERO
        memo[t] = out
        return out

    return go(e)


# ---------------------------------------------------------------------------
# substitution
# ---------------------------------------------------------------------------


class FunctionRule:
    """Concrete replacement for an arbitrary-function symbol.

    ``args`` names the placeholder variables of ``body``; a node with
    derivative multi-index (k1, .., kn) receives the corresponding mixed
    partial derivative of ``body`` before its arguments are substituted.
    """

    __slots__ = ("args", "body", "_cache")

    def __init__(self, args, body):
        self.args = tuple(args)
        self.body = _coerce(body)
        self._cache = {}

    def derivative(self, dorder):
        out = self._cache.get(dorder)
        if out is None:
            out = self.body
            for name, k in zip(self.args, dorder):
                for _ in range(k):
                    out = differentiate(out, name)
            self._cache[dorder] = out
        return out

    def apply(self, args, dorder):
        body = self.derivative(dorder)
        return substitute(body, {name: a for name, a in zip(self.args, args)})


def rule_in_u(body):
    """Function rule for a single-argument function given as an expression in u."""
    return FunctionRule(("u",), body)


def _norm_bindings(bindings):
    out = {}
    for k, v in bindings.items():
        if isinstance(k, Var):
            name = k.name
        elif isinstance(k, Param):
            name = k.name
        elif isinstance(k, str):
            name = k
        else:
            raise TypeError(f"bad substitution key {k!r}")
        if isinstance(v, FunctionRule):
            out[("f", name)] = v
        elif name in VARIABLE_NAMES:
            out[("v", name)] = _coerce(v)
        else:
            out[("p", name)] = _coerce(v)
    return out


def substitute(e, bindings):
    """Replace variables, parameters, and arbitrary-function symbols.

    Function bindings are :class:`FunctionRule` values; a derivative-order
    node receives the corresponding derivative of the rule body.  Unbound
    function symbols stay symbolic.  The result is canonical.
    """
    binds = _norm_bindings(bindings)
    if not binds:
        return e
    keys = set(binds)
    memo = {}

    def go(t):
        if not (keys & t.free_symbols()):
            return t
        cached = memo.get(t)
        if cached is not None:
            return cached
        if isinstance(t, Var):
            out = binds.get(("v", t.name), t)
        elif isinstance(t, Param):
            out = binds.get(("p", t.name), t)
        elif isinstance(t, Add):
            out = add(*[go(term) for term in t.terms])
        elif isinstance(t, Mul):
            out = mul(const(t.coeff), *[go(f) for f in t.factors])
        elif isinstance(t, Pow):
            out = pow_(go(t.base), go(t.exponent))
        elif isinstance(t, Fn):
            out = fn(t.name, go(t.arg))
        elif isinstance(t, Func):
            args = tuple(go(a) for a in t.args)
            rule = binds.get(("f", t.name))
            if rule is None:
                out = Func(t.name, args, t.dorder)
            else:
                if len(rule.args) != len(args):
                    raise ValueError(
                        f"rule for {t.name} expects {len(rule.args)} arguments"
                    )
                out = rule.apply(args, t.dorder)
        else:
            out = t
        memo[t] = out
        return out

    return go(e)


def map_funcs(e, mapper):
    """Rebuild ``e``, replacing each Func node n by mapper(n) when that is
    not None.  Used for zeroing derivative families during structural
    analysis of determining systems."""
    memo = {}

    def go(t):
        if not t.has_funcs():
            return t
        cached = memo.get(t)
        if cached is not None:
            return cached
        if isinstance(t, Add):
            out = add(*[go(term) for term in t.terms])
        elif isinstance(t, Mul):
            out = mul(const(t.coeff), *[go(f) for f in t.factors])
        elif isinstance(t, Pow):
            out = pow_(go(t.base), go(t.exponent))
        elif isinstance(t, Fn):
            out = fn(t.name, go(t.arg))
        elif isinstance(t, Func):
            mapped = mapper(t)
            if mapped is None:
                out = Func(t.name, tuple(go(a) for a in t.args), t.dorder)
            else:
                out = _coerce(mapped)
        else:
            out = t
        memo[t] = out
        return out

    return go(e)


# ---------------------------------------------------------------------------
# numeric evaluation
# ---------------------------------------------------------------------------


def eval_numeric(e, point, params=None, precision_bits=128):
    """Evaluate at high precision.  ``point`` maps variable names to
    values, ``params`` maps parameter names; values may be int, Fraction,
    str, or mpmath floats.  Raises DomainError for ln of a non-positive
    value, fractional powers of negative bases, and division by zero;
    raises UnboundSymbolError for missing bindings."""
    env = {}
    for src in (point, params or {}):
        for k, v in src.items():
            name = k.name if isinstance(k, (Var, Param)) else k
            env[name] = v

    with mpmath.workprec(precision_bits):

        def tomp(v):
            if isinstance(v, Fraction):
                return mpmath.mpf(v.numerator) / mpmath.mpf(v.denominator)
            return mpmath.mpf(v)

        def go(t):
            if isinstance(t, Const):
                return tomp(t.value)
            if isinstance(t, (Var, Param)):
                try:
                    return tomp(env[t.name])
                except KeyError:
                    raise UnboundSymbolError(f"no value bound for {t.name}") from None
            if isinstance(t, Add):
                return mpmath.fsum(go(term) for term in t.terms)
            if isinstance(t, Mul):
                out = tomp(t.coeff)
                for f in t.factors:
                    out *= go(f)
                return out
            if isinstance(t, Pow):
                b = go(t.base)
                if isinstance(t.exponent, Const):
                    ev = t.exponent.value
                    if b == 0:
                        if ev < 0:
                            raise DomainError("zero raised to a negative power")
                        return mpmath.mpf(0)
                    if b < 0:
                        if ev.denominator != 1:
                            raise DomainError("fractional power of a negative base")
                        return mpmath.power(b, int(ev))
                    return mpmath.power(b, tomp(ev))
                ex = go(t.exponent)
                if b == 0:
                    if ex <= 0:
                        raise DomainError("zero base with non-positive exponent")
                    return mpmath.mpf(0)
                if b < 0:
                    if ex != mpmath.floor(ex):
                        raise DomainError("fractional power of a negative base")
                    return mpmath.power(b, int(ex))
                return mpmath.power(b, ex)
            if isinstance(t, Fn):
                a = go(t.arg)
                if t.name == "exp":
                    return mpmath.exp(a)
                if t.name == "sin":
                    return mpmath.sin(a)
                if t.name == "cos":
                    return mpmath.cos(a)
                if a <= 0:
                    raise DomainError("ln of a non-positive value")
                return mpmath.log(a)
            if isinstance(t, Func):
                raise UnboundSymbolError(
                    f"arbitrary function {t.name} cannot be evaluated numerically"
                )
            raise TypeError(f"not an expression: {t!r}")

        return go(e)


# ---------------------------------------------------------------------------
# zero decision
# ---------------------------------------------------------------------------


class TriState:
    """Zero / nonzero / zero-only-under-conditions verdict.

    ``conditions`` are parameter expressions whose simultaneous vanishing
    makes the checked expression identically zero."""

    __slots__ = ("kind", "conditions")

    ZERO = "IdenticallyZero"
    NONZERO = "Nonzero"
    CONDITIONAL = "UnknownUnderConditions"

    def __init__(self, kind, conditions=()):
        if kind == TriState.CONDITIONAL and not conditions:
            raise ValueError("conditional verdict requires conditions")
        self.kind = kind
        self.conditions = tuple(conditions)

    @classmethod
    def zero(cls):
        return cls(cls.ZERO)

    @classmethod
    def nonzero(cls):
        return cls(cls.NONZERO)

    @classmethod
    def conditional(cls, conditions):
        return cls(cls.CONDITIONAL, conditions)

    @property
    def is_zero(self):
        return self.kind == TriState.ZERO

    @property
    def is_nonzero(self):
        return self.kind == TriState.NONZERO

    def __repr__(self):
        if self.kind == TriState.CONDITIONAL:
            return f"TriState({self.kind}: {list(self.conditions)})"
        return f"TriState({self.kind})"

    def __eq__(self, other):
        return (
            isinstance(other, TriState)
            and self.kind == other.kind
            and self.conditions == other.conditions
        )

    def __hash__(self):
        return hash((self.kind, self.conditions))


def split_terms(e, selector):
    """Group the additive terms of ``e`` by the product of their factors
    for which ``selector(factor)`` is true.

    Returns an ordered dict mapping each selected monomial (as a canonical
    expression, ONE for the empty product) to its coefficient expression.
    """
    groups = {}
    terms = e.terms if isinstance(e, Add) else (e,)
    for t in terms:
        c, mono = coeff_monomial(t)
        key_facs = tuple(f for f in mono if selector(f))
        rest = tuple(f for f in mono if not selector(f))
        key = _term(Fraction(1), key_facs)
        part = _term(c, rest)
        if key in groups:
            groups[key] = add(groups[key], part)
        else:
            groups[key] = part
    return {k: v for k, v in groups.items() if v != ZERO}


def _involves_vars(factor, names):
    return any(("v", n) in factor.free_symbols() for n in names)


def split_by_vars(e, names):
    """split_terms keyed on factors that involve any variable in ``names``."""
    names = tuple(names)
    return split_terms(e, lambda f: _involves_vars(f, names) or f.has_funcs())


def primitive_part(e):
    """Divide out the rational content and fix the sign of the leading
    canonical term, for stable presentation of conditions."""
    if e == ZERO:
        return ZERO
    terms = e.terms if isinstance(e, Add) else (e,)
    coeffs = [coeff_monomial(t)[0] for t in terms]
    from math import gcd

    num = 0
    den = 1
    for c in coeffs:
        num = gcd(num, abs(c.numerator))
        den = den * c.denominator // gcd(den, c.denominator)
    content = Fraction(num, 1) / den if num else Fraction(1)
    lead_sign = 1 if coeffs[0] > 0 else -1
    scale = Fraction(lead_sign) / content
    return mul(const(scale), e)


def clear_param_denominators(e):
    """Multiply away negative powers whose base contains only parameters.

    Returns the resulting numerator expression; sound for zero-testing
    because the removed factors are nowhere identically zero on the
    parameter domain (they appear as denominators)."""
    seen = {}
    terms = e.terms if isinstance(e, Add) else (e,)
    for t in terms:
        _, mono = coeff_monomial(t)
        for f in mono:
            if isinstance(f, Pow) and isinstance(f.exponent, Const):
                ev = f.exponent.value
                if ev < 0 and ev.denominator == 1 and not f.base.var_names() \
                        and not f.base.has_funcs() and f.base.param_names():
                    need = -int(ev)
                    if seen.get(f.base, 0) < need:
                        seen[f.base] = need
    out = e
    for base, k in seen.items():
        out = mul(out, pow_(base, const(k)))
    return out


def is_zero(e, params=None):
    """Decide whether ``e`` is identically zero.

    Distinct transcendental/variable monomials are treated as linearly
    independent over the parameter coefficients; a surviving monomial with
    a purely rational coefficient makes the expression Nonzero, while
    parameter-dependent coefficients become vanishing conditions.
    """
    e = clear_param_denominators(e)
    if e == ZERO:
        return TriState.zero()
    groups = split_terms(
        e, lambda f: bool(f.var_names()) or f.has_funcs()
    )
    if not groups:
        return TriState.zero()
    conditions = []
    seen = set()
    for coeff in groups.values():
        coeff = clear_param_denominators(coeff)
        if isinstance(coeff, Const):
            if coeff.value != 0:
                return TriState.nonzero()
            continue
        cond = primitive_part(coeff)
        if cond not in seen:
            seen.add(cond)
            conditions.append(cond)
    if not conditions:
        return TriState.zero()
    return TriState.conditional(conditions)


def _rational_roots(coeffs):
    """Rational roots of sum(coeffs[k] * t^k) with Fraction coefficients."""
    scale = 1
    for c in coeffs:
        scale = scale * c.denominator // __import__("math").gcd(scale, c.denominator)
    ints = [int(c * scale) for c in coeffs]
    while ints and ints[-1] == 0:
        ints.pop()
    if len(ints) < 2:
        return []
    lead, tail = ints[-1], ints[0]
    shift = 0
    while tail == 0:
        shift += 1
        tail = ints[shift]
    roots = set()
    if shift:
        roots.add(Fraction(0))

    def divisors(n):
        n = abs(n)
        out = set()
        d = 1
        while d * d <= n:
            if n % d == 0:
                out.add(d)
                out.add(n // d)
            d += 1
        return out

    for p in divisors(tail):
        for q in divisors(lead):
            for cand in (Fraction(p, q), Fraction(-p, q)):
                if sum(c * cand**k for k, c in enumerate(ints)) == 0:
                    roots.add(cand)
    return sorted(roots)


def factor_conditions(cond):
    """Split a vanishing condition into factors: the condition holds iff
    at least one returned factor vanishes.

    Pulls out common monomial factors, then splits off rational linear
    factors of a univariate residual; anything further is returned whole.
    """
    if isinstance(cond, Const):
        return [cond]
    terms = cond.terms if isinstance(cond, Add) else (cond,)
    # common monomial part across all terms
    monos = [coeff_monomial(t)[1] for t in terms]
    common = {}
    for base, ex in (_decompose_pow(f) for f in monos[0]):
        if _is_int_const(ex) and int(ex.value) > 0:
            common[base] = int(ex.value)
    for mono in monos[1:]:
        here = {}
        for base, ex in (_decompose_pow(f) for f in mono):
            if _is_int_const(ex) and int(ex.value) > 0:
                here[base] = int(ex.value)
        common = {b: min(k, here[b]) for b, k in common.items() if b in here}
        if not common:
            break
    factors = []
    residual = cond
    for base, k in sorted(common.items(), key=lambda bk: bk[0].sort_key()):
        factors.append(base)
        residual = mul(residual, pow_(base, const(-k)))
    residual = primitive_part(residual)
    if isinstance(residual, Const):
        return factors or [residual]
    # univariate residual: split off rational linear factors
    pnames = sorted(residual.param_names())
    if len(pnames) == 1 and not residual.var_names() and not residual.has_funcs():
        p = param(pnames[0])
        coeffs = {}
        ok = True
        for t in (residual.terms if isinstance(residual, Add) else (residual,)):
            c, mono = coeff_monomial(t)
            if not mono:
                coeffs[0] = coeffs.get(0, Fraction(0)) + c
            elif len(mono) == 1:
                base, ex = _decompose_pow(mono[0])
                if base == p and _is_int_const(ex) and int(ex.value) > 0:
                    coeffs[int(ex.value)] = coeffs.get(int(ex.value), Fraction(0)) + c
                else:
                    ok = False
                    break
            else:
                ok = False
                break
        if ok and coeffs:
            deg = max(coeffs)
            vec = [coeffs.get(k, Fraction(0)) for k in range(deg + 1)]
            roots = _rational_roots(vec)
            if roots:
                rem = residual
                for rt in roots:
                    factors.append(add(p, const(-rt)))
                    # deflate once per distinct root
                    num = substitute(rem, {p: add(p, const(rt))})
                    # divide num (polynomial with zero constant term in p) by p
                    rem = mul(num, pow_(p, MINUS_ONE))
                    rem = substitute(rem, {p: add(p, const(-rt))})
                    rem = primitive_part(rem) if rem != ZERO else rem
                if not isinstance(rem, Const):
                    factors.append(rem)
                return factors
    factors.append(residual)
    return factors
