"""Expression grammar and PDE specification files.

Expression grammar (round-tripped by :func:`emit_expr`):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative, tighter than unary minus
    atom    := INTEGER | call | '(' expr ')'
    call    := NAME PRIME* ('(' expr (',' expr)* ')')?

There is no implicit multiplication.  Rationals are written p/q.  Primes
mark derivatives of single-argument arbitrary functions (F''(u)); for
multi-argument functions an underscore suffix names the differentiated
arguments (xi_xy(x, y) is the mixed partial of xi).

Specification files are UTF-8, ``#`` comments, one ``key = value`` per
line.  Keys: a11 a12 a22 b1 b2, alpha1..alphaL, F1..FL, params, atoms,
degree, domain.  Missing a12/a22/b1/b2 default to 0, a11 defaults to 1,
and the whole equation is rescaled so that a11 = 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as ex
from .expr import Expr, Fraction as Rat


class ExprSyntaxError(ValueError):
    def __init__(self, message, line=1, column=0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownIdentifierError(ExprSyntaxError):
    pass


class SpecError(ValueError):
    """Malformed specification file."""


class MissingFieldError(SpecError):
    pass


class ZeroA11Error(SpecError):
    pass


class AlphaDependenceError(SpecError):
    pass


class LinearFWarning(UserWarning):
    """A source function is linear in u; classification is restricted."""


# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

_OPS = set("+-*/^(),'")


@dataclass
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    line: int
    column: int


def _lex(text):
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch.isdigit():
            start = i
            startcol = col
            while i < n and text[i].isdigit():
                i += 1
                col += 1
            tokens.append(_Token("num", text[start:i], line, startcol))
            continue
        if ch.isalpha() or ch == "_":
            start = i
            startcol = col
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
                col += 1
            tokens.append(_Token("name", text[start:i], line, startcol))
            continue
        if ch in _OPS:
            tokens.append(_Token("op", ch, line, col))
            i += 1
            col += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("end", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens, params, functions, open_functions):
        self.toks = tokens
        self.pos = 0
        self.params = set(params)
        self.functions = set(functions)
        self.open_functions = open_functions

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect_op(self, op):
        t = self.take()
        if t.kind != "op" or t.text != op:
            raise ExprSyntaxError(
                f"expected {op!r}, found {t.text!r}" if t.kind != "end"
                else f"expected {op!r} at end of input", t.line, t.column)
        return t

    def parse(self):
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ExprSyntaxError(f"unexpected {t.text!r}", t.line, t.column)
        return e

    def expr(self):
        e = self.term()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.take()
                rhs = self.term()
                e = e + rhs if t.text == "+" else e - rhs
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "*/":
                self.take()
                rhs = self.unary()
                e = e * rhs if t.text == "*" else e / rhs
            else:
                return e

    def unary(self):
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return -self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            return ex.pow_(base, self.unary())
        return base

    def atom(self):
        t = self.take()
        if t.kind == "num":
            return ex.const(int(t.text))
        if t.kind == "op" and t.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "name":
            return self.name_atom(t)
        if t.kind == "end":
            raise ExprSyntaxError("unexpected end of input", t.line, t.column)
        raise ExprSyntaxError(f"unexpected {t.text!r}", t.line, t.column)

    def name_atom(self, t):
        name = t.text
        primes = 0
        while self.peek().kind == "op" and self.peek().text == "'":
            self.take()
            primes += 1
        applied = self.peek().kind == "op" and self.peek().text == "("
        if not applied:
            if primes:
                raise ExprSyntaxError(
                    "derivative marks need a function application", t.line, t.column)
            if name in ex.VARIABLE_NAMES:
                return ex.var(name)
            if name in self.params:
                return ex.param(name)
            raise UnknownIdentifierError(f"unknown identifier {name!r}", t.line, t.column)
        # function application
        self.expect_op("(")
        args = [self.expr()]
        while self.peek().kind == "op" and self.peek().text == ",":
            self.take()
            args.append(self.expr())
        self.expect_op(")")
        if name in ex.BUILTIN_NAMES:
            if primes or len(args) != 1:
                raise ExprSyntaxError(
                    f"{name} takes one argument and no derivative marks",
                    t.line, t.column)
            return ex.fn(name, args[0])
        base, suffix = name, ""
        if "_" in name and name not in self.functions:
            base, _, suffix = name.partition("_")
        known = base in self.functions or (self.open_functions and base.isidentifier())
        if not known:
            raise UnknownIdentifierError(f"unknown function {name!r}", t.line, t.column)
        if primes and (suffix or len(args) != 1):
            raise ExprSyntaxError(
                "prime derivatives apply to single-argument functions",
                t.line, t.column)
        dorder = [0] * len(args)
        if primes:
            dorder[0] = primes
        if suffix:
            argnames = []
            for a in args:
                if not isinstance(a, ex.Var):
                    raise ExprSyntaxError(
                        f"derivative suffix on {name!r} needs plain variable arguments",
                        t.line, t.column)
                argnames.append(a.name)
            for c in suffix:
                if c not in argnames:
                    raise UnknownIdentifierError(
                        f"unknown function {name!r}", t.line, t.column)
                dorder[argnames.index(c)] += 1
        return ex.func(base, tuple(args), tuple(dorder))


def parse_expr(text, params=(), functions=(), open_functions=False):
    """Parse an expression.  ``params`` and ``functions`` declare the
    identifiers allowed beyond x, y, u, the jet coordinates, and the
    builtins; with ``open_functions`` any applied name becomes an
    arbitrary-function symbol."""
    tokens = _lex(text)
    return _Parser(tokens, params, functions, open_functions).parse()


# ---------------------------------------------------------------------------
# emitter
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _emit_const(v, prec):
    s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if (v < 0 or v.denominator != 1) and prec >= _PREC_MUL:
        return f"({s})"
    return s


def _emit(e, prec):
    if isinstance(e, ex.Const):
        return _emit_const(e.value, prec)
    if isinstance(e, (ex.Var, ex.Param)):
        return e.name
    if isinstance(e, ex.Add):
        parts = []
        for i, t in enumerate(e.terms):
            c, mono = ex.coeff_monomial(t)
            if i and c < 0:
                parts.append(" - ")
                parts.append(_emit(ex._term(-c, mono), _PREC_ADD + 1))
            elif i:
                parts.append(" + ")
                parts.append(_emit(t, _PREC_ADD + 1))
            else:
                parts.append(_emit(t, _PREC_ADD))
        s = "".join(parts)
        return f"({s})" if prec > _PREC_ADD else s
    if isinstance(e, ex.Mul):
        bits = []
        coeff = e.coeff
        sign = ""
        if coeff < 0:
            sign = "-"
            coeff = -coeff
        if coeff != 1:
            bits.append(_emit_const(coeff, _PREC_MUL))
        bits.extend(_emit(f, _PREC_MUL + 0) for f in e.factors)
        s = sign + "*".join(bits)
        if prec > _PREC_MUL or (sign and prec >= _PREC_MUL):
            return f"({s})"
        return s
    if isinstance(e, ex.Pow):
        base = _emit(e.base, _PREC_ADD)
        if isinstance(e.base, (ex.Add, ex.Mul, ex.Pow)) or (
            isinstance(e.base, ex.Const)
            and (e.base.value < 0 or e.base.value.denominator != 1)
        ):
            base = f"({base})"
        exp = e.exponent
        if isinstance(exp, ex.Const) and exp.value.denominator == 1 and exp.value >= 0:
            etxt = str(exp.value.numerator)
        elif isinstance(exp, (ex.Var, ex.Param)):
            etxt = exp.name
        else:
            etxt = f"({_emit(exp, _PREC_ADD)})"
        return f"{base}^{etxt}"
    if isinstance(e, ex.Fn):
        return f"{e.name}({_emit(e.arg, _PREC_ADD)})"
    if isinstance(e, ex.Func):
        args = ", ".join(_emit(a, _PREC_ADD) for a in e.args)
        total = sum(e.dorder)
        if total == 0:
            return f"{e.name}({args})"
        if len(e.args) == 1:
            primes = "'" * e.dorder[0]
            return f"{e.name}{primes}({args})"
        letters = []
        for a, k in zip(e.args, e.dorder):
            if k and not isinstance(a, ex.Var):
                raise ValueError(
                    f"cannot serialize derivative of {e.name} applied to "
                    f"compound arguments")
            letters.append(a.name * k if k else "")
        return f"{e.name}_{''.join(letters)}({args})"
    raise TypeError(f"not an expression: {e!r}")


def emit_expr(e):
    """Render ``e`` in the input grammar; parse_expr(emit_expr(e)) == e."""
    return _emit(e, _PREC_ADD)


# ---------------------------------------------------------------------------
# PDE specification files
# ---------------------------------------------------------------------------

_FAMILY_POWER = "power"
_FAMILY_EXP = "exponential"
_FAMILY_EXP_SHIFTED = "shifted-exponential"


@dataclass(frozen=True)
class FunctionSpec:
    """One source function F_l: either a named arbitrary symbol or a
    concrete expression in u (possibly with parameters)."""

    name: str
    body: Expr | None = None  # None <-> arbitrary
    linear: bool = False
    family: str | None = None

    @property
    def arbitrary(self):
        return self.body is None

    def symbol(self):
        return ex.func(self.name, (ex.U,))

    def rule(self):
        if self.body is None:
            raise ValueError(f"{self.name} is arbitrary")
        return ex.FunctionRule(("u",), self.body)


def _classify_family(body):
    u = ex.U
    if isinstance(body, ex.Pow) and body.base == u and not body.exponent.var_names():
        return _FAMILY_POWER
    if isinstance(body, ex.Fn) and body.name == "exp":
        arg = body.arg
        du = ex.differentiate(arg, u)
        if not du.var_names() and ex.differentiate(arg, "x") == ex.ZERO:
            return _FAMILY_EXP
    if isinstance(body, ex.Add):
        exps = [t for t in body.terms if isinstance(t, ex.Fn) and t.name == "exp"]
        rest = [t for t in body.terms if not (isinstance(t, ex.Fn) and t.name == "exp")]
        if len(exps) == 1 and all(not t.var_names() for t in rest):
            if _classify_family(exps[0]) == _FAMILY_EXP:
                return _FAMILY_EXP_SHIFTED
    return None


@dataclass
class PdeSpec:
    """A quasi-linear second-order PDE

        u_xx + a12 u_xy + a22 u_yy + b1 u_x + b2 u_y = sum_l alpha_l F_l(u)

    already rescaled so the u_xx coefficient is 1."""

    a12: Expr
    a22: Expr
    b1: Expr
    b2: Expr
    alphas: tuple
    fs: tuple
    params: tuple = ()
    atoms: tuple = ()
    degree: int | None = None
    domain_guards: tuple = ()
    domain_text: str = ""

    MAX_TERMS = 4

    @property
    def L(self):
        return len(self.alphas)

    @property
    def D(self):
        return 3 * self.L + 2

    def f_names(self):
        return tuple(f.name for f in self.fs)

    def e_operator(self, g):
        """Apply the left-side differential operator to an expression in (x, y)."""
        gx = ex.differentiate(g, "x")
        gy = ex.differentiate(g, "y")
        return ex.add(
            ex.differentiate(gx, "x"),
            ex.mul(self.a12, ex.differentiate(gx, "y")),
            ex.mul(self.a22, ex.differentiate(gy, "y")),
            ex.mul(self.b1, gx),
            ex.mul(self.b2, gy),
        )

    def rhs(self, concrete=False):
        """sum_l alpha_l F_l(u), with F symbolic or concrete."""
        parts = []
        for alpha, f in zip(self.alphas, self.fs):
            if concrete:
                if f.arbitrary:
                    raise ValueError(f"{f.name} has no concrete form")
                parts.append(ex.mul(alpha, f.body))
            else:
                parts.append(ex.mul(alpha, f.symbol()))
        return ex.add(*parts)

    def concrete_rules(self):
        return {f.name: f.rule() for f in self.fs if not f.arbitrary}

    def has_arbitrary_f(self):
        return any(f.arbitrary for f in self.fs)

    def guard_ok(self, xval, yval):
        """True when (x, y) avoids the declared excluded loci."""
        for g in self.domain_guards:
            v = ex.substitute(g, {"x": ex.const(xval), "y": ex.const(yval)})
            if isinstance(v, ex.Const):
                if abs(v.value) < Fraction(1, 100):
                    return False
            else:
                if abs(ex.eval_numeric(v, {"x": xval, "y": yval}, precision_bits=64)) < 1e-2:
                    return False
        return True


_COEFF_KEYS = ("a11", "a12", "a22", "b1", "b2")


def _rational_ratio(e1, e2):
    """Fraction c with e1 == c * e2, or None."""
    t1 = e1.terms if isinstance(e1, ex.Add) else (e1,)
    t2 = e2.terms if isinstance(e2, ex.Add) else (e2,)
    if len(t1) != len(t2):
        return None
    ratio = None
    for a, b in zip(t1, t2):
        ca, ma = ex.coeff_monomial(a)
        cb, mb = ex.coeff_monomial(b)
        if ma != mb:
            return None
        r = ca / cb
        if ratio is None:
            ratio = r
        elif ratio != r:
            return None
    return ratio


def parse_spec(text):
    """Parse a PDE specification file into a validated :class:`PdeSpec`."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise SpecError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise SpecError(f"line {lineno}: empty value for {key!r}")
        raw[key] = (lineno, value)

    params = ()
    if "params" in raw:
        _, value = raw.pop("params")
        params = tuple(p.strip() for p in value.split(",") if p.strip())
        for p in params:
            if not p.isidentifier() or p in ex.VARIABLE_NAMES or p in ex.BUILTIN_NAMES:
                raise SpecError(f"bad parameter name {p!r}")

    atoms = ()
    if "atoms" in raw:
        _, value = raw.pop("atoms")
        atoms = _parse_atoms(value)

    degree = None
    if "degree" in raw:
        lineno, value = raw.pop("degree")
        try:
            degree = int(value)
        except ValueError:
            raise SpecError(f"line {lineno}: degree must be an integer") from None
        if degree < 1:
            raise SpecError("degree must be at least 1")

    domain_guards = ()
    domain_text = ""
    if "domain" in raw:
        _, value = raw.pop("domain")
        domain_text = value
        guards = []
        for clause in value.split(" and "):
            clause = clause.strip()
            if not clause.endswith("!= 0"):
                raise SpecError(f"domain clause {clause!r} must look like '<expr> != 0'")
            guards.append(parse_expr(clause[: -len("!= 0")].strip(), params=params))
        domain_guards = tuple(guards)

    def grab_expr(key, default):
        if key not in raw:
            return default
        lineno, value = raw.pop(key)
        try:
            return parse_expr(value, params=params, open_functions=True)
        except ExprSyntaxError as err:
            raise SpecError(f"line {lineno}: {key}: {err}") from None

    a11 = grab_expr("a11", ex.ONE)
    a12 = grab_expr("a12", ex.ZERO)
    a22 = grab_expr("a22", ex.ZERO)
    b1 = grab_expr("b1", ex.ZERO)
    b2 = grab_expr("b2", ex.ZERO)

    # alpha/F pairs
    indices = []
    for key in list(raw):
        if key.startswith("alpha") and key[5:].isdigit():
            indices.append(int(key[5:]))
    indices.sort()
    if not indices:
        raise MissingFieldError("no alpha/F pair given")
    if indices != list(range(1, len(indices) + 1)):
        raise MissingFieldError(f"alpha indices must be 1..L, got {indices}")
    L = len(indices)
    if L > PdeSpec.MAX_TERMS:
        raise SpecError(f"at most {PdeSpec.MAX_TERMS} source terms supported, got {L}")

    alphas = []
    fs = []
    for l in range(1, L + 1):
        lineno, value = raw.pop(f"alpha{l}")
        try:
            alpha = parse_expr(value, params=params, open_functions=True)
        except ExprSyntaxError as err:
            raise SpecError(f"line {lineno}: alpha{l}: {err}") from None
        bad = alpha.var_names() - {"x", "y"}
        if bad:
            raise SpecError(f"alpha{l} may only involve x and y, found {sorted(bad)}")
        alphas.append(alpha)
        fkey = f"F{l}"
        if fkey not in raw:
            raise MissingFieldError(f"missing {fkey} for alpha{l}")
        lineno, value = raw.pop(fkey)
        fs.append(_parse_fspec(fkey, value, params, lineno))
    for key in raw:
        if key.startswith("F") and key[1:].isdigit():
            raise MissingFieldError(f"{key} has no matching alpha{key[1:]}")
        raise SpecError(f"unknown key {key!r}")

    # rescale so a11 == 1
    ts = ex.is_zero(a11)
    if ts.is_zero:
        raise ZeroA11Error("the u_xx coefficient normalizes to zero")
    if a11 != ex.ONE:
        inv = ex.pow_(a11, ex.MINUS_ONE)
        a12 = ex.mul(a12, inv)
        a22 = ex.mul(a22, inv)
        b1 = ex.mul(b1, inv)
        b2 = ex.mul(b2, inv)
        alphas = [ex.mul(a, inv) for a in alphas]

    for i in range(L):
        if ex.is_zero(alphas[i]).is_zero:
            raise SpecError(f"alpha{i + 1} is identically zero")
        for j in range(i + 1, L):
            if _rational_ratio(alphas[i], alphas[j]) is not None:
                raise AlphaDependenceError(
                    f"alpha{i + 1} and alpha{j + 1} are proportional")

    return PdeSpec(
        a12=a12, a22=a22, b1=b1, b2=b2,
        alphas=tuple(alphas), fs=tuple(fs), params=params, atoms=atoms,
        degree=degree, domain_guards=domain_guards, domain_text=domain_text,
    )


def _parse_fspec(key, value, params, lineno):
    if value == "arbitrary":
        return FunctionSpec(name=key)
    if value.isidentifier() and value not in ("x", "y", "u") \
            and value not in params and value not in ex.BUILTIN_NAMES:
        return FunctionSpec(name=value)
    try:
        body = parse_expr(value, params=params, open_functions=True)
    except ExprSyntaxError as err:
        raise SpecError(f"line {lineno}: {key}: {err}") from None
    bad = body.var_names() - {"u"}
    if bad:
        raise SpecError(f"{key} may only involve u, found {sorted(bad)}")
    second = ex.differentiate(ex.differentiate(body, "u"), "u")
    linear = ex.is_zero(second).is_zero
    if linear:
        warnings.warn(
            f"{key} is linear in u; classification is restricted to the "
            "linear-case report", LinearFWarning, stacklevel=3)
    return FunctionSpec(name=key, body=body, linear=linear,
                        family=_classify_family(body))


def _parse_atoms(value):
    atoms = []
    rest = value.strip()
    while rest:
        if not rest.startswith("exp("):
            raise SpecError(f"bad atoms syntax near {rest!r}; expected exp(s,t)")
        close = rest.index(")")
        inner = rest[4:close]
        parts = [p.strip() for p in inner.split(",")]
        if len(parts) != 2:
            raise SpecError(f"atom {rest[:close + 1]!r} needs two components")
        try:
            s, t = Fraction(parts[0]), Fraction(parts[1])
        except ValueError:
            raise SpecError(f"bad rational in atom {rest[:close + 1]!r}") from None
        atoms.append((s, t))
        rest = rest[close + 1:].lstrip()
        if rest.startswith(","):
            rest = rest[1:].lstrip()
    return tuple(atoms)


def parse_generator_file(text, spec):
    """Parse a generator file (keys xi, eta, A, B, or phi) in the context
    of ``spec``; returns a mapping of component name to expression."""
    out = {}
    functions = set(spec.f_names())
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in ("xi", "eta", "A", "B", "phi"):
            raise SpecError(f"line {lineno}: unknown generator key {key!r}")
        out[key] = parse_expr(value, params=spec.params, functions=functions,
                              open_functions=True)
    if "phi" in out and ("A" in out or "B" in out):
        raise SpecError("give either phi or A/B, not both")
    if not out:
        raise SpecError("empty generator file")
    return out
