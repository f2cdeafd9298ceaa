"""Second prolongation, determining systems, and the fast-path p-vector.

The symmetry condition is applied to

    Delta = u_xx + a12 u_xy + a22 u_yy + b1 u_x + b2 u_y - sum_l alpha_l F_l(u)

by prolonging the candidate vector field to second order, restricting to
the solution manifold (u_xx solved from Delta = 0), and collecting
coefficients of the remaining jet monomials.  The unique equation that
involves the source functions is extracted as a D = 3L+2 vector of
coefficient functions p_i(x, y) multiplying the family
(F_l, F'_l, u F'_l, u, 1); a closed-form fast path computes the same
vector directly and the two routes are cross-checked symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .expr import Expr

_X, _Y, _U = ex.X, ex.Y, ex.U
_UX, _UY = ex.var("u_x"), ex.var("u_y")
_UXX, _UXY, _UYY = ex.var("u_xx"), ex.var("u_xy"), ex.var("u_yy")

_TOTAL = {
    "x": {"x": ex.ONE, "y": ex.ZERO, "u": _UX, "u_x": _UXX, "u_y": _UXY},
    "y": {"x": ex.ZERO, "y": ex.ONE, "u": _UY, "u_x": _UXY, "u_y": _UYY},
}


class ProlongationError(RuntimeError):
    pass


def total_derivative(e, direction):
    """Total derivative D_x or D_y on expressions carrying jets of order
    at most one (sufficient for the second-prolongation recursion)."""
    table = _TOTAL[direction]
    if e.has_var("u_xx", "u_xy", "u_yy"):
        raise ProlongationError(
            "total derivative would introduce third-order jets")
    parts = []
    for name, image in table.items():
        if image == ex.ZERO:
            continue
        d = ex.differentiate(e, name)
        if d != ex.ZERO:
            parts.append(ex.mul(image, d))
    return ex.add(*parts)


@dataclass(frozen=True)
class Generator:
    """Point-symmetry vector field xi d/dx + eta d/dy + phi d/du.

    Reduced generators carry phi = A(x, y) + u B(x, y) with the split
    stored; general generators carry only phi."""

    xi: Expr
    eta: Expr
    phi: Expr
    A: Expr | None = None
    B: Expr | None = None

    @classmethod
    def general(cls, xi, eta, phi):
        return cls(xi=xi, eta=eta, phi=phi)

    @classmethod
    def reduced(cls, xi, eta, A, B):
        A = ex._coerce(A)
        B = ex._coerce(B)
        return cls(xi=ex._coerce(xi), eta=ex._coerce(eta),
                   phi=ex.add(A, ex.mul(_U, B)), A=A, B=B)

    @property
    def is_reduced(self):
        return self.A is not None

    def reduction_defects(self):
        """Expressions that must vanish for the generator to be in reduced
        form: xi_u, eta_u, phi_uu."""
        return (
            ex.differentiate(self.xi, "u"),
            ex.differentiate(self.eta, "u"),
            ex.differentiate(ex.differentiate(self.phi, "u"), "u"),
        )

    def components(self):
        return (self.xi, self.eta, self.phi)

    def is_zero(self):
        return self.xi == ex.ZERO and self.eta == ex.ZERO and self.phi == ex.ZERO


def unknown_general_generator():
    """Generator with unknown-function components xi(x,y,u) etc."""
    args = (_X, _Y, _U)
    return Generator.general(
        ex.func("xi", args), ex.func("eta", args), ex.func("phi", args))


def unknown_reduced_generator():
    args = (_X, _Y)
    return Generator.reduced(
        ex.func("xi", args), ex.func("eta", args),
        ex.func("A", args), ex.func("B", args))


def second_prolongation(g):
    """Prolonged coefficients {x, y, xx, xy, yy} of the field, expressed in
    x, y, u and the jet coordinates."""
    xi, eta, phi = g.xi, g.eta, g.phi
    phix = ex.add(
        total_derivative(phi, "x"),
        ex.mul(ex.MINUS_ONE, _UX, total_derivative(xi, "x")),
        ex.mul(ex.MINUS_ONE, _UY, total_derivative(eta, "x")),
    )
    phiy = ex.add(
        total_derivative(phi, "y"),
        ex.mul(ex.MINUS_ONE, _UX, total_derivative(xi, "y")),
        ex.mul(ex.MINUS_ONE, _UY, total_derivative(eta, "y")),
    )
    phixx = ex.add(
        total_derivative(phix, "x"),
        ex.mul(ex.MINUS_ONE, _UXX, total_derivative(xi, "x")),
        ex.mul(ex.MINUS_ONE, _UXY, total_derivative(eta, "x")),
    )
    phixy = ex.add(
        total_derivative(phix, "y"),
        ex.mul(ex.MINUS_ONE, _UXX, total_derivative(xi, "y")),
        ex.mul(ex.MINUS_ONE, _UXY, total_derivative(eta, "y")),
    )
    phiyy = ex.add(
        total_derivative(phiy, "y"),
        ex.mul(ex.MINUS_ONE, _UXY, total_derivative(xi, "y")),
        ex.mul(ex.MINUS_ONE, _UYY, total_derivative(eta, "y")),
    )
    return {"x": phix, "y": phiy, "xx": phixx, "xy": phixy, "yy": phiyy}


def _delta(spec, concrete=False):
    return ex.add(
        _UXX,
        ex.mul(spec.a12, _UXY),
        ex.mul(spec.a22, _UYY),
        ex.mul(spec.b1, _UX),
        ex.mul(spec.b2, _UY),
        ex.mul(ex.MINUS_ONE, spec.rhs(concrete=concrete)),
    )


def apply_symmetry_condition(spec, g, concrete=False):
    """X^(2)(Delta) with u_xx eliminated through Delta = 0."""
    residual = symmetry_action(spec, g, concrete=concrete)
    uxx_value = on_shell_uxx(spec, concrete=concrete)
    return ex.substitute(residual, {"u_xx": uxx_value})


def symmetry_action(spec, g, concrete=False):
    """X^(2)(Delta) without the on-shell restriction."""
    delta = _delta(spec, concrete=concrete)
    pro = second_prolongation(g)
    parts = [
        ex.mul(g.xi, ex.differentiate(delta, "x")),
        ex.mul(g.eta, ex.differentiate(delta, "y")),
        ex.mul(g.phi, ex.differentiate(delta, "u")),
        ex.mul(pro["x"], ex.differentiate(delta, "u_x")),
        ex.mul(pro["y"], ex.differentiate(delta, "u_y")),
        ex.mul(pro["xx"], ex.differentiate(delta, "u_xx")),
        ex.mul(pro["xy"], ex.differentiate(delta, "u_xy")),
        ex.mul(pro["yy"], ex.differentiate(delta, "u_yy")),
    ]
    return ex.add(*parts)


def on_shell_uxx(spec, concrete=False):
    """u_xx solved from Delta = 0."""
    return ex.add(
        ex.mul(ex.MINUS_ONE, spec.a12, _UXY),
        ex.mul(ex.MINUS_ONE, spec.a22, _UYY),
        ex.mul(ex.MINUS_ONE, spec.b1, _UX),
        ex.mul(ex.MINUS_ONE, spec.b2, _UY),
        spec.rhs(concrete=concrete),
    )


def collect_jet_monomials(e):
    """Coefficients of the jet monomials of ``e``; keys are canonical
    monomials in u_x, u_y, u_xy, u_yy (ONE for the jet-free part)."""
    return ex.split_terms(
        e, lambda f: f.has_var("u_x", "u_y", "u_xx", "u_xy", "u_yy"))


@dataclass(frozen=True)
class PVector:
    """The D = 3L+2 coefficient functions of the F-dependent determining
    equation, ordered (p_l, p_{L+l}, p_{2L+l}, p_{3L+1}, p_{3L+2})."""

    entries: tuple
    L: int

    def __post_init__(self):
        if len(self.entries) != 3 * self.L + 2:
            raise ValueError("p-vector must have length 3L+2")

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self):
        return len(self.entries)


@dataclass
class DeterminingSystem:
    """Full determining system for a spec.

    ``structural`` are the universal conditions (xi_u, eta_u, phi_uu as
    expressions forced to vanish for any source functions), ``equations``
    the remaining F-free equations for the reduced components, and
    ``f_dependent`` the unique member that involves the source functions,
    with its coefficient vector ``p``."""

    structural: tuple
    equations: tuple
    f_dependent: Expr
    p: PVector
    structural_forced: bool
    raw_split: tuple  # ((monomial, fname_or_None, equation), ...) from the general stage


def _split_by_fnodes(coeff, fnames):
    """Split a coefficient expression by the source-function node it
    multiplies; key None collects the F-free part."""
    def selector(f):
        return isinstance(f, ex.Func) and f.name in fnames

    groups = ex.split_terms(coeff, selector)
    out = {}
    for key, part in groups.items():
        if key == ex.ONE:
            out[None] = part
        else:
            out[key] = part
    return out


_UNKNOWN_NAMES = ("xi", "eta", "phi", "A", "B")


def _single_unknown_form(eqn):
    """If ``eqn`` == coeff * (single derivative node of an unknown
    component), return that node, else None."""
    terms = eqn.terms if isinstance(eqn, ex.Add) else (eqn,)
    node = None
    for t in terms:
        _, mono = ex.coeff_monomial(t)
        found = [f for f in mono if isinstance(f, ex.Func) and f.name in _UNKNOWN_NAMES]
        if len(found) != 1:
            return None
        if node is None:
            node = found[0]
        elif node != found[0]:
            return None
        if any(isinstance(f, ex.Pow) and f.base == found[0] for f in mono):
            return None
    return node


def structural_conditions(spec):
    """Derive the conditions forced on a general unknown generator for
    arbitrary source functions, by iterating over equations of the shape
    coefficient * single-unknown-derivative and closing under higher
    derivatives.  Returns (forced_nodes, split_equations)."""
    g = unknown_general_generator()
    collected = collect_jet_monomials(apply_symmetry_condition(spec, g))
    fnames = set(spec.f_names())
    split = []
    for mono in sorted(collected, key=Expr.sort_key):
        for fkey, part in sorted(
            _split_by_fnodes(collected[mono], fnames).items(),
            key=lambda kv: (kv[0] is not None, repr(kv[0])),
        ):
            split.append((mono, fkey, part))

    forced = {}  # name -> set of minimal forced multi-indices

    def is_killed(node):
        mins = forced.get(node.name, ())
        return any(all(a >= b for a, b in zip(node.dorder, mi)) for mi in mins)

    def kill(e):
        return ex.map_funcs(
            e, lambda n: ex.ZERO if n.name in _UNKNOWN_NAMES and is_killed(n) else None)

    # the jet-free member is the relation-sensitive determining equation;
    # only the other monomials force conditions valid for every F
    work = [eq for (mono, fkey, eq) in split if mono != ex.ONE]
    changed = True
    while changed:
        changed = False
        nxt = []
        for eqn in work:
            eqn = kill(eqn)
            if eqn == ex.ZERO:
                continue
            node = _single_unknown_form(eqn)
            if node is not None:
                mins = forced.setdefault(node.name, set())
                if not is_killed(node):
                    mins.add(node.dorder)
                    changed = True
                continue
            nxt.append(eqn)
        work = nxt
    nodes = []
    for name, arity in (("xi", 3), ("eta", 3), ("phi", 3)):
        for mi in sorted(forced.get(name, ())):
            nodes.append(ex.func(name, (_X, _Y, _U), mi))
    return nodes, tuple(split)


_REQUIRED_STRUCTURAL = (
    ex.func("xi", (_X, _Y, _U), (0, 0, 1)),
    ex.func("eta", (_X, _Y, _U), (0, 0, 1)),
    ex.func("phi", (_X, _Y, _U), (0, 0, 2)),
)


def extract_f_equation(spec, g):
    """The unique F-dependent determining equation for a reduced
    generator: the jet-free member of the collected on-shell condition.
    Returns (f_equation, other_equations dict keyed by monomial)."""
    collected = collect_jet_monomials(apply_symmetry_condition(spec, g))
    f_eq = collected.pop(ex.ONE, ex.ZERO)
    return f_eq, collected


def extract_p_vector(spec, f_eq):
    """Read the p-vector off the F-dependent equation by matching the
    family pattern sum p_i f_i."""
    L = spec.L
    fnames = spec.f_names()
    entries = [ex.ZERO] * (3 * L + 2)
    groups = _split_by_fnodes(f_eq, set(fnames))
    for fkey, part in groups.items():
        if fkey is None:
            by_u = ex.split_terms(part, lambda f: f.has_var("u"))
            for umono, coeff in by_u.items():
                if umono == ex.ONE:
                    entries[3 * L + 1] = coeff
                elif umono == _U:
                    entries[3 * L] = coeff
                else:
                    raise ProlongationError(
                        f"unexpected u-dependence {umono!r} in the determining equation")
            continue
        if not isinstance(fkey, ex.Func):
            raise ProlongationError(f"unexpected source-function factor {fkey!r}")
        l = fnames.index(fkey.name)
        order = fkey.dorder[0]
        if fkey.args != (_U,) or order > 1:
            raise ProlongationError(f"unexpected node {fkey!r} in the determining equation")
        by_u = ex.split_terms(part, lambda f: f.has_var("u"))
        for umono, coeff in by_u.items():
            if order == 0 and umono == ex.ONE:
                entries[l] = coeff
            elif order == 1 and umono == ex.ONE:
                entries[L + l] = coeff
            elif order == 1 and umono == _U:
                entries[2 * L + l] = coeff
            else:
                raise ProlongationError(
                    f"unexpected term {umono!r} * {fkey!r} in the determining equation")
    return PVector(tuple(entries), L)


def determining_system(spec, g=None):
    """The paper-shaped determining system: structural conditions from the
    general ansatz, the reduced F-free equations, and the unique
    F-dependent member with its p-vector."""
    nodes, split = structural_conditions(spec)
    have = {(n.name, n.dorder) for n in nodes}
    ok = all((r.name, r.dorder) in have for r in _REQUIRED_STRUCTURAL)
    if g is None:
        g = unknown_reduced_generator()
    f_eq, others = extract_f_equation(spec, g)
    fnames = set(spec.f_names())
    equations = []
    for mono in sorted(others, key=Expr.sort_key):
        eqn = others[mono]
        if eqn.func_names() & fnames:
            raise ProlongationError(
                "source functions leaked outside the unique determining equation")
        equations.append(eqn)
    p = extract_p_vector(spec, f_eq)
    return DeterminingSystem(
        structural=tuple(nodes),
        equations=tuple(equations),
        f_dependent=f_eq,
        p=p,
        structural_forced=ok,
        raw_split=split,
    )


def p_coefficients(spec, g):
    """Fast-path closed form of the p-vector for a reduced generator.

    The F_l coefficient is (B - 2 xi_x - a12 xi_y) alpha_l - xi alpha_l,x
    - eta alpha_l,y; first-principles prolongation fixes the xi_x term at
    -2 xi_x (the trace form -(xi_x + eta_y) printed elsewhere agrees only
    on the solution set of the F-free equations, where xi_x = eta_y)."""
    if not g.is_reduced:
        raise ValueError("p-coefficients are defined for reduced generators")
    xi, eta, A, B = g.xi, g.eta, g.A, g.B
    xi_x = ex.differentiate(xi, "x")
    xi_y = ex.differentiate(xi, "y")
    L = spec.L
    entries = [ex.ZERO] * (3 * L + 2)
    lead = ex.add(B, ex.mul(ex.const(-2), xi_x),
                  ex.mul(ex.MINUS_ONE, spec.a12, xi_y))
    for l, alpha in enumerate(spec.alphas):
        ax = ex.differentiate(alpha, "x")
        ay = ex.differentiate(alpha, "y")
        entries[l] = ex.add(
            ex.mul(lead, alpha),
            ex.mul(ex.MINUS_ONE, xi, ax),
            ex.mul(ex.MINUS_ONE, eta, ay),
        )
        entries[L + l] = ex.mul(ex.MINUS_ONE, alpha, A)
        entries[2 * L + l] = ex.mul(ex.MINUS_ONE, alpha, B)
    entries[3 * L] = spec.e_operator(B)
    entries[3 * L + 1] = spec.e_operator(A)
    return PVector(tuple(entries), L)


def family_expressions(spec):
    """The family (F_l, F'_l, u F'_l, u, 1) with symbolic F nodes."""
    L = spec.L
    out = []
    for name in spec.f_names():
        out.append(ex.func(name, (_U,), (0,)))
    for name in spec.f_names():
        out.append(ex.func(name, (_U,), (1,)))
    for name in spec.f_names():
        out.append(ex.mul(_U, ex.func(name, (_U,), (1,))))
    out.append(_U)
    out.append(ex.ONE)
    return tuple(out)


def cross_check(spec, g=None):
    """True when the first-principles F-dependent equation equals
    sum_i p_i f_i with p from the fast path, as a symbolic identity."""
    if g is None:
        g = unknown_reduced_generator()
    f_eq, _ = extract_f_equation(spec, g)
    p = p_coefficients(spec, g)
    fam = family_expressions(spec)
    recon = ex.add(*[ex.mul(pi, fi) for pi, fi in zip(p, fam)])
    diff = ex.add(f_eq, ex.mul(ex.MINUS_ONE, recon))
    return ex.is_zero(diff).is_zero
