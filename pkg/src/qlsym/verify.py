"""Independent symmetry verification and Lie brackets.

``symbolic_residual`` decides, exactly, whether the prolonged action of a
candidate field vanishes on the solution manifold once the concrete
source functions are substituted.  ``numeric_check`` is the fully
independent oracle: it samples random rational base points and jets,
solves the equation constraint for u_xx numerically, and evaluates the
unsubstituted prolonged action at high precision.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from . import expr as ex
from . import prolong as pr
from .expr import Expr, TriState

DEFAULT_TOL = Fraction(1, 10**25)
DEFAULT_PRECISION_BITS = 128


class SymbolicIndeterminateError(RuntimeError):
    """Arbitrary-function nodes survived; the residual cannot be decided
    symbolically.  Fall back to numeric_check with concrete functions."""


@dataclass
class ResidualReport:
    symbolic: TriState | None
    numeric_max: object | None  # mpmath float
    samples_used: int
    constraints_assumed: tuple
    tol: Fraction = DEFAULT_TOL

    @property
    def numeric_passed(self):
        return self.numeric_max is not None and self.numeric_max < mpmath.mpf(
            self.tol.numerator) / self.tol.denominator

    @property
    def passed(self):
        ok = True
        if self.symbolic is not None:
            ok = ok and self.symbolic.is_zero
        if self.numeric_max is not None:
            ok = ok and self.numeric_passed
        return ok


def _apply_constraints(e, constraints):
    binds = {}
    neqs = []
    for c in constraints or ():
        if isinstance(c, tuple) and len(c) == 2 and isinstance(c[0], str):
            binds[c[0]] = ex._coerce(c[1])
        else:
            neqs.append(c)
    return (ex.substitute(e, binds) if binds else e), tuple(neqs)


def _refine(ts, neqs):
    if ts.kind != TriState.CONDITIONAL or not neqs:
        return ts
    keys = {ex.primitive_part(n) for n in neqs}
    if any(ex.primitive_part(c) in keys for c in ts.conditions):
        return TriState.nonzero()
    return ts


def symbolic_residual(spec, g, constraints=()):
    """TriState of X^(2)(Delta) restricted to Delta = 0 with the concrete
    source functions substituted.

    ``constraints`` may contain ('name', value) parameter assignments and
    expressions assumed nonzero; assignments are substituted, nonzero
    assumptions refine conditional verdicts."""
    if spec.has_arbitrary_f():
        raise SymbolicIndeterminateError(
            "spec has arbitrary source functions; use numeric_check with "
            "concrete functions instead")
    residual = pr.apply_symmetry_condition(spec, g, concrete=True)
    residual, neqs = _apply_constraints(residual, constraints)
    return _refine(ex.is_zero(residual), neqs)


def _sample_fraction(rng, lo_thousandths, hi_thousandths):
    return Fraction(rng.randint(lo_thousandths, hi_thousandths), 1000)


def numeric_check(spec, g, n_samples=100, tol=DEFAULT_TOL, seed=0,
                  precision_bits=DEFAULT_PRECISION_BITS, constraints=()):
    """Evaluate the prolonged action at random on-shell jets.

    Points (x, y) have |x|, |y| in [1/10, 10] and avoid the spec's guarded
    loci; jets are rationals in [-2, 2]; u_xx is solved from the equation
    itself.  Deterministic for a fixed seed (per-sample derived seeds);
    DomainError points are resampled up to 10 times each.
    """
    residual_expr = pr.symmetry_action(spec, g, concrete=True)
    rhs_expr = spec.rhs(concrete=True)
    residual_expr, _ = _apply_constraints(residual_expr, constraints)
    rhs_expr, _ = _apply_constraints(rhs_expr, constraints)
    a12, a22, b1, b2 = spec.a12, spec.a22, spec.b1, spec.b2
    binds = {name: ex._coerce(v) for name, v in
             (c for c in constraints or () if isinstance(c, tuple))}
    if binds:
        a12, a22, b1, b2 = (ex.substitute(e, binds) for e in (a12, a22, b1, b2))

    max_resid = mpmath.mpf(0)
    used = 0
    for i in range(n_samples):
        value = None
        for attempt in range(10):
            rng = random.Random((seed * 1_000_003 + i) * 11 + attempt)
            xv = _sample_fraction(rng, 100, 10_000) * rng.choice((1, -1))
            yv = _sample_fraction(rng, 100, 10_000) * rng.choice((1, -1))
            if not spec.guard_ok(xv, yv):
                continue
            point = {
                "x": xv,
                "y": yv,
                "u": _sample_fraction(rng, -2000, 2000),
                "u_x": _sample_fraction(rng, -2000, 2000),
                "u_y": _sample_fraction(rng, -2000, 2000),
                "u_xy": _sample_fraction(rng, -2000, 2000),
                "u_yy": _sample_fraction(rng, -2000, 2000),
            }
            try:
                with mpmath.workprec(precision_bits):
                    rhs = ex.eval_numeric(rhs_expr, point,
                                          precision_bits=precision_bits)
                    uxx = -(
                        ex.eval_numeric(a12, point, precision_bits=precision_bits)
                        * point_val(point, "u_xy", precision_bits)
                        + ex.eval_numeric(a22, point, precision_bits=precision_bits)
                        * point_val(point, "u_yy", precision_bits)
                        + ex.eval_numeric(b1, point, precision_bits=precision_bits)
                        * point_val(point, "u_x", precision_bits)
                        + ex.eval_numeric(b2, point, precision_bits=precision_bits)
                        * point_val(point, "u_y", precision_bits)
                        - rhs
                    )
                    point["u_xx"] = uxx
                    value = abs(ex.eval_numeric(residual_expr, point,
                                                precision_bits=precision_bits))
                break
            except ex.DomainError:
                continue
        if value is None:
            raise ex.DomainError(
                f"sample {i}: no admissible point after 10 attempts")
        used += 1
        if value > max_resid:
            max_resid = value
    return ResidualReport(
        symbolic=None,
        numeric_max=max_resid,
        samples_used=used,
        constraints_assumed=tuple(constraints or ()),
        tol=tol,
    )


def point_val(point, name, precision_bits):
    v = point[name]
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def check_generator(spec, g, constraints=(), n_samples=100, tol=DEFAULT_TOL,
                    seed=0, precision_bits=DEFAULT_PRECISION_BITS):
    """Symbolic verdict plus numeric confirmation in one report."""
    try:
        sym = symbolic_residual(spec, g, constraints)
    except SymbolicIndeterminateError:
        sym = None
    rep = numeric_check(spec, g, n_samples=n_samples, tol=tol, seed=seed,
                        precision_bits=precision_bits, constraints=constraints)
    return ResidualReport(
        symbolic=sym,
        numeric_max=rep.numeric_max,
        samples_used=rep.samples_used,
        constraints_assumed=tuple(constraints or ()),
        tol=tol,
    )


def bracket(g1, g2):
    """Lie bracket [g1, g2] = g1(g2) - g2(g1), componentwise directional
    derivatives; reduced inputs give a reduced output."""

    def act(g, f):
        return ex.add(
            ex.mul(g.xi, ex.differentiate(f, "x")),
            ex.mul(g.eta, ex.differentiate(f, "y")),
            ex.mul(g.phi, ex.differentiate(f, "u")),
        )

    xi3 = ex.add(act(g1, g2.xi), ex.mul(ex.MINUS_ONE, act(g2, g1.xi)))
    eta3 = ex.add(act(g1, g2.eta), ex.mul(ex.MINUS_ONE, act(g2, g1.eta)))
    phi3 = ex.add(act(g1, g2.phi), ex.mul(ex.MINUS_ONE, act(g2, g1.phi)))
    if g1.is_reduced and g2.is_reduced:
        A3 = ex.substitute(phi3, {"u": ex.ZERO})
        B3 = ex.differentiate(phi3, "u")
        if not B3.has_var("u"):
            return pr.Generator.reduced(xi3, eta3, A3, B3)
    return pr.Generator.general(xi3, eta3, phi3)
