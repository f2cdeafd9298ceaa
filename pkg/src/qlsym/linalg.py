"""Exact linear algebra over rationals and over parameter polynomials.

Two layers: plain Fraction matrices (reduced row echelon form, null
space) and fraction-free elimination on matrices whose entries are
expression-valued polynomials in the declared parameters.  Pivot
decisions on parameter entries go through :func:`qlsym.expr.is_zero`;
when a pivot vanishes only under parameter conditions, the elimination
branches, carrying assumption sets forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as ex
from .expr import Expr, TriState


class BranchExplosionError(RuntimeError):
    """Parameter case splits exceeded the configured branch cap."""


# ---------------------------------------------------------------------------
# rational matrices
# ---------------------------------------------------------------------------


def rref(rows):
    """Reduced row echelon form of a list-of-lists of Fractions.
    Returns (rref_rows, pivot_columns); the input is not modified."""
    m = [list(map(Fraction, r)) for r in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots = []
    r = 0
    for c in range(ncols):
        pivot = None
        for i in range(r, len(m)):
            if m[i][c] != 0:
                pivot = i
                break
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        pv = m[r][c]
        m[r] = [v / pv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return [row for row in m if any(v != 0 for v in row)], pivots


def nullspace(rows, ncols):
    """Basis of the right null space, rows in reduced echelon form with
    leading entry 1 (deterministic)."""
    red, pivots = rref(rows)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * ncols
        vec[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            vec[pc] = -red[r][fc]
        basis.append(vec)
    red_basis, _ = rref(basis)
    return red_basis


def in_row_space(vec, rows):
    """True when ``vec`` lies in the rational span of ``rows``."""
    red, pivots = rref(rows)
    v = list(map(Fraction, vec))
    for r, pc in enumerate(pivots):
        if v[pc] != 0:
            f = v[pc]
            v = [a - f * b for a, b in zip(v, red[r])]
    return all(a == 0 for a in v)


# ---------------------------------------------------------------------------
# assumption contexts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constraints:
    """A branch's parameter assumptions.

    ``assignments`` are exact solved equalities (name -> rational value),
    ``nonzero`` are expressions assumed nonvanishing, ``residual`` are
    equations the solver could not put in solved form (the branch is then
    reported for manual analysis rather than solved further)."""

    assignments: tuple = ()  # ((name, Fraction), ...)
    nonzero: tuple = ()      # (Expr, ...)
    residual: tuple = ()     # (Expr, ...)

    def assign_map(self):
        return {name: ex.const(v) for name, v in self.assignments}

    def with_assignment(self, name, value):
        items = dict(self.assignments)
        if name in items and items[name] != value:
            return None  # contradiction
        items[name] = value
        newc = Constraints(tuple(sorted(items.items())), self.nonzero, self.residual)
        return None if newc.contradictory() else newc

    def with_nonzero(self, cond):
        cond = self.reduce(cond)
        if isinstance(cond, ex.Const):
            return None if cond.value == 0 else self
        key = ex.primitive_part(cond)
        if key in self.nonzero:
            return self
        return Constraints(self.assignments, self.nonzero + (key,), self.residual)

    def with_residual(self, eqn):
        return Constraints(self.assignments, self.nonzero,
                           self.residual + (ex.primitive_part(eqn),))

    def contradictory(self):
        binds = self.assign_map()
        for cond in self.nonzero:
            v = ex.substitute(cond, binds)
            if isinstance(v, ex.Const) and v.value == 0:
                return True
        return False

    def reduce(self, e):
        binds = self.assign_map()
        return ex.substitute(e, binds) if binds else e

    def is_zero(self, e):
        """TriState of ``e`` refined by this branch's assumptions."""
        ts = ex.is_zero(self.reduce(e))
        if ts.kind != TriState.CONDITIONAL:
            return ts
        conds = []
        for cond in ts.conditions:
            if ex.primitive_part(cond) in self.nonzero:
                return TriState.nonzero()
            conds.append(cond)
        return TriState.conditional(conds)

    def describe(self):
        bits = [f"{name} = {val}" for name, val in self.assignments]
        bits += [f"{cond!r} != 0" for cond in self.nonzero]
        bits += [f"{eqn!r} = 0" for eqn in self.residual]
        return bits


EMPTY_CONSTRAINTS = Constraints()


# ---------------------------------------------------------------------------
# branching elimination over parameter polynomials
# ---------------------------------------------------------------------------


@dataclass
class BranchResult:
    constraints: Constraints
    basis: list  # list of solution vectors, entries Expr
    solved: bool = True  # False when elimination stopped on a residual equation


def _entry_weight(e):
    if isinstance(e, ex.Const):
        return 0
    return len(e.terms) if isinstance(e, ex.Add) else 1


def expr_nullspace(matrix, ncols, constraints=EMPTY_CONSTRAINTS, max_branches=64):
    """Null-space bases of an Expr-entried matrix, one per parameter branch.

    Fraction-free Gaussian elimination; pivots that vanish only under
    parameter conditions split the computation.  The zero-side of a split
    substitutes the solved parameter value (rational roots of a univariate
    condition factor); factors with no rational root are assumed nonzero.
    Sibling branches that produce identical bases are merged back.
    """
    counter = [0]

    def run(rows, cons):
        counter[0] += 1
        if counter[0] > max_branches:
            raise BranchExplosionError(
                f"parameter case splits exceeded {max_branches} branches")
        rows = [[cons.reduce(v) for v in row] for row in rows]
        rows = [r for r in rows if any(v != ex.ZERO for v in r)]
        pivots = {}
        r = 0
        c = 0
        while r < len(rows) and c < ncols:
            # choose a pivot row: prefer decidedly nonzero, simple entries
            best = None
            best_rank = None
            for i in range(r, len(rows)):
                entry = rows[i][c]
                if entry == ex.ZERO:
                    continue
                ts = cons.is_zero(entry)
                if ts.is_zero:
                    rows[i][c] = ex.ZERO
                    continue
                rank = (0 if ts.is_nonzero else 1, _entry_weight(entry), i)
                if best_rank is None or rank < best_rank:
                    best_rank = rank
                    best = (i, ts)
            if best is None:
                c += 1
                continue
            i, ts = best
            if ts.kind == TriState.CONDITIONAL:
                # split on the first condition's factors
                cond = ts.conditions[0]
                nz_results = []
                nz = cons.with_nonzero(cond)
                if nz is not None:
                    nz_results = run([row[:] for row in rows], nz)
                zero_results = []
                collapsible = bool(nz_results)
                for factor in ex.factor_conditions(cond):
                    zc = _assume_zero(cons, factor)
                    if zc is None:
                        continue
                    if isinstance(zc, Constraints):
                        sub = run([row[:] for row in rows], zc)
                        zero_results.extend(sub)
                        if not _specializes(nz_results, sub):
                            collapsible = False
                    else:  # unresolvable: report the branch for manual analysis
                        zero_results.append(
                            BranchResult(cons.with_residual(factor), [], solved=False))
                        collapsible = False
                if collapsible:
                    # every zero side is just the generic solution specialized:
                    # drop the split and return the generic result under the
                    # parent's constraints
                    return [BranchResult(cons, res.basis, res.solved)
                            for res in nz_results]
                return nz_results + zero_results
            rows[r], rows[i] = rows[i], rows[r]
            piv = rows[r][c]
            for j in range(len(rows)):
                if j == r:
                    continue
                e2 = rows[j][c]
                if e2 == ex.ZERO:
                    continue
                rows[j] = [
                    ex.add(ex.mul(piv, a), ex.mul(ex.mul(ex.MINUS_ONE, e2), b))
                    for a, b in zip(rows[j], rows[r])
                ]
            pivots[c] = r
            r += 1
            c += 1
        # back-substitution-free null space: free columns parametrize
        free_cols = [j for j in range(ncols) if j not in pivots]
        basis = []
        for fc in free_cols:
            vec = [ex.ZERO] * ncols
            # denominators cleared: scale by the product of the pivots
            piv_prod = ex.ONE
            for pc in pivots:
                piv_prod = ex.mul(piv_prod, rows[pivots[pc]][pc])
            vec[fc] = piv_prod
            for pc, pr in pivots.items():
                coeff = rows[pr][fc]
                if coeff == ex.ZERO:
                    continue
                others = ex.ONE
                for pc2 in pivots:
                    if pc2 != pc:
                        others = ex.mul(others, rows[pivots[pc2]][pc2])
                vec[pc] = ex.mul(ex.MINUS_ONE, coeff, others)
            basis.append(normalize_vector(vec))
        return [BranchResult(cons, basis)]

    return run([list(row) for row in matrix], constraints)


def _assume_zero(cons, factor):
    """Constraints with ``factor == 0`` added, in solved form if possible.

    Returns None when contradictory, a Constraints on success, or the
    string 'residual' marker when the equation cannot be solved over the
    rationals (caller reports it instead of solving)."""
    factor = cons.reduce(factor)
    if isinstance(factor, ex.Const):
        return cons if factor.value == 0 else None
    pnames = sorted(factor.param_names())
    if len(pnames) == 1 and not factor.var_names() and not factor.has_funcs():
        p = pnames[0]
        # linear?  a*p + b = 0
        terms = factor.terms if isinstance(factor, ex.Add) else (factor,)
        a = b = Fraction(0)
        linear = True
        for t in terms:
            c, mono = ex.coeff_monomial(t)
            if not mono:
                b += c
            elif len(mono) == 1 and mono[0] == ex.param(p):
                a += c
            else:
                linear = False
                break
        if linear and a != 0:
            newc = cons.with_assignment(p, -b / a)
            if newc is None:
                return None
            for cond in newc.nonzero:
                red = newc.reduce(cond)
                if isinstance(red, ex.Const) and red.value == 0:
                    return None
            return newc
        roots = _poly_roots(factor, p)
        if roots is not None:
            if not roots:
                return None  # no rational zero: branch is vacuous over Q
            # handled by factor_conditions splitting linear factors; a
            # residual irreducible part lands here
    return "residual"


def _poly_roots(factor, p):
    coeffs = {}
    terms = factor.terms if isinstance(factor, ex.Add) else (factor,)
    for t in terms:
        c, mono = ex.coeff_monomial(t)
        if not mono:
            coeffs[0] = coeffs.get(0, Fraction(0)) + c
        elif len(mono) == 1:
            base, exp = ex._decompose_pow(mono[0])
            if base == ex.param(p) and isinstance(exp, ex.Const) \
                    and exp.value.denominator == 1 and exp.value > 0:
                coeffs[int(exp.value)] = coeffs.get(int(exp.value), Fraction(0)) + c
            else:
                return None
        else:
            return None
    if not coeffs:
        return None
    deg = max(coeffs)
    vec = [coeffs.get(k, Fraction(0)) for k in range(deg + 1)]
    return ex._rational_roots(vec)


def _specializes(generic_results, special_results):
    """True when each special branch is exactly a generic branch with that
    branch's parameter assignments substituted in (so the split that
    produced it was spurious and can be dropped)."""
    if len(generic_results) != 1 or len(special_results) != 1:
        return False
    gen, spe = generic_results[0], special_results[0]
    if not (gen.solved and spe.solved):
        return False
    if len(gen.basis) != len(spe.basis):
        return False
    binds = spe.constraints.assign_map()
    for gvec, svec in zip(gen.basis, spe.basis):
        reduced = normalize_vector([ex.substitute(v, binds) for v in gvec])
        if reduced != list(svec):
            return False
    return True


def normalize_vector(vec):
    """Scale a solution vector deterministically: clear parameter
    denominators, divide out rational content, make the first nonzero
    entry's leading coefficient positive (and 1 when the entry is purely
    rational)."""
    entries = list(vec)
    nonzero = [v for v in entries if v != ex.ZERO]
    if not nonzero:
        return entries
    # clear parameter-only denominators entry-wise
    cleared = [ex.clear_param_denominators(v) if v != ex.ZERO else v for v in entries]
    # rational content across all terms of all entries
    from math import gcd

    num = 0
    den = 1
    for v in cleared:
        if v == ex.ZERO:
            continue
        terms = v.terms if isinstance(v, ex.Add) else (v,)
        for t in terms:
            c, _ = ex.coeff_monomial(t)
            num = gcd(num, abs(c.numerator))
            den = den * c.denominator // gcd(den, c.denominator)
    content = Fraction(num, den) if num else Fraction(1)
    lead = next(v for v in cleared if v != ex.ZERO)
    lead_terms = lead.terms if isinstance(lead, ex.Add) else (lead,)
    sign = 1 if ex.coeff_monomial(lead_terms[0])[0] > 0 else -1
    scale = ex.const(Fraction(sign) / content)
    return [ex.mul(scale, v) for v in cleared]
