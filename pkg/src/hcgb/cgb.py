"""Euler-characteristic integrand for the horizontal heat semigroup, two ways.

The closed-form route multiplies three exactly computed pieces: the
vertical volume constant from `carnot.j_constant`, the supertrace of the
half-dimension power of the horizontal curvature quartic, and the
conditional expectation of the determinant built from the vertical
covariant torsion paired with Levy areas (evaluated with the exact
bridge moments from `chen`, no sampling).  The Monte Carlo route draws
Brownian bridges, assembles the curvature-plus-area operator per sample,
raises it to the half homogeneous dimension by repeated matrix products,
and averages the graded traces.  The two share nothing past the model
data, so each one vouches for the other.

Index conventions follow `foliation`: horizontal generators 1..n,
vertical generators n+1..n+m in the combined exterior algebra.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import carnot, chen, fermion
from .foliation import check_symmetry, hat_curvature, torsion_rank
from .rng import chunk_plan, run_chunks, substream


class CgbArgumentError(ValueError):
    """Bad sample count, dimension, or missing volume."""


class CgbStateError(RuntimeError):
    """Model violates a precondition (symmetry gate, divergent constant)."""


MIN_SAMPLES = 1000


def _gate(fp):
    verdict = check_symmetry(fp)
    if not verdict["passes"]:
        raise CgbStateError(
            f"symmetry condition fails with residual {verdict['residual']:.3e}")


def curvature_quartic(fp, d=None):
    """The quartic -(1/2) sum hat_hhhh[k,l,i,j] a*_i a*_j a_l a_k as a FermionOp.

    Lives on d generators (default n); with d = n+m the horizontal indices
    keep slots 1..n and the vertical generators are untouched.
    """
    n = fp.n
    if d is None:
        d = n
    if d < n:
        raise CgbArgumentError(f"need at least {n} generators, got {d}")
    hh = hat_curvature(fp).hhhh
    terms = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for k in range(n):
                for l in range(n):
                    c = -0.5 * hh[k, l, i, j]
                    if c == 0.0 or k == l:
                        continue
                    word = ((True, i + 1), (True, j + 1), (False, l + 1), (False, k + 1))
                    for key, sgn in fermion.normal_order(word).items():
                        terms[key] = terms.get(key, 0.0) + c * sgn
    return fermion.FermionOp(d, terms={k: v for k, v in terms.items() if v != 0.0})


def _quartic_power_supertrace(fp):
    """Graded trace over the n horizontal generators of the quartic to the n/2."""
    op = curvature_quartic(fp)
    power = fermion.FermionOp.identity(fp.n)
    for _ in range(fp.n // 2):
        power = fermion.compose(power, op)
    return fermion.supertrace(power)


def _j_const_or_none(fp):
    """j_constant when the torsion spans the vertical space, else None."""
    if torsion_rank(fp) < fp.m:
        return None
    return carnot.j_constant(fp)


def euler_form_coefficient(fp, j_const=None):
    """Coefficient of the horizontal Euler form on the horizontal volume form.

    j_constant times Str of the quartic to the n/2, over (n/2)!.  Needs n
    even and torsion spanning the vertical space (finite volume constant).
    """
    _gate(fp)
    if fp.n % 2:
        raise CgbArgumentError(f"horizontal dimension must be even, got n={fp.n}")
    if j_const is None:
        j_const = carnot.j_constant(fp)
    return j_const * _quartic_power_supertrace(fp) / math.factorial(fp.n // 2)


def det_factor_m_part(fp):
    """Conditional expectation of det(sum_{i<j} Tcov_v[i,j] S_ij) on the bridge.

    The determinant of the antisymmetric m x m matrix collecting the
    vertical covariant torsion against the Levy areas, averaged exactly:
    the permutation expansion meets the closed-form joint area moments
    (cumulant expansion of the bridge MGF, the z/sinh z trace series).
    Zero for odd m since the matrix is antisymmetric; one for m = 0.
    """
    n, m = fp.n, fp.m
    if m == 0:
        return 1.0
    if m % 2:
        return 0.0
    if m > 6:
        raise CgbArgumentError(f"area moments beyond order 6 not tabulated, got m={m}")
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    coeff = np.stack([fp.T_cov_v[i - 1, j - 1] for i, j in pairs])
    live = [a for a in range(len(pairs)) if np.any(coeff[a])]
    total = 0.0
    for tau in itertools.permutations(range(m)):
        sgn = 1
        for a in range(m):
            for b in range(a + 1, m):
                if tau[a] > tau[b]:
                    sgn = -sgn
        if any(tau[r] == r for r in range(m)):
            continue  # diagonal entries of an antisymmetric matrix
        for assign in itertools.product(live, repeat=m):
            c = 1.0
            for r in range(m):
                c *= coeff[assign[r], r, tau[r]]
                if c == 0.0:
                    break
            if c != 0.0:
                mom = chen.area_moment(tuple(sorted(pairs[a] for a in assign)), n)
                if mom != 0.0:
                    total += sgn * c * mom
    return total


def closed_form_integrand(fp):
    """Closed-form report for the supertrace limit density and its chi.

    Returns a dict with the volume constant, the Euler-form coefficient,
    the vertical determinant factor, their product (the density with
    respect to the volume form), and chi when the model carries a volume.
    Odd n or odd m short-circuits to zeros with the reason recorded; a
    torsion that does not span the vertical space leaves the volume
    constant as None (the determinant factor vanishes identically then,
    so the integrand is still an exact zero).
    """
    _gate(fp)
    n, m = fp.n, fp.m
    report = {
        "n": n,
        "m": m,
        "epsilon": fp.epsilon,
        "j_const": _j_const_or_none(fp),
        "euler_form_coeff": 0.0,
        "det_factor_m_part": 0.0,
        "integrand": 0.0,
        "parity_shortcut": False,
        "reason": None,
    }
    if n % 2 or m % 2:
        report["parity_shortcut"] = True
        report["reason"] = ("horizontal dimension is odd" if n % 2
                            else "vertical dimension is odd")
    else:
        det_f = det_factor_m_part(fp)
        report["det_factor_m_part"] = det_f
        if report["j_const"] is None:
            # divergent volume constant; only reachable with det_f == 0
            report["euler_form_coeff"] = None
            report["reason"] = "torsion does not span the vertical space"
            if det_f != 0.0:
                raise CgbStateError(
                    "volume constant diverges while the determinant factor is nonzero")
        else:
            report["euler_form_coeff"] = euler_form_coefficient(
                fp, j_const=report["j_const"])
            report["integrand"] = report["euler_form_coeff"] * det_f
    if fp.volume is None:
        report["chi_raw"] = None
        report["chi_rounded"] = None
    else:
        report["chi_raw"] = report["integrand"] * fp.volume
        report["chi_rounded"] = int(round(report["chi_raw"]))
    return report


def _mc_chunk(args):
    hhhh, tcv, n, m, n_power, n_grid, seed, idx, count = args
    d = n + m
    # rebuild the fixed operators locally; cheaper than shipping matrices
    terms = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for k in range(n):
                for l in range(n):
                    c = -0.5 * hhhh[k, l, i, j]
                    if c == 0.0 or k == l:
                        continue
                    word = ((True, i + 1), (True, j + 1), (False, l + 1), (False, k + 1))
                    for key, sgn in fermion.normal_order(word).items():
                        terms[key] = terms.get(key, 0.0) + c * sgn
    h_mat = fermion.FermionOp(d, terms=terms).matrix
    g_mats = np.stack([
        np.stack([fermion.FermionOp.monomial(d, (n + r + 1,), (n + s + 1,)).matrix
                  for s in range(m)])
        for r in range(m)
    ]) if m else np.zeros((0, 0, 2 ** d, 2 ** d))
    signs = fermion.grading_signs(d)
    paths = chen.brownian_paths(substream(seed, idx), count, n, n_grid, pinned=True)
    pairs, areas = chen.all_pair_areas(paths)
    coeff = np.stack([tcv[i - 1, j - 1] for i, j in pairs]) if m else None
    out = np.empty(count)
    step = max(64, 1 << max(0, 23 - 2 * d))
    for lo in range(0, count, step):
        hi = min(lo + step, count)
        if m:
            q_batch = np.einsum("ba,ars->brs", areas[lo:hi], coeff)
            a_batch = h_mat[None] + np.einsum("brs,rsPQ->bPQ", q_batch, g_mats)
        else:
            a_batch = np.broadcast_to(h_mat, (hi - lo,) + h_mat.shape).copy()
        power = a_batch.copy()
        for _ in range(n_power - 1):
            power = power @ a_batch
        out[lo:hi] = np.einsum("bPP,P->b", power, signs)
    return out


def mc_supertrace(fp, samples, seed=0, n_grid=1024, workers=1, j_const=None):
    """Monte Carlo estimate of the supertrace limit density.

    Per bridge sample the operator is the curvature quartic plus the
    vertical quadratic weighted by the sampled Levy areas; it is raised
    to the power n/2 + m by repeated matrix products and graded-traced.
    The mean times j_constant/(n/2+m)! estimates the same number as
    closed_form_integrand.  Deterministic for fixed seed and any worker
    count.  Pass j_const to reuse an already computed volume constant.
    """
    _gate(fp)
    samples = int(samples)
    if samples < MIN_SAMPLES:
        raise CgbArgumentError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    n, m = fp.n, fp.m
    report = {
        "samples": samples,
        "estimate": 0.0,
        "stderr": 0.0,
        "seed": seed,
        "n_grid": n_grid,
        "j_const": j_const,
        "reason": None,
    }
    if n % 2:
        # no integer power to form; the limit vanishes
        report["reason"] = "horizontal dimension is odd"
        return report
    if torsion_rank(fp) < m:
        # the volume constant diverges, but every sampled supertrace is an
        # exact zero (top vertical degree is unreachable), so report that
        report["j_const"] = None
        report["reason"] = "torsion does not span the vertical space"
        return report
    if j_const is None:
        report["j_const"] = j_const = carnot.j_constant(fp)
    n_power = n // 2 + m
    hh = hat_curvature(fp).hhhh
    jobs = [
        (hh, fp.T_cov_v, n, m, n_power, n_grid, seed, idx, count)
        for idx, count in chunk_plan(samples)
    ]
    strs = np.concatenate(run_chunks(_mc_chunk, jobs, workers))
    scale = j_const / math.factorial(n_power)
    report["estimate"] = scale * float(strs.mean())
    if samples > 1:
        report["stderr"] = scale * float(strs.std(ddof=1)) / math.sqrt(samples)
    return report


def euler_characteristic(fp):
    """Integrand times volume, raw and rounded, with the parity shortcut.

    Odd n or m returns exact zero without touching the integrand (the
    supertrace limit vanishes identically).  Needs a model volume.
    """
    if fp.volume is None:
        raise CgbArgumentError("model carries no volume; chi is not defined")
    if fp.n % 2 or fp.m % 2:
        return {"chi_raw": 0.0, "chi_rounded": 0, "parity_shortcut": True}
    report = closed_form_integrand(fp)
    return {
        "chi_raw": report["chi_raw"],
        "chi_rounded": report["chi_rounded"],
        "parity_shortcut": False,
    }


def permutation_euler_form(fp):
    """Euler-form coefficient recomputed through the double permutation sum.

    sum over sigma, tau of sgn(sigma) sgn(tau) times the product over odd
    positions of hat_hhhh[sigma(i), sigma(i+1), tau(i), tau(i+1)], scaled
    by j_constant (-1)^{n/2} / (2^{n/2} (n/2)!).  The pairing convention
    (consecutive index pairs in both slots) is calibrated to reproduce
    euler_form_coefficient exactly; see the tests.  Cross-check only, so
    n is capped at 6.
    """
    _gate(fp)
    n = fp.n
    if n % 2:
        raise CgbArgumentError(f"horizontal dimension must be even, got n={n}")
    if n > 6:
        raise CgbArgumentError(f"permutation sum capped at n=6, got n={n}")
    hh = hat_curvature(fp).hhhh
    perms = np.array(list(itertools.permutations(range(n))))
    signs = np.empty(len(perms))
    for p_idx, p in enumerate(perms):
        sgn = 1
        for a in range(n):
            for b in range(a + 1, n):
                if p[a] > p[b]:
                    sgn = -sgn
        signs[p_idx] = sgn
    prod = np.ones((len(perms), len(perms)))
    for i in range(0, n, 2):
        prod *= hh[perms[:, None, i], perms[:, None, i + 1],
                   perms[None, :, i], perms[None, :, i + 1]]
    total = float(signs @ prod @ signs)
    if total == 0.0:
        return 0.0
    j_const = carnot.j_constant(fp)
    norm = (-1.0) ** (n // 2) / (2.0 ** (n // 2) * math.factorial(n // 2))
    return j_const * norm * total
