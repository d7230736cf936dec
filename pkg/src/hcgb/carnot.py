"""Tangent Carnot group of a foliation point and its density numerics.

Models passing the symmetry check look, infinitesimally, like a step-2
nilpotent group: horizontal directions in layer one, vertical in layer
two, bracket given by minus the torsion.  On that group the rescaled
Brownian motion has an explicit small-time density whose value at the
origin is governed by a single constant, computed here as a vertical
integral of det(sqrt(J_z^T J_z)/sinh sqrt(J_z^T J_z))^(1/2).  A kernel
density estimate over simulated horizontal paths and their pairwise
areas verifies the same constant stochastically.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from . import chen
from .foliation import j_map, check_symmetry, torsion_rank
from .rng import substream, chunk_plan, run_chunks

_EVAL_CHUNK = 1 << 17


class CarnotArgumentError(ValueError):
    """Bad sample count, time, or bandwidth request."""


class CarnotStateError(RuntimeError):
    """The model does not admit the requested construction."""


class CarnotNumericError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


class CarnotGroup:
    """Step-2 nilpotent group data: layer dims and structure constants.

    structure[i, j, r] is the r-th vertical component of the bracket of
    the i-th and j-th horizontal generators (minus the torsion).  Layer
    two is central, so the Jacobi identity is automatic, and dilations
    scale layer one linearly and layer two quadratically.
    """

    __slots__ = ("n", "m", "structure", "dilation")

    def __init__(self, n, m, structure):
        self.n = n
        self.m = m
        self.structure = structure
        self.dilation = (1,) * n + (2,) * m

    def bracket(self, v, w):
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        if v.shape != (self.n,) or w.shape != (self.n,):
            raise CarnotArgumentError("bracket arguments must be first-layer vectors")
        return np.einsum("ijr,i,j->r", self.structure, v, w)


def tangent_cone(fp):
    """Carnot group approximating the model at the point.

    Needs the symmetry condition (that is what pins the group down to
    step 2) and a torsion that spans the vertical layer, otherwise the
    horizontal distribution does not bracket-generate.
    """
    rep = check_symmetry(fp)
    if not rep["passes"]:
        raise CarnotStateError(
            f"model fails the symmetry condition (residual {rep['residual']:.3g}); "
            "no step-2 tangent group")
    if torsion_rank(fp) < fp.m:
        raise CarnotStateError(
            "torsion does not span the vertical layer; "
            "the horizontal distribution is not bracket generating")
    return CarnotGroup(fp.n, fp.m, -fp.T.copy())


def _sinh_ratio(x):
    """x / sinh x, elementwise, with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    big = x > 1e-8
    with np.errstate(over="ignore"):
        ratio = x[big] / np.sinh(x[big])
    out[big] = np.where(np.isfinite(ratio), ratio, 0.0)
    return out


def _det_root(fp, z_points):
    """Integrand det(sqrt(J_z^T J_z)/sinh sqrt(J_z^T J_z))^(1/2) on a batch of z."""
    vals = np.empty(len(z_points))
    for lo in range(0, len(z_points), _EVAL_CHUNK):
        zc = z_points[lo:lo + _EVAL_CHUNK]
        J = np.einsum("ijr,br->bji", fp.T, zc)
        lam = np.sqrt(np.clip(np.linalg.eigvalsh(-(J @ J)), 0.0, None))
        vals[lo:lo + _EVAL_CHUNK] = np.sqrt(np.prod(_sinh_ratio(lam), axis=1))
    return vals


def _quad_value(fp, radius, nodes):
    """Integral over the radius-ball (m <= 3) or radius-cube (larger m).

    For one vertical dimension this is plain Gauss-Legendre on the
    segment.  For two and three the grid is a product of Gauss-Legendre
    in the radius with spectrally accurate angular rules (uniform in the
    azimuth, Gauss-Legendre in the polar cosine), so the point count
    stays proportional to the radial resolution when the radius doubles.
    """
    m = fp.m
    if m == 1:
        x, w = leggauss(nodes)
        z = (radius * x)[:, None]
        weights = radius * w
    elif m == 2:
        r, wr = leggauss(nodes)
        r = 0.5 * radius * (r + 1.0)
        wr = 0.5 * radius * wr * r
        phi = 2.0 * math.pi * np.arange(nodes) / nodes
        wphi = np.full(nodes, 2.0 * math.pi / nodes)
        z = np.stack([
            np.outer(r, np.cos(phi)).ravel(),
            np.outer(r, np.sin(phi)).ravel(),
        ], axis=1)
        weights = np.outer(wr, wphi).ravel()
    elif m == 3:
        r, wr = leggauss(nodes)
        r = 0.5 * radius * (r + 1.0)
        wr = 0.5 * radius * wr * r ** 2
        mu, wmu = leggauss(max(8, nodes // 2))
        sin_theta = np.sqrt(1.0 - mu ** 2)
        phi = 2.0 * math.pi * np.arange(nodes) / nodes
        wphi = np.full(nodes, 2.0 * math.pi / nodes)
        z = np.stack([
            np.einsum("a,b,c->abc", r, sin_theta, np.cos(phi)).ravel(),
            np.einsum("a,b,c->abc", r, sin_theta, np.sin(phi)).ravel(),
            np.einsum("a,b,c->abc", r, mu, np.ones_like(phi)).ravel(),
        ], axis=1)
        weights = np.einsum("a,b,c->abc", wr, wmu, wphi).ravel()
    else:
        x, w = leggauss(nodes)
        x = x * radius
        w = w * radius
        axes = np.meshgrid(*([x] * m), indexing="ij")
        z = np.stack([a.ravel() for a in axes], axis=1)
        weights = np.ones(1)
        for _ in range(m):
            weights = np.outer(weights, w).ravel()
    return float(weights @ _det_root(fp, z))


def j_constant(fp, tol=1e-8, start_radius=8.0, max_radius=512.0,
               start_nodes=32, max_nodes=4096):
    """Vertical-space integral behind the small-time density constant.

    Adaptive product quadrature: the node count is doubled until the
    value settles and the truncation radius is doubled until the added
    shell is negligible, both at one percent of tol.  The integrand
    decays exponentially as soon as the torsion spans the vertical
    space; models where some direction acts trivially are rejected
    because the integral diverges.
    """
    if fp.m == 0:
        return (2.0 * math.pi) ** (-fp.n / 2.0)
    if torsion_rank(fp) < fp.m:
        raise CarnotStateError(
            "torsion does not span the vertical space; the density constant diverges")
    prefactor = 2.0 ** fp.m / (2.0 * math.pi) ** (fp.n / 2.0 + fp.m)
    slack = 0.01 * tol

    def refine(radius, nodes):
        prev = _quad_value(fp, radius, nodes)
        while nodes <= max_nodes:
            nodes *= 2
            cur = _quad_value(fp, radius, nodes)
            if abs(cur - prev) < slack:
                return cur, nodes
            prev = cur
        raise CarnotNumericError(
            f"node refinement stalled at radius {radius}: last change {abs(cur - prev):.3e}")

    radius = start_radius
    nodes = start_nodes
    prev, nodes = refine(radius, nodes)
    while radius <= max_radius:
        radius *= 2.0
        # reuse the node count that was enough one level down; refine()
        # still doubles from there if the larger domain needs more
        cur, nodes = refine(radius, max(start_nodes, nodes // 2))
        if abs(cur - prev) < slack:
            return prefactor * cur
        prev = cur
    raise CarnotNumericError(
        f"radius doubling stalled at {radius}: last shell {abs(cur - prev):.3e}")


def is_h_type(fp):
    """True when J_z^T J_z = |z|^2 Id for every vertical z (checked on a basis)."""
    if fp.m == 0:
        return False
    eye = np.eye(fp.n)
    jm = [j_map(fp, e) for e in np.eye(fp.m)]
    for r in range(fp.m):
        for s in range(r, fp.m):
            anti = jm[r].T @ jm[s] + jm[s].T @ jm[r]
            want = 2.0 * eye if r == s else np.zeros((fp.n, fp.n))
            if np.max(np.abs(anti - want)) > 1e-12:
                return False
    return True


def j_constant_radial(fp, tol=1e-10):
    """Radial reduction of j_constant, valid only for H-type torsion.

    There the integrand depends on |z| alone, so the m-dimensional
    integral collapses to the surface measure of the unit sphere times
    a one-dimensional integral, evaluated with adaptive quadrature.
    Serves as an independent cross-check of the cube quadrature.
    """
    if fp.m == 0:
        return (2.0 * math.pi) ** (-fp.n / 2.0)
    if torsion_rank(fp) < fp.m:
        raise CarnotStateError(
            "torsion does not span the vertical space; the density constant diverges")
    if not is_h_type(fp):
        raise CarnotStateError("radial reduction needs H-type torsion")
    power = fp.n / 2.0
    weight = fp.m - 1

    def integrand(r):
        if r == 0.0:
            return 0.0 if weight else 1.0
        if r > 700.0:
            # sinh overflows a float here and the ratio is already ~1e-300
            return 0.0
        return r ** weight * (r / math.sinh(r)) ** power

    value, err = quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=300)
    if err > tol:
        raise CarnotNumericError(f"radial quadrature error {err:.3e} above {tol}")
    surface = 2.0 * math.pi ** (fp.m / 2.0) / math.gamma(fp.m / 2.0)
    prefactor = 2.0 ** fp.m / (2.0 * math.pi) ** (fp.n / 2.0 + fp.m)
    return prefactor * surface * value


def _density_chunk(args):
    T, n, m, t, n_grid, seed, idx, count = args
    rng = substream(seed, idx)
    paths = chen.brownian_paths(rng, count, n, n_grid, t_max=t, pinned=False)
    horizontal = math.sqrt(2.0) * paths[:, -1, :]
    pairs, areas = chen.all_pair_areas(paths)
    weights = np.array([[T[i - 1, j - 1, r] for r in range(m)] for i, j in pairs])
    if weights.size:
        vertical = -(areas @ weights)
    else:
        vertical = np.zeros((count, m))
    return np.concatenate([horizontal, vertical], axis=1)


def density_mc(fp, t=1.0, samples=10 ** 6, seed=0, n_grid=256, bandwidth=None,
               workers=1, bootstrap=50):
    """Kernel density estimate at the origin for the rescaled endpoint variable.

    Samples (sqrt(2) B_t, minus the torsion-weighted pairwise areas) on a
    dyadic grid, then evaluates a Gaussian product kernel at zero with
    per-dimension Scott bandwidths (override with `bandwidth`, a scalar
    or a length n+m vector).  The standard error comes from a Poisson
    bootstrap over the kernel values.  Deterministic for a fixed seed,
    independent of the worker count.
    """
    tangent_cone(fp)
    samples = int(samples)
    if samples < 10 ** 4:
        raise CarnotArgumentError(f"need at least 1e4 samples for a usable KDE, got {samples}")
    if not (np.isfinite(t) and t > 0.0):
        raise CarnotArgumentError(f"time must be positive, got {t}")
    dim = fp.n + fp.m
    jobs = [(fp.T, fp.n, fp.m, float(t), int(n_grid), int(seed), idx, count)
            for idx, count in chunk_plan(samples)]
    V = np.vstack(run_chunks(_density_chunk, jobs, workers=workers))

    sigma = np.std(V, axis=0, ddof=1)
    if bandwidth is None:
        h = sigma * samples ** (-1.0 / (dim + 4))
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (dim,)).copy()
    if np.any(~np.isfinite(h)) or np.any(h <= 0.0):
        raise CarnotArgumentError(f"bad bandwidth vector {h}")

    scaled = V / h
    kernel = np.exp(-0.5 * np.einsum("bd,bd->b", scaled, scaled))
    kernel /= np.prod(h) * (2.0 * math.pi) ** (dim / 2.0)
    estimate = float(np.mean(kernel))

    boot_rng = substream(seed, 1 << 40)
    reps = np.empty(bootstrap)
    for b in range(bootstrap):
        w = boot_rng.poisson(1.0, samples)
        total = w.sum()
        reps[b] = (w @ kernel) / total if total else 0.0
    return {
        "estimate": estimate,
        "stderr": float(np.std(reps, ddof=1)),
        "samples": samples,
        "t": float(t),
        "seed": int(seed),
        "n_grid": int(n_grid),
        "bandwidth": [float(x) for x in h],
    }


def density_closed_form(fp, t=1.0):
    """Characteristic-function oracle for the density at 0, n=2 m=1 only.

    With a single vertical direction the endpoint variable splits at the
    origin: a planar Gaussian factor 1/(4 pi t) and the Fourier inversion
    of the conditional area transform, (1/2 pi) int lambda t tau / sinh d
    lambda = pi/(4 t tau).  The integral is done numerically on purpose,
    as an independent pin on the KDE and on the quadrature constant.
    """
    if (fp.n, fp.m) != (2, 1):
        raise CarnotArgumentError(
            f"closed form implemented for n=2, m=1 only, got n={fp.n}, m={fp.m}")
    if not (np.isfinite(t) and t > 0.0):
        raise CarnotArgumentError(f"time must be positive, got {t}")
    tau = abs(float(fp.T[0, 1, 0]))
    if tau == 0.0:
        raise CarnotStateError("zero torsion: the endpoint density diverges at 0")

    def integrand(u):
        if u == 0.0:
            return 1.0
        if u > 700.0:
            return 0.0
        return u / math.sinh(u)

    value, _ = quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=300)
    vertical = value / (math.pi * tau * t)  # (1/2pi) * 2 * integral, rescaled
    return 1.0 / (4.0 * math.pi * t) * vertical
