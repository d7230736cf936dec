"""Brownian bridges, iterated Stratonovich integrals, and Chen-series coefficients.

The stochastic side samples pinned Brownian paths by dyadic bisection and
evaluates word-indexed simplex integrals with the midpoint (Stratonovich)
rule.  The analytic side carries the exact conditional law of the Levy
areas on the bridge: the moment generating function

    E[exp(sum_{i<j} lambda_ij S_ij) | B_1 = 0] = prod_a theta_a / sin(theta_a)

(+-i theta_a the eigenvalues of the antisymmetric coefficient matrix) and
the joint area moments derived from its cumulant expansion.  Areas here are
the unnormalized ones, S_ij = int B^i dB^j - B^j dB^i.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .rng import CHUNK_SIZE, chunk_plan, run_chunks, substream


class ChenArgumentError(ValueError):
    """Bad word, index, time, or sample-count argument."""


MAX_WORD_LEN = 4

# cumulant expansion of the conditional MGF: log prod theta/sin(theta)
# = -tr(L^2)/12 + tr(L^4)/360 - tr(L^6)/5670 + O(L^8)
_TRACE_COEFF = {2: -1.0 / 12.0, 4: 1.0 / 360.0, 6: -1.0 / 5670.0}


# ---------------------------------------------------------------------------
# path sampling


def brownian_paths(rng, n_paths, d, n_grid, t_max=1.0, pinned=True):
    """Dyadic bisection construction of Brownian paths on [0, t_max].

    Returns an array of shape (n_paths, n_grid+1, d).  With pinned=True the
    endpoint is fixed at 0 (bridge); otherwise it is drawn N(0, t_max).

    Draws happen endpoint first, then level by level (1, 2, 4, ... midpoints),
    so a run with 2*n_grid consumes the n_grid run's draws as a prefix: the
    coarse path is refined, not resampled.  All variances carry t_max
    linearly, so rescaling time rescales the same draws by sqrt(t_max).
    """
    if n_grid < 2 or n_grid & (n_grid - 1):
        raise ChenArgumentError(f"n_grid must be a power of two >= 2, got {n_grid}")
    out = np.zeros((n_paths, n_grid + 1, d))
    if not pinned:
        out[:, n_grid] = math.sqrt(t_max) * rng.standard_normal((n_paths, d))
    step = n_grid
    while step > 1:
        half = step // 2
        mids = np.arange(half, n_grid, step)
        z = rng.standard_normal((n_paths, mids.size, d))
        dt = step / n_grid * t_max
        out[:, mids] = 0.5 * (out[:, mids - half] + out[:, mids + half]) + math.sqrt(dt / 4.0) * z
        step = half
    return out


class BridgePath:
    """A batch of Brownian bridges on [0,1] with B_0 = B_1 = 0."""

    __slots__ = ("values", "d_B", "n_grid", "seed", "times")

    def __init__(self, values, seed):
        self.values = values
        self.d_B = values.shape[-1]
        self.n_grid = values.shape[-2] - 1
        self.seed = seed
        self.times = np.linspace(0.0, 1.0, self.n_grid + 1)

    @property
    def n_paths(self):
        return self.values.shape[0]


def simulate_bridge(d_B, n_grid, seed, n_paths=1):
    """Sample Brownian bridges; bit-reproducible from (d_B, n_grid, seed, n_paths)."""
    if d_B < 1:
        raise ChenArgumentError(f"need at least one component, got d_B={d_B}")
    vals = brownian_paths(substream(seed, 0), n_paths, d_B, n_grid, 1.0, pinned=True)
    return BridgePath(vals, seed)


# ---------------------------------------------------------------------------
# iterated integrals and Chen coefficients


def _clipped_grid(path, t):
    """Times and values up to t, with the final node interpolated into the last cell."""
    if not 0.0 < t <= 1.0:
        raise ChenArgumentError(f"evaluation time must lie in (0, 1], got {t}")
    pos = t * path.n_grid
    j = int(math.floor(pos + 1e-12))
    frac = pos - j
    times = path.times[: j + 1]
    vals = path.values[:, : j + 1]
    if frac > 1e-12:
        last = (1.0 - frac) * path.values[:, j] + frac * path.values[:, j + 1]
        times = np.concatenate([times, [t]])
        vals = np.concatenate([vals, last[:, None, :]], axis=1)
    return times, vals


def _check_word(path, word):
    if not 1 <= len(word) <= MAX_WORD_LEN:
        raise ChenArgumentError(f"word length must be 1..{MAX_WORD_LEN}, got {len(word)}")
    for w in word:
        if not 0 <= w <= path.d_B:
            raise ChenArgumentError(f"letter {w} outside 0..{path.d_B}")


def iterated_integral(path, word, t=1.0):
    """Stratonovich simplex integral of the word over [0, t], one value per path.

    Letters 1..d integrate against the path components; letter 0 integrates
    against the deterministic component s/2 (the calibrated time letter).
    Midpoint rule per grid cell.
    """
    _check_word(path, word)
    times, vals = _clipped_grid(path, t)
    cur = np.ones((vals.shape[0], times.size))
    for letter in word:
        if letter == 0:
            x = np.broadcast_to(times / 2.0, cur.shape)
        else:
            x = vals[:, :, letter - 1]
        inc = 0.5 * (cur[:, :-1] + cur[:, 1:]) * np.diff(x, axis=1)
        cur = np.concatenate([np.zeros((cur.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)
    return cur[:, -1]


@lru_cache(maxsize=None)
def _perm_table(k):
    """(inverse-permuted index tuple, weight) pairs for the order-k coefficient."""
    rows = []
    for sigma in itertools.permutations(range(1, k + 1)):
        desc = sum(1 for a in range(k - 1) if sigma[a] > sigma[a + 1])
        weight = (-1.0) ** desc / (k * k * math.comb(k - 1, desc))
        # position a of the reordered word takes the letter at sigma^{-1}(a)
        positions = tuple(sigma.index(a + 1) for a in range(k))
        rows.append((positions, weight))
    return tuple(rows)


def word_weight(word):
    """Homogeneous weight d(I) = length + number of 0 letters."""
    return len(word) + sum(1 for w in word if w == 0)


def lambda_coeff(path, word, t=1.0):
    """Chen-series coefficient Lambda_I(B)_t, one value per path.

    2^{d(I)/2} times the descent-weighted permutation sum of simplex
    integrals.  Calibration: Lambda_(i) = sqrt(2) B^i_t, 2 Lambda_(i,j) =
    levy_area(i,j), Lambda_(0) = t.
    """
    _check_word(path, word)
    k = len(word)
    total = 0.0
    for positions, weight in _perm_table(k):
        permuted = tuple(word[p] for p in positions)
        total = total + weight * iterated_integral(path, permuted, t)
    return 2.0 ** (word_weight(word) / 2.0) * total


def levy_area(path, i, j, t=1.0):
    """S_ij(t) = int_0^t B^i dB^j - B^j dB^i (midpoint rule), per path."""
    if i == j:
        raise ChenArgumentError("area needs two distinct components")
    for idx in (i, j):
        if not 1 <= idx <= path.d_B:
            raise ChenArgumentError(f"component {idx} outside 1..{path.d_B}")
    times, vals = _clipped_grid(path, t)
    x = vals[:, :, i - 1]
    y = vals[:, :, j - 1]
    return _area_from_components(x, y)


def _area_from_components(x, y):
    dx = np.diff(x, axis=1)
    dy = np.diff(y, axis=1)
    mx = 0.5 * (x[:, :-1] + x[:, 1:])
    my = 0.5 * (y[:, :-1] + y[:, 1:])
    return np.sum(mx * dy - my * dx, axis=1)


def all_pair_areas(values):
    """Areas S_ij at the final time for every i < j of a (paths, nodes, d) array.

    Returns (pairs, areas) with pairs a list of 1-based (i, j) and areas of
    shape (n_paths, len(pairs)).
    """
    d = values.shape[-1]
    pairs = [(i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1)]
    cols = []
    for i, j in pairs:
        cols.append(_area_from_components(values[:, :, i - 1], values[:, :, j - 1]))
    return pairs, np.stack(cols, axis=1) if cols else np.zeros((values.shape[0], 0))


# ---------------------------------------------------------------------------
# conditional law of the areas


def _as_antisymmetric(theta):
    lam = np.asarray(theta, dtype=float)
    if lam.ndim == 0:
        lam = np.array([[0.0, float(theta)], [-float(theta), 0.0]])
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise ChenArgumentError(f"coefficient array must be square, got shape {lam.shape}")
    if np.max(np.abs(lam + lam.T)) > 1e-12 * max(1.0, np.max(np.abs(lam))):
        raise ChenArgumentError("coefficient matrix must be antisymmetric")
    return lam


def _rotation_angles(lam):
    """The theta_a >= 0 with spectrum(lam) = {+-i theta_a} (zeros included once)."""
    if lam.shape[0] == 0:
        return np.zeros(0)
    ev = np.linalg.eigvals(lam)
    return np.sort(np.abs(ev.imag))[::2][::-1]


def mgf_reference(theta):
    """prod_a theta_a / sin(theta_a), the exact conditional MGF."""
    lam = _as_antisymmetric(theta)
    angles = _rotation_angles(lam)
    if angles.size and angles.max() >= math.pi - 1e-9:
        raise ChenArgumentError(
            f"rotation angle {angles.max():.6g} at or beyond pi: conditional MGF diverges"
        )
    with np.errstate(invalid="ignore"):
        vals = np.where(angles > 0, angles / np.sin(np.where(angles > 0, angles, 1.0)), 1.0)
    return float(np.prod(vals))


def _mgf_chunk(args):
    seed, chunk_idx, count, d, n_grid, lam_flat = args
    lam = np.asarray(lam_flat).reshape(d, d)
    vals = brownian_paths(substream(seed, chunk_idx), count, d, n_grid, 1.0, pinned=True)
    pairs, areas = all_pair_areas(vals)
    coeffs = np.array([lam[i - 1, j - 1] for i, j in pairs])
    w = np.exp(areas @ coeffs)
    return float(np.sum(w)), float(np.sum(w * w)), count


def mgf_levy(theta, samples, seed=0, n_grid=1024, workers=1):
    """MC estimate of E[exp(sum_{i<j} lambda_ij S_ij) | B_1 = 0] over bridges.

    theta is a scalar (two-component bridge, coefficient on S_12) or an
    antisymmetric matrix.  Returns the estimate with its standard error and
    the exact reference value.  Note the estimator's own variance is finite
    only while the doubled coefficients stay below the divergence boundary.
    """
    lam = _as_antisymmetric(theta)
    reference = mgf_reference(lam)  # also validates the angle bound
    if samples < 2:
        raise ChenArgumentError("need at least 2 samples")
    d = lam.shape[0]
    jobs = [
        (seed, idx, count, d, n_grid, tuple(lam.ravel()))
        for idx, count in chunk_plan(samples)
    ]
    parts = run_chunks(_mgf_chunk, jobs, workers)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    est = s1 / n
    var = max(s2 / n - est * est, 0.0) * n / (n - 1)
    return {
        "estimate": est,
        "stderr": math.sqrt(var / n),
        "reference": reference,
        "samples": n,
        "seed": seed,
        "n_grid": n_grid,
    }


def _pair_matrix(p, dim):
    i, j = p
    E = np.zeros((dim, dim))
    E[i - 1, j - 1] = 1.0
    E[j - 1, i - 1] = -1.0
    return E


@lru_cache(maxsize=None)
def area_cumulant(pairs, dim):
    """Joint cumulant kappa(S_{p_1}, ..., S_{p_k}) on the bridge, pairs 1-based.

    From the trace expansion of the log-MGF: the order-k cumulant is
    coeff_k * sum over orderings of tr(E_{p_1} ... E_{p_k}).  Supported for
    k <= 6 (order-8 trace coefficients are not tabulated).
    """
    k = len(pairs)
    if k == 0 or k % 2:
        return 0.0
    if k > 6:
        raise ChenArgumentError(f"joint cumulants implemented up to order 6, got {k}")
    mats = [_pair_matrix(p, dim) for p in pairs]
    total = 0.0
    for perm in itertools.permutations(range(k)):
        prod = mats[perm[0]]
        for idx in perm[1:]:
            prod = prod @ mats[idx]
        total += np.trace(prod)
    return _TRACE_COEFF[k] * total


_MOMENT_CACHE = {}


def area_moment(pairs, dim):
    """Joint moment E[S_{p_1} ... S_{p_k}] on the bridge via even-block partitions."""
    pairs = tuple(sorted(pairs))
    k = len(pairs)
    if k == 0:
        return 1.0
    if k % 2:
        return 0.0
    key = (pairs, dim)
    if key in _MOMENT_CACHE:
        return _MOMENT_CACHE[key]
    total = 0.0
    rest = list(range(1, k))
    # block containing position 0 has odd companion count (even block size)
    for size in range(1, k, 2):
        for combo in itertools.combinations(rest, size):
            block = (pairs[0],) + tuple(pairs[c] for c in combo)
            leftover = tuple(pairs[c] for c in rest if c not in combo)
            kap = area_cumulant(tuple(sorted(block)), dim)
            if kap != 0.0:
                total += kap * area_moment(leftover, dim)
    _MOMENT_CACHE[key] = total
    return total


# ---------------------------------------------------------------------------
# scalar-potential oracle


def scalar_potential_density(c, t, n_grid=1024, seed=0, samples=64):
    """Diagonal of the truncated parametrix for d^2/dx^2 + c on the line.

    The only surviving Chen coefficient is the time letter, so the result
    must reproduce e^{ct}/sqrt(4 pi t).  Runs through the sampling and
    lambda_coeff machinery on purpose; this is the calibration oracle for
    the time-letter normalization.
    """
    path = simulate_bridge(1, n_grid, seed, n_paths=samples)
    lam0 = lambda_coeff(path, (0,), t)
    return float(np.mean(np.exp(c * lam0))) / math.sqrt(4.0 * math.pi * t)
