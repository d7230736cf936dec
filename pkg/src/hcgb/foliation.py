"""Pointwise tensor data of a totally geodesic Riemannian foliation.

A FoliationPoint packs what the heat-kernel computations need at one
point of a homogeneous model: the torsion of the Bott connection, its
covariant derivatives, the horizontal curvature block, and the vertical
rescaling parameter epsilon.  Index layout (0-based in arrays, 1-based
in config files):

    T[i, j, r]          r-component of T(X_i, X_j)            (n, n, m)
    R_hhhh[i, j, k, l]  <R(X_i, X_j) X_k, X_l>                (n, n, n, n)
    T_cov_h[i, j, k, r] r-component of (nabla_{X_k} T)(X_i, X_j), (n, n, n, m)
    T_cov_v[i, j, r, s] s-component of (nabla_{Z_r} T)(X_i, X_j), (n, n, m, m)

with X_1..X_n an orthonormal horizontal frame and Z_1..Z_m a vertical
one.  Homogeneous models make pointwise data global, so no charts or
transport are ever needed.  Everything downstream (the rescaled-metric
curvature blocks, the Weitzenbock remainder, the vertical torsion-
derivative tensor) is a closed formula in these arrays.
"""

from __future__ import annotations

import numpy as np

from .fermion import FermionOp, normal_order

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 fallback
    import tomli as tomllib


class FoliationArgumentError(ValueError):
    """Malformed tensor data, config entry, or argument."""


class FoliationStateError(RuntimeError):
    """A computation was requested on a model that does not support it."""


_L_I = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, 1.0, 0.0],
])
_L_J = np.array([
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
])
_L_K = np.array([
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
])

PRESETS = ("heisenberg", "htype-m2", "quaternionic-heisenberg", "flat-torus-product")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


class FoliationPoint:
    """Validated, immutable tensor data at a point.

    Antisymmetries are checked with exact comparisons: inputs are exact
    decimals from presets or config files, so any mismatch is a typo,
    not round-off.
    """

    __slots__ = ("n", "m", "epsilon", "T", "R_hhhh", "T_cov_h", "T_cov_v", "volume")

    def __init__(self, n, m, T=None, R_hhhh=None, T_cov_h=None, T_cov_v=None,
                 epsilon=1.0, volume=None):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise FoliationArgumentError(f"horizontal dimension must be a positive integer, got {n!r}")
        if not isinstance(m, (int, np.integer)) or m < 0:
            raise FoliationArgumentError(f"vertical dimension must be a nonnegative integer, got {m!r}")
        epsilon = float(epsilon)
        if not np.isfinite(epsilon) or epsilon <= 0.0:
            raise FoliationArgumentError(f"epsilon must be positive and finite, got {epsilon}")
        if volume is not None:
            volume = float(volume)
            if not np.isfinite(volume) or volume <= 0.0:
                raise FoliationArgumentError(f"volume must be positive and finite, got {volume}")

        n, m = int(n), int(m)
        T = np.zeros((n, n, m)) if T is None else np.asarray(T, dtype=float)
        R_hhhh = np.zeros((n, n, n, n)) if R_hhhh is None else np.asarray(R_hhhh, dtype=float)
        T_cov_h = np.zeros((n, n, n, m)) if T_cov_h is None else np.asarray(T_cov_h, dtype=float)
        T_cov_v = np.zeros((n, n, m, m)) if T_cov_v is None else np.asarray(T_cov_v, dtype=float)

        shapes = {
            "T": (T, (n, n, m)),
            "R_hhhh": (R_hhhh, (n, n, n, n)),
            "T_cov_h": (T_cov_h, (n, n, n, m)),
            "T_cov_v": (T_cov_v, (n, n, m, m)),
        }
        for name, (arr, want) in shapes.items():
            if arr.shape != want:
                raise FoliationArgumentError(f"{name} has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise FoliationArgumentError(f"{name} contains non-finite entries")

        for name, arr, perm in (
            ("T", T, (1, 0, 2)),
            ("R_hhhh", R_hhhh, (1, 0, 2, 3)),
            ("R_hhhh", R_hhhh, (0, 1, 3, 2)),
            ("T_cov_h", T_cov_h, (1, 0, 2, 3)),
            ("T_cov_v", T_cov_v, (1, 0, 2, 3)),
        ):
            if not np.array_equal(arr, -arr.transpose(perm)):
                raise FoliationArgumentError(f"{name} violates antisymmetry under axes swap {perm}")

        # vertical derivative along Z_r has no Z_r-component: (nabla_Z T) pairs to
        # zero against its own direction, entry by entry
        if m and np.any(np.einsum("ijrr->ijr", T_cov_v)):
            raise FoliationArgumentError("T_cov_v has nonzero entries with repeated vertical index")

        self.n = n
        self.m = m
        self.epsilon = epsilon
        self.volume = volume
        self.T = _frozen(T)
        self.R_hhhh = _frozen(R_hhhh)
        self.T_cov_h = _frozen(T_cov_h)
        self.T_cov_v = _frozen(T_cov_v)

    def with_epsilon(self, epsilon):
        """Same tensor data, different vertical rescaling."""
        return FoliationPoint(self.n, self.m, self.T, self.R_hhhh, self.T_cov_h,
                              self.T_cov_v, epsilon=epsilon, volume=self.volume)

    def __repr__(self):
        return (f"FoliationPoint(n={self.n}, m={self.m}, epsilon={self.epsilon}, "
                f"volume={self.volume})")


class HatCurvature:
    """Curvature blocks of the rescaled-metric connection.

    hhhh[i,j,k,l], hvhh[i,r,k,l], vvhh[r,s,k,l] index the first two slots
    by the plane of rotation (horizontal/vertical as named), the last two
    by the horizontal vectors being paired.  hhvv[i,j,r,s] is the block
    pairing two vertical directions and equals T_cov_v identically.
    """

    __slots__ = ("hhhh", "hvhh", "vvhh", "hhvv")

    def __init__(self, hhhh, hvhh, vvhh, hhvv):
        self.hhhh = hhhh
        self.hvhh = hvhh
        self.vvhh = vvhh
        self.hhvv = hhvv


def j_map(fp, z):
    """Matrix of the torsion dual map for the vertical vector z.

    Column i holds the components of the image of X_i, so the (j, i)
    entry is sum_r z_r T[i, j, r] and the matrix is antisymmetric.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (fp.m,):
        raise FoliationArgumentError(f"vertical vector has shape {z.shape}, expected ({fp.m},)")
    return np.einsum("ijr,r->ji", fp.T, z)


def _commutator_tensor(T):
    # comm[i,j,r,s] = [A_r, A_s][i,j] with A_r = T[:,:,r]
    p = np.einsum("ikr,kjs->ijrs", T, T)
    return p - p.transpose(0, 1, 3, 2)


def check_symmetry(fp):
    """Componentwise test for symmetry of the rescaled horizontal Laplacian.

    Two conditions, both scaled to torsion-derivative units: the
    horizontal derivative of the torsion vanishes, and the vertical
    derivative matches 1/(2 eps) times the commutator of the torsion
    maps.  Returns {"passes": bool, "residual": float} with the max
    absolute violation.
    """
    res = 0.0
    if fp.T_cov_h.size:
        res = float(np.max(np.abs(fp.T_cov_h)))
    if fp.m:
        gap = 2.0 * fp.T_cov_v - _commutator_tensor(fp.T) / fp.epsilon
        res = max(res, float(np.max(np.abs(gap))))
    return {"passes": res <= 1e-12, "residual": res}


def hat_curvature(fp):
    """All curvature blocks of the rescaled connection, by closed formula."""
    T, R, eps = fp.T, fp.R_hhhh, fp.epsilon
    hhhh = R + np.einsum("ijs,kls->ijkl", T, T) / eps
    hvhh = fp.T_cov_h.transpose(2, 3, 0, 1) / eps
    vvhh = 2.0 * fp.T_cov_v.transpose(2, 3, 0, 1) / eps
    if fp.m:
        vvhh = vvhh + (np.einsum("ilr,kis->rskl", T, T)
                       - np.einsum("ils,kir->rskl", T, T)) / eps ** 2
    hhvv = fp.T_cov_v.copy()
    return HatCurvature(hhhh, hvhh, vvhh, hhvv)


def identity_residuals(fp):
    """Residuals of the structural curvature identities.

    curvature_pair_symmetry: exchanging the rotation plane with the
    paired vectors leaves R_hhhh fixed (holds on models where the
    symmetry condition does).  vertical_trace: the vertical torsion
    derivative has no component along its own direction.  mixed_block:
    the horizontal-horizontal-vertical-vertical curvature block equals
    T_cov_v.  hv_block: the mixed horizontal-vertical block, zero
    exactly when T_cov_h is.
    """
    hat = hat_curvature(fp)
    pair = 0.0
    if fp.R_hhhh.size:
        pair = float(np.max(np.abs(fp.R_hhhh - fp.R_hhhh.transpose(2, 3, 0, 1))))
    vtrace = 0.0
    if fp.m:
        vtrace = float(np.max(np.abs(np.einsum("ijrr->ijr", fp.T_cov_v))))
    mixed = 0.0
    if hat.hhvv.size:
        mixed = float(np.max(np.abs(hat.hhvv - fp.T_cov_v)))
    hv = float(np.max(np.abs(hat.hvhh))) if hat.hvhh.size else 0.0
    return {
        "curvature_pair_symmetry": pair,
        "vertical_trace": vtrace,
        "mixed_block": mixed,
        "hv_block": hv,
    }


def weitzenbock_remainder(fp, symmetric_form=False):
    """Zero-order curvature operator of the horizontal Laplacian on forms.

    Returned as a FermionOp on n + m generators, horizontal wedge and
    contraction first (indices 1..n), vertical ones after (n+1..n+m).
    With symmetric_form=True only the two terms that survive under the
    symmetry condition are kept; otherwise all five terms are summed,
    and the two versions agree exactly whenever check_symmetry passes.
    """
    n, m, eps = fp.n, fp.m, fp.epsilon
    T, R = fp.T, fp.R_hhhh
    acc = {}

    def add(coeff, word):
        if coeff == 0.0:
            return
        for key, c in normal_order(word).items():
            acc[key] = acc.get(key, 0.0) + coeff * c

    c1 = np.einsum("kjik->ij", R)
    if m:
        c1 = c1 + np.einsum("ikr,jkr->ij", T, T) / eps
    for i in range(n):
        for j in range(n):
            add(c1[i, j], ((True, i + 1), (False, j + 1)))

    c3 = R.copy()
    if m:
        c3 += np.einsum("klr,ijr->klij", T, T) / eps
    for i in range(n):
        for j in range(n):
            for l in range(n):
                for k in range(n):
                    add(0.5 * c3[k, l, i, j],
                        ((True, i + 1), (True, j + 1), (False, l + 1), (False, k + 1)))

    if not symmetric_form and m:
        c2 = np.einsum("ijir->jr", fp.T_cov_h)
        for j in range(n):
            for r in range(m):
                add(-c2[j, r], ((True, j + 1), (False, n + r + 1)))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    for r in range(m):
                        add(fp.T_cov_h[i, j, k, r] / eps,
                            ((True, i + 1), (True, j + 1), (False, n + r + 1), (False, k + 1)))
        c5 = 2.0 * fp.T_cov_v / eps - _commutator_tensor(T) / eps ** 2
        for i in range(n):
            for j in range(n):
                for r in range(m):
                    for s in range(m):
                        add(0.5 * c5[i, j, r, s],
                            ((True, i + 1), (True, j + 1), (False, n + s + 1), (False, n + r + 1)))

    return FermionOp.from_terms(n + m, {k: v for k, v in acc.items() if v != 0.0})


def script_T(fp):
    """Vertical torsion-derivative tensor as a family of m x m matrices.

    Entry [i, j] is the matrix sending a vertical vector z to the
    vertical part of the rescaled curvature applied to (X_i, X_j); its
    (s, r) element is T_cov_v[i, j, r, s].  Only meaningful when the
    symmetry condition holds, so models failing check_symmetry are
    rejected.  The defining identity against the torsion dual maps is
    re-derived from T and j_map and cross-checked before returning.
    """
    rep = check_symmetry(fp)
    if not rep["passes"]:
        raise FoliationStateError(
            f"model fails the symmetry condition (residual {rep['residual']:.3g}); "
            "the vertical derivative tensor is not defined")
    res = script_T_identity_residual(fp)
    if res > 1e-10:
        raise FoliationStateError(
            f"vertical derivative tensor fails its torsion identity (residual {res:.3g})")
    return fp.T_cov_v.transpose(0, 1, 3, 2).copy()


def script_T_identity_residual(fp):
    """Max gap in the identity tying T_cov_v to the torsion dual maps.

    The tensor applied to z must equal 1/(2 eps) times the torsion of the
    pair (J_z X_i, X_j) plus (X_i, J_z X_j); both sides are assembled
    independently, the left from T_cov_v, the right from T and j_map.
    """
    if fp.m == 0:
        return 0.0
    jm = np.stack([j_map(fp, e) for e in np.eye(fp.m)])
    rhs = (np.einsum("rki,kjs->ijrs", jm, fp.T)
           + np.einsum("rkj,iks->ijrs", jm, fp.T)) / (2.0 * fp.epsilon)
    return float(np.max(np.abs(fp.T_cov_v - rhs)))


def torsion_rank(fp):
    """Rank of the torsion viewed as a map from horizontal 2-planes to the
    vertical space; equals m exactly when the torsion is onto."""
    if fp.m == 0:
        return 0
    return int(np.linalg.matrix_rank(fp.T.reshape(fp.n * fp.n, fp.m)))


def perturb(fp, value=0.1):
    """Copy of fp with the first horizontal torsion-derivative entry bumped.

    Breaks the symmetry condition on purpose (by exactly |value| in the
    residual); handy for exercising failure paths.
    """
    if fp.n < 2 or fp.m < 1:
        raise FoliationArgumentError("perturbation needs n >= 2 and m >= 1")
    tch = fp.T_cov_h.copy()
    tch[0, 1, 0, 0] += value
    tch[1, 0, 0, 0] -= value
    return FoliationPoint(fp.n, fp.m, fp.T, fp.R_hhhh, tch, fp.T_cov_v,
                          epsilon=fp.epsilon, volume=fp.volume)


def _htype_point(j_mats, kappa, epsilon, volume):
    n = j_mats[0].shape[0]
    m = len(j_mats)
    T = np.zeros((n, n, m))
    for r, J in enumerate(j_mats):
        T[:, :, r] = J.T
    T_cov_v = np.zeros((n, n, m, m))
    for r in range(m):
        for s in range(r + 1, m):
            a_r, a_s = T[:, :, r], T[:, :, s]
            block = 0.5 * kappa * (a_r @ a_s - a_s @ a_r)
            T_cov_v[:, :, r, s] = block
            T_cov_v[:, :, s, r] = -block
    if epsilon is None:
        epsilon = 1.0 / kappa
    return FoliationPoint(n, m, T, T_cov_v=T_cov_v, epsilon=epsilon, volume=volume)


def preset(name, epsilon=None, kappa=1.0):
    """Built-in homogeneous models.

    heisenberg: n=2, m=1 nilpotent group, torsion normalized so the
      dual map of the vertical unit is a rotation by a quarter turn.
    htype-m2: n=4, m=2, two anticommuting orthogonal complex structures
      with vertical torsion derivative scaled by kappa; the symmetry
      condition holds exactly at epsilon = 1/kappa.
    quaternionic-heisenberg: n=4, m=3, the three quaternionic complex
      structures, completed with the same vertical derivative rule at
      kappa = 1 so the symmetry condition holds at epsilon = 1.
    flat-torus-product: n=2, m=2 with every tensor zero.

    kappa only shapes htype-m2; epsilon=None picks each model's natural
    value.  All presets carry unit volume.
    """
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa <= 0.0:
        raise FoliationArgumentError(f"kappa must be positive and finite, got {kappa}")
    if name == "heisenberg":
        T = np.zeros((2, 2, 1))
        T[0, 1, 0] = -1.0
        T[1, 0, 0] = 1.0
        return FoliationPoint(2, 1, T, epsilon=1.0 if epsilon is None else epsilon,
                              volume=1.0)
    if name == "htype-m2":
        return _htype_point([_L_I, _L_J], kappa, epsilon, volume=1.0)
    if name == "quaternionic-heisenberg":
        return _htype_point([_L_I, _L_J, _L_K], 1.0, epsilon, volume=1.0)
    if name == "flat-torus-product":
        return FoliationPoint(2, 2, epsilon=1.0 if epsilon is None else epsilon,
                              volume=1.0)
    raise FoliationArgumentError(f"unknown preset {name!r}; choose from {PRESETS}")


def _fill_sparse(shape, rows, n_idx, limits, mirror, what):
    """Dense array from 1-based sparse rows, with sign-mirrored closure.

    Every row is expanded to its antisymmetry orbit; assigning two
    different values to one slot (directly or through a mirror) is a
    conflict and rejected.
    """
    arr = np.zeros(shape)
    seen = {}
    for row in rows:
        row = list(row)
        if len(row) != n_idx + 1:
            raise FoliationArgumentError(f"{what} entry {row} must have {n_idx} indices and a value")
        val = row[-1]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise FoliationArgumentError(f"{what} entry {row} has a non-numeric value")
        idx = []
        for pos, x in enumerate(row[:-1]):
            if isinstance(x, bool) or not isinstance(x, int):
                raise FoliationArgumentError(f"{what} entry {row} has a non-integer index")
            if not 1 <= x <= limits[pos]:
                raise FoliationArgumentError(
                    f"{what} entry {row}: index {x} out of range 1..{limits[pos]}")
            idx.append(x - 1)
        for key, sval in mirror(tuple(idx), float(val)):
            if key in seen and seen[key] != sval:
                raise FoliationArgumentError(
                    f"{what} entry at {tuple(i + 1 for i in key)} assigned conflicting "
                    f"values {seen[key]} and {sval}")
            seen[key] = sval
            arr[key] = sval
    return arr


def from_dict(data):
    """Build a FoliationPoint from a parsed model table.

    Keys: n, m (required), epsilon (default 1.0), volume (optional), and
    sparse entry lists T = [[i, j, r, value], ...], R, Tcov_h, Tcov_v
    with 1-based indices.  Unlisted entries are zero except where a
    listed entry forces them by antisymmetry in the first two indices.
    """
    if not isinstance(data, dict):
        raise FoliationArgumentError("model data must be a table")
    known = {"n", "m", "epsilon", "volume", "T", "R", "Tcov_h", "Tcov_v"}
    extra = set(data) - known
    if extra:
        raise FoliationArgumentError(f"unknown model fields: {sorted(extra)}")
    for field in ("n", "m"):
        if field not in data:
            raise FoliationArgumentError(f"model is missing required field {field!r}")
        if isinstance(data[field], bool) or not isinstance(data[field], int):
            raise FoliationArgumentError(f"model field {field!r} must be an integer")
    n, m = data["n"], data["m"]
    if n < 1 or m < 0:
        raise FoliationArgumentError(f"bad dimensions n={n}, m={m}")

    def pair_mirror(idx, val):
        i, j = idx[0], idx[1]
        yield idx, val
        yield (j, i) + idx[2:], -val

    def quad_mirror(idx, val):
        i, j, k, l = idx
        yield (i, j, k, l), val
        yield (j, i, k, l), -val
        yield (i, j, l, k), -val
        yield (j, i, l, k), val

    T = _fill_sparse((n, n, m), data.get("T", []), 3, (n, n, m), pair_mirror, "T")
    R = _fill_sparse((n, n, n, n), data.get("R", []), 4, (n, n, n, n), quad_mirror, "R")
    tch = _fill_sparse((n, n, n, m), data.get("Tcov_h", []), 4, (n, n, n, m),
                       pair_mirror, "Tcov_h")
    tcv = _fill_sparse((n, n, m, m), data.get("Tcov_v", []), 4, (n, n, m, m),
                       pair_mirror, "Tcov_v")
    return FoliationPoint(n, m, T, R, tch, tcv,
                          epsilon=data.get("epsilon", 1.0),
                          volume=data.get("volume"))


def from_config(path):
    """Load a model from a TOML file; see from_dict for the fields."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise FoliationArgumentError(f"could not parse model file {path}: {exc}") from None
    return from_dict(data)
