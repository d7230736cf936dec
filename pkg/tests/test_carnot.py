import math

import numpy as np
import pytest
from scipy.integrate import quad

from hcgb import carnot, foliation as fol

TOL = 1e-12
QUAD_TOL = 1e-8


def test_tangent_cone_heisenberg():
    g = carnot.tangent_cone(fol.preset("heisenberg"))
    assert (g.n, g.m) == (2, 1)
    assert g.dilation == (1, 1, 2)
    # bracket of the two horizontal generators is the vertical generator
    assert np.array_equal(g.bracket([1.0, 0.0], [0.0, 1.0]), np.array([1.0]))
    assert np.array_equal(g.bracket([0.0, 1.0], [1.0, 0.0]), np.array([-1.0]))


def test_tangent_cone_dimensions():
    g = carnot.tangent_cone(fol.preset("quaternionic-heisenberg"))
    assert (g.n, g.m) == (4, 3)
    assert g.dilation == (1, 1, 1, 1, 2, 2, 2)
    g2 = carnot.tangent_cone(fol.preset("htype-m2"))
    assert (g2.n, g2.m) == (4, 2)


def test_tangent_cone_bracket_antisymmetric():
    g = carnot.tangent_cone(fol.preset("htype-m2"))
    rng = np.random.default_rng(2)
    for _ in range(5):
        v, w = rng.standard_normal(4), rng.standard_normal(4)
        assert np.max(np.abs(g.bracket(v, w) + g.bracket(w, v))) < TOL
    with pytest.raises(carnot.CarnotArgumentError):
        g.bracket([1.0, 0.0], [0.0, 1.0])


def test_tangent_cone_rejections():
    with pytest.raises(carnot.CarnotStateError):
        carnot.tangent_cone(fol.preset("flat-torus-product"))
    with pytest.raises(carnot.CarnotStateError):
        carnot.tangent_cone(fol.perturb(fol.preset("heisenberg"), 0.1))


def test_j_constant_heisenberg():
    # 1-d oracle: integral of r/sinh r over (0, inf) is pi^2/4
    oracle, err = quad(lambda r: r / math.sinh(r) if 0 < r < 700 else float(r == 0), 0, np.inf)
    assert abs(oracle - math.pi ** 2 / 4) < 1e-10 and err < 1e-8
    fp = fol.preset("heisenberg")
    val = carnot.j_constant(fp)
    assert abs(val - 0.25) < QUAD_TOL
    assert abs(carnot.j_constant_radial(fp) - 0.25) < 1e-10


def test_j_constant_htype_full_vs_radial():
    fp = fol.preset("htype-m2")
    full = carnot.j_constant(fp)
    radial = carnot.j_constant_radial(fp)
    assert abs(full - radial) < QUAD_TOL
    # same value straight from the 1-d reduction formula
    inner, _ = quad(lambda r: r * (r / math.sinh(r)) ** 2 if 0 < r < 700 else 0.0, 0, np.inf)
    direct = 4.0 / (2 * math.pi) ** 4 * 2 * math.pi * inner
    assert abs(full - direct) < QUAD_TOL


def test_j_constant_quaternionic():
    fp = fol.preset("quaternionic-heisenberg")
    assert carnot.is_h_type(fp)
    full = carnot.j_constant(fp)
    radial = carnot.j_constant_radial(fp)
    assert abs(full - radial) < QUAD_TOL


def test_j_constant_rejects_degenerate_torsion():
    with pytest.raises(carnot.CarnotStateError):
        carnot.j_constant(fol.preset("flat-torus-product"))
    # one vertical direction acts, the other does not
    T = np.zeros((2, 2, 2))
    T[0, 1, 0] = -1.0
    T[1, 0, 0] = 1.0
    fp = fol.FoliationPoint(2, 2, T)
    with pytest.raises(carnot.CarnotStateError):
        carnot.j_constant(fp)
    with pytest.raises(carnot.CarnotStateError):
        carnot.j_constant_radial(fp)


def test_j_constant_basis_invariance():
    fp = fol.preset("htype-m2")
    rng = np.random.default_rng(7)
    O = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    rotated = np.einsum("ia,jb,ijr->abr", O, O, fp.T)
    rotated = 0.5 * (rotated - rotated.transpose(1, 0, 2))
    fp_rot = fol.FoliationPoint(4, 2, rotated, epsilon=fp.epsilon)
    assert abs(carnot.j_constant(fp_rot) - carnot.j_constant(fp)) < 2 * QUAD_TOL


def test_is_h_type():
    assert carnot.is_h_type(fol.preset("heisenberg"))
    assert carnot.is_h_type(fol.preset("htype-m2"))
    assert not carnot.is_h_type(fol.preset("flat-torus-product"))
    T = np.zeros((2, 2, 1))
    T[0, 1, 0] = -0.5
    T[1, 0, 0] = 0.5
    assert not carnot.is_h_type(fol.FoliationPoint(2, 1, T))


def test_density_argument_checks():
    fp = fol.preset("heisenberg")
    with pytest.raises(carnot.CarnotArgumentError):
        carnot.density_mc(fp, samples=100)
    with pytest.raises(carnot.CarnotArgumentError):
        carnot.density_mc(fp, t=-1.0, samples=10 ** 4)
    with pytest.raises(carnot.CarnotStateError):
        carnot.density_mc(fol.preset("flat-torus-product"), samples=10 ** 4)


def test_density_heisenberg_quick():
    out = carnot.density_mc(fol.preset("heisenberg"), samples=5 * 10 ** 4,
                            seed=42, n_grid=128)
    assert out["stderr"] > 0
    assert abs(out["estimate"] - 0.0625) < 0.15 * 0.0625
    assert len(out["bandwidth"]) == 3


def test_density_worker_independence():
    fp = fol.preset("heisenberg")
    a = carnot.density_mc(fp, samples=10 ** 4, seed=9, n_grid=64)
    b = carnot.density_mc(fp, samples=10 ** 4, seed=9, n_grid=64, workers=3)
    assert a == b


def test_density_dilation_scaling():
    fp = fol.preset("heisenberg")
    vals = {}
    for t in (0.5, 1.0, 2.0):
        out = carnot.density_mc(fp, t=t, samples=2 * 10 ** 4, seed=3, n_grid=64)
        vals[t] = (2.0 * t) ** 2 * out["estimate"]
    base = vals[1.0]
    for t in (0.5, 2.0):
        assert math.isclose(vals[t], base, rel_tol=1e-10)


def test_density_halves_when_torsion_doubles():
    fp = fol.preset("heisenberg")
    T2 = 2.0 * np.asarray(fp.T)
    fp2 = fol.FoliationPoint(2, 1, T2, epsilon=fp.epsilon)
    a = carnot.density_mc(fp, samples=2 * 10 ** 4, seed=5, n_grid=64)
    b = carnot.density_mc(fp2, samples=2 * 10 ** 4, seed=5, n_grid=64)
    assert math.isclose(b["estimate"], 0.5 * a["estimate"], rel_tol=1e-13)


def test_density_closed_form_values():
    fp = fol.preset("heisenberg")
    # (1/4pi) * (1/2pi) * integral of lambda/sinh = 1/16 at t = 1
    assert abs(carnot.density_closed_form(fp) - 0.0625) < 1e-10
    assert abs(carnot.density_closed_form(fp, t=2.0) - 1.0 / 64.0) < 1e-10
    # doubling the torsion halves the density at the origin
    fp2 = fol.FoliationPoint(2, 1, 2.0 * np.asarray(fp.T), epsilon=fp.epsilon)
    assert abs(carnot.density_closed_form(fp2) - 0.03125) < 1e-10


def test_density_closed_form_guards():
    with pytest.raises(carnot.CarnotArgumentError):
        carnot.density_closed_form(fol.preset("htype-m2"))
    with pytest.raises(carnot.CarnotArgumentError):
        carnot.density_closed_form(fol.preset("heisenberg"), t=0.0)
    with pytest.raises(carnot.CarnotStateError):
        carnot.density_closed_form(fol.FoliationPoint(2, 1))


def test_density_mc_tracks_closed_form():
    # KDE against the characteristic-function oracle at a second time point
    fp = fol.preset("heisenberg")
    t = 0.5
    want = carnot.density_closed_form(fp, t=t)
    out = carnot.density_mc(fp, t=t, samples=10 ** 5, seed=1, n_grid=128)
    assert abs(out["estimate"] - want) < 0.15 * want
