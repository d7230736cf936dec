import math

import numpy as np
import pytest

from hcgb import carnot, cgb, chen, fermion, foliation as fol
from model_zoo import commuting_torsion_model, random_even_even_model

TOL = 1e-12
REL = 1e-10


def test_quadratic_power_supertrace_is_determinant():
    # Str over m generators of (sum Q_rs b*_r b_s)^m = (-1)^m m! det Q
    rng = np.random.default_rng(0)
    for m in (1, 2, 3, 4):
        for _ in range(3):
            Q = rng.standard_normal((m, m))
            op = fermion.quadratic(m, Q)
            power = fermion.FermionOp.identity(m)
            for _ in range(m):
                power = fermion.compose(power, op)
            got = fermion.supertrace(power)
            want = (-1.0) ** m * math.factorial(m) * np.linalg.det(Q)
            assert abs(got - want) < 1e-10 * max(1.0, abs(want))
    # antisymmetric odd size: determinant vanishes identically
    Q = rng.standard_normal((3, 3))
    Q = Q - Q.T
    op = fermion.quadratic(3, Q)
    cube = fermion.compose(fermion.compose(op, op), op)
    assert abs(fermion.supertrace(cube)) < TOL


def test_det_factor_htype_analytic():
    # vertical 2x2 determinant collects kappa^2 (S_03 + S_12)^2; bridge
    # variance of each area is 1/3 and the cross moment vanishes
    for kappa in (1.0, 2.0):
        fp = fol.preset("htype-m2", kappa=kappa)
        got = cgb.det_factor_m_part(fp)
        assert abs(got - 2.0 * kappa ** 2 / 3.0) < TOL


def test_det_factor_parities():
    assert cgb.det_factor_m_part(fol.preset("quaternionic-heisenberg")) == 0.0
    assert cgb.det_factor_m_part(fol.preset("heisenberg")) == 0.0
    assert cgb.det_factor_m_part(fol.FoliationPoint(2, 0)) == 1.0
    assert cgb.det_factor_m_part(fol.preset("flat-torus-product")) == 0.0


def test_det_factor_matches_direct_sampling():
    # independent check of the closed moments: sample the determinant
    fp = random_even_even_model(3)
    closed = cgb.det_factor_m_part(fp)
    vals = chen.brownian_paths(np.random.default_rng(17), 40000, fp.n, 512, pinned=True)
    pairs, areas = chen.all_pair_areas(vals)
    coeff = np.stack([fp.T_cov_v[i - 1, j - 1] for i, j in pairs])
    mats = np.einsum("ba,ars->brs", areas, coeff)
    dets = np.linalg.det(mats)
    err = dets.std(ddof=1) / math.sqrt(dets.size)
    assert abs(dets.mean() - closed) < 4.0 * err


def test_closed_form_htype_report():
    fp = fol.preset("htype-m2")
    rep = cgb.closed_form_integrand(fp)
    assert rep["n"] == 4 and rep["m"] == 2 and rep["epsilon"] == 1.0
    assert abs(rep["j_const"] - carnot.j_constant(fp)) < TOL
    assert abs(rep["det_factor_m_part"] - 2.0 / 3.0) < TOL
    # quartic supertrace route: coefficient = J * Str(H^2) / 2
    assert abs(rep["euler_form_coeff"] - rep["j_const"] * 16.0) < REL
    assert abs(rep["integrand"] - rep["euler_form_coeff"] * rep["det_factor_m_part"]) < TOL
    assert abs(rep["chi_raw"] - rep["integrand"]) < TOL  # volume 1
    assert not rep["parity_shortcut"] and rep["reason"] is None
    # frozen regression value for the kappa = 1 integrand
    assert abs(rep["integrand"] - 0.31014543682334346) < 1e-9


def test_closed_form_parity_shortcuts():
    rep = cgb.closed_form_integrand(fol.preset("heisenberg"))
    assert rep["parity_shortcut"] and rep["reason"] == "vertical dimension is odd"
    assert rep["integrand"] == 0.0 and rep["chi_raw"] == 0.0 and rep["chi_rounded"] == 0
    assert abs(rep["j_const"] - 0.25) < 1e-8

    rep = cgb.closed_form_integrand(fol.preset("quaternionic-heisenberg"))
    assert rep["parity_shortcut"] and rep["integrand"] == 0.0
    assert abs(rep["j_const"] - 1.0 / 30.0) < 1e-8


def test_closed_form_flat_torus():
    rep = cgb.closed_form_integrand(fol.preset("flat-torus-product"))
    assert rep["j_const"] is None and rep["euler_form_coeff"] is None
    assert rep["det_factor_m_part"] == 0.0 and rep["integrand"] == 0.0
    assert rep["chi_raw"] == 0.0 and rep["chi_rounded"] == 0
    assert rep["reason"] == "torsion does not span the vertical space"


def test_closed_form_zero_vertical_derivative():
    # spanning torsion but vanishing vertical derivative: exact zero integrand
    rep = cgb.closed_form_integrand(commuting_torsion_model())
    assert rep["det_factor_m_part"] == 0.0 and rep["integrand"] == 0.0
    assert abs(rep["j_const"] - 0.0625) < 1e-8  # product of two rotation blocks
    assert rep["chi_rounded"] == 0


def test_closed_form_gate():
    with pytest.raises(cgb.CgbStateError):
        cgb.closed_form_integrand(fol.perturb(fol.preset("htype-m2"), 0.1))


def test_pathwise_factorization():
    # one chunk of sampled operators against the binomial-factored form
    fp = fol.preset("htype-m2")
    n, m = fp.n, fp.m
    N = n // 2 + m
    hh = fol.hat_curvature(fp).hhhh
    strs = cgb._mc_chunk((hh, fp.T_cov_v, n, m, N, 256, 5, 0, 16))
    paths = chen.brownian_paths(chen.substream(5, 0), 16, n, 256, pinned=True)
    pairs, areas = chen.all_pair_areas(paths)
    coeff = np.stack([fp.T_cov_v[i - 1, j - 1] for i, j in pairs])
    str_h = cgb._quartic_power_supertrace(fp)
    for b in range(16):
        Q = np.einsum("a,ars->rs", areas[b], coeff)
        want = math.comb(N, m) * str_h * math.factorial(m) * np.linalg.det(Q)
        assert abs(strs[b] - want) < 1e-9 * max(1.0, abs(want))


def test_route_equivalence_htype():
    fp = fol.preset("htype-m2")
    closed = cgb.closed_form_integrand(fp)
    mc = cgb.mc_supertrace(fp, 8192, seed=11, j_const=closed["j_const"])
    assert mc["stderr"] > 0.0
    assert abs(mc["estimate"] - closed["integrand"]) < 3.0 * mc["stderr"]


def test_route_equivalence_random_model():
    fp = random_even_even_model(21)
    closed = cgb.closed_form_integrand(fp)
    mc = cgb.mc_supertrace(fp, 8192, seed=4, j_const=closed["j_const"])
    assert abs(mc["estimate"] - closed["integrand"]) < 3.0 * mc["stderr"]


def test_mc_exact_zeros():
    # odd vertical dimension, no vertical coupling: every sample is 0.0
    mc = cgb.mc_supertrace(fol.preset("heisenberg"), 2048, seed=2)
    assert mc["estimate"] == 0.0 and mc["stderr"] == 0.0
    assert abs(mc["j_const"] - 0.25) < 1e-8 and mc["reason"] is None
    # spanning torsion, zero vertical derivative: same exact zeros
    mc = cgb.mc_supertrace(commuting_torsion_model(), 2048, seed=2)
    assert mc["estimate"] == 0.0 and mc["stderr"] == 0.0
    # non-spanning torsion: zero report without a volume constant
    mc = cgb.mc_supertrace(fol.preset("flat-torus-product"), 2048, seed=2)
    assert mc["estimate"] == 0.0 and mc["j_const"] is None
    assert mc["reason"] == "torsion does not span the vertical space"


def test_mc_argument_and_state_errors():
    with pytest.raises(cgb.CgbArgumentError):
        cgb.mc_supertrace(fol.preset("htype-m2"), 999)
    with pytest.raises(cgb.CgbStateError):
        cgb.mc_supertrace(fol.perturb(fol.preset("heisenberg"), 0.1), 2048)


def test_mc_worker_determinism():
    fp = fol.preset("htype-m2")
    a = cgb.mc_supertrace(fp, 4096, seed=9, j_const=1.0, workers=1)
    b = cgb.mc_supertrace(fp, 4096, seed=9, j_const=1.0, workers=3)
    assert a["estimate"] == b["estimate"] and a["stderr"] == b["stderr"]


def test_mc_stderr_scaling():
    fp = fol.preset("htype-m2")
    small = cgb.mc_supertrace(fp, 4096, seed=13, j_const=1.0)
    large = cgb.mc_supertrace(fp, 16384, seed=13, j_const=1.0)
    ratio = small["stderr"] / large["stderr"]
    assert 1.5 < ratio < 2.7


def test_euler_characteristic():
    for name in ("heisenberg", "quaternionic-heisenberg"):
        out = cgb.euler_characteristic(fol.preset(name))
        assert out == {"chi_raw": 0.0, "chi_rounded": 0, "parity_shortcut": True}
    out = cgb.euler_characteristic(fol.preset("flat-torus-product"))
    assert out["chi_raw"] == 0.0 and out["chi_rounded"] == 0
    assert not out["parity_shortcut"]
    with pytest.raises(cgb.CgbArgumentError):
        cgb.euler_characteristic(fol.FoliationPoint(2, 1))


def test_euler_characteristic_volume_linear():
    one = cgb.euler_characteristic(random_even_even_model(5, volume=1.0))
    three = cgb.euler_characteristic(random_even_even_model(5, volume=3.0))
    assert abs(three["chi_raw"] - 3.0 * one["chi_raw"]) < REL * max(1.0, abs(one["chi_raw"]))


def test_permutation_euler_form_matches_fermionic():
    fp = fol.preset("heisenberg")
    assert abs(cgb.permutation_euler_form(fp) - cgb.euler_form_coefficient(fp)) < TOL
    fp = fol.preset("htype-m2")
    want = cgb.euler_form_coefficient(fp)
    assert abs(cgb.permutation_euler_form(fp) - want) < 1e-10 * abs(want)
    fp = random_even_even_model(8)
    want = cgb.euler_form_coefficient(fp)
    assert abs(cgb.permutation_euler_form(fp) - want) < 1e-8 * max(1.0, abs(want))


def test_permutation_euler_form_zero_curvature():
    assert cgb.permutation_euler_form(fol.preset("flat-torus-product")) == 0.0


def test_permutation_euler_form_guards():
    with pytest.raises(cgb.CgbArgumentError):
        cgb.permutation_euler_form(fol.FoliationPoint(3, 1))
    with pytest.raises(cgb.CgbArgumentError):
        cgb.permutation_euler_form(fol.FoliationPoint(8, 0))
