import numpy as np
import pytest

from oracles import central_eps_derivative

from rdslab.errors import ConfigError
from rdslab.maps import (
    FamilyKind,
    MapFamily,
    TrigPoly,
    branch_preimages,
    map_jet,
    map_lift,
    weight_jet,
)


def test_doubling_jet_closed_form(doubling_family):
    jet = map_jet(doubling_family, 0, 0.0, 0.25)
    assert jet.T == pytest.approx(0.5, abs=1e-15)
    assert jet.Tx == pytest.approx(2.0, abs=1e-15)
    assert jet.Te == pytest.approx(np.sin(2 * np.pi * 0.5), abs=1e-15)


def test_composed_eps_derivative_is_perturbation_at_image():
    fam = MapFamily(
        FamilyKind.COMPOSED, 2, [TrigPoly()], [TrigPoly(sin=(1.0,))], 0.05
    )
    jet = map_jet(fam, 0, 0.0, 0.25)
    # chain rule at eps=0: d/deps T = S(T_base(x)); here S(0.5) = sin(pi) = 0
    assert jet.Te == pytest.approx(0.0, abs=1e-15)


def test_space_derivative_closed_form(bent_family):
    jet = map_jet(bent_family, 0, 0.0, 0.0)
    assert jet.Tx == pytest.approx(2.0 + 0.2 * np.pi, rel=1e-15)


def test_jet_periodicity(default_family):
    a = map_jet(default_family, 1, 0.03, 0.37)
    b = map_jet(default_family, 1, 0.03, 1.37)
    for field in ("T", "Tx", "Te", "Txe", "Txx"):
        assert getattr(a, field) == pytest.approx(getattr(b, field), abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.05, -0.08])
@pytest.mark.parametrize("symbol", [0, 1])
def test_jet_eps_derivatives_match_finite_differences(default_family, symbol, eps):
    xs = np.linspace(0.0, 1.0, 17)[:-1]

    te = central_eps_derivative(
        lambda e: map_lift(default_family, symbol, e, xs), eps, 1e-5
    )
    jet = map_jet(default_family, symbol, eps, xs)
    assert np.max(np.abs(te - jet.Te)) < 1e-10

    txe = central_eps_derivative(
        lambda e: map_jet(default_family, symbol, e, xs).Tx, eps, 1e-5
    )
    assert np.max(np.abs(txe - jet.Txe)) < 1e-9


def test_jet_finite_difference_second_order(default_family):
    # the parameter enters affinely, so central differences agree with the
    # jet up to roundoff already at moderate steps (order h^2 is trivial)
    xs = np.array([0.123, 0.5, 0.82])
    jet = map_jet(default_family, 0, 0.02, xs)

    def err(h):
        fd = (
            map_lift(default_family, 0, 0.02 + h, xs)
            - map_lift(default_family, 0, 0.02 - h, xs)
        ) / (2 * h)
        return np.max(np.abs(fd - jet.Te))

    assert err(2e-4) < 1e-10
    assert err(1e-4) < 1e-10


def test_weight_jet_doubling(doubling_family):
    # S(x) = 0.2 sin(2 pi x); at eps=0 on the doubling map g = 1/2 and the
    # derivative-operator coefficients are nonzero only through S
    g, J, v = weight_jet(doubling_family, 0, 0.0, 0.3)
    assert g == pytest.approx(0.5, abs=1e-15)
    assert v == pytest.approx(-0.2 * np.sin(2 * np.pi * 0.6) / 2.0, rel=1e-12)


def test_weight_jet_rigid_drift(drift_family):
    g, J, v = weight_jet(drift_family, 0, 0.0, 0.77)
    assert g == pytest.approx(0.5, abs=1e-15)
    assert v == pytest.approx(-0.5, abs=1e-15)
    assert J == pytest.approx(0.0, abs=1e-15)


def test_weight_jet_matches_finite_differences(bent_family):
    # symbolic (g, J, v) against central differences in eps at step 1e-6
    x = np.array([0.3])
    g, J, v = weight_jet(bent_family, 0, 0.0, x)

    def gfun(e):
        return 1.0 / np.abs(map_jet(bent_family, 0, e, x).Tx)

    dg = (gfun(1e-6) - gfun(-1e-6)) / 2e-6
    jet = map_jet(bent_family, 0, 0.0, x)
    gprime_x = central_eps_derivative(
        lambda h: 1.0 / np.abs(map_jet(bent_family, 0, 0.0, x + h).Tx), 0.0, 1e-6
    )
    expected_J = (dg + v * gprime_x) / g
    assert np.abs(v + jet.Te / jet.Tx).max() < 1e-14
    assert np.abs(J - expected_J).max() < 1e-7


def test_branch_preimages_doubling(doubling_family):
    ys = branch_preimages(doubling_family, 0, 0.0, 0.5).ravel()
    assert sorted(ys) == pytest.approx([0.25, 0.75], abs=1e-14)
    ys0 = branch_preimages(doubling_family, 0, 0.0, 0.0).ravel()
    assert sorted(ys0) == pytest.approx([0.0, 0.5], abs=1e-14)


def test_branch_preimages_nonlinear_residual(bent_family):
    xs = np.linspace(0.0, 1.0, 23)[:-1] + 0.37 / 23
    ys = branch_preimages(bent_family, 0, 0.03, xs)
    assert ys.shape == (2, xs.size)
    for row in ys:
        img = map_jet(bent_family, 0, 0.03, row).T
        dist = np.abs(np.mod(img - xs + 0.5, 1.0) - 0.5)
        assert np.max(dist) <= 1e-13
    # pairwise distinct branches
    assert np.min(np.abs(np.mod(ys[0] - ys[1] + 0.5, 1.0) - 0.5)) > 0.1


def test_expansion_certificate_value(default_family):
    # certified bound is a true lower bound for |T'| on a fine grid
    xs = np.linspace(0.0, 1.0, 10000)
    for sym in (0, 1):
        for eps in (-0.1, 0.0, 0.1):
            tx = map_jet(default_family, sym, eps, xs).Tx
            assert np.min(np.abs(tx)) >= default_family.expansion - 1e-12
    assert default_family.expansion > 1.0


def test_expansion_certificate_rejects_contracting_family():
    with pytest.raises(ConfigError):
        MapFamily(
            FamilyKind.ADDITIVE, 2, [TrigPoly(sin=(0.3,))], [TrigPoly(sin=(3.0,))], 0.1
        )


def test_eps_range_enforced(default_family):
    with pytest.raises(ValueError):
        map_jet(default_family, 0, 0.2, 0.1)


def test_symbol_range_enforced(default_family):
    with pytest.raises(ValueError):
        map_jet(default_family, 5, 0.0, 0.1)


def test_drift_symbol_requires_single_base(default_family, bent_family):
    with pytest.raises(ValueError):
        map_jet(default_family, 0.25, 0.0, 0.1)
    jet = map_jet(bent_family, 0.25, 0.0, 0.0)
    base = map_jet(bent_family, 0, 0.0, 0.0)
    assert jet.T == pytest.approx((base.T + 0.25) % 1.0, abs=1e-12)
