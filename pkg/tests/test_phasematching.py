import math

import numpy as np
import pytest

from spdcsim.dispersion import CrystalSpec, SellmeierSet
from spdcsim.errors import DomainError, NoPhaseMatchingError
from spdcsim.phasematching import (SourceGeometry, angle_for_wavelength, central_wavelengths, conjugate_wavelength,
                                   degeneracy_angle, kz_extraordinary, longitudinal_mismatch, refract, tuning_curve,
                                   unrefract, with_pump_axis_angle)


def test_refract_examples():
    assert refract(0.0, 1.6) == 0.0
    assert refract(3.0, 1.0) == pytest.approx(3.0, abs=1e-13)
    assert refract(3.0, 1.65) == pytest.approx(math.degrees(math.asin(math.sin(math.radians(3)) / 1.65)), abs=1e-12)
    assert refract(3.0, 1.65) == pytest.approx(1.82, abs=0.01)
    with pytest.raises(DomainError):
        refract(3.0, 0.9)


@pytest.mark.parametrize("angle", [0.0, 0.5, 3.0, 10.0, 35.0])
def test_refract_round_trip(angle):
    assert unrefract(refract(angle, 1.66), 1.66) == pytest.approx(angle, abs=1e-12)


def test_geometry_validation():
    with pytest.raises(DomainError):
        SourceGeometry(pump_waist=0)
    with pytest.raises(DomainError):
        SourceGeometry(external_emission_angle=95)
    with pytest.raises(DomainError):
        SourceGeometry(emission_plane="sideways")


def test_mismatch_near_zero_at_cut_angle(crystal, geometry):
    assert abs(longitudinal_mismatch(crystal, geometry, 1550, 1550, 29.67)) < 0.02


def test_mismatch_large_at_wrong_angle(crystal):
    collinear = SourceGeometry(external_emission_angle=0.0)
    dk = longitudinal_mismatch(crystal, collinear, 1550, 1550, 20.0)
    assert abs(dk) > 50 * math.pi / (crystal.length * 1e3)


def test_mismatch_isotropic_collinear():
    flat = SellmeierSet(2.25, 0.0, 0.0, 0.0, 0.2, 2.6)
    c = CrystalSpec(sellmeier_o=flat, sellmeier_e=flat)
    g = SourceGeometry(external_emission_angle=0.0, pump_wavelength=780.0)
    n = 1.5
    for ls, li in [(1500.0, 1650.0), (1550.0, 1550.0), (1400.0, 1700.0)]:
        expected = 2 * math.pi * (n / 0.78 - n / (ls * 1e-3) - n / (li * 1e-3))
        assert longitudinal_mismatch(c, g, ls, li, 33.0) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_kz_extraordinary_satisfies_index_ellipsoid():
    no, ne, k0, theta = 1.65, 1.55, 4.0, math.radians(30)
    qx, qy = 0.2, -0.1
    kz, gx, gy = kz_extraordinary(no, ne, k0, theta, qx, qy)
    c = (math.sin(theta), 0.0, math.cos(theta))
    kc = qx * c[0] + kz * c[2]
    k2 = qx * qx + qy * qy + kz * kz
    assert kc ** 2 / no ** 2 + (k2 - kc ** 2) / ne ** 2 == pytest.approx(k0 ** 2, rel=1e-14)
    h = 1e-6
    fd = (kz_extraordinary(no, ne, k0, theta, qx + h, qy)[0] - kz_extraordinary(no, ne, k0, theta, qx - h, qy)[0]) / (2 * h)
    assert gx == pytest.approx(fd, rel=1e-7)


def test_degenerate_central_wavelengths(crystal, geometry):
    theta = degeneracy_angle(crystal, geometry)
    lo, le = central_wavelengths(crystal, geometry, theta)
    assert lo == pytest.approx(1550.0, abs=1e-3)
    assert le == pytest.approx(1550.0, abs=1e-3)
    # fixed point: re-solving at the same angle returns the same pair
    assert central_wavelengths(crystal, geometry, theta) == (lo, le)


def test_nondegenerate_pair_and_labels(crystal, geometry):
    theta = angle_for_wavelength(crystal, geometry, 1538.0)
    lo, le = central_wavelengths(crystal, geometry, theta)
    assert lo == pytest.approx(1538.0, abs=3)
    assert le == pytest.approx(1561.0, abs=3)
    assert lo < le
    assert abs(longitudinal_mismatch(crystal, geometry, lo, le, theta)) < 1e-4
    # exchanging the polarization labels does not phase match
    assert abs(longitudinal_mismatch(crystal, geometry, le, lo, theta)) > 10 * 1e-4


def test_energy_conservation_and_tolerance(crystal, geometry):
    tc = tuning_curve(crystal, geometry, np.linspace(29.0, 29.77, 25))
    assert len(tc) == 25 and not tc.skipped
    for p in tc:
        lp = 1 / (1 / p.lambda_o + 1 / p.lambda_e)
        assert abs(lp - 775.0) / 775.0 < 1e-12
        assert p.residual_mismatch < 1e-4


def test_tuning_curve_empty(crystal, geometry):
    tc = tuning_curve(crystal, geometry, [])
    assert len(tc) == 0 and tc.skipped == []


def test_tuning_curve_reports_failures(crystal):
    g = SourceGeometry(external_emission_angle=20.0)
    tc = tuning_curve(crystal, g, [29.0, 29.5])
    assert len(tc) == 0
    assert [t for t, _ in tc.skipped] == [29.0, 29.5]


def test_branch_separation_monotone(crystal, geometry):
    theta0 = degeneracy_angle(crystal, geometry)
    below = tuning_curve(crystal, geometry, np.linspace(theta0 - 1.0, theta0, 101))
    sep = np.array([p.lambda_e - p.lambda_o for p in below])
    assert np.all(np.diff(sep) < 0)
    assert np.all(sep >= -1e-5)  # solver tolerance on both branches
    above = tuning_curve(crystal, geometry, np.linspace(theta0, theta0 + 1.0, 101))
    sep = np.array([p.lambda_o - p.lambda_e for p in above])
    assert np.all(np.diff(sep) > 0)


def test_continuity_small_steps(crystal, geometry):
    tc = tuning_curve(crystal, geometry, 29.6 + 0.01 * np.arange(20))
    lo = np.array([p.lambda_o for p in tc])
    assert np.all(np.abs(np.diff(lo)) < 5)


def test_collinear_degeneracy_differs(crystal, geometry):
    a = degeneracy_angle(crystal, geometry)
    b = degeneracy_angle(crystal, SourceGeometry(external_emission_angle=0.0))
    assert abs(a - b) > 0.1


def test_unreachable_phase_matching(crystal):
    g = SourceGeometry(pump_wavelength=400.0, external_emission_angle=45.0)
    with pytest.raises(NoPhaseMatchingError):
        degeneracy_angle(crystal, g)


def test_no_phase_matching_in_window(crystal, geometry):
    with pytest.raises(NoPhaseMatchingError):
        central_wavelengths(crystal, geometry, 25.0)


def test_emission_plane_choice_changes_angle(crystal):
    perp = degeneracy_angle(crystal, SourceGeometry())
    principal = degeneracy_angle(crystal, SourceGeometry(emission_plane="principal"))
    assert abs(perp - principal) > 0.5


def test_with_pump_axis_angle(crystal, geometry):
    c = with_pump_axis_angle(crystal, 29.9, 775.0)
    assert c.pump_axis_angle(775.0) == pytest.approx(29.9, abs=1e-10)


def test_conjugate_wavelength():
    assert conjugate_wavelength(775.0, 1538.0) == pytest.approx(1562.19, abs=0.01)
    assert conjugate_wavelength(775.0, 1550.0) == pytest.approx(1550.0, abs=1e-9)
