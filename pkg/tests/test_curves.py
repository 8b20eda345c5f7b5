import math

import numpy as np
import pytest

from tricurves import (
    DistributionSpec,
    EnsembleSpec,
    ValidationError,
    coupling_g,
    curve_density,
    estimate_ids,
    limit_measure_integral,
    mean_log_coupling,
    real_support_sigma,
    sample,
    stieltjes,
    trace_curve,
)
from tricurves.curves import (
    default_bump_panel,
    equipotential_threshold,
    gaussian_bump,
    load_curve_model,
    poly_cutoff,
    save_curve_model,
)
from tricurves.spectral import phi_many

from conftest import fig1b_spec, free_spec


def drifted_free_spec(g0: float, seed=0) -> EnsembleSpec:
    """xi = -g0, eta = +g0: couplings stay at c = 1, zero diagonal."""
    return EnsembleSpec.constants(-g0, g0, 0.0, seed=seed)


def two_point_spec(t: float, seed=5) -> EnsembleSpec:
    """Binary diagonal disorder with tunable drift t; c = 1 for every t,
    so a single reference measure serves all drift values."""
    return EnsembleSpec(
        DistributionSpec.constant(-t),
        DistributionSpec.constant(t),
        DistributionSpec.two_point(0.0, 1.5, 0.5),
        seed=seed,
    )


@pytest.fixture(scope="module")
def binary_ids():
    return estimate_ids(two_point_spec(0.0), 4000, 4)


# -- coupling ---------------------------------------------------------------------

def test_coupling_g_trivial_cases():
    assert coupling_g(EnsembleSpec.constants(0.7, 0.7, 0.0, seed=1)) == 0.0
    assert coupling_g(EnsembleSpec.constants(0.0, 1.0, 0.0, seed=1)) == 0.5


def test_coupling_g_fig1b_value():
    # (1/2)(E log Uni[1/2,3/2] - E log Uni[0,1]); the integrals give
    # (3/2 log(3/2) - 1/2 log(1/2) - 1 + 1) / 2 = 0.4773856...
    g = coupling_g(fig1b_spec())
    exact = 0.5 * (1.5 * math.log(1.5) - 0.5 * math.log(0.5) - 1.0 + 1.0)
    assert g == pytest.approx(exact, rel=1e-12)
    assert g == pytest.approx(0.4773856262, abs=1e-9)
    # Monte Carlo oracle
    seq = sample(fig1b_spec(seed=4242), 200_000)
    mc = 0.5 * float(np.mean(seq.eta[:-1]) - np.mean(seq.xi[:-1]))
    assert g == pytest.approx(mc, abs=5e-3)


def test_coupling_rejects_heavy_and_raw():
    heavy = EnsembleSpec(
        DistributionSpec.cauchy(0, 1),
        DistributionSpec.constant(0),
        DistributionSpec.constant(0),
        seed=1,
    )
    with pytest.raises(ValidationError):
        coupling_g(heavy)
    raw = EnsembleSpec.raw_entries(
        DistributionSpec.uniform(-1, 1), DistributionSpec.uniform(-1, 1), DistributionSpec.uniform(0, 1), seed=1
    )
    with pytest.raises(ValidationError):
        coupling_g(raw)


def test_threshold_is_max_mean():
    spec = fig1b_spec()
    assert equipotential_threshold(spec) == pytest.approx(
        mean_log_coupling(spec) + abs(coupling_g(spec))
    )


# -- tracing ---------------------------------------------------------------------

def test_zero_coupling_gives_empty_curve(free_ids):
    model = trace_curve(free_ids, 0.0, mean_log_c=0.0)
    assert model.arcs == ()
    assert model.real_points == ()


def test_traced_points_satisfy_level_equation(fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    assert len(model.arcs) >= 1
    for arc in model.arcs:
        interior = slice(1, -1)
        zs = arc.x[interior] + 1j * arc.y[interior]
        gam = np.real(model.gamma(zs))
        assert np.max(np.abs(gam - abs(model.g))) < 1e-6
        # arcs are graphs over x, meet the axis at both ends
        assert np.all(np.diff(arc.x) > 0)
        assert arc.y[0] == 0.0 and arc.y[-1] == 0.0
        assert np.all(arc.y >= 0.0)


def test_curve_is_joukowski_ellipse_for_drifted_free_case():
    # constant couplings: the level set of the free growth rate is the
    # ellipse with semi-axes 2 cosh(g), 2 sinh(g) (foci at +-2)
    g0 = 0.5
    spec = drifted_free_spec(g0)
    ids = estimate_ids(spec, 5000, 2)
    model = trace_curve(ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    assert len(model.arcs) == 1
    arc = model.arcs[0]
    a_axis = 2.0 * math.cosh(g0)
    b_axis = 2.0 * math.sinh(g0)
    assert arc.a == pytest.approx(-a_axis, abs=2e-2)
    assert arc.a_prime == pytest.approx(a_axis, abs=2e-2)
    inside = arc.y > 0.05
    defect = (arc.x[inside] / a_axis) ** 2 + (arc.y[inside] / b_axis) ** 2
    assert np.max(np.abs(defect - 1.0)) < 2e-2


def test_endpoint_density_finite_limit_drifted_free_case():
    # smooth reference density: rho has a finite one-sided endpoint limit,
    # here |m(a)| / 2 pi with m the arcsine transform evaluated just off a
    g0 = 0.5
    spec = drifted_free_spec(g0)
    ids = estimate_ids(spec, 5000, 2)
    model = trace_curve(ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    arc = model.arcs[0]
    a = arc.a_prime  # right endpoint, 2 cosh(g0)
    exact = 1.0 / (2.0 * math.pi * math.sqrt(a * a - 4.0))
    tail = arc.rho[-6:-1]
    assert np.all(np.isfinite(tail))
    assert tail[-1] == pytest.approx(exact, rel=0.1)
    assert np.max(tail) / np.min(tail) < 1.3  # no blow-up approaching the end


# -- real support -----------------------------------------------------------------

def test_sigma_full_support_when_symmetric(binary_ids):
    # g = 0 with nondegenerate diagonal: the whole reference support is real
    model = trace_curve(binary_ids, 0.0, mean_log_c=0.0)
    assert model.sigma_mass() > 0.99
    # every sigma point exceeds the threshold by construction
    for lo, hi in model.sigma:
        mid = 0.5 * (lo + hi)
        assert float(np.real(model.gamma(mid))[0]) > 0.0


def test_sigma_empty_beyond_max_gamma(binary_ids):
    xs = np.linspace(binary_ids.support[0], binary_ids.support[1], 1200)
    gam = phi_many(binary_ids, xs.astype(complex))  # mean log c = 0
    g_hi = float(np.max(gam)) + 0.3
    sigma = real_support_sigma(binary_ids, g_hi)
    assert sigma == ()
    model = trace_curve(binary_ids, g_hi, mean_log_c=0.0)
    assert model.sigma == ()
    assert len(model.arcs) == 1  # one contour around the whole support


def test_phase_transition_onset_ordering(binary_ids):
    # gamma is strictly positive on the axis for binary diagonal disorder;
    # the curve is empty below min gamma and populated above it
    lo, hi = binary_ids.support
    xs = np.linspace(lo - 0.5, hi + 0.5, 1600)
    gam = np.real(phi_many(binary_ids, xs.astype(complex)))
    g_min = float(np.min(gam))
    assert g_min > 0.01
    below = trace_curve(binary_ids, 0.5 * g_min, mean_log_c=0.0)
    assert below.arcs == ()
    assert below.sigma_mass() > 0.99
    g_mid = g_min + 0.25 * (float(np.max(gam)) - g_min)
    mid = trace_curve(binary_ids, g_mid, mean_log_c=0.0)
    assert len(mid.arcs) >= 1
    assert mid.sigma  # real component coexists
    g_hi = float(np.max(gam)) + 0.3
    high = trace_curve(binary_ids, g_hi, mean_log_c=0.0)
    assert len(high.arcs) == 1 and high.sigma == ()


def test_sigma_disjoint_from_contour_interiors(fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    for arc in model.arcs:
        for lo, hi in model.sigma:
            assert hi <= arc.a + 1e-9 or lo >= arc.a_prime - 1e-9


# -- density and integrals -----------------------------------------------------------

def test_density_far_field(fig1b_ids):
    z = complex(0.3, 50.0 * fig1b_ids.support_radius)
    assert curve_density(fig1b_ids, z) == pytest.approx(1.0 / (2.0 * math.pi * abs(z)), rel=1e-3)


def test_density_conjugation_symmetric(fig1b_ids):
    z = 0.7 + 0.6j
    assert abs(stieltjes(fig1b_ids, z)) == pytest.approx(abs(stieltjes(fig1b_ids, np.conj(z))))


def test_density_rejects_lower_half(fig1b_ids):
    with pytest.raises(ValidationError):
        curve_density(fig1b_ids, 0.5 - 0.5j)
    with pytest.raises(ValidationError):
        curve_density(fig1b_ids, 0.5)


def test_total_mass_near_one(fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    assert limit_measure_integral(model, lambda z: 1.0) == pytest.approx(1.0, abs=0.02)
    assert model.total_mass() == pytest.approx(1.0, abs=0.02)


def test_odd_function_integrates_to_zero(fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    val = limit_measure_integral(model, lambda z: complex(z).imag)
    assert abs(val) < 1e-10


def test_separated_bump_has_no_mass(fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    top = max(float(np.max(arc.y)) for arc in model.arcs)
    f = gaussian_bump(complex(0.0, top + 5.0), 0.4)
    assert limit_measure_integral(model, f) < 0.01


def test_bump_panel_and_poly_cutoff(fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    panel = default_bump_panel(model)
    assert len(panel) == 10
    for f in panel:
        assert 0.0 <= limit_measure_integral(model, f) <= 1.0
    p = poly_cutoff(2, 0, 3.0)
    assert p(2.0) == pytest.approx(4.0 * math.exp(-4.0 / 18.0))


# -- serialization ---------------------------------------------------------------

def test_model_round_trip(tmp_path, fig1b_ids):
    spec = fig1b_spec()
    model = trace_curve(fig1b_ids, coupling_g(spec), mean_log_c=mean_log_coupling(spec))
    path = tmp_path / "model.txt"
    save_curve_model(model, path)
    again = load_curve_model(path, fig1b_ids)
    assert again.g == model.g
    assert again.threshold == model.threshold
    assert again.sigma == model.sigma
    assert len(again.arcs) == len(model.arcs)
    for a, b in zip(again.arcs, model.arcs):
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.rho, b.rho)
    assert again.total_mass() == pytest.approx(model.total_mass(), rel=1e-12)
