import math

import numpy as np
import pytest
from scipy.stats import norm

from gaussperim.errors import ConfigError, CoverageError, NumericalFailure
from gaussperim.estimate import Estimate, Profile
from gaussperim.estimators import (
    boundary_mass,
    coarea_check,
    default_delta,
    density_k,
    dimension_sweep,
    log_concavity_probe,
    measure_mc,
    perimeter_coarea_fd,
    perimeter_coarea_fd_profile,
    perimeter_divergence,
    perimeter_divergence_profile,
    profile_verdicts,
)
from gaussperim.gaussian import TruncatedSpace
from gaussperim.shapes import Ball, Halfspace, SublevelSet

STD2 = TruncatedSpace("explicit:1,1", 2)
PHI0 = 1 / math.sqrt(2 * math.pi)


# -- records ------------------------------------------------------------------------


def test_estimate_validation():
    with pytest.raises(ValueError):
        Estimate(1.0, -0.1, 10, 0, "divergence", 0)
    with pytest.raises(ValueError):
        Estimate(1.0, 0.1, 10, 0, "guess", 0)
    assert not Estimate(1.0, 0.1, 1000, 1, "divergence", 0).valid
    assert Estimate(1.0, 0.1, 10**4, 1, "divergence", 0).valid


def test_agrees_with():
    a = Estimate(1.0, 0.1, 10, 0, "divergence", 0)
    assert a.agrees_with(1.29) and not a.agrees_with(1.31)
    b = Estimate(1.4, 0.1, 10, 0, "coarea-fd", 0)
    assert a.agrees_with(b)  # 0.4 <= 3 * sqrt(0.02)


def test_profile_validation_and_csv():
    e = Estimate(0.5, 0.01, 10, 0, "divergence", 1)
    with pytest.raises(ConfigError):
        Profile((1.0, 1.0), (e, e))
    with pytest.raises(ConfigError):
        Profile((1.0,), (e, e))
    text = Profile((1.0, 4.0), (e, e)).to_csv(["hello"], abscissa=(1.0, 2.0))
    assert text.splitlines() == ["# hello", "r,value,std_error", "1.0,0.5,0.01", "2.0,0.5,0.01"]


# -- divergence estimator -----------------------------------------------------------------


def test_halfspace_divergence_oracle():
    est = perimeter_divergence(Halfspace(a=(1.0, 0.0)), STD2, 0.0, 10**6, 1)
    assert est.method == "divergence" and est.n_samples == 10**6
    assert est.std_error == pytest.approx(5e-4, rel=0.3)
    assert est.agrees_with(PHI0)


def test_ball_divergence_oracle():
    est = perimeter_divergence(Ball(), STD2, 1.0, 10**6, 2)
    assert est.agrees_with(math.exp(-0.5))


def test_level_below_infimum_is_exactly_zero():
    for sh in (Ball(), Halfspace()):
        est = perimeter_divergence(sh, STD2, -math.inf, 10**4, 0)
        assert est.value == 0.0 and est.std_error == 0.0
    assert perimeter_divergence(Ball(), STD2, -1.0, 10**4, 0).value == 0.0


def test_minimum_sample_count():
    with pytest.raises(ConfigError):
        perimeter_divergence(Ball(), STD2, 1.0, 999, 0)


def test_profile_matches_single_level_calls():
    levels = [0.25, 1.0, 2.25]
    prof = perimeter_divergence_profile(Ball(), STD2, levels, 20000, 5)
    for lv, e in zip(levels, prof.estimates):
        single = perimeter_divergence(Ball(), STD2, lv, 20000, 5)
        assert e.value == pytest.approx(single.value, rel=1e-12)
    assert len(prof.step_std_errors) == 2


class FlaggedBall(Ball):
    """Ball that declares points with x_1 > cut degenerate."""

    def __init__(self, cut):
        super().__init__()
        object.__setattr__(self, "cut", cut)

    def field(self, space, x):
        f = super().field(space, x)
        return f._replace(degenerate=f.degenerate | (x[:, 0] > self.cut))


def test_rejected_points_are_replaced_and_counted():
    est = perimeter_divergence(FlaggedBall(4.0), STD2, 1.0, 10**5, 3)
    assert est.n_samples == 10**5
    assert 0 < est.n_rejected < 1e-3 * 10**5
    assert est.valid


def test_excessive_rejection_is_a_numerical_failure():
    with pytest.raises(NumericalFailure):
        perimeter_divergence(FlaggedBall(2.5), STD2, 1.0, 10**5, 3)


def test_non_finite_summand_is_a_numerical_failure():
    class Broken(Halfspace):
        def field(self, space, x):
            f = super().field(space, x)
            return f._replace(div_nu=np.where(x[:, 0] > 2, np.inf, f.div_nu))

    with pytest.raises(NumericalFailure):
        perimeter_divergence(Broken(), STD2, 10.0, 10**4, 0)


# -- coarea finite differences ----------------------------------------------------------------


def test_coarea_fd_halfspace():
    prof = perimeter_coarea_fd_profile(Halfspace(), STD2, [0.0], 0.01, 10**6, 4)
    est = prof.estimates[0]
    assert est.method == "coarea-fd"
    assert est.agrees_with(PHI0, slack=prof.extras["bias"][0])


def test_coarea_fd_ball():
    est = perimeter_coarea_fd(Ball(), STD2, 1.0, 0.01, 10**6, 4)
    assert est.agrees_with(math.exp(-0.5), slack=1e-4)


def test_coarea_fd_bias_estimate_scales_with_delta_squared():
    # F(r) = Phi(r) for the halfspace, so the bias is delta^2 phi''(r) / 6
    biases = [perimeter_coarea_fd_profile(Halfspace(), STD2, [1.5], d, 10**6, 1).extras["bias"][0] for d in (0.2, 0.4)]
    assert biases[1] / biases[0] == pytest.approx(4.0, rel=0.35)


def test_default_delta():
    assert default_delta([0.0, 0.2, 0.3]) == pytest.approx(0.05)
    with pytest.raises(ConfigError):
        default_delta([1.0])
    with pytest.raises(ConfigError):
        perimeter_coarea_fd(Ball(), STD2, 1.0, 0.0, 10**4, 0)


# -- density and measures ------------------------------------------------------------------------


def test_density_halfspace():
    est = density_k(Halfspace(), STD2, 0.0, 0.01, 10**6, 6)
    assert est.agrees_with(PHI0, slack=1e-4)


@pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
def test_density_ball(t):
    est = density_k(Ball(), STD2, t, 0.01, 10**6, 7)
    assert est.agrees_with(math.exp(-t / 2) / 2, slack=1e-4)


def test_density_below_infimum():
    assert density_k(Ball(), STD2, -5.0, 0.1, 10**4, 0).value == 0.0


def test_measure_full_space_and_halfspace():
    full = measure_mc(lambda x: np.ones(x.shape[0], dtype=bool), STD2, 10**4, 0)
    assert full.value == 1.0 and full.std_error == 0.0
    half = measure_mc(lambda x: x[:, 0] < 0, STD2, 10**6, 1)
    assert half.method == "mc-measure"
    assert half.agrees_with(0.5)


def test_measure_of_sublevel_set():
    est = measure_mc(SublevelSet(Ball(), 1.0), STD2, 10**6, 2)
    assert est.agrees_with(1 - math.exp(-0.5))


def test_boundary_mass_shrinks():
    masses = boundary_mass(Ball(), STD2, 1.0, [0.1, 0.01, 0.001], 10**6, 3)
    vals = [m.value for m in masses]
    assert vals[0] > vals[1] > vals[2]
    k = math.exp(-0.5) / 2
    for eps, m in zip([0.1, 0.01], masses):
        assert abs(m.value - 2 * eps * k) < 3 * m.std_error + 2 * eps * 0.01


# -- coarea identity -------------------------------------------------------------------------------


def test_coarea_halfspace():
    chk = coarea_check(Halfspace(), STD2, np.linspace(-6, 6, 601), 10**6, 0)
    assert chk.lhs.value == 1.0
    assert chk.agree
    assert abs(chk.rhs.value - 1.0) < 3 * chk.rhs.std_error + chk.quadrature_bound


def test_coarea_ball_lhs():
    chk = coarea_check(Ball(), STD2, np.linspace(0, 20, 1001), 10**6, 1)
    assert chk.lhs.agrees_with(math.sqrt(2 * math.pi))
    assert chk.agree


def test_coarea_coverage_errors():
    with pytest.raises(CoverageError):
        coarea_check(Ball(), STD2, [1.0], 10**4, 0)
    with pytest.raises(CoverageError) as info:
        coarea_check(Ball(), STD2, np.linspace(0, 2, 5), 10**4, 0)
    assert info.value.outside_mass == pytest.approx(math.exp(-1), abs=0.02)


# -- log-concavity -----------------------------------------------------------------------------------


def test_concavity_unit_ball():
    t = np.linspace(0.2, 3.0, 8)
    rep = log_concavity_probe(SublevelSet(Ball(), 1.0), STD2, t, 10**5, 0)
    assert rep.verdict and not rep.vacuous
    for row in rep.rows:
        exact = 1 - math.exp(-row.t**2 / 2)
        assert abs(row.g - exact) < 4 * row.std_error


def test_concavity_halfspace():
    t = np.linspace(0.2, 3.0, 8)
    rep = log_concavity_probe(SublevelSet(Halfspace(), 1.0), STD2, t, 10**5, 0)
    assert rep.verdict
    for row in rep.rows:
        assert abs(row.g - norm.cdf(row.t)) < 4 * row.std_error


def test_concavity_exact_second_differences_are_negative():
    t = np.linspace(0.2, 3.0, 15)
    for g in (1 - np.exp(-t * t / 2), norm.cdf(t)):
        assert np.all(np.diff(np.log(g), 2) < 0)


def test_concavity_detects_non_log_concave_body():
    class Annulus:
        def contains(self, space, x):
            r = np.linalg.norm(x, axis=1)
            return (r < 0.3) | ((r > 1.0) & (r < 1.3))

    rep = log_concavity_probe(Annulus(), STD2, np.linspace(0.5, 3.0, 12), 10**5, 0)
    assert not rep.verdict


def test_concavity_vacuous_and_errors():
    rep = log_concavity_probe(SublevelSet(Ball(), 1.0), STD2, [0.5, 1.0], 10**4, 0)
    assert rep.verdict and rep.vacuous
    with pytest.raises(ConfigError):
        log_concavity_probe(SublevelSet(Ball(center=(5.0, 0.0)), 1.0), STD2, [0.5, 1.0, 2.0], 10**4, 0)
    with pytest.raises(NumericalFailure):
        log_concavity_probe(SublevelSet(Ball(), 1e-12), STD2, [0.01, 0.02, 0.03], 10**4, 0)
    with pytest.raises(ConfigError):
        log_concavity_probe(SublevelSet(Ball(), 1.0), STD2, [0.0, 1.0, 2.0], 10**4, 0)


# -- profile verdicts and sweeps --------------------------------------------------------------------


def test_profile_verdicts_on_synthetic_profile():
    r = np.array([0.5, 1.0, 1.5, 2.0])
    vals = [0.01, 0.6, 0.4, 0.001]
    est = tuple(Estimate(v, 0.01, 100, 0, "divergence", 0) for v in vals)
    ok = profile_verdicts(Profile(tuple(r * r), est, (0.01, 0.01, 0.01)), r, 1.0, 1.4)
    assert ok.increasing_below_r0 and ok.decreasing_above_r1 and ok.vanishing_low and ok.vanishing_high
    assert ok.argmax_radius == 1.0
    bad = [0.2, 0.1, 0.4, 0.5]
    est = tuple(Estimate(v, 0.01, 100, 0, "divergence", 0) for v in bad)
    v = profile_verdicts(Profile(tuple(r * r), est, (0.01, 0.01, 0.01)), r, 1.0, 1.4)
    assert not v.increasing_below_r0 and not v.decreasing_above_r1 and not v.vanishing_low
    assert v.monotone_violations == (1.0, 2.0)


def test_dimension_sweep_steps_shrink():
    rows = dimension_sweep(Ball(), "power:2", [2, 5, 10, 50], 1.0, 10**5, 0)
    assert [r.dim for r in rows] == [2, 5, 10, 50]
    assert all(b.trace > a.trace for a, b in zip(rows, rows[1:]))
    assert math.isnan(rows[0].step)
    assert abs(rows[-1].step) <= 3 * rows[-1].step_se
    with pytest.raises(ConfigError):
        dimension_sweep(Ball(), "power:2", [5, 2], 1.0, 10**4, 0)
