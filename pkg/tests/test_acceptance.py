"""Acceptance criteria, each run at its stated tolerance.

Every ``test_criterion_NN_*`` contributes to the one-line verdict for
criterion ``NN`` printed in the terminal summary (see ``conftest.py``).
"""

import json
import math
import os
import subprocess
import sys
import time

import mpmath
import numpy as np
import pytest

from gaussperim import cube as cb
from gaussperim import gaussian
from gaussperim.certify import divergence_rel_error, gradient_rel_error, sandwich_violations
from gaussperim.estimators import (
    coarea_check,
    default_delta,
    log_concavity_probe,
    measure_mc,
    perimeter_coarea_fd_profile,
    perimeter_divergence,
    perimeter_divergence_profile,
    profile_verdicts,
)
from gaussperim.gaussian import TruncatedSpace, sample
from gaussperim.quadrature import halfspace_perimeter, perimeter_quadrature_2d, standard_disk_perimeter
from gaussperim.shapes import Ball, Ellipsoid, Halfspace, SublevelSet, ball_thresholds

STD2 = TruncatedSpace("explicit:1,1", 2)
PHI0 = 1.0 / math.sqrt(2.0 * math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)


@pytest.fixture
def single_thread(monkeypatch):
    monkeypatch.setenv(gaussian.THREADS_ENV, "1")


@pytest.fixture(scope="module")
def cube_family():
    return cb.CubeFamily.solve(10**4)


# -- 1 ------------------------------------------------------------------------------


def test_criterion_01_halfspace_oracle(single_thread, record_property):
    h = Halfspace(a=(1.0, 0.0))
    t0 = time.perf_counter()
    est = perimeter_divergence(h, STD2, 0.0, 10**6, seed=101)
    elapsed = time.perf_counter() - t0
    quad = perimeter_quadrature_2d(h, STD2, 0.0).value
    record_property("detail", f"{est.value:.6f} +- {est.std_error:.2e} vs {PHI0:.6f}; {elapsed:.2f}s")
    assert abs(quad - PHI0) < 1e-12 and abs(halfspace_perimeter(h, STD2, 0.0) - PHI0) < 1e-15
    assert 4e-4 < est.std_error < 6e-4
    assert abs(est.value - PHI0) <= 3 * est.std_error
    assert elapsed < 10.0


# -- 2 ------------------------------------------------------------------------------


def test_criterion_02_ball_oracle(record_property):
    est = perimeter_divergence(Ball(), STD2, 1.0, 10**6, seed=202)
    ref = math.exp(-0.5)
    rho = np.linspace(0.3, 3.0, 10)
    quad_err = max(abs(perimeter_quadrature_2d(Ball(), STD2, r * r).value - standard_disk_perimeter(r)) for r in rho)
    record_property("detail", f"{est.value:.5f} +- {est.std_error:.1e} vs {ref:.5f}; quadrature max err {quad_err:.1e}")
    assert abs(est.value - ref) <= 3 * est.std_error
    assert quad_err <= 1e-10


# -- 3 ------------------------------------------------------------------------------


def agreement_cases():
    yield "halfspace", Halfspace(a=(1.0, 0.0)), STD2, np.linspace(-2.0, 2.0, 20)
    yield "ball", Ball(), STD2, np.linspace(0.2, 3.0, 20) ** 2
    space = TruncatedSpace("explicit:1,0.5", 2)
    yield "ellipse", Ellipsoid(t=(1.0, 0.5), center=(0.2, 0.0)), space, np.linspace(0.1, 3.0, 20) ** 2


def test_criterion_03_estimator_agreement(record_property):
    passed, total, misses = 0, 0, []
    for i, (name, shape, space, levels) in enumerate(agreement_cases()):
        div = perimeter_divergence_profile(shape, space, levels, 10**6, seed=300 + i)
        fd = perimeter_coarea_fd_profile(shape, space, levels, default_delta(levels), 10**6, seed=310 + i)
        for lv, a, b, bias in zip(levels, div.estimates, fd.estimates, fd.extras["bias"]):
            total += 1
            if a.agrees_with(b, k=3.0, slack=bias):
                passed += 1
            else:
                misses.append(f"{name}@{lv:.3g}")
    record_property("detail", f"{passed}/{total} comparisons agree" + (f"; misses {', '.join(misses)}" if misses else ""))
    assert total == 60
    assert passed >= 57


# -- 4 ------------------------------------------------------------------------------


def test_criterion_04_coarea_identity(record_property):
    t0 = time.perf_counter()
    ball = coarea_check(Ball(), STD2, np.linspace(0.0, 20.0, 2001), 10**8, seed=400)
    half = coarea_check(Halfspace(a=(1.0, 0.0)), STD2, np.linspace(-6.0, 6.0, 1201), 10**7, seed=401)
    elapsed = time.perf_counter() - t0
    record_property(
        "detail",
        f"ball lhs {ball.lhs.value:.5f} rhs {ball.rhs.value:.5f} +- {ball.rhs.std_error:.1e}; "
        f"halfspace lhs {half.lhs.value:.5f} rhs {half.rhs.value:.5f} +- {half.rhs.std_error:.1e}; {elapsed:.1f}s",
    )
    for est in (ball.lhs, ball.rhs):
        assert abs(est.value - SQRT_2PI) <= 0.01 * SQRT_2PI
    for est in (half.lhs, half.rhs):
        assert abs(est.value - 1.0) <= 0.01
    assert elapsed < 60.0


# -- 5 ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ball_profile():
    radii = np.linspace(0.05, 4.0, 80)
    prof = perimeter_divergence_profile(Ball(), STD2, radii**2, 10**6, seed=500)
    r0, r1 = ball_thresholds(Ball(), STD2)
    return radii, prof, profile_verdicts(prof, radii, r0, r1)


def test_criterion_05_thresholds_exact(record_property):
    r0, r1 = ball_thresholds(Ball(), STD2)
    record_property("detail", f"(r0, r1) = ({r0!r}, {r1!r})")
    assert (r0, r1) == (1.0, math.sqrt(2.0))


def test_criterion_05_vanishing_low_end(ball_profile, record_property):
    radii, prof, _ = ball_profile
    e = prof.estimates[0]
    record_property("detail", f"p({radii[0]:.2f}) = {e.value:.4f}, 5 se = {5 * e.std_error:.4f}")
    assert e.value < 5 * e.std_error


def test_criterion_05_vanishing_high_end(ball_profile, record_property):
    radii, prof, _ = ball_profile
    e = prof.estimates[-1]
    record_property("detail", f"p({radii[-1]:.2f}) = {e.value:.2e}, 5 se = {5 * e.std_error:.2e}")
    assert e.value < 5 * e.std_error


def test_criterion_05_monotone_segments(ball_profile, record_property):
    radii, prof, v = ball_profile
    record_property("detail", f"violations at r = {list(v.monotone_violations)}; argmax r = {v.argmax_radius:.3f}")
    assert v.increasing_below_r0 and v.decreasing_above_r1


# -- 6 ------------------------------------------------------------------------------


def curvature_spaces():
    return [
        (TruncatedSpace("explicit:1,1", 2), (0.3, -0.4)),
        (TruncatedSpace("explicit:1,0.3", 2), (0.0, 0.5)),
        (TruncatedSpace("power:2", 10), tuple(np.linspace(0.3, -0.2, 10))),
        (TruncatedSpace("geometric:0.5", 8), tuple(np.linspace(0.1, 0.4, 8))),
    ]


def test_criterion_06_curvature_certification(record_property):
    worst_g, worst_d, violations, checked = 0.0, 0.0, 0, 0
    for i, (space, center) in enumerate(curvature_spaces()):
        n = space.n
        pts = sample(space, 100, seed=600 + i)
        shapes = (Ball(center=center), Ellipsoid(t=np.linspace(1.5, 0.25, n), center=center), Halfspace(a=np.linspace(1.0, -0.5, n)))
        for sh in shapes:
            worst_g = max(worst_g, gradient_rel_error(sh, space, pts))
            worst_d = max(worst_d, divergence_rel_error(sh, space, pts))
        field_pts = sample(space, 10**5, seed=610 + i)
        violations += sandwich_violations(Ball(center=center), space, field_pts)
        checked += field_pts.shape[0]
    record_property("detail", f"grad rel err {worst_g:.1e}, div rel err {worst_d:.1e}, sandwich {violations}/{checked}")
    assert worst_g <= 1e-6
    assert worst_d <= 1e-4
    assert violations == 0


# -- 7 ------------------------------------------------------------------------------


def test_criterion_07_zero_mean_divergence(record_property):
    cases = [
        ("ball-2d", Ball(), STD2),
        ("ball-10d", Ball(center=tuple(np.linspace(0.3, -0.2, 10))), TruncatedSpace("power:2", 10)),
        ("halfspace-2d", Halfspace(a=(1.0, 0.0)), STD2),
        ("halfspace-10d", Halfspace(a=tuple(np.linspace(1, -1, 10))), TruncatedSpace("power:2", 10)),
    ]
    ratios = {}
    for i, (name, sh, space) in enumerate(cases):
        est = perimeter_divergence(sh, space, math.inf, 10**6, seed=700 + i)
        ratios[name] = abs(est.value) / est.std_error
    record_property("detail", ", ".join(f"{k} {v:.2f} se" for k, v in ratios.items()))
    assert all(r < 4 for r in ratios.values())


# -- 8 ------------------------------------------------------------------------------


def test_criterion_08_solver_residuals(record_property):
    t0 = time.perf_counter()
    fam = cb.CubeFamily.solve(10**6)
    worst = float(np.max(fam.residuals))
    record_property("detail", f"max residual {worst:.1e} over 10^6 thresholds; {time.perf_counter() - t0:.1f}s")
    assert worst <= 1e-12


def test_criterion_08_measure_lower_bound(cube_family, record_property):
    G = cb.cube_measure_column(cube_family)
    B = np.array([cb.cube_measure_lower_bound(n) for n in (1, 10, 100, 1000, 10**4)])
    col = cb.lower_bound_column(10**4)
    violations = int(np.count_nonzero(G < col))
    record_property("detail", f"{violations} violations for n <= 10^4")
    np.testing.assert_allclose(B, col[[0, 9, 99, 999, 9999]], rtol=1e-13)
    assert violations == 0


def test_criterion_08_perimeter_strictly_increasing(cube_family, record_property):
    P = cb.perimeter_column(cube_family)
    bad = np.nonzero(np.diff(P) <= 0)[0] + 2
    record_property(
        "detail",
        f"{bad.size} non-increasing steps" + (f", n in [{bad[0]}, {bad[-1]}]" if bad.size else "")
        + f"; P(C_19) = {P[18]:.6f}, P(C_452) = {P[451]:.6f}",
    )
    assert bad.size == 0


def _mp_perimeter(r, n):
    """``P(C_n)`` recomputed at 40 significant digits from the solved thresholds."""
    with mpmath.workdps(40):
        rs = [mpmath.mpf(float(x)) for x in r[:n]]
        p = [mpmath.erf(x / mpmath.sqrt(2)) for x in rs]
        c = [mpmath.sqrt(2 / mpmath.pi) * mpmath.exp(-x * x / 2) for x in rs]
        total = mpmath.fprod(p)
        return total * mpmath.fsum(ck / pk for ck, pk in zip(c, p))


def test_criterion_08_perimeter_margin(cube_family, record_property):
    a = cb.limit_lower_bound()
    r = cube_family.r
    with mpmath.workdps(40):
        gain = _mp_perimeter(r, 10**4) - _mp_perimeter(r, 10)
        k = range(11, 10**4 + 1)
        chain = mpmath.fsum(mpmath.mpf(float(r[j - 1])) / ((j + 1) * mpmath.log(j + 1) ** mpmath.mpf(1.5)) for j in k)
        required = mpmath.mpf(a.lo) * chain
        record_property("detail", f"gain {mpmath.nstr(gain, 6)} vs a * sum r_k t_k = {mpmath.nstr(required, 6)}")
        assert gain > required


def test_criterion_08_measure_mc_cross_check(cube_family, record_property):
    out = []
    for n in (1, 5, 20):
        space = TruncatedSpace("power:2", n)
        est = measure_mc(cube_family.body(n), space, 10**6, seed=800 + n)
        exact = cb.cube_measure(cube_family, n)
        out.append((n, abs(est.value - exact) / est.std_error))
    record_property("detail", ", ".join(f"n={n}: {z:.2f} se" for n, z in out))
    assert all(z <= 3 for _, z in out)


def test_criterion_08_alpha_m(cube_family, record_property):
    fam = cb.CubeFamily.solve(10**6)
    rows = [cb.alpha_m(fam, m) for m in (1, 10, 100, 1000, 10**4)]
    increasing = all(x.lower < y.lower and x.partial < y.partial for x, y in zip(rows, rows[1:]))
    a1000 = rows[3]
    record_property("detail", f"1 - alpha_1000 <= {1 - a1000.lower:.4f}, series tail bound {a1000.union_bound:.4f}")
    assert increasing
    assert all(r.partial <= 1 for r in rows)
    assert 1 - a1000.lower <= a1000.union_bound


def test_criterion_08_runtime(record_property):
    t0 = time.perf_counter()
    fam = cb.CubeFamily.solve(10**4)
    cb.cube_measure_column(fam)
    cb.perimeter_column(fam)
    cb.lower_bound_column(10**4)
    cb.limit_lower_bound()
    for n in (1, 5, 20):
        measure_mc(fam.body(n), TruncatedSpace("power:2", n), 10**6, seed=n)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{elapsed:.1f}s")
    assert elapsed < 120


# -- 9 ------------------------------------------------------------------------------


def test_criterion_09_growth_bracket(record_property):
    stars = {}
    for tol in (1e-8, 1e-10, 1e-12):
        fam = cb.CubeFamily.solve(10**6, tol)
        stars[tol] = fam.k_star
        ks = fam.k_star
        s = np.sqrt(np.log(fam.k[ks - 1 :] + 1.0))
        r = fam.r[ks - 1 :]
        assert np.all((s <= r) & (r <= 2 * s))
    record_property("detail", f"k* = {stars[1e-12]} (by tolerance: {stars})")
    assert len(set(stars.values())) == 1


# -- 10 -----------------------------------------------------------------------------


def test_criterion_10_log_concavity(record_property):
    t = np.linspace(0.2, 3.0, 15)
    bodies = {"unit ball": SublevelSet(Ball(), 1.0), "halfspace x1 < 1": SublevelSet(Halfspace(a=(1.0, 0.0)), 1.0)}
    worst = {}
    for i, (name, body) in enumerate(bodies.items()):
        rep = log_concavity_probe(body, STD2, t, 10**6, seed=1000 + i)
        assert not rep.vacuous and len(rep.rows) == 15
        interior = rep.rows[1:-1]
        worst[name] = max(r.second_difference / r.second_difference_se for r in interior)
        assert rep.verdict, name
    record_property("detail", ", ".join(f"{k}: max d2/se {v:.1f}" for k, v in worst.items()))


# -- 11 -----------------------------------------------------------------------------


RUNS = [
    ["profile", "--samples", "200000", "--sweep", "2,5,10", "--spectrum", "power:2"],
    ["coarea", "--samples", "200000"],
    ["cube", "--n-max", "10000"],
    ["convexity", "--samples", "200000"],
    ["validate", "--quick", "--samples", "20000"],
]


def _run(args, out, threads):
    env = {**os.environ, gaussian.THREADS_ENV: str(threads)}
    cmd = [sys.executable, "-m", "gaussperim.cli", *args, "--out", str(out)]
    proc = subprocess.run(cmd, env=env, capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    files = {name: (out / name).read_bytes() for name in sorted(os.listdir(out))}
    return files, proc.stdout


def test_criterion_11_determinism(tmp_path, record_property):
    compared = 0
    for args in RUNS:
        tag = args[0]
        one, out1 = _run(args, tmp_path / f"{tag}-1", 1)
        eight, out8 = _run(args, tmp_path / f"{tag}-8", 8)
        again, _ = _run(args, tmp_path / f"{tag}-1b", 1)
        assert one and one == eight == again, tag
        assert out1 == out8, tag
        for name, blob in one.items():
            if name.endswith(".json"):
                doc = json.loads(blob)
                assert doc["version"] and doc["config"]["command"] == tag
            compared += 1
    record_property("detail", f"{compared} files byte-identical across thread counts 1 and 8")
