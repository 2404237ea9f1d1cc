"""Mean-zero Green function with a boundary log pole."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tmlab import assembly, green, spectrum, witness
from tmlab.errors import PreconditionError

PI = math.pi


@pytest.fixture(scope="module")
def pole_vertex(half_disk_refined):
    return witness.smooth_boundary_vertex(half_disk_refined, (1.0, 0.0))


@pytest.fixture(scope="module")
def solved(half_disk_refined, pole_vertex):
    return green.green_function(half_disk_refined, pole_vertex, alpha=0.0)


def test_solve_residual_recorded_and_tiny(solved):
    assert solved.residual <= 1e-10


def test_solution_is_mean_zero(half_disk_refined, solved):
    a = assembly.area(half_disk_refined)
    assert abs(assembly.mean(half_disk_refined, solved.values)) <= 1e-10 * a


def test_defining_equation_holds(half_disk_refined, solved):
    k = assembly.stiffness(half_disk_refined)
    m1 = assembly.mass_row_of_ones(half_disk_refined)
    a = assembly.area(half_disk_refined)
    rhs = -m1 / a
    rhs[solved.vertex] += 1.0
    lhs = k @ solved.values
    # The stiffness equation holds up to the mean-constraint multiplier,
    # which acts through the mass row of ones.
    resid = lhs - rhs
    coeff = (resid @ m1) / (m1 @ m1)
    assert np.max(np.abs(resid - coeff * m1)) <= 1e-9


def test_reciprocity_between_two_poles(half_disk_refined, pole_vertex):
    other = witness.smooth_boundary_vertex(
        half_disk_refined, (math.cos(0.7), math.sin(0.7))
    )
    g1 = green.green_function(half_disk_refined, pole_vertex)
    g2 = green.green_function(half_disk_refined, other)
    assert abs(g1.values[other] - g2.values[pole_vertex]) <= 1e-8


def test_dense_solver_oracle(half_disk):
    vtx = witness.smooth_boundary_vertex(half_disk, (1.0, 0.0))
    got = green.green_function(half_disk, vtx, alpha=0.0)
    n = half_disk.num_vertices
    k = assembly.stiffness(half_disk).toarray()
    m1 = assembly.mass_row_of_ones(half_disk)
    a = assembly.area(half_disk)
    dense = np.zeros((n + 1, n + 1))
    dense[:n, :n] = k
    dense[:n, n] = m1
    dense[n, :n] = m1
    rhs = np.concatenate([-m1 / a, [0.0]])
    rhs[vtx] += 1.0
    sol = np.linalg.solve(dense, rhs)
    assert np.max(np.abs(sol[:n] - got.values)) <= 1e-8


def test_corner_pole_rejected(half_disk_refined):
    corner = int(half_disk_refined.corner_vertex_indices()[0])
    with pytest.raises(PreconditionError):
        green.green_function(half_disk_refined, corner)


def test_alpha_at_threshold_rejected(half_disk_refined, pole_vertex):
    lam1 = spectrum.first_eigenpair(half_disk_refined, tol=1e-8).value
    with pytest.raises(PreconditionError):
        green.green_function(half_disk_refined, pole_vertex, alpha=lam1)


def test_alpha_continuity(half_disk_refined, pole_vertex, solved):
    lam1 = spectrum.first_eigenpair(half_disk_refined, tol=1e-8).value
    diffs = []
    for frac in (0.1, 0.2, 0.3):
        ga = green.green_function(half_disk_refined, pole_vertex,
                                  alpha=frac * lam1)
        diffs.append(float(np.max(np.abs(ga.values - solved.values))))
    assert diffs == sorted(diffs)
    assert diffs[0] <= 0.1


# ---------------------------------------------------------------------------
# constant extraction
# ---------------------------------------------------------------------------


def test_extract_recovers_synthetic_constant(half_disk_refined, pole_vertex):
    x0 = half_disk_refined.vertices[pole_vertex].copy()
    r = np.hypot(
        half_disk_refined.vertices[:, 0] - x0[0],
        half_disk_refined.vertices[:, 1] - x0[1],
    )
    values = np.where(r > 0, green.LOG_COEFF * np.log(np.maximum(r, 1e-300)),
                      0.0) + 0.7
    synthetic = green.GreenResult(
        values=values, vertex=pole_vertex, x0=x0, alpha=0.0,
        norm_l2_sq=0.0, residual=0.0,
    )
    a, report = green.extract_A(half_disk_refined, synthetic)
    assert abs(a - 0.7) <= 1e-10
    assert report["residual_rms"] <= 1e-10
    assert report["n_points"] >= 30


def test_extract_reports_annulus(half_disk_refined, solved):
    a, report = green.extract_A(half_disk_refined, solved, 0.1, 0.2)
    assert report["r_inner"] == 0.1
    assert report["r_outer"] == 0.2
    assert report["residual_rms"] > 0


def test_pole_shift_moves_constant_slightly(half_disk_refined):
    t1 = witness.smooth_boundary_vertex(
        half_disk_refined, (math.cos(0.4), math.sin(0.4))
    )
    t2 = witness.smooth_boundary_vertex(
        half_disk_refined, (math.cos(0.5), math.sin(0.5))
    )
    a1, _ = green.extract_A(half_disk_refined,
                            green.green_function(half_disk_refined, t1))
    a2, _ = green.extract_A(half_disk_refined,
                            green.green_function(half_disk_refined, t2))
    assert abs(a2 - a1) <= 0.1 * 0.2


def test_log_coefficient_fit(half_disk_refined, solved):
    c_log, c0, n = green.log_coefficient_fit(
        half_disk_refined, solved, 0.1, 0.3
    )
    assert n >= 30
    assert abs(c_log - green.LOG_COEFF) <= 0.15 * abs(green.LOG_COEFF)


def test_sigma_field_zero_for_synthetic_log(half_disk_refined, pole_vertex):
    x0 = half_disk_refined.vertices[pole_vertex].copy()
    r = np.hypot(
        half_disk_refined.vertices[:, 0] - x0[0],
        half_disk_refined.vertices[:, 1] - x0[1],
    )
    values = np.where(r > 0, green.LOG_COEFF * np.log(np.maximum(r, 1e-300)),
                      0.0) + 0.7
    synthetic = green.GreenResult(
        values=values, vertex=pole_vertex, x0=x0, alpha=0.0,
        norm_l2_sq=0.0, residual=0.0,
    )
    sigma = green.sigma_field(half_disk_refined, synthetic, 0.7)
    assert np.max(np.abs(sigma)) <= 1e-10
    assert sigma[pole_vertex] == 0.0


def test_decomposition_summary(half_disk_refined, solved):
    d = green.green_decomposition(half_disk_refined, solved)
    assert len(d["A_estimates"]) == 2
    assert d["A_spread"] >= 0
    assert d["residual"] <= 1e-10
    assert len(d["A_reports"]) == 2
    assert np.all(np.isfinite(d["sigma"]))
