"""P1 operators: stiffness, mass, norms, means, projection."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tmlab import assembly
from tmlab.surface import DomainSpec, build_domain

PI = math.pi


def _p1_l2_sq_oracle(surface, u):
    """Independent closed form: ∫ (P1 u)² over each flat triangle.

    For nodal values v1, v2, v3 on a triangle of area A,
    ∫ u² = (A/6)(v1² + v2² + v3² + v1·v2 + v1·v3 + v2·v3).
    Valid for f ≡ 0 only.
    """
    areas = surface.euclidean_tri_areas()
    v = u[surface.triangles]
    squares = (v**2).sum(axis=1)
    cross = v[:, 0] * v[:, 1] + v[:, 0] * v[:, 2] + v[:, 1] * v[:, 2]
    return float((areas / 6.0 * (squares + cross)).sum())


# ---------------------------------------------------------------------------
# stiffness
# ---------------------------------------------------------------------------


def test_stiffness_row_sums_vanish(half_disk):
    k = assembly.stiffness(half_disk)
    rows = np.asarray(k.sum(axis=1)).ravel()
    assert np.max(np.abs(rows)) <= 1e-12


def test_stiffness_ignores_conformal_factor():
    s0 = build_domain(DomainSpec("rectangle", (1.0, 1.0)), 0.25)
    s3 = build_domain(DomainSpec("rectangle", (1.0, 1.0), "3"), 0.25)
    k0 = assembly.stiffness(s0).toarray()
    k3 = assembly.stiffness(s3).toarray()
    assert np.array_equal(k0, k3)


def test_stiffness_exact_on_linear_interpolant(unit_square):
    u = unit_square.vertices[:, 0].copy()
    k = assembly.stiffness(unit_square)
    assert abs(u @ (k @ u) - 1.0) <= 1e-12


def test_stiffness_positive_semidefinite(unit_square, rng):
    k = assembly.stiffness(unit_square)
    for _ in range(100):
        v = rng.standard_normal(unit_square.num_vertices)
        assert v @ (k @ v) >= -1e-12 * (v @ v)


# ---------------------------------------------------------------------------
# mass
# ---------------------------------------------------------------------------


def test_mass_of_ones_is_area(unit_square, half_disk):
    for s in (unit_square, half_disk):
        m = assembly.mass(s)
        ones = np.ones(s.num_vertices)
        assert abs(ones @ (m @ ones) - assembly.area(s)) <= 1e-12


def test_mass_constant_field_unit_square(unit_square):
    m = assembly.mass(unit_square)
    ones = np.ones(unit_square.num_vertices)
    assert abs(ones @ (m @ ones) - 1.0) <= 1e-12


def test_mass_quadrature_of_linear_field(unit_square_fine):
    u = unit_square_fine.vertices[:, 0].copy()
    m = assembly.mass(unit_square_fine)
    assert abs(u @ (m @ u) - 1.0 / 3.0) <= 1e-4


def test_mass_positive_definite(half_disk, rng):
    m = assembly.mass(half_disk)
    for _ in range(100):
        v = rng.standard_normal(half_disk.num_vertices)
        if v @ v == 0:
            continue
        assert v @ (m @ v) > 0


# ---------------------------------------------------------------------------
# projection and means
# ---------------------------------------------------------------------------


def test_project_kills_constants(unit_square):
    c = 3.7 * np.ones(unit_square.num_vertices)
    p = assembly.mean_zero_project(unit_square, c)
    assert np.max(np.abs(p)) <= 1e-12


def test_project_idempotent(unit_square, rng):
    u = rng.standard_normal(unit_square.num_vertices)
    p1 = assembly.mean_zero_project(unit_square, u)
    p2 = assembly.mean_zero_project(unit_square, p1)
    assert np.max(np.abs(p2 - p1)) <= 1e-14


def test_project_linear_coordinate(unit_square):
    u = unit_square.vertices[:, 0].copy()
    p = assembly.mean_zero_project(unit_square, u)
    assert np.max(np.abs(p - (u - 0.5))) <= 1e-10


def test_project_output_mean_tiny(half_disk, rng):
    a = assembly.area(half_disk)
    for _ in range(5):
        u = rng.standard_normal(half_disk.num_vertices)
        p = assembly.mean_zero_project(half_disk, u)
        assert abs(assembly.mean(half_disk, p)) <= 1e-12 * a


def test_projection_is_linear(half_disk, rng):
    u = rng.standard_normal(half_disk.num_vertices)
    v = rng.standard_normal(half_disk.num_vertices)
    left = assembly.mean_zero_project(half_disk, 2.0 * u - 3.0 * v)
    right = 2.0 * assembly.mean_zero_project(half_disk, u) \
        - 3.0 * assembly.mean_zero_project(half_disk, v)
    assert np.max(np.abs(left - right)) <= 1e-12


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def test_zero_field_gives_zero_norms(unit_square):
    z = np.zeros(unit_square.num_vertices)
    assert assembly.dirichlet_norm(unit_square, z) == 0.0
    assert assembly.l2_norm(unit_square, z) == 0.0
    assert assembly.mean(unit_square, z) == 0.0


def test_dirichlet_norm_shift_invariant(half_disk, rng):
    u = rng.standard_normal(half_disk.num_vertices)
    shifted = u + 42.0
    assert abs(
        assembly.dirichlet_norm(half_disk, u)
        - assembly.dirichlet_norm(half_disk, shifted)
    ) <= 1e-10


def test_l2_norm_matches_independent_oracle(unit_square, rng):
    for _ in range(3):
        u = rng.standard_normal(unit_square.num_vertices)
        got = assembly.l2_norm(unit_square, u) ** 2
        want = _p1_l2_sq_oracle(unit_square, u)
        assert abs(got - want) <= 1e-10 * max(1.0, want)
