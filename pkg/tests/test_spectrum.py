"""First mean-zero Neumann eigenpair."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tmlab import assembly, spectrum
from tmlab.errors import TmlabError
from tmlab.surface import DomainSpec, build_domain

PI = math.pi

# First positive root of the derivative of the first-order Bessel function;
# its square is the separation-of-variables eigenvalue of the unit half-disk.
BESSEL_J1_PRIME_ROOT = 1.8411837813406593


def test_unit_square_anchor(unit_square_fine):
    pair = spectrum.first_eigenpair(unit_square_fine, tol=1e-10)
    assert abs(pair.value - PI**2) <= 0.01 * PI**2


def test_rect21_anchor(rect21):
    pair = spectrum.first_eigenpair(rect21, tol=1e-10)
    assert abs(pair.value - PI**2 / 4) <= 0.01 * PI**2 / 4


def test_half_disk_anchor(half_disk_refined):
    pair = spectrum.first_eigenpair(half_disk_refined, tol=1e-10)
    exact = BESSEL_J1_PRIME_ROOT**2
    assert abs(pair.value - exact) <= 0.01 * exact


def test_eigenpair_normalization_and_sign(half_disk):
    pair = spectrum.first_eigenpair(half_disk, tol=1e-10)
    a = assembly.area(half_disk)
    assert abs(assembly.mean(half_disk, pair.vector)) <= 1e-10 * a
    assert abs(assembly.l2_norm(half_disk, pair.vector) - 1.0) <= 1e-10
    boundary_vals = pair.vector[half_disk.boundary_vertex_indices()]
    assert boundary_vals.max() > 0


def test_rayleigh_quotient_consistency(unit_square):
    pair = spectrum.first_eigenpair(unit_square, tol=1e-10)
    k = assembly.stiffness(unit_square)
    m = assembly.mass(unit_square)
    u = pair.vector
    rq = (u @ (k @ u)) / (u @ (m @ u))
    assert abs(rq - pair.value) <= 1e-8 * pair.value


def test_residual_small_and_grows_under_perturbation(unit_square, rng):
    pair = spectrum.first_eigenpair(unit_square, tol=1e-10)
    base = spectrum.eigen_residual(unit_square, pair.vector, pair.value)
    assert base <= 1e-8
    noise = rng.standard_normal(unit_square.num_vertices)
    noise = assembly.mean_zero_project(unit_square, noise)
    noise *= 1e-3 / assembly.l2_norm(unit_square, noise)
    perturbed = spectrum.eigen_residual(
        unit_square, pair.vector + noise, pair.value
    )
    assert perturbed >= 10.0 * base


def test_refinement_monotone_and_second_order():
    hs = [0.2, 0.1, 0.05]
    values = []
    for h in hs:
        s = build_domain(DomainSpec("rectangle", (1.0, 1.0)), h)
        values.append(spectrum.first_eigenpair(s, tol=1e-10).value)
    # Conforming P1 Rayleigh quotients over-approximate and improve with h.
    assert values[0] >= values[1] - 1e-8
    assert values[1] >= values[2] - 1e-8
    errs = [v - PI**2 for v in values]
    assert all(e > 0 for e in errs)
    rate = math.log(errs[1] / errs[2]) / math.log(2.0)
    assert rate >= 1.8


def test_domain_scaling_law():
    s1 = build_domain(DomainSpec("rectangle", (1.0, 1.0)), 0.1)
    s2 = build_domain(DomainSpec("rectangle", (2.0, 2.0)), 0.2)
    v1 = spectrum.first_eigenpair(s1, tol=1e-10).value
    v2 = spectrum.first_eigenpair(s2, tol=1e-10).value
    assert abs(v2 - v1 / 4.0) <= 1e-8 * v1


def test_tolerance_bounds_residual(unit_square):
    pair = spectrum.first_eigenpair(unit_square, tol=1e-12)
    assert pair.residual <= 1e-12
