"""Subcritical maximization of the exponential mean-zero functional.

The object of study is

    F(u) = ∫ exp( β u² (1 + α‖u‖₂²) ) dv,    β = 2π − ε,  ε > 0,

over the admissible set  𝒮 = { mean(u) = 0, ‖∇u‖₂ ≤ 1 }.  Everything here
is *discretely consistent*: F, its gradient, the Euler–Lagrange
coefficients, and the Euler–Lagrange residual are all defined through the
same 6-point quadrature, so the discrete Karush–Kuhn–Tucker conditions of
the discrete maximization problem coincide exactly with the discrete
Euler–Lagrange equation whose residual is reported.

The maximizer runs two phases: energy-norm-preconditioned projected
ascent with an adaptive step until the stationarity residual is small,
then damped Newton on the bordered KKT system (exact Hessian; the α-terms
contribute a symmetric rank-two correction, handled by bordering) with
quadratic terminal convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, quadrature as quad
from .errors import NumericalError, PreconditionError, UsageError
from .surface import Surface

TWO_PI = 2.0 * math.pi
EXP_CLAMP = 700.0  # beyond this the double exponential overflows


# ---------------------------------------------------------------------------
# Value containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalValue:
    """Value of F(u) plus overflow bookkeeping.

    ``tainted`` is True when any quadrature exponent was clamped at
    ``EXP_CLAMP``; the reported value is then a certified lower bound
    rather than the exact quadrature value.
    """

    value: float
    tainted: bool
    max_exponent: float


@dataclass(frozen=True)
class ELCoefficients:
    """Coefficients of the Euler–Lagrange system at a given state u.

    With s = ‖u‖₂², β = 2π − ε:
      alpha_eps  = β(1 + αs)          (exponent coefficient)
      beta_eps   = (1 + αs)/(1 + 2αs)
      gamma_eps  = α/(1 + 2αs)
      lambda_eps = ∫ u² e^{alpha_eps u²} dv
      mu_eps     = beta_eps/Area · ∫ u e^{alpha_eps u²} dv
    and the constraint multiplier A = β·lambda_eps·(1 + 2αs).
    """

    alpha_eps: float
    beta_eps: float
    gamma_eps: float
    lambda_eps: float
    mu_eps: float
    multiplier: float
    norm_sq: float
    tainted: bool


@dataclass
class MaximizeResult:
    """Outcome of subcritical maximization."""

    u: np.ndarray
    value: float
    residual: float
    ascent_iterations: int
    newton_iterations: int
    converged: bool
    tainted: bool


@dataclass
class BlowupDiagnostics:
    """Concentration diagnostics of a (near-)maximizer.

    ``psi``/``phi`` are sampled on a fan of inward directions at the
    scaled radii ``rho``: psi(ρ) = u(x* + r ρ ω)/c and
    phi(ρ) = c (u(x* + r ρ ω) − c); entries are NaN where the sample
    point falls outside the domain.
    """

    c: float
    x: np.ndarray
    vertex: int
    r: float
    lambda_eps: float
    alpha_eps: float
    beta_eps: float
    rho: np.ndarray
    directions: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    sign_flipped: bool


# ---------------------------------------------------------------------------
# Core quadrature fields
# ---------------------------------------------------------------------------


def _check_params(alpha: float, eps: float) -> float:
    if not (eps > 0) or not math.isfinite(eps) or eps >= TWO_PI:
        raise UsageError("eps must lie in (0, 2*pi): the subcritical range")
    if alpha < 0 or not math.isfinite(alpha):
        raise UsageError("alpha must be nonnegative and finite")
    return TWO_PI - eps


class _State:
    """Shared quadrature fields of (surface, u, alpha, beta)."""

    def __init__(self, surface: Surface, u: np.ndarray, alpha: float, beta: float):
        self.surface = surface
        self.u = np.asarray(u, dtype=float)
        if self.u.shape != (surface.num_vertices,):
            raise UsageError("state vector length does not match the mesh")
        self.alpha = float(alpha)
        self.beta = float(beta)
        m = assembly.mass(surface)
        self.mu_vec = np.asarray(m @ self.u)
        self.norm_sq = float(self.u @ self.mu_vec)
        self.alpha_eps = beta * (1.0 + alpha * self.norm_sq)
        self.uq = assembly.interpolate(surface, self.u)
        expo = self.alpha_eps * self.uq**2
        self.max_exponent = float(expo.max(initial=0.0))
        self.tainted = bool(self.max_exponent > EXP_CLAMP)
        self.live = expo <= EXP_CLAMP  # clamped points carry no derivative
        self.eE = np.exp(np.minimum(expo, EXP_CLAMP))
        self.w = assembly.quad_weights(surface)

    # -- scalar moments ∫ u^k e^E dv --------------------------------------

    def moment(self, k: int) -> float:
        return float(np.sum(self.w * self.uq**k * self.eE))

    def moment_live(self, k: int) -> float:
        return float(np.sum(self.w * self.uq**k * self.eE * self.live))

    # -- load vectors ∫ u^k e^E φ_i dv (derivative-side: clamp-masked) ----

    def load_live(self, k: int) -> np.ndarray:
        gq = self.uq**k * self.eE * self.live
        contrib = np.einsum("tq,qi->ti", self.w * gq, quad.BARY)
        out = np.zeros(self.surface.num_vertices)
        np.add.at(out, self.surface.triangles.ravel(), contrib.ravel())
        return out

    def weighted_mass_live(self, k: int) -> sp.csr_matrix:
        gq = self.uq**k * self.eE * self.live
        return assembly.weighted_mass(self.surface, gq)


# ---------------------------------------------------------------------------
# Functional, gradient, Euler–Lagrange data
# ---------------------------------------------------------------------------


def functional(surface: Surface, u, alpha: float, eps: float) -> FunctionalValue:
    """Evaluate F(u) = ∫ exp(β u²(1+α‖u‖₂²)) dv, β = 2π − ε, ε > 0."""
    return functional_at_beta(surface, u, alpha, _check_params(alpha, eps))


def functional_at_beta(
    surface: Surface, u, alpha: float, beta: float
) -> FunctionalValue:
    """Evaluate F(u) at an explicit exponent coefficient β > 0.

    Unlike :func:`functional`, this does not restrict β to the subcritical
    range — witness families are evaluated at and beyond the critical
    exponent, where the supremum may be infinite but any fixed state still
    has a finite quadrature value (clamped and flagged on overflow).
    """
    if not (beta > 0) or not math.isfinite(beta):
        raise UsageError("beta must be positive and finite")
    if alpha < 0 or not math.isfinite(alpha):
        raise UsageError("alpha must be nonnegative and finite")
    st = _State(surface, u, alpha, beta)
    return FunctionalValue(
        value=float(np.sum(st.w * st.eE)),
        tainted=st.tainted,
        max_exponent=st.max_exponent,
    )


def gradient(surface: Surface, u, alpha: float, eps: float) -> np.ndarray:
    """Exact gradient of the discrete functional.

    ∇F = 2β(1+αs)·∫ u e^E φ_i + 2αβ·(∫ u² e^E)·Mu,  s = ‖u‖₂².
    Clamped quadrature points contribute zero derivative.
    """
    st = _State(surface, u, alpha, _check_params(alpha, eps))
    s1 = st.load_live(1)
    lam = st.moment_live(2)
    return 2.0 * st.alpha_eps * s1 + 2.0 * st.alpha * st.beta * lam * st.mu_vec


def el_coefficients(surface: Surface, u, alpha: float, eps: float) -> ELCoefficients:
    """Euler–Lagrange coefficients of the state u (see class docstring)."""
    st = _State(surface, u, alpha, _check_params(alpha, eps))
    lam = st.moment(2)
    if lam <= 0:
        raise PreconditionError("lambda_eps vanishes: state is identically zero")
    s = st.norm_sq
    beta_eps = (1.0 + alpha * s) / (1.0 + 2.0 * alpha * s)
    gamma_eps = alpha / (1.0 + 2.0 * alpha * s)
    mu_eps = beta_eps * st.moment(1) / assembly.area(surface)
    return ELCoefficients(
        alpha_eps=st.alpha_eps,
        beta_eps=beta_eps,
        gamma_eps=gamma_eps,
        lambda_eps=lam,
        mu_eps=mu_eps,
        multiplier=st.beta * lam * (1.0 + 2.0 * alpha * s),
        norm_sq=s,
        tainted=st.tainted,
    )


def el_residual(surface: Surface, u, alpha: float, eps: float) -> float:
    """Dual-norm residual of the Euler–Lagrange equation at u.

    The equation (for a unit-energy maximizer) reads
        K u = (β_ε/λ_ε) ∫ u e^E φ + γ_ε M u − (μ_ε/λ_ε) M·1,
    and the residual is measured in the (K+M)⁻¹ dual norm, which is
    mesh-size robust.
    """
    st = _State(surface, u, alpha, _check_params(alpha, eps))
    lam = st.moment(2)
    if lam <= 0:
        raise PreconditionError("el_residual of the zero state")
    s = st.norm_sq
    beta_eps = (1.0 + alpha * s) / (1.0 + 2.0 * alpha * s)
    gamma_eps = alpha / (1.0 + 2.0 * alpha * s)
    mu_eps = beta_eps * st.moment(1) / assembly.area(surface)
    s1 = st.load_live(1)
    k = assembly.stiffness(surface)
    r = (
        np.asarray(k @ st.u)
        - (beta_eps / lam) * s1
        - gamma_eps * st.mu_vec
        + (mu_eps / lam) * assembly.mass_row_of_ones(surface)
    )
    return assembly.dual_norm(surface, r)


# ---------------------------------------------------------------------------
# Maximization
# ---------------------------------------------------------------------------


def _lambda1(surface: Surface) -> float:
    if "lambda1" not in surface.cache:
        from . import spectrum

        surface.cache["lambda1"] = spectrum.first_eigenpair(surface, tol=1e-8)
    return surface.cache["lambda1"].value


def _retract(surface: Surface, v: np.ndarray) -> np.ndarray:
    """Project to mean zero and rescale to unit Dirichlet energy."""
    v = assembly.mean_zero_project(surface, v)
    nrm = assembly.dirichlet_norm(surface, v)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise NumericalError("retraction hit a degenerate state")
    return v / nrm


def _kkt_multipliers(surface: Surface, u, g):
    """Multiplier estimates at a feasible u: A from the sphere, ν from the mean."""
    k = assembly.stiffness(surface)
    ku = np.asarray(k @ u)
    a_mult = 0.5 * float(u @ g)
    nu = float(np.sum(g) - 2.0 * a_mult * np.sum(ku)) / assembly.area(surface)
    # note: ∑_i (M1)_i g... ν solves min ‖g − 2A·Ku − ν·M1‖ in the dual
    # pairing with constants: 1ᵀ(g − 2A·Ku) = ν·1ᵀM1 and 1ᵀKu = 0.
    return a_mult, nu, ku


def _kkt_residual(surface: Surface, u, g, a_mult, nu, ku) -> float:
    m1 = assembly.mass_row_of_ones(surface)
    r = g - 2.0 * a_mult * ku - nu * m1
    denom = max(2.0 * abs(a_mult), 1e-300)
    return assembly.dual_norm(surface, r) / denom


def _newton_step(surface: Surface, st: _State, a_mult: float, nu: float):
    """Assemble and solve the bordered KKT Newton system; return δu.

    Hessian of F:  H = H_sp + U C₂ Uᵀ with
      H_sp = 2β(1+αs)·Mass(e^E) + 4β²(1+αs)²·Mass(u²e^E) + 2αβλ·M
      U = [Mu, w̃],  w̃ = 4αβ·S1 + 4αβ·β(1+αs)·S3,  C₂ = [[κ,1],[1,0]],
      κ = 4α²β²·∫u⁴e^E.
    The Newton matrix on the unit-energy, mean-zero manifold is bordered by
    the constraint gradients B = [2Ku, M·1] and the rank-two correction is
    bordered via C₂⁻¹ = [[0,1],[1,−κ]].
    """
    n = st.surface.num_vertices
    alpha, beta = st.alpha, st.beta
    s = st.norm_sq
    ae = st.alpha_eps
    k = assembly.stiffness(surface)
    m = assembly.mass(surface)

    lam = st.moment_live(2)
    h_sp = (
        2.0 * ae * st.weighted_mass_live(0)
        + 4.0 * ae * ae * st.weighted_mass_live(2)
        + (2.0 * alpha * beta * lam) * m
    )
    h_c = (h_sp - (2.0 * a_mult) * k).tocsc()

    ku = np.asarray(k @ st.u)
    m1 = assembly.mass_row_of_ones(surface)
    g = 2.0 * ae * st.load_live(1) + 2.0 * alpha * beta * lam * st.mu_vec
    g_l = g - 2.0 * a_mult * ku - nu * m1

    b = np.column_stack([2.0 * ku, m1])
    if alpha > 0.0:
        s1 = st.load_live(1)
        s3 = st.load_live(3)
        lam4 = st.moment_live(4)
        w_t = 4.0 * alpha * beta * (s1 + ae * s3)
        kappa = 4.0 * alpha * alpha * beta * beta * lam4
        uu = np.column_stack([st.mu_vec, w_t])
        c2inv = np.array([[0.0, 1.0], [1.0, -kappa]])
        mat = sp.bmat(
            [
                [h_c, sp.csc_matrix(uu), sp.csc_matrix(b)],
                [sp.csc_matrix(uu.T), sp.csc_matrix(-c2inv), None],
                [sp.csc_matrix(b.T), None, sp.csc_matrix((2, 2))],
            ],
            format="csc",
        )
        rhs = np.concatenate([-g_l, np.zeros(2), np.zeros(2)])
    else:
        mat = sp.bmat(
            [[h_c, sp.csc_matrix(b)], [sp.csc_matrix(b.T), sp.csc_matrix((2, 2))]],
            format="csc",
        )
        rhs = np.concatenate([-g_l, np.zeros(2)])

    try:
        lu = spla.splu(mat)
        sol = lu.solve(rhs)
    except RuntimeError as exc:
        raise NumericalError(f"KKT Newton factorization failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalError("KKT Newton solve produced non-finite values")
    return sol[:n]


def maximize_subcritical(
    surface: Surface,
    alpha: float,
    eps: float,
    u0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_ascent: int = 500,
    max_newton: int = 60,
    newton_switch: float = 1e-3,
) -> MaximizeResult:
    """Maximize F over {mean(u)=0, ‖∇u‖₂=1} for ε>0, α < λ₁.

    Deterministic given the seed: the default start is the first Neumann
    eigenfunction scaled to unit energy.  Phase 1 is (K+M)-preconditioned
    projected gradient ascent with adaptive step and a sufficient-increase
    test; phase 2 is damped Newton on the bordered KKT system, accepting
    steps only when the stationarity residual decreases.
    """
    _check_params(alpha, eps)
    if alpha > 0.0 or u0 is None:
        # alpha = 0 always lies below the spectral threshold; resolve the
        # eigenpair only when the threshold bites or it seeds the ascent.
        lam1 = _lambda1(surface)
        if alpha >= lam1:
            raise PreconditionError(
                f"alpha = {alpha} is not below the spectral threshold {lam1:.6f}"
            )

    if u0 is None:
        u = surface.cache["lambda1"].vector.copy()
    else:
        u = np.asarray(u0, dtype=float)
        if u.shape != (surface.num_vertices,):
            raise UsageError("seed vector length does not match the mesh")
    u = _retract(surface, u)

    def value(vec) -> FunctionalValue:
        return functional(surface, vec, alpha, eps)

    fv = value(u)
    tainted = fv.tainted
    g = gradient(surface, u, alpha, eps)
    a_mult, nu, ku = _kkt_multipliers(surface, u, g)
    res = _kkt_residual(surface, u, g, a_mult, nu, ku)

    km = assembly.km_solver(surface)
    step = 1.0
    n_ascent = 0
    for n_ascent in range(1, max_ascent + 1):
        if res <= max(newton_switch, tol):
            break
        d = km.solve(g)
        d = assembly.mean_zero_project(surface, d)
        d = d - float(u @ (assembly.stiffness(surface) @ d)) * u
        slope = float(g @ d)
        if slope <= 0:
            d = assembly.mean_zero_project(surface, g)
            d = d - float(u @ (assembly.stiffness(surface) @ d)) * u
            slope = float(g @ d)
            if slope <= 0:
                break  # stationary to machine precision
        accepted = False
        for _ in range(40):
            trial = _retract(surface, u + step * d)
            fv_t = value(trial)
            if fv_t.value >= fv.value + 1e-4 * step * slope:
                u, fv = trial, fv_t
                tainted = tainted or fv_t.tainted
                step = min(step * 1.3, 1e6)
                accepted = True
                break
            step *= 0.5
            if step < 1e-18:
                break
        if not accepted:
            break
        g = gradient(surface, u, alpha, eps)
        a_mult, nu, ku = _kkt_multipliers(surface, u, g)
        res = _kkt_residual(surface, u, g, a_mult, nu, ku)

    n_newton = 0
    beta = TWO_PI - eps
    while res > tol and n_newton < max_newton:
        n_newton += 1
        st = _State(surface, u, alpha, beta)
        du = _newton_step(surface, st, a_mult, nu)
        improved = False
        tau = 1.0
        for _ in range(12):
            trial = _retract(surface, u + tau * du)
            g_t = gradient(surface, trial, alpha, eps)
            a_t, nu_t, ku_t = _kkt_multipliers(surface, trial, g_t)
            res_t = _kkt_residual(surface, trial, g_t, a_t, nu_t, ku_t)
            if res_t < res:
                u, g, a_mult, nu, ku, res = trial, g_t, a_t, nu_t, ku_t, res_t
                improved = True
                break
            tau *= 0.5
        if not improved:
            # One safeguarded ascent step, then retry Newton.
            d = km.solve(g)
            d = assembly.mean_zero_project(surface, d)
            d = d - float(u @ (assembly.stiffness(surface) @ d)) * u
            slope = float(g @ d)
            if slope <= 0:
                break
            fv = value(u)
            s_a = 1.0
            stepped = False
            for _ in range(40):
                trial = _retract(surface, u + s_a * d)
                fv_t = value(trial)
                if fv_t.value >= fv.value + 1e-4 * s_a * slope:
                    u = trial
                    g = gradient(surface, u, alpha, eps)
                    a_mult, nu, ku = _kkt_multipliers(surface, u, g)
                    res = _kkt_residual(surface, u, g, a_mult, nu, ku)
                    stepped = True
                    break
                s_a *= 0.5
                if s_a < 1e-18:
                    break
            if not stepped:
                break

    fv = value(u)
    el_res = el_residual(surface, u, alpha, eps)
    return MaximizeResult(
        u=u,
        value=fv.value,
        residual=el_res,
        ascent_iterations=n_ascent,
        newton_iterations=n_newton,
        converged=bool(el_res <= tol),
        tainted=bool(tainted or fv.tainted),
    )


# ---------------------------------------------------------------------------
# Blow-up diagnostics
# ---------------------------------------------------------------------------


def blowup_diagnostics(
    surface: Surface,
    u,
    alpha: float,
    eps: float,
    rho_max: float = 1.0,
    n_dirs: int = 9,
    n_radii: int = 33,
    fan_half_angle: float = 80.0,
) -> BlowupDiagnostics:
    """Concentration data of a (near-)maximizer.

    The state is sign-normalized so its extremum is a positive peak; the
    concentration scale is r = √(λ_ε / (β_ε c² e^{α_ε c²})).  Rescaled
    profiles ψ = u(x* + rρω)/c and φ = c(u(x* + rρω) − c) are sampled on a
    fan of directions ω spread ±``fan_half_angle`` degrees around the
    inward direction at the peak (NaN outside the domain).
    """
    u = np.asarray(u, dtype=float)
    flipped = False
    if abs(float(u.min())) > abs(float(u.max())):
        u = -u
        flipped = True
    vertex = int(np.argmax(u))
    c = float(u[vertex])
    if c <= 0:
        raise PreconditionError("state has no positive peak")
    x_star = surface.vertices[vertex].copy()

    co = el_coefficients(surface, u, alpha, eps)
    arg = co.alpha_eps * c * c
    if arg > EXP_CLAMP:
        raise NumericalError("peak exponent overflows the concentration scale")
    r = math.sqrt(co.lambda_eps / (co.beta_eps * c * c * math.exp(arg)))

    # Inward direction: for a boundary peak use the inward normal proxy
    # (domain centroid direction works for all template domains); for an
    # interior peak any fan covers the neighborhood.
    centroid = surface.vertices.mean(axis=0)
    inward = centroid - x_star
    nrm = float(np.hypot(*inward))
    if nrm == 0.0:
        inward = np.array([1.0, 0.0])
    else:
        inward = inward / nrm

    half = math.radians(fan_half_angle)
    base = math.atan2(inward[1], inward[0])
    angles = base + np.linspace(-half, half, n_dirs)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    rho = np.linspace(0.0, rho_max, n_radii)

    psi = np.full((n_dirs, n_radii), np.nan)
    phi = np.full((n_dirs, n_radii), np.nan)
    for i, w in enumerate(dirs):
        pts = x_star[None, :] + (r * rho)[:, None] * w[None, :]
        try:
            vals = assembly.evaluate(surface, u, pts)
        except UsageError:
            vals = np.array(
                [
                    _safe_eval(surface, u, p)
                    for p in pts
                ]
            )
        psi[i] = vals / c
        phi[i] = c * (vals - c)
    # The center sample is exact by construction.
    psi[:, 0] = 1.0
    phi[:, 0] = 0.0
    return BlowupDiagnostics(
        c=c,
        x=x_star,
        vertex=vertex,
        r=r,
        lambda_eps=co.lambda_eps,
        alpha_eps=co.alpha_eps,
        beta_eps=co.beta_eps,
        rho=rho,
        directions=dirs,
        psi=psi,
        phi=phi,
        sign_flipped=flipped,
    )


def _safe_eval(surface: Surface, u, p) -> float:
    try:
        return float(assembly.evaluate(surface, u, p[None, :])[0])
    except UsageError:
        return float("nan")
