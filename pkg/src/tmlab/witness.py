"""Explicit witness families for the sharp-threshold experiments.

Three constructions, all evaluated through the same quadrature as the
maximizer so that values are comparable across modules:

* **Standard bubble** closed forms: the limit concentration profile
  φ(ρ) = −(1/2π)·log(1 + (π/2)ρ²), solving −Δφ = e^{4πφ} with half-plane
  mass 1, plus finite-difference residual and mass checks.

* **Capped logarithm families** (truncated log cones with plateau
  √(L/2π), L = −log ε) that certify divergence: above the critical
  exponent, or at the critical exponent when the quadratic-term
  coefficient α reaches the first eigenvalue (then reinforced by a
  t·u₀ eigenfunction term, t = L^{−q}).  The mean is restored exactly by
  a C∞ radial mollifier supported away from the cap, with amplitude
  s = −∫cap dv / ∫mollifier dv.

* **Glued bubble+Green states** realizing the sharp lower bound
  Area + (π/2)·e^{1 + 2πA}: a scaled bubble core of width ε, a cut-off
  interpolation ramp over [Rε, 2Rε] (R = −log ε), and the Green tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import assembly, green as green_mod, moser
from .errors import NumericalError, PreconditionError, UsageError
from .surface import Surface, adapt_for_point

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Bubble closed forms
# ---------------------------------------------------------------------------


def bubble_phi(rho):
    """Limit profile φ(ρ) = −(1/2π)·log(1 + (π/2)ρ²)."""
    rho = np.asarray(rho, dtype=float)
    return -np.log1p(0.5 * math.pi * rho**2) / TWO_PI


def bubble_mass(rho):
    """∫ e^{4πφ} over the half-disk of radius ρ: 1 − 1/(1 + (π/2)ρ²)."""
    rho = np.asarray(rho, dtype=float)
    return 1.0 - 1.0 / (1.0 + 0.5 * math.pi * rho**2)


def bubble_pde_residual(h: float = 1e-3, n: int = 201, extent: float = 5.0) -> float:
    """Max five-point-stencil residual of −Δφ = e^{4πφ} on [−extent, extent]².

    ``h`` is the stencil step; the residual is sampled on an n×n grid.
    """
    if not (h > 0) or n < 2:
        raise UsageError("stencil step must be positive, grid at least 2x2")
    xs = np.linspace(-extent, extent, n)
    xg, yg = np.meshgrid(xs, xs, indexing="xy")

    def phi_xy(a, b):
        return bubble_phi(np.hypot(a, b))

    lap = (
        phi_xy(xg + h, yg)
        + phi_xy(xg - h, yg)
        + phi_xy(xg, yg + h)
        + phi_xy(xg, yg - h)
        - 4.0 * phi_xy(xg, yg)
    ) / (h * h)
    rhs = np.exp(2.0 * TWO_PI * phi_xy(xg, yg))
    return float(np.max(np.abs(-lap - rhs)))


def bubble_profile_deviation(diag: "moser.BlowupDiagnostics") -> float:
    """Sup deviation of a sampled rescaled profile from the bubble.

    max over valid fan samples of |φ_sampled(ρ, ω) − φ(ρ)|.
    """
    ref = bubble_phi(diag.rho)[None, :]
    dev = np.abs(diag.phi - ref)
    if np.all(np.isnan(dev)):
        raise NumericalError("no valid profile samples")
    return float(np.nanmax(dev))


def unit_radius_gap(diag: "moser.BlowupDiagnostics") -> float:
    """|fan-mean of φ_sampled at ρ = 1 − φ(1)|, the profile-limit gap.

    The sample radius closest to ρ = 1 is used; the fan mean ignores
    directions whose sample point fell outside the domain.
    """
    j = int(np.argmin(np.abs(diag.rho - 1.0)))
    col = diag.phi[:, j]
    if np.all(np.isnan(col)):
        raise NumericalError("no valid profile samples at unit radius")
    return float(abs(np.nanmean(col) - bubble_phi(float(diag.rho[j]))))


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------


def smooth_boundary_vertex(surface: Surface, point) -> int:
    """Boundary vertex nearest ``point``, rejecting corner hits."""
    p = np.asarray(point, dtype=float)
    bidx = surface.boundary_vertex_indices()
    d = np.hypot(
        surface.vertices[bidx, 0] - p[0], surface.vertices[bidx, 1] - p[1]
    )
    vertex = int(bidx[int(np.argmin(d))])
    if vertex in set(surface.corner_vertex_indices().tolist()):
        raise PreconditionError(
            "requested witness center resolves to a domain corner; "
            "concentration constants there differ from the smooth-boundary ones"
        )
    return vertex


def corner_free_radius(surface: Surface, vertex: int) -> float:
    """Distance from a vertex to the nearest domain corner."""
    x0 = surface.vertices[vertex]
    corners = surface.spec.corners()
    return float(
        np.min(np.hypot(corners[:, 0] - x0[0], corners[:, 1] - x0[1]))
    )


def _metric_centroid(surface: Surface) -> np.ndarray:
    w = assembly.quad_weights(surface)
    pts = assembly.quad_points(surface)
    a = assembly.area(surface)
    return np.array(
        [float(np.sum(w * pts[:, :, 0])) / a, float(np.sum(w * pts[:, :, 1])) / a]
    )


def _boundary_distance(surface: Surface, point: np.ndarray) -> float:
    bidx = surface.boundary_vertex_indices()
    return float(
        np.min(
            np.hypot(
                surface.vertices[bidx, 0] - point[0],
                surface.vertices[bidx, 1] - point[1],
            )
        )
    )


def _mollifier(surface: Surface, center: np.ndarray, radius: float) -> np.ndarray:
    """C∞ radial bump: 1 at the center, 0 outside ``radius``."""
    r = np.hypot(
        surface.vertices[:, 0] - center[0], surface.vertices[:, 1] - center[1]
    )
    s2 = (r / radius) ** 2
    out = np.zeros(surface.num_vertices)
    inside = s2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return out


# ---------------------------------------------------------------------------
# Capped-logarithm states
# ---------------------------------------------------------------------------


@dataclass
class CapState:
    """A normalized capped-log witness on a (possibly adapted) mesh."""

    surface: Surface = field(repr=False)
    vertex: int
    v: np.ndarray = field(repr=False)
    eps: float
    big_l: float
    t: float
    delta: float
    plateau: float
    slope: float
    bump_amplitude: float
    raw_energy: float
    peak: float
    bump_center: tuple = (0.0, 0.0)
    bump_radius: float = 0.0


def cap_state(
    surface: Surface,
    vertex: int,
    eps: float,
    delta: float,
    t: float = 0.0,
    u0: np.ndarray | None = None,
) -> CapState:
    """Build the normalized cap + mollifier (+ t·u₀) witness state.

    cap(r) = √(L/2π) on r ≤ δ√ε, then √(2/(πL))·log(δ/r) up to r = δ,
    then 0; L = −log ε.  The mean is cancelled exactly by the mollifier
    term, the eigenfunction term (t > 0) reinforces the peak with the
    sign of u₀ at the center, and the sum is scaled to unit energy.
    """
    if not (0 < eps < 1):
        raise UsageError("cap parameter eps must lie in (0, 1)")
    if delta <= 0:
        raise UsageError("cap radius delta must be positive")
    if delta >= corner_free_radius(surface, vertex):
        raise PreconditionError(
            "cap radius reaches a domain corner; shrink delta"
        )
    big_l = -math.log(eps)
    plateau = math.sqrt(big_l / TWO_PI)
    slope = math.sqrt(2.0 / (math.pi * big_l))
    r0 = delta * math.sqrt(eps)

    x0 = surface.vertices[vertex]
    r = np.hypot(surface.vertices[:, 0] - x0[0], surface.vertices[:, 1] - x0[1])
    cap = np.zeros(surface.num_vertices)
    ring = (r > r0) & (r < delta)
    cap[r <= r0] = plateau
    cap[ring] = slope * np.log(delta / r[ring])

    # Mollifier in the domain bulk, clear of the cap support.
    anchor = _metric_centroid(surface)
    room = min(
        _boundary_distance(surface, anchor),
        float(np.hypot(*(anchor - x0))) - delta,
    )
    if room <= 0.0:
        # A wide cap can swallow the centroid; fall back to the mesh vertex
        # with the best joint clearance from the boundary and the cap.
        pts = surface.vertices
        bpts = pts[surface.boundary_vertex_indices()]
        d_bnd = np.full(pts.shape[0], np.inf)
        for k in range(0, bpts.shape[0], 64):
            blk = bpts[k : k + 64]
            np.minimum(
                d_bnd,
                np.min(
                    np.hypot(
                        pts[:, None, 0] - blk[None, :, 0],
                        pts[:, None, 1] - blk[None, :, 1],
                    ),
                    axis=1,
                ),
                out=d_bnd,
            )
        d_cap = np.hypot(pts[:, 0] - x0[0], pts[:, 1] - x0[1]) - delta
        score = np.minimum(d_bnd, d_cap)
        best = int(np.argmax(score))
        anchor = pts[best].copy()
        room = float(score[best])
    radius = 0.9 * room
    if radius <= 0:
        raise PreconditionError(
            "no room for the mean-correction mollifier: cap overlaps the bulk"
        )
    moll = _mollifier(surface, anchor, radius)

    vec = cap
    if t != 0.0:
        if u0 is None:
            from . import spectrum

            if "lambda1" not in surface.cache:
                surface.cache["lambda1"] = spectrum.first_eigenpair(
                    surface, tol=1e-8
                )
            u0 = surface.cache["lambda1"].vector
        sign = 1.0 if u0[vertex] >= 0 else -1.0
        vec = cap + (t * sign) * u0

    m1 = assembly.mass_row_of_ones(surface)
    moll_mass = float(m1 @ moll)
    if abs(moll_mass) < 1e-300:
        raise NumericalError("mollifier has vanishing mass on this mesh")
    s_amp = -float(m1 @ vec) / moll_mass
    vec = vec + s_amp * moll

    vec = assembly.mean_zero_project(surface, vec)  # exact to roundoff
    raw = assembly.dirichlet_norm(surface, vec)
    if raw == 0.0:
        raise NumericalError("degenerate cap state")
    v = vec / raw
    return CapState(
        surface=surface,
        vertex=vertex,
        v=v,
        eps=eps,
        big_l=big_l,
        t=t,
        delta=delta,
        plateau=plateau,
        slope=slope,
        bump_amplitude=s_amp,
        raw_energy=raw * raw,
        peak=float(v[vertex]),
        bump_center=(float(anchor[0]), float(anchor[1])),
        bump_radius=radius,
    )


@dataclass(frozen=True)
class MoserSequenceParams:
    """Scalars of one capped-log witness: rates, radii, mean correction."""

    eps: float
    t: float
    delta: float
    s_amp: float
    vertex: int
    plateau_radius: float
    bump_center: tuple
    bump_radius: float


def moser_sequence(
    surface: Surface,
    eigenpair,
    vertex: int,
    eps: float,
    q: float = 0.28,
    delta: float | None = None,
):
    """Eigenfunction-reinforced capped-log witness at a boundary vertex.

    Interpolates cap + t·u₀ with t = (−log ε)^{−q}, cancels the mean with
    the bulk mollifier (amplitude solved exactly), and normalizes to unit
    energy.  Returns ``(field, MoserSequenceParams)``.  When ``delta`` is
    not given it is the coupled radius 1/(t√L) clipped to the domain.
    """
    if not (0 < q < 0.5):
        raise UsageError("t-exponent q must lie in (0, 0.5)")
    if not (0 < eps < 1):
        raise UsageError("cap parameter eps must lie in (0, 1)")
    _, t, delta_formula = rung_parameters(eps, q)
    if delta is None:
        delta = min(delta_formula, default_delta(surface, vertex))
    state = cap_state(surface, vertex, eps, delta, t=t, u0=eigenpair.vector)
    params = MoserSequenceParams(
        eps=eps,
        t=t,
        delta=delta,
        s_amp=state.bump_amplitude,
        vertex=vertex,
        plateau_radius=delta * math.sqrt(eps),
        bump_center=state.bump_center,
        bump_radius=state.bump_radius,
    )
    return state.v, params


# ---------------------------------------------------------------------------
# Divergence ladders
# ---------------------------------------------------------------------------


@dataclass
class LadderRung:
    """One ε-rung: adapted mesh plus the witness states living on it."""

    eps: float
    big_l: float
    t: float
    delta: float
    surface: Surface = field(repr=False)
    vertex: int
    state_plain: CapState = field(repr=False)
    state_eigen: CapState | None = field(repr=False)


@dataclass
class WitnessLadder:
    """Functional values of a witness family along an ε-ladder."""

    alpha: float
    beta: float
    threshold: float
    eps: list
    values: list
    ratios: list
    ts: list
    deltas: list
    t2l: list
    t2sqrtl: list
    peaks: list
    growth: bool
    used_eigen_branch: bool


def default_delta(surface: Surface, vertex: int) -> float:
    """Largest safe cap radius: 90% of the distance to the nearest corner."""
    return 0.9 * corner_free_radius(surface, vertex)


def rung_parameters(eps: float, q: float) -> tuple:
    """Per-rung construction scalars (L, t, δ_formula).

    t = L^{−q} with L = −log ε, and the coupled cap radius
    δ = 1/(t·√L) = L^{q−1/2}; callers clip δ to the domain geometry.
    """
    big_l = -math.log(eps)
    t = big_l ** (-q)
    return big_l, t, 1.0 / (t * math.sqrt(big_l))


def side_conditions(eps_ladder, q: float) -> dict:
    """Arithmetic of the two t-rate side conditions along a ladder.

    The construction needs t²L → ∞ and t²√L → 0 as ε → 0; on a finite
    ladder this is certified as strict trends (increasing / decreasing),
    which hold exactly when 1/4 < q < 1/2.
    """
    ls = [-math.log(float(e)) for e in eps_ladder]
    t2l = [lv ** (1.0 - 2.0 * q) for lv in ls]
    t2sqrtl = [lv ** (0.5 - 2.0 * q) for lv in ls]
    return {
        "t2l": t2l,
        "t2sqrtl": t2sqrtl,
        "t2l_increasing": all(b > a for a, b in zip(t2l, t2l[1:])),
        "t2sqrtl_decreasing": all(b < a for a, b in zip(t2sqrtl, t2sqrtl[1:])),
    }


def ladder_states(
    surface: Surface,
    vertex: int,
    eps_ladder,
    q: float = 0.28,
    delta: float | None = None,
    need_eigen_branch: bool = False,
    adapt: bool = True,
    ratio: float = 8.0,
) -> list:
    """Build per-rung adapted meshes and witness states.

    Each rung adapts the mesh around the cap center down to the plateau
    radius δ√ε, rebuilds the cap there, and (when requested) also builds
    the eigenfunction-reinforced state with t = L^{−q}.  When ``delta``
    is not given, each rung uses the coupled radius δ = 1/(t√L) clipped
    to 90% of the corner-free radius so the cap always fits the domain.
    """
    if not (0 < q < 0.5):
        raise UsageError("t-exponent q must lie in (0, 0.5)")
    eps_list = [float(e) for e in eps_ladder]
    if not eps_list or any(not (0 < e < 1) for e in eps_list):
        raise UsageError("eps ladder entries must lie in (0, 1)")
    if sorted(eps_list, reverse=True) != eps_list:
        raise UsageError("eps ladder must be strictly decreasing")
    delta_cap = default_delta(surface, vertex)
    x0 = surface.vertices[vertex].copy()

    rungs = []
    for eps in eps_list:
        big_l, t, delta_formula = rung_parameters(eps, q)
        delta_r = min(delta_formula, delta_cap) if delta is None else delta
        surf = surface
        if adapt:
            inner = delta_r * math.sqrt(eps)
            surf = adapt_for_point(surface, x0, inner_scale=inner,
                                   outer_radius=delta_r, ratio=ratio)
        vtx = smooth_boundary_vertex(surf, x0)
        if not np.allclose(surf.vertices[vtx], x0, atol=1e-12):
            raise NumericalError("cap center drifted during adaptation")
        plain = cap_state(surf, vtx, eps, delta_r, t=0.0)
        eig = cap_state(surf, vtx, eps, delta_r, t=t) if need_eigen_branch else None
        rungs.append(
            LadderRung(
                eps=eps,
                big_l=big_l,
                t=t,
                delta=delta_r,
                surface=surf,
                vertex=vtx,
                state_plain=plain,
                state_eigen=eig,
            )
        )
    return rungs


def evaluate_ladder(
    rungs: list, alpha: float, beta: float, threshold: float
) -> WitnessLadder:
    """Functional values of a prebuilt ladder at given (α, β).

    The eigenfunction-reinforced branch is used exactly when α reaches
    the spectral threshold of the base surface.
    """
    use_eigen = alpha >= threshold * (1.0 - 1e-12)
    values, ts, peaks = [], [], []
    for rung in rungs:
        state = rung.state_eigen if use_eigen else rung.state_plain
        if state is None:
            raise UsageError(
                "ladder was built without the eigenfunction branch; "
                "rebuild with need_eigen_branch=True"
            )
        fv = moser.functional_at_beta(rung.surface, state.v, alpha, beta)
        if fv.tainted:
            raise NumericalError(
                "witness evaluation overflowed the exponential range"
            )
        values.append(fv.value)
        ts.append(state.t)
        peaks.append(state.peak)
    ratios = [values[i + 1] / values[i] for i in range(len(values) - 1)]
    t_used = [t if use_eigen else 0.0 for t in ts]
    return WitnessLadder(
        alpha=alpha,
        beta=beta,
        threshold=threshold,
        eps=[r.eps for r in rungs],
        values=values,
        ratios=ratios,
        ts=t_used,
        deltas=[r.delta for r in rungs],
        t2l=[t * t * r.big_l for t, r in zip(t_used, rungs)],
        t2sqrtl=[t * t * math.sqrt(r.big_l) for t, r in zip(t_used, rungs)],
        peaks=peaks,
        growth=bool(ratios and ratios[-1] >= 2.0),
        used_eigen_branch=use_eigen,
    )


def peak_boundary_vertex(surface: Surface) -> int:
    """Boundary vertex where u₀ peaks, kept clear of domain corners.

    Among non-corner boundary vertices whose u₀ value is within 1e-9
    (relative) of the boundary maximum, prefers the one farthest from
    the corners; the final tie-break is the lowest index.
    """
    from . import spectrum

    if "lambda1" not in surface.cache:
        surface.cache["lambda1"] = spectrum.first_eigenpair(surface, tol=1e-8)
    u0 = surface.cache["lambda1"].vector
    corner_set = set(int(c) for c in surface.corner_vertex_indices())
    candidates = [
        int(i) for i in surface.boundary_vertex_indices() if int(i) not in corner_set
    ]
    if not candidates:
        raise PreconditionError("no smooth boundary vertex available")
    top = max(u0[i] for i in candidates)
    band = [i for i in candidates if u0[i] >= top - 1e-9 * max(abs(top), 1.0)]
    return min(band, key=lambda i: (-corner_free_radius(surface, i), i))


def divergence_witness(
    surface: Surface,
    alpha: float,
    eps_ladder,
    vertex: int | None = None,
    beta: float = TWO_PI,
    q: float = 0.28,
    delta: float | None = None,
    adapt: bool = True,
    ratio: float = 8.0,
) -> WitnessLadder:
    """Witness ladder for one α: values, ratios, side-condition data."""
    from . import spectrum

    if "lambda1" not in surface.cache:
        surface.cache["lambda1"] = spectrum.first_eigenpair(surface, tol=1e-8)
    threshold = surface.cache["lambda1"].value
    if vertex is None:
        vertex = peak_boundary_vertex(surface)
    need_eigen = alpha >= threshold * (1.0 - 1e-12)
    rungs = ladder_states(
        surface, vertex, eps_ladder, q=q, delta=delta,
        need_eigen_branch=need_eigen, adapt=adapt, ratio=ratio,
    )
    return evaluate_ladder(rungs, alpha, beta, threshold)


def divergence_matrix(
    surface: Surface,
    alphas,
    eps_ladder,
    vertex: int | None = None,
    beta: float = TWO_PI,
    q: float = 0.28,
    delta: float | None = None,
    adapt: bool = True,
    ratio: float = 8.0,
) -> dict:
    """Witness values over an (ε, α) grid with per-α growth flags.

    Adapted rung meshes and cap states are shared across all α; only the
    functional evaluation differs, so the matrix is cheap in α.
    """
    from . import spectrum

    if "lambda1" not in surface.cache:
        surface.cache["lambda1"] = spectrum.first_eigenpair(surface, tol=1e-8)
    threshold = surface.cache["lambda1"].value
    if vertex is None:
        vertex = peak_boundary_vertex(surface)
    alphas = [float(a) for a in alphas]
    need_eigen = any(a >= threshold * (1.0 - 1e-12) for a in alphas)
    rungs = ladder_states(
        surface, vertex, eps_ladder, q=q, delta=delta,
        need_eigen_branch=need_eigen, adapt=adapt, ratio=ratio,
    )
    ladders = [evaluate_ladder(rungs, a, beta, threshold) for a in alphas]
    return {
        "alphas": alphas,
        "eps": [r.eps for r in rungs],
        "beta": beta,
        "lambda1": threshold,
        "values": [lad.values for lad in ladders],  # indexed [alpha][eps]
        "ratios": [lad.ratios for lad in ladders],
        "growth_flags": [lad.growth for lad in ladders],
        "eigen_branch": [lad.used_eigen_branch for lad in ladders],
        "ts": [lad.ts for lad in ladders],
        "t2l": [lad.t2l for lad in ladders],
        "t2sqrtl": [lad.t2sqrtl for lad in ladders],
        "ladders": ladders,
    }


# ---------------------------------------------------------------------------
# Glued bubble + Green lower-bound states
# ---------------------------------------------------------------------------


@dataclass
class GluedState:
    """Normalized glued state u_ε and its certification data."""

    surface: Surface = field(repr=False)
    vertex: int
    v: np.ndarray = field(repr=False)
    eps: float
    big_r: float
    c_sq: float
    b: float
    denom: float
    a_const: float
    green_norm_sq: float
    bound: float
    alpha: float
    prenorm: float


def sharp_bound(area: float, a_const: float) -> float:
    """The concentration threshold value Area + (π/2)·e^{1+2πA}."""
    return area + 0.5 * math.pi * math.exp(1.0 + TWO_PI * a_const)


def glued_sequence(surface: Surface, green, eps: float) -> GluedState:
    """Build the glued bubble+Green state of scale ε from a Green solution.

    ``green`` is the Green result at a smooth boundary vertex of *this*
    surface (already adapted so the ε-scale is resolved).  Inner region
    r < Rε (R = −log ε): scaled bubble
        (c² − (1/2π)·log(1 + (π/2) r²/ε²) + b) / denom;
    transition Rε ≤ r < 2Rε: (G − ξσ)/denom with a linear ramp ξ: 1 → 0;
    outer: G/denom; with c² = A − (1/π)log ε + (1/2π)log(π/2) − 1/(2π),
    b chosen for continuity at Rε, denom = √(c² + α‖G‖₂²).  The state is
    then mean-corrected (constant shift) and rescaled to unit energy,
    hence exactly admissible.
    """
    if not (0 < eps < 0.1):
        raise UsageError("glued-state scale eps must lie in (0, 0.1)")
    if np.asarray(green.values).shape != (surface.num_vertices,):
        raise UsageError("Green solution does not live on this mesh")
    vtx = green.vertex
    alpha = green.alpha
    x0 = green.x0
    a_const, _ = green_mod.extract_A(surface, green)
    sigma = green_mod.sigma_field(surface, green, a_const)

    big_r = -math.log(eps)
    c_sq = (
        a_const
        - math.log(eps) / math.pi
        + math.log(math.pi / 2.0) / TWO_PI
        - 1.0 / TWO_PI
    )
    if c_sq <= 0:
        raise PreconditionError(
            "glued construction needs a smaller eps: c^2 is not positive"
        )
    b = (
        -math.log(big_r * eps) / math.pi
        + a_const
        - c_sq
        + math.log(1.0 + 0.5 * math.pi * big_r * big_r) / TWO_PI
    )
    denom = math.sqrt(c_sq + alpha * green.norm_l2_sq)

    r = np.hypot(surface.vertices[:, 0] - x0[0], surface.vertices[:, 1] - x0[1])
    inner = r < big_r * eps
    middle = (~inner) & (r < 2.0 * big_r * eps)
    u = np.array(green.values) / denom  # outer region default
    u[inner] = (
        c_sq - np.log1p(0.5 * math.pi * (r[inner] / eps) ** 2) / TWO_PI + b
    ) / denom
    xi = np.clip((2.0 * big_r * eps - r[middle]) / (big_r * eps), 0.0, 1.0)
    u[middle] = (green.values[middle] - xi * sigma[middle]) / denom

    u = assembly.mean_zero_project(surface, u)
    prenorm = assembly.dirichlet_norm(surface, u)
    if prenorm == 0.0:
        raise NumericalError("degenerate glued state")
    u = u / prenorm

    return GluedState(
        surface=surface,
        vertex=vtx,
        v=u,
        eps=eps,
        big_r=big_r,
        c_sq=c_sq,
        b=b,
        denom=denom,
        a_const=a_const,
        green_norm_sq=green.norm_l2_sq,
        bound=sharp_bound(assembly.area(surface), a_const),
        alpha=alpha,
        prenorm=prenorm,
    )


def glued_state(
    surface: Surface,
    vertex: int,
    eps: float,
    alpha: float = 0.0,
    adapt: bool = True,
    ratio: float = 8.0,
) -> GluedState:
    """Adapt near the vertex, solve the Green problem, glue the state.

    Convenience driver around :func:`glued_sequence`: grades the mesh so
    the bubble core scale ε is resolved, re-locates the center vertex,
    and computes the α-modified Green solution there.
    """
    if not (0 < eps < 0.1):
        raise UsageError("glued-state scale eps must lie in (0, 0.1)")
    x0 = surface.vertices[vertex].copy()
    surf = surface
    if adapt:
        surf = adapt_for_point(
            surface, x0, inner_scale=eps, outer_radius=0.5, ratio=ratio
        )
    vtx = smooth_boundary_vertex(surf, x0)
    if not np.allclose(surf.vertices[vtx], x0, atol=1e-12):
        raise NumericalError("glue center drifted during adaptation")
    gres = green_mod.green_function(surf, vtx, alpha=alpha)
    return glued_sequence(surf, gres, eps)


def lower_bound_check(
    surface: Surface,
    vertex: int,
    eps: float,
    alpha: float = 0.0,
    adapt: bool = True,
    alpha_cap_fraction: float = 0.1,
) -> dict:
    """Evaluate the glued state at the critical exponent against the bound.

    Returns the functional value, the target Area + (π/2)e^{1+2πA}, the
    margin (value − bound), and ``passed`` = strict exceedance.  The
    quadratic coefficient must stay small (α ≤ alpha_cap_fraction·λ₁):
    the certified inequality is asymptotic in small α.
    """
    if alpha > 0.0:
        from . import spectrum

        if "lambda1" not in surface.cache:
            surface.cache["lambda1"] = spectrum.first_eigenpair(surface, tol=1e-8)
        lam1 = surface.cache["lambda1"].value
        if alpha > alpha_cap_fraction * lam1 * (1.0 + 1e-12):
            raise PreconditionError(
                f"alpha = {alpha} exceeds {alpha_cap_fraction}·lambda1 "
                f"= {alpha_cap_fraction * lam1:.6f}; the exceedance "
                "experiment is only meaningful for small alpha"
            )
    state = glued_state(surface, vertex, eps, alpha=alpha, adapt=adapt)
    fv = moser.functional_at_beta(state.surface, state.v, alpha, TWO_PI)
    if fv.tainted:
        raise NumericalError("glued-state evaluation overflowed")
    return {
        "eps": eps,
        "alpha": alpha,
        "value": fv.value,
        "bound": state.bound,
        "margin": fv.value - state.bound,
        "passed": bool(fv.value > state.bound),
        "A": state.a_const,
        "b": state.b,
        "c_sq": state.c_sq,
        "green_norm_sq": state.green_norm_sq,
        "state": state,
    }


# ---------------------------------------------------------------------------
# Concentration study (maximizers vs. the bubble)
# ---------------------------------------------------------------------------


@dataclass
class ConcentrationResult:
    """One subcriticality rung of the profile-convergence experiment."""

    eps: float
    c: float
    r: float
    x: np.ndarray
    value: float
    residual: float
    deviation: float
    unit_gap: float
    surface: Surface = field(repr=False)
    u: np.ndarray = field(repr=False)
    diag: "moser.BlowupDiagnostics" = field(repr=False)


def _peak_resolution(surface: Surface, vertex: int) -> float:
    """Longest edge among triangles touching the given vertex."""
    mask = np.any(surface.triangles == vertex, axis=1)
    if not mask.any():
        raise NumericalError("peak vertex not referenced by any triangle")
    return float(surface.edge_lengths()[mask].max())


def concentration_study(
    surface: Surface,
    vertex: int,
    eps_ladder=(1.0, 0.5, 0.25),
    alpha: float = 0.0,
    seed_scale: float = 0.02,
    max_adapt_rounds: int = 6,
    tol: float = 1e-8,
    resolve_factor: float = 6.0,
) -> list:
    """Maximize at shrinking subcriticality and compare against the bubble.

    Each rung seeds the optimizer with a glued bubble+Green state at the
    witness center, then alternates maximize → measure the concentration
    radius r → re-adapt the mesh near the peak until the local mesh size
    resolves r, warm-restarting from the interpolated previous state.
    Returns one :class:`ConcentrationResult` per subcriticality ε.
    """
    eps_list = [float(e) for e in eps_ladder]
    x0 = surface.vertices[vertex].copy()

    seed_state = glued_state(surface, vertex, seed_scale, alpha=alpha)
    surf = seed_state.surface
    u_seed = seed_state.v
    results = []
    for eps in eps_list:
        res = moser.maximize_subcritical(surf, alpha, eps, u0=u_seed, tol=tol)
        diag = moser.blowup_diagnostics(surf, res.u, alpha, eps)
        for _ in range(max_adapt_rounds):
            local = _peak_resolution(surf, diag.vertex)
            if local <= diag.r / resolve_factor:
                break
            new_surf = adapt_for_point(
                surf,
                diag.x,
                inner_scale=diag.r,
                outer_radius=min(0.5, 200.0 * diag.r),
                ratio=resolve_factor * 1.5,
            )
            u_new = assembly.evaluate(surf, res.u, new_surf.vertices)
            # Interpolation is exact on old-mesh functions; re-admissibilize.
            u_new = assembly.mean_zero_project(new_surf, u_new)
            nrm = assembly.dirichlet_norm(new_surf, u_new)
            if nrm == 0.0:
                raise NumericalError("state transfer degenerated")
            surf = new_surf
            res = moser.maximize_subcritical(
                surf, alpha, eps, u0=u_new / nrm, tol=tol
            )
            diag = moser.blowup_diagnostics(surf, res.u, alpha, eps)
        results.append(
            ConcentrationResult(
                eps=eps,
                c=diag.c,
                r=diag.r,
                x=diag.x,
                value=res.value,
                residual=res.residual,
                deviation=bubble_profile_deviation(diag),
                unit_gap=unit_radius_gap(diag),
                surface=surf,
                u=res.u,
                diag=diag,
            )
        )
        u_seed = res.u  # warm start for the next subcriticality rung
    return results
