"""Command-line driver: mesh building, eigensolves, maximization, sweeps,
witness constructions, and Green-function extraction, with deterministic
file outputs.

Every command validates its inputs up front, computes, and then writes
results through the canonical serializer in :mod:`tmlab.records`; no
partial files are left behind on error.  Exit codes: 0 success, 2 usage
error, 3 violated mathematical precondition, 4 numerical failure.

Outputs are byte-identical across repeated runs of the same command line
on the same input files; pass ``--timing`` to embed wall-clock seconds at
the cost of that reproducibility.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import green as green_mod
from . import moser, records, spectrum, witness
from . import surface as surface_mod
from .errors import NumericalError, TmlabError, UsageError

TWO_PI = 2.0 * math.pi

_SHAPES = {
    "half-disk": "half_disk",
    "rectangle": "rectangle",
    "disk-sector": "disk_sector",
}


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _load_surface(path: str) -> tuple:
    """Read a mesh JSON file; returns (surface, content-hash of the file)."""
    doc = records.read_json(path)
    surf = surface_mod.Surface.from_dict(doc)
    surf.validate()
    return surf, records.hash_file(path)


def _parse_float_list(text: str, name: str) -> list:
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse {name} {text!r}: {exc}") from exc
    if not vals:
        raise UsageError(f"{name} must name at least one value")
    return vals


def _parse_point(text: str) -> np.ndarray:
    vals = _parse_float_list(text, "point")
    if len(vals) != 2:
        raise UsageError("point must be two comma-separated coordinates")
    return np.asarray(vals)


def _parse_annuli(text: str) -> list:
    annuli = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.split(":")
        if len(parts) != 2:
            raise UsageError(
                f"annulus {tok!r} must look like r_inner:r_outer"
            )
        try:
            r0, r1 = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise UsageError(f"cannot parse annulus {tok!r}: {exc}") from exc
        if not (0 < r0 < r1):
            raise UsageError(f"annulus {tok!r} needs 0 < r_inner < r_outer")
        annuli.append((r0, r1))
    if not annuli:
        raise UsageError("at least one annulus is required")
    return annuli


def _record(command: str, params: dict, input_hashes: dict,
            started: float, timing: bool) -> records.RunRecord:
    elapsed = (time.monotonic() - started) if timing else None
    return records.RunRecord(
        command=command,
        params=params,
        input_hashes=input_hashes,
        elapsed_seconds=elapsed,
    )


def _field_out_path(out: str, tag: str) -> str:
    stem = out[:-5] if out.endswith(".json") else out
    return f"{stem}.{tag}.json"


def _write_field(path: str, values, mesh_hash: str,
                 record: records.RunRecord) -> None:
    payload = {
        "format_version": 1,
        "kind": "field",
        "mesh_hash": mesh_hash,
        "values": [float(v) for v in values],
    }
    records.write_json(path, payload, record)


def _write_profile(path: str, xs, ys, record: records.RunRecord) -> None:
    """Two-column whitespace-separated plot data with a comment header."""
    import json as _json

    compact = _json.dumps(record.to_dict(), separators=(",", ":"))
    lines = [f"# run_record: {compact}"]
    for x, y in zip(xs, ys):
        lines.append(f"{float(x):.17g} {float(y):.17g}")
    records.write_text_atomic(path, "\n".join(lines) + "\n")


def _radial_profile(surf: surface_mod.Surface, values, center,
                    r_max: float) -> tuple:
    """Per-vertex (distance-to-center, value) pairs sorted by distance."""
    r = np.hypot(surf.vertices[:, 0] - center[0],
                 surf.vertices[:, 1] - center[1])
    keep = np.flatnonzero(r <= r_max)
    order = keep[np.lexsort((keep, r[keep]))]
    return r[order], np.asarray(values)[order]


def _jobs_default() -> int:
    raw = os.environ.get("TMLAB_JOBS", "1")
    try:
        jobs = int(raw)
    except ValueError as exc:
        raise UsageError(f"TMLAB_JOBS={raw!r} is not an integer") from exc
    if jobs < 1:
        raise UsageError("jobs must be at least 1")
    return jobs


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------


def cmd_mesh(args) -> int:
    started = time.monotonic()
    input_hashes = {}
    if args.refine:
        if args.shape is not None:
            raise UsageError("--refine and --shape are mutually exclusive")
        surf, mesh_hash = _load_surface(args.refine)
        input_hashes["mesh"] = mesh_hash
        times = args.times if args.times is not None else 1
        if times < 1:
            raise UsageError("--times must be at least 1 when refining")
        for _ in range(times):
            surf = surface_mod.refine(surf)
        params = {"refine": args.refine, "times": times}
    else:
        if args.shape is None:
            raise UsageError("either --shape or --refine is required")
        kind = _SHAPES[args.shape]
        if kind == "rectangle":
            if args.width is None or args.height is None:
                raise UsageError("rectangle needs --width and --height")
            shape_params = (args.width, args.height)
        elif kind == "half_disk":
            shape_params = (args.radius,)
        else:
            if args.angle is None:
                raise UsageError("disk-sector needs --angle (radians)")
            shape_params = (args.radius, args.angle)
        if args.h is None:
            raise UsageError("--h (target edge length) is required")
        spec = surface_mod.DomainSpec(kind, shape_params, args.f)
        surf = surface_mod.build_domain(spec, args.h)
        times = args.times if args.times is not None else 0
        if times < 0:
            raise UsageError("--times must be nonnegative")
        for _ in range(times):
            surf = surface_mod.refine(surf)
        params = {
            "shape": args.shape,
            "params": list(shape_params),
            "h": args.h,
            "f": args.f,
            "times": times,
        }
    record = _record("mesh", params, input_hashes, started, args.timing)
    records.write_json(args.out, surf.to_dict(), record)
    print(
        f"mesh: {surf.num_vertices} vertices, {surf.num_triangles} "
        f"triangles -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# eigen
# ---------------------------------------------------------------------------


def cmd_eigen(args) -> int:
    started = time.monotonic()
    surf, mesh_hash = _load_surface(args.mesh)
    pair = spectrum.first_eigenpair(surf, tol=args.tol)
    field_path = args.field or _field_out_path(args.out, "u0")
    params = {"mesh": args.mesh, "tol": args.tol}
    record = _record("eigen", params, {"mesh": mesh_hash}, started, args.timing)
    _write_field(field_path, pair.vector, mesh_hash, record)
    payload = {
        "format_version": 1,
        "lambda1": pair.value,
        "residual": pair.residual,
        "iterations": pair.iterations,
        "u0_file": field_path,
    }
    records.write_json(args.out, payload, record)
    print(f"eigen: lambda1 = {pair.value:.12g} "
          f"(residual {pair.residual:.3e}) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# maximize
# ---------------------------------------------------------------------------


def _eigen_seed(surf: surface_mod.Surface) -> np.ndarray:
    if "lambda1" not in surf.cache:
        surf.cache["lambda1"] = spectrum.first_eigenpair(surf, tol=1e-8)
    return surf.cache["lambda1"].vector.copy()


def _bubble_seed(surf: surface_mod.Surface) -> np.ndarray:
    """Concentrated log-cap seed at the eigenfunction's boundary peak."""
    vertex = witness.peak_boundary_vertex(surf)
    delta = witness.default_delta(surf, vertex)
    state = witness.cap_state(surf, vertex, eps=1e-3, delta=delta, t=0.0)
    return state.v


def cmd_maximize(args) -> int:
    started = time.monotonic()
    surf, mesh_hash = _load_surface(args.mesh)
    if args.eps <= 0 or args.eps >= TWO_PI:
        raise UsageError("eps must lie in (0, 2*pi)")
    if args.alpha < 0:
        raise UsageError("alpha must be nonnegative")

    seed_names = ["eigen", "bubble"] if args.seed == "both" else [args.seed]
    seeds = {}
    best_name, best = None, None
    for name in seed_names:
        u0 = _eigen_seed(surf) if name == "eigen" else _bubble_seed(surf)
        res = moser.maximize_subcritical(
            surf, args.alpha, args.eps, u0=u0, tol=args.tol
        )
        seeds[name] = res
        if best is None or (res.converged and not best.converged) or (
            res.converged == best.converged and res.value > best.value
        ):
            best_name, best = name, res

    field_path = args.field or _field_out_path(args.out, "u")
    params = {
        "mesh": args.mesh,
        "alpha": args.alpha,
        "eps": args.eps,
        "seed": args.seed,
        "tol": args.tol,
    }
    record = _record("maximize", params, {"mesh": mesh_hash}, started,
                     args.timing)
    _write_field(field_path, best.u, mesh_hash, record)

    def seed_block(res) -> dict:
        coeff = moser.el_coefficients(surf, res.u, args.alpha, args.eps)
        return {
            "F_value": res.value,
            "converged": res.converged,
            "el_residual": res.residual,
            "ascent_iterations": res.ascent_iterations,
            "newton_iterations": res.newton_iterations,
            "norm_l2_sq": coeff.norm_sq,
            "lambda_eps": coeff.lambda_eps,
        }

    payload = {
        "format_version": 1,
        "alpha": args.alpha,
        "eps": args.eps,
        "beta": TWO_PI - args.eps,
        "seeds": {name: seed_block(res) for name, res in seeds.items()},
        "best_seed": best_name,
        "F_value": best.value,
        "converged": best.converged,
        "el_residual": best.residual,
        "u_file": field_path,
    }
    records.write_json(args.out, payload, record)
    print(
        f"maximize: F = {best.value:.12g} via {best_name} seed "
        f"(converged={best.converged}) -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    started = time.monotonic()
    surf, mesh_hash = _load_surface(args.mesh)
    alphas = _parse_float_list(args.alphas, "alpha grid")
    eps_ladder = _parse_float_list(args.eps_ladder, "eps ladder")
    if any(a < 0 for a in alphas):
        raise UsageError("alpha grid entries must be nonnegative")
    jobs = args.jobs if args.jobs is not None else _jobs_default()

    if "lambda1" not in surf.cache:
        surf.cache["lambda1"] = spectrum.first_eigenpair(surf, tol=1e-8)
    threshold = surf.cache["lambda1"].value
    if args.relative:
        alphas = [a * threshold for a in alphas]
    vertex = witness.peak_boundary_vertex(surf)
    need_eigen = any(a >= threshold * (1.0 - 1e-12) for a in alphas)

    # Rung meshes and cap states are shared across the whole alpha grid;
    # building them is the expensive part, so it happens once, serially.
    rungs = witness.ladder_states(
        surf, vertex, eps_ladder, q=args.q,
        need_eigen_branch=need_eigen, adapt=not args.no_adapt,
    )

    def cell(alpha: float) -> witness.WitnessLadder:
        return witness.evaluate_ladder(rungs, alpha, args.beta, threshold)

    if jobs == 1 or len(alphas) == 1:
        ladders = [cell(a) for a in alphas]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            ladders = list(pool.map(cell, alphas))

    header = [
        "alpha", "level", "eps", "t", "delta", "F_value", "ratio", "growth",
    ]
    rows = []
    for lad in ladders:
        for level, eps in enumerate(lad.eps):
            ratio = lad.ratios[level - 1] if level > 0 else ""
            rows.append([
                lad.alpha, level, eps, lad.ts[level], lad.deltas[level],
                lad.values[level], ratio, lad.growth,
            ])
    params = {
        "mesh": args.mesh,
        "alphas": args.alphas,
        "relative": args.relative,
        "eps_ladder": args.eps_ladder,
        "beta": args.beta,
        "q": args.q,
        "jobs": jobs,
        "lambda1": threshold,
        "vertex": vertex,
    }
    record = _record("sweep", params, {"mesh": mesh_hash}, started,
                     args.timing)
    records.write_csv(args.out, header, rows, record)
    grown = sum(1 for lad in ladders if lad.growth)
    print(
        f"sweep: {len(alphas)} alpha x {len(eps_ladder)} eps "
        f"({grown} growing ladders) -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# witness
# ---------------------------------------------------------------------------


def _witness_bubble(args, started) -> int:
    n = args.samples
    if n < 2:
        raise UsageError("--samples must be at least 2")
    if args.rho_max <= 0:
        raise UsageError("--rho-max must be positive")
    rho = np.linspace(0.0, args.rho_max, n)
    phi = witness.bubble_phi(rho)
    payload = {
        "format_version": 1,
        "kind": "bubble",
        "rho_max": args.rho_max,
        "samples": n,
        "phi_at_zero": float(witness.bubble_phi(0.0)),
        "phi_at_one": float(witness.bubble_phi(1.0)),
        "mass_total": witness.bubble_mass(np.inf),
        "mass_within_rho_max": witness.bubble_mass(args.rho_max),
    }
    params = {
        "kind": "bubble", "rho_max": args.rho_max, "samples": n,
    }
    record = _record("witness", params, {}, started, args.timing)
    records.write_json(args.out, payload, record)
    if args.plot:
        _write_profile(args.plot, rho, phi, record)
    print(f"witness bubble: phi(1) = {payload['phi_at_one']:.9g} -> {args.out}")
    return 0


def _witness_moser(args, started) -> int:
    surf, mesh_hash = _load_surface(args.mesh)
    if "lambda1" not in surf.cache:
        surf.cache["lambda1"] = spectrum.first_eigenpair(surf, tol=1e-8)
    eigenpair = surf.cache["lambda1"]
    vertex = args.vertex if args.vertex is not None \
        else witness.peak_boundary_vertex(surf)
    v, seq = witness.moser_sequence(surf, eigenpair, vertex, args.eps,
                                    q=args.q)
    fv = moser.functional_at_beta(surf, v, args.alpha, args.beta)
    if fv.tainted:
        raise NumericalError(
            "witness evaluation overflowed the exponential range; "
            "lower --beta or raise --eps"
        )
    payload = {
        "format_version": 1,
        "kind": "moser",
        "alpha": args.alpha,
        "beta": args.beta,
        "lambda1": eigenpair.value,
        "eps": seq.eps,
        "t": seq.t,
        "delta": seq.delta,
        "bump_amplitude": seq.s_amp,
        "vertex": seq.vertex,
        "center": [float(c) for c in surf.vertices[seq.vertex]],
        "plateau_radius": seq.plateau_radius,
        "F_value": fv.value,
    }
    params = {
        "kind": "moser", "mesh": args.mesh, "eps": args.eps,
        "alpha": args.alpha, "beta": args.beta, "q": args.q,
        "vertex": args.vertex,
    }
    record = _record("witness", params, {"mesh": mesh_hash}, started,
                     args.timing)
    records.write_json(args.out, payload, record)
    if args.plot:
        xs, ys = _radial_profile(surf, v, surf.vertices[seq.vertex],
                                 r_max=3.0 * seq.delta)
        _write_profile(args.plot, xs, ys, record)
    print(f"witness moser: F = {fv.value:.12g} -> {args.out}")
    return 0


def _witness_glued(args, started) -> int:
    surf, mesh_hash = _load_surface(args.mesh)
    vertex = args.vertex if args.vertex is not None \
        else witness.peak_boundary_vertex(surf)
    check = witness.lower_bound_check(surf, vertex, args.eps,
                                      alpha=args.alpha)
    state = check.pop("state")
    payload = {"format_version": 1, "kind": "glued"}
    payload.update(check)
    payload["prenorm"] = state.prenorm
    payload["vertex"] = state.vertex
    params = {
        "kind": "glued", "mesh": args.mesh, "eps": args.eps,
        "alpha": args.alpha, "vertex": args.vertex,
    }
    record = _record("witness", params, {"mesh": mesh_hash}, started,
                     args.timing)
    records.write_json(args.out, payload, record)
    if args.plot:
        xs, ys = _radial_profile(
            state.surface, state.v,
            state.surface.vertices[state.vertex], r_max=1.0,
        )
        _write_profile(args.plot, xs, ys, record)
    print(
        f"witness glued: F = {check['value']:.12g} vs bound "
        f"{check['bound']:.12g} (passed={check['passed']}) -> {args.out}"
    )
    return 0


def cmd_witness(args) -> int:
    started = time.monotonic()
    if args.kind == "bubble":
        return _witness_bubble(args, started)
    if args.mesh is None:
        raise UsageError(f"witness kind {args.kind!r} requires --mesh")
    if not (0 < args.eps < 0.1):
        raise UsageError("eps must lie in (0, 0.1) for witness states")
    if args.kind == "moser":
        return _witness_moser(args, started)
    return _witness_glued(args, started)


# ---------------------------------------------------------------------------
# green
# ---------------------------------------------------------------------------


def cmd_green(args) -> int:
    started = time.monotonic()
    surf, mesh_hash = _load_surface(args.mesh)
    if (args.vertex is None) == (args.point is None):
        raise UsageError("exactly one of --vertex/--point is required")
    if args.vertex is not None:
        vertex = args.vertex
    else:
        vertex = witness.smooth_boundary_vertex(surf, _parse_point(args.point))
    annuli = _parse_annuli(args.annuli)

    result = green_mod.green_function(surf, vertex, alpha=args.alpha)
    decomp = green_mod.green_decomposition(surf, result, annuli=annuli)
    sigma = decomp.pop("sigma")

    field_path = args.field or _field_out_path(args.out, "G")
    params = {
        "mesh": args.mesh,
        "vertex": vertex,
        "alpha": args.alpha,
        "annuli": args.annuli,
    }
    record = _record("green", params, {"mesh": mesh_hash}, started,
                     args.timing)
    _write_field(field_path, result.values, mesh_hash, record)

    payload = {
        "format_version": 1,
        "vertex": vertex,
        "x0": [float(c) for c in result.x0],
        "alpha": args.alpha,
        "A_x0": decomp["A_estimates"][0],
        "sigma_max_abs": float(np.max(np.abs(sigma))),
        "G_file": field_path,
    }
    payload.update(decomp)
    records.write_json(args.out, payload, record)
    print(
        f"green: A = {payload['A_x0']:.9g} (spread {decomp['A_spread']:.3g}, "
        f"residual {decomp['residual']:.3e}) -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmlab",
        description=(
            "Numerical laboratory for a sharp mean-zero exponential-class "
            "inequality on surfaces with boundary."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output file path")
        p.add_argument("--timing", action="store_true",
                       help="embed wall-clock seconds (breaks determinism)")

    p = sub.add_parser("mesh", help="build or refine a triangulated domain")
    p.add_argument("--shape", choices=sorted(_SHAPES))
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--width", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--angle", type=float, help="sector angle in radians")
    p.add_argument("--h", type=float, help="target edge length")
    p.add_argument("--f", help="conformal factor expression in x1, x2")
    p.add_argument("--refine", metavar="MESH_JSON",
                   help="refine an existing mesh file instead of building")
    p.add_argument("--times", type=int,
                   help="uniform refinements to apply "
                        "(default 1 with --refine, else 0)")
    common(p)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("eigen", help="first mean-zero Neumann eigenpair")
    p.add_argument("--mesh", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--field", help="output path for the eigenfunction")
    common(p)
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("maximize", help="maximize the subcritical functional")
    p.add_argument("--mesh", required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--eps", type=float, required=True,
                   help="subcritical defect: exponent rate is 2*pi - eps")
    p.add_argument("--seed", choices=["eigen", "bubble", "both"],
                   default="both")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--field", help="output path for the maximizer field")
    common(p)
    p.set_defaults(func=cmd_maximize)

    p = sub.add_parser("sweep", help="witness values over an (alpha, eps) grid")
    p.add_argument("--mesh", required=True)
    p.add_argument("--alphas", required=True,
                   help="comma-separated alpha grid")
    p.add_argument("--relative", action="store_true",
                   help="read --alphas as multiples of lambda1")
    p.add_argument("--eps-ladder", required=True,
                   help="comma-separated decreasing concentration scales")
    p.add_argument("--beta", type=float, default=TWO_PI)
    p.add_argument("--q", type=float, default=0.28,
                   help="eigen-branch amplitude exponent t = L^-q")
    p.add_argument("--no-adapt", action="store_true",
                   help="skip per-rung mesh adaptation")
    p.add_argument("--jobs", type=int,
                   help="worker threads (default: TMLAB_JOBS or 1)")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("witness", help="explicit concentration constructions")
    p.add_argument("--kind", choices=["moser", "glued", "bubble"],
                   required=True)
    p.add_argument("--mesh")
    p.add_argument("--eps", type=float, default=1e-4,
                   help="concentration scale of the construction")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=TWO_PI)
    p.add_argument("--q", type=float, default=0.28)
    p.add_argument("--vertex", type=int,
                   help="boundary vertex index of the concentration point")
    p.add_argument("--rho-max", type=float, default=5.0,
                   help="bubble: largest sampled radius")
    p.add_argument("--samples", type=int, default=201,
                   help="bubble: number of radial samples")
    p.add_argument("--plot", help="optional two-column profile output path")
    common(p)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("green", help="mean-zero Green function at a boundary pole")
    p.add_argument("--mesh", required=True)
    p.add_argument("--vertex", type=int, help="pole vertex index")
    p.add_argument("--point", help="pole location x,y (nearest boundary vertex)")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--annuli", default="0.1:0.2,0.2:0.3",
                   help="comma-separated r_inner:r_outer annuli")
    p.add_argument("--field", help="output path for the Green field")
    common(p)
    p.set_defaults(func=cmd_green)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TmlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
