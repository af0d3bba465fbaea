"""Batch command-line front end.

Subcommands: run, uniton, gauss, dress, complete, verify. Every command reads
one JSON config, writes field exports plus a single JSON report into --out,
and exits 0 when every threshold holds, 2 on configuration errors and 3 on
numerical failures. Reports are deterministic: identical config and build give
byte-identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .demos import DEMO_TRUNC, demo_potential
from .dpw import (alpha_prime, extended_solution, gauge_structure_defect,
                  harmonic_map, verify_extended_solution, verify_harmonic)
from .dressing import SimpleFactor, completion_limit_experiment, dress_plus, dress_simple
from .errors import ConfigError, NumericalError
from .fields import GridSpec, LoopField, SubbundleField
from .grassmann import (add_uniton, cartan_invert, derivative_identity_check,
                        gauss_bundle, second_fundamental_forms, uniton_condition_check)
from .iwasawa import iwasawa_factorize
from .loops import LaurentLoop, loop_distance
from .matrices import hermitian_projection, projections_from_frames
from .potentials import (FramePoly, build_uniton_gauge, gauge_action,
                         plus_gauge, potential_from_json)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_THRESHOLDS = {
    "extended": 1e-5,     # support / structural / conjugacy defects
    "alpha_prime": 1e-6,  # dz-coefficient cross-check
    "harmonic": 1e-4,     # harmonic-map residual
    "identity": 1e-6,     # pipeline-vs-pipeline distances
}

_TOP_KEYS = {"schema", "n", "grid", "trunc", "tol", "potential", "uniton",
             "dressing", "gauss", "complete", "verify"}


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if cfg.get("schema", 1) != 1:
        raise ConfigError(f"unsupported config schema {cfg.get('schema')}")
    return cfg


def _grid_from_config(cfg: dict, override_samples: int | None) -> GridSpec:
    gc = cfg.get("grid", {})
    if not isinstance(gc, dict):
        raise ConfigError("grid block must be an object")
    unknown = set(gc) - {"center", "half_width", "samples"}
    if unknown:
        raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
    half_width = float(gc.get("half_width", 0.25))
    samples = int(gc.get("samples", 17))
    center = gc.get("center", [0.0, 0.0])
    if override_samples:
        samples = override_samples
    return GridSpec(half_width, samples, complex(center[0], center[1]))


def _potential_from_config(cfg: dict, trunc: int):
    spec = cfg.get("potential")
    if spec is None:
        raise ConfigError("config needs a 'potential' block")
    if isinstance(spec, dict) and spec.get("type") == "demo":
        unknown = set(spec) - {"type", "name"}
        if unknown:
            raise ConfigError(f"unknown demo keys: {sorted(unknown)}")
        return demo_potential(spec["name"], trunc)
    return potential_from_json(spec, trunc)


def _matrix_from_config(obj) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in obj], dtype=complex)


def _summary(report: dict) -> dict:
    return {k: report[k] for k in ("max", "mean", "argmax")}


def _write_report(outdir: str, report: dict) -> None:
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _verification_block(sol, mu, thresholds) -> tuple[dict, bool]:
    rep = verify_extended_solution(sol.phi)
    phi_map = harmonic_map(sol.phi)
    harm = verify_harmonic(phi_map)
    ap_fd = rep["alpha_prime"]
    ap_alg = alpha_prime(sol.b, mu).restrict(rep["margin"])
    ap_defect = ap_fd.distance(ap_alg)
    gauge_rep = gauge_structure_defect(sol.b, mu)
    block = {
        "integration": sol.integration,
        "factorization": sol.factorization,
        "support": _summary(rep["support"]),
        "structural": _summary(rep["structural"]),
        "conjugacy": _summary(rep["conjugacy"]),
        "alpha_prime_defect": float(ap_defect),
        "harmonic": _summary(harm),
        "plus_factor_gauge": _summary(gauge_rep),
        "phi_unitary_defect": float(phi_map.meta["unitary_defect"]),
    }
    ok = (rep["support"]["max"] < thresholds["extended"]
          and rep["structural"]["max"] < thresholds["extended"]
          and rep["conjugacy"]["max"] < thresholds["extended"]
          and ap_defect < thresholds["alpha_prime"]
          and harm["max"] < thresholds["harmonic"])
    return block, ok


def cmd_run(cfg: dict, grid: GridSpec, trunc: int, thresholds: dict, outdir: str) -> int:
    mu = _potential_from_config(cfg, trunc)
    sol = extended_solution(mu, grid)
    block, ok = _verification_block(sol, mu, thresholds)
    sol.psi.save_json(os.path.join(outdir, "psi_field.json"))
    sol.phi.save_json(os.path.join(outdir, "phi_field.json"))
    sol.b.save_json(os.path.join(outdir, "b_field.json"))
    harmonic_map(sol.phi).to_csv(os.path.join(outdir, "phi_map.csv"))
    _write_report(outdir, {"command": "run", "passed": ok, "verification": block})
    return EXIT_OK if ok else EXIT_NUMERICAL


def _uniton_frame(cfg: dict) -> FramePoly:
    blk = cfg.get("uniton")
    if not isinstance(blk, dict):
        raise ConfigError("config needs a 'uniton' block with a frame")
    unknown = set(blk) - {"frame"}
    if unknown:
        raise ConfigError(f"unknown uniton keys: {sorted(unknown)}")
    return FramePoly.from_json(blk["frame"])


def cmd_uniton(cfg: dict, grid: GridSpec, trunc: int, thresholds: dict, outdir: str) -> int:
    mu = _potential_from_config(cfg, trunc)
    frame = _uniton_frame(cfg)
    gauge = build_uniton_gauge(frame, grid)
    mu2 = gauge_action(gauge, mu, grid)
    sol = extended_solution(mu, grid)
    sol2 = extended_solution(mu2, grid)
    b0 = sol.b.coefficient(0).data
    pihat = SubbundleField(grid, projections_from_frames(b0 @ frame.value_grid(grid.zs)),
                           frame.cols)
    pihat0 = hermitian_projection(frame.value(0.0))
    added = add_uniton(sol.phi, pihat, pihat0)
    dist = added.distance(sol2.phi)
    conds = uniton_condition_check(pihat, harmonic_map(sol.phi))
    ok = (dist < thresholds["identity"]
          and conds["condition_a"]["max"] < thresholds["identity"]
          and conds["condition_b"]["max"] < thresholds["identity"])
    sol.phi.save_json(os.path.join(outdir, "phi_field.json"))
    sol2.phi.save_json(os.path.join(outdir, "phi_gauged_field.json"))
    _write_report(outdir, {
        "command": "uniton", "passed": ok,
        "gauge_vs_product_distance": float(dist),
        "condition_a": _summary(conds["condition_a"]),
        "condition_b": _summary(conds["condition_b"]),
        "commutator": _summary(conds["commutator"]),
    })
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_gauss(cfg: dict, grid: GridSpec, trunc: int, thresholds: dict, outdir: str) -> int:
    mu = _potential_from_config(cfg, trunc)
    blk = cfg.get("gauss", {})
    unknown = set(blk) - {"direction"}
    if unknown:
        raise ConfigError(f"unknown gauss keys: {sorted(unknown)}")
    direction = int(blk.get("direction", -1))
    q0 = getattr(mu, "q0", None)
    if q0 is None:
        raise ConfigError("gauss command needs a twisted potential (Q0)")
    sol = extended_solution(mu, grid)
    phi_map = harmonic_map(sol.phi)
    psi = cartan_invert(phi_map, q0)
    bundle = gauss_bundle(psi, direction)
    ident = derivative_identity_check(psi, phi_map)
    ok = ident["max"] < thresholds["extended"]
    bundle.to_csv(os.path.join(outdir, "gauss_bundle.csv"))
    _write_report(outdir, {
        "command": "gauss", "passed": ok,
        "direction": direction,
        "bundle_rank": bundle.rank,
        "flagged_points": int(bundle.flags.sum()),
        "derivative_identity": _summary(ident),
        "involution_defect": psi.meta["involution_defect"],
    })
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_dress(cfg: dict, grid: GridSpec, trunc: int, thresholds: dict, outdir: str) -> int:
    mu = _potential_from_config(cfg, trunc)
    blk = cfg.get("dressing")
    if not isinstance(blk, dict):
        raise ConfigError("config needs a 'dressing' block")
    mode = blk.get("mode")
    sol = extended_solution(mu, grid)
    if mode == "plus":
        unknown = set(blk) - {"mode", "h"}
        if unknown:
            raise ConfigError(f"unknown dressing keys: {sorted(unknown)}")
        terms = [(int(t["zpow"]), LaurentLoop.from_json(t["loop"], trunc))
                 for t in blk["h"]["terms"]]
        gauge = plus_gauge(terms)
        dressed, rep = dress_plus(gauge.value_at_zero(), sol.phi)
        sol2 = extended_solution(gauge_action(gauge, mu, grid), grid)
        dist = dressed.distance(sol2.phi)
        ok = dist < thresholds["identity"]
        dressed.save_json(os.path.join(outdir, "phi_dressed_field.json"))
        _write_report(outdir, {
            "command": "dress", "mode": "plus", "passed": ok,
            "equivariance_distance": float(dist),
            "factorization": rep,
        })
        return EXIT_OK if ok else EXIT_NUMERICAL
    if mode == "simple":
        unknown = set(blk) - {"mode", "a", "V"}
        if unknown:
            raise ConfigError(f"unknown dressing keys: {sorted(unknown)}")
        a = blk["a"]
        a = complex(a[0], a[1]) if isinstance(a, list) else complex(a)
        sf = SimpleFactor(a, _matrix_from_config(blk["V"]))
        dressed, rep = dress_simple(sf, sol.phi)
        ver = verify_extended_solution(dressed)
        ok = (ver["support"]["max"] < thresholds["extended"]
              and ver["structural"]["max"] < thresholds["extended"])
        dressed.save_json(os.path.join(outdir, "phi_dressed_field.json"))
        _write_report(outdir, {
            "command": "dress", "mode": "simple", "passed": ok,
            "certificate": rep,
            "support": _summary(ver["support"]),
            "structural": _summary(ver["structural"]),
        })
        return EXIT_OK if ok else EXIT_NUMERICAL
    raise ConfigError(f"unknown dressing mode {mode!r}")


def cmd_complete(cfg: dict, grid: GridSpec, trunc: int, thresholds: dict, outdir: str) -> int:
    mu = _potential_from_config(cfg, trunc)
    blk = cfg.get("complete")
    if not isinstance(blk, dict):
        raise ConfigError("config needs a 'complete' block")
    unknown = set(blk) - {"V", "a_sequence"}
    if unknown:
        raise ConfigError(f"unknown complete keys: {sorted(unknown)}")
    v = _matrix_from_config(blk["V"])
    a_seq = tuple(blk.get("a_sequence", (1e-1, 1e-2, 1e-3)))
    rep = completion_limit_experiment(mu, v, grid, a_seq)
    _write_report(outdir, {"command": "complete", "passed": rep["passed"],
                           "experiment": rep})
    return EXIT_OK if rep["passed"] else EXIT_NUMERICAL


def cmd_verify(cfg: dict, grid: GridSpec, trunc: int, thresholds: dict, outdir: str,
               seed: int | None) -> int:
    blk = cfg.get("verify")
    if not isinstance(blk, dict):
        raise ConfigError("config needs a 'verify' block")
    unknown = set(blk) - {"phi_field", "battery", "count"}
    if unknown:
        raise ConfigError(f"unknown verify keys: {sorted(unknown)}")
    if "phi_field" in blk:
        phi = LoopField.load_json(blk["phi_field"], trunc)
        rep = verify_extended_solution(phi)
        harm = verify_harmonic(harmonic_map(phi))
        ok = (rep["support"]["max"] < thresholds["extended"]
              and rep["structural"]["max"] < thresholds["extended"]
              and harm["max"] < thresholds["harmonic"])
        _write_report(outdir, {
            "command": "verify", "passed": ok,
            "support": _summary(rep["support"]),
            "structural": _summary(rep["structural"]),
            "conjugacy": _summary(rep["conjugacy"]),
            "harmonic": _summary(harm),
        })
        return EXIT_OK if ok else EXIT_NUMERICAL
    if blk.get("battery") == "iwasawa":
        count = int(blk.get("count", 50))
        rng_seed = 0 if seed is None else seed
        worst = {"residual": 0.0, "unitarity_defect": 0.0,
                 "based_defect": 0.0, "plus_defect": 0.0}
        for k in range(count):
            loop = random_invertible_loop(rng_seed + k, trunc=trunc)
            fact = iwasawa_factorize(loop)
            for key in worst:
                worst[key] = max(worst[key], getattr(fact, key))
        ok = (worst["residual"] < 1e-8 and worst["unitarity_defect"] < 1e-9
              and worst["based_defect"] < 1e-9 and worst["plus_defect"] < 1e-10)
        _write_report(outdir, {"command": "verify", "passed": ok,
                               "battery": "iwasawa", "count": count,
                               "seed": rng_seed, "worst": worst})
        return EXIT_OK if ok else EXIT_NUMERICAL
    raise ConfigError("verify block needs 'phi_field' or 'battery'")


def random_invertible_loop(seed: int, trunc: int = 32,
                           total: float = 0.05) -> LaurentLoop:
    """Seeded random loop, comfortably invertible on the circle.

    n <= 4 and bandwidth <= 8; the total perturbation mass away from the
    identity is `total`, which keeps the factorization in the fast-decay
    regime the acceptance thresholds assume.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    band = int(rng.integers(1, 9))
    kmin = -int(rng.integers(0, band + 1))
    ks = list(range(kmin, kmin + band + 1))
    weights = rng.random(len(ks))
    weights /= weights.sum()
    terms = {}
    for k, w in zip(ks, weights):
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        terms[k] = total * w * g / np.linalg.norm(g)
    terms[0] = terms.get(0, np.zeros((n, n))) + np.eye(n)
    return LaurentLoop.from_coeffs(terms, n, trunc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpwlab",
        description="loop-group factorization and harmonic-map pipelines")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "uniton", "gauss", "dress", "complete", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--tol", type=float, default=None,
                       help="override every pass threshold")
        p.add_argument("--grid", type=int, default=None,
                       help="override grid samples per side")
        p.add_argument("--trunc", type=int, default=None,
                       help="override the working truncation")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for randomized test batteries")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        grid = _grid_from_config(cfg, args.grid)
        trunc = args.trunc or int(cfg.get("trunc", DEMO_TRUNC))
        thresholds = dict(DEFAULT_THRESHOLDS)
        tol_cfg = cfg.get("tol", {})
        if isinstance(tol_cfg, dict):
            unknown = set(tol_cfg) - set(thresholds)
            if unknown:
                raise ConfigError(f"unknown tol keys: {sorted(unknown)}")
            thresholds.update({k: float(v) for k, v in tol_cfg.items()})
        elif tol_cfg:
            raise ConfigError("tol block must be an object")
        if args.tol is not None:
            thresholds = {k: args.tol for k in thresholds}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        os.makedirs(args.out, exist_ok=True)
        if args.command == "run":
            return cmd_run(cfg, grid, trunc, thresholds, args.out)
        if args.command == "uniton":
            return cmd_uniton(cfg, grid, trunc, thresholds, args.out)
        if args.command == "gauss":
            return cmd_gauss(cfg, grid, trunc, thresholds, args.out)
        if args.command == "dress":
            return cmd_dress(cfg, grid, trunc, thresholds, args.out)
        if args.command == "complete":
            return cmd_complete(cfg, grid, trunc, thresholds, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, grid, trunc, thresholds, args.out, args.seed)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
