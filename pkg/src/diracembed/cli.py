"""Command line front end: bands, floquet, synth, verify, oscillatory.

Every subcommand reads one JSON config (flags can override individual
keys), writes its artifacts into the output directory, and returns a
process exit code: 0 all checks pass, 1 a check failed, 2 usage/config
error, 3 resonance obstruction.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ENVELOPES, RunConfig
from .errors import (
    DiracEmbedError,
    ResonantFrequency,
    ResonantPair,
    ScanTooCoarse,
)
from .floquet import (
    band_scan,
    derived_data,
    floquet_solution,
    write_period_csv,
)
from .synth import (
    EmbeddingTarget,
    assemble,
    check_nonresonance,
    choose_C,
    rebuild_potential,
    schedule,
    write_manifest,
    write_potential_csv,
)
from .verify import (
    l2_tail_estimate,
    decay_check,
    oscillatory_check_41,
    oscillatory_check_42,
    stability_check,
    track_targets,
    write_reports_json,
    write_summary_csv,
)

__all__ = ["main", "cmd_bands", "cmd_floquet", "cmd_synth", "cmd_verify",
           "cmd_oscillatory"]

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_RESONANCE = 3

# RunConfig keys that subcommand flags may override.
_FLOAT_KEYS = ("a0", "x_max", "b", "margin", "band_edge_margin", "rho_margin",
               "taper_width", "safety", "xi0", "ratio_policy", "rel_tol",
               "abs_tol", "scan_lo", "scan_hi", "scan_resolution")
_STR_KEYS = ("mode", "h_name", "out_dir")


def _add_config_flags(sp: argparse.ArgumentParser, need_lam: bool = False):
    sp.add_argument("--config", required=True, metavar="PATH",
                    help="JSON run configuration")
    if need_lam:
        sp.add_argument("--lam", type=float, required=True,
                        help="energy inside a band")
    sp.add_argument("--lambda", dest="lambdas", action="append", type=float,
                    default=None, metavar="LAM",
                    help="override target energies (repeatable)")
    for key in _FLOAT_KEYS:
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float,
                        default=None, help=f"override config key {key}")
    for key in _STR_KEYS:
        flag = "--out" if key == "out_dir" else f"--{key.replace('_', '-')}"
        sp.add_argument(flag, dest=key, default=None,
                        help=f"override config key {key}")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    doc = cfg.to_dict()
    for key in _FLOAT_KEYS + _STR_KEYS + ("lambdas",):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return RunConfig.from_dict(doc)


def _out_dir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def cmd_bands(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    spec = cfg.integrator_spec()
    try:
        bs = band_scan(cfg.p, cfg.q, (cfg.scan_lo, cfg.scan_hi),
                       cfg.scan_resolution, spec)
    except ScanTooCoarse as exc:
        raise ScanTooCoarse(
            f"{exc}; rerun with a smaller scan_resolution") from exc
    with open(os.path.join(out, "bands.csv"), "w", encoding="utf-8") as fh:
        fh.write("lambda,trace,k\n")
        for lam, tr in zip(bs.lambdas, bs.traces):
            half = tr / 2.0
            k = np.arccos(np.clip(half, -1.0, 1.0)) if abs(half) <= 1.0 \
                else np.nan
            fh.write(f"{lam:.17g},{tr:.17g},{k:.17g}\n")
    doc = {
        "scan_range": [cfg.scan_lo, cfg.scan_hi],
        "resolution": cfg.scan_resolution,
        "edges": [float(e) for e in bs.edges],
        "bands": [{"lo": b.lo, "hi": b.hi, "k_direction": b.k_direction}
                  for b in bs.bands],
    }
    with open(os.path.join(out, "band_edges.json"), "w",
              encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"bands: {len(bs.bands)} band(s), {len(bs.edges)} interior "
          f"edge(s) in [{cfg.scan_lo:g}, {cfg.scan_hi:g}]")
    return EXIT_OK


def cmd_floquet(cfg: RunConfig, lam: float) -> int:
    out = _out_dir(cfg)
    sol = floquet_solution(cfg.p, cfg.q, lam, spec=cfg.integrator_spec())
    data = derived_data(sol)
    path = os.path.join(out, "floquet.csv")
    write_period_csv(data, path)
    print(f"floquet: lam={lam:g} k={sol.k:.12g} omega={sol.omega:.12g} "
          f"-> {path}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    spec = cfg.integrator_spec()
    targets = check_nonresonance(cfg.lambdas, cfg.p, cfg.q, cfg.margin,
                                 rho_margin=cfg.rho_margin, spec=spec,
                                 band_edge_margin=cfg.band_edge_margin)
    sched = schedule(targets, mode=cfg.mode, a0=cfg.a0, x_max=cfg.x_max,
                     ratio_policy=cfg.ratio_policy, b=cfg.b,
                     h=cfg.envelope(), safety=cfg.safety, xi0=cfg.xi0,
                     taper_width=cfg.taper_width, spec=spec)
    pot = assemble(sched)
    write_potential_csv(pot, os.path.join(out, "potential.csv"))
    write_manifest(pot, os.path.join(out, "manifest.json"),
                   cfg.p, cfg.q, spec)
    print(f"synth: {len(pot.pieces)} pieces, {len(sched.T) - 1} cycle "
          f"breakpoints to T={sched.T[-1]:.6g}, N_final={sched.N[-1]}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, manifest_path: str) -> int:
    out = _out_dir(cfg)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    pot = rebuild_potential(doc)
    by_lam = {pc.lam: pc.target for pc in pot.pieces}
    targets = [by_lam[float(entry["lambda"])] for entry in doc["targets"]
               if float(entry["lambda"]) in by_lam]

    reports: list[dict] = []
    failures = 0

    def record(check_name, fn, **context):
        nonlocal failures
        try:
            rep = fn()
        except DiracEmbedError as exc:
            failures += 1
            entry = {"name": check_name, "passed": False, "error": str(exc)}
            entry.update(context)
            reports.append(entry)
            return None
        d = rep.to_dict()
        if not d.get("verdict", True):
            failures += 1
        d["passed"] = bool(d.get("verdict", True))
        reports.append(d)
        return rep

    for i, target in enumerate(targets):
        for side in (1, -1):
            own = sorted((pc for pc in pot.pieces
                          if pc.side == side and pc.lam == target.lam),
                         key=lambda pc: pc.a)
            if not own:
                continue
            first = own[0]
            record("decay", lambda t=target, pc=first: decay_check(t, pc),
                   **{"lambda": target.lam, "side": side})
            for j, bystander in enumerate(targets):
                if j == i:
                    continue
                record("stability",
                       lambda t=bystander, pc=first: stability_check(t, pc),
                       **{"lambda_piece": target.lam,
                          "lambda_bystander": bystander.lam, "side": side})

    tracks = track_targets(pot, targets, spec=None)
    for track in tracks.values():
        record("l2-tail", lambda tr=track: l2_tail_estimate(tr),
               target=track.target_index, side=track.side)

    if doc.get("mode") == "growing":
        h = cfg.envelope()
        if h is None:
            raise ValueError("h_name: required to verify a growing-N run")
        excess = float(np.max(np.abs(pot.V_grid) * (1.0 + np.abs(pot.x_grid))
                              - np.abs(h(pot.x_grid))))
        ok = excess <= 1e-9
        if not ok:
            failures += 1
        reports.append({"name": "envelope", "max_excess": excess,
                        "verdict": ok, "passed": ok})

    write_reports_json(reports, os.path.join(out, "reports.json"))
    write_summary_csv(reports, os.path.join(out, "summary.csv"))
    n = len(reports)
    print(f"verify: {n - failures}/{n} checks passed")
    return EXIT_CHECK if failures else EXIT_OK


def cmd_oscillatory(args) -> int:
    checks = []
    x0_list = args.x0 or [1e2, 1e3, 1e4]
    if args.config is not None and args.lam is not None:
        cfg = RunConfig.load(args.config)
        out = args.out or cfg.out_dir
        os.makedirs(out, exist_ok=True)
        sol = floquet_solution(cfg.p, cfg.q, args.lam,
                               spec=cfg.integrator_spec())
        data = derived_data(sol)
        target = EmbeddingTarget(lam=args.lam, k=sol.k, floquet=sol,
                                 data=data, C=choose_C(data),
                                 omega=sol.omega)
        checks.append(oscillatory_check_42(
            target, data.Psi_f, args.a, x0_list, args.x_max,
            enforce_nonresonance=not args.allow_resonant))
    else:
        if args.beta1 is None or args.beta2 is None:
            raise ValueError(
                "beta1/beta2: required unless --config/--lam are given")
        out = args.out or "."
        os.makedirs(out, exist_ok=True)
        checks.append(oscillatory_check_41(
            args.a, args.beta1, args.beta2, x0_list, args.x_max,
            c=args.c, use_cos=args.use_cos))
    docs = []
    worst = 1.0
    for chk in checks:
        d = chk.to_dict()
        ratio = chk.max_product_ratio
        d["max_product_ratio"] = ratio
        d["passed"] = bool(ratio <= args.max_product_ratio)
        worst = max(worst, ratio)
        docs.append(d)
    with open(os.path.join(out, "oscillatory.json"), "w",
              encoding="utf-8") as fh:
        json.dump(docs, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ok = all(d["passed"] for d in docs)
    print(f"oscillatory: max product ratio {worst:.4g} "
          f"({'pass' if ok else 'FAIL'} at {args.max_product_ratio:g})")
    return EXIT_OK if ok else EXIT_CHECK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diracembed",
        description="Spectral toolkit for periodic Dirac operators: band "
                    "structure, Floquet frames, embedded-eigenvalue "
                    "potential synthesis, and bound verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("bands", help="scan the band structure")
    _add_config_flags(sp)

    sp = sub.add_parser("floquet", help="export one Floquet frame")
    _add_config_flags(sp, need_lam=True)

    sp = sub.add_parser("synth", help="synthesize the embedding potential")
    _add_config_flags(sp)

    sp = sub.add_parser("verify", help="re-run all checks from a manifest")
    _add_config_flags(sp)
    sp.add_argument("--manifest", required=True, metavar="PATH")

    sp = sub.add_parser("oscillatory",
                        help="sup-scan the oscillatory integral bounds")
    sp.add_argument("--config", default=None, metavar="PATH")
    sp.add_argument("--lam", type=float, default=None)
    sp.add_argument("--a", type=float, required=True,
                    help="phase frequency")
    sp.add_argument("--beta1", type=float, default=None)
    sp.add_argument("--beta2", type=float, default=None)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--use-cos", action="store_true")
    sp.add_argument("--x0", action="append", type=float, default=None)
    sp.add_argument("--x-max", type=float, default=1e6)
    sp.add_argument("--max-product-ratio", type=float, default=4.0)
    sp.add_argument("--allow-resonant", action="store_true")
    sp.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "oscillatory":
            return cmd_oscillatory(args)
        cfg = _load_config(args)
        if args.command == "bands":
            return cmd_bands(cfg)
        if args.command == "floquet":
            return cmd_floquet(cfg, args.lam)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.manifest)
        raise ValueError(f"command: unknown {args.command!r}")
    except (ResonantPair, ResonantFrequency) as exc:
        print(f"resonance: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DiracEmbedError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
