"""Command-line entry point: ``skewpulse <group> <action> -c config [-p profile]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, help_text, load_config
from .evolve import evolve, smooth_perturbation
from .hamiltonian import HamiltonianFamily, evans_gap
from .index import (
    IndexComputationError,
    IndexReport,
    criterion_integral,
    scan_tau,
    spectral_flow_F,
    verdict,
)
from .model import ModelError, check_hypotheses
from .pulse import PulseError, ProfileFormatError, load_profile, save_profile, solve_pulse
from .spectrum import discretize_L, spectrum_pipeline

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2
EXIT_HYPOTHESIS = 3
EXIT_CROSS_CHECK = 4
EXIT_UNSTABLE = 10

VERDICT_EXIT = {"Unstable": EXIT_UNSTABLE, "StableSufficient": EXIT_OK, "Inconclusive": EXIT_INCONCLUSIVE}


class CrossCheckError(RuntimeError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dump_report(report: dict) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# pipeline stages


def _profile(cfg: RunConfig, path):
    if path:
        return load_profile(path)
    pc = cfg["pulse"]
    model = cfg.build_model()
    guess = None
    if pc["seed"]:
        seed = Path(pc["seed"])
        if not seed.is_absolute():
            seed = cfg.base_dir() / seed
        guess = load_profile(seed)
    return solve_pulse(model, half_width=pc["half_width"], initial_guess=guess, tol=pc["tol"], spacing=pc["spacing"])


def stage_hyp(cfg, profile):
    model = cfg.build_model(strict=False)
    if profile is None:
        rep = check_hypotheses(model, amplitude=2.0)
    else:
        rep = check_hypotheses(model, profile)
    return rep


def stage_maslov(cfg, model, profile):
    ic = cfg["index"]
    scan = scan_tau(model, profile, t_cap=ic["t_cap"], tol=ic["tol"], max_step=ic["max_step"])
    return scan


def stage_sf(cfg, model, profile):
    ic = cfg["index"]
    return spectral_flow_F(
        model, profile, lambda_max=ic["lambda_max"], tol=ic["tol"], samples=ic["lambda_samples"], max_step=ic["max_step"]
    )


def _spectrum_grid(cfg, profile):
    sc = cfg["spectrum"]
    if sc["X"] is None:
        return sc["N"]
    return np.linspace(-sc["X"], sc["X"], int(sc["N"]) + 1)


def stage_spectrum(cfg, model, profile):
    sc = cfg["spectrum"]
    return spectrum_pipeline(model, profile, _spectrum_grid(cfg, profile), order=sc["order"], rel_tol=sc["rel_tol"])


def stage_evolve(cfg, model, profile, seed=None):
    ec = cfg["evolve"]
    rng_seed = ec["seed"] if seed is None else seed
    start = profile.w + smooth_perturbation(profile.grid, model.n, ec["amplitude"], seed=rng_seed)
    return evolve(model, start, ec["dt"], ec["t_final"], grid=profile.grid, reference=profile, snapshots=ec["snapshots"])


def run_verdict(cfg, model, profile):
    """Full pipeline; returns the report dict and the verdict kind."""
    hyp = check_hypotheses(model, profile)
    scan = stage_maslov(cfg, model, profile)
    sf, sf_records = stage_sf(cfg, model, profile)
    crit = criterion_integral(model, profile)
    spec = stage_spectrum(cfg, model, profile)
    v = verdict(scan.i_w0, crit.value, spec.sufficiency_ok, spec.zero_simple)
    report = IndexReport(
        i_w0=scan.i_w0,
        crossings=scan.crossings,
        spectral_flow=sf,
        sf_crossings=sf_records,
        criterion_integral=crit.value,
        tau0=crit.tau0,
        verdict=v,
    ).to_dict()
    report["hypotheses"] = hyp.to_dict()
    report["spectrum"] = {k: spec.to_dict()[k] for k in ("n_plus", "zero_simple", "sufficiency_ok", "ess_bound_ok", "zero_mode_error")}
    report["stationarity"] = scan.stationarity
    report["criterion_coarse_warning"] = crit.coarse_warning
    tol = cfg["index"]["cross_check_tol"]
    problems = []
    if abs(scan.i_w0 - sf) > tol:
        problems.append(f"stability index {scan.i_w0} != spectral flow {sf}")
    if spec.sufficiency_ok and spec.zero_simple and abs(scan.i_w0 - spec.n_plus) > tol:
        problems.append(f"stability index {scan.i_w0} != n_plus {spec.n_plus} under the sufficiency conditions")
    report["cross_check"] = problems
    return report, v.kind, problems


# ---------------------------------------------------------------------------
# commands


def _envelope(cfg: RunConfig, command: str, body: dict) -> dict:
    return {"command": command, "config_sha256": cfg.sha256, "version": __version__, **body}


def _emit(args, report: dict, summary: str) -> None:
    text = dump_report(report)
    if args.output and args.command != "pulse":
        Path(args.output).write_text(text, encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
    elif summary:
        print(summary)


def cmd_pulse(args, cfg):
    model = cfg.build_model()
    profile = _profile(cfg, None)
    out = args.output or "profile.csv"
    save_profile(profile, out)
    report = _envelope(cfg, "pulse solve", {
        "output": str(out), "points": int(profile.grid.size), "half_width": profile.half_width,
        "residual_norm": profile.residual_norm, "decay_rate": profile.decay_rate,
        "model": model.kind, "params": model.params,
    })
    _emit(args, report, f"pulse written to {out} (residual {profile.residual_norm:.2e})")
    return EXIT_OK


def cmd_hyp(args, cfg):
    profile = load_profile(args.profile) if args.profile else None
    rep = stage_hyp(cfg, profile)
    report = _envelope(cfg, "hyp check", rep.to_dict())
    ok = rep.h1_holds and rep.h2_holds
    _emit(args, report, f"(H1) {'holds' if rep.h1_holds else 'fails'}, (H2) {'holds' if rep.h2_holds else 'fails'}")
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def cmd_index(args, cfg):
    model = cfg.build_model()
    profile = _profile(cfg, args.profile)
    if args.action == "maslov":
        scan = stage_maslov(cfg, model, profile)
        body = {"i_w0": scan.i_w0, "crossings": [c.to_dict() for c in scan.crossings],
                "t_cap": scan.t_cap, "stationarity": scan.stationarity}
        summary = f"i(w0) = {scan.i_w0}"
    elif args.action == "sf":
        sf, recs = stage_sf(cfg, model, profile)
        body = {"spectral_flow": sf, "sf_crossings": [c.to_dict() for c in recs]}
        summary = f"spectral flow = {sf}"
    else:
        crit = criterion_integral(model, profile)
        body = {"criterion_integral": crit.value, "tau0": crit.tau0, "coarse_warning": crit.coarse_warning}
        summary = f"criterion integral = {crit.value:.6g}"
    _emit(args, _envelope(cfg, f"index {args.action}", body), summary)
    return EXIT_OK


def cmd_spectrum(args, cfg):
    model = cfg.build_model()
    profile = _profile(cfg, args.profile)
    spec = stage_spectrum(cfg, model, profile)
    body = spec.to_dict()
    body["eigenvalues"] = body["eigenvalues"][:50]
    _emit(args, _envelope(cfg, "spectrum eig", body), f"n_plus = {spec.n_plus}")
    return EXIT_OK


def cmd_evolve(args, cfg):
    model = cfg.build_model()
    profile = _profile(cfg, args.profile)
    run = stage_evolve(cfg, model, profile, args.seed)
    _emit(args, _envelope(cfg, "evolve run", run.to_dict()), f"growth rate {run.growth_rate:.4g} (R^2 {run.r_squared:.4f})")
    return EXIT_OK


def cmd_verdict(args, cfg):
    model = cfg.build_model()
    profile = _profile(cfg, args.profile)
    report, kind, problems = run_verdict(cfg, model, profile)
    _emit(args, _envelope(cfg, "verdict", report), f"{kind}: {report['verdict']['reason']}")
    if problems:
        print("internal cross-check failed: " + "; ".join(problems), file=sys.stderr)
        return EXIT_CROSS_CHECK
    return VERDICT_EXIT[kind]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def cmd_report(args, cfg):
    model = cfg.build_model()
    profile = _profile(cfg, args.profile)
    out = Path(args.output or "report")
    out.mkdir(parents=True, exist_ok=True)
    report, kind, problems = run_verdict(cfg, model, profile)
    scan = stage_maslov(cfg, model, profile)
    save_profile(profile, out / "profile.csv")
    _write_csv(out / "angle_trace.csv", ["tau", "min_sine"], zip(scan.trace_tau, scan.trace_sine))
    lam_hat = report["hypotheses"]["lambda_hat"]
    lam_max = cfg["index"]["lambda_max"] or lam_hat
    fam = HamiltonianFamily(model, profile)
    lams = np.linspace(0.0, lam_max, 41)
    _write_csv(out / "evans_gap.csv", ["lambda", "evans_gap"], ((lam, evans_gap(fam.at(lam=lam))) for lam in lams))
    spec = stage_spectrum(cfg, model, profile)
    ev = spec.eigenvalues
    _write_csv(out / "eigenvalues.csv", ["re", "im"], zip(ev.real, ev.imag))
    run = stage_evolve(cfg, model, profile, args.seed)
    bundle = _envelope(cfg, "report all", {
        "verdict": report,
        "hypotheses": report["hypotheses"],
        "spectrum": spec.to_dict(),
        "evolution": run.to_dict(),
        "files": ["profile.csv", "angle_trace.csv", "evans_gap.csv", "eigenvalues.csv"],
    })
    (out / "report.json").write_text(dump_report(bundle), encoding="utf-8")
    if args.json:
        sys.stdout.write(dump_report(bundle))
    else:
        print(f"report written to {out}; verdict {kind}")
    if problems:
        print("internal cross-check failed: " + "; ".join(problems), file=sys.stderr)
        return EXIT_CROSS_CHECK
    return VERDICT_EXIT[kind]


# ---------------------------------------------------------------------------


def _common(p, profile=True):
    p.add_argument("-c", "--config", required=True, help="JSON configuration file")
    if profile:
        p.add_argument("-p", "--profile", help="pulse CSV (solved from the config when omitted)")
    p.add_argument("-o", "--output", help="output file (directory for 'report all')")
    p.add_argument("--json", action="store_true", help="print the JSON report on stdout")
    p.add_argument("--seed", type=int, default=None, help="override evolve.seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skewpulse",
        description="Stability analysis of standing pulses in skew-gradient systems.",
        epilog=help_text() + "\n\nexit codes: 0 ok/StableSufficient, 10 Unstable, 2 Inconclusive, "
        "3 hypothesis failure, 4 internal cross-check failed, 1 other errors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pulse").add_subparsers(dest="action", required=True).add_parser("solve")
    _common(p, profile=False)
    p = sub.add_parser("hyp").add_subparsers(dest="action", required=True).add_parser("check")
    _common(p)
    idx = sub.add_parser("index").add_subparsers(dest="action", required=True)
    for name in ("maslov", "sf", "criterion"):
        _common(idx.add_parser(name))
    p = sub.add_parser("spectrum").add_subparsers(dest="action", required=True).add_parser("eig")
    _common(p)
    p = sub.add_parser("evolve").add_subparsers(dest="action", required=True).add_parser("run")
    _common(p)
    _common(sub.add_parser("verdict"))
    p = sub.add_parser("report").add_subparsers(dest="action", required=True).add_parser("all")
    _common(p)
    return parser


COMMANDS = {
    "pulse": cmd_pulse,
    "hyp": cmd_hyp,
    "index": cmd_index,
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "verdict": cmd_verdict,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ModelError, PulseError, ProfileFormatError, IndexComputationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
