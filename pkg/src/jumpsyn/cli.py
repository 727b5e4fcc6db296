"""Command-line entry point: ``jumpsyn <subcommand> ...``.

Exit codes: 0 success, 1 usage/input/IO error, 2 infeasible synthesis or
analysis.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import lmi
from .augmentation import build_augmented_model
from .errors import JumpsynError
from .scenario import load_scenario, resolve_path

log = logging.getLogger("jumpsyn")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class CliError(Exception):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, lmi.Status):
        return obj.value
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=True) + "\n"


class Output:
    """Writes into ``--out``; refuses to replace files unless ``--force``."""

    def __init__(self, outdir, force: bool):
        self.dir = Path(outdir) if outdir else None
        self.force = force
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        if self.dir is None:
            raise CliError("this command needs --out <dir>")
        p = self.dir / name
        if p.exists() and not self.force:
            raise CliError(f"{p} exists; pass --force to overwrite")
        return p

    def write(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p


def _emit(args, payload: dict[str, Any], text: str) -> None:
    sys.stdout.write(_dumps(payload) if args.json else text.rstrip("\n") + "\n")


def _fmt_matrix(M, indent="  ") -> str:
    return "\n".join(indent + " ".join(f"{v:9.4g}" for v in row) for row in np.atleast_2d(M))


def _load(args):
    sc = load_scenario(args.scenario)
    if args.seed is not None or args.runs is not None or args.dt is not None:
        from dataclasses import replace
        sim = replace(sc.sim, **{k: v for k, v in (("seed", args.seed), ("runs", args.runs), ("dt", args.dt))
                                if v is not None})
        sc = sc.replace(sim=sim)
    return sc


def _load_gains(spec: str, sc, aug) -> tuple[np.ndarray, str]:
    if spec == "reference":
        if not sc.reference or "gains" not in sc.reference:
            raise CliError("scenario has no reference gains")
        return lmi.gains_from_reference(sc.reference), "reference"
    if spec == "from-synth":
        res = lmi.synthesize(aug, sc.delay.tau_plus, sc.perf)
        if not res.feasible:
            raise _Infeasible("synthesis is infeasible; no gains to use:\n  " + "\n  ".join(res.report))
        return np.array(res.gains), "synthesized"
    path = Path(spec)
    if not path.exists():
        raise CliError(f"gains file {spec} not found (or use 'reference' / 'from-synth')")
    doc = json.loads(path.read_text())
    K = np.array(doc["gains"] if isinstance(doc, dict) else doc, dtype=float)
    m = sc.model
    try:
        K = K.reshape(m.N, m.m, m.n)
    except ValueError:
        raise CliError(f"gains in {spec} have shape {K.shape}; expected {(m.N, m.m, m.n)}") from None
    return K, str(path)


class _Infeasible(Exception):
    pass


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    from .model import check_history_consistency
    import warnings

    sc = _load(args)
    m = sc.model
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        x_check = check_history_consistency(sc.perf)
    payload = {"valid": True, "name": sc.name, "N": m.N, "n": m.n, "m": m.m, "l": m.l, "q": m.q,
               "tau0": sc.delay.tau0, "tau_plus": sc.delay.tau_plus,
               "history_norm": x_check, "warnings": [str(w.message) for w in caught]}
    text = (f"{resolve_path(args.scenario)}: valid\n  modes N={m.N}, n={m.n}, m={m.m}, l={m.l}, q={m.q}\n"
            f"  tau0={sc.delay.tau0}, tau_plus={sc.delay.tau_plus}\n"
            + "".join(f"  warning: {w}\n" for w in payload["warnings"]))
    _emit(args, payload, text)
    return EXIT_OK


def cmd_augment(args) -> int:
    sc = _load(args)
    aug = build_augmented_model(sc.model, sc.obs)
    payload = {"kappa": aug.kappa, "index_map": aug.index_map()}
    text = ("augmented generator:\n" + _fmt_matrix(aug.kappa) + "\nindex map (k: true, observed):\n"
            + "\n".join(f"  {e['k']}: ({e['true_mode']}, {e['observed_mode']})" for e in aug.index_map()))
    if args.out:
        Output(args.out, args.force).write("augment.json", _dumps(payload))
    _emit(args, payload, text)
    return EXIT_OK


def _synth_payload(aug, sc, res) -> dict[str, Any]:
    payload = res.to_dict()
    if res.feasible:
        try:
            cert = lmi.check_certificate(aug, res, sc.delay.tau_plus, sc.perf)
            payload["certificate"] = {"valid": True, **cert.to_dict()}
        except JumpsynError as exc:
            payload["certificate"] = {"valid": False, "error": str(exc)}
    return payload


def _synth_text(res, payload) -> str:
    lines = [f"synthesis ({res.variant}): {res.status.value}"]
    if res.feasible:
        for j, K in enumerate(res.gains):
            lines.append(f"  K_{j + 1} = {np.array2string(K.ravel(), precision=6)}")
        lines.append(f"  lambda = {res.lam:.6g}, Lambda = {res.Lam:.6g}, bound = {res.bound:.6g}")
        cert = payload.get("certificate", {})
        lines.append(f"  certificate: {'valid' if cert.get('valid') else 'INVALID'}"
                     + (f", worst margin {cert['worst']:.3e}" if "worst" in cert else ""))
    else:
        lines += ["  " + r for r in res.report]
    return "\n".join(lines)


def cmd_synth(args) -> int:
    sc = _load(args)
    aug = build_augmented_model(sc.model, sc.obs)
    if args.dump_sdpa:
        prog = lmi.assemble_synthesis_program(aug, sc.delay.tau_plus, sc.perf, variant=args.variant, eps=args.eps)
        from .sdp import write_sdpa
        write_sdpa(prog, _fresh(args.dump_sdpa, args.force))
    res = lmi.synthesize(aug, sc.delay.tau_plus, sc.perf, variant=args.variant, eps=args.eps,
                         precheck=not args.no_precheck)
    payload = _synth_payload(aug, sc, res)
    if args.out:
        Output(args.out, args.force).write("synth.json", _dumps(payload))
    _emit(args, payload, _synth_text(res, payload))
    if res.status is lmi.Status.SOLVER_FAILURE:
        return EXIT_ERROR
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def _fresh(path, force) -> Path:
    p = Path(path)
    if p.exists() and not force:
        raise CliError(f"{p} exists; pass --force to overwrite")
    return p


def _analysis(aug, sc, K, kinds) -> dict[str, Any]:
    s0 = aug.index(sc.sim.r0, sc.sim.robs0)
    Q = sc.perf.Q
    out = {}
    if "h2" in kinds:
        out["h2"] = lmi.verify_h2_analysis(aug, K, Q, sc.delay.tau_plus, phi=sc.perf.phi, s0=s0).to_dict()
    if "hinf" in kinds:
        out["hinf"] = lmi.verify_hinf_analysis(aug, K, Q, sc.delay.tau_plus, sc.perf.gamma,
                                               phi=sc.perf.phi, s0=s0).to_dict()
    return out


def cmd_analyze(args) -> int:
    sc = _load(args)
    aug = build_augmented_model(sc.model, sc.obs)
    K, source = _load_gains(args.gains, sc, aug)
    kinds = ("h2", "hinf") if args.kind == "both" else (args.kind,)
    res = _analysis(aug, sc, K, kinds)
    payload = {"gains_source": source, "gains": K, **res}
    lines = [f"fixed-gain analysis (gains: {source})"]
    for kind, r in res.items():
        lines.append(f"  {kind}: {r['status']}" + (f", bound {r['bound']:.6g}" if r.get("bound") is not None else ""))
        if r["status"] != "feasible":
            lines += ["    " + line for line in r["report"]]
    if args.out:
        Output(args.out, args.force).write("analysis.json", _dumps(payload))
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if all(r["status"] == "feasible" for r in res.values()) else EXIT_INFEASIBLE


def _simulate(sc, K, out: Output, runs: int, csv_runs: int | None, stride: int, workers: int,
              figures: bool) -> dict[str, Any]:
    """Simulate ``runs`` runs, writing CSVs for the first ``csv_runs``."""
    from concurrent.futures import ThreadPoolExecutor

    from . import performance as pf

    m = sc.model
    keep = runs if csv_runs is None else min(runs, csv_runs)

    def one(k):
        tr = pf.simulate_run(sc, K, k)
        csv = tr.to_csv(stride) if k < keep else None
        return (tr if k == 0 else None), csv, (tr.integral(), tr.integral(m.C, m.Psi), float(tr.x[-1] @ tr.x[-1]))

    written, stats = [], []
    # chunks bound the number of trajectories alive at once
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for start in range(0, runs, 16):
            for k, (tr, csv, st) in zip(range(start, runs), pool.map(one, range(start, min(runs, start + 16)))):
                if csv is not None:
                    written.append(out.write(f"run_{k:04d}.csv", csv).name)
                if figures and tr is not None:
                    from .plotting import trajectory_figures
                    trajectory_figures(tr, out.dir, "run0000")
                stats.append(st)
    arr = np.array(stats)
    summ = {}
    for c, name in enumerate(("state_energy", "z_energy", "final_state_sq")):
        mom = pf.RunningMoments.of(arr[:, c])
        summ[name] = {"mean": mom.mean, "se": mom.se}
    return {"runs": runs, "horizon": sc.sim.horizon, "dt": sc.sim.dt, "seed": sc.sim.seed,
            "csv_files": written, "csv_stride": stride, "statistics": summ}


def cmd_simulate(args) -> int:
    sc = _load(args)
    aug = build_augmented_model(sc.model, sc.obs)
    K, source = _load_gains(args.gains, sc, aug)
    out = Output(args.out, args.force)
    summary = {"gains_source": source, "gains": K,
               **_simulate(sc, K, out, sc.sim.runs, args.csv_runs, args.csv_stride, args.workers, args.figures)}
    out.write("summary.json", _dumps(summary))
    st = summary["statistics"]
    text = (f"simulated {sc.sim.runs} runs to T={sc.sim.horizon} (dt={sc.sim.dt}, seed={sc.sim.seed}) "
            f"into {out.dir}\n"
            f"  E int |x|^2 = {st['state_energy']['mean']:.6g} +/- {st['state_energy']['se']:.2g}\n"
            f"  E |x(T)|^2 = {st['final_state_sq']['mean']:.6g} +/- {st['final_state_sq']['se']:.2g}")
    _emit(args, summary, text)
    return EXIT_OK


def _parse_horizons(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"--horizons expects comma-separated numbers, got {text!r}") from None


def _evaluate(sc, K, horizons, workers) -> dict[str, Any]:
    from . import performance as pf

    h2 = pf.estimate_h2(sc, K, workers=workers)
    hinf = pf.estimate_hinf_functional(sc, K, workers=workers)
    stab = pf.stability_diagnostic(sc, K, horizons, workers=workers)
    return {"h2": h2.to_dict(), "hinf_functional": hinf.to_dict(), "stability": stab.to_dict()}


def _eval_text(ev) -> str:
    st = ev["stability"]
    return "\n".join([
        f"  H2 estimate          {ev['h2']['mean']:.6g} +/- {ev['h2']['se']:.2g}",
        f"  Hinf functional      {ev['hinf_functional']['mean']:.6g} +/- {ev['hinf_functional']['se']:.2g}",
        "  E int |x|^2 by horizon: " + ", ".join(
            f"T={h:g}: {e['mean']:.6g}" for h, e in zip(st["horizons"], st["estimates"])),
        f"  stability verdict    {st['verdict']}",
        f"  E |x(T)|^2           {st['final_state_energy']['mean']:.3g} (|phi(0)|^2 = {st['initial_energy']:.3g})",
    ])


def cmd_evaluate(args) -> int:
    sc = _load(args)
    aug = build_augmented_model(sc.model, sc.obs)
    K, source = _load_gains(args.gains, sc, aug)
    horizons = _parse_horizons(args.horizons) if args.horizons else [sc.sim.horizon / 3, 2 * sc.sim.horizon / 3,
                                                                     sc.sim.horizon]
    ev = _evaluate(sc, K, horizons, args.workers)
    payload = {"gains_source": source, "gains": K, "runs": sc.sim.runs, "seed": sc.sim.seed, **ev}
    if args.out:
        out = Output(args.out, args.force)
        out.write("evaluate.json", _dumps(payload))
        if args.figures:
            from .plotting import energy_figure
            energy_figure(horizons, [e["mean"] for e in ev["stability"]["estimates"]],
                          [e["se"] for e in ev["stability"]["estimates"]], out.dir)
    _emit(args, payload, f"Monte Carlo evaluation ({sc.sim.runs} runs, gains: {source})\n" + _eval_text(ev))
    return EXIT_OK


def cmd_repro(args) -> int:
    """augment -> synth -> analyze -> simulate -> evaluate on the bundled example."""
    from .plotting import energy_figure

    sc = _load(args)
    out = Output(args.out, args.force)
    aug = build_augmented_model(sc.model, sc.obs)
    out.write("augment.json", _dumps({"kappa": aug.kappa, "index_map": aug.index_map()}))

    synth = {}
    for variant in lmi.VARIANTS:
        res = lmi.synthesize(aug, sc.delay.tau_plus, sc.perf, variant=variant)
        synth[variant] = (res, _synth_payload(aug, sc, res))
    out.write("synth.json", _dumps({v: p for v, (_, p) in synth.items()}))

    res = synth["corrected"][0]
    ref = sc.reference or {}
    if res.feasible:
        K, source = np.array(res.gains), "synthesized"
    elif "gains" in ref:
        K, source = lmi.gains_from_reference(ref), "reference"
    else:
        K, source = None, None
    analysis = _analysis(aug, sc, lmi.gains_from_reference(ref), ("h2", "hinf")) if "gains" in ref else {}
    out.write("analysis_reference_gains.json", _dumps(analysis))

    summary: dict[str, Any] = {
        "scenario": sc.name, "seed": sc.sim.seed, "runs": sc.sim.runs, "horizon": sc.sim.horizon,
        "dt": sc.sim.dt, "synthesis_status": {v: r.status.value for v, (r, _) in synth.items()},
        "gains_source": source, "gains": K,
    }
    if K is not None:
        sim = _simulate(sc, K, out, sc.sim.runs, args.csv_runs, args.csv_stride, args.workers, True)
        horizons = _parse_horizons(args.horizons)
        ev = _evaluate(sc, K, horizons, args.workers)
        out.write("evaluate.json", _dumps(ev))
        energy_figure(horizons, [e["mean"] for e in ev["stability"]["estimates"]],
                      [e["se"] for e in ev["stability"]["estimates"]], out.dir)
        summary.update(simulation=sim["statistics"], csv_files=sim["csv_files"], evaluation=ev)
        bound = ref.get("lambda", np.nan) + ref.get("Lambda", np.nan)
        summary["comparison"] = {
            "reported_lambda": ref.get("lambda"), "reported_Lambda": ref.get("Lambda"),
            "reported_bound": bound,
            "synthesized_bound": res.bound,
            "h2_within_reported_bound": bool(ev["h2"]["mean"] <= bound + 2 * ev["h2"]["se"]),
            "hinf_within_reported_bound": bool(
                ev["hinf_functional"]["mean"] <= bound + 2 * ev["hinf_functional"]["se"]),
            "reported_gains": ref.get("gains"),
            "gain_difference": (None if source != "synthesized" or "gains" not in ref
                                else float(np.abs(K - lmi.gains_from_reference(ref)).max())),
        }
    out.write("summary.json", _dumps(summary))

    lines = [f"reproduction of {sc.name or args.scenario} into {out.dir}"]
    for v, (r, _) in synth.items():
        lines.append(f"  synthesis [{v}]: {r.status.value}")
        if not r.feasible:
            lines += ["    " + line for line in r.report]
    for kind, a in analysis.items():
        lines.append(f"  {kind} analysis with reference gains: {a['status']}")
    if K is not None:
        lines.append(f"  simulating with {source} gains")
        lines.append(_eval_text(summary["evaluation"]))
        c = summary["comparison"]
        lines.append(f"  reported bound lambda + Lambda = {c['reported_bound']:.6g}; "
                     f"H2 within: {c['h2_within_reported_bound']}, Hinf within: {c['hinf_within_reported_bound']}")
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scenario", default=None,
                        help="scenario JSON file, or a bundled name (reference_example, infeasible_budget, stable_demo)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the scenario)")
    common.add_argument("--runs", type=int, default=None, help="Monte Carlo runs (overrides the scenario)")
    common.add_argument("--dt", type=float, default=None, help="integration step (overrides the scenario)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument("--force", action="store_true", help="overwrite existing output files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="jumpsyn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    sub.add_parser("validate", parents=[common], help="check a scenario file").set_defaults(fn=cmd_validate)
    sub.add_parser("augment", parents=[common], help="print the joint-chain generator and index map") \
        .set_defaults(fn=cmd_augment)

    s = sub.add_parser("synth", parents=[common], help="synthesize mode-observed state-feedback gains")
    s.add_argument("--variant", choices=lmi.VARIANTS, default="corrected")
    s.add_argument("--eps", type=float, default=None, help="strictness margin (default scales with the data)")
    s.add_argument("--dump-sdpa", metavar="FILE", default=None, help="also write the program in SDPA format")
    s.add_argument("--no-precheck", action="store_true", help="skip the structural screening and call the solver")
    s.set_defaults(fn=cmd_synth)

    gains_help = "JSON file with a 'gains' array, 'reference' (scenario's reported gains) or 'from-synth'"
    a = sub.add_parser("analyze", parents=[common], help="fixed-gain H2 / Hinf LMI analysis")
    a.add_argument("--gains", required=True, help=gains_help)
    a.add_argument("--kind", choices=("h2", "hinf", "both"), default="both")
    a.set_defaults(fn=cmd_analyze)

    m = sub.add_parser("simulate", parents=[common], help="simulate the closed loop, one CSV per run")
    m.add_argument("--gains", required=True, help=gains_help)
    m.add_argument("--figures", action="store_true", help="also render PNG figures of run 0")
    m.add_argument("--csv-runs", type=int, default=None, help="write CSVs for the first N runs only")
    m.add_argument("--csv-stride", type=int, default=1, help="keep every k-th grid row in the CSVs")
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(fn=cmd_simulate)

    e = sub.add_parser("evaluate", parents=[common], help="Monte Carlo performance and stability estimates")
    e.add_argument("--gains", required=True, help=gains_help)
    e.add_argument("--horizons", default=None, help="comma-separated horizons, e.g. 10,20,30")
    e.add_argument("--figures", action="store_true", help="render the energy-vs-horizon PNG into --out")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("repro-example", parents=[common], help="full pipeline on the bundled reference example")
    r.add_argument("--horizons", default="10,20,30")
    r.add_argument("--csv-runs", type=int, default=5, help="write per-run CSVs for the first N runs")
    r.add_argument("--csv-stride", type=int, default=10, help="keep every k-th grid row in the CSVs")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(fn=cmd_repro, scenario_default="reference_example")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.scenario is None:
        if getattr(args, "scenario_default", None) is None:
            parser.error(f"{args.command}: --scenario is required")
        args.scenario = args.scenario_default
    if args.command in ("simulate", "repro-example") and not args.out:
        parser.error(f"{args.command}: --out is required")
    try:
        return args.fn(args)
    except _Infeasible as exc:
        print(f"jumpsyn {args.command}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (JumpsynError, CliError, OSError, KeyError, ValueError) as exc:
        print(f"jumpsyn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
