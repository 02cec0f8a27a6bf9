"""Command-line interface.

Commands: ``simulate`` (run a configured experiment and write event log,
counts CSV, and a JSON report), ``kc-verify`` (build and audit the
per-context and mixed-context probability spaces of a config),
``gleason-check`` (frame-function additivity and trace-form fitting at a
chosen dimension), ``lhv-bound`` (the exhaustive deterministic bound, or
a membership verdict for supplied tables), and ``plot`` (correlation
curve and S sweep as a self-contained SVG).

Exit codes: 0 success, 2 config/usage error, 3 model validation error,
4 I/O error. Every command is deterministic given (config, seed):
timing and version info live in a separate ``meta`` field that is
excluded from the reproducibility hash.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .chsh import DEFAULT_COMBINATION
from .config import (
    ConfigError,
    ExperimentConfig,
    ModelBuildError,
    REPORT_SCHEMA_VERSION,
    load_experiment,
    reproducibility_hash,
)
from .gleason import (
    FrameFunction,
    check_orthogonal_additivity,
    dim2_counterexample,
    extravalence_check,
    fit_trace_form,
    random_density,
    random_rank_one,
)
from .harness import estimate_report, exact_estimates, run_experiment
from .kolmogorov import (
    ClassicalProbabilitySpace,
    build_mixed_context_space_from_tables,
    build_single_context_space,
    szabo_chsh,
    verify_kolmogorov,
)
from .models import (
    QuantumModel,
    SignallingTablesError,
    lhv_max_chsh,
    local_polytope_membership,
    maximizing_strategies,
    model_chsh,
    model_tables,
    table_correlation,
    table_vector,
    tables_from_json,
)
from .plotsvg import Panel, render_panels
from .quantum import (
    DensityOperator,
    born_probability,
    joint_context,
    operator_from_json,
    polarization_observable,
)
from .rng import chunk_generator

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_IO = 4

OUT_DIR_ENV = "BELLCTX_OUT_DIR"

RT2 = math.sqrt(2.0)


def _out_dir(args) -> Path:
    chosen = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _atomic_write(path: Path, text: str) -> None:
    handle, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        os.unlink(tmp_name)
        raise


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _meta(wall_clock: float, n_workers: int | None = None) -> dict:
    meta = {
        "wall_clock_seconds": wall_clock,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "bellctx": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if n_workers is not None:
        meta["workers"] = n_workers
    return meta


def _report_json(report: dict, meta: dict) -> str:
    return json.dumps({"report": report, "meta": meta}, sort_keys=True, indent=2) + "\n"


def _kc_summary(cfg: ExperimentConfig) -> dict | None:
    """Audit the mixed-context space implied by the config's model."""
    if cfg.model.n_alice != 2 or cfg.model.n_bob != 2:
        return None
    space = build_mixed_context_space_from_tables(model_tables(cfg.model), cfg.settings)
    audit = verify_kolmogorov(space, exhaustive_limit=cfg.kc_exhaustive_limit)
    return {
        "n_atoms": len(space),
        "report": json.loads(audit.to_json()),
        "s_prime": szabo_chsh(space, cfg.combination),
    }


def cmd_simulate(args) -> int:
    cfg = load_experiment(args.config, args.seed)
    out_dir = _out_dir(args)
    started = time.perf_counter()
    result = run_experiment(cfg.model, cfg.n_trials, cfg.settings, cfg.master_seed,
                            cfg.chunk_size, cfg.n_workers)
    estimates = estimate_report(result.counts, cfg.combination)
    is_chsh = cfg.model.n_alice == 2 and cfg.model.n_bob == 2
    exact = exact_estimates(cfg.model, cfg.settings, cfg.combination) if is_chsh else None
    kc = _kc_summary(cfg)
    wall_clock = time.perf_counter() - started

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "reproducibility_hash": reproducibility_hash(cfg.raw, cfg.master_seed),
        "config": cfg.raw,
        "model_hash": result.model_hash,
        "counts": {
            "n_total": result.counts.n_total,
            "n_per_context": {f"{ix},{iy}": result.counts.context_total(ix, iy)
                              for ix in range(result.counts.n_alice)
                              for iy in range(result.counts.n_bob)},
        },
        "estimates": estimates.to_json_dict(),
        "exact": None if exact is None else {
            "correlations": {f"{ix},{iy}": e for (ix, iy), e in
                             sorted(exact.correlations.items())},
            "s": exact.s,
            "s_global": exact.s_global,
        },
        "kc": kc,
    }

    event_path = out_dir / cfg.out_event_log
    result.write_event_log(event_path)
    _atomic_write(out_dir / cfg.out_counts, result.counts.to_csv())
    _atomic_write(out_dir / cfg.out_report,
                  _report_json(report, _meta(wall_clock, cfg.n_workers)))

    if args.format == "json":
        _say(args, json.dumps(report, sort_keys=True))
    elif args.format == "csv":
        _say(args, result.counts.to_csv().rstrip("\n"))
    else:
        _say(args, f"{cfg.n_trials} trials of model '{cfg.model.kind}' "
                   f"(seed {cfg.master_seed}, {cfg.n_workers} worker(s))")
        if estimates.s is not None:
            _say(args, f"S        = {estimates.s:+.4f} +/- {estimates.s_se:.4f}"
                       + (f"   (exact {exact.s:+.4f})" if exact else ""))
            _say(args, f"S_global = {estimates.s_global:+.4f} +/- {estimates.s_global_se:.4f}"
                       + (f"   (exact {exact.s_global:+.4f})" if exact else ""))
        flagged = [a for a in estimates.audits if a.flagged]
        _say(args, f"no-signalling audit: {len(flagged)} flag(s)")
        _say(args, f"wrote {event_path}, {out_dir / cfg.out_counts}, "
                   f"{out_dir / cfg.out_report}")
    return EXIT_OK


def cmd_kc_verify(args) -> int:
    cfg = load_experiment(args.config, args.seed)
    out_dir = _out_dir(args)
    tables = model_tables(cfg.model) if cfg.model.n_alice == 2 and cfg.model.n_bob == 2 \
        else None
    if tables is None:
        raise ConfigError("kc-verify needs a model with two settings per side")

    contexts = {}
    for (ix, iy), table in sorted(tables.items()):
        if isinstance(cfg.model, QuantumModel):
            ctx = joint_context(polarization_observable(cfg.settings.alice_angles[ix]),
                                polarization_observable(cfg.settings.bob_angles[iy]))
            space = build_single_context_space(cfg.model.rho, ctx)
        else:
            space = ClassicalProbabilitySpace(
                ("P0", "P1", "P2", "P3"), table_vector(table))
        audit = verify_kolmogorov(space, exhaustive_limit=cfg.kc_exhaustive_limit)
        contexts[f"{ix},{iy}"] = {
            "n_atoms": len(space),
            "report": json.loads(audit.to_json()),
        }

    mixed = build_mixed_context_space_from_tables(tables, cfg.settings)
    mixed_audit = verify_kolmogorov(mixed, exhaustive_limit=cfg.kc_exhaustive_limit)
    exact = exact_estimates(cfg.model, cfg.settings, cfg.combination)
    s_prime = szabo_chsh(mixed, cfg.combination)

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "reproducibility_hash": reproducibility_hash(cfg.raw, cfg.master_seed),
        "config": cfg.raw,
        "contexts": contexts,
        "mixed_space": {
            "n_atoms": len(mixed),
            "report": json.loads(mixed_audit.to_json()),
        },
        "s": exact.s,
        "s_global": s_prime,
        "s_global_times_4": 4 * s_prime,
        "normalization_note": (
            "s_global divides by the total count over all settings; both the raw "
            "value and 4x are reported since either can be compared to the "
            "conditional-normalization bound"),
    }
    path = out_dir / "kc_report.json"
    _atomic_write(path, _report_json(report, _meta(0.0)))

    if args.format == "json":
        _say(args, json.dumps(report, sort_keys=True))
    else:
        for key, entry in contexts.items():
            ok = entry["report"]["additivity_ok"] and entry["report"]["positivity_ok"] \
                and entry["report"]["normalization_ok"]
            _say(args, f"context ({key}): {entry['n_atoms']} atoms, "
                       f"{'OK' if ok else 'FAILED'}")
        mixed_ok = mixed_audit.all_ok
        _say(args, f"mixed space: {len(mixed)} atoms, {'OK' if mixed_ok else 'FAILED'} "
                   f"({mixed_audit.additivity_mode}, "
                   f"{mixed_audit.n_additivity_checks} additivity checks)")
        _say(args, f"analytic S        = {exact.s:+.10f}")
        _say(args, f"analytic S_global = {s_prime:+.10f}   (x4 = {4 * s_prime:+.10f})")
        _say(args, f"wrote {path}")
    return EXIT_OK


def cmd_gleason_check(args) -> int:
    if args.dim < 2:
        raise ConfigError(f"dimension must be at least 2, got {args.dim}")
    out_dir = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    if args.state:
        try:
            rho = DensityOperator(operator_from_json(
                json.loads(Path(args.state).read_text())))
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise ModelBuildError(f"state file {args.state}: {exc}") from exc
        if rho.dim != args.dim:
            raise ModelBuildError(f"state has dim {rho.dim}, expected {args.dim}")
    else:
        rho = random_density(args.dim, rng)

    m = FrameFunction.trace_form(rho)
    additivity = check_orthogonal_additivity(m, args.n_contexts, args.dim, seed + 1)
    samples = [(p, born_probability(rho, p))
               for p in (random_rank_one(args.dim, rng) for _ in range(3 * args.dim ** 2))]
    fit = fit_trace_form(samples, args.dim)
    recovery_error = float(np.max(np.abs(fit.rho_estimate.matrix - rho.matrix)))

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "dim": args.dim,
        "seed": seed,
        "additivity": json.loads(additivity.to_json()),
        "trace_form_fit": {
            "residual": fit.residual,
            "recovery_max_error": recovery_error,
            "n_samples": fit.n_samples,
        },
    }
    if args.dim >= 3:
        ev = extravalence_check(m, random_rank_one(args.dim, rng),
                                min(args.n_contexts, 100), seed + 2)
        report["extravalence"] = {
            "passed": ev.passed, "spread": ev.spread,
            "target_deviation": ev.target_deviation, "n_contexts": ev.n_contexts,
        }
    if args.dim == 2:
        ce = dim2_counterexample()
        ce_additivity = check_orthogonal_additivity(ce, args.n_contexts, 2, seed + 3)
        ce_samples = [(p, ce(p)) for p in (random_rank_one(2, rng) for _ in range(100))]
        ce_fit = fit_trace_form(ce_samples, 2)
        report["counterexample"] = {
            "additivity": json.loads(ce_additivity.to_json()),
            "fit_residual": ce_fit.residual,
            "note": (
                "trace-form representation is guaranteed only for dimension >= 3; "
                "in dimension 2 this cubic Bloch rule is additive on every "
                "context yet admits no representing state"),
        }

    path = out_dir / f"gleason_dim{args.dim}.json"
    _atomic_write(path, _report_json(report, _meta(0.0)))

    if args.format == "json":
        _say(args, json.dumps(report, sort_keys=True))
    else:
        _say(args, f"dim {args.dim}: additivity over {args.n_contexts} random contexts: "
                   f"{'OK' if additivity.passed else 'FAILED'} "
                   f"(worst violation {additivity.worst_violation:.2e})")
        _say(args, f"trace-form fit: residual {fit.residual:.2e}, "
                   f"state recovered to {recovery_error:.2e}")
        if args.dim == 2:
            ce_entry = report["counterexample"]
            _say(args, "dim-2 counterexample: additivity "
                       f"{'OK' if ce_entry['additivity']['passed'] else 'FAILED'} "
                       f"but fit residual {ce_entry['fit_residual']:.3f} "
                       "(no representing state)")
            _say(args, ce_entry["note"])
        _say(args, f"wrote {path}")
    return EXIT_OK


def cmd_lhv_bound(args) -> int:
    if args.tables:
        try:
            tables = tables_from_json(Path(args.tables).read_text())
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"tables file {args.tables}: {exc}") from exc
        try:
            verdict = local_polytope_membership(tables)
        except SignallingTablesError as exc:
            _say(args, f"ill-posed: signalling -- {exc}")
            return EXIT_OK
        if args.format == "json":
            _say(args, json.dumps({
                "is_local": verdict.is_local,
                "max_abs_s": verdict.max_abs_s,
                "witness_s": verdict.witness_s,
                "witness_pattern": None if verdict.witness_combination is None
                else verdict.witness_combination.to_string(),
            }, sort_keys=True))
        else:
            _say(args, verdict.describe())
        return EXIT_OK

    bound = lhv_max_chsh()
    winners = maximizing_strategies()

    def strategy_text(s):
        fmt = lambda vs: "(" + ",".join("+" if v == 1 else "-" for v in vs) + ")"
        return f"a{fmt(s.a_of_x)} b{fmt(s.b_of_y)}  S={s.chsh()}"

    if args.format == "json":
        _say(args, json.dumps({
            "max_abs_s": bound,
            "maximizing_strategies": [s.to_json_dict() for s in winners],
        }, sort_keys=True))
    else:
        _say(args, f"exhaustive max |S| over 16 deterministic strategies and "
                   f"8 sign patterns: {bound}")
        _say(args, f"strategies reaching S = +{bound} at pattern "
                   f"{DEFAULT_COMBINATION.to_string()}:")
        for s in winners:
            _say(args, "  " + strategy_text(s))
    return EXIT_OK


def _exact_e_of_gap(cfg: ExperimentConfig, gap: float) -> float:
    """E at analyzer gap ``gap`` (models without angle semantics are flat)."""
    if isinstance(cfg.model, QuantumModel):
        base = cfg.settings.alice_angles[0]
        single = QuantumModel(cfg.model.rho, (base,), (base + gap,))
        return float(table_correlation(single.exact_joint_table(0, 0)))
    return float(table_correlation(cfg.model.exact_joint_table(0, 0)))


def _exact_s_of_offset(cfg: ExperimentConfig, offset: float) -> float:
    """S with every Bob angle shifted by ``offset`` (flat for table models)."""
    if isinstance(cfg.model, QuantumModel):
        shifted = QuantumModel(cfg.model.rho, cfg.model.alice_angles,
                               tuple(b + offset for b in cfg.model.bob_angles))
        return model_chsh(shifted, cfg.combination)
    return model_chsh(cfg.model, cfg.combination)


def cmd_plot(args) -> int:
    cfg = load_experiment(args.config, args.seed)
    if cfg.model.n_alice != 2 or cfg.model.n_bob != 2:
        raise ConfigError("plot needs a model with two settings per side")
    if args.sweep_points < 2 or not (args.sweep_stop > args.sweep_start):
        raise ConfigError(
            f"empty sweep range: [{args.sweep_start}, {args.sweep_stop}] "
            f"with {args.sweep_points} points")
    if args.mc_trials < 100:
        raise ConfigError("mc-trials must be at least 100")
    out_dir = _out_dir(args)

    gaps = np.linspace(0.0, np.pi, 97)
    e_curve = [_exact_e_of_gap(cfg, g) for g in gaps]
    mc_gaps = np.linspace(0.0, np.pi, 13)
    mc_e, mc_se = [], []
    for index, gap in enumerate(mc_gaps):
        if isinstance(cfg.model, QuantumModel):
            base = cfg.settings.alice_angles[0]
            table = QuantumModel(cfg.model.rho, (base,), (base + gap,)).exact_joint_table(0, 0)
        else:
            table = cfg.model.exact_joint_table(0, 0)
        rng = chunk_generator(cfg.master_seed, index)
        draws = rng.multinomial(args.mc_trials, table_vector(table))
        e_hat = (draws[0] + draws[3] - draws[1] - draws[2]) / args.mc_trials
        mc_e.append(float(e_hat))
        mc_se.append(float(np.sqrt(max(0.0, 1 - e_hat ** 2) / args.mc_trials)))

    correlation_panel = Panel(
        title=f"Correlation vs analyzer gap ({cfg.model.kind} model, "
              f"{args.mc_trials} trials/point)",
        xlabel="analyzer gap (rad)", ylabel="E",
        xlim=(0.0, float(np.pi)), ylim=(-1.15, 1.15))
    correlation_panel.add_hline(0.0, color="#bbbbbb", dash=None)
    correlation_panel.add_curve(gaps, e_curve)
    correlation_panel.add_points(mc_gaps, mc_e, mc_se)

    offsets = np.linspace(args.sweep_start, args.sweep_stop, args.sweep_points)
    s_curve = [_exact_s_of_offset(cfg, o) for o in offsets]
    top = max(3.0, max(abs(min(s_curve)), abs(max(s_curve))) + 0.2)
    sweep_panel = Panel(
        title="S vs analyzer offset",
        xlabel="offset applied to both receiver angles (rad)", ylabel="S",
        xlim=(float(offsets[0]), float(offsets[-1])), ylim=(-top, top))
    for bound, label, dash in ((2.0, "+2", "6,4"), (-2.0, "-2", "6,4"),
                               (2 * RT2, "+2*sqrt(2)", "2,3"),
                               (-2 * RT2, "-2*sqrt(2)", "2,3")):
        sweep_panel.add_hline(bound, color="#999999", dash=dash, label=label)
    sweep_panel.add_curve(offsets, s_curve, color="#2ca02c")

    svg = render_panels([correlation_panel, sweep_panel])
    path = out_dir / args.output
    _atomic_write(path, svg)
    _say(args, f"wrote {path} (peak |S| over sweep: {max(abs(s) for s in s_curve):.4f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellctx",
        description="Context-by-context probability spaces, CHSH Monte Carlo, "
                    "and frame-function checks.")
    parser.add_argument("--version", action="version", version=f"bellctx {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--out-dir", default=None,
                        help=f"output directory (default: ${OUT_DIR_ENV} or cwd)")
    common.add_argument("--format", choices=("json", "csv", "text"), default="text",
                        help="stdout format")
    common.add_argument("--quiet", action="store_true", help="suppress stdout")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a configured experiment, write log/counts/report")
    p.add_argument("config", help="path to .cfg or .json experiment config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kc-verify", parents=[common],
                       help="audit per-context and mixed-context probability spaces")
    p.add_argument("config")
    p.set_defaults(func=cmd_kc_verify)

    p = sub.add_parser("gleason-check", parents=[common],
                       help="frame-function additivity and trace-form fit checks")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--n-contexts", type=int, default=1000)
    p.add_argument("--state", default=None, help="operator JSON file for the state")
    p.set_defaults(func=cmd_gleason_check)

    p = sub.add_parser("lhv-bound", parents=[common],
                       help="deterministic-strategy bound, or membership of tables")
    p.add_argument("tables", nargs="?", default=None,
                   help="optional JSON file of four conditional tables")
    p.set_defaults(func=cmd_lhv_bound)

    p = sub.add_parser("plot", parents=[common],
                       help="correlation curve and S sweep as SVG")
    p.add_argument("config")
    p.add_argument("output", help="output SVG filename")
    p.add_argument("--sweep-start", type=float, default=-math.pi / 4)
    p.add_argument("--sweep-stop", type=float, default=math.pi / 4)
    p.add_argument("--sweep-points", type=int, default=61)
    p.add_argument("--mc-trials", type=int, default=20_000)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelBuildError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
