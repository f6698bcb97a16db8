"""Command-line front end: generate, solve, validate, experiment.

Every command reads one JSON run-configuration file and writes artifacts
into an output directory. Artifacts embed the relevant config digest and
seed, and equal digests and seeds always reproduce byte-identical files,
so reruns can skip stages whose outputs are already present and current.

Exit codes: 0 success, 2 configuration error, 3 infeasible solve, 4 IO
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import (
    ControlLibrary,
    DataLoadError,
    Dataset,
    generate_dataset,
    generate_library,
    load_dataset,
    load_library,
    save_dataset,
    save_library,
)
from .embedding import EmbeddingModel, FitError, fit
from .policy import MixedPolicy, run_monte_carlo, trajectories_to_csv
from .serialize import canonical_json
from .solver import assemble, solve_lp, with_threshold

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4

POLICY_FORMAT_VERSION = 1


class PolicyFileError(ValueError):
    """Raised when a policy file is unreadable or inconsistent with inputs."""


def _delta_tag(delta: float) -> str:
    """Filename fragment for a risk level, e.g. 0.05 -> "0.05"."""
    return repr(float(delta))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PolicyFileError(f"cannot read {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyFileError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise PolicyFileError(f"{path}: expected a JSON object")
    return obj


def _resolve_deltas(cfg: RunConfig, delta_override: float | None) -> tuple[float, ...]:
    if delta_override is None:
        return cfg.deltas
    if not (0.0 < delta_override < 1.0):
        raise ConfigError(f"--delta must lie in (0,1), got {delta_override}")
    return (float(delta_override),)


def cmd_generate(cfg: RunConfig, out: Path) -> tuple[Dataset, ControlLibrary]:
    """Produce dataset.jsonl and library.jsonl, reusing current cached files."""
    ds_path = out / "dataset.jsonl"
    lib_path = out / "library.jsonl"

    ds = None
    if ds_path.exists():
        try:
            cand = load_dataset(ds_path)
        except DataLoadError:
            cand = None
        if (
            cand is not None
            and cand.config_digest == cfg.dataset_digest
            and cand.master_seed == cfg.master_seed
        ):
            ds = cand
            print(f"dataset: cached ({ds.num_samples} samples, seed {ds.master_seed})")
    if ds is None:
        ds = generate_dataset(
            cfg.dataset, cfg.model, cfg.master_seed, digest=cfg.dataset_digest
        )
        save_dataset(ds, ds_path)
        print(
            f"dataset: {ds.num_samples} samples, horizon {ds.horizon}, "
            f"seed {ds.master_seed} -> {ds_path}"
        )

    lib = None
    if lib_path.exists():
        try:
            cand = load_library(lib_path)
        except DataLoadError:
            cand = None
        if cand is not None and cand.config_digest == cfg.library_digest:
            lib = cand
            print(f"library: cached ({lib.num_sequences} sequences)")
    if lib is None:
        lib = generate_library(
            cfg.library, cfg.model, cfg.nominal_params, digest=cfg.library_digest
        )
        save_library(lib, lib_path)
        print(
            f"library: {lib.num_sequences} sequences, horizon {lib.horizon} "
            f"-> {lib_path}"
        )
    return ds, lib


def _load_inputs(cfg: RunConfig, out: Path) -> tuple[Dataset, ControlLibrary]:
    ds = load_dataset(out / "dataset.jsonl")
    lib = load_library(out / "library.jsonl")
    return ds, lib


def _policy_record(
    cfg: RunConfig,
    lib: ControlLibrary,
    model: EmbeddingModel,
    delta: float,
    x0: np.ndarray,
    result,
    diagnostics,
) -> dict:
    return {
        "format_version": POLICY_FORMAT_VERSION,
        "kind": "policy",
        "delta": float(delta),
        "x0": [float(v) for v in x0],
        "master_seed": cfg.master_seed,
        "config_digest": cfg.digest,
        "library_digest": lib.content_digest,
        "embedding_digest": model.digest,
        "solve": result.to_dict(),
        "safety_estimates": {
            "threshold": 1.0 - float(delta),
            "min": diagnostics.min_value,
            "max": diagnostics.max_value,
            "num_below_zero": diagnostics.num_below_zero,
            "num_above_one": diagnostics.num_above_one,
        },
    }


def cmd_solve(
    cfg: RunConfig,
    out: Path,
    delta_override: float | None = None,
    x0_override: np.ndarray | None = None,
) -> int:
    """Fit the embedding and solve the LP for each risk level; write policies."""
    ds, lib = _load_inputs(cfg, out)
    model = fit(ds, cfg.state_kernel, cfg.control_kernel, cfg.regularization)
    x0 = cfg.initial_state if x0_override is None else np.asarray(x0_override, float)
    deltas = _resolve_deltas(cfg, delta_override)
    # one kernel solve covers the whole sweep; only the threshold changes
    base = assemble(model, cfg.scenario_for(deltas[0]), lib, x0)
    any_infeasible = False
    for delta in deltas:
        inst = with_threshold(base, delta)
        result = solve_lp(inst)
        path = out / f"policy_delta_{_delta_tag(delta)}.json"
        _write_json(
            path, _policy_record(cfg, lib, model, delta, x0, result, inst.diagnostics)
        )
        if result.status == "optimal":
            print(
                f"delta={delta}: objective {result.objective:.6f}, "
                f"support {list(result.support)}, safety estimates in "
                f"[{inst.diagnostics.min_value:.4f}, {inst.diagnostics.max_value:.4f}]"
                f" -> {path}"
            )
        else:
            any_infeasible = True
            print(
                f"delta={delta}: {result.status} (no estimate reaches "
                f"{inst.threshold:.4f}) -> {path}"
            )
    return EXIT_INFEASIBLE if any_infeasible else EXIT_OK


def _policy_from_record(record: dict, lib: ControlLibrary, path: Path) -> MixedPolicy:
    for key in ("delta", "x0", "solve", "library_digest"):
        if key not in record:
            raise PolicyFileError(f"{path}: policy file missing field {key!r}")
    if record.get("format_version") != POLICY_FORMAT_VERSION:
        raise PolicyFileError(
            f"{path}: unsupported policy format_version "
            f"{record.get('format_version')!r}"
        )
    if record["library_digest"] != lib.content_digest:
        raise PolicyFileError(
            f"{path}: policy was solved against a different library "
            f"(digest {record['library_digest'][:12]}... vs current "
            f"{lib.content_digest[:12]}...); regenerate or re-solve"
        )
    solve = record["solve"]
    if solve.get("status") != "optimal":
        raise PolicyFileError(
            f"{path}: policy records an unsuccessful solve "
            f"(status {solve.get('status')!r}); nothing to validate"
        )
    weights = np.zeros(lib.num_sequences)
    for index, weight in solve["weights"]:
        if not (0 <= int(index) < lib.num_sequences):
            raise PolicyFileError(f"{path}: weight index {index} out of range")
        weights[int(index)] = float(weight)
    return MixedPolicy(
        weights=weights,
        library=lib,
        x0=np.asarray(record["x0"], dtype=float),
        delta=float(record["delta"]),
        model_digest=str(record.get("embedding_digest", "")),
    )


def cmd_validate(
    cfg: RunConfig,
    out: Path,
    policy_path: Path,
    x0_override: np.ndarray | None = None,
    seed_override: int | None = None,
) -> int:
    """Monte-Carlo validate a saved policy; write a report and trajectory CSV."""
    lib = load_library(out / "library.jsonl")
    record = _read_json(policy_path)
    policy = _policy_from_record(record, lib, policy_path)
    sc = cfg.scenario_for(policy.delta)
    x0 = policy.x0 if x0_override is None else np.asarray(x0_override, float)
    seed = cfg.mc_seed if seed_override is None else int(seed_override)
    report = run_monte_carlo(policy, cfg.model, sc, x0, cfg.trials, seed)
    tag = _delta_tag(policy.delta)
    report_path = out / f"report_delta_{tag}.json"
    record_out = {
        "kind": "report",
        "delta": policy.delta,
        "x0": [float(v) for v in x0],
        "config_digest": cfg.digest,
        "master_seed": cfg.master_seed,
        "library_digest": lib.content_digest,
        "objective": record["solve"].get("objective"),
        "report": report.to_dict(),
    }
    _write_json(report_path, record_out)
    csv_path = out / f"trajectories_delta_{tag}.csv"
    trajectories_to_csv(report, csv_path)
    print(
        f"delta={policy.delta}: success rate {report.success_rate:.4f} "
        f"({report.successes}/{report.trials}), Wilson 95% "
        f"[{report.wilson_low:.4f}, {report.wilson_high:.4f}] -> {report_path}"
    )
    return EXIT_OK


def _summary_rows(cfg: RunConfig, out: Path, deltas) -> list[dict]:
    rows = []
    for delta in deltas:
        tag = _delta_tag(delta)
        policy = _read_json(out / f"policy_delta_{tag}.json")
        row = {
            "delta": float(delta),
            "status": policy["solve"]["status"],
            "objective": policy["solve"]["objective"],
            "success_rate": None,
            "wilson_low": None,
            "wilson_high": None,
            "trials": None,
        }
        report_path = out / f"report_delta_{tag}.json"
        if report_path.exists():
            report = _read_json(report_path)["report"]
            row.update(
                success_rate=report["success_rate"],
                wilson_low=report["wilson_95"][0],
                wilson_high=report["wilson_95"][1],
                trials=report["trials"],
            )
        rows.append(row)
    return rows


def _write_summary(cfg: RunConfig, out: Path, rows: list[dict]) -> None:
    _write_json(
        out / "summary.json",
        {
            "kind": "summary",
            "config_digest": cfg.digest,
            "master_seed": cfg.master_seed,
            "rows": rows,
        },
    )
    columns = [
        "delta",
        "status",
        "objective",
        "success_rate",
        "wilson_low",
        "wilson_high",
        "trials",
    ]
    def cell(value) -> str:
        if value is None:
            return ""
        # repr keeps floats round-trip exact; strings stay bare
        return value if isinstance(value, str) else repr(value)

    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(cell(row[c]) for c in columns))
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _current_json(path: Path, cfg: RunConfig) -> dict | None:
    """The parsed file if it exists and carries the current config digest."""
    if not path.exists():
        return None
    try:
        record = _read_json(path)
    except PolicyFileError:
        return None
    if record.get("config_digest") != cfg.digest:
        return None
    if record.get("master_seed") != cfg.master_seed:
        return None
    return record


def cmd_experiment(
    cfg: RunConfig,
    out: Path,
    delta_override: float | None = None,
    x0_override: np.ndarray | None = None,
) -> int:
    """Run generate, solve per risk level, validate per risk level, summarize."""
    ds, lib = cmd_generate(cfg, out)
    model = None
    x0 = cfg.initial_state if x0_override is None else np.asarray(x0_override, float)
    deltas = _resolve_deltas(cfg, delta_override)
    base = None
    any_infeasible = False
    for delta in deltas:
        tag = _delta_tag(delta)
        policy_path = out / f"policy_delta_{tag}.json"
        cached = _current_json(policy_path, cfg)
        if cached is not None and cached.get("x0") == [float(v) for v in x0]:
            print(f"delta={delta}: cached policy")
        else:
            if model is None:
                model = fit(ds, cfg.state_kernel, cfg.control_kernel, cfg.regularization)
                base = assemble(model, cfg.scenario_for(delta), lib, x0)
            inst = with_threshold(base, delta)
            result = solve_lp(inst)
            _write_json(
                policy_path,
                _policy_record(cfg, lib, model, delta, x0, result, inst.diagnostics),
            )
            if result.status == "optimal":
                print(
                    f"delta={delta}: objective {result.objective:.6f}, "
                    f"support {list(result.support)}"
                )
            else:
                any_infeasible = True
                print(f"delta={delta}: {result.status}")
                continue
        record = _read_json(policy_path)
        if record["solve"]["status"] != "optimal":
            any_infeasible = True
            continue
        report_path = out / f"report_delta_{tag}.json"
        if _current_json(report_path, cfg) is not None:
            print(f"delta={delta}: cached report")
            continue
        cmd_validate(cfg, out, policy_path)
    rows = _summary_rows(cfg, out, deltas)
    _write_summary(cfg, out, rows)
    print(f"summary -> {out / 'summary.csv'}")
    return EXIT_INFEASIBLE if any_infeasible else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelcc",
        description=(
            "Data-driven chance-constrained control: fit a kernel embedding "
            "from trajectory data and pick a mixture over a control library."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_delta=True, with_x0=True):
        p.add_argument("--config", required=True, help="JSON run configuration file")
        p.add_argument(
            "--out-dir", default=None, help="output directory (default from config)"
        )
        p.add_argument(
            "--seed", type=int, default=None, help="override the master seed"
        )
        if with_delta:
            p.add_argument(
                "--delta",
                type=float,
                default=None,
                help="restrict the sweep to one risk level",
            )
        if with_x0:
            p.add_argument(
                "--x0",
                type=float,
                nargs=4,
                default=None,
                metavar=("PX", "VX", "PY", "VY"),
                help="override the initial state",
            )

    common(sub.add_parser("generate", help="write dataset and library files"),
           with_delta=False, with_x0=False)
    common(sub.add_parser("solve", help="fit embedding and solve per risk level"))
    p_val = sub.add_parser("validate", help="Monte-Carlo validate a saved policy")
    common(p_val, with_delta=False)
    p_val.add_argument("--policy", required=True, help="policy JSON file to validate")
    common(sub.add_parser("experiment", help="full pipeline plus summary table"))
    return parser


def _apply_seed_override(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    return dataclasses.replace(cfg, master_seed=int(seed))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if getattr(args, "seed", None) is not None and args.command != "validate":
            cfg = _apply_seed_override(cfg, args.seed)
        out = Path(args.out_dir) if args.out_dir else Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            cmd_generate(cfg, out)
            return EXIT_OK
        if args.command == "solve":
            return cmd_solve(cfg, out, args.delta, args.x0)
        if args.command == "validate":
            return cmd_validate(
                cfg, out, Path(args.policy), args.x0, args.seed
            )
        if args.command == "experiment":
            return cmd_experiment(cfg, out, args.delta, args.x0)
        raise AssertionError(f"unhandled command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PolicyFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataLoadError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
