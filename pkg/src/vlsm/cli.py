"""Command-line pipeline: generate cohorts, run analyses, evaluate results.

Subcommands: ``synth`` (synthetic cohort), ``run`` (full permutation
analysis), ``evaluate`` (metrics against ground truth), ``version``.
Exit codes: 0 success, 2 configuration error, 3 input-data error,
4 internal numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cluster import Connectivity
from .errors import ConfigError, DataError, NumericError
from .permute import (
    PermutationConfig,
    ThresholdTable,
    apply_correction,
    derive_thresholds,
    false_positive_rate,
    null_from_records,
    null_summary_statistics,
    run_permutation_pass,
)
from .stats import fdr_bh, p_values, voxelwise_t
from .synth import SyntheticCohortSpec, box_mask, ellipsoid_mask, generate_cohort
from .volume import (
    BinaryMask,
    VolumeGeometry,
    overlap_map,
    read_cohort_dir,
    read_mask,
    write_cohort_dir,
    write_nifti,
)

_DEFAULT_CONFIG_RESOURCE = "desk32.json"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def default_config_text() -> str:
    return (
        resources.files("vlsm") / "configs" / _DEFAULT_CONFIG_RESOURCE
    ).read_text()


def load_config(path: Optional[str]) -> dict:
    """Parse the JSON config file (the packaged default when path is None)."""
    if path is None:
        text = default_config_text()
        source = f"<packaged {_DEFAULT_CONFIG_RESOURCE}>"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        source = str(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return payload


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg or not isinstance(cfg[name], dict):
        raise ConfigError(f"config is missing the '{name}' section")
    return cfg[name]


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"config is missing '{where}.{key}'")
    return section[key]


def _geometry_from(section: dict) -> VolumeGeometry:
    return VolumeGeometry(
        dims=tuple(_require(section, "dims", "synth")),
        spacing=tuple(section.get("spacing", (1.0, 1.0, 1.0))),
        origin=tuple(section.get("origin", (0.0, 0.0, 0.0))),
    )


def _region_mask(geometry: VolumeGeometry, spec, where: str, base_dir: Path) -> BinaryMask:
    """Build a mask from a shape description or load it from a file."""
    if not isinstance(spec, dict):
        raise ConfigError(f"'{where}' must be an object describing a shape or file")
    if "file" in spec:
        mask = read_mask(base_dir / spec["file"])
        geometry.require_compatible(mask.geometry, where)
        return mask
    shape = spec.get("shape")
    if shape == "ellipsoid":
        return ellipsoid_mask(
            geometry,
            _require(spec, "center", where),
            _require(spec, "semi_axes", where),
        )
    if shape == "box":
        return box_mask(
            geometry, _require(spec, "corner", where), _require(spec, "size", where)
        )
    raise ConfigError(f"'{where}.shape' must be 'ellipsoid' or 'box', got {shape!r}")


def synth_spec_from_config(
    cfg: dict, seed_override: Optional[int], base_dir: Path
) -> SyntheticCohortSpec:
    section = _section(cfg, "synth")
    geometry = _geometry_from(section)
    brain = _region_mask(geometry, _require(section, "brain", "synth"), "synth.brain", base_dir)
    roi = _region_mask(geometry, _require(section, "roi", "synth"), "synth.roi", base_dir)
    seed = seed_override if seed_override is not None else section.get("seed", 0)
    return SyntheticCohortSpec(
        geometry=geometry,
        brain_mask=brain,
        n_subjects=int(_require(section, "n_subjects", "synth")),
        lesion_size_range=tuple(_require(section, "lesion_size_range", "synth")),
        roi=roi,
        growth_bias=float(section.get("growth_bias", 1.0)),
        score_noise_sd=float(section.get("score_noise_sd", 0.0)),
        seed=int(seed),
    )


def analysis_from_config(
    cfg: dict, seed_override: Optional[int], mode_override: Optional[str]
):
    """Returns (base PermutationConfig, modes to run, audit permutation count)."""
    section = _section(cfg, "analysis")
    mode = mode_override or section.get("mode", "both")
    if mode == "both":
        modes = ("max-cluster", "all-clusters")
    elif mode in ("max-cluster", "all-clusters"):
        modes = (mode,)
    else:
        raise ConfigError(
            f"analysis.mode must be 'max-cluster', 'all-clusters' or 'both', got {mode!r}"
        )
    seed = seed_override if seed_override is not None else section.get("master_seed", 0)
    connectivity_code = int(section.get("connectivity", 26))
    try:
        connectivity = Connectivity(connectivity_code)
    except ValueError:
        raise ConfigError(
            f"analysis.connectivity must be 6, 18 or 26, got {connectivity_code}"
        ) from None
    config = PermutationConfig(
        n_permutations=int(section.get("n_permutations", 1000)),
        p_thresholds=tuple(section.get("p_thresholds", (0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001))),
        alpha=float(section.get("alpha", 0.05)),
        mode=modes[0],
        connectivity=connectivity,
        tail=str(section.get("tail", "greater")),
        min_lesion=int(section.get("min_lesion", 2)),
        master_seed=int(seed),
    )
    audit = int(section.get("audit_permutations", 400))
    if audit < 0:
        raise ConfigError(f"analysis.audit_permutations must be >= 0, got {audit}")
    return config, modes, audit


# ---------------------------------------------------------------------------
# Manifests and output helpers
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Provenance of one CLI invocation, written as manifest.json."""

    command: str
    config_path: str
    output_dir: str
    tool_version: str = __version__
    input_location: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    timings_sec: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def add_input(self, path: Path, root: Optional[Path] = None):
        key = str(path.relative_to(root)) if root else str(path)
        self.inputs[key] = _sha256(path)

    def add_output(self, path: Path, root: Path):
        self.outputs[str(path.relative_to(root))] = _sha256(path)

    def write(self, path: Path):
        payload = {
            "schema": "vlsm-manifest/1",
            "tool_version": self.tool_version,
            "command": self.command,
            "config_path": self.config_path,
            "input_location": self.input_location,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "threads": self.threads,
            "timings_sec": self.timings_sec,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        _write_json(path, payload)


def _write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _pname(p: float) -> str:
    return format(p, "g")


class _Stage:
    """Records wall-clock durations per pipeline stage."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def __call__(self, name: str):
        return _StageTimer(self.manifest, name)


class _StageTimer:
    def __init__(self, manifest, name):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings_sec[self.name] = round(time.perf_counter() - self.t0, 6)
        return False


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(config_path: Optional[str], out_dir: str, seed: Optional[int]) -> int:
    cfg = load_config(config_path)
    base_dir = Path(config_path).parent if config_path else Path.cwd()
    spec = synth_spec_from_config(cfg, seed, base_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="synth",
        config_path=config_path or f"<packaged {_DEFAULT_CONFIG_RESOURCE}>",
        output_dir=str(out),
        seed=spec.seed,
    )
    stage = _Stage(manifest)

    with stage("generate"):
        cohort, truth = generate_cohort(spec)
    with stage("write"):
        write_cohort_dir(cohort, out)
        write_nifti(spec.geometry, truth.roi.voxels, out / "roi.nii")
        write_nifti(spec.geometry, truth.brain_mask.voxels, out / "brain_mask.nii")
        _write_json(
            out / "ground_truth.json",
            {
                "schema": "vlsm-ground-truth/1",
                "spec": truth.spec_echo,
                "roi_file": "roi.nii",
                "brain_mask_file": "brain_mask.nii",
                "true_damage": {
                    sid: damage for sid, damage in zip(cohort.ids, truth.true_damage)
                },
            },
        )
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest.add_output(path, out)
    manifest.write(out / "manifest.json")
    print(f"cohort of {cohort.n_subjects} subjects written to {out}")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(
    cohort_dir: str,
    config_path: Optional[str],
    out_dir: str,
    threads: int,
    seed: Optional[int],
    mode: Optional[str],
) -> int:
    cfg = load_config(config_path)
    base_config, modes, audit_n = analysis_from_config(cfg, seed, mode)
    cohort_path = Path(cohort_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="run",
        config_path=config_path or f"<packaged {_DEFAULT_CONFIG_RESOURCE}>",
        input_location=str(cohort_path),
        output_dir=str(out),
        seed=int(base_config.master_seed),
        threads=threads,
    )
    stage = _Stage(manifest)

    with stage("read_cohort"):
        cohort = read_cohort_dir(cohort_path)
        for path in sorted(cohort_path.rglob("*")):
            if path.is_file():
                manifest.add_input(path, cohort_path)

    with stage("stat_map"):
        stat_map = voxelwise_t(cohort, base_config.min_lesion)
        write_nifti(cohort.geometry, stat_map.t, out / "tmap.nii")
        write_nifti(cohort.geometry, stat_map.analyzable.voxels, out / "analyzable.nii")
        write_nifti(cohort.geometry, overlap_map(cohort).counts, out / "overlap.nii")

    with stage("permutations"):
        records = run_permutation_pass(cohort, base_config, n_jobs=threads)
    audit_records = None
    if audit_n > 0:
        with stage("audit_permutations"):
            audit_records = run_permutation_pass(
                cohort,
                base_config,
                n_permutations=audit_n,
                first_stream=base_config.n_permutations + 1,
                n_jobs=threads,
            )

    with stage("fdr"):
        fdr_flat = np.zeros(cohort.geometry.n_voxels, dtype=bool)
        cutoff, n_rejected = None, 0
        if stat_map.analyzable.size() > 0:
            p_analyzable = p_values(stat_map.analyzable_t(), stat_map.df, base_config.tail)
            fdr = fdr_bh(p_analyzable, base_config.alpha)
            fdr_flat[np.flatnonzero(stat_map.analyzable.linear())] = fdr.reject
            cutoff, n_rejected = fdr.cutoff, int(fdr.reject.sum())
        write_nifti(cohort.geometry, fdr_flat, out / "fdr_mask.nii")
        _write_json(
            out / "fdr.json",
            {
                "q": base_config.alpha,
                "cutoff": cutoff,
                "n_rejected": n_rejected,
                "n_analyzable": int(stat_map.analyzable.size()),
            },
        )

    fp_rows = []
    fwer_t_value = None
    with stage("corrections"):
        build_null_for_dump = None
        for m in modes:
            config_m = replace(base_config, mode=m)
            null_m = null_from_records(records, config_m, cohort.geometry)
            if build_null_for_dump is None:
                build_null_for_dump = null_m
            table = derive_thresholds(null_m)
            corrected = apply_correction(
                stat_map, table, config_m, null_summary=null_summary_statistics(null_m)
            )
            _write_json(out / f"thresholds_{m}.json", table.to_dict())
            _write_json(
                out / f"clusters_{m}.json",
                {
                    "mode": m,
                    "per_threshold": [
                        {
                            "p_threshold": p,
                            "surviving_clusters": [
                                {"label": label, "size": size} for label, size in inventory
                            ],
                        }
                        for p, inventory in zip(
                            corrected.p_thresholds, corrected.surviving_clusters
                        )
                    ],
                },
            )
            map_dir = out / "corrected" / m
            map_dir.mkdir(parents=True, exist_ok=True)
            for p, labels in zip(corrected.p_thresholds, corrected.surviving_labelings):
                write_nifti(cohort.geometry, labels, map_dir / f"p{_pname(p)}.nii")
            if m == modes[0]:
                fwer_t_value = table.fwer_t_threshold
                write_nifti(cohort.geometry, corrected.fwer_mask.voxels, out / "fwer_mask.nii")
            fp_build = false_positive_rate(null_m, table)
            fp_fresh = {}
            if audit_records is not None:
                audit_m = null_from_records(audit_records, config_m, cohort.geometry)
                fp_fresh = false_positive_rate(audit_m, table)
            for p in base_config.p_thresholds:
                fp_rows.append(
                    {
                        "mode": m,
                        "p_threshold": p,
                        "cluster_size_threshold": table.cluster_threshold(p),
                        "fp_rate_build": fp_build[p],
                        "fp_rate_fresh": fp_fresh.get(p),
                    }
                )

    with stage("dumps"):
        with open(out / "thresholds.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["mode", "p_threshold", "cluster_size_threshold", "fwer_t_threshold"]
            )
            for row in fp_rows:
                writer.writerow(
                    [row["mode"], _pname(row["p_threshold"]),
                     row["cluster_size_threshold"], repr(fwer_t_value)]
                )
        _write_json(out / "null_distribution.json", build_null_for_dump.to_dict())
        with open(out / "null_samples.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["permutation_index", "p_threshold", "cluster_size"])
            for i, p in enumerate(base_config.p_thresholds):
                sizes, perm_idx = build_null_for_dump.all_cluster_samples(i)
                for perm, size in zip(perm_idx, sizes):
                    writer.writerow([int(perm), _pname(p), int(size)])
        with open(out / "fp_rates.csv", "w", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=[
                    "mode",
                    "p_threshold",
                    "cluster_size_threshold",
                    "fp_rate_build",
                    "fp_rate_fresh",
                ],
            )
            writer.writeheader()
            for row in fp_rows:
                writer.writerow(row)
        fwer_fresh = None
        if audit_records is not None and fwer_t_value is not None:
            fwer_fresh = float(np.mean(audit_records.max_t > fwer_t_value))
        _write_json(
            out / "fp_rates.json",
            {
                "audit_permutations": audit_n,
                "fwer_t_threshold": fwer_t_value,
                "fwer_fresh_rate": fwer_fresh,
                "rows": fp_rows,
            },
        )

    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest.add_output(path, out)
    manifest.write(out / "manifest.json")
    print(f"analysis of {cohort.n_subjects} subjects written to {out}")
    print(f"modes: {', '.join(modes)}; permutations: {base_config.n_permutations} build"
          + (f" + {audit_n} audit" if audit_n else ""))
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _region_metrics(detected: np.ndarray, reference: np.ndarray) -> dict:
    n_det = int(detected.sum())
    n_ref = int(reference.sum())
    n_inter = int((detected & reference).sum())
    sensitivity = n_inter / n_ref if n_ref else 0.0
    spill_over = n_det / n_ref if n_ref else 0.0
    dice = 2.0 * n_inter / (n_det + n_ref) if (n_det + n_ref) else 0.0
    return {
        "detected_voxels": n_det,
        "reference_voxels": n_ref,
        "intersection_voxels": n_inter,
        "sensitivity": sensitivity,
        "spill_over": spill_over,
        "dice": dice,
    }


def loglog_fit(p_thresholds, size_thresholds) -> dict:
    """Least-squares fit of log(size threshold) against log(p threshold).

    Levels whose size threshold is 0 cannot enter the log fit and are
    dropped; the returned record says how many points were used.
    """
    points = [
        (math.log(p), math.log(thr))
        for p, thr in zip(p_thresholds, size_thresholds)
        if thr > 0
    ]
    if len(points) < 2:
        return {"n_points": len(points), "slope": None, "intercept": None, "r_squared": None}
    x = np.array([a for a, _ in points])
    y = np.array([b for _, b in points])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {
        "n_points": len(points),
        "slope": float(slope),
        "intercept": float(intercept),
        "r_squared": r_squared,
    }


@dataclass
class EvaluationReport:
    """Everything cmd_evaluate knows, serialized as report.json plus CSVs."""

    run_dir: str
    modes: tuple
    per_mode: dict
    fwer: Optional[dict]
    ground_truth: Optional[dict]

    def to_dict(self) -> dict:
        return {
            "schema": "vlsm-evaluation/1",
            "run_dir": self.run_dir,
            "modes": list(self.modes),
            "per_mode": self.per_mode,
            "fwer": self.fwer,
            "ground_truth": self.ground_truth,
        }


def cmd_evaluate(run_dir: str, truth_path: Optional[str], out_dir: Optional[str]) -> int:
    run = Path(run_dir)
    if not run.is_dir():
        raise DataError(f"run directory {run} does not exist")
    out = Path(out_dir) if out_dir else run / "evaluation"
    out.mkdir(parents=True, exist_ok=True)

    tables = {}
    for path in sorted(run.glob("thresholds_*.json")):
        mode = path.stem.replace("thresholds_", "")
        tables[mode] = ThresholdTable.from_dict(json.loads(path.read_text()))
    if not tables:
        raise DataError(f"{run}: no thresholds_*.json found (not a run directory?)")
    fp_payload = json.loads((run / "fp_rates.json").read_text()) if (run / "fp_rates.json").is_file() else {"rows": []}
    analyzable = read_mask(run / "analyzable.nii")

    truth = None
    reference = None
    if truth_path:
        truth_file = Path(truth_path)
        if truth_file.is_file():
            truth = json.loads(truth_file.read_text())
            roi = read_mask(truth_file.parent / truth["roi_file"])
            analyzable.geometry.require_compatible(roi.geometry, "roi vs run")
            reference = roi.voxels & analyzable.voxels
        else:
            print(f"warning: ground truth {truth_file} not found, "
                  "reporting null-calibration metrics only", file=sys.stderr)

    per_mode = {}
    for mode, table in tables.items():
        fp_rows = [r for r in fp_payload["rows"] if r["mode"] == mode]
        entry = {
            "fwer_t_threshold": table.fwer_t_threshold,
            "per_threshold": [],
            "threshold_curve_fit": loglog_fit(
                table.p_thresholds, table.cluster_size_thresholds
            ),
        }
        for p, thr in zip(table.p_thresholds, table.cluster_size_thresholds):
            row = {
                "p_threshold": p,
                "cluster_size_threshold": thr,
            }
            for fp_row in fp_rows:
                if fp_row["p_threshold"] == p:
                    row["fp_rate_build"] = fp_row["fp_rate_build"]
                    row["fp_rate_fresh"] = fp_row["fp_rate_fresh"]
            map_path = run / "corrected" / mode / f"p{_pname(p)}.nii"
            if reference is not None and map_path.is_file():
                detected = read_mask(map_path)
                row["recovery"] = _region_metrics(detected.voxels, reference)
            clusters_path = run / f"clusters_{mode}.json"
            if clusters_path.is_file():
                inventory = json.loads(clusters_path.read_text())
                for c in inventory["per_threshold"]:
                    if c["p_threshold"] == p:
                        row["surviving_clusters"] = c["surviving_clusters"]
            entry["per_threshold"].append(row)
        per_mode[mode] = entry

    fwer_entry = None
    fwer_path = run / "fwer_mask.nii"
    if fwer_path.is_file() and reference is not None:
        fwer_mask = read_mask(fwer_path)
        fwer_entry = _region_metrics(fwer_mask.voxels, reference)

    report = EvaluationReport(
        run_dir=str(run),
        modes=tuple(tables),
        per_mode=per_mode,
        fwer=fwer_entry,
        ground_truth=truth["spec"] if truth else None,
    )
    _write_json(out / "report.json", report.to_dict())

    with open(out / "threshold_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "p_threshold", "cluster_size_threshold"])
        for mode, table in tables.items():
            for p, thr in zip(table.p_thresholds, table.cluster_size_thresholds):
                writer.writerow([mode, _pname(p), thr])
    with open(out / "fp_rate_by_p.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "p_threshold", "fp_rate_build", "fp_rate_fresh"])
        for row in fp_payload["rows"]:
            writer.writerow(
                [row["mode"], _pname(row["p_threshold"]),
                 row["fp_rate_build"], row["fp_rate_fresh"]]
            )
    with open(out / "recovery_metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "p_threshold", "sensitivity", "spill_over", "dice",
             "detected_voxels", "reference_voxels"]
        )
        for mode, entry in per_mode.items():
            for row in entry["per_threshold"]:
                rec = row.get("recovery")
                if rec:
                    writer.writerow(
                        [mode, _pname(row["p_threshold"]), rec["sensitivity"],
                         rec["spill_over"], rec["dice"],
                         rec["detected_voxels"], rec["reference_voxels"]]
                    )
        if fwer_entry:
            writer.writerow(
                ["fwer", "", fwer_entry["sensitivity"], fwer_entry["spill_over"],
                 fwer_entry["dice"], fwer_entry["detected_voxels"],
                 fwer_entry["reference_voxels"]]
            )
    print(f"evaluation written to {out}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlsm",
        description="Voxel-based lesion-symptom mapping with permutation-based "
        "multiple-comparison correction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic lesion cohort")
    p_synth.add_argument("--config", metavar="PATH", default=None,
                         help="JSON config (default: packaged desk-scale scenario)")
    p_synth.add_argument("--out", metavar="DIR", required=True)
    p_synth.add_argument("--seed", metavar="U64", type=int, default=None,
                         help="override synth.seed from the config")

    p_run = sub.add_parser("run", help="run the permutation analysis on a cohort")
    p_run.add_argument("cohort", metavar="COHORT_DIR")
    p_run.add_argument("--config", metavar="PATH", default=None)
    p_run.add_argument("--out", metavar="DIR", required=True)
    p_run.add_argument("--threads", metavar="N", type=int, default=os.cpu_count() or 1,
                       help="worker count (output is invariant to this)")
    p_run.add_argument("--seed", metavar="U64", type=int, default=None,
                       help="override analysis.master_seed from the config")
    p_run.add_argument("--mode", choices=("max-cluster", "all-clusters", "both"),
                       default=None,
                       help="null construction; all-clusters pools every cluster "
                       "and is for demonstration only (it does not control "
                       "false positives)")

    p_eval = sub.add_parser("evaluate", help="score a run against ground truth")
    p_eval.add_argument("run_dir", metavar="RUN_DIR")
    p_eval.add_argument("truth", metavar="GROUND_TRUTH_JSON", nargs="?", default=None)
    p_eval.add_argument("--out", metavar="DIR", default=None,
                        help="default: RUN_DIR/evaluation")

    sub.add_parser("version", help="print the tool version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args.config, args.out, args.seed)
        if args.command == "run":
            return cmd_run(args.cohort, args.config, args.out,
                           args.threads, args.seed, args.mode)
        if args.command == "evaluate":
            return cmd_evaluate(args.run_dir, args.truth, args.out)
        if args.command == "version":
            print(f"vlsm {__version__}")
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
