"""Batch front door: bounds, MSE, threshold, and oracle sweeps to CSV/JSON.

Every run writes its outputs plus a manifest (config hash, seed, version,
wall clock, file list) into the output directory.  Outputs are
byte-identical for identical config and seed: floats are serialized at
full round-trip precision and rows are sorted before writing.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import mc_event_probability, swap_bound
from .config import (
    ConfigError,
    build_scenario,
    canonical_json,
    config_sha256,
    load_preset,
    validate_config,
)
from .estimation import (
    ThresholdNotFound,
    crb_curve,
    method_of_intervals,
    mse_sweep,
    threshold_report,
    threshold_snr,
)

CSV_SCHEMA = "subswap-csv v1"
OUTDIR_ENV = "SUBSWAP_OUT"


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, name, header, rows):
    lines = [f"# {CSV_SCHEMA} {name}", ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _read_csv(path):
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {CSV_SCHEMA}"):
        raise ConfigError(f"{path} is not a recognized output file")
    header = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:] if line]
    return header, rows


class _Run:
    """Collects outputs for one CLI invocation and emits the manifest."""

    def __init__(self, cfg, outdir):
        self.cfg = cfg
        self.outdir = Path(outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.started = time.monotonic()
        self.outputs = []
        config_path = self.outdir / "config.json"
        config_path.write_text(canonical_json(cfg))
        self.outputs.append(config_path.name)

    def path(self, name):
        self.outputs.append(name)
        return self.outdir / name

    def finish(self):
        manifest = {
            "schema": "subswap-manifest-v1",
            "config_sha256": config_sha256(self.cfg),
            "master_seed": self.cfg["seed"],
            "artifact_version": __version__,
            "wall_clock_s": round(time.monotonic() - self.started, 3),
            "outputs": sorted(self.outputs),
        }
        (self.outdir / "run_manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        return manifest


def _effective_config(args):
    if args.preset is not None:
        raw = load_preset(args.preset)
    elif args.config is not None:
        raw = json.loads(Path(args.config).read_text())
    else:
        raise ConfigError("either --config or --preset is required")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.trials is not None:
        raw["trials"] = args.trials
    return validate_config(raw)


def _array_labels(cfg):
    return [label for label in ("dense", "compressed") if label in cfg["arrays"]]


def cmd_bounds(cfg, outdir):
    """Analytic bound rows per (array, event, SNR), optional oracle columns."""
    run = _Run(cfg, outdir)
    mc_trials = cfg["mc_trials"]
    rows = []
    for label in _array_labels(cfg):
        scenario = build_scenario(cfg, label)
        psi = scenario.build_compressor()
        for event in sorted(cfg["events"]):
            for snr in scenario.snr_grid_db:
                model = scenario.build_model(snr)
                bound = swap_bound(model, psi, scenario.snapshots, event)
                mc_p = mc_std = None
                if mc_trials > 0:
                    mc = mc_event_probability(
                        model, psi, scenario.snapshots, event,
                        trials=mc_trials, seed=scenario.master_seed,
                    )
                    mc_p, mc_std = mc.probability, mc.std
                rows.append(
                    (snr, event, cfg["model"], psi is not None,
                     bound.probability, mc_p, mc_std)
                )
    rows.sort(key=lambda r: (r[3], r[1], r[0]))
    _write_csv(
        run.path("bounds.csv"),
        "bounds",
        ("snr_db", "event", "model", "compressed", "probability",
         "mc_probability", "mc_std"),
        rows,
    )
    run.finish()
    return 0


def _sweep_with_curves(cfg, label, progress=False):
    scenario = build_scenario(cfg, label)
    psi = scenario.build_compressor()
    if progress:
        print(f"[{label}] sweeping {len(scenario.snr_grid_db)} SNR points "
              f"x {scenario.trials} trials", file=sys.stderr)
    curve = mse_sweep(scenario)
    crb = crb_curve(scenario)
    pss = tuple(
        swap_bound(scenario.build_model(snr), psi, scenario.snapshots,
                   cfg["mi_event"]).probability
        for snr in scenario.snr_grid_db
    )
    sigma_t = method_of_intervals(pss, crb)
    return scenario, curve, crb, pss, sigma_t


def _write_mse_csv(run, label, scenario, curve, crb, pss, sigma_t):
    rows = [
        (snr, curve.mse[i], crb.values[i], float(sigma_t[i]), pss[i],
         curve.trials)
        for i, snr in enumerate(scenario.snr_grid_db)
    ]
    _write_csv(
        run.path(f"mse_{label}.csv"),
        "mse",
        ("snr_db", "mse", "crb", "sigma_t", "pss_bound", "trials"),
        rows,
    )


def cmd_mse(cfg, outdir):
    """MSE, CRB, swap-bound, and method-of-intervals curves per array."""
    run = _Run(cfg, outdir)
    for label in _array_labels(cfg):
        result = _sweep_with_curves(cfg, label, progress=True)
        _write_mse_csv(run, label, *result)
    run.finish()
    return 0


def _load_cached_mse(cfg, outdir, label):
    manifest_path = Path(outdir) / "run_manifest.json"
    csv_path = Path(outdir) / f"mse_{label}.csv"
    if not (manifest_path.exists() and csv_path.exists()):
        return None
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("config_sha256") != config_sha256(cfg):
        return None
    header, rows = _read_csv(csv_path)
    idx = {name: i for i, name in enumerate(header)}
    grid = tuple(float(r[idx["snr_db"]]) for r in rows)
    values = {
        "mse": tuple(float(r[idx["mse"]]) for r in rows),
        "crb": tuple(float(r[idx["crb"]]) for r in rows),
        "sigma_t": tuple(float(r[idx["sigma_t"]]) for r in rows),
    }
    return grid, values


def cmd_threshold(cfg, outdir):
    """Threshold SNRs per array and the measured vs predicted shift."""
    run = _Run(cfg, outdir)
    labels = _array_labels(cfg)
    if len(labels) != 2:
        raise ConfigError("threshold comparison needs both dense and compressed arrays")
    source = cfg["threshold_source"]
    multiplier = cfg["threshold_multiplier"]
    thresholds = {}
    missing = []
    for label in labels:
        cached = _load_cached_mse(cfg, outdir, label)
        if cached is not None:
            grid, values = cached
            curve_vals, crb_vals = values[source if source == "mse" else "sigma_t"], values["crb"]
        else:
            scenario, curve, crb, pss, sigma_t = _sweep_with_curves(
                cfg, label, progress=True
            )
            _write_mse_csv(run, label, scenario, curve, crb, pss, sigma_t)
            grid = scenario.snr_grid_db
            curve_vals = curve.mse if source == "mse" else tuple(sigma_t)
            crb_vals = crb.values
        try:
            thresholds[label] = threshold_snr(curve_vals, crb_vals, grid, multiplier)
        except ThresholdNotFound:
            thresholds[label] = None
            missing.append(label)
    scenario = build_scenario(cfg, "compressed")
    m = scenario.compressor.rows(cfg["n"])
    report = threshold_report(
        thresholds["dense"],
        thresholds["compressed"],
        cfg["n"],
        m,
        tolerance_db=cfg["threshold_tolerance_db"],
    )
    payload = report.to_json()
    payload["criterion_multiplier"] = multiplier
    payload["threshold_source"] = source
    payload["array_sizes"] = {"dense": cfg["n"], "compressed": m}
    run.path("threshold.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    run.finish()
    if missing:
        print(f"no threshold in range for: {', '.join(missing)}", file=sys.stderr)
        return 1
    return 0


def cmd_oracle(cfg, outdir):
    """Standalone Monte-Carlo event frequencies per (array, event, SNR)."""
    run = _Run(cfg, outdir)
    rows = []
    for label in _array_labels(cfg):
        scenario = build_scenario(cfg, label)
        psi = scenario.build_compressor()
        for event in sorted(cfg["events"]):
            for snr in scenario.snr_grid_db:
                model = scenario.build_model(snr)
                mc = mc_event_probability(
                    model, psi, scenario.snapshots, event,
                    trials=max(100, scenario.trials), seed=scenario.master_seed,
                )
                rows.append(
                    (snr, event, cfg["model"], psi is not None,
                     mc.trials, mc.probability, mc.std)
                )
    rows.sort(key=lambda r: (r[3], r[1], r[0]))
    _write_csv(
        run.path("oracle.csv"),
        "oracle",
        ("snr_db", "event", "model", "compressed", "trials", "probability", "std"),
        rows,
    )
    run.finish()
    return 0


_COMMANDS = {
    "bounds": cmd_bounds,
    "mse": cmd_mse,
    "threshold": cmd_threshold,
    "oracle": cmd_oracle,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="subswap",
        description="Subspace-swap bounds and threshold-SNR experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        cmd = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        cmd.add_argument("--config", type=str, help="path to a JSON config")
        cmd.add_argument(
            "--preset",
            type=str,
            choices=("paper-mean", "paper-cov"),
            help="shipped reproduction preset",
        )
        cmd.add_argument("--seed", type=int, help="override the master seed")
        cmd.add_argument("--trials", type=int, help="override the trial count")
        cmd.add_argument(
            "--out",
            type=str,
            default=os.environ.get(OUTDIR_ENV, "subswap-out"),
            help=f"output directory (default: ${OUTDIR_ENV} or ./subswap-out)",
        )
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective_config(args)
        return _COMMANDS[args.command](cfg, args.out)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
