"""Shared fixtures for the acceptance suite.

The preset sweeps are expensive (minutes), so they are computed once per
session and shared between the criteria that consume them.
"""

import sys

import pytest

from subswap.bounds import swap_bound
from subswap.config import build_scenario, load_preset, validate_config
from subswap.estimation import crb_curve, method_of_intervals, mse_sweep


def _preset_sweeps(name, trials):
    cfg = validate_config(load_preset(name))
    cfg["trials"] = trials
    out = {"config": cfg}
    for label in ("dense", "compressed"):
        scenario = build_scenario(cfg, label)
        psi = scenario.build_compressor()
        print(
            f"[acceptance] sweeping {name}/{label}: "
            f"{len(scenario.snr_grid_db)} SNRs x {trials} trials",
            file=sys.stderr,
            flush=True,
        )
        curve = mse_sweep(scenario)
        crb = crb_curve(scenario)
        pss = tuple(
            swap_bound(
                scenario.build_model(snr), psi, scenario.snapshots, cfg["mi_event"]
            ).probability
            for snr in scenario.snr_grid_db
        )
        sigma_t = method_of_intervals(pss, crb)
        out[label] = {
            "scenario": scenario,
            "mse": curve,
            "crb": crb,
            "pss": pss,
            "sigma_t": sigma_t,
        }
    return out


@pytest.fixture(scope="session")
def cov_preset_sweeps():
    """Covariance preset (36 vs 12 elements, 200 snapshots) at 100 trials."""
    return _preset_sweeps("paper-cov", trials=100)


@pytest.fixture(scope="session")
def mean_preset_sweeps():
    """Mean preset (188 vs 28 elements, single snapshot) at 100 trials."""
    return _preset_sweeps("paper-mean", trials=100)
