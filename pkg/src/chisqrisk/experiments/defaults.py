"""Versioned defaults: schedules, sample sizes and pass thresholds for every experiment.

Limit theorems come without rates, so every threshold here is a calibration.
Bump ``DEFAULTS_VERSION`` whenever any entry changes.
"""

from __future__ import annotations

import copy

DEFAULTS_VERSION = "1.0"

_DEFAULTS = {
    "simulate": {
        "m": 3,
        "rho": [0.6],
        "base": "gaussian",
        "mode": "unconditional",
        "v": 10.0,
        "n": 1000,
    },
    "gaussian-approx": {
        "m": 3,
        "rho": 0.6,
        "base": "gaussian",
        "v_list": [10.0, 100.0, 1000.0, 10000.0],
        "n": 100000,
        "ks_final_max": 0.02,
        "exceed_ks_final_max": 0.01,
    },
    "threshold-clt": {
        "m": 2,
        "lam": [4.0],
        "base": "gaussian",
        "v_list": [100.0, 1000.0],
        "x_values": [0.0],
        "n": 200000,
        "ks_final_max": 0.02,
        "joint_final_max": 0.03,
        "diff_final_max": 0.02,
    },
    "hr-maxima": {
        "lam": 1.0,
        "m": 2,
        "n_block_list": [500, 2000, 8000],
        "reps": 20000,
        "x_grid": [-2.0, -1.1666666666666667, -0.33333333333333326, 0.5, 1.3333333333333335,
                   2.166666666666667, 3.0],
        "y_grid": [-2.0, -1.1666666666666667, -0.33333333333333326, 0.5, 1.3333333333333335,
                   2.166666666666667, 3.0],
        "rule": "hr",
        "norming": "exact",
        "sup_final_max": 0.03,
        "marginal_final_max": 0.02,
    },
    "hr-density": {
        "lam": 1.0,
        "m": 2,
        "n_block_list": [1000, 100000, 10000000],
        "x_grid": [0.0],
        "y_grid": [0.0],
        "rule": "r12",
        "reps": 0,
        "final_max": 0.01,
    },
    "sojourn": {
        "m": 1,
        "alpha": 1.0,
        "C": [1.0],
        "theta": "ones",
        "t": "auto",
        "v_list": [8.0, 12.0],
        "x_grid": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0],
        "reps": 5000,
        "t_factor": 0.1,
        "step_scaled": 0.01,
        "b_horizon": 10.0,
        "b_step": 0.01,
        "b_reps": 5000,
        "anchor_tol": 0.02,
    },
    "sup-tail": {
        "m": 1,
        "alpha": 1.0,
        "C": [1.0],
        "theta": "ones",
        "T": 1.0,
        "v_list": [8.0, 12.0, 16.0],
        "reps": 100000,
        "step_scaled": 0.01,
        "floor_events": 50,
        "pickands_reps": 40000,
        "pickands_horizon": 20.0,
    },
    "pickands": {
        "m": 1,
        "alpha": 1.0,
        "C": [1.0],
        "theta": "ones",
        "a": 0.04,
        "horizon": 20.0,
        "reps": 20000,
        "levels": 3,
        "target": 1.0,
        "target_tol": 0.15,
    },
    "logchi-tail": {
        "m": 1,
        "sigma": [1.0, 0.5],
        "mu": [0.0, 0.0],
        "p": 0.5,
        "rho": [0.5],
        "log_u_list": [3.0, 3.5, 4.0, 4.5, 5.0, 5.5],
        "reps": 10000000,
        "floor_events": 50,
        "mills_log_u": 6.0,
        "mills_tol": 0.05,
    },
    "special": {
        "fn": "hyp0f1",
        "a": 0.5,
        "z": 1.0,
        "m": 1,
        "v": 1.0,
        "p": 0.5,
        "x": 0.0,
    },
}

COMMON = {"seed": 0, "shards": 1}


def defaults_for(subcommand: str) -> dict:
    """Deep copy of the default config for ``subcommand``."""
    return copy.deepcopy(_DEFAULTS[subcommand])


def subcommands() -> list[str]:
    return list(_DEFAULTS)
