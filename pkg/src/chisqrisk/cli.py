"""Command-line laboratory: one subcommand per experiment runner, plus raw draws and special functions.

Configuration is resolved in three layers, later ones winning: the versioned
defaults table, a flat ``key = value`` file given by ``--config``, and
individual ``--key value`` flags.  The resolved configuration is embedded in
every report, so feeding it back through ``--config`` reproduces the run.

Exit status: 0 when every verdict passes, 2 when the run completed with a
failing verdict, 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import special
from .distributions import HuslerReissParams, gumbel_cdf, husler_reiss_cdf, husler_reiss_pdf
from .errors import DomainError, FactorizationError, RareEventError
from .experiments import (
    DEFAULTS_VERSION,
    ExperimentReport,
    defaults_for,
    run_gaussian_approx,
    run_hr_density,
    run_hr_maxima,
    run_logchi_tail,
    run_pickands,
    run_sojourn,
    run_sup_tail,
    run_threshold_theorem,
)
from .experiments.defaults import COMMON, subcommands
from .processes import ProcessSpec, ThetaConstant, ThetaOnes, ThetaUniform
from .rng import RandomStream
from .samplers import (
    GaussianBase,
    GenGammaRadial,
    LogChiModel,
    PerturbationModel,
    PolarBase,
    ThresholdFamily,
    classical_model,
    sample_conditional_equal,
    sample_conditional_exceed,
    sample_perturbed,
)

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2

# keys that take one of a fixed set of values
CHOICES = {
    "mode": ("unconditional", "equal", "exceed"),
    "rule": ("hr", "r12"),
    "norming": ("exact", "quantile"),
}

# command-line spellings that differ from the config key
ALIASES = {"lam": ["--lambda"]}


class ConfigError(Exception):
    """Bad key, value or file; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config resolution


def _all_keys(sub: str) -> dict:
    return dict(defaults_for(sub), **COMMON)


def _coerce(key: str, raw, template):
    """Convert ``raw`` (string or already typed) to the type of ``template``."""
    try:
        if isinstance(template, list):
            items = raw if isinstance(raw, list) else [s for s in str(raw).split(",") if s.strip()]
            elem = template[0] if template else 0.0
            return [_coerce(key, x, elem) for x in items]
        if isinstance(template, bool):
            s = str(raw).strip().lower()
            if s not in ("true", "false", "1", "0"):
                raise ValueError
            return s in ("true", "1")
        if isinstance(template, int):
            x = float(raw)
            if not x.is_integer():
                raise ValueError
            return int(x)
        if isinstance(template, float):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        kind = "list" if isinstance(template, list) else type(template).__name__
        raise ConfigError(f"invalid value {raw!r} for key '{key}': expected {kind}") from None


def _check_choice(key: str, value):
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError(f"invalid value {value!r} for key '{key}': valid values are "
                          + ", ".join(CHOICES[key]))


def read_config(path: str) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def format_config(cfg: dict) -> str:
    """Inverse of :func:`read_config` for a resolved config."""
    lines = []
    for key, value in cfg.items():
        if isinstance(value, list):
            value = ",".join(repr(x) if isinstance(x, float) else str(x) for x in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def resolve_config(sub: str, file_cfg: dict, overrides: dict) -> dict:
    """Merge defaults, file values and flag overrides, rejecting unknown keys."""
    template = _all_keys(sub)
    cfg = dict(template)
    for layer in (file_cfg, overrides):
        for key, raw in layer.items():
            if key not in template:
                raise ConfigError(f"unknown key '{key}' for {sub}; valid keys: " + ", ".join(template))
            cfg[key] = _coerce(key, raw, template[key])
            _check_choice(key, cfg[key])
    return cfg


# ---------------------------------------------------------------------------
# model construction from flat keys


def parse_base(text: str):
    """``gaussian`` or ``gengamma:a:power[:scale]`` (polar base with generalized-gamma radius)."""
    parts = text.split(":")
    if parts[0] == "gaussian" and len(parts) == 1:
        return GaussianBase()
    if parts[0] == "gengamma" and len(parts) in (3, 4):
        try:
            return PolarBase(GenGammaRadial(*(float(x) for x in parts[1:])))
        except ValueError:
            pass
    raise ConfigError(f"invalid base law {text!r}: valid forms are gaussian, gengamma:a:power[:scale]")


def parse_theta(text: str):
    """``ones``, ``constant:c`` or ``uniform:low:high``."""
    parts = text.split(":")
    try:
        if parts == ["ones"]:
            return ThetaOnes()
        if parts[0] == "constant" and len(parts) == 2:
            return ThetaConstant(float(parts[1]))
        if parts[0] == "uniform" and len(parts) == 3:
            return ThetaUniform(float(parts[1]), float(parts[2]))
    except ValueError:
        pass
    raise ConfigError(f"invalid theta law {text!r}: valid forms are ones, constant:c, uniform:low:high")


def _process_spec(cfg):
    return ProcessSpec(cfg["m"], cfg["alpha"], tuple(cfg["C"]), parse_theta(cfg["theta"]))


def _model(cfg, rho):
    base = parse_base(cfg.get("base", "gaussian"))
    if isinstance(base, GaussianBase):
        return classical_model(cfg["m"], rho)
    return PerturbationModel(cfg["m"], tuple(rho), base)


def _run_simulate(cfg, stream):
    model = _model(cfg, cfg["rho"])
    mode, v, n = cfg["mode"], cfg["v"], cfg["n"]
    t0 = time.perf_counter()
    if mode == "unconditional":
        draws = sample_perturbed(model, n, stream)
    elif mode == "equal":
        draws = np.column_stack([np.full(n, v), sample_conditional_equal(model, v, n, stream)])
    else:
        draws = sample_conditional_exceed(model, v, n, stream)
    row = {"v": v, "n": n}
    for j in range(draws.shape[1]):
        row[f"mean_zeta{j + 1}"] = float(draws[:, j].mean())
        row[f"var_zeta{j + 1}"] = float(draws[:, j].var())
    rep = ExperimentReport("simulate", cfg, [v], [row], [], stream.seed, cfg["shards"], DEFAULTS_VERSION,
                           runtime={"total_ms": (time.perf_counter() - t0) * 1e3})
    return rep, draws


def _run(sub, cfg, stream):
    shards = cfg["shards"]
    if sub == "gaussian-approx":
        return run_gaussian_approx(_model(cfg, [cfg["rho"]]), cfg["v_list"], cfg["n"], stream, shards,
                                   cfg["ks_final_max"], cfg["exceed_ks_final_max"], params=cfg)
    if sub == "threshold-clt":
        fam = ThresholdFamily(cfg["m"], tuple(cfg["lam"]), parse_base(cfg["base"]))
        return run_threshold_theorem(fam, cfg["v_list"], cfg["x_values"], cfg["n"], stream, shards,
                                     cfg["ks_final_max"], cfg["joint_final_max"], cfg["diff_final_max"],
                                     params=cfg)
    if sub == "hr-maxima":
        return run_hr_maxima(cfg["lam"], cfg["m"], cfg["n_block_list"], cfg["reps"], stream, shards,
                             cfg["x_grid"], cfg["y_grid"], cfg["rule"], cfg["norming"],
                             cfg["sup_final_max"], cfg["marginal_final_max"], params=cfg)
    if sub == "hr-density":
        return run_hr_density(cfg["lam"], cfg["m"], cfg["n_block_list"], cfg["x_grid"], cfg["y_grid"],
                              cfg["reps"], stream, shards, cfg["rule"], cfg["final_max"], params=cfg)
    if sub == "sojourn":
        t = None if cfg["t"] == "auto" else _coerce("t", cfg["t"], 0.0)
        return run_sojourn(_process_spec(cfg), t, cfg["v_list"], cfg["x_grid"], cfg["reps"], stream, shards,
                           cfg["t_factor"], cfg["step_scaled"], cfg["b_horizon"], cfg["b_step"],
                           cfg["b_reps"], cfg["anchor_tol"], params=cfg)
    if sub == "sup-tail":
        return run_sup_tail(_process_spec(cfg), cfg["T"], cfg["v_list"], cfg["reps"], stream, shards,
                            cfg["step_scaled"], cfg["floor_events"], cfg["pickands_reps"],
                            cfg["pickands_horizon"], params=cfg)
    if sub == "pickands":
        return run_pickands(_process_spec(cfg), cfg["a"], cfg["horizon"], cfg["reps"], stream, shards,
                            cfg["levels"], cfg["target"], cfg["target_tol"], params=cfg)
    if sub == "logchi-tail":
        model = LogChiModel(tuple(cfg["sigma"]), tuple(cfg["mu"]), cfg["p"],
                            classical_model(cfg["m"], cfg["rho"]))
        u = [math.exp(x) for x in cfg["log_u_list"]]
        return run_logchi_tail(model, u, cfg["reps"], stream, shards, cfg["floor_events"],
                               cfg["mills_log_u"], cfg["mills_tol"], params=cfg)
    raise ConfigError(f"unknown subcommand {sub!r}")


# ---------------------------------------------------------------------------
# special functions


def _special_table(cfg):
    a, z, m, v, p, x = (cfg[k] for k in ("a", "z", "m", "v", "p", "x"))
    return {
        "hyp0f1": lambda: special.hyp0f1(a, z),
        "ln_hyp0f1": lambda: special.ln_hyp0f1(a, z),
        "ln_gamma": lambda: special.ln_gamma(z),
        "gamma_p": lambda: math.exp(special.ln_gamma_p(a, z)),
        "gamma_q": lambda: math.exp(special.ln_gamma_q(a, z)),
        "chi2_cdf": lambda: special.chi2_cdf(m, v),
        "chi2_tail": lambda: special.chi2_tail(m, v),
        "ln_chi2_tail": lambda: special.ln_chi2_tail(m, v),
        "chi2_pdf": lambda: special.chi2_pdf(m, v),
        "chi2_quantile": lambda: special.chi2_quantile(m, p),
        "normal_cdf": lambda: special.std_normal_cdf(x),
        "normal_sf": lambda: special.std_normal_sf(x),
        "gumbel_cdf": lambda: gumbel_cdf(x),
        "hr_cdf": lambda: husler_reiss_cdf(HuslerReissParams(a), x, z),
        "hr_pdf": lambda: husler_reiss_pdf(HuslerReissParams(a), x, z),
    }


def format_value(val: float) -> str:
    val = float(val)
    if val == 0 or (1e-4 <= abs(val) < 1e12):
        return f"{val:.10f}"
    return f"{val:.10e}"


def _run_special(cfg, args):
    table = _special_table(cfg)
    if cfg["fn"] not in table:
        raise ConfigError(f"invalid value {cfg['fn']!r} for key 'fn': valid values are " + ", ".join(table))
    val = float(table[cfg["fn"]]())
    print(format_value(val))
    if args.out_json:
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump({"experiment": "special", "params": cfg, "value": val}, fh, indent=2, sort_keys=True)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chisqrisk", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="subcommand", metavar="subcommand", parser_class=_Parser)
    subs.required = True
    for sub in subcommands():
        sp = subs.add_parser(sub, help=f"run the {sub} experiment" if sub not in ("simulate", "special")
                             else ("write raw draws as CSV" if sub == "simulate" else "evaluate a special function"))
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out-json", help="write the JSON report here")
        sp.add_argument("--out-csv", help="write the per-level CSV table (draws for simulate) here")
        for key, default in _all_keys(sub).items():
            flags = ["--" + key.replace("_", "-")]
            if key.replace("_", "-") != key:
                flags.append("--" + key)
            flags += ALIASES.get(key, [])
            shown = ",".join(map(str, default)) if isinstance(default, list) else default
            sp.add_argument(*flags, dest=f"opt_{key}", default=None, metavar="VALUE",
                            help=f"default: {shown}")
    return parser


def _print_summary(rep: ExperimentReport):
    print(f"{rep.experiment}: {len(rep.schedule)} level(s), seed {rep.seed}, shards {rep.shards}")
    for note in rep.notes:
        print(f"  note: {note}")
    for name, ok in rep.verdicts.items():
        print(f"  {'PASS' if ok else 'FAIL'}  {name}")


def parse_and_dispatch(argv=None) -> int:
    """Parse ``argv``, run the chosen subcommand and return the process exit status."""
    parser = build_parser()
    try:
        try:
            args, extra = parser.parse_known_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        sub = args.subcommand
        if extra:
            bad = next((x for x in extra if x.startswith("--")), extra[0])
            key = bad.lstrip("-").split("=", 1)[0].replace("-", "_")
            raise ConfigError(f"unknown key '{key}' for {sub}; valid keys: "
                              + ", ".join(["config", "out_json", "out_csv", *_all_keys(sub)]))
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
        file_cfg = read_config(args.config) if args.config else {}
        cfg = resolve_config(sub, file_cfg, overrides)
        if cfg["shards"] < 1:
            raise ConfigError(f"invalid value {cfg['shards']} for key 'shards': must be >= 1")
        if not 0 <= cfg["seed"] < 2**64:
            raise ConfigError(f"invalid value {cfg['seed']} for key 'seed': must lie in [0, 2^64)")
        if sub == "special":
            return _run_special(cfg, args)
        stream = RandomStream(cfg["seed"])
        if sub == "simulate":
            rep, draws = _run_simulate(cfg, stream)
            header = ",".join(f"zeta{j + 1}" for j in range(draws.shape[1]))
            if args.out_csv:
                np.savetxt(args.out_csv, draws, delimiter=",", header=header, comments="", fmt="%.17g")
            else:
                np.savetxt(sys.stdout, draws, delimiter=",", header=header, comments="", fmt="%.17g")
        else:
            rep = _run(sub, cfg, stream)
            if args.out_csv:
                with open(args.out_csv, "w", encoding="utf-8") as fh:
                    fh.write(rep.to_csv())
            _print_summary(rep)
        if args.out_json:
            with open(args.out_json, "w", encoding="utf-8") as fh:
                fh.write(rep.to_json() + "\n")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, FactorizationError, RareEventError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if rep.passed else EXIT_FAILED


def main():
    sys.exit(parse_and_dispatch())
