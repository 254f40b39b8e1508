"""Command-line front end.

Subcommands run the power harness and the theorem sweeps, emitting one
machine-readable table per run (CSV or JSON) plus a sidecar metadata
record.  Identical ``(config, seed)`` pairs produce byte-identical
tables regardless of the worker count: numbers are printed with 12
significant digits and all Monte Carlo streams derive from
``(seed, stream tag, block index)``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments, expectations, models, orbit, permclt
from .models import MeanVector
from .rng import TAG_MODEL, spawn_generator

ENV_SEED = "INVLAB_SEED"


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


# --------------------------------------------------------------------- #
# Formatting and output
# --------------------------------------------------------------------- #


def _fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(f"{float(v):.12g}")
    return v


def render_table(rows: list[dict], fmt: str) -> str:
    """Render rows as RFC-4180-style CSV (with header) or a JSON array."""
    if not rows:
        raise ValueError("no rows to write")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(row[k]) for k in header])
        return buf.getvalue()
    if fmt == "json":
        payload = [{k: _json_value(v) for k, v in row.items()} for row in rows]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    raise ConfigError(f"unknown format {fmt!r}")


#: Keys that affect execution but not the computed values.
_NON_SEMANTIC_KEYS = ("workers", "out")


def config_hash(config: dict) -> str:
    semantic = {k: v for k, v in config.items() if k not in _NON_SEMANTIC_KEYS}
    canon = json.dumps(semantic, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def write_output(rows: list[dict], config: dict, started: float) -> None:
    text = render_table(rows, config["format"])
    out = config.get("out")
    if out:
        Path(out).write_text(text)
        meta = {
            "tool": "invlab",
            "version": __version__,
            "config": {k: _json_value(v) if not isinstance(v, str) else v for k, v in config.items()},
            "config_hash": config_hash(config),
            "wall_time_s": round(time.time() - started, 3),
            "columns": list(rows[0].keys()),
            "se_columns": [c for c in rows[0] if "se" in c.split("_")],
        }
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------- #
# Configuration plumbing
# --------------------------------------------------------------------- #


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` comments and ``[section]`` headers allowed."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _parse_grid(text: str) -> tuple[int, ...]:
    try:
        grid = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc
    if not grid or any(v <= 0 for v in grid):
        raise ConfigError(f"grid entries must be positive: {text!r}")
    return grid


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def _positive(kind, name):
    def parse(text):
        try:
            v = kind(text)
        except ValueError as exc:
            raise ConfigError(f"bad {name} {text!r}") from exc
        if v <= 0:
            raise ConfigError(f"{name} must be positive, got {text!r}")
        return v

    return parse


def parse_alternative(text: str) -> experiments.AlternativeSpec:
    """``kind:scale`` alternatives, e.g. ``spike:3``, ``smooth:1.5``, ``h:cos1:2``.

    ``h:cosK:SCALE`` selects the mean-zero cosine profile of frequency K for
    the spacings model.
    """
    parts = text.split(":")
    kind = parts[0]
    try:
        if kind == "null":
            return experiments.AlternativeSpec("single_spike", 0.0)
        if kind == "spike":
            return experiments.AlternativeSpec("single_spike", float(parts[1]))
        if kind == "spike_uncentered":
            return experiments.AlternativeSpec("single_spike", float(parts[1]), centered=False)
        if kind == "signs":
            return experiments.AlternativeSpec("random_signs", float(parts[1]))
        if kind == "smooth":
            prof = models.cosine_profile({1: 1.0})
            return experiments.AlternativeSpec("smooth_profile", float(parts[1]), profile=prof)
        if kind == "h":
            freq = int(parts[1].removeprefix("cos"))
            scale = float(parts[2]) if len(parts) > 2 else 1.0
            prof = models.cosine_profile({freq: scale})
            return experiments.AlternativeSpec("spacings_h", 1.0, profile=prof)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad alternative {text!r}: {exc}") from exc
    raise ConfigError(f"unknown alternative kind {kind!r}")


_MODELS = ("normal", "poisson", "bernoulli", "logistic", "neyman_scott", "spacings")


def resolve_model(name: str, nu: int, sigma: float) -> experiments.Model:
    if name == "normal":
        return experiments.normal_means_model()
    if name in ("poisson", "bernoulli", "logistic"):
        return experiments.FamilyModel(models.family_by_name(name))
    if name == "neyman_scott":
        return experiments.NeymanScottModel(nu=nu, sigma=sigma)
    if name == "spacings":
        return experiments.SpacingsModel()
    raise ConfigError(f"unknown model {name!r} (choose from {', '.join(_MODELS)})")


# --------------------------------------------------------------------- #
# Subcommand runners
# --------------------------------------------------------------------- #


def run_power(cfg: dict) -> list[dict]:
    model = resolve_model(cfg["model"], cfg["nu"], cfg["sigma"])
    alt = parse_alternative(cfg["alt"])
    rows = []
    for n in cfg["n_grid"]:
        stat = experiments.make_statistic(cfg["stat"], n, alt=alt, seed=cfg["seed"])
        rep = experiments.estimate_power(
            model,
            stat,
            alt,
            cfg["level"],
            n,
            cfg["reps"],
            cfg["seed"],
            calib_reps=cfg["calib_reps"],
            workers=cfg["workers"],
        )
        rows.append(
            {
                "n": rep.n,
                "stat": rep.statistic_name,
                "critical": rep.critical_value,
                "level_hat": rep.level_hat,
                "level_se": rep.level_se,
                "power_hat": rep.power_hat,
                "power_se": rep.power_se,
                "seed": rep.seed,
            }
        )
    return rows


def run_theorem1(cfg: dict) -> list[dict]:
    rows = experiments.theorem1_sweep(
        cfg["delta"],
        cfg["n_grid"],
        cfg["reps"],
        cfg["seed"],
        level=cfg["level"],
        lbar_reps=cfg["lbar_reps"],
        workers=cfg["workers"],
    )
    return [
        {
            "n": r.n,
            "chisq_gap": r.chisq_gap,
            "chisq_gap_se": r.chisq_gap_se,
            "np_power": r.np_power,
            "np_power_se": r.np_power_se,
            "lbar_bound": r.lbar_bound,
            "lbar_bound_se": r.lbar_bound_se,
            "m_norm": r.m_norm,
            "reps": cfg["reps"],
            "seed": cfg["seed"],
            "config_hash": config_hash(cfg),
        }
        for r in rows
    ]


def run_theorem2(cfg: dict) -> list[dict]:
    family = models.family_by_name(cfg["model"])
    rows = experiments.theorem2_sweep(
        family,
        cfg["delta"],
        cfg["n_grid"],
        cfg["reps"],
        cfg["seed"],
        level=cfg["level"],
        workers=cfg["workers"],
    )
    return [
        {
            "n": r.n,
            "invariant_gap": r.invariant_gap,
            "invariant_gap_se": r.invariant_gap_se,
            "quadratic_gap": r.quadratic_gap,
            "quadratic_gap_se": r.quadratic_gap_se,
            "centered_norm": r.centered_norm,
            "max_dev": r.max_dev,
            "reps": cfg["reps"],
            "seed": cfg["seed"],
            "config_hash": config_hash(cfg),
        }
        for r in rows
    ]


def run_neyman_scott(cfg: dict) -> list[dict]:
    if cfg["matrix"]:
        mrows = experiments.matrix_variate_sweep(
            cfg["n_grid"], cfg["delta"], cfg["reps"], cfg["seed"],
            level=cfg["level"], workers=cfg["workers"],
        )
        return [
            {
                "n": r.n,
                "wilks_gap": r.wilks_gap,
                "wilks_gap_se": r.wilks_gap_se,
                "reps": cfg["reps"],
                "seed": cfg["seed"],
                "config_hash": config_hash(cfg),
            }
            for r in mrows
        ]
    rows = experiments.neyman_scott_sweep(
        cfg["n_grid"],
        cfg["nu"],
        cfg["delta"],
        cfg["reps"],
        cfg["seed"],
        sigma=cfg["sigma"],
        level=cfg["level"],
        profile=cfg["profile"],
        workers=cfg["workers"],
    )
    return [
        {
            "n": r.n,
            "nu": r.nu,
            "f_gap": r.f_gap,
            "f_gap_se": r.f_gap_se,
            "cellmean_chisq_gap": r.cellmean_chisq_gap,
            "cellmean_chisq_gap_se": r.cellmean_chisq_gap_se,
            "centered_norm": r.centered_norm,
            "max_dev": r.max_dev,
            "reps": cfg["reps"],
            "seed": cfg["seed"],
            "config_hash": config_hash(cfg),
        }
        for r in rows
    ]


def run_spacings(cfg: dict) -> list[dict]:
    alt = parse_alternative(cfg["alt"])
    if alt.profile is None:
        raise ConfigError("sweep-spacings requires an h:... alternative")
    rows = experiments.spacings_sweep(
        alt.profile, cfg["n_grid"], cfg["reps"], cfg["seed"],
        level=cfg["level"], workers=cfg["workers"],
    )
    return [
        {
            "n": r.n,
            "greenwood_gap": r.greenwood_gap,
            "greenwood_gap_se": r.greenwood_gap_se,
            "moran_gap": r.moran_gap,
            "moran_gap_se": r.moran_gap_se,
            "two_spacings_gap": r.two_spacings_gap,
            "two_spacings_gap_se": r.two_spacings_gap_se,
            "quadratic_gap": r.quadratic_gap,
            "quadratic_gap_se": r.quadratic_gap_se,
            "llr_gap_p95": r.llr_gap_p95,
            "llr_gap_p95_se": r.llr_gap_p95_se,
            "reps": cfg["reps"],
            "seed": cfg["seed"],
            "config_hash": config_hash(cfg),
        }
        for r in rows
    ]


def run_lbar(cfg: dict) -> list[dict]:
    group = orbit.Group(cfg["group"])
    alt = parse_alternative(cfg["alt"])
    rows = []
    for n in cfg["n_grid"]:
        if group is orbit.Group.PERMUTATION_EXHAUSTIVE and n > orbit.EXHAUSTIVE_LIMIT:
            raise ConfigError(f"exhaustive group needs n <= {orbit.EXHAUSTIVE_LIMIT}")
        family = models.family_by_name(cfg["model"])
        if isinstance(family, models.GeneralFamilySpec):
            raise ConfigError("lbar supports exponential families only")
        entries = alt.mean_entries(n, 0.0, cfg["seed"])
        m = MeanVector(entries, compact_lo=None, compact_hi=None)
        design = None
        if group is orbit.Group.ORTHOGONAL_FIXING_DESIGN:
            design = spawn_generator(cfg["seed"], TAG_MODEL, 777).normal(size=(n, cfg["design_p"]))
            q, _ = np.linalg.qr(design)
            entries = entries - q @ (q.T @ entries)
            m = MeanVector(entries, compact_lo=None, compact_hi=None)
        spec = orbit.OrbitSpec(group=group, design=design, mc_reps=cfg["mc_reps"])
        vals = orbit.null_lbar_samples(
            family, m, spec, cfg["reps"], cfg["seed"], workers=cfg["workers"]
        )
        bound, bound_se = orbit.power_level_bound(vals)
        var_diag = (
            orbit.perm_variance_diagnostic(m.entries, mc_reps=cfg["mc_reps"], seed=cfg["seed"])
            if group in (orbit.Group.PERMUTATION, orbit.Group.PERMUTATION_EXHAUSTIVE)
            else float("nan")
        )
        rows.append(
            {
                "group": group.value,
                "model": cfg["model"],
                "n": n,
                "e0_lbar": float(vals.mean()),
                "se_e0_lbar": float(vals.std(ddof=1) / np.sqrt(vals.size)),
                "abs_dev_bound": bound,
                "se_abs_dev_bound": bound_se,
                "var_lbar": float(vals.var(ddof=1)),
                "var_diag": var_diag,
                "reps": cfg["reps"],
                "seed": cfg["seed"],
                "config_hash": config_hash(cfg),
            }
        )
    return rows


def run_clt_sweep(cfg: dict) -> list[dict]:
    family = models.family_by_name(cfg["model"])
    if isinstance(family, models.GeneralFamilySpec):
        raise ConfigError("clt-sweep supports exponential families only")
    alt = parse_alternative(cfg["alt"])

    def null_sampler(n, reps, rng):
        m = MeanVector(np.zeros(n))
        return models.sample_model(family, m, rng, reps=max(reps, 1))

    def m_builder(n):
        return alt.mean_entries(n, 0.0, cfg["seed"])

    rows = permclt.theorem_convergence_sweep(
        null_sampler, m_builder, cfg["n_grid"], cfg["reps"], cfg["seed"], workers=cfg["workers"]
    )
    return [
        {
            "n": r.n,
            "rho2_perm_boot": r.rho2_perm_boot,
            "se_rho2_perm_boot": r.se_rho2_perm_boot,
            "rho2_boot_iid": r.rho2_boot_iid,
            "se_rho2_boot_iid": r.se_rho2_boot_iid,
            "rho2_perm_iid": r.rho2_perm_iid,
            "se_rho2_perm_iid": r.se_rho2_perm_iid,
            "diag_nmx": r.diag_nmx,
            "reps": cfg["reps"],
            "seed": cfg["seed"],
            "config_hash": config_hash(cfg),
        }
        for r in rows
    ]


def run_coupling(cfg: dict) -> list[dict]:
    rows = []
    t_grid = (0.5, 1.0, 2.0)
    for gi, n in enumerate(cfg["n_grid"]):
        rng = spawn_generator(cfg["seed"], TAG_MODEL, gi)
        x = rng.normal(size=n)
        m = rng.normal(size=n)
        m -= m.mean()
        m /= np.linalg.norm(m)
        res = permclt.hajek_coupling(
            m, x, cfg["reps"], cfg["seed"], method=cfg["method"], workers=cfg["workers"]
        )
        row = {
            "n": n,
            "gap_sq_mean": res.gap_sq_mean,
            "gap_sq_se": res.gap_sq_se,
            "bound": res.bound,
            "bound_holds": res.bound_holds,
            "matched_mean": float(res.matched.mean()),
        }
        for t in t_grid:
            row[f"cf_ok_t{t:g}"] = permclt.cf_inequality_check(
                res.without_repl, res.with_repl, t
            )
        row.update({"reps": cfg["reps"], "seed": cfg["seed"], "config_hash": config_hash(cfg)})
        rows.append(row)
    return rows


def run_recalibrate(cfg: dict) -> list[dict]:
    vals = expectations.recalibrate(seed=cfg["seed"], reps=cfg["reps"], workers=cfg["workers"])
    out_path = cfg.get("out") or "expectations.json"
    expectations.write_expectations(vals, out_path)
    cfg["out"] = None  # the summary table goes to stdout; --out held the JSON
    return [
        {
            "name": k,
            "value": v,
            "reps": cfg["reps"],
            "seed": cfg["seed"],
            "config_hash": config_hash(cfg),
        }
        for k, v in vals.items()
        if not k.startswith("_")
    ]


# --------------------------------------------------------------------- #
# Argument parsing
# --------------------------------------------------------------------- #

_RUNNERS = {
    "power": run_power,
    "sweep-theorem1": run_theorem1,
    "sweep-theorem2": run_theorem2,
    "sweep-neyman-scott": run_neyman_scott,
    "sweep-spacings": run_spacings,
    "lbar": run_lbar,
    "clt-sweep": run_clt_sweep,
    "coupling": run_coupling,
    "recalibrate": run_recalibrate,
}

# Hard defaults, applied after flags and the config file.
_DEFAULTS = {
    "seed": None,  # resolved from INVLAB_SEED, else 0
    "workers": 1,
    "format": "csv",
    "out": None,
    "level": experiments.DEFAULT_LEVEL,
    "reps": experiments.DEFAULT_REPS,
    "calib_reps": None,
    "n_grid": (100, 1000, 10_000),
    "model": "normal",
    "stat": "chisq",
    "alt": "spike:3",
    "nu": 5,
    "sigma": 1.0,
    "delta": 3.0,
    "profile": "single_spike",
    "matrix": False,
    "lbar_reps": None,
    "mc_reps": 10_000,
    "group": "permutation_exhaustive",
    "design_p": 3,
    "method": "rank",
}

_SPACINGS_DEFAULTS = {"n_grid": (100, 400, 1600), "alt": "h:cos1:2"}
_CLT_DEFAULTS = {"n_grid": (50, 500, 5000), "alt": "spike:1"}
_LBAR_DEFAULTS = {"n_grid": (6,), "alt": "spike:1", "reps": 10_000}
_COUPLING_DEFAULTS = {"n_grid": (100, 1000, 10_000), "reps": 2000}
_RECAL_DEFAULTS = {"reps": 4000}

_TYPES = {
    "seed": int,
    "workers": _positive(int, "workers"),
    "level": _positive(float, "level"),
    "reps": _positive(int, "reps"),
    "calib_reps": _positive(int, "calib_reps"),
    "n_grid": _parse_grid,
    "nu": _positive(int, "nu"),
    "sigma": _positive(float, "sigma"),
    "delta": float,
    "matrix": _parse_bool,
    "lbar_reps": _positive(int, "lbar_reps"),
    "mc_reps": _positive(int, "mc_reps"),
    "design_p": _positive(int, "design_p"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invlab",
        description="Monte Carlo laboratory for the power of group-invariant tests.",
    )
    parser.add_argument("--version", action="version", version=f"invlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value config file; flags override it")
        p.add_argument("--seed", type=int, help=f"64-bit RNG seed (default ${ENV_SEED} or 0)")
        p.add_argument("--workers", type=int, help="worker threads (results are worker-count independent)")
        p.add_argument("--out", help="output file (stdout when omitted)")
        p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
        p.add_argument("--reps", type=int, help="Monte Carlo replicates per estimate")
        p.add_argument("--level", type=float, help="target test level (default 0.05)")

    p = sub.add_parser("power", help="calibrate a statistic and estimate level and power")
    add_common(p)
    p.add_argument("--model", choices=_MODELS)
    p.add_argument("--stat", help="chisq | variance | np | anova_f | greenwood | moran | two_spacings_sq | quadratic | quadratic_spacings | wilks")
    p.add_argument("--alt", help="alternative, e.g. spike:3, smooth:1.5, signs:2, h:cos1:2, null")
    p.add_argument("--n", dest="n_grid", type=_parse_grid, help="sample size(s), comma separated")
    p.add_argument("--calib-reps", dest="calib_reps", type=int)
    p.add_argument("--nu", type=int, help="replicates per group (neyman_scott)")
    p.add_argument("--sigma", type=float, help="noise scale (neyman_scott)")

    p = sub.add_parser("sweep-theorem1", help="normal-model invariant collapse vs the averaged-ratio bound")
    add_common(p)
    p.add_argument("--delta", type=float, help="alternative norm (default 3)")
    p.add_argument("--n-grid", dest="n_grid", type=_parse_grid)
    p.add_argument("--lbar-reps", dest="lbar_reps", type=int)

    p = sub.add_parser("sweep-theorem2", help="exponential-family permutation-invariant collapse")
    add_common(p)
    p.add_argument("--model", choices=("normal", "poisson", "bernoulli", "logistic"))
    p.add_argument("--delta", type=float, help="centered alternative norm (default 1.5 via config)")
    p.add_argument("--n-grid", dest="n_grid", type=_parse_grid)

    p = sub.add_parser("sweep-neyman-scott", help="ANOVA-F collapse in the replicated layout")
    add_common(p)
    p.add_argument("--n-grid", dest="n_grid", type=_parse_grid)
    p.add_argument("--nu", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--profile", choices=("single_spike", "random_signs"))
    p.add_argument("--matrix", action="store_const", const=True, help="bivariate generalized-variance sweep")

    p = sub.add_parser("sweep-spacings", help="spacings statistics under 1 + h/sqrt(n)")
    add_common(p)
    p.add_argument("--alt", help="h:cosK:SCALE profile (default h:cos1:2)")
    p.add_argument("--n-grid", dest="n_grid", type=_parse_grid)

    p = sub.add_parser("lbar", help="null Monte Carlo of the orbit-averaged ratio")
    add_common(p)
    p.add_argument("--group", choices=[g.value for g in orbit.Group])
    p.add_argument("--model", choices=("normal", "poisson", "bernoulli"))
    p.add_argument("--alt", help="alternative shape, e.g. spike:1")
    p.add_argument("--n", dest="n_grid", type=_parse_grid)
    p.add_argument("--mc-reps", dest="mc_reps", type=int, help="permutations per Monte Carlo average")
    p.add_argument("--design-p", dest="design_p", type=int, help="design columns for the fixing group")

    p = sub.add_parser("clt-sweep", help="rho2 distances between permutation, bootstrap, and iid laws")
    add_common(p)
    p.add_argument("--model", choices=("normal", "poisson", "bernoulli"))
    p.add_argument("--alt", help="contrast shape (default spike:1)")
    p.add_argument("--n-grid", dest="n_grid", type=_parse_grid)

    p = sub.add_parser("coupling", help="with/without-replacement coupling and the second-moment bound")
    add_common(p)
    p.add_argument("--n-grid", dest="n_grid", type=_parse_grid)
    p.add_argument("--method", choices=("rank", "first_occurrence"))

    p = sub.add_parser("recalibrate", help="regenerate the pilot-threshold expectations file")
    add_common(p)

    return parser


def build_config(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over hard defaults."""
    file_cfg = read_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = dict(_DEFAULTS)
    cfg.update(
        {
            "sweep-spacings": _SPACINGS_DEFAULTS,
            "clt-sweep": _CLT_DEFAULTS,
            "lbar": _LBAR_DEFAULTS,
            "coupling": _COUPLING_DEFAULTS,
            "recalibrate": _RECAL_DEFAULTS,
        }.get(args.subcommand, {})
    )
    for key, raw in file_cfg.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _TYPES.get(key, str)(raw)
    for key, value in vars(args).items():
        if key in ("config", "subcommand") or value is None:
            continue
        cfg[key] = value
    if cfg["seed"] is None:
        env = os.environ.get(ENV_SEED)
        try:
            cfg["seed"] = int(env) if env else 0
        except ValueError as exc:
            raise ConfigError(f"bad {ENV_SEED} value {env!r}") from exc
    cfg["subcommand"] = args.subcommand
    if not 0.0 < cfg["level"] < 1.0:
        raise ConfigError("level must lie strictly between 0 and 1")
    return cfg


def main(argv: list[str] | None = None) -> int:
    started = time.time()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code) if exc.code else 0
    try:
        cfg = build_config(args)
        rows = _RUNNERS[cfg["subcommand"]](cfg)
        write_output(rows, cfg, started)
    except ConfigError as exc:
        print(f"invlab: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric or I/O failure
        print(f"invlab: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
