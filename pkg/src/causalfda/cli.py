"""Command-line front end.

Two commands: `simulate` runs a scenario grid from a TOML config and writes
flat result/summary CSVs, and `estimate` runs the cross-fitted doubly robust
analysis on a user dataset in the wide CSV format, writing a JSON report.

Every run writes a manifest (config hash, seed, library version) next to its
outputs; reruns with an identical manifest produce identical science outputs.
Wall-clock timings go to a separate timings.csv, which is the one output
excluded from that guarantee.

Exit codes: 0 success, 1 usage or config error, 2 data validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - py 3.10 path
    import tomli as tomllib

from . import __version__
from .errors import CausalfdaError, DataError, NumericsError
from .estimators import Method, estimate_dr_crossfit
from .fda import load_dataset
from .inference import estimate_sigma, supt_band
from .nuisance import (
    FeatureSet,
    NuisanceModelSpec,
    OutcomeModel,
    PropensityModel,
)
from .simlab import (
    LinearDgpConfig,
    MaternDgpConfig,
    NoiseVarianceRule,
    RESULT_COLUMNS,
    SUMMARY_COLUMNS,
    Scenario,
    results_rows,
    run_scenario_grid,
    summary_rows,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICS = 3


class ConfigError(CausalfdaError):
    """Bad or missing configuration."""


def _round12(x: float) -> float:
    return float(format(float(x), ".12g"))


def _load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from None


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name)
    if sec is None:
        raise ConfigError(f"config is missing the [{name}] section")
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a section/table")
    return sec


def _get(sec: dict, key: str, kind, default=None, required: bool = False):
    if key not in sec:
        if required:
            raise ConfigError(f"config key {key!r} is required")
        return default
    val = sec[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(f"config key {key!r} must be {kind.__name__}, got {type(val).__name__}")
    return val


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, payload: dict) -> None:
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _ensure_out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _nuisance_spec(sec: dict) -> NuisanceModelSpec:
    try:
        return NuisanceModelSpec(
            propensity_model=PropensityModel(_get(sec, "propensity_model", str, "logistic")),
            outcome_model=OutcomeModel(_get(sec, "outcome_model", str, "fos_ols")),
            clip_bound=_get(sec, "clip_bound", float, 0.02),
            propensity_features=FeatureSet(_get(sec, "propensity_features", str, "raw")),
            outcome_features=FeatureSet(_get(sec, "outcome_features", str, "raw")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad nuisance settings: {exc}") from None


def _build_scenarios(cfg: dict) -> tuple[list[Scenario], list[int]]:
    sim = _section(cfg, "simulate")
    run = _section(cfg, "run")
    base_seed = _get(run, "seed", int, required=True)
    n_seeds = _get(sim, "seeds", int, 30)
    if n_seeds < 1:
        raise ConfigError("simulate.seeds must be at least 1")
    seeds = [base_seed + i for i in range(n_seeds)]

    names = _get(sim, "estimators", list, ["or", "ipw", "dr"])
    try:
        estimators = tuple(Method(e) for e in names)
    except ValueError as exc:
        raise ConfigError(f"unknown estimator in config: {exc}") from None
    common = dict(
        estimators=estimators,
        folds=_get(sim, "folds", int, 5),
        band_level=_get(sim, "band_level", float, 0.95),
        band_draws=_get(sim, "band_draws", int, 2000),
        compute_bands=_get(sim, "compute_bands", bool, True),
        dump_curves=_get(sim, "dump_curves", bool, False),
    )
    kind = _get(sim, "dgp", str, "matern")
    n = _get(sim, "n", int, 2000)
    grid_size = _get(sim, "grid_size", int, 100)
    scenarios: list[Scenario] = []
    if kind == "matern":
        alpha_pi = _get(sim, "alpha_pi", list, [0.0])
        alpha_mu = _get(sim, "alpha_mu", list, [0.0])
        noise_rule = _get(sim, "noise_rule", str, "signal_tenth")
        explicit_var = _get(sim, "explicit_noise_variance", float)
        spec = NuisanceModelSpec(
            propensity_model=PropensityModel.ORACLE_CORRUPTED,
            outcome_model=OutcomeModel.ORACLE_CORRUPTED,
            clip_bound=_get(_section_or_empty(cfg, "nuisance"), "clip_bound", float, 0.02),
        )
        for api in alpha_pi:
            for amu in alpha_mu:
                dgp = MaternDgpConfig(
                    n=n,
                    grid_size=grid_size,
                    alpha_pi=float(api),
                    alpha_mu=float(amu),
                    noise_rule=NoiseVarianceRule(noise_rule),
                    explicit_noise_variance=explicit_var,
                )
                sid = f"matern_n{n}_api{api:g}_amu{amu:g}"
                scenarios.append(Scenario(scenario_id=sid, dgp=dgp, nuisance=spec, **common))
    elif kind == "linear":
        spec = _nuisance_spec(_section_or_empty(cfg, "nuisance"))
        dgp = LinearDgpConfig(
            n=n,
            grid_size=grid_size,
            p=_get(sim, "p", int, 5),
            shift=_get(sim, "shift", float, 1.0),
            coef_seed=_get(sim, "coef_seed", int, base_seed),
        )
        tag = f"{spec.propensity_features.value[0]}{spec.outcome_features.value[0]}"
        scenarios.append(
            Scenario(scenario_id=f"linear_n{n}_feat_{tag}", dgp=dgp, nuisance=spec, **common)
        )
    else:
        raise ConfigError(f"simulate.dgp must be 'matern' or 'linear', got {kind!r}")
    return scenarios, seeds


def _section_or_empty(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a section/table")
    return sec


def _write_csv(path: Path, header: tuple[str, ...], rows: list[list[str]]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_simulate(config_path: str, out_override: str | None, jobs: int | None) -> int:
    cfg = _load_config(config_path)
    run = _section(cfg, "run")
    scenarios, seeds = _build_scenarios(cfg)
    out_dir = _ensure_out_dir(out_override or _get(run, "out", str, "results"))
    n_jobs = jobs if jobs is not None else _get(run, "jobs", int, 1)

    grid = run_scenario_grid(scenarios, seeds, jobs=n_jobs)
    _write_csv(out_dir / "results.csv", RESULT_COLUMNS, results_rows(grid.results))
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary_rows(grid.results))
    _write_csv(
        out_dir / "timings.csv",
        ("scenario_id", "seed", "runtime_ms"),
        [[r.scenario_id, str(r.seed), format(r.runtime_ms, ".3f")] for r in grid.results],
    )
    if grid.failures:
        _write_csv(
            out_dir / "failures.csv",
            ("scenario_id", "seed", "error"),
            [[sid, str(seed), msg] for sid, seed, msg in grid.failures],
        )
    dumps = [r for r in grid.results if r.curve_dump is not None]
    if dumps:
        dump_dir = out_dir / "dumps"
        dump_dir.mkdir(exist_ok=True)
        for r in dumps:
            payload = _round_tree(r.curve_dump)
            (dump_dir / f"{r.scenario_id}_seed{r.seed}.json").write_text(
                json.dumps(payload) + "\n", encoding="utf-8"
            )
    _write_manifest(
        out_dir,
        {
            "command": "simulate",
            "config_sha256": _sha256_file(Path(config_path)),
            "seed": _get(run, "seed", int, required=True),
            "version": __version__,
        },
    )

    for row in summary_rows(grid.results):
        cells = dict(zip(SUMMARY_COLUMNS, row))
        line = (
            f"{cells['scenario_id']:<32} {cells['estimator']:<4} "
            f"replicates={cells['replicates']} mean_mse={cells['mean_mse']}"
        )
        if cells["coverage"]:
            line += f" coverage={cells['coverage']} mean_q={cells['mean_q']}"
        print(line)
    if grid.failures:
        print(f"{len(grid.failures)} replicate(s) failed; see failures.csv", file=sys.stderr)
    print(f"wrote {out_dir}/results.csv ({len(grid.results)} replicates)")
    return EXIT_OK


def _round_tree(obj):
    if isinstance(obj, float):
        return _round12(obj)
    if isinstance(obj, list):
        return [_round_tree(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _round_tree(v) for k, v in obj.items()}
    return obj


def cmd_estimate(data_path: str, config_path: str, out_override: str | None) -> int:
    cfg = _load_config(config_path)
    run = _section(cfg, "run")
    est = _section_or_empty(cfg, "estimate")
    seed = _get(run, "seed", int, 0)
    out_dir = _ensure_out_dir(out_override or _get(run, "out", str, "report"))
    folds = _get(est, "folds", int, 5)
    level = _get(est, "band_level", float, 0.95)
    draws = _get(est, "band_draws", int, 2000)
    spec = _nuisance_spec(est)

    dataset = load_dataset(data_path)
    root = np.random.SeedSequence(seed)
    rng_folds, rng_band = (np.random.default_rng(c) for c in root.spawn(2))
    estimate, infl = estimate_dr_crossfit(dataset, spec, folds, rng_folds)
    sigma = estimate_sigma(infl)
    band = supt_band(estimate.beta_hat, sigma, level=level, draws=draws, rng=rng_band)

    report = {
        "grid": [_round12(t) for t in dataset.grid.points],
        "beta_hat": [_round12(v) for v in estimate.beta_hat.values],
        "sigma_hat": [_round12(v) for v in sigma.sigma_hat()],
        "lower": [_round12(v) for v in band.lower.values],
        "upper": [_round12(v) for v in band.upper.values],
        "level": _round12(level),
        "q": _round12(band.calibration),
        "n": dataset.n,
        "J": folds,
        "seed": seed,
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    _write_manifest(
        out_dir,
        {
            "command": "estimate",
            "config_sha256": _sha256_file(Path(config_path)),
            "data_sha256": _sha256_file(Path(data_path)),
            "seed": seed,
            "version": __version__,
        },
    )
    excl = band.excludes_zero_fraction()
    n0, n1 = dataset.arm_counts()
    print(f"n={dataset.n} (treated={n1}, control={n0}), folds={folds}")
    print(f"band level={level:g}, q={band.calibration:.6g}, draws={draws}")
    print(f"band excludes zero on {excl:.1%} of the domain")
    print(f"wrote {out_dir}/report.json")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse defaults to exit code 2 on usage errors; the CLI contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="causalfda",
        description=(
            "Doubly robust functional treatment-effect estimation: scenario "
            "simulation and one-shot analysis with simultaneous bands."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation scenario grid from a config")
    sim.add_argument("--config", required=True, help="TOML config file")
    sim.add_argument("--jobs", type=int, default=None, help="worker processes (default from config)")
    sim.add_argument("--out", default=None, help="output directory (default from config)")

    estp = sub.add_parser("estimate", help="estimate the effect curve on a dataset CSV")
    estp.add_argument("--data", required=True, help="dataset in the wide CSV format")
    estp.add_argument("--config", required=True, help="TOML config file")
    estp.add_argument("--out", default=None, help="output directory (default from config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.jobs)
        return cmd_estimate(args.data, args.config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
