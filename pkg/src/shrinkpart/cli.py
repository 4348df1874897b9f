"""Command-line front end.

Every command reads an optional YAML run configuration (``--config``) with
the sections ``distribution`` (pmf, sample), ``model``, ``mcmc``,
``priors``, ``data`` and ``crossval`` (fit), and ``synth``.  Flags override
the file.  Exit codes: 0 success, 1 invalid input, 2 runtime failure,
3 a theorem check failed.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np
import pandas as pd
import yaml

from . import _kernels as K
from .baselines import baseline_from_config
from .evaluation import cross_validate, summarize_archive
from .exceptions import CapacityError, ConfigError, DomainError
from .mcmc import McmcConfig, SampleArchive, combine, kind_from_config, run_chains
from .oracle import exact_log_table, run_theorem_suite
from .partitions import canonicalize, enumerate_partitions, format_partition, parse_partition
from .reference import CppParams, LspParams, cpp_log_pmf, lsp_log_pmf, lsp_marginal_log_pmf
from .regression import RegressionDataset, RegressionPriors, synthesize
from .sp import SpParams, kernel_args

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3
PMF_MAX_N = 8
SECTIONS = ("distribution", "model", "mcmc", "priors", "data", "crossval", "synth", "out", "seed")


@dataclass
class RunConfig:
    distribution: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    priors: dict = field(default_factory=dict)
    data: str = None
    crossval: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    out: str = None
    seed: int = None

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
        cfg = cls(**raw)
        if cfg.data is not None:
            # data paths are relative to the config file
            data = Path(cfg.data)
            cfg.data = str(data if data.is_absolute() else Path(path).parent / data)
        return cfg

    def dataset(self) -> RegressionDataset:
        if self.data is None:
            raise ConfigError("no data file given (config key 'data')")
        if not Path(self.data).exists():
            raise ConfigError(f"data file {self.data} does not exist")
        return RegressionDataset.from_csv(self.data)

    def mcmc_config(self, seed=None, chains=None) -> McmcConfig:
        cfg = dict(self.mcmc)
        if seed is not None:
            cfg["seed"] = seed
        elif self.seed is not None:
            cfg.setdefault("seed", self.seed)
        if chains is not None:
            cfg["chains"] = chains
        return McmcConfig.from_config(cfg)


# ----- distributions for pmf / sample ---------------------------------------

def _anchor(dist: dict):
    anchor = dist.get("anchor")
    if anchor is None:
        raise ConfigError("distribution needs an anchor")
    return parse_partition(anchor) if isinstance(anchor, str) else canonicalize(anchor)


def _distribution(dist: dict, overrides: dict = None):
    """(family, params, n) from the ``distribution`` section."""
    dist = {**dist, **(overrides or {})}
    family = str(dist.get("family", "sp")).lower()
    base_cfg = dist.get("baseline", {"family": "ewens", "concentration": 1.0})
    if family == "baseline":
        n = dist.get("n")
        if n is None:
            raise ConfigError("baseline distribution needs n")
        n = int(n)
        base = baseline_from_config(base_cfg, n)
        return "sp", SpParams.common(tuple(range(1, n + 1)), 0.0, 0.0, base), n
    anchor = _anchor(dist)
    n = len(anchor)
    if family == "sp":
        return family, SpParams(anchor, dist.get("shrinkage", 1.0), float(dist.get("grit", 0.0)),
                                baseline_from_config(base_cfg, n)), n
    if family == "lsp":
        return family, LspParams(anchor, float(dist.get("shrinkage", 1.0))), n
    if family == "cpp":
        return family, CppParams(anchor, float(dist.get("shrinkage", 1.0)),
                                 str(dist.get("distance", "vi")),
                                 baseline_from_config(base_cfg, n)), n
    raise ConfigError(f"unknown distribution family {family!r}")


def _order(dist: dict, n: int):
    perm = dist.get("perm", "marginal")
    if perm in ("marginal", "natural"):
        return perm
    if isinstance(perm, str):
        perm = [int(v) for v in perm.split(",")]
    return tuple(int(v) - 1 for v in perm)


def _log_pmf_column(family, params, n, order) -> np.ndarray:
    parts = enumerate_partitions(n)
    if family == "sp":
        perm = None if order == "natural" else order
        return exact_log_table(params, perm)[1]
    if family == "cpp":
        return np.array([cpp_log_pmf(params, p) for p in parts])
    if order == "marginal":
        return np.array([lsp_marginal_log_pmf(params, p) for p in parts])
    perm = None if order == "natural" else order
    return np.array([lsp_log_pmf(params, p, perm) for p in parts])


def pmf_table(dist: dict) -> pd.DataFrame:
    """Exact pmf of every partition; one column per value of the optional
    ``sweep`` ({parameter: name, values: [...]})."""
    family, params, n = _distribution(dist)
    if n > PMF_MAX_N:
        raise CapacityError(f"exact pmf tables are limited to n <= {PMF_MAX_N}")
    order = _order(dist, n)
    sweep = dist.get("sweep")
    table = {"partition": [format_partition(p) for p in enumerate_partitions(n)]}
    if sweep is None:
        table["pmf"] = np.exp(_log_pmf_column(family, params, n, order))
    else:
        name = sweep.get("parameter")
        if name not in ("shrinkage", "grit"):
            raise ConfigError("sweep parameter must be 'shrinkage' or 'grit'")
        for value in sweep.get("values", []):
            fam, par, _ = _distribution(dist, {name: value})
            table[f"{name}={value:g}"] = np.exp(_log_pmf_column(fam, par, n, order))
    return pd.DataFrame(table)


def sample_draws(dist: dict, count: int, seed) -> np.ndarray:
    family, params, n = _distribution(dist)
    rng = np.random.default_rng(seed)
    order = _order(dist, n)
    if count == 0:
        return np.zeros((0, n), dtype=np.int64)
    if family == "sp":
        args = kernel_args(params)
        if order == "marginal":
            perms = np.argsort(rng.random((count, n)), axis=1).astype(np.int64)
        else:
            perm = np.arange(n) if order == "natural" else np.asarray(order)
            perms = np.tile(perm.astype(np.int64), (count, 1))
        u = rng.random((count, n))
        return np.vstack([K.sp_sample_many(perms[d], *args, u[d:d + 1])
                          for d in range(count)])
    # other families are sampled from their exact pmf
    if n > PMF_MAX_N:
        raise CapacityError(f"{family} sampling enumerates partitions; n <= {PMF_MAX_N}")
    logp = _log_pmf_column(family, params, n, order)
    probs = np.exp(logp - logp.max())
    idx = rng.choice(len(probs), size=count, p=probs / probs.sum())
    parts = np.array(enumerate_partitions(n))
    return parts[idx]


# ----- commands -------------------------------------------------------------

def _write_yaml(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(obj, fh, sort_keys=False)


@click.group()
@click.version_option(package_name="shrinkpart")
def cli():
    """Shrinkage partition distributions and dependent-partition models."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--theorem", "theorems", multiple=True,
              help="Only checks whose id starts with this (1a, 2, 6, ...). Repeatable.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Write reports.yaml here.")
def verify(config_path, theorems, seed, out):
    """Run the theorem checks on their grids; exit 3 if any fails."""
    cfg = RunConfig.load(config_path)
    seed = seed if seed is not None else (cfg.seed if cfg.seed is not None else 20240611)
    reports = run_theorem_suite(list(theorems) or None, seed=seed)
    if not reports:
        raise ConfigError(f"no checks match {list(theorems)}")
    for rep in reports:
        click.echo(str(rep))
    failed = [r for r in reports if not r.passed]
    click.echo(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    if out:
        _write_yaml(Path(out) / "reports.yaml",
                    [{"theorem": r.theorem, "passed": bool(r.passed), "margin": float(r.margin),
                      "grid": str(r.grid), "diagnostics": str(r.diagnostics)} for r in reports])
    if failed:
        sys.exit(EXIT_VERIFY)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), default=None, help="CSV file; stdout if omitted.")
def pmf(config_path, out):
    """Exact pmf table (n <= 8) of the configured distribution."""
    table = pmf_table(RunConfig.load(config_path).distribution)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(out, index=False, float_format="%.17g")
    else:
        click.echo(table.to_csv(index=False, float_format="%.17g"), nl=False)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--count", type=click.IntRange(min=0), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="CSV file; stdout if omitted.")
def sample(config_path, count, seed, out):
    """Seeded draws from the configured distribution, one partition per line."""
    cfg = RunConfig.load(config_path)
    count = count if count is not None else int(cfg.distribution.get("count", 1))
    seed = seed if seed is not None else cfg.seed
    draws = sample_draws(cfg.distribution, count, seed)
    lines = "".join(format_partition(d) + "\n" for d in draws)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text("labels\n" + lines)
    else:
        click.echo(lines, nl=False)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def synth(config_path, seed, out):
    """Simulate panel data with drifting true partitions (data.csv, truth.yaml)."""
    cfg = RunConfig.load(config_path)
    opts = dict(cfg.synth)
    seed = seed if seed is not None else opts.pop("seed", cfg.seed)
    opts.pop("seed", None)
    parts = opts.get("partitions")
    if parts is not None:
        opts["partitions"] = [parse_partition(p) if isinstance(p, str) else p for p in parts]
    try:
        data, truth = synthesize(**opts, rng=seed)
    except TypeError as exc:
        raise ConfigError(f"synth settings: {exc}") from exc
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "data.csv")
    _write_yaml(out / "truth.yaml", {
        "seed": seed,
        "partitions": [format_partition(p) for p in truth.partitions],
        "beta": [b.tolist() for b in truth.beta],
        "gamma": truth.gamma.tolist(), "tau": truth.tau.tolist()})
    click.echo(f"wrote {len(data)} rows to {out / 'data.csv'}")


def _fit(config_path, seed, chains, out, folds):
    cfg = RunConfig.load(config_path)
    data = cfg.dataset()
    kind = kind_from_config(cfg.model, data.n_units)
    mcmc = cfg.mcmc_config(seed, chains)
    priors = RegressionPriors.from_config(cfg.priors, data.px, data.pz)
    out = Path(out or cfg.out or "shrinkpart-out")
    runs = run_chains(kind, mcmc, data, priors)
    for c, arch in enumerate(runs):
        arch.write(out / f"chain_{c + 1}")
    crossval = None
    if folds is not None:
        cv_seed = cfg.crossval.get("seed", mcmc.seed)
        crossval = cross_validate(data, kind, mcmc, folds, cv_seed, priors)
        click.echo(f"out-of-sample log-likelihood {crossval.score:.2f} "
                   f"+/- {crossval.margin:.2f} ({folds} folds)")
    summary = summarize_archive(combine(runs), crossval)
    summary.write(out)
    click.echo(f"cpu seconds {summary.cpu_seconds:.1f}; results in {out}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--chains", type=click.IntRange(min=1), default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--folds", type=int, default=None, help="Also cross-validate with this many folds.")
def fit(config_path, seed, chains, out, folds):
    """Fit the configured model; archives per chain plus a pooled summary."""
    _fit(config_path, seed, chains, out, folds)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--chains", type=click.IntRange(min=1), default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--folds", type=int, default=None)
def crossval(config_path, seed, chains, out, folds):
    """``fit`` with cross-validation (folds from the flag, config, or 10)."""
    if folds is None:
        folds = int(RunConfig.load(config_path).crossval.get("folds", 10))
    _fit(config_path, seed, chains, out, folds)


@cli.command()
@click.argument("archives", nargs=-1, required=True, type=click.Path())
@click.option("--out", type=click.Path(), required=True)
def summarize(archives, out):
    """Point estimates, co-clustering and ARI matrices from saved archives."""
    runs = [SampleArchive.read(a) for a in archives]
    summarize_archive(combine(runs)).write(out)
    click.echo(f"summarized {sum(r.draws for r in runs)} draws into {out}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_INVALID
    except click.Abort:
        return EXIT_RUNTIME
    except (ConfigError, DomainError, CapacityError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    except SystemExit as exc:
        return exc.code
    except Exception as exc:  # noqa: BLE001
        click.echo(f"runtime failure: {exc!r}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
