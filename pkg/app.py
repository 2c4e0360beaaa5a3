"""
PriorShift Command Line
Estimates test class priors, runs the benchmark protocol and trains
prior-weighted classifiers from CSV files
"""

import functools
import logging
import os

import click
import numpy as np
import pandas as pd

from src import __version__
from src.classifiers import fit_weighted_classifier, misclassification_rate
from src.config import Config, EstimatorSettings
from src.data import (
    SimplexVector,
    check_benchmark_shape,
    frame_to_csv,
    load_dataset,
    standardize,
    write_atomic,
)
from src.errors import NumericalError, ValidationError
from src.estimators import resolve_estimators, run_estimator
from src.generators import KINDS as GENERATOR_KINDS
from src.generators import default_test_prior, synth_generator
from src.harness import (
    REPORT_FORMATS,
    DatasetSource,
    TrialSpec,
    emit_raw_log,
    emit_report,
    run_size_sweep,
    run_sweep,
)
from src.log_manager import LogManager, setup_logging

logger = logging.getLogger("src.cli")

# config-file keys that differ from the parameter names
CONFIG_ALIASES = {"lambda": "lam", "verbose": "verbosity"}


def _load_config(ctx, param, value):
    """Eager --config callback: file values become parameter defaults"""
    if value is None:
        return None
    try:
        settings = Config.load_file(value)
    except ValidationError as exc:
        raise click.BadParameter(str(exc), ctx=ctx, param=param)
    known = {p.name for p in ctx.command.params}
    resolved = {}
    for key, entry in settings.items():
        key = CONFIG_ALIASES.get(key, key)
        if key not in known or key == "config":
            raise click.BadParameter(f"unknown key '{key}' in {value}", ctx=ctx, param=param)
        resolved[key] = entry
    ctx.default_map = {**(ctx.default_map or {}), **resolved}
    return value


def _parse_floats(text, what):
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValidationError(f"{what}: expected comma-separated numbers, got '{text}'") from None
    if not values:
        raise ValidationError(f"{what}: no values given")
    return values


def _parse_theta_grid(text, c):
    """'0.1,0.2' for two classes; ';'-separated vectors for more"""
    if c == 2 and ";" not in text:
        return [float(t) for t in _parse_floats(text, "--theta-grid")]
    return [SimplexVector(_parse_floats(part, "--theta-grid"))
            for part in text.split(";") if part.strip()]


def _preamble(command, params):
    """Resolved configuration as ordered '# key=value' header entries"""
    header = {"command": command, "version": __version__}
    for key in sorted(params):
        if key in ("config", "verbosity", "log_dir"):
            continue
        value = params[key]
        header[key] = "auto" if value is None else value
    return header


def _settings(params):
    return EstimatorSettings(
        sigma=params.get("sigma"),
        lam=params.get("lam"),
        ridge=params.get("ridge"),
        standardize=bool(params.get("standardize")),
    )


def _emit(text, out):
    if out:
        write_atomic(out, text)
    else:
        click.echo(text, nl=False)


def run_command(fn):
    """Set up logging, run the command body and map library errors to exit codes"""

    @functools.wraps(fn)
    def wrapper(**params):
        ctx = click.get_current_context()
        setup_logging(params.get("verbosity", 0))
        log_manager = None
        if params.get("log_dir"):
            log_manager = LogManager(params["log_dir"])
            log_manager.start_logging(log_manager.create_log_file(ctx.info_name))
        try:
            fn(**params)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            ctx.exit(3)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(2)
        finally:
            if log_manager:
                log_manager.stop_logging()

    return wrapper


def common_options(fn):
    options = [
        click.option("--config", type=click.Path(dir_okay=False), callback=_load_config,
                     is_eager=True, help="Flat key = value file of option defaults"),
        click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1),
                     default=Config.DEFAULT_SEED, show_default=True),
        click.option("--sigma", type=click.FloatRange(0, min_open=True), default=None,
                     help="Fixed Gaussian width (default: cross-validated)"),
        click.option("--lambda", "lam", type=click.FloatRange(0, min_open=True), default=None,
                     help="Fixed PE-DR regularization (default: cross-validated)"),
        click.option("--ridge", type=click.FloatRange(0, min_open=True), default=None,
                     help="Fixed KLR/RLS ridge (default: cross-validated)"),
        click.option("--standardize", is_flag=True, default=False,
                     help="Standardize features with training statistics"),
        click.option("--out", type=click.Path(dir_okay=False), default=None),
        click.option("-v", "--verbose", "verbosity", count=True),
        click.option("--log-dir", type=click.Path(file_okay=False), default=None,
                     help="Also write a per-run log file here"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="priorshift")
def cli():
    """Class-prior estimation under class-prior change"""


@cli.command()
@click.option("--train", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Labeled training CSV (label in last column)")
@click.option("--test", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Unlabeled test CSV")
@click.option("--estimator", default="all", show_default=True,
              help=f"One of {', '.join(Config.ESTIMATORS)}, train-prior, all, or a list")
@common_options
@run_command
def estimate(train, test, estimator, seed, out, **params):
    """Estimate the test class prior with one or more estimators"""
    names = resolve_estimators(estimator)
    train_data = load_dataset(train)
    test_data = load_dataset(test, "csv-unlabeled")
    if test_data.d != train_data.d:
        raise ValidationError(f"test has {test_data.d} features, training has {train_data.d}")
    if params["standardize"]:
        train_data, test_data = standardize(train_data, test_data)
    settings = _settings(params)

    rows = []
    for name in names:
        result = run_estimator(name, train_data, test_data, settings, seed)
        row = {"estimator": name}
        for label, value in zip(train_data.label_names, result.theta_hat.values):
            row[f"theta_{label}"] = value
        rows.append(row)

    header = _preamble("estimate", dict(params, train=train, test=test, estimator=estimator,
                                        seed=seed, out=out))
    _emit(frame_to_csv(pd.DataFrame(rows), Config.FLOAT_FORMAT, header), out)


@cli.command()
@click.option("--generator", type=click.Choice(GENERATOR_KINDS), default=None,
              help="Synthetic source (default gauss-1d unless --data is given)")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Labeled CSV pool to draw trials from")
@click.option("--dataset-name", default=None, help="Check --data against a known benchmark shape")
@click.option("--estimator", default="all", show_default=True)
@click.option("--theta-grid", default=None,
              help="θ*₁ values (default 0.1,...,0.5), or ';'-separated prior vectors")
@click.option("--theta", default=None, help="Fixed test prior of a --train-sizes sweep")
@click.option("--train-sizes", default=None, help="Per-class training sizes, e.g. 10,30,100")
@click.option("--train-per-class", type=click.IntRange(1), default=Config.TRAIN_PER_CLASS,
              show_default=True)
@click.option("--test-total", type=click.IntRange(1), default=Config.TEST_TOTAL,
              show_default=True)
@click.option("--repeats", type=click.IntRange(1), default=Config.REPEATS, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel trial workers (0: one per physical core)")
@click.option("--raw-out", type=click.Path(dir_okay=False), default=None,
              help="Per-trial log (default: <out stem>_raw.csv)")
@click.option("--format", "report_format", type=click.Choice(REPORT_FORMATS), default="csv",
              show_default=True)
@click.option("--timing", is_flag=True, default=False,
              help="Record wall time (makes reports non-reproducible byte-for-byte)")
@common_options
@run_command
def benchmark(generator, data, dataset_name, estimator, theta_grid, theta, train_sizes,
              train_per_class, test_total, repeats, jobs, raw_out, report_format, timing,
              seed, out, **params):
    """Run the repeated-trial protocol and write aggregate and raw reports"""
    if generator and data:
        raise ValidationError("--generator and --data are mutually exclusive")
    if data:
        pool = load_dataset(data)
        if dataset_name:
            check_benchmark_shape(dataset_name, pool)
        source = DatasetSource(pool)
    else:
        generator = generator or "gauss-1d"
        source = synth_generator(generator)

    test_prior = SimplexVector(_parse_floats(theta, "--theta")) if theta else (
        default_test_prior(generator) if generator else None)
    out = out or "benchmark.csv"
    raw_out = raw_out or f"{os.path.splitext(out)[0]}_raw.csv"
    spec = TrialSpec(
        estimators=resolve_estimators(estimator),
        train_per_class=(train_per_class,) * source.c,
        test_total=test_total,
        test_prior=test_prior,
        repeats=repeats,
        seed=seed,
        settings=_settings(params),
        jobs=jobs,
        timing=timing,
    )

    if train_sizes:
        sizes = [int(n) for n in _parse_floats(train_sizes, "--train-sizes")]
        result = run_size_sweep(source, spec, sizes)
    else:
        if theta_grid is None and source.c > 2:
            if test_prior is None:
                raise ValidationError("give --theta-grid or --theta for more than two classes")
            grid = [test_prior]
            theta_grid = " ".join(f"{v:g}" for v in test_prior.values)
        else:
            theta_grid = theta_grid or ",".join(f"{t:g}" for t in Config.THETA_GRID)
            grid = _parse_theta_grid(theta_grid, source.c)
        result = run_sweep(source, spec, grid)

    header = _preamble("benchmark", dict(
        params, generator=generator, data=data, dataset_name=dataset_name,
        estimator=",".join(spec.estimators), theta_grid=theta_grid, theta=theta,
        train_sizes=train_sizes, train_per_class=train_per_class, test_total=test_total,
        repeats=repeats, jobs=jobs, raw_out=raw_out, format=report_format, timing=timing,
        seed=seed, out=out,
    ))
    emit_report(result.table, out, report_format, header)
    emit_raw_log(result.raw, raw_out, header)
    click.echo(f"wrote {out} and {raw_out}", err=True)


@cli.command()
@click.option("--train", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--eval", "eval_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Labeled evaluation CSV for a misclassification rate")
@click.option("--estimator", default="pe-dr", show_default=True,
              help="Estimator supplying the class prior (ignored with --theta)")
@click.option("--theta", default=None, help="Explicit class prior, e.g. 0.5,0.5")
@common_options
@run_command
def classify(train, test, eval_path, estimator, theta, seed, out, **params):
    """Train a prior-weighted classifier and predict the test labels"""
    train_data = load_dataset(train)
    test_data = load_dataset(test, "csv-unlabeled")
    eval_data = None
    if eval_path:
        eval_data = load_dataset(eval_path, label_names=train_data.label_names)
    if test_data.d != train_data.d:
        raise ValidationError(f"test has {test_data.d} features, training has {train_data.d}")
    if params["standardize"]:
        if eval_data is not None:
            _, eval_data = standardize(train_data, eval_data)
        train_data, test_data = standardize(train_data, test_data)
    settings = _settings(params)

    if theta:
        theta_hat = SimplexVector(_parse_floats(theta, "--theta"))
    else:
        selected = resolve_estimators(estimator)
        if len(selected) != 1:
            raise ValidationError("classify takes a single estimator")
        theta_hat = run_estimator(selected[0], train_data, test_data, settings, seed).theta_hat

    model = fit_weighted_classifier(train_data, theta_hat, settings, seed)
    predicted = model.predict(test_data.features)
    label_names = np.asarray(train_data.label_names, dtype=object)
    frame = pd.DataFrame({"row": np.arange(test_data.n), "label": label_names[predicted - 1]})

    header = _preamble("classify", dict(
        params, train=train, test=test, eval=eval_path, estimator=estimator, theta=theta,
        seed=seed, out=out,
    ))
    header["theta_hat"] = " ".join(f"{v:.10g}" for v in theta_hat.values)
    if eval_data is not None:
        rate = misclassification_rate(model, eval_data)
        header["misclassification_rate"] = f"{rate:.10g}"
        click.echo(f"misclassification rate: {rate:.4f}", err=True)
    _emit(frame_to_csv(frame, Config.FLOAT_FORMAT, header), out)


if __name__ == "__main__":
    cli()
