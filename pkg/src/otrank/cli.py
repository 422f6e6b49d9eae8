"""Command-line surface.

Exit codes: 0 = ran, no rejection; 10 = rejection; 64 = usage error;
65 = data error (malformed CSV, ties without --jitter, shape mismatch);
70 = internal failure.  Results go to stdout (and --output); diagnostics
and errors go to stderr only.
"""

from __future__ import annotations

import csv
import io
import sys

import click
import numpy as np

from .assignment import TiedDataError
from .calibration import run_independence_test, run_two_sample_test
from .efficiency import are_table
from .reference import SCORE_KINDS, build_grid
from .simulation import ScenarioSpec, hl_sample_size_match, power_curve

EXIT_OK = 0
EXIT_REJECT = 10
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_INTERNAL = 70

_GRID_TAGS = ("gaussian", "uniform_cube", "spherical_uniform")
_SETTINGS = ("H1", "H2", "A1", "A2", "A3", "A4", "konijn")

# default alternative grids per simulation setting (theta, or delta for konijn)
_DEFAULT_THETAS = {
    "A1": (0.0, 0.05, 0.1, 0.15, 0.2),
    "A2": (0.0, 0.05, 0.1, 0.15, 0.2),
    "A3": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
    "A4": (0.0, -0.05, -0.1, -0.15, -0.2, -0.25),
    "konijn": (0.0, 1.0, 2.0, 3.0),
    "H1": (0.1,),
    "H2": (0.1,),
}


class DataFileError(Exception):
    """Input rejected: malformed CSV or data incompatible with the request."""


def read_matrix(path: str) -> np.ndarray:
    """Parse a numeric CSV (rows = observations); optional single header row.

    Errors carry path:line so the offending row can be found.
    """
    rows: list[list[float]] = []
    width = None
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFileError(f"{path}: {exc.strerror or exc}") from exc
    with handle:
        reader = csv.reader(handle)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(cell) for cell in row]
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise DataFileError(
                    f"{path}:{lineno}: non-numeric value in row {row!r}") from None
            if any(not np.isfinite(v) for v in vals):
                raise DataFileError(f"{path}:{lineno}: non-finite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataFileError(
                    f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataFileError(f"{path}: no numeric rows")
    return np.asarray(rows, dtype=float)


def _emit(text: str, output: str | None) -> None:
    click.echo(text)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _format_report(report, *, command: str, alpha: float, as_json: bool,
                   extra: dict) -> str:
    if as_json:
        import json

        payload = {"schema": 1, "command": command, "alpha": alpha}
        payload.update(extra)
        payload.update(report.to_dict())
        return json.dumps(payload, indent=2, sort_keys=True)
    lines = [f"{command} test"]
    for key, val in extra.items():
        lines.append(f"  {key:<12} {val}")
    lines += [
        f"  {'statistic':<12} {report.statistic:.6g}",
        f"  {'df':<12} {report.df}",
        f"  {'cutoff':<12} {report.cutoff:.6g}  (alpha={alpha:g})",
        f"  {'p-value':<12} {report.p_value:.6g}",
        f"  {'calibration':<12} {report.calibration}",
        f"  {'decision':<12} {'reject' if report.decision else 'no reject'}",
    ]
    return "\n".join(lines)


def _csv_text(fieldnames: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v)
                         for k, v in row.items()})
    return buf.getvalue()


def _common_test_options(fn):
    opts = [
        click.option("--alpha", default=0.05, show_default=True,
                     help="test level"),
        click.option("--nu", "nu_tag", type=click.Choice(_GRID_TAGS),
                     default="gaussian", show_default=True,
                     help="reference law for the grid"),
        click.option("--grid-seed", type=int, default=None,
                     help="rotation seed (spherical_uniform only)"),
        click.option("--center", is_flag=True, help="center the grid"),
        click.option("--calibration", type=click.Choice(["asymptotic", "permutation"]),
                     default="asymptotic", show_default=True),
        click.option("--b", default=2000, show_default=True,
                     help="permutation draws"),
        click.option("--route", type=click.Choice(["labels", "fresh"]),
                     default="labels", show_default=True,
                     help="permutation null: label shuffles or fresh draws"),
        click.option("--seed", default=0, show_default=True),
        click.option("--threads", type=int, default=None,
                     help="worker threads (env OTRANK_THREADS; output is thread-independent)"),
        click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
                     help="null-table cache (env OTRANK_CACHE)"),
        click.option("--no-cache", is_flag=True, help="skip the null-table cache"),
        click.option("--jitter", is_flag=True,
                     help="break tied rows with a seeded perturbation"),
        click.option("--json", "as_json", is_flag=True, help="machine-readable report"),
        click.option("--quiet", is_flag=True, help="suppress stderr diagnostics"),
        click.option("--output", type=click.Path(dir_okay=False), default=None,
                     help="also write the report here"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
def cli() -> None:
    """Distribution-free multivariate tests on optimal-transport ranks."""


@cli.command("two-sample")
@click.argument("x_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("y_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--score", type=click.Choice(SCORE_KINDS), default="identity",
              show_default=True, help="score applied to ranks")
@_common_test_options
def cmd_two_sample(x_csv, y_csv, score, alpha, nu_tag, grid_seed, center,
                   calibration, b, route, seed, threads, cache_dir, no_cache,
                   jitter, as_json, quiet, output):
    """Two-sample location test on pooled empirical ranks."""
    x = read_matrix(x_csv)
    y = read_matrix(y_csv)
    if x.shape[1] != y.shape[1]:
        raise DataFileError(
            f"dimension mismatch: {x_csv} has {x.shape[1]} columns, "
            f"{y_csv} has {y.shape[1]}")
    _check_grid_seed(nu_tag, grid_seed)
    if calibration == "permutation" and b < 100:
        raise click.UsageError("permutation calibration needs --b >= 100")
    try:
        report = run_two_sample_test(
            x, y, nu_tag=nu_tag, grid_seed=grid_seed, center=center,
            score=score, alpha=alpha, calibration=calibration, b=b, seed=seed,
            route=route, jitter_seed=seed if jitter else None,
            cache_dir=cache_dir, use_cache=not no_cache, threads=threads)
    except TiedDataError as exc:
        raise DataFileError(f"{exc} (re-run with --jitter)") from exc
    except ValueError as exc:
        raise DataFileError(str(exc)) from exc
    extra = {"x": x_csv, "y": y_csv, "nu": nu_tag, "score": score, "seed": seed}
    _emit(_format_report(report, command="two-sample", alpha=alpha,
                         as_json=as_json, extra=extra), output)
    return EXIT_REJECT if report.decision else EXIT_OK


@cli.command("independence")
@click.argument("xy_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--dx", required=True, type=int,
              help="number of leading columns forming the first block")
@click.option("--kind", type=click.Choice(["rank_spearman", "rdcov", "wilks"]),
              default="rank_spearman", show_default=True)
@click.option("--score", type=click.Choice(SCORE_KINDS), default="identity",
              show_default=True, help="score applied to both blocks' ranks")
@_common_test_options
def cmd_independence(xy_csv, dx, kind, score, alpha, nu_tag, grid_seed, center,
                     calibration, b, route, seed, threads, cache_dir, no_cache,
                     jitter, as_json, quiet, output):
    """Independence test between column blocks [0:dx) and [dx:d)."""
    if dx < 1:
        raise click.UsageError("--dx must be at least 1")
    if kind == "rdcov" and calibration == "asymptotic":
        raise click.UsageError("rdcov has no asymptotic calibration; "
                               "use --calibration permutation")
    if calibration == "permutation" and b < 100:
        raise click.UsageError("permutation calibration needs --b >= 100")
    data = read_matrix(xy_csv)
    if dx >= data.shape[1]:
        raise DataFileError(
            f"{xy_csv}: --dx {dx} leaves no columns for the second block "
            f"(file has {data.shape[1]})")
    _check_grid_seed(nu_tag, grid_seed)
    x, y = data[:, :dx], data[:, dx:]
    try:
        report = run_independence_test(
            x, y, kind, nu_tag=nu_tag, grid_seed=grid_seed, center=center,
            score_x=score, score_y=score, alpha=alpha, calibration=calibration,
            b=b, seed=seed, route=route,
            jitter_seed=seed if jitter else None, cache_dir=cache_dir,
            use_cache=not no_cache, threads=threads)
    except TiedDataError as exc:
        raise DataFileError(f"{exc} (re-run with --jitter)") from exc
    except ValueError as exc:
        raise DataFileError(str(exc)) from exc
    extra = {"xy": xy_csv, "kind": kind, "dx": dx, "nu": nu_tag,
             "score": score, "seed": seed}
    _emit(_format_report(report, command="independence", alpha=alpha,
                         as_json=as_json, extra=extra), output)
    return EXIT_REJECT if report.decision else EXIT_OK


def _check_grid_seed(nu_tag: str, grid_seed: int | None) -> None:
    if grid_seed is not None and nu_tag != "spherical_uniform":
        raise click.UsageError(
            f"--grid-seed only applies to spherical_uniform grids, not {nu_tag}")


@cli.command("power-sim")
@click.option("--setting", type=click.Choice(_SETTINGS), required=True)
@click.option("--d", default=2, show_default=True)
@click.option("--d2", type=int, default=None, help="second-block dimension (konijn)")
@click.option("--n", default=300, show_default=True)
@click.option("--m", type=int, default=None, help="first-sample size (default n)")
@click.option("--theta", "thetas", multiple=True, type=float,
              help="alternative grid; repeatable (default depends on setting)")
@click.option("--ns", multiple=True, type=int,
              help="sample-size grid for H1/H2 (default 100..1100 step 200)")
@click.option("--b", type=int, default=None,
              help="replications per point [default: 500, or 200 with --fast]")
@click.option("--fast", is_flag=True, help="reduced replication count (B=200)")
@click.option("--base-family", default="gaussian", show_default=True,
              help="marginal law of the konijn blocks")
@click.option("--test", "tests", multiple=True,
              help="subset of tests to run; repeatable")
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def cmd_power_sim(setting, d, d2, n, m, thetas, ns, b, fast, base_family,
                  tests, alpha, seed, threads, output):
    """Monte-Carlo rejection-rate curves; emits CSV."""
    reps = b if b is not None else (200 if fast else 500)
    thetas = tuple(thetas) or _DEFAULT_THETAS[setting]
    spec = ScenarioSpec(setting=setting, d=d, n=n, thetas=thetas, m=m, b=reps,
                        alpha=alpha, tests=tuple(tests), seed=seed,
                        ns=tuple(ns), d2=d2, base_family=base_family)
    if setting in ("H1", "H2"):
        report = hl_sample_size_match(spec, threads=threads)
        text = _csv_text(["n", "test", "power", "se", "b", "seed"],
                         report.to_rows())
    else:
        curve = power_curve(spec, threads=threads)
        text = _csv_text(["theta", "test", "power", "se", "b", "seed"],
                         curve.to_rows())
    _emit(text.rstrip("\n"), output)
    return EXIT_OK


@cli.command("are-table")
@click.option("--dmax", default=10, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def cmd_are_table(dmax, output):
    """Efficiency constants per dimension; emits CSV plus a constants row.

    The final row fills the four columns with the setting-independent
    constants: Gaussian-data uniform-reference efficiency 3/pi, worst-case
    location bound 108/125, Gaussian-score lower bound 1, and the large-d
    elliptical limit 81/125.
    """
    if dmax < 1:
        raise click.UsageError("--dmax must be at least 1")
    rows, constants = are_table(dmax)
    out = [{"d": r["d"], "kappa_closed": r["kappa_closed"],
            "kappa_quadrature": r["kappa_quadrature"],
            "elliptical_bound": r["elliptical_bound"]} for r in rows]
    out.append({"d": constants["gaussian_uniform_erd"],
                "kappa_closed": constants["hodges_lehmann"],
                "kappa_quadrature": constants["chernoff_savage"],
                "elliptical_bound": constants["elliptical_limit"]})
    text = _csv_text(["d", "kappa_closed", "kappa_quadrature",
                      "elliptical_bound"], out)
    _emit(text.rstrip("\n"), output)
    return EXIT_OK


@cli.command("grid")
@click.option("--nu", "nu_tag", type=click.Choice(_GRID_TAGS), default="gaussian",
              show_default=True)
@click.option("--n", required=True, type=int)
@click.option("--d", default=2, show_default=True)
@click.option("--seed", type=int, default=None,
              help="rotation seed (spherical_uniform only)")
@click.option("--center", is_flag=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def cmd_grid(nu_tag, n, d, seed, center, output):
    """Generate a reference grid and export it as CSV."""
    _check_grid_seed(nu_tag, seed)
    grid = build_grid(nu_tag, n, d, seed=seed, center=center)
    if output:
        grid.save_csv(output)
    else:
        buf = io.StringIO()
        grid.save_csv(buf)
        click.echo(buf.getvalue().rstrip("\n"))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        code = cli.main(args=argv, prog_name="otrank", standalone_mode=False)
        return int(code) if isinstance(code, int) else EXIT_OK
    except click.exceptions.Exit as exc:  # --help and friends
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"otrank: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except DataFileError as exc:
        click.echo(f"otrank: {exc}", err=True)
        return EXIT_DATA
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"otrank: internal error: {exc!r}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
