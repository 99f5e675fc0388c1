"""Batch driver: simulate -> train -> sweep -> report, plus selftest.

Every command validates its config fully before side effects, embeds the
config hash and master seed in its outputs, and is byte-deterministic
given (config, seed) at any worker count.

Exit codes: 0 success, 1 validation error, 2 runtime/numerical error,
3 partial sweep failure.
"""

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, em, evaluate, network, telescope
from .config import (
    ExperimentConfig,
    config_hash,
    config_to_dict,
    load_config,
)
from .data import load_dataset_csv, save_dataset_csv
from .errors import ConfigError, MissingSpeciesError, PidImputeError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3
OUT_DIR_ENV = "PIDIMPUTE_OUT"


def _resolve_out(cfg: ExperimentConfig, override) -> Path:
    import os

    path = override or cfg.out_dir or os.environ.get(OUT_DIR_ENV) or "pidimpute_out"
    return Path(path)


def _provenance(cfg: ExperimentConfig) -> list[str]:
    return [f"config_hash={config_hash(cfg)} master_seed={cfg.master_seed}"]


def _bin_grid(cfg: ExperimentConfig):
    edges = cfg.sim.bin_edges()
    return [(k, float(edges[k]), float(edges[k + 1])) for k in range(len(edges) - 1)]


def _bin_csv(out: Path, k: int) -> Path:
    return out / "bins" / f"bin_{k:02d}.csv"


def _net_json(out: Path, k: int) -> Path:
    return out / "models" / f"net_bin_{k:02d}.json"


def _split_seed(cfg: ExperimentConfig, k: int) -> int:
    return int(
        np.random.SeedSequence((cfg.master_seed, 0x5117, k)).generate_state(1)[0]
    )


def _parse_bins_option(cfg, text):
    """Parse "0.25-0.30,0.55-0.60" into bin indices."""
    grid = _bin_grid(cfg)
    out = []
    for token in text.split(","):
        token = token.strip()
        try:
            lo, hi = (float(v) for v in token.split("-"))
        except ValueError as exc:
            raise ConfigError(f"bad bin token {token!r}") from exc
        match = [k for k, glo, ghi in grid if abs(glo - lo) < 1e-9 and abs(ghi - hi) < 1e-9]
        if not match:
            raise ConfigError(f"{token!r} is not a simulated momentum bin")
        out.append(match[0])
    return out


def _requested_bins(cfg, out: Path, bins_option, require_files):
    """Bin indices to operate on: explicit option > config > discovery."""
    if bins_option:
        return _parse_bins_option(cfg, bins_option), True
    if cfg.sweep.bins is not None:
        indices = []
        for lo, hi in cfg.sweep.bins:
            indices.extend(_parse_bins_option(cfg, f"{lo}-{hi}"))
        return indices, True
    grid = _bin_grid(cfg)
    found = [k for k, _, _ in grid if require_files(k)]
    return found, False


def _reconstruct_events(ds, cfg: ExperimentConfig) -> telescope.EventSample:
    """Rebuild an EventSample (incl. raw losses) from a complete bin CSV."""
    if not ds.mask.all():
        raise ConfigError("bin datasets must be complete (no missing cells)")
    kaon_ref = telescope.mean_dedx(telescope.KAON, ds.momentum)
    raw = cfg.sim.thickness_cm * np.exp(ds.values) * kaon_ref[:, None]
    return telescope.EventSample(
        species=np.asarray(ds.species, dtype=int),
        momentum=np.asarray(ds.momentum, dtype=float),
        raw_losses=raw,
        normalized=ds.values.copy(),
    )


def do_simulate(cfg: ExperimentConfig, out: Path) -> int:
    events = telescope.generate_events(cfg.sim)
    (out / "bins").mkdir(parents=True, exist_ok=True)
    comments = _provenance(cfg)
    idx = telescope.momentum_bin_index(events.momentum, cfg.sim.bin_width)
    offset = int(round(cfg.sim.momentum_min / cfg.sim.bin_width))
    for k, lo, hi in _bin_grid(cfg):
        rows = np.flatnonzero(idx == k + offset)
        sub = events.subset(rows)
        path = _bin_csv(out, k)
        save_dataset_csv(path, sub.to_dataset(), comments=comments)
        meta = {
            "config_hash": config_hash(cfg),
            "master_seed": cfg.master_seed,
            "bin": [lo, hi],
            "n_rows": int(rows.size),
            "sim": config_to_dict(cfg)["sim"],
            "missingness": config_to_dict(cfg)["missingness"],
        }
        with open(path.with_suffix(".meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        click.echo(f"wrote {path} ({rows.size} events)")
    return EXIT_OK


def do_train(cfg: ExperimentConfig, out: Path, bins_option) -> int:
    indices, explicit = _requested_bins(
        cfg, out, bins_option, lambda k: _bin_csv(out, k).exists()
    )
    grid = dict((k, (lo, hi)) for k, lo, hi in _bin_grid(cfg))
    (out / "models").mkdir(parents=True, exist_ok=True)
    trained = 0
    for k in indices:
        path = _bin_csv(out, k)
        if not path.exists():
            raise PidImputeError(f"missing bin file {path}; run simulate first")
        ds = load_dataset_csv(path)
        lo, hi = grid[k]
        if ds.n_rows == 0:
            if explicit:
                raise MissingSpeciesError(
                    f"bin {lo:g}-{hi:g} is empty; cannot train", species=None
                )
            click.echo(f"skipping empty bin {lo:g}-{hi:g}")
            continue
        events = _reconstruct_events(ds, cfg)
        train_half, _pool = telescope.split_train_pool(events, _split_seed(cfg, k))
        missing = [
            s
            for s in telescope.SPECIES_CODES
            if not np.any(train_half.species == s)
        ]
        if missing:
            name = telescope.SPECIES_NAMES[missing[0]]
            raise MissingSpeciesError(
                f"bin {lo:g}-{hi:g}: species {name!r} absent from the training half",
                species=missing[0],
            )
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.master_seed, 0x7417, k))
        )
        order = rng.permutation(train_half.n_events)
        n_val = max(1, int(round(cfg.net.val_fraction * train_half.n_events)))
        val_rows, fit_rows = order[:n_val], order[n_val:]
        topology = network.NetTopology(
            layer_sizes=(events.normalized.shape[1], *cfg.net.hidden_sizes, 1)
        )
        net = network.train(
            train_half.normalized[fit_rows],
            train_half.species[fit_rows].astype(float),
            topology=topology,
            seed=_split_seed(cfg, k) ^ 0xBF65,
            max_iter=cfg.net.max_iter,
            validation=(
                train_half.normalized[val_rows],
                train_half.species[val_rows].astype(float),
            ),
        )
        val_out = network.forward(net, train_half.normalized[val_rows])
        net.cuts = network.optimize_cuts(
            np.atleast_1d(val_out), train_half.species[val_rows]
        )
        network.save_net_json(
            _net_json(out, k),
            net,
            extra={
                "config_hash": config_hash(cfg),
                "master_seed": cfg.master_seed,
                "bin": [lo, hi],
            },
        )
        click.echo(
            f"trained bin {lo:g}-{hi:g}: best val loss {net.best_val_loss:.4f}, "
            f"cuts ({net.cuts.t_low:.2f}, {net.cuts.t_high:.2f})"
        )
        trained += 1
    if trained == 0 and not explicit:
        raise PidImputeError("no bins trained; run simulate first")
    return EXIT_OK


def do_sweep(cfg: ExperimentConfig, out: Path, threads: int, dry_run: bool) -> int:
    indices, _explicit = _requested_bins(
        cfg, out, None, lambda k: _net_json(out, k).exists()
    )
    grid = dict((k, (lo, hi)) for k, lo, hi in _bin_grid(cfg))
    contexts = []
    for k in indices:
        net_path = _net_json(out, k)
        csv_path = _bin_csv(out, k)
        if not net_path.exists():
            raise PidImputeError(f"missing model {net_path}; run train first")
        if not csv_path.exists():
            raise PidImputeError(f"missing bin file {csv_path}; run simulate first")
        lo, hi = grid[k]
        events = _reconstruct_events(load_dataset_csv(csv_path), cfg)
        _train_half, pool = telescope.split_train_pool(events, _split_seed(cfg, k))
        contexts.append(
            evaluate.BinContext(
                lo=lo, hi=hi, pool=pool, net=network.load_net_json(net_path)
            )
        )
    if not contexts:
        raise PidImputeError("no bins to sweep; train models first")

    cells = evaluate.plan_cells(contexts, list(cfg.strategies), list(cfg.sweep.etas))
    if dry_run:
        click.echo(f"sweep plan: {len(cells)} cells")
        for ctx, strat, eta in cells:
            click.echo(f"  bin {ctx.lo:g}-{ctx.hi:g} strategy {strat.kind} eta {eta:g}")
        return EXIT_OK

    results = evaluate.run_sweep(
        contexts,
        list(cfg.strategies),
        list(cfg.sweep.etas),
        n_samples=cfg.sweep.n_samples,
        sample_size=cfg.sweep.sample_size,
        master_seed=cfg.master_seed,
        mechanism=cfg.missingness,
        threads=threads,
    )
    out.mkdir(parents=True, exist_ok=True)
    evaluate.write_results_csv(out / "results.csv", results, comments=_provenance(cfg))
    failures = [r for r in results if r.error is not None]
    click.echo(
        f"sweep complete: {len(results) - len(failures)}/{len(results)} cells ok, "
        f"results in {out / 'results.csv'}"
    )
    if failures:
        report = [
            {
                "bin": [r.bin_lo, r.bin_hi],
                "strategy": r.strategy,
                "eta": r.eta,
                "error": r.error,
            }
            for r in failures
        ]
        with open(out / "sweep_failures.json", "w") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
        for r in failures:
            click.echo(
                f"FAILED cell bin {r.bin_lo:g}-{r.bin_hi:g} {r.strategy} "
                f"eta {r.eta:g}: {r.error}",
                err=True,
            )
        return EXIT_PARTIAL
    return EXIT_OK


def do_report(results_path: Path, out: Path) -> int:
    rows = evaluate.load_results_csv(results_path)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    bins = sorted({(r["bin_lo"], r["bin_hi"]) for r in rows})

    def _bin_rows(lo, hi):
        return [r for r in rows if r["bin_lo"] == lo and r["bin_hi"] == hi]

    import csv as _csv

    for lo, hi in bins:
        tag = f"{lo:g}-{hi:g}"
        sub = _bin_rows(lo, hi)
        with open(report_dir / f"rms_bin_{tag}.csv", "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["eta", "strategy", "rms_diff", "rms_sd"])
            for r in sorted(
                (r for r in sub if r["species"] == "all"),
                key=lambda r: (r["eta"], r["strategy"]),
            ):
                w.writerow([f"{r['eta']:g}", r["strategy"], r["rms_diff"], r["rms_sd"]])
        for fig, val_key, sd_key in (
            ("efficiency", "efficiency", "eff_sd"),
            ("purity", "purity", "pur_sd"),
        ):
            with open(report_dir / f"{fig}_bin_{tag}.csv", "w", newline="") as fh:
                w = _csv.writer(fh)
                w.writerow(["eta", "strategy", "species", val_key, sd_key])
                for r in sorted(
                    (r for r in sub if r["species"] != "all"),
                    key=lambda r: (r["eta"], r["strategy"], r["species"]),
                ):
                    w.writerow(
                        [f"{r['eta']:g}", r["strategy"], r["species"], r[val_key], r[sd_key]]
                    )

    flags = []
    lines = ["# Sweep summary", ""]
    if not bins:
        lines.append("No result rows.")
    for lo, hi in bins:
        sub = _bin_rows(lo, hi)
        etas = sorted({r["eta"] for r in sub})
        lines.append(f"## Momentum bin {lo:g}-{hi:g} GeV/c")
        lines.append("")
        lines.append("| eta | strategy | pion eff | kaon eff | proton eff | rms |")
        lines.append("|---|---|---|---|---|---|")
        for eta in etas:
            strategies = sorted({r["strategy"] for r in sub})
            for strat in strategies:
                cell = [r for r in sub if r["eta"] == eta and r["strategy"] == strat]
                by_species = {r["species"]: r for r in cell}

                def _eff(name):
                    r = by_species.get(name)
                    return "-" if r is None or r["efficiency"] is None else f"{r['efficiency']:.3f}"

                rms_row = by_species.get("all")
                rms = "-" if rms_row is None or rms_row["rms_diff"] is None else f"{rms_row['rms_diff']:.4f}"
                lines.append(
                    f"| {eta:g} | {strat} | {_eff('pion')} | {_eff('kaon')} | "
                    f"{_eff('proton')} | {rms} |"
                )
            mean_row = next(
                (r for r in sub if r["eta"] == eta and r["strategy"] == "mean" and r["species"] == "proton"),
                None,
            )
            msn_row = next(
                (r for r in sub if r["eta"] == eta and r["strategy"] == "ml_msn" and r["species"] == "proton"),
                None,
            )
            if (
                mean_row
                and msn_row
                and mean_row["efficiency"] is not None
                and msn_row["efficiency"] is not None
                and mean_row["efficiency"] > msn_row["efficiency"]
            ):
                flags.append(
                    f"bin {lo:g}-{hi:g}, eta {eta:g}: mean imputation beats ml_msn "
                    f"on proton efficiency "
                    f"({mean_row['efficiency']:.3f} > {msn_row['efficiency']:.3f})"
                )
        lines.append("")
    lines.append("## Consistency flags")
    lines.append("")
    if flags:
        lines.extend(f"- {f}" for f in flags)
    else:
        lines.append("- none: mean imputation never beats ml_msn on proton efficiency")
    with open(report_dir / "summary.md", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    click.echo(f"report written to {report_dir}")
    return EXIT_OK


def _selftest_suites(quick: bool):
    import mpmath as mp
    from scipy import integrate

    from . import kernels

    mp.mp.dps = 40
    results = []

    def check(name, ok, detail):
        results.append((name, bool(ok), detail))

    # truncated moments vs adaptive quadrature
    worst = 0.0
    for a in (-8.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 8.0):
        f = lambda t: mp.exp(-((t - a) ** 2) / 2)
        z = mp.quad(f, [0, mp.inf])
        e1_q = float(mp.quad(lambda t: t * f(t), [0, mp.inf]) / z)
        e2_q = float(mp.quad(lambda t: t * t * f(t), [0, mp.inf]) / z)
        mom = kernels.truncated_normal_moments(a, 1.0)
        worst = max(worst, abs(mom.e1 - e1_q), abs(mom.e2 - e2_q))
    check("truncated-moment quadrature", worst < 1e-8, f"max abs err {worst:.2e}")

    # density normalization
    xi = np.array([0.3])
    sig = np.array([[0.8]])
    dlt = np.array([0.9])
    val, _ = integrate.quad(
        lambda t: kernels.msn_pdf(np.array([t]), xi, sig, dlt), -12, 12
    )
    check("1-D skew density normalizes", abs(val - 1) < 1e-6, f"integral {val:.9f}")
    if not quick:
        xi2 = np.array([0.2, -0.4])
        sig2 = np.array([[1.0, 0.3], [0.3, 0.8]])
        dlt2 = np.array([0.8, -0.6])
        val2, _ = integrate.dblquad(
            lambda y, x: kernels.msn_pdf(np.array([x, y]), xi2, sig2, dlt2),
            -10,
            10,
            -10,
            10,
            epsabs=1e-9,
        )
        check(
            "2-D skew density normalizes", abs(val2 - 1) < 1e-6, f"integral {val2:.9f}"
        )

    # sampling moments vs closed forms
    n = 10**5 if quick else 10**6
    rng = np.random.default_rng(1234)
    xi3 = np.array([0.5, -1.0])
    sig3 = np.array([[1.0, 0.2], [0.2, 0.6]])
    dlt3 = np.array([1.1, -0.7])
    draws = kernels.sample_msn(xi3, sig3, dlt3, n, rng)
    mean_true = xi3 + np.sqrt(2 / np.pi) * dlt3
    cov_true = sig3 + (1 - 2 / np.pi) * np.outer(dlt3, dlt3)
    se_mean = np.sqrt(np.diag(cov_true) / n)
    mean_ok = np.all(np.abs(draws.mean(axis=0) - mean_true) < 4 * se_mean)
    cov_err = np.max(np.abs(np.cov(draws.T) - cov_true))
    check(
        "sampling mean within 4 SE",
        mean_ok,
        f"max |mean err| {np.max(np.abs(draws.mean(axis=0) - mean_true)):.2e}",
    )
    check("sampling covariance close", cov_err < 10 / np.sqrt(n), f"max err {cov_err:.2e}")

    # finite-difference gradients
    rng = np.random.default_rng(5)
    topo = network.NetTopology()
    worst_rel = 0.0
    for _ in range(3):
        theta = network.init_theta(topo, rng)
        x = rng.normal(size=(20, 6))
        y = rng.choice([1.0, 2.0, 3.0], size=20)
        _, g = network.mse_loss_and_grad(theta, topo, x, y)
        fd = np.empty_like(g)
        h = 1e-5
        for i in range(theta.size):
            tp = theta.copy()
            tp[i] += h
            tm = theta.copy()
            tm[i] -= h
            fd[i] = (
                network.mse_loss_and_grad(tp, topo, x, y)[0]
                - network.mse_loss_and_grad(tm, topo, x, y)[0]
            ) / (2 * h)
        worst_rel = max(worst_rel, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    check("network gradients", worst_rel < 1e-6, f"max rel err {worst_rel:.2e}")
    return results


def do_selftest(quick: bool) -> int:
    results = _selftest_suites(quick)
    failed = 0
    for name, ok, detail in results:
        click.echo(f"SELFTEST {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        failed += not ok
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def _command(fn):
    """Map package exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (PidImputeError, np.linalg.LinAlgError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
        sys.exit(code)

    return wrapper


@click.group()
@click.version_option(version=__version__)
def main():
    """Missing-data imputation pipeline for multilayer energy-loss PID."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_override", default=None, help="output directory")
@_command
def simulate(config_path, out_override):
    """Generate per-momentum-bin datasets."""
    cfg = load_config(config_path)
    return do_simulate(cfg, _resolve_out(cfg, out_override))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_override", default=None)
@click.option("--bins", "bins_option", default=None, help='e.g. "0.25-0.30,0.55-0.60"')
@_command
def train(config_path, out_override, bins_option):
    """Train one classifier per momentum bin on complete data."""
    cfg = load_config(config_path)
    return do_train(cfg, _resolve_out(cfg, out_override), bins_option)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_override", default=None)
@click.option("--threads", default=1, show_default=True, help="sweep worker cap")
@click.option("--dry-run", is_flag=True, help="print the cell plan and write nothing")
@_command
def sweep(config_path, out_override, threads, dry_run):
    """Evaluate every (bin, strategy, eta) cell and write results.csv."""
    cfg = load_config(config_path)
    return do_sweep(cfg, _resolve_out(cfg, out_override), threads, dry_run)


@main.command()
@click.option("--results", "results_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_override", default=None)
@_command
def report(results_path, out_override):
    """Emit plot-ready data files and a markdown summary."""
    out = Path(out_override) if out_override else Path(results_path).parent
    return do_report(Path(results_path), out)


@main.command()
@click.option("--quick", is_flag=True, help="smaller Monte Carlo budgets")
@_command
def selftest(quick):
    """Run the slow oracle suites (quadrature, Monte Carlo, gradients)."""
    return do_selftest(quick)


if __name__ == "__main__":
    main()
