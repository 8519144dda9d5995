"""Command-line entry point.

Every command accepts ``--config FILE`` with one ``key = value`` per line
(``#`` starts a comment; keys use the option names with dashes or
underscores).  Flags given on the command line take precedence.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import csv
import json
import math
import sys
import warnings

import click
import numpy as np

from . import backtest as bt
from . import dynamics as dyn
from . import econometrics as econ
from . import execution_strategies as ex
from . import hjb_solver as hjb
from . import lp_strategy as lp
from . import sim_env as env
from .errors import AmmError, ConfigError, DataError


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _load_config(ctx, _param, value):
    if value:
        try:
            ctx.default_map = {**(ctx.default_map or {}), **read_config(value)}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    return value


config_option = click.option(
    "--config", type=click.Path(dir_okay=False), is_eager=True, expose_value=False,
    callback=_load_config, help="Flat key = value file; flags override it.",
)
seed_option = click.option("--seed", type=int, default=0, show_default=True)
out_option = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file (default stdout).")


def _emit_json(obj, out) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    return x


def _out_path(out):
    return out if out else "/dev/stdout"


def _read_table(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path} has no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return rows[0], data


@click.group()
def cli():
    """Toolkit for constant-product pools: simulation, estimation, strategies, backtests."""


@cli.command()
@config_option
@click.option("--model", type=click.Choice(["model1", "model2", "cir", "flow"]), default="model1", show_default=True)
@click.option("--steps", type=int, default=1000, show_default=True)
@click.option("--dt", type=float, default=13 / 86_400, show_default=True, help="Step in days.")
@click.option("--sigma", type=float, default=0.045)
@click.option("--beta", type=float, default=657.9)
@click.option("--gamma", type=float, default=0.034)
@click.option("--s0", "S0", type=float, default=2690.0)
@click.option("--z0", "Z0", type=float, default=2690.0)
@click.option("--varsigma", type=float, default=0.1)
@click.option("--kappa0", type=float, default=1e7)
@click.option("--cir-gamma", "Gamma", type=float, default=5.0)
@click.option("--pi-bar", type=float, default=0.02)
@click.option("--psi", type=float, default=0.05)
@click.option("--pi0", type=float, default=0.02)
@click.option("--lam", type=float, default=1 / 3, help="Order arrivals per minute (flow model).")
@click.option("--p", "p_buy", type=float, default=0.5)
@seed_option
@out_option
def simulate(model, steps, dt, sigma, beta, gamma, S0, Z0, varsigma, kappa0, Gamma, pi_bar, psi, pi0, lam, p_buy, seed, out):
    """Simulate a path and write it as CSV."""
    t = dt * np.arange(steps + 1)
    if model == "model1":
        S, Z = dyn.simulate_model1(dyn.ModelIParams(sigma, beta, gamma, S0, Z0), dt, steps, seed)
        dyn.write_paths_csv(_out_path(out), t, {"S": S, "Z": Z})
    elif model == "model2":
        Z, kappa = dyn.simulate_depth(dyn.ModelIIParams(gamma, varsigma, Z0, kappa0), dt, steps, seed)
        dyn.write_paths_csv(_out_path(out), t, {"Z": Z, "kappa": kappa})
    elif model == "cir":
        x = dyn.simulate_cir(dyn.CirParams(Gamma, pi_bar, psi, pi0), dt, steps, seed)
        dyn.write_paths_csv(_out_path(out), t, {"pi_tilde": x})
    else:
        flow = dyn.simulate_order_flow(dyn.OrderFlowParams(lam, p_buy, 132_030.0, 20_000.0), steps, seed)
        dyn.write_paths_csv(
            _out_path(out), flow.times, {"is_buy": flow.is_buy.astype(float), "size_x": flow.sizes}
        )


@cli.command()
@config_option
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--dt", type=float, default=None, help="Sampling step in days (default: from the t column).")
@out_option
def estimate(input_path, dt, out):
    """Fit Model I to a CSV with columns t, S, Z."""
    header, data = _read_table(input_path)
    try:
        S, Z = data[:, header.index("S")], data[:, header.index("Z")]
    except ValueError as exc:
        raise DataError("input needs S and Z columns") from exc
    if dt is None:
        if "t" not in header:
            raise ConfigError("--dt is required without a t column")
        dt = float(np.median(np.diff(data[:, header.index("t")])))
    fit = econ.estimate_model1(S, Z, dt)
    _emit_json(_jsonable(fit.__dict__), out)


@cli.command()
@config_option
@click.option("--strategy", type=click.Choice(["optimal", "twap", "single", "ac"]), default="optimal", show_default=True)
@click.option("--T", "T", type=float, default=0.1)
@click.option("--phi", type=float, default=1e-5)
@click.option("--alpha", type=float, default=5.0)
@click.option("--eta", type=float, default=1.0)
@click.option("--kappa", type=float, default=1e7)
@click.option("--y0", type=float, default=100.0)
@click.option("--sigma", type=float, default=0.03)
@click.option("--beta", type=float, default=1.0)
@click.option("--gamma", type=float, default=0.02)
@click.option("--s0", "S0", type=float, default=2000.0)
@click.option("--z0", "Z0", type=float, default=2000.0)
@click.option("--steps", type=int, default=1000)
@seed_option
@out_option
def execute(strategy, T, phi, alpha, eta, kappa, y0, sigma, beta, gamma, S0, Z0, steps, seed, out):
    """Run a liquidation schedule along a simulated Model I path."""
    cfg = ex.LiquidationConfig(T, phi, alpha, eta, kappa, y0)
    params = dyn.ModelIParams(sigma, beta, gamma, S0, Z0)
    dt = T / steps
    S, Z = dyn.simulate_model1(params, dt, steps, seed)
    coeffs = ex.solve_scalar_coefficients(cfg, beta, ex.default_Z_grid(Z0, max(gamma, sigma), T))
    y = y0
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ex.GridClampWarning)
        for k in range(steps + 1):
            t = k * dt
            if k == steps:
                nu = 0.0
            elif strategy == "optimal":
                nu = ex.closed_form_speed(t, y, Z[k], S[k], coeffs, cfg)
            else:
                nu = ex.benchmark_speed(strategy, t, y, cfg, dt=dt, Z=Z[k], coeffs=coeffs)
            rows.append((t, y, nu, Z[k], S[k]))
            y -= nu * dt
    with open(_out_path(out), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y", "nu", "Z", "S"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def _parse_grid(text: str) -> tuple[int, int, int]:
    try:
        n = tuple(int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"grid must look like 64x64x64, got {text!r}") from exc
    if len(n) != 3 or min(n) < 3:
        raise ConfigError("grid needs three sizes of at least 3")
    return n


@cli.command("solve-hjb")
@config_option
@click.option("--model", type=click.Choice(["1", "2"]), default="1", show_default=True)
@click.option("--grid", "grid_text", default="64x64x64", show_default=True)
@click.option("--T", "T", type=float, default=0.1)
@click.option("--phi", type=float, default=1e-5)
@click.option("--alpha", type=float, default=5.0)
@click.option("--eta", type=float, default=1.0)
@click.option("--kappa", type=float, default=1e7)
@click.option("--sigma", type=float, default=0.03)
@click.option("--beta", type=float, default=1.0)
@click.option("--gamma", type=float, default=0.02)
@click.option("--varsigma", type=float, default=0.1)
@click.option("--s0", "S0", type=float, default=2000.0)
@click.option("--z0", "Z0", type=float, default=2000.0)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Write the solution grid here.")
@seed_option
@out_option
def solve_hjb(model, grid_text, T, phi, alpha, eta, kappa, sigma, beta, gamma, varsigma, S0, Z0, csv_path, seed, out):
    """Solve the value-function PDE and report bound checks as JSON."""
    n = _parse_grid(grid_text)
    cfg = ex.LiquidationConfig(T, phi, alpha, eta, kappa)
    if model == "1":
        params = dyn.ModelIParams(sigma, beta, gamma, S0, Z0)
        sol = hjb.solve_model1_pde(params, cfg, hjb.model1_grid(params, cfg, n))
    else:
        params = dyn.ModelIIParams(gamma, varsigma, Z0, kappa)
        sol = hjb.solve_model2_pde(params, cfg, hjb.model2_grid(params, cfg, n))
    if csv_path:
        sol.to_csv(csv_path)
    report = {
        "model": sol.model,
        "grid": list(n),
        "bound_violations": hjb.verify_bounds(sol),
        "max_picard_iterations": max(sol.picard_iterations) if sol.picard_iterations else 0,
        "theta2_at_start": float(sol.theta2[0, n[1] // 2, n[2] // 2]),
    }
    _emit_json(_jsonable(report), out)


@cli.command("lp-quote")
@config_option
@click.option("--pi", type=float, required=True, help="Pool fee rate per day.")
@click.option("--sigma", type=float, required=True)
@click.option("--gamma-c", type=float, default=5e-7, show_default=True)
@click.option("--mu", type=float, default=0.0, show_default=True)
@click.option("--zeta", type=float, default=0.0, show_default=True)
@click.option("--epsilon", type=float, default=1e-4, show_default=True)
@click.option("--z", "Z", type=float, default=1.0, show_default=True)
@out_option
def lp_quote(pi, sigma, gamma_c, mu, zeta, epsilon, Z, out):
    """Optimal liquidity-provision range as JSON."""
    params = lp.LpParams(gamma_c, sigma, zeta, epsilon, mu)
    q = lp.optimal_spread(pi, params, Z)
    report = lp.viability_check(pi, params)
    doc = {
        "delta": q.delta, "delta_L": q.delta_L, "delta_U": q.delta_U,
        "Z_L": q.Z_L, "Z_U": q.Z_U, "viable": q.viable, "status": q.status,
        "checks": {k: {"passed": ok, "margin": m} for k, (ok, m) in report.checks.items()},
        "threshold_sigma2_over_8": report.threshold,
    }
    _emit_json(_jsonable(doc), out)


@cli.command()
@config_option
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--lags", type=int, default=1, show_default=True)
@click.option("--horizon", type=int, default=10, show_default=True)
@click.option("--denominator", type=click.Choice(["standard", "printed"]), default="standard", show_default=True)
@out_option
def spillover(input_path, lags, horizon, denominator, out):
    """Fit a VAR to the CSV columns (a leading t column is ignored) and report spillovers."""
    header, data = _read_table(input_path)
    if header and header[0] == "t":
        header, data = header[1:], data[:, 1:]
    model = econ.fit_var(data, lags)
    rep = econ.spillover(model, horizon, denominator)
    doc = {
        "variables": header, "horizon": horizon, "TSI_percent": rep.TSI,
        "DSI_to_percent": rep.DSI_to, "DSI_from_percent": rep.DSI_from, "NSI_percent": rep.NSI,
        "fevd": rep.fevd,
    }
    _emit_json(_jsonable(doc), out)


@cli.command("env-run")
@config_option
@click.option("--lam", type=float, default=1 / 3, show_default=True)
@click.option("--p", "p_buy", type=float, default=0.5, show_default=True)
@click.option("--tau", type=float, default=0.003, show_default=True)
@click.option("--kappa-rest", type=float, default=15_000_000.0, show_default=True)
@click.option("--z0", "Z0", type=float, default=2200.0, show_default=True)
@click.option("--lower", type=int, default=500, show_default=True)
@click.option("--upper", type=int, default=500, show_default=True)
@click.option("--v0", "V0", type=float, default=500_000.0, show_default=True)
@click.option("--gas", type=float, default=0.0, show_default=True)
@click.option("--max-spread", type=int, default=500, show_default=True)
@seed_option
@out_option
def env_run(lam, p_buy, tau, kappa_rest, Z0, lower, upper, V0, gas, max_spread, seed, out):
    """Run one episode of a fixed-range strategy and write the trajectory CSV."""
    cfg = env.single_pool_config(lam=lam, p=p_buy, tau=tau, kappa_rest=kappa_rest, Z0=Z0,
                                 V0=V0, gas_per_adjust=gas, max_spread=max_spread)
    episode = env.run_episode(cfg, env.fixed_strategy(lower, upper), seed)
    episode.to_csv(_out_path(out))


@cli.command()
@config_option
@click.option("--events", "events_path", required=True, type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(["liquidation", "speculation", "lp"]), default="liquidation", show_default=True)
@click.option("--strategy", type=click.Choice(["optimal", "twap", "single"]), default="optimal", show_default=True)
@click.option("--in-sample", type=float, default=6 * 3600.0, show_default=True, help="Seconds.")
@click.option("--out-sample", type=float, default=3600.0, show_default=True, help="Seconds.")
@click.option("--participation-rate", type=float, default=0.5, show_default=True)
@click.option("--gas", type=float, default=0.0, show_default=True)
@click.option("--amm-fee", type=float, default=1e-4, show_default=True)
@click.option("--phi", type=float, default=1e-3, show_default=True)
@click.option("--alpha", type=float, default=5.0, show_default=True)
@click.option("--sample-step", type=float, default=13.0, show_default=True)
@click.option("--pool-id", default="pool", show_default=True)
@click.option("--oracle-id", default="oracle", show_default=True)
@click.option("--v0", "V0", type=float, default=1e6, show_default=True)
@click.option("--gamma-c", type=float, default=5e-7, show_default=True)
@click.option("--fee-tier", type=float, default=0.0005, show_default=True)
@seed_option
@out_option
def backtest(events_path, kind, strategy, in_sample, out_sample, participation_rate, gas, amm_fee, phi, alpha,
             sample_step, pool_id, oracle_id, V0, gamma_c, fee_tier, seed, out):
    """Replay an event CSV through a rolling-window backtest."""
    try:
        events = bt.read_events(events_path)
    except OSError as exc:
        raise DataError(f"cannot read events: {exc}") from exc
    if kind == "lp":
        rep = bt.run_lp_backtest(events, bt.LpBacktestConfig(V0=V0, gamma_c=gamma_c, fee_tier=fee_tier,
                                                             gas_per_op=gas, pool_id=pool_id))
        _emit_json(_jsonable(rep.__dict__), out)
        return
    cfg = bt.BacktestConfig(in_sample, out_sample, participation_rate, gas, amm_fee, strategy, phi, alpha,
                            sample_step, pool_id, oracle_id)
    run = bt.run_liquidation_backtest if kind == "liquidation" else bt.run_speculation_backtest
    bt.write_results_csv(_out_path(out), run(events, cfg))


def main(argv=None) -> int:
    """Run the CLI and return its exit code."""
    try:
        cli.main(args=argv, prog_name="ammkit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 2
    except (DataError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3
    except (ConfigError, AmmError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
