"""
Command-line interface for l2sim.

Exposes the throughput and fee calculators, scripted scenario simulation,
the supermarket benchmark and report rendering as shell-friendly
subcommands. Uses ``click`` as an optional dependency; install with
``pip install l2sim[cli]``.

Results go to *stdout*; diagnostics go to *stderr*. Exit status is 0 on
success, 1 when a simulation detects a violation or fails, and 2 for usage
or scenario-schema errors.
"""

from __future__ import annotations

import json
import logging
import sys
from contextlib import contextmanager
from fractions import Fraction
from typing import Any, Iterator, Optional, Sequence

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Click availability check
# ---------------------------------------------------------------------------

_CLICK_AVAILABLE = False
try:
    import click

    _CLICK_AVAILABLE = True
except ImportError:
    click = None  # type: ignore[assignment]


def _check_click() -> None:
    if not _CLICK_AVAILABLE:
        sys.exit("The l2sim CLI requires the 'click' package.\nInstall with: pip install l2sim[cli]")


def rational_json(value: Any) -> Any:
    """
    Exact rationals as numerator/denominator plus a decimal rendering.

    Dicts and lists are converted recursively; other values pass through.

    Example:
        >>> rational_json(Fraction(23, 5))
        {'numerator': 23, 'denominator': 5, 'decimal': 4.6}
    """
    if isinstance(value, Fraction):
        return {"numerator": value.numerator, "denominator": value.denominator, "decimal": float(value)}
    if isinstance(value, dict):
        return {k: rational_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [rational_json(v) for v in value]
    return value


def _echo_json(data: Any) -> None:
    click.echo(json.dumps(rational_json(data), indent=2))


def _echo_fields(data: dict) -> None:
    from .bench.report import format_rational

    width = max(len(k) for k in data)
    for key, value in data.items():
        shown = format_rational(value) if isinstance(value, Fraction) else value
        click.echo(f"{key:<{width}}  {shown}")


if _CLICK_AVAILABLE:

    class SchemaError(click.ClickException):
        """Scenario or parameter problem reported with exit status 2."""

        exit_code = 2

    @contextmanager
    def _translate_errors() -> Iterator[None]:
        from .errors import (
            BackendMisconfiguredError,
            InvalidParamsError,
            InvariantViolation,
            L2SimError,
            ScenarioError,
        )

        try:
            yield
        except (ScenarioError, InvalidParamsError, BackendMisconfiguredError) as exc:
            raise SchemaError(str(exc))
        except InvariantViolation as exc:
            logger.error("Invariant violated: %s", exc)
            raise click.ClickException(f"invariant violated: {exc}")
        except L2SimError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}")

    # -----------------------------------------------------------------------
    # Top-level group
    # -----------------------------------------------------------------------

    @click.group()
    @click.option("-v", "--verbose", count=True, help="Log progress to stderr (-vv for debug).")
    def cli(verbose: int) -> None:
        """l2sim: blockchain layer-2 simulations and calculators."""
        if verbose:
            from .logging import setup_logging

            setup_logging(logging.DEBUG if verbose > 1 else logging.INFO)

    # -----------------------------------------------------------------------
    # calc
    # -----------------------------------------------------------------------

    @cli.group()
    def calc() -> None:
        """Closed-form throughput and fee calculators."""

    @calc.command("l1-tps")
    @click.option("--preset", required=True, help="Chain preset name, e.g. bitcoin-2021.")
    @click.option("--json", "as_json", is_flag=True, help="Emit JSON to stdout.")
    def l1_tps(preset: str, as_json: bool) -> None:
        """Transactions per block and per second of an L1 chain."""
        from .chain import check_relay_constraint, load_chain_params, tps_capacity

        with _translate_errors():
            params = load_chain_params(preset)
            capacity = tps_capacity(params)
        result = {
            "preset": params.name,
            "tpb": capacity.tpb,
            "tps": capacity.tps,
            "relay_constraint_ok": check_relay_constraint(params),
        }
        if as_json:
            _echo_json(result)
        else:
            _echo_fields(result)

    @calc.command("plasma-tps")
    @click.option("--l2-gas-limit", default="20000000", show_default=True, help="Child-chain block gas limit.")
    @click.option("--l1-gas-limit", default="12500000", show_default=True, help="Root-chain block gas limit.")
    @click.option("--l1-txs-per-day", default="1500000", show_default=True, help="Observed L1 transactions per day.")
    @click.option("--l1-blocks-per-day", default="6500", show_default=True, help="Observed L1 blocks per day.")
    @click.option("--l2-block-time", default="2.1", show_default=True, help="Child-chain block time in seconds.")
    @click.option("--no-floor", is_flag=True, help="Keep fractional transactions per block.")
    @click.option("--json", "as_json", is_flag=True, help="Emit JSON to stdout.")
    def plasma_tps(
        l2_gas_limit: str,
        l1_gas_limit: str,
        l1_txs_per_day: str,
        l1_blocks_per_day: str,
        l2_block_time: str,
        no_floor: bool,
        as_json: bool,
    ) -> None:
        """Plasma throughput estimated from average L1 gas per transaction."""
        from .plasma import plasma_throughput_estimate

        with _translate_errors():
            result = plasma_throughput_estimate(
                l2_gas_limit,
                l1_gas_limit,
                l1_txs_per_day,
                l1_blocks_per_day,
                l2_block_time,
                floor_tx_per_block=not no_floor,
            )
        if as_json:
            _echo_json(result)
        else:
            _echo_fields(result)

    @calc.command("rollup-tps")
    @click.option("--preset", required=True, help="L1 chain preset, e.g. ethereum-2021.")
    @click.option("--mode", type=click.Choice(["zk", "optimistic"]), default="zk", show_default=True)
    @click.option("--tx-size", type=int, default=None, help="Bytes per compressed transaction.")
    @click.option("--proof-gas", type=int, default=None, help="L1 gas of the validity proof.")
    @click.option("--json", "as_json", is_flag=True, help="Emit JSON to stdout.")
    def rollup_tps(preset: str, mode: str, tx_size: Optional[int], proof_gas: Optional[int], as_json: bool) -> None:
        """Rollup throughput when whole L1 blocks carry batches."""
        from .chain import load_chain_params
        from .rollup import RollupParams, rollup_throughput

        with _translate_errors():
            params = RollupParams(mode=mode, tx_size_bytes=tx_size, proof_gas=proof_gas)
            result = {"mode": mode, **rollup_throughput(load_chain_params(preset), params)}
        if as_json:
            _echo_json(result)
        else:
            _echo_fields(result)

    @calc.command("fee")
    @click.argument("backend")
    @click.option("--preset", default="bitcoin-2021", show_default=True, help="L1 preset of the l1-direct backend.")
    @click.option("--txs", type=int, default=200, show_default=True, help="Payments sharing one rollup batch.")
    @click.option("--json", "as_json", is_flag=True, help="Emit JSON to stdout.")
    def fee(backend: str, preset: str, txs: int, as_json: bool) -> None:
        """Itemized fees paid by customers and the merchant on BACKEND.

        BACKEND is one of channels, plasma, rollup-zk, rollup-optimistic or
        l1-direct.
        """
        from .bench import WorkloadSpec, fee_burden

        with _translate_errors():
            burden = fee_burden(backend, WorkloadSpec(total_txs=txs), l1_preset=preset)
        if as_json:
            click.echo(json.dumps(burden.to_dict(), indent=2))
            return
        click.echo(f"Backend: {backend} (amounts in {burden.unit})")
        rows = {
            "customer one-time": burden.customer_one_time,
            "customer per-tx": burden.customer_per_tx,
            "merchant per-tx": burden.merchant_per_tx,
            "merchant periodic": burden.merchant_periodic,
        }
        for label, value in rows.items():
            click.echo(f"  {label:<18} {value} ({float(burden.native(value)):.6g} {burden.currency})")

    # -----------------------------------------------------------------------
    # simulate
    # -----------------------------------------------------------------------

    @cli.command()
    @click.argument("scenario_path", type=click.Path(dir_okay=False))
    @click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
    @click.option("--seed", type=int, default=None, help="Override the scenario seed.")
    @click.option("--json", "as_json", is_flag=True, help="Emit the summary as JSON to stdout.")
    def simulate(scenario_path: str, out_dir: str, seed: Optional[int], as_json: bool) -> None:
        """Run the scripted simulation in SCENARIO_PATH.

        Writes ``events.jsonl`` and ``summary.json`` into ``--out``. Bench
        scenarios run the benchmark and write its report instead.
        """
        from .scenario import load_scenario, run_scenario

        with _translate_errors():
            scenario = load_scenario(scenario_path).with_seed(seed)
            if scenario.kind == "bench":
                _run_bench(scenario, out_dir, seed, as_json=as_json)
                return
            result = run_scenario(scenario)
            written = result.write(out_dir)

        if as_json:
            click.echo(json.dumps(result.summary, indent=2, sort_keys=True))
        else:
            click.echo(f"Scenario '{scenario.name}': {len(result.summary['steps'])} steps, invariants ok")
            for path in written.values():
                click.echo(f"  wrote {path}")

    # -----------------------------------------------------------------------
    # bench / report
    # -----------------------------------------------------------------------

    def _run_bench(
        scenario,
        out_dir: str,
        seed: Optional[int] = None,
        backends: Sequence[str] = (),
        workers: Optional[int] = None,
        as_json: bool = False,
    ) -> None:
        from dataclasses import replace

        from .bench import emit_report, run_many
        from .bench.report import REPORT_MD
        from .scenario import bench_settings

        settings = bench_settings(scenario)
        spec, config = settings["spec"], settings["config"]
        if seed is not None:
            spec = spec.replace(seed=seed)
        if workers is not None:
            config = replace(config, workers=workers)
        results = run_many(list(backends) or settings["backends"], spec, config)
        written = emit_report(results, out_dir)
        if as_json:
            click.echo(json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True))
        else:
            click.echo(written[REPORT_MD].read_text(encoding="utf-8"), nl=False)

    @cli.command()
    @click.option(
        "--scenario",
        "scenario_path",
        type=click.Path(dir_okay=False),
        default=None,
        help="Bench scenario file (default workload when omitted).",
    )
    @click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
    @click.option("--seed", type=int, default=None, help="Override the workload seed.")
    @click.option("--backend", "backends", multiple=True, help="Restrict to these backends (repeatable).")
    @click.option("--workers", type=int, default=None, help="Parallel backend runs.")
    @click.option("--json", "as_json", is_flag=True, help="Emit results as JSON to stdout.")
    def bench(
        scenario_path: Optional[str],
        out_dir: str,
        seed: Optional[int],
        backends: Sequence[str],
        workers: Optional[int],
        as_json: bool,
    ) -> None:
        """Run the supermarket benchmark and write the comparison report."""
        from .errors import ScenarioError
        from .scenario import Scenario, load_scenario

        with _translate_errors():
            if scenario_path is None:
                scenario = Scenario.from_dict({"name": "bench", "kind": "bench", "seed": 42})
            else:
                scenario = load_scenario(scenario_path)
                if scenario.kind != "bench":
                    raise ScenarioError(f"{scenario_path} is a '{scenario.kind}' scenario; use 'simulate'")
            _run_bench(scenario, out_dir, seed, backends, workers, as_json)

    @cli.command()
    @click.argument("results_dir", type=click.Path(file_okay=False))
    @click.option(
        "--out",
        "out_dir",
        type=click.Path(file_okay=False),
        default=None,
        help="Write report.md and report.csv here instead of printing.",
    )
    def report(results_dir: str, out_dir: Optional[str]) -> None:
        """Re-render the comparison report from RESULTS_DIR/results.json."""
        from .bench import build_report, emit_report, load_results

        with _translate_errors():
            results = load_results(results_dir)
            if out_dir is None:
                click.echo(build_report(results).to_markdown(), nl=False)
                return
            written = emit_report(results, out_dir)
        for path in written.values():
            click.echo(f"wrote {path}")

    # -----------------------------------------------------------------------
    # presets
    # -----------------------------------------------------------------------

    @cli.command()
    @click.option("--json", "as_json", is_flag=True, help="Emit JSON to stdout.")
    def presets(as_json: bool) -> None:
        """List the shipped chain presets."""
        from .chain import available_presets, load_chain_params

        names = available_presets()
        if as_json:
            click.echo(json.dumps({name: load_chain_params(name).to_dict() for name in names}, indent=2))
            return
        for name in names:
            params = load_chain_params(name)
            click.echo(f"{name}: {params.description}" if params.description else name)

else:

    def cli() -> None:  # type: ignore[misc]
        _check_click()


if __name__ == "__main__":
    cli()
