"""
Scenario files: validated JSON descriptions of scripted simulations.

A scenario names its ``kind`` (``channels``, ``plasma``, ``rollup`` or
``bench``), the L1 chain, genesis funding and a list of actions. Each
action is one protocol operation; invariant checkers run after every action.

Example scenario::

    {
      "name": "ln_cheat",
      "kind": "channels",
      "seed": 7,
      "chain": "bitcoin-2021",
      "accounts": {"alice": 200000, "bob": 200000},
      "actions": [
        {"op": "open", "a": "alice", "b": "bob", "fund_a": 100000, "fund_b": 50000},
        {"op": "direct_pay", "channel": "ch-00000", "payer": "alice", "amount": 30000},
        {"op": "close_unilateral", "channel": "ch-00000", "broadcaster": "alice", "state": 0}
      ]
    }
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .chain import ChainParams, L1Chain, load_chain_params, to_fraction
from .chain._hashing import jsonable
from .channels import ChannelConfig, ChannelNetwork, FeePolicy
from .errors import InvariantViolation, L2SimError, ScenarioError, describe
from .events import EventLog
from .plasma import OperatorBehavior, PlasmaChain, PlasmaConfig
from .rollup import RollupContract, RollupOperator, RollupParams, TrustedSetup, reconstruct_state

logger = logging.getLogger(__name__)

KINDS = ("channels", "plasma", "rollup", "bench")
_TOP_LEVEL_KEYS = {"name", "description", "kind", "seed", "chain", "accounts", "actions", *KINDS}
_DEFAULT_CHAIN = {"channels": "bitcoin-2021", "plasma": "ethereum-2021", "rollup": "ethereum-2021"}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario; build it with :func:`load_scenario` or :meth:`from_dict`."""

    name: str
    kind: str
    seed: int = 0
    chain: Optional[ChainParams] = None
    accounts: Dict[str, int] = field(default_factory=dict)
    actions: List[Dict[str, Any]] = field(default_factory=list)
    section: Dict[str, Any] = field(default_factory=dict)
    description: str = ""

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        """
        Validate *data* and build a scenario.

        Raises:
            ScenarioError: On unknown keys, a missing or unknown kind, a
                section for another kind, or invalid values.
        """
        if not isinstance(data, Mapping):
            raise ScenarioError("a scenario must be a JSON object")
        unknown = set(data) - _TOP_LEVEL_KEYS
        if unknown:
            raise ScenarioError(f"Unknown scenario keys: {', '.join(sorted(unknown))}")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ScenarioError(f"'kind' must be one of {', '.join(KINDS)}, got {kind!r}")
        foreign = [k for k in KINDS if k in data and k != kind]
        if foreign:
            raise ScenarioError(f"Sections {foreign} do not belong to a '{kind}' scenario")

        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ScenarioError(f"'seed' must be a 64-bit unsigned integer, got {seed!r}")
        chain_spec = data.get("chain", _DEFAULT_CHAIN.get(kind))
        try:
            chain = load_chain_params(chain_spec) if chain_spec is not None else None
        except L2SimError as e:
            raise ScenarioError(f"Invalid chain: {e}") from e

        accounts = data.get("accounts", {})
        if not isinstance(accounts, Mapping) or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in accounts.values()
        ):
            raise ScenarioError("'accounts' must map names to non-negative integers")
        actions = data.get("actions", [])
        if not isinstance(actions, list) or not all(isinstance(a, Mapping) and "op" in a for a in actions):
            raise ScenarioError("'actions' must be a list of objects with an 'op' key")
        if kind != "bench":
            allowed = set(_HANDLERS[kind])
            bad = sorted({a["op"] for a in actions} - allowed)
            if bad:
                raise ScenarioError(f"Unknown {kind} actions: {', '.join(bad)}")
        section = data.get(kind, {})
        if not isinstance(section, Mapping):
            raise ScenarioError(f"'{kind}' must be an object")

        return cls(
            name=str(data.get("name", kind)),
            kind=kind,
            seed=seed,
            chain=chain,
            accounts=dict(accounts),
            actions=[dict(a) for a in actions],
            section=dict(section),
            description=str(data.get("description", "")),
        )

    def with_seed(self, seed: Optional[int]) -> "Scenario":
        return self if seed is None else replace(self, seed=seed)


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Read and validate a scenario file.

    Raises:
        ScenarioError: If the file is missing, not JSON, or fails validation.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"Scenario file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"Invalid JSON in scenario file {path}: {e}") from e
    return Scenario.from_dict(data)


# ---------------------------------------------------------------------------
# Simulations
# ---------------------------------------------------------------------------


def _require(action: Mapping[str, Any], *keys: str) -> List[Any]:
    missing = [k for k in keys if k not in action]
    if missing:
        raise ScenarioError(f"action '{action['op']}' is missing {', '.join(missing)}")
    return [action[k] for k in keys]


def _known_keys(data: Mapping[str, Any], allowed: Sequence[str], what: str) -> Dict[str, Any]:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ScenarioError(f"Unknown {what} keys: {', '.join(sorted(unknown))}")
    return dict(data)


class _Simulation:
    """Common driver: genesis funding, the action loop and invariant checks."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.events = EventLog()
        self.chain = L1Chain(scenario.chain, events=self.events)
        for account, amount in sorted(scenario.accounts.items()):
            self.chain.fund(account, amount)

    def check(self) -> None:
        self.chain.assert_invariants()

    def final_state(self) -> Dict[str, Any]:
        return {"l1_height": self.chain.height, "l1_balances": dict(sorted(self.chain.balances().items()))}

    def run(self) -> Dict[str, Any]:
        transcript = []
        handlers = _HANDLERS[self.scenario.kind]
        for step, action in enumerate(self.scenario.actions):
            op = action["op"]
            expected = action.get("expect_error")
            try:
                outcome = handlers[op](self, action)
            except ScenarioError:
                raise
            except (L2SimError, ValueError, LookupError) as e:
                if expected != type(e).__name__:
                    if isinstance(e, L2SimError):
                        raise
                    raise ScenarioError(f"step {step} ({op}) failed: {e}") from e
                outcome = {"error": describe(e)}
                logger.info("Step %d (%s) failed as expected: %s", step, op, describe(e))
            else:
                if expected is not None:
                    raise ScenarioError(f"step {step} ({op}) was expected to raise {expected}")
            self.events.emit("scenario", "step", step=step, op=op)
            self.check()
            transcript.append({"step": step, "op": op, "result": jsonable(outcome)})
        return {
            "name": self.scenario.name,
            "kind": self.scenario.kind,
            "seed": self.scenario.seed,
            "steps": transcript,
            "final": jsonable(self.final_state()),
            "invariants": "ok",
        }


class _ChannelSimulation(_Simulation):
    def __init__(self, scenario: Scenario):
        super().__init__(scenario)
        section = _known_keys(scenario.section, ("config",), "channels")
        try:
            config = ChannelConfig(**section.get("config", {}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"Invalid channel config: {e}") from e
        self.network = ChannelNetwork(self.chain, config, scenario.seed)

    def check(self) -> None:
        self.network.assert_invariants()

    def final_state(self) -> Dict[str, Any]:
        state = super().final_state()
        state["channels"] = {
            cid: {"status": ch.status, "balances": {ch.party_a: ch.balance_a, ch.party_b: ch.balance_b}}
            for cid, ch in sorted(self.network.channels.items())
        }
        return state

    def open(self, action):
        a, b, fund_a = _require(action, "a", "b", "fund_a")
        policies = {
            key: FeePolicy(**action[key]) if key in action else None for key in ("policy_a", "policy_b")
        }
        channel = self.network.open_channel(a, b, fund_a, action.get("fund_b", 0), **policies)
        return {"channel": channel.id}

    def direct_pay(self, action):
        channel, payer, amount = _require(action, "channel", "payer", "amount")
        return {"state": self.network.direct_pay(channel, payer, amount).state_number}

    def pay(self, action):
        src, dst, amount = _require(action, "src", "dst", "amount")
        result = self.network.pay(src, self.network.create_invoice(dst, amount))
        return {
            "success": result.success,
            "route": list(result.route.nodes) if result.route else None,
            "failed_at_hop": result.failed_at_hop,
            "fee": result.fee_paid,
        }

    def set_online(self, action):
        node, online = _require(action, "node", "online")
        self.network.set_online(node, bool(online))

    def register_monitor(self, action):
        channel, party, reward = _require(action, "channel", "party", "reward")
        return {"monitor": self.network.register_monitor(channel, party, reward, action.get("name")).name}

    def close_unilateral(self, action):
        channel, broadcaster = _require(action, "channel", "broadcaster")
        pending = self.network.close_unilateral(channel, broadcaster, action.get("state"))
        return {"stale": pending.stale, "status": self.network.channel(channel).status}

    def close_cooperative(self, action):
        (channel,) = _require(action, "channel")
        self.network.close_cooperative(channel)
        return {"payouts": self.network.channel(channel).outcome.payouts}

    def penalize(self, action):
        channel, claimant = _require(action, "channel", "claimant")
        return {"payouts": self.network.penalize_cheat(channel, claimant).payouts}

    def advance_blocks(self, action):
        self.chain.advance_blocks(int(action.get("count", 1)))
        return {"height": self.chain.height}


class _PlasmaSimulation(_Simulation):
    def __init__(self, scenario: Scenario):
        super().__init__(scenario)
        section = _known_keys(scenario.section, ("config", "operator"), "plasma")
        try:
            config = PlasmaConfig(**section.get("config", {}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"Invalid plasma config: {e}") from e
        self.plasma = PlasmaChain(self.chain, section.get("operator", "operator"), config, scenario.seed)

    def check(self) -> None:
        self.plasma.assert_invariants()

    def final_state(self) -> Dict[str, Any]:
        state = super().final_state()
        state["child_height"] = self.plasma.height
        state["child_balances"] = dict(sorted(self.plasma.live.by_owner().items()))
        state["missing_blocks"] = self.plasma.missing_blocks()
        state["halted"] = self.plasma.halted
        return state

    def post_stake(self, action):
        self.plasma.post_stake(action.get("amount"))

    def deposit(self, action):
        user, amount = _require(action, "user", "amount")
        return {"outpoint": self.plasma.deposit(user, amount).outpoint.label()}

    def pay(self, action):
        owner, recipient, amount = _require(action, "owner", "recipient", "amount")
        return {"tx": self.plasma.pay(owner, recipient, amount, action.get("fee", 0)).id}

    def produce_block(self, action):
        blocks = [self.plasma.produce_and_commit() for _ in range(int(action.get("count", 1)))]
        return {"heights": [b.height for b in blocks], "withheld": [b.height for b in blocks if b.withheld]}

    def set_behavior(self, action):
        (behavior,) = _require(action, "behavior")
        self.plasma.set_behavior(OperatorBehavior(behavior))

    def start_exit(self, action):
        (user,) = _require(action, "user")
        owned = sorted(self.plasma.available.owned_by(user), key=lambda u: u.outpoint)
        if not owned:
            raise ScenarioError(f"{user} owns no published output to exit")
        request = self.plasma.start_exit(user, owned[0])
        return {"exit_id": request.exit_id, "deadline": request.deadline}

    def challenge_all(self, action):
        (challenger,) = _require(action, "challenger")
        return {"cancelled": [r.exit_id for r in self.plasma.challenge_all(challenger)]}

    def finalize_exits(self, action):
        due = [r for r in self.plasma.contract.pending_exits() if self.chain.now >= r.deadline]
        return {"finalized": [self.plasma.finalize_exit(r.exit_id).exit_id for r in due]}

    def submit_fraud_proof(self, action):
        prover, height, index = _require(action, "prover", "height", "tx_index")
        return {"slashed": self.plasma.submit_fraud_proof(prover, height, index)}

    def mass_exit(self, action):
        participants, exit_operator = _require(action, "participants", "exit_operator")
        report = self.plasma.mass_exit(participants, exit_operator, action.get("fee_per_user", 0))
        return None if report is None else report.to_dict()

    def finalize_mass_exit(self, action):
        return {"credited": self.plasma.finalize_mass_exit()}

    def advance(self, action):
        (seconds,) = _require(action, "seconds")
        self.chain.advance(to_fraction(seconds, "seconds"))
        return {"now": self.chain.now}


class _RollupSimulation(_Simulation):
    def __init__(self, scenario: Scenario):
        super().__init__(scenario)
        section = _known_keys(scenario.section, ("params", "publisher", "fraud_batches"), "rollup")
        try:
            params = RollupParams(**section.get("params", {}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"Invalid rollup params: {e}") from e
        setup = TrustedSetup(np.random.default_rng(scenario.seed))
        self.contract = RollupContract(self.chain, params, setup)
        self.publisher = section.get("publisher", "operator")
        prover = setup.authorize(self.publisher) if params.is_zk else None
        self.operator = RollupOperator(self.contract, self.publisher, prover, section.get("fraud_batches", ()))

    def check(self) -> None:
        if not self.contract.check_conservation():
            raise InvariantViolation("rollup: value not conserved between deposits, balances and withdrawals")
        if not self.contract.check_root_chain():
            raise InvariantViolation("rollup: live batches do not chain from the empty root")
        self.chain.assert_invariants()

    def final_state(self) -> Dict[str, Any]:
        state = super().final_state()
        replayed = reconstruct_state(self.contract)
        state["batches"] = [b.to_record() for b in self.contract.batches]
        state["rollup_balances"] = replayed.balances()
        state["state_root"] = replayed.root
        state["finalized_root"] = self.contract.finalized_root
        state["root_matches"] = replayed.root == self.contract.current_root
        return state

    def stake(self, action):
        self.contract.stake(action.get("publisher", self.publisher), action.get("amount"))

    def deposit(self, action):
        user, amount = _require(action, "user", "amount")
        return {"tx": self.contract.deposit(user, amount).id}

    def transfer(self, action):
        sender, recipient, amount = _require(action, "sender", "recipient", "amount")
        receipt = self.operator.submit_transfer(sender, recipient, amount, action.get("fee"))
        return {"submitted_at": receipt.submitted_at}

    def withdraw(self, action):
        user, amount = _require(action, "user", "amount")
        return {"submitted_at": self.operator.request_withdrawal(user, amount, action.get("fee")).submitted_at}

    def seal(self, action):
        batch = self.operator.seal_batch(bool(action.get("allow_empty", False)))
        return None if batch is None else {"batch": batch.index, "new_root": batch.new_root}

    def produce_blocks(self, action):
        self.chain.advance_blocks(int(action.get("count", 1)))
        return {"height": self.chain.height}

    def challenge(self, action):
        batch, challenger = _require(action, "batch", "challenger")
        return self.contract.challenge_batch(int(batch), challenger)

    def advance(self, action):
        (seconds,) = _require(action, "seconds")
        self.chain.advance(to_fraction(seconds, "seconds"))
        return {"now": self.chain.now}


def _ops(cls: type, names: Sequence[str]) -> Dict[str, Callable[[Any, Mapping[str, Any]], Any]]:
    return {name: getattr(cls, name) for name in names}


_HANDLERS: Dict[str, Dict[str, Callable[[Any, Mapping[str, Any]], Any]]] = {
    "channels": _ops(
        _ChannelSimulation,
        (
            "open",
            "direct_pay",
            "pay",
            "set_online",
            "register_monitor",
            "close_unilateral",
            "close_cooperative",
            "penalize",
            "advance_blocks",
        ),
    ),
    "plasma": _ops(
        _PlasmaSimulation,
        (
            "post_stake",
            "deposit",
            "pay",
            "produce_block",
            "set_behavior",
            "start_exit",
            "challenge_all",
            "finalize_exits",
            "submit_fraud_proof",
            "mass_exit",
            "finalize_mass_exit",
            "advance",
        ),
    ),
    "rollup": _ops(
        _RollupSimulation,
        ("stake", "deposit", "transfer", "withdraw", "seal", "produce_blocks", "challenge", "advance"),
    ),
}
_SIMULATIONS = {"channels": _ChannelSimulation, "plasma": _PlasmaSimulation, "rollup": _RollupSimulation}


@dataclass
class SimulationResult:
    summary: Dict[str, Any]
    events: EventLog

    def write(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        """Write ``events.jsonl`` and ``summary.json`` into *out_dir*."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary_path = out / "summary.json"
        with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return {"events.jsonl": self.events.write(out / "events.jsonl"), "summary.json": summary_path}


def run_scenario(scenario: Scenario) -> SimulationResult:
    """
    Run a ``channels``, ``plasma`` or ``rollup`` scenario to completion.

    Raises:
        ScenarioError: For ``bench`` scenarios or malformed actions.
        InvariantViolation: If a checker fails after any action.
        L2SimError: If an action fails without a matching ``expect_error``.
    """
    if scenario.kind not in _SIMULATIONS:
        raise ScenarioError(f"'{scenario.kind}' scenarios run through the bench command")
    simulation = _SIMULATIONS[scenario.kind](scenario)
    logger.info("Running scenario '%s' (%d actions)", scenario.name, len(scenario.actions))
    summary = simulation.run()
    return SimulationResult(summary, simulation.events)


def bench_settings(scenario: Scenario) -> Dict[str, Any]:
    """
    The backends, workload and config of a ``bench`` scenario section.

    Without a ``backends`` list every L2 backend runs; ``l1-direct`` is
    opt-in.

    Raises:
        ScenarioError: On unknown keys or invalid values.
    """
    from .bench import BACKENDS, L2_BACKENDS, BenchConfig, WorkloadSpec

    section = _known_keys(scenario.section, ("backends", "workload", "config"), "bench")
    backends = list(section.get("backends", L2_BACKENDS))
    unknown = [b for b in backends if b not in BACKENDS]
    if unknown or not backends:
        raise ScenarioError(f"Unknown or missing backends: {unknown}")
    workload = dict(section.get("workload", {}))
    workload.setdefault("seed", scenario.seed)
    try:
        spec = WorkloadSpec.from_dict(workload)
        config = BenchConfig.from_dict(section.get("config", {}))
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"Invalid bench section: {e}") from e
    return {"backends": backends, "spec": spec, "config": config}
