"""
Shared pytest fixtures for the l2sim test suite.
"""

import pytest

from l2sim.chain import WEI_PER_ETH, L1Chain, load_chain_params
from l2sim.channels import ChannelConfig, ChannelNetwork
from l2sim.plasma import PlasmaChain
from l2sim.rollup import RollupContract, RollupOperator, RollupParams


def pytest_configure(config):
    config.addinivalue_line("markers", "property: seeded property suites over many histories")


@pytest.fixture
def bitcoin():
    """Return the bitcoin-2021 chain parameters."""
    return load_chain_params("bitcoin-2021")


@pytest.fixture
def ethereum():
    """Return the ethereum-2021 chain parameters."""
    return load_chain_params("ethereum-2021")


@pytest.fixture
def btc_chain(bitcoin):
    """A Bitcoin-like chain with four funded parties."""
    chain = L1Chain(bitcoin)
    for who in ("alice", "bob", "carol", "dave"):
        chain.fund(who, 1_000_000)
    return chain


@pytest.fixture
def eth_chain(ethereum):
    """An Ethereum-like chain with funded users and operators."""
    chain = L1Chain(ethereum)
    for who in ("alice", "bob", "carol", "operator", "exit-operator", "watcher", "lp"):
        chain.fund(who, 20 * WEI_PER_ETH)
    return chain


@pytest.fixture
def network(btc_chain):
    """A fee-free channel network over :func:`btc_chain`."""
    return ChannelNetwork(btc_chain, ChannelConfig(feerate=0), seed=1)


@pytest.fixture
def plasma(eth_chain):
    """A staked Plasma chain with honest operator ``operator``."""
    chain = PlasmaChain(eth_chain, "operator", seed=1)
    chain.post_stake()
    return chain


def _rollup(chain, mode, fraud_batches=()):
    contract = RollupContract(chain, RollupParams(mode=mode))
    contract.stake("operator")
    prover = contract.setup.authorize("operator") if mode == "zk" else None
    return contract, RollupOperator(contract, "operator", prover, fraud_batches)


@pytest.fixture
def zk_rollup(eth_chain):
    """``(contract, operator)`` of a staked zk rollup."""
    return _rollup(eth_chain, "zk")


@pytest.fixture
def optimistic_rollup(eth_chain):
    """``(contract, operator)`` of a staked optimistic rollup."""
    return _rollup(eth_chain, "optimistic")


@pytest.fixture
def make_rollup():
    """Factory for rollups with a fraud schedule: ``make_rollup(chain, mode, fraud_batches)``."""
    return _rollup
