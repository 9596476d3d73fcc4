"""
Shared test utilities for the l2sim test suite.

Independent re-implementations used as oracles against the package.
"""

from collections import defaultdict

from l2sim.chain._hashing import hash_leaf, hash_node


def leaves(n, tag="leaf"):
    """*n* distinct leaf hashes."""
    return [hash_leaf(f"{tag}-{i}".encode()) for i in range(n)]


def naive_merkle_root(nodes):
    """Recursive merkle root: pad odd levels by repeating the last node."""
    if len(nodes) == 1:
        return nodes[0]
    if len(nodes) % 2:
        nodes = list(nodes) + [nodes[-1]]
    return naive_merkle_root([hash_node(nodes[i], nodes[i + 1]) for i in range(0, len(nodes), 2)])


def replay_utxo_balances(txs):
    """Owner balances after applying Plasma transactions to an empty output set."""
    outputs = {}
    for tx in txs:
        for tx_input in tx.inputs:
            del outputs[tx_input.outpoint]
        for utxo in tx.created():
            outputs[utxo.outpoint] = utxo
    balances = defaultdict(int)
    for utxo in outputs.values():
        balances[utxo.owner] += utxo.amount
    return dict(balances)


def replay_channel(fund_a, fund_b, payments):
    """Channel balances after ``(payer_is_a, amount)`` payments."""
    a, b = fund_a, fund_b
    for payer_is_a, amount in payments:
        if payer_is_a:
            a, b = a - amount, b + amount
        else:
            a, b = a + amount, b - amount
    return a, b


def replay_accounts(deposits, txs, fee_recipient):
    """Rollup balances after ``(account, amount)`` deposits and then *txs*."""
    balances = defaultdict(int)
    for account, amount in deposits:
        balances[account] += amount
    for tx in txs:
        balances[tx.sender] -= tx.amount + tx.fee
        if tx.fee:
            balances[fee_recipient] += tx.fee
        if not tx.is_withdrawal:
            balances[tx.recipient] += tx.amount
    return dict(balances)


def run_cli(args):
    """Invoke the l2sim CLI in-process and return click's result."""
    from click.testing import CliRunner

    from l2sim.cli import cli

    return CliRunner().invoke(cli, args)
