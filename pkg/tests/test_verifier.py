import warnings

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manet_auction.mechanism import MechanismTables, build_tables, payments_for_allocation
from manet_auction.typespace import AgentType, single_bin
from manet_auction.verifier import (
    NonMonotoneAllocationError,
    adjacent_report,
    brute_force_ic_check,
    check_adjacent_implies_all,
    check_allocation_monotonic,
    check_monotone_iff_ic,
    ic_report,
    ic_u_binding_gap,
    invert_cost_pair,
    longest_path_payment_oracle,
    longest_path_payments,
    monte_carlo_auction,
    random_monotone_allocation,
    random_non_mhr_space,
    random_type_space,
)

T = AgentType


@pytest.fixture
def two_cost_tables():
    return build_tables(single_bin([1, 2], ["0.5", "0.5"]), 2)


def with_p(tables, p):
    return MechanismTables(tables.type_space, tables.n_bidders, tables.vv, tables.vv_level, tables.a, p, True)


def test_two_cost_passes_and_binds(two_cost_tables):
    rep = brute_force_ic_check(two_cost_tables)
    assert rep.passed
    # cost-1 type reporting cost 2: 0.5 - 1*0.25 = 0.25, same as truthful 1.0 - 0.75
    assert rep.utility[0, 0] == pytest.approx(0.25)
    assert two_cost_tables.p[1, 0] - 1 * two_cost_tables.a[1, 0] == pytest.approx(0.25)


def test_perturbed_payment_is_caught(two_cost_tables):
    p = two_cost_tables.p.copy()
    p[0, 0] -= 0.1
    rep = brute_force_ic_check(with_p(two_cost_tables, p))
    assert not rep.passed
    assert rep.max_violation_magnitude == pytest.approx(0.1)
    assert rep.ic_violations[0][:2] == (T(1, 0), T(2, 0))


def test_ir_violation_reported(two_cost_tables):
    p = two_cost_tables.p.copy()
    p[1, 0] = 0.0
    rep = brute_force_ic_check(with_p(two_cost_tables, p))
    assert rep.ir_violations


def test_single_type_is_vacuous():
    tb = build_tables(single_bin([3], ["1"]), 4)
    assert brute_force_ic_check(tb).passed
    assert check_adjacent_implies_all(tb)
    assert check_allocation_monotonic(tb)[0]


def test_oracle_two_cost(two_cost_tables):
    assert longest_path_payment_oracle(two_cost_tables)[:, 0] == pytest.approx([1.0, 0.5])


def test_monotonic_examples():
    ok, bad = check_allocation_monotonic(np.array([[0.1], [0.9]]), [1, 2])
    assert not ok and bad == [(T(1, 0), T(2, 0))]
    assert check_allocation_monotonic(np.full((3, 4), 0.3))[0]


def test_corrupted_adjacent_payment_fails_full_check():
    tb = build_tables(random_type_space(np.random.default_rng(3), kind="uniform"), 3)
    p = tb.p.copy()
    p[0, 0] -= 0.5
    bad = with_p(tb, p)
    assert not adjacent_report(tb.type_space.cost_grid, tb.a, p).passed
    assert not brute_force_ic_check(bad).passed


def test_non_monotone_allocation_has_positive_cycle():
    a = np.array([[0.2], [0.6]])
    with pytest.raises(NonMonotoneAllocationError, match="non-monotone allocation"):
        longest_path_payments([1, 2], a)


def test_monotone_iff_ic_examples():
    rng = np.random.default_rng(1)
    a = random_monotone_allocation(rng, (4, 3))
    costs = [1, 2, 3, 4]
    assert ic_report(costs, a, payments_for_allocation(costs, a)).passed
    inv = invert_cost_pair(rng, a)
    assert not check_allocation_monotonic(inv, costs)[0]
    assert not ic_report(costs, inv, payments_for_allocation(costs, inv)).passed
    const = np.full((4, 3), 0.5)
    assert ic_report(costs, const, payments_for_allocation(costs, const)).passed


def test_monotone_iff_ic_on_random_spaces():
    rng = np.random.default_rng(8)
    for _ in range(10):
        assert check_monotone_iff_ic(random_type_space(rng), int(rng.integers(1, 6)), samples=8, rng=rng)


def nx_longest_paths(cost_grid, a):
    """Longest paths from the dummy vertex with networkx on negated weights (DAG when only upward edges)."""
    nc, nb = a.shape
    g = nx.DiGraph()
    g.add_edge("s", (nc - 1, 0), weight=-cost_grid[-1] * a[nc - 1, 0])
    for i in range(nc):
        for j in range(nb):
            c = cost_grid[i]
            if i + 1 < nc:
                g.add_edge((i + 1, j), (i, j), weight=-c * (a[i, j] - a[i + 1, j]))
            if j > 0:
                g.add_edge((i, j - 1), (i, j), weight=-c * (a[i, j] - a[i, j - 1]))
    dist = nx.single_source_bellman_ford_path_length(g, "s")
    return np.array([[-dist[(i, j)] for j in range(nb)] for i in range(nc)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_agrees_with_networkx(seed):
    rng = np.random.default_rng(seed)
    ts = random_type_space(rng)
    tb = build_tables(ts, int(rng.integers(1, 7)))
    ref = nx_longest_paths(ts.cost_grid, tb.a)
    assert np.allclose(longest_path_payment_oracle(tb), ref, atol=1e-12)
    assert np.allclose(longest_path_payment_oracle(tb, include_downward=True), ref, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_mhr_tables_pass_every_check(seed):
    rng = np.random.default_rng(seed)
    ts = random_type_space(rng)
    tb = build_tables(ts, int(rng.integers(1, 7)))
    assert tb.monotone_hazard
    assert brute_force_ic_check(tb).passed
    assert check_allocation_monotonic(tb)[0]
    assert ic_u_binding_gap(tb) <= 1e-12
    assert check_adjacent_implies_all(tb)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_non_monotone_allocation_always_fails_ic(seed):
    rng = np.random.default_rng(seed)
    ts = random_non_mhr_space(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tb = build_tables(ts, int(rng.integers(2, 7)))
    if not check_allocation_monotonic(tb)[0]:
        assert not brute_force_ic_check(tb).passed


def test_monte_carlo_matches_two_cost(two_cost_tables):
    est = monte_carlo_auction(two_cost_tables, T(1, 0), 20_000, np.random.default_rng(0))
    assert abs(est.win_rate - 0.75) <= 3 * est.win_se
    assert abs(est.mean_payment - 1.0) <= 3 * est.payment_se


def test_report_serializes(two_cost_tables):
    doc = brute_force_ic_check(two_cost_tables).to_dict()
    assert doc["passed"] is True and doc["violations"] == []
