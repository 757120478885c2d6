from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.corpus import weight_corpus
from mwlab.grid import GridGeometry
from mwlab.lemmas import (GridSpec, bownik_sweep, conj, holder_mccarthy_sweep,
                          param_conjugate_bound, param_lemma_checks, param_power_bound,
                          param_second, param_split_identity, rh_check_weight)

F = Fraction
grid_values = st.integers(1, 64).map(lambda k: 1 + F(k, 8))


def test_conjugate_bound_example():
    lhs, closed, bound = param_conjugate_bound(F(2), F(2))
    assert lhs == closed == 3 and bound == 4


def test_split_identity_example():
    a, b = param_split_identity(F(2), F(2))
    assert a == b == F(3, 4)
    assert 1 / conj(F(2)) == F(1, 2)


def test_beta_conjugate_example():
    beta_conj, value, bound = param_power_bound(F(2), F(2), 3, 1)
    assert beta_conj == 4
    assert value <= bound


def test_second_lemma_closed_form_large_tau_delta():
    gap, il, ir, value, closed, bound = param_second(F(2), 8, 16)
    assert gap > 0 and il == ir and value == closed
    assert value <= bound


def test_second_lemma_conclusion_exact_value():
    # value = (2p - 1) tau delta + 2p, above 2 p tau delta once tau delta < 2p
    gap, il, ir, value, closed, bound = param_second(F(2), 3, 1)
    assert gap == F(2, 13) and il == ir
    assert value == closed == 13
    assert bound == 12


@given(grid_values, st.sampled_from([3, 4, 8]), st.sampled_from([1, 2, 4, 16]))
def test_second_lemma_value_formula(p, tau, delta):
    gap, il, ir, value, closed, bound = param_second(p, tau, delta)
    assert il == ir
    assert closed == (2 * p - 1) * tau * delta + 2 * p
    if gap > 0:
        assert value == closed
        assert (value <= bound) == (tau * delta >= 2 * p)


@given(grid_values, grid_values)
def test_first_lemma_claims(rho, beta):
    lhs, closed, bound = param_conjugate_bound(rho, beta)
    assert lhs == closed and lhs <= bound
    a, b = param_split_identity(rho, beta)
    assert a == b


def test_param_grid_report():
    rep = param_lemma_checks(GridSpec(k_max=16, den=8, taus=(3, 8), kappas=(1, 16)))
    by = {c.claim: c for c in rep.claims}
    for name, c in by.items():
        if name != "(iv) (p'/(s (p beta)'))' <= 2 p tau delta":
            assert c.passed, name
    bad = by["(iv) (p'/(s (p beta)'))' <= 2 p tau delta"]
    assert bad.violations
    for v in bad.violations:
        p, td = F(v["point"]["p"]), int(v["point"]["tau"]) * int(v["point"]["delta"])
        assert td < 2 * p
        assert F(v["value"]) == (2 * p - 1) * td + 2 * p
    assert rep.points > 1000


def test_full_grid_size():
    g = GridSpec()
    assert len(g.values()) == 64
    assert g.values()[0] == F(9, 8) and g.values()[-1] == 9


@pytest.mark.parametrize("sweep", [bownik_sweep, holder_mccarthy_sweep])
def test_spd_sweeps_small(sweep):
    rep = sweep(pairs=800, seed=3)
    assert rep.violations == 0
    assert rep.checks == 800 * 9
    assert rep.worst_ratio <= 1 + 1e-9


def test_bownik_sweep_deterministic():
    a = bownik_sweep(pairs=100, seed=1)
    b = bownik_sweep(pairs=100, seed=1)
    assert a.worst_ratio == b.worst_ratio


@pytest.mark.parametrize("geo", [GridGeometry(1, 6), GridGeometry(2, 3)], ids=["d1", "d2"])
def test_reverse_holder_on_corpus(geo):
    for W in weight_corpus(geo, 2):
        rec = rh_check_weight(W, 2.0)
        assert rec.scalar_worst <= 2.0
        assert rec.matrix_worst <= 2 * W.n
        assert rec.passed
