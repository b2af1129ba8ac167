"""Validator truth table, enumerated by hand from the admissibility rules."""

import pytest

from mrlab.params import (CompatibilityMode, ParamSet, compatibility_mode,
                          power_weight_in_Ap, trace_space_orders,
                          validate_domain_trace, validate_halfspace_trace,
                          validate_heat_theorem)

# (kwargs, expected verdict), half-space trace
HALFSPACE_CASES = [
    (dict(p=2, q=2, gamma=0.5, k1=1, m=0), True),
    (dict(p=2, q=2, gamma=1.0, k1=1, m=0), False),   # gamma = upper = p-1
    (dict(p=2, q=2, gamma=-1.0, k1=1, m=0), False),  # gamma = lower edge
    (dict(p=2, q=2, gamma=3.0, k1=2, m=0), False),   # gamma = 2p-1 line
    (dict(p=2, q=2, gamma=2.9, k1=2, m=0), True),
    (dict(p=2, q=2, gamma=0.5, k1=1, m=1), False),   # budget k1 <= m
    (dict(p=2, q=2, gamma=0.5, k1=2, m=1), True),
    (dict(p=2, q=2, gamma=0.5, mu=2.0, k1=1, m=0), False),  # mu >= q-1
    (dict(p=1.5, q=2, gamma=0.0, k1=1, m=0), True),
    (dict(p=1.5, q=2, gamma=0.5, k1=2, m=0), False),  # gamma = p-1
    (dict(p=2, q=2, gamma=1.0 + 1e-13, k1=2, m=0), False),  # within tol
    (dict(p=2, q=2, gamma=1.0 + 1e-9, k1=2, m=0), True),    # outside tol
]

# domain trace with a C^{r,kappa} graph
DOMAIN_CASES = [
    (dict(p=2, q=2, gamma=2.0, kappa=0.9, k1=2, m=0, r=1), True),
    (dict(p=2, q=2, gamma=2.0, kappa=0.9, k1=1, m=0, r=1), False),  # k1<r+k
    (dict(p=2, q=2, gamma=0.5, kappa=0.5, k1=2, m=1, r=1), True),
    (dict(p=2, q=2, gamma=0.5, kappa=0.5, k1=3, m=2, r=1), False),  # r+k<=m
    (dict(p=2, q=2, gamma=0.0, kappa=0.5, k1=2, m=1, r=1), False),  # lower
    (dict(p=2, q=2, gamma=1.0, kappa=0.9, k1=2, m=0, r=1), False),  # p-1 hit
    (dict(p=3, q=2, gamma=4.9, kappa=0.9, k1=2, m=0, r=1), True),
]

# heat theorem at its fixed scaling
HEAT_CASES = [
    (dict(p=2, q=2, gamma=0.5, mu=0.0, kappa=0.9), True),
    (dict(p=2, q=2, gamma=1.0, mu=0.0, kappa=0.9), False),   # gamma = p-1
    (dict(p=2, q=2, gamma=3.0, mu=0.0, kappa=0.9), False),   # gamma = 2p-1
    (dict(p=2, q=2, gamma=-0.5, mu=0.0, kappa=0.5), False),  # below lower
    (dict(p=2, q=2, gamma=0.0, mu=0.5, kappa=0.9), False),   # critical line
    (dict(p=2, q=2, gamma=0.0, mu=0.49, kappa=0.9), True),
    (dict(p=2, q=2, gamma=0.5, mu=-1.0, kappa=0.9), False),  # mu edge
    (dict(p=2, q=4, gamma=2.0, mu=0.0, kappa=0.9), False),   # critical again
    (dict(p=2, q=4, gamma=2.0, mu=1.0, kappa=0.9), True),
]


def test_halfspace_truth_table():
    for kwargs, expect in HALFSPACE_CASES:
        rep = validate_halfspace_trace(ParamSet(**kwargs))
        print(kwargs, "->", rep.verdict, rep.violated_conditions)
        assert rep.verdict == expect, kwargs
        assert rep.theorem == "halfspace-trace"
        if not expect:
            assert rep.violated_conditions


def test_domain_truth_table():
    for kwargs, expect in DOMAIN_CASES:
        rep = validate_domain_trace(ParamSet(**kwargs))
        print(kwargs, "->", rep.verdict, rep.violated_conditions)
        assert rep.verdict == expect, kwargs


def test_heat_truth_table():
    for kwargs, expect in HEAT_CASES:
        rep = validate_heat_theorem(ParamSet(**kwargs))
        print(kwargs, "->", rep.verdict, rep.violated_conditions)
        assert rep.verdict == expect, kwargs


def test_excluded_hits_reported():
    rep = validate_halfspace_trace(ParamSet(p=2, q=2, gamma=3.0, k1=3, m=0))
    # gamma = 3 = 2p - 1 sits on the j = 2 line
    assert rep.excluded_set_hits == (2,)
    rep = validate_halfspace_trace(ParamSet(p=2, q=2, gamma=1.0, k1=3, m=0))
    assert rep.excluded_set_hits == (1,)


def test_compatibility_modes():
    assert compatibility_mode(ParamSet(p=2, q=2, gamma=0.0, mu=0.5)) \
        is CompatibilityMode.Critical
    assert compatibility_mode(ParamSet(p=2, q=2, gamma=2.0, mu=0.0)) \
        is CompatibilityMode.NoConditionAtZero
    assert compatibility_mode(ParamSet(p=2, q=2, gamma=-0.5, mu=0.0)) \
        is CompatibilityMode.RequireGZeroAtZero


def test_trace_space_orders():
    ps = ParamSet(p=2, q=2, gamma=0.5, k1=2, ell=1, m=1)
    # by hand: time = ell - (ell/k1)(j + (gamma+1)/p), space = k1-j-(gamma+1)/p
    assert trace_space_orders(ps, 0) == (0.625, 1.25)
    assert trace_space_orders(ps, 1) == (0.125, 0.25)
    with pytest.raises(ValueError):
        trace_space_orders(ps, 2)


def test_power_weight_window():
    assert power_weight_in_Ap(0.5, 2)
    assert not power_weight_in_Ap(1.0, 2)   # boundary excluded
    assert not power_weight_in_Ap(-1.0, 2)
    assert power_weight_in_Ap(2.9, 4)


def test_paramset_rejects_bad_values():
    for kwargs in (dict(p=1.0, q=2, gamma=0.0),
                   dict(p=2, q=1.0, gamma=0.0),
                   dict(p=2, q=2, gamma=0.0, kappa=1.0),
                   dict(p=2, q=2, gamma=0.0, kappa=-0.1),
                   dict(p=2, q=2, gamma=0.0, k1=0),
                   dict(p=2, q=2, gamma=0.0, m=-1),
                   dict(p=2, q=2, gamma=0.0, k=0.5)):
        with pytest.raises(ValueError):
            ParamSet(**kwargs)


def test_report_json_deterministic():
    rep = validate_heat_theorem(ParamSet(p=2, q=2, gamma=1.0))
    a = rep.to_json()
    b = validate_heat_theorem(ParamSet(p=2, q=2, gamma=1.0)).to_json()
    assert a == b
    assert '"theorem"' in a
