import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgi_randomness.core.bounds import canonical_strategy
from lgi_randomness.core.qubit import (
    closed_form_batch,
    conditional_probability,
    correlators_from_joint,
    density_from_bloch,
    derived_quantities,
    joint_prob_trace,
    lgi_from_correlators,
    min_entropy,
    nsit_from_probabilities,
    povm_elements,
    probability_table,
    random_strategy,
    random_strategy_batch,
    single_prob_trace,
    trace_batch,
    unitary_from_params,
)
from lgi_randomness.core.types import (
    OUTCOMES,
    PAIRS,
    BlochVector,
    PovmParams,
    Strategy,
    StrategyBatch,
    UnitaryParams,
)
from lgi_randomness.errors import InvalidParameterError, ZeroMarginalError


def make_strategy(**overrides):
    base = {
        "nx": 0.0, "ny": 0.0, "nz": 0.0,
        "x1": 0.0, "y1": 0.0, "z1": 0.0,
        "x2": 0.0, "y2": 0.0, "z2": 0.0,
        "a": 0.0, "b": 1.0,
    }
    base.update(overrides)
    return Strategy.from_flat(base)


def deterministic_strategy():
    return make_strategy(nz=1.0)


@st.composite
def strategies(draw):
    angle = st.floats(-math.pi, math.pi, allow_nan=False)
    radius = draw(st.floats(0.0, 1.0))
    polar = draw(st.floats(0.0, math.pi))
    azimuth = draw(angle)
    b = draw(st.floats(0.0, 1.0))
    u = draw(st.floats(-1.0, 1.0))
    return make_strategy(
        nx=radius * math.sin(polar) * math.cos(azimuth),
        ny=radius * math.sin(polar) * math.sin(azimuth),
        nz=radius * math.cos(polar),
        x1=draw(angle), y1=draw(angle), z1=draw(angle),
        x2=draw(angle), y2=draw(angle), z2=draw(angle),
        a=u * (1.0 - b), b=b,
    )


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


def test_density_examples():
    assert np.allclose(density_from_bloch(BlochVector(0, 0, 0)), np.eye(2) / 2)
    assert np.allclose(density_from_bloch(BlochVector(0, 0, 1)), np.diag([1, 0]))
    assert np.allclose(density_from_bloch(BlochVector(1, 0, 0)), [[0.5, 0.5], [0.5, 0.5]])


def test_density_rejects_long_bloch_vector():
    with pytest.raises(InvalidParameterError):
        BlochVector(1.0, 0.1, 0.0)


def test_unitary_examples():
    assert np.allclose(unitary_from_params(UnitaryParams(0, 0, 0)), np.eye(2))
    assert np.allclose(unitary_from_params(UnitaryParams(0, 0, math.pi / 2)), [[0, 1], [-1, 0]])
    assert np.allclose(unitary_from_params(UnitaryParams(math.pi / 2, 0, 0)), np.diag([1j, -1j]))


def test_unitary_is_unitary():
    rng = np.random.default_rng(11)
    for x, y, z in rng.uniform(-10, 10, size=(50, 3)):
        u = unitary_from_params(UnitaryParams(x, y, z))
        assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


def test_unitary_angles_are_wrapped():
    p = UnitaryParams(3 * math.pi + 0.25, -7.0, 0.5)
    assert -math.pi <= p.x <= math.pi
    assert -math.pi <= p.y <= math.pi
    same = UnitaryParams(math.pi + 0.25, -7.0, 0.5)
    assert np.allclose(unitary_from_params(p), unitary_from_params(same))


def test_povm_examples():
    plus, minus = povm_elements(PovmParams(0, 1))
    assert np.allclose(plus, np.diag([1, 0]))
    assert np.allclose(minus, np.diag([0, 1]))

    plus, minus = povm_elements(PovmParams(0, 0))
    assert np.allclose(plus, np.eye(2) / 2)
    assert np.allclose(minus, np.eye(2) / 2)

    plus, minus = povm_elements(PovmParams(0.5, 0.5))
    assert np.allclose(plus, np.diag([1, 0.5]))
    assert np.allclose(minus, np.diag([0, 0.5]))
    assert np.array_equal(plus + minus, np.eye(2))


def test_povm_rejects_invalid_parameters():
    with pytest.raises(InvalidParameterError):
        PovmParams(0.6, 0.5)
    with pytest.raises(InvalidParameterError):
        PovmParams(0.0, -0.1)


# ---------------------------------------------------------------------------
# Trace oracle against closed forms
# ---------------------------------------------------------------------------


def test_closed_form_matches_trace_oracle_on_random_strategies():
    batch = random_strategy_batch(np.random.default_rng(2024), 10_000)
    traced = trace_batch(batch)
    cf = closed_form_batch(batch)
    for pair in PAIRS:
        for a in OUTCOMES:
            for b in OUTCOMES:
                assert np.max(np.abs(cf.joint[pair][(a, b)] - traced[(pair, a, b)])) < 1e-12
    for time in (1, 2, 3):
        for a in OUTCOMES:
            assert np.max(np.abs(cf.singles[time][a] - traced[(time, a)])) < 1e-12


def test_scalar_trace_matches_table():
    s = random_strategy(np.random.default_rng(5))
    table = probability_table(s)
    for pair, a, b, value in table.entries():
        assert joint_prob_trace(s, pair, a, b) == pytest.approx(value, abs=1e-12)
    for time in (1, 2, 3):
        assert single_prob_trace(s, time, 1) == pytest.approx(table.singles[time][1], abs=1e-12)


def test_trace_rejects_invalid_labels():
    s = make_strategy()
    with pytest.raises(InvalidParameterError):
        joint_prob_trace(s, (2, 1), 1, 1)
    with pytest.raises(InvalidParameterError):
        joint_prob_trace(s, (1, 2), 0, 1)


def test_trace_examples():
    assert joint_prob_trace(canonical_strategy(0.5), (1, 2), 1, 1) == pytest.approx(0.375)
    pure = deterministic_strategy()
    assert joint_prob_trace(pure, (1, 2), -1, 1) == pytest.approx(0.0, abs=1e-15)
    assert joint_prob_trace(pure, (1, 2), -1, -1) == pytest.approx(0.0, abs=1e-15)


def test_pair_23_without_measurement_strength_factorizes():
    s = make_strategy(nx=0.3, ny=-0.2, nz=0.4, x1=0.7, y1=0.1, z1=0.9, z2=0.4, a=0.2, b=0.0)
    table = probability_table(s)
    plus_q2 = table.singles[2][1]
    for a in OUTCOMES:
        for b in OUTCOMES:
            expected = (plus_q2 if a == 1 else 1 - plus_q2) * (1 + b * 0.2) / 2
            assert table.p((2, 3), a, b) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# Table invariants
# ---------------------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(strategies())
def test_table_is_normalized(s):
    table = probability_table(s)
    for pair in PAIRS:
        block = table.joint[pair]
        assert sum(block.values()) == pytest.approx(1.0, abs=1e-10)
        assert all(-1e-12 <= v <= 1 + 1e-12 for v in block.values())
    for time in (1, 2, 3):
        assert sum(table.singles[time].values()) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(strategies())
def test_correlators_lgi_and_nsit_agree_with_probabilities(s):
    table = probability_table(s)
    from_joint = correlators_from_joint(table.joint)
    for pair in PAIRS:
        assert table.correlators[pair] == pytest.approx(from_joint[pair], abs=1e-12)
    assert table.lgi == pytest.approx(lgi_from_correlators(from_joint), abs=1e-12)
    nsit = nsit_from_probabilities(table.joint, table.singles[2][1], table.singles[3][1])
    assert table.nsit == pytest.approx(nsit, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(strategies())
def test_derived_quantities_bounds(s):
    d = derived_quantities(s)
    assert abs(d.gamma) <= s.povm.b + 1e-12
    t = s.u1.x + s.u2.x + s.u1.y - s.u2.y
    assert math.cos(d.t) == pytest.approx(math.cos(t), abs=1e-12)


def test_lgi_quantum_ceiling_on_sampled_strategies():
    rng = np.random.default_rng(99)
    for _ in range(5):
        cf = closed_form_batch(random_strategy_batch(rng, 20_000))
        assert np.max(cf.lgi) <= 1.5 + 1e-9


@pytest.mark.slow
def test_lgi_quantum_ceiling_on_a_million_strategies():
    rng = np.random.default_rng(1_000_000)
    for _ in range(10):
        cf = closed_form_batch(random_strategy_batch(rng, 100_000))
        assert np.max(cf.lgi) <= 1.5 + 1e-9


def test_random_batch_is_valid():
    batch = random_strategy_batch(np.random.default_rng(3), 5000)
    assert batch.validate() == []
    assert len(batch) == 5000


def test_batch_round_trips_strategies():
    rng = np.random.default_rng(8)
    items = [random_strategy(rng) for _ in range(3)]
    batch = StrategyBatch.from_strategies(items)
    assert batch.strategy(1) == items[1]


# ---------------------------------------------------------------------------
# Examples
# ---------------------------------------------------------------------------


def test_canonical_half_table():
    table = probability_table(canonical_strategy(0.5))
    assert table.lgi == pytest.approx(1.5, abs=1e-12)
    assert table.nsit == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
    d = derived_quantities(canonical_strategy(0.5))
    assert d.gamma == pytest.approx(-0.5, abs=1e-12)
    assert d.chi == pytest.approx(0.0, abs=1e-12)
    assert d.xi == pytest.approx(0.0, abs=1e-12)


def test_no_strength_strategy_cannot_violate():
    # a = -1 with the state on the z axis: LGI = (1 - nz) cos 2z1 + nz.
    for nz, z1 in ((0.0, 0.3), (0.5, 1.1), (-0.7, 2.0), (1.0, 0.4)):
        s = make_strategy(nz=nz, z1=z1, x1=0.4, z2=0.8, a=-1.0, b=0.0)
        table = probability_table(s)
        assert table.lgi == pytest.approx((1 - nz) * math.cos(2 * z1) + nz, abs=1e-12)
        assert table.lgi <= 1.0 + 1e-12


def test_identity_unitaries_give_classical_table():
    for state in ((0.0, 0.0, 0.0), (0.3, 0.4, 0.5), (0.0, 0.0, -1.0)):
        table = probability_table(make_strategy(nx=state[0], ny=state[1], nz=state[2]))
        assert table.lgi == pytest.approx(1.0, abs=1e-12)
        assert table.nsit == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)


def test_chi_vanishes_without_first_rotation_or_coherence():
    d = derived_quantities(make_strategy(nx=0.6, ny=0.3, x1=0.2, z1=0.0, z2=0.5))
    assert d.chi == pytest.approx(0.0, abs=1e-15)
    d = derived_quantities(make_strategy(nz=0.4, x1=0.2, z1=0.6, z2=0.5, x2=1.0))
    assert d.chi == pytest.approx(0.0, abs=1e-15)
    assert d.xi == pytest.approx(0.0, abs=1e-15)


def test_first_nsit_is_half_for_coherent_state():
    s = make_strategy(nx=1.0, z1=math.pi / 4, x1=0.3, y1=0.3)
    assert probability_table(s).nsit[0] == pytest.approx(0.5, abs=1e-12)


def test_conditional_probability_examples():
    table = probability_table(canonical_strategy(0.5))
    assert conditional_probability(table, (1, 3), 1, -1) == pytest.approx(0.75)
    for pair, a, b, value in table.entries():
        assert conditional_probability(table, pair, a, b) == pytest.approx(2 * value, abs=1e-12)
    pure = probability_table(deterministic_strategy())
    assert conditional_probability(pure, (1, 2), 1, 1) == pytest.approx(1.0)


def test_conditional_probability_rejects_zero_marginal():
    pure = probability_table(deterministic_strategy())
    with pytest.raises(ZeroMarginalError):
        conditional_probability(pure, (1, 2), -1, 1)


def test_min_entropy_of_canonical_table():
    table = probability_table(canonical_strategy(0.5))
    assert min_entropy(table, "joint") == pytest.approx(-math.log2(0.375))
    assert min_entropy(table, "conditional") == pytest.approx(-math.log2(0.75))


def test_min_entropy_skips_impossible_conditions():
    assert min_entropy(probability_table(deterministic_strategy()), "conditional") == 0.0


def test_strategy_replace_validates():
    s = make_strategy()
    assert s.replace(z1=0.4).u1.z == pytest.approx(0.4)
    with pytest.raises(InvalidParameterError):
        s.replace(nz=1.5)
    with pytest.raises(InvalidParameterError):
        s.replace(w=1.0)
