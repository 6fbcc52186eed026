import pytest
from hypothesis import given, strategies as st

from sealrank.ledger import CallEvent, Ledger, PricingConfig, estimate_cost, ledger_summary, theoretical_calls

RATES = PricingConfig(2.00, 17.00)


@pytest.mark.parametrize(
    "protocol,expected",
    [("original", 0), ("listwise", 1), ("pointwise", 8), ("flat_bracket", 8), ("full_pair", 28)],
)
def test_theoretical_calls_n8(protocol, expected):
    assert theoretical_calls(protocol, 8) == expected


def test_fixed_rubric_amortised():
    assert round(theoretical_calls("fixed_rubric", 8, 162), 4) == 8.0062


def test_seal_with_evolution_average():
    assert theoretical_calls("seal", 8, evo_avg=3.9) == pytest.approx(11.9)


def test_theoretical_rejects_tiny_pool():
    with pytest.raises(ValueError):
        theoretical_calls("seal", 1)


def test_full_pair_dollar_cost():
    cost = estimate_cost(30.99e6, 6.58e6, RATES)
    assert cost == pytest.approx(173.84, abs=0.005)
    assert abs(cost - 173.79) / 173.79 < 0.001


def test_seal_dollar_cost():
    cost = estimate_cost(10.63e6, 2.20e6, RATES)
    assert cost == pytest.approx(58.66, abs=0.005)
    assert abs(cost - 58.67) / 58.67 < 0.001


def test_zero_cost():
    assert estimate_cost(0, 0, RATES) == 0


def test_published_relative_cost():
    assert round(58.67 / 173.79, 2) == 0.34
    assert round(1926 / 4536, 3) == 0.425


@given(st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9))
def test_cost_is_linear(a_in, a_out, b_in, b_out):
    total = estimate_cost(a_in + b_in, a_out + b_out, RATES)
    parts = estimate_cost(a_in, a_out, RATES) + estimate_cost(b_in, b_out, RATES)
    assert total == pytest.approx(parts, rel=1e-12, abs=1e-9)


def test_summary_relative_field():
    events = [CallEvent("seal", "t1", "pairwise", 1000, 100), CallEvent("full_pair", "t1", "pairwise", 3000, 300)]
    s = ledger_summary(events, RATES)
    assert s["seal"].relative_to_full_pair == pytest.approx(1 / 3)
    alone = ledger_summary(events[:1], RATES)
    assert alone["seal"].relative_to_full_pair is None


@given(st.lists(st.tuples(st.sampled_from(["seal", "listwise"]), st.integers(0, 10**7), st.integers(0, 10**7)), min_size=1, max_size=40))
def test_summary_conserves_tokens(rows):
    events = [CallEvent(p, f"t{i % 3}", "pairwise", a, b) for i, (p, a, b) in enumerate(rows)]
    s = ledger_summary(events, RATES)
    assert sum(r.input_tokens for r in s.values()) == sum(e.input_tokens for e in events)
    assert sum(r.output_tokens for r in s.values()) == sum(e.output_tokens for e in events)
    assert sum(r.calls for r in s.values()) == len(events)


def test_per_1k_tasks_uses_task_count():
    events = [CallEvent("seal", f"t{i}", "pairwise", 1_000_000, 0) for i in range(4)]
    s = ledger_summary(events, RATES)
    assert s["seal"].tasks == 4 and s["seal"].cost_per_1k_tasks == pytest.approx(2000.0)


def test_negative_tokens_rejected():
    with pytest.raises(ValueError):
        CallEvent("seal", "t", "pairwise", -1, 0)


def test_ledger_file_roundtrip(tmp_path):
    path = tmp_path / "ledger.jsonl"
    led = Ledger(path)
    ev = CallEvent("seal", "t", "seed", 10, 2, 0.5, 1, False, True)
    led.record(ev)
    assert Ledger.read(path) == [ev] and len(led) == 1


def test_pricing_file(tmp_path):
    p = tmp_path / "pricing.yaml"
    p.write_text("input_rate: 1.5\noutput_rate: 6\n")
    assert PricingConfig.from_file(p) == PricingConfig(1.5, 6.0)
    with pytest.raises(ValueError):
        PricingConfig(-1.0, 2.0)
