from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cabinpds.errors import DomainError
from cabinpds.market import (
    MarketSnapshot,
    dispersion_table,
    expand_counts,
    format_panels,
    herfindahl,
    herfindahl_rows,
    load_factor,
    round_half_up,
    seat_share,
    table_from_counts,
)


@pytest.mark.parametrize("shares,expected", [([1.0], 1.0), ([0.5, 0.5], 0.5), ([0.6, 0.3, 0.1], 0.46)])
def test_herfindahl_examples(shares, expected):
    assert herfindahl(shares) == pytest.approx(expected, abs=1e-15)


def test_herfindahl_rejects_bad_sum():
    with pytest.raises(DomainError):
        herfindahl([0.5, 0.4])


@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=12))
def test_herfindahl_bounds(seats):
    tot = sum(seats)
    shares = [s / tot for s in seats]
    shares[-1] = 1.0 - sum(shares[:-1])
    h = herfindahl(shares)
    k = len(seats)
    assert 1 / k - 1e-12 <= h <= 1 + 1e-12
    if len(set(seats)) == 1:
        assert h == pytest.approx(1 / k)
    else:
        assert h > 1 / k + 1e-15


def test_herfindahl_rows_matches_scalar():
    m = np.array([[100, 100, 0], [300, 0, 0], [60, 30, 10]])
    np.testing.assert_allclose(herfindahl_rows(m), [0.5, 1.0, 0.46])


def test_snapshot():
    snap = MarketSnapshot(("GRU", "SDU"), "2016-03-01", {"Gol": 180, "TAM": 180})
    assert snap.hhi() == 0.5
    assert snap.seat_share("Gol") == 50.0
    with pytest.raises(DomainError):
        MarketSnapshot(("A", "B"), "d", {"Gol": 0})


@pytest.mark.parametrize("a,b,expected", [(180, 360, 50.0), (360, 360, 100.0), (0, 500, 0.0)])
def test_seat_share(a, b, expected):
    assert seat_share(a, b) == expected


def test_seat_share_zero_total():
    with pytest.raises(DomainError):
        seat_share(0, 0)


@pytest.mark.parametrize("a,b,expected", [(177, 177, 1.0), (0, 177, 0.0), (89, 178, 0.5)])
def test_load_factor(a, b, expected):
    assert load_factor(a, b) == expected


def test_load_factor_overfull():
    with pytest.raises(DomainError):
        load_factor(178, 177)


@given(st.integers(0, 500), st.integers(1, 500), st.integers(1, 50))
def test_scale_invariance(a, extra, k):
    b = a + extra
    assert load_factor(a * k, b * k) == pytest.approx(load_factor(a, b), rel=1e-15)
    assert seat_share(a * k, b * k) == pytest.approx(seat_share(a, b), rel=1e-15)


def test_occupancy_marginals(occupancy_counts):
    table = dispersion_table(expand_counts(table_from_counts(occupancy_counts)))
    assert table.grand_total == 64_768
    assert dict(zip("ABCDEF", table.letter_totals.tolist())) == {
        "A": 16_632, "B": 8_011, "C": 11_469, "D": 14_573, "E": 4_211, "F": 9_872}
    assert round_half_up(table.overall_letter_share()[3]) == 23


def test_occupancy_row_percent_panel(occupancy_counts):
    table = table_from_counts(occupancy_counts)
    pct = table.row_percent_display()
    # row 1: 224/1193, 130/1193, ...
    assert pct[0] == [19, 11, 18, 31, 6, 15]
    assert all(sum(v for v in r) in range(97, 104) for r in pct)
    col = table.column_share()
    for j in range(6):
        assert sum(col[i][j] for i in range(32)) == 100


def test_single_assignment():
    t = dispersion_table([(1, "A")])
    assert t.grand_total == 1
    assert t.row_percent()[0][0] == 100


def test_uniform_roster():
    roster = [(r, ch) for r in range(1, 11) for ch in "ABCDEF" for _ in range(10)]
    t = dispersion_table(roster)
    assert t.grand_total == 600
    for r in t.row_percent()[:10]:
        assert r == [Fraction(50, 3)] * 6


def test_exclusions_are_counted():
    t = dispersion_table([(33, "A"), (0, "B"), (5, "G"), (5, "c"), ("x", "A")])
    assert t.excluded == 4 and t.grand_total == 1


@given(st.lists(st.tuples(st.integers(-2, 40), st.sampled_from(list("ABCDEFGH"))), max_size=300))
def test_marginals_property(roster):
    t = dispersion_table(roster)
    assert t.row_totals.sum() == t.letter_totals.sum() == t.grand_total
    assert t.grand_total + t.excluded == len(roster)


def test_round_half_up():
    assert round_half_up(Fraction(5, 2)) == 3
    assert round_half_up(Fraction(-5, 2)) == -2
    assert round_half_up(Fraction(49, 2)) == 25


def test_text_panels(occupancy_counts):
    text = format_panels(table_from_counts(occupancy_counts))
    assert "64768" in text and text.count("Total") >= 3
