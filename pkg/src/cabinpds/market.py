"""Route concentration, seat share, load factor and seat-occupancy tabulation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from cabinpds.errors import DomainError

log = logging.getLogger(__name__)

SHARE_TOLERANCE = 1e-9
TABLE_ROWS = tuple(range(1, 33))
TABLE_LETTERS = tuple("ABCDEF")


@dataclass(frozen=True)
class MarketSnapshot:
    """Seats offered per carrier on one route and day."""

    route: tuple[str, str]
    date: str
    seats: Mapping[str, int]

    def __post_init__(self):
        if any(v < 0 for v in self.seats.values()):
            raise DomainError("seat counts must be non-negative")
        if sum(self.seats.values()) <= 0:
            raise DomainError(f"no seats offered on {self.route} {self.date}")

    @property
    def total(self) -> int:
        return sum(self.seats.values())

    def shares(self) -> dict[str, float]:
        tot = self.total
        return {c: s / tot for c, s in self.seats.items()}

    def hhi(self) -> float:
        return herfindahl(list(self.shares().values()))

    def seat_share(self, carrier: str) -> float:
        return seat_share(self.seats.get(carrier, 0), self.total)


def herfindahl(shares: Sequence[float]) -> float:
    """Sum of squared market shares, on the unit scale."""
    arr = np.asarray(shares, dtype=float)
    if arr.size == 0 or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("shares must be a non-empty sequence of values in [0, 1]")
    if abs(math.fsum(arr) - 1.0) > SHARE_TOLERANCE:
        raise DomainError(f"shares sum to {math.fsum(arr)!r}, not 1")
    return float(np.dot(arr, arr))


def herfindahl_rows(seat_matrix: np.ndarray) -> np.ndarray:
    """Row-wise HHI for a (markets x carriers) array of seat counts."""
    m = np.asarray(seat_matrix, dtype=float)
    tot = m.sum(axis=1)
    if np.any(m < 0) or np.any(tot <= 0):
        raise DomainError("every market needs non-negative seats and a positive total")
    s = m / tot[:, None]
    return (s * s).sum(axis=1)


def seat_share(carrier_seats: float, total_seats: float) -> float:
    if total_seats <= 0:
        raise DomainError("total seats must be positive")
    if not 0 <= carrier_seats <= total_seats:
        raise DomainError(f"carrier seats {carrier_seats} outside [0, {total_seats}]")
    return 100.0 * carrier_seats / total_seats


def load_factor(revenue_pax: float, seats: float) -> float:
    if seats <= 0:
        raise DomainError("seats must be positive")
    if not 0 <= revenue_pax <= seats:
        raise DomainError(f"{revenue_pax} passengers do not fit in {seats} seats")
    return revenue_pax / seats


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


@dataclass(frozen=True)
class OccupancyTable:
    """Passenger counts by seat row and letter.

    ``counts`` has shape (len(rows), len(letters)). Percent views are exact
    rationals; :meth:`row_percent_display` and :meth:`column_share_display`
    round half-up to whole percent.
    """

    rows: tuple[int, ...]
    letters: tuple[str, ...]
    counts: np.ndarray
    excluded: int = 0

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def letter_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def grand_total(self) -> int:
        return int(self.counts.sum())

    def row_percent(self) -> list[list[Fraction | None]]:
        out = []
        for i, tot in enumerate(self.row_totals):
            out.append([Fraction(int(c) * 100, int(tot)) if tot else None for c in self.counts[i]])
        return out

    def column_share(self) -> list[list[Fraction | None]]:
        cols = self.letter_totals
        return [
            [Fraction(int(c) * 100, int(cols[j])) if cols[j] else None for j, c in enumerate(row)]
            for row in self.counts
        ]

    def overall_letter_share(self) -> list[Fraction]:
        g = self.grand_total
        return [Fraction(int(t) * 100, g) if g else Fraction(0) for t in self.letter_totals]

    def overall_row_share(self) -> list[Fraction]:
        g = self.grand_total
        return [Fraction(int(t) * 100, g) if g else Fraction(0) for t in self.row_totals]

    def row_percent_display(self) -> list[list[int | None]]:
        return [[None if v is None else round_half_up(v) for v in r] for r in self.row_percent()]

    def column_share_display(self) -> list[list[int | None]]:
        return [[None if v is None else round_half_up(v) for v in r] for r in self.column_share()]

    def panels(self) -> dict[str, list[list]]:
        """The three panels as rows of plain values, marginals included."""
        counts = [
            [r, *map(int, self.counts[i]), int(self.row_totals[i])] for i, r in enumerate(self.rows)
        ]
        counts.append(["Total", *map(int, self.letter_totals), self.grand_total])
        row_pct = [
            [r, *("" if v is None else v for v in vals), round_half_up(s)]
            for r, vals, s in zip(self.rows, self.row_percent_display(), self.overall_row_share())
        ]
        row_pct.append(["Total", *(round_half_up(s) for s in self.overall_letter_share()), 100 if self.grand_total else 0])
        col = [
            [r, *("" if v is None else v for v in vals)] for r, vals in zip(self.rows, self.column_share_display())
        ]
        col.append(["Total", *(100 if t else "" for t in self.letter_totals)])
        return {"counts": counts, "row_percent": row_pct, "column_share": col}


def dispersion_table(
    assignments: Iterable[tuple[int, str]],
    rows: Sequence[int] = TABLE_ROWS,
    letters: Sequence[str] = TABLE_LETTERS,
) -> OccupancyTable:
    """Tabulate (row, letter) seat assignments; out-of-range records are counted and dropped."""
    rindex = {r: i for i, r in enumerate(rows)}
    lindex = {ch: j for j, ch in enumerate(letters)}
    counts = np.zeros((len(rows), len(letters)), dtype=np.int64)
    excluded = 0
    for row, letter in assignments:
        try:
            i = rindex[int(row)]
            j = lindex[str(letter).strip().upper()]
        except (KeyError, ValueError, TypeError):
            excluded += 1
            continue
        counts[i, j] += 1
    if excluded:
        log.info("dispersion_table: %d assignments outside rows %s-%s / letters %s excluded",
                 excluded, rows[0], rows[-1], "".join(letters))
    return OccupancyTable(tuple(rows), tuple(letters), counts, excluded)


def table_from_counts(counts: np.ndarray, rows: Sequence[int] = TABLE_ROWS,
                      letters: Sequence[str] = TABLE_LETTERS) -> OccupancyTable:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (len(rows), len(letters)) or np.any(counts < 0):
        raise DomainError("counts must be a non-negative (rows x letters) array")
    return OccupancyTable(tuple(rows), tuple(letters), counts.copy())


def expand_counts(table: OccupancyTable) -> list[tuple[int, str]]:
    """Roster with one (row, letter) entry per counted passenger."""
    out = []
    for i, r in enumerate(table.rows):
        for j, ch in enumerate(table.letters):
            out.extend([(r, ch)] * int(table.counts[i, j]))
    return out


def format_panels(table: OccupancyTable) -> str:
    """Aligned text rendering of the three panels."""
    header = ["Row", *table.letters]
    blocks = []
    for title, key, extra in (("Passengers", "counts", "Total"),
                              ("Row percentage", "row_percent", "Share"),
                              ("Letter share", "column_share", None)):
        body = table.panels()[key]
        hdr = header + ([extra] if extra else [])
        widths = [max(len(str(x)) for x in col) for col in zip(hdr, *body)]
        lines = [title, "  ".join(str(h).rjust(w) for h, w in zip(hdr, widths))]
        lines += ["  ".join(str(v).rjust(w) for v, w in zip(r, widths)) for r in body]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
