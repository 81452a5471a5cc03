"""Seat-map parsing, seat-level flags and cabin density indices.

A seat map is a UTF-8 text document, one aircraft per file::

    # free comment
    model: Boeing 737-800
    carrier: Gol
    capacity: 177
    columns: ABC DEF
    pitch: 1-7 34
    pitch: 8-32 31
    front: ‡ W G ‡ ‡
    1 1* 1* 1* 1* 1* 1*
    10 / 1 1 1 1 1 1 \\
    16 / ‡ 0 0 0 0 0 0 ‡ \\
    32 1 1 1 0 0 0
    rear: ‡ W W ‡ ‡ G

``columns`` lists the seat letters; whitespace marks an aisle, so each
group is one seat block. A row line is the row number followed by cell
tokens (``0`` absent, ``1`` standard, ``1*`` extra pitch), one per letter,
optionally surrounded by markers: ``/`` or ``\\`` over wing, ``‡`` emergency
exit, ``G`` galley, ``W`` lavatory. ``front``/``rear`` carry cabin furniture
drawn ahead of the first and behind the last row.
"""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from cabinpds.errors import (
    CoverageError,
    DomainError,
    ParseError,
    SeatLookupError,
    ValidationError,
)

DEFAULT_PITCH_BOUNDS = (28.0, 36.0)
# wide enough for saddle-type concept seats
CONCEPT_PITCH_BOUNDS = (20.0, 36.0)

REFERENCE_ENV = "CABINPDS_REFERENCE"


class CellState(str, enum.Enum):
    ABSENT = "0"
    STANDARD = "1"
    EXTRA_PITCH = "1*"


class Marker(str, enum.Enum):
    GALLEY = "G"
    LAVATORY = "W"
    OVER_WING = "/"
    EMERGENCY_EXIT = "‡"


_CELL_TOKENS = {s.value: s for s in CellState}
_ROW_MARKER_TOKENS = {
    "G": Marker.GALLEY,
    "W": Marker.LAVATORY,
    "/": Marker.OVER_WING,
    "\\": Marker.OVER_WING,
    "‡": Marker.EMERGENCY_EXIT,
}
_FURNITURE_TOKENS = {"G": Marker.GALLEY, "W": Marker.LAVATORY, "‡": Marker.EMERGENCY_EXIT}


@dataclass(frozen=True)
class RowSpec:
    row_number: int
    cells: tuple[CellState, ...]
    markers: frozenset[Marker] = frozenset()

    @property
    def seat_count(self) -> int:
        return sum(c is not CellState.ABSENT for c in self.cells)

    @property
    def has_seats(self) -> bool:
        return self.seat_count > 0

    @property
    def is_emergency_exit(self) -> bool:
        return Marker.EMERGENCY_EXIT in self.markers


@dataclass(frozen=True)
class PitchSection:
    first_row: int
    last_row: int
    pitch_inches: float

    def covers(self, row: int) -> bool:
        return self.first_row <= row <= self.last_row


@dataclass(frozen=True)
class SeatFlags:
    is_middle: bool
    is_window: bool
    is_aisle: bool
    is_last_row: bool
    is_emergency_exit: bool
    is_comfort: bool


@dataclass(frozen=True)
class ConfigTriple:
    """(P, R, S): pitch, seat-bearing rows and seats of one cabin section."""

    pitch_inches: float
    row_count: int
    seat_count: int


@dataclass(frozen=True)
class ModelReference:
    model: str
    max_rows: int
    max_pitch: float


@dataclass(frozen=True)
class CabinLayout:
    aircraft_model: str
    carrier: str
    declared_capacity: int | None
    blocks: tuple[str, ...]
    rows: tuple[RowSpec, ...] = ()
    pitch_sections: tuple[PitchSection, ...] = ()
    front: tuple[Marker, ...] = ()
    rear: tuple[Marker, ...] = ()
    _row_index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        letters = "".join(self.blocks)
        if not letters:
            raise ValidationError("layout needs at least one seat letter")
        if len(set(letters)) != len(letters):
            raise ValidationError(f"duplicate seat letters in columns {self.blocks}")
        previous = 0
        for spec in self.rows:
            if spec.row_number <= previous:
                raise ValidationError(
                    f"row numbers must be strictly increasing positive integers (row {spec.row_number})"
                )
            if len(spec.cells) != len(letters):
                raise ValidationError(
                    f"row {spec.row_number} has {len(spec.cells)} cells, expected {len(letters)}"
                )
            previous = spec.row_number
        object.__setattr__(self, "_row_index", {r.row_number: r for r in self.rows})

    @property
    def letters(self) -> str:
        return "".join(self.blocks)

    def row(self, number: int) -> RowSpec:
        try:
            return self._row_index[number]
        except KeyError:
            raise SeatLookupError(f"{self.aircraft_model}: no row {number}") from None

    def cell(self, row: int, letter: str) -> CellState:
        spec = self.row(row)
        idx = self.letters.find(letter)
        if idx < 0 or len(letter) != 1:
            raise SeatLookupError(f"{self.aircraft_model}: no seat letter {letter!r}")
        return spec.cells[idx]

    def seats(self) -> Iterable[tuple[int, str]]:
        """Existing seats in row-major order."""
        for spec in self.rows:
            for letter, state in zip(self.letters, spec.cells):
                if state is not CellState.ABSENT:
                    yield spec.row_number, letter


# --------------------------------------------------------------------------- parsing


def _parse_header(key: str, value: str, lineno: int, header: dict) -> None:
    if key in ("model", "carrier"):
        header[key] = value
    elif key == "capacity":
        try:
            header["capacity"] = int(value)
        except ValueError:
            raise ParseError(f"line {lineno}: capacity must be an integer, got {value!r}") from None
    elif key == "columns":
        header["blocks"] = tuple(value.split())
    elif key == "pitch":
        parts = value.split()
        try:
            first, last = parts[0].split("-")
            header.setdefault("pitch", []).append(
                PitchSection(int(first), int(last), float(parts[1]))
            )
        except (ValueError, IndexError):
            raise ParseError(f"line {lineno}: pitch expects 'FIRST-LAST INCHES', got {value!r}") from None
    elif key in ("front", "rear"):
        markers = []
        for tok in value.split():
            if tok not in _FURNITURE_TOKENS:
                raise ParseError(f"line {lineno}: unknown furniture symbol {tok!r}")
            markers.append(_FURNITURE_TOKENS[tok])
        header[key] = tuple(markers)
    else:
        raise ParseError(f"line {lineno}: unknown header key {key!r}")


def _parse_row(line: str, ncols: int) -> RowSpec:
    tokens = line.split()
    try:
        number = int(tokens[0])
    except ValueError:
        raise ParseError(f"row label {tokens[0]!r} is not an integer") from None
    if number <= 0:
        raise ParseError("row numbers must be positive", row=number)
    markers = set()
    cells: list[CellState] = []
    seen_cells_end = False
    for pos, tok in enumerate(tokens[1:], start=1):
        if tok in _CELL_TOKENS:
            if seen_cells_end:
                raise ParseError("cell tokens must be contiguous", row=number, column=pos)
            cells.append(_CELL_TOKENS[tok])
        elif tok in _ROW_MARKER_TOKENS:
            if cells:
                seen_cells_end = True
            markers.add(_ROW_MARKER_TOKENS[tok])
        else:
            raise ParseError(f"unknown symbol {tok!r}", row=number, column=pos)
    if len(cells) != ncols:
        raise ParseError(f"expected {ncols} cells, found {len(cells)}", row=number, column=len(cells) + 1)
    return RowSpec(number, tuple(cells), frozenset(markers))


def parse_seat_map(text: str, pitch_bounds: tuple[float, float] = DEFAULT_PITCH_BOUNDS) -> CabinLayout:
    """Parse one seat-map document into a validated :class:`CabinLayout`.

    Raises
    ------
    ParseError
        Malformed line, unknown symbol, wrong column count or duplicate row.
    ValidationError
        Declared capacity differs from the counted seats, or the pitch
        sections are inconsistent with the rows.
    """
    header: dict = {}
    rows: list[RowSpec] = []
    seen: set[int] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, value = line.partition(":")
        if sep and not head.strip().isdigit():
            _parse_header(head.strip().lower(), value.strip(), lineno, header)
            continue
        if "blocks" not in header:
            raise ParseError(f"line {lineno}: row before 'columns:' header")
        spec = _parse_row(line, len("".join(header["blocks"])))
        if spec.row_number in seen:
            raise ParseError("duplicate row number", row=spec.row_number)
        if rows and spec.row_number < rows[-1].row_number:
            raise ParseError("row numbers must increase", row=spec.row_number)
        seen.add(spec.row_number)
        rows.append(spec)

    for key in ("model", "blocks"):
        if key not in header:
            raise ParseError(f"missing required header {'columns' if key == 'blocks' else key!r}")
    layout = CabinLayout(
        aircraft_model=header["model"],
        carrier=header.get("carrier", ""),
        declared_capacity=header.get("capacity"),
        blocks=header["blocks"],
        rows=tuple(rows),
        pitch_sections=tuple(header.get("pitch", ())),
        front=header.get("front", ()),
        rear=header.get("rear", ()),
    )
    validate_layout(layout, pitch_bounds)
    return layout


def validate_layout(layout: CabinLayout, pitch_bounds: tuple[float, float] = DEFAULT_PITCH_BOUNDS) -> None:
    counted = seat_count(layout)
    if layout.declared_capacity is not None and counted != layout.declared_capacity:
        raise ValidationError(
            f"{layout.aircraft_model}: header declares {layout.declared_capacity} seats "
            f"but {counted} existing seats were counted"
        )
    sections = sorted(layout.pitch_sections, key=lambda s: s.first_row)
    lo, hi = pitch_bounds
    for sec in sections:
        if sec.first_row > sec.last_row or sec.first_row <= 0:
            raise ValidationError(f"bad pitch section rows {sec.first_row}-{sec.last_row}")
        if not lo <= sec.pitch_inches <= hi:
            raise ValidationError(f"pitch {sec.pitch_inches} outside [{lo}, {hi}] inches")
    for a, b in zip(sections, sections[1:]):
        if b.first_row <= a.last_row:
            raise ValidationError(f"pitch sections {a.first_row}-{a.last_row} and {b.first_row}-{b.last_row} overlap")
    if sections:
        _check_coverage(layout)


def _check_coverage(layout: CabinLayout) -> None:
    for spec in layout.rows:
        if spec.has_seats and not any(s.covers(spec.row_number) for s in layout.pitch_sections):
            raise CoverageError(f"{layout.aircraft_model}: row {spec.row_number} is not covered by any pitch section")


def serialize_seat_map(layout: CabinLayout) -> str:
    lines = [f"model: {layout.aircraft_model}"]
    if layout.carrier:
        lines.append(f"carrier: {layout.carrier}")
    if layout.declared_capacity is not None:
        lines.append(f"capacity: {layout.declared_capacity}")
    lines.append("columns: " + " ".join(layout.blocks))
    for sec in layout.pitch_sections:
        lines.append(f"pitch: {sec.first_row}-{sec.last_row} {sec.pitch_inches:g}")
    if layout.front:
        lines.append("front: " + " ".join(m.value for m in layout.front))
    for spec in layout.rows:
        left = [m.value for m in (Marker.OVER_WING, Marker.EMERGENCY_EXIT, Marker.GALLEY, Marker.LAVATORY) if m in spec.markers]
        right = []
        if Marker.EMERGENCY_EXIT in spec.markers:
            right.append("‡")
        if Marker.OVER_WING in spec.markers:
            right.append("\\")
        lines.append(" ".join([str(spec.row_number), *left, *(c.value for c in spec.cells), *right]))
    if layout.rear:
        lines.append("rear: " + " ".join(m.value for m in layout.rear))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- counts and flags


def seat_count(layout: CabinLayout) -> int:
    return sum(spec.seat_count for spec in layout.rows)


def comfort_seat_count(layout: CabinLayout) -> int:
    return sum(c is CellState.EXTRA_PITCH for spec in layout.rows for c in spec.cells)


def seat_bearing_rows(layout: CabinLayout) -> list[int]:
    return [spec.row_number for spec in layout.rows if spec.has_seats]


def seat_flags(layout: CabinLayout, row: int, letter: str) -> SeatFlags:
    """Positional flags of an existing seat.

    Middle means flanked on both sides by existing seats of the same block;
    window means no existing seat between it and the fuselage in an outer
    block; everything else is aisle.
    """
    state = layout.cell(row, letter)
    if state is CellState.ABSENT:
        raise SeatLookupError(f"{layout.aircraft_model}: seat {row}{letter} does not exist")
    spec = layout.row(row)
    states = dict(zip(layout.letters, spec.cells))
    nblocks = len(layout.blocks)
    bidx = next(i for i, b in enumerate(layout.blocks) if letter in b)
    block = layout.blocks[bidx]
    pos = block.index(letter)
    exists = [states[ch] is not CellState.ABSENT for ch in block]
    left_occupied = any(exists[:pos])
    right_occupied = any(exists[pos + 1:])
    flanked = pos > 0 and pos < len(block) - 1 and exists[pos - 1] and exists[pos + 1]
    window = False
    if not flanked:
        if bidx == 0 and not left_occupied:
            window = True
        elif bidx == nblocks - 1 and not right_occupied:
            window = True
    last = max(seat_bearing_rows(layout))
    return SeatFlags(
        is_middle=flanked,
        is_window=window,
        is_aisle=not flanked and not window,
        is_last_row=row == last,
        is_emergency_exit=spec.is_emergency_exit,
        is_comfort=state is CellState.EXTRA_PITCH,
    )


def seat_table(layout: CabinLayout) -> list[tuple[int, str, SeatFlags]]:
    return [(r, ch, seat_flags(layout, r, ch)) for r, ch in layout.seats()]


def flag_counts(layout: CabinLayout) -> dict[str, int]:
    counts = dict.fromkeys(["middle", "window", "aisle", "last_row", "emergency_exit", "comfort"], 0)
    for _, _, f in seat_table(layout):
        counts["middle"] += f.is_middle
        counts["window"] += f.is_window
        counts["aisle"] += f.is_aisle
        counts["last_row"] += f.is_last_row
        counts["emergency_exit"] += f.is_emergency_exit
        counts["comfort"] += f.is_comfort
    return counts


def config_triples(layout: CabinLayout) -> list[ConfigTriple]:
    out = []
    for sec in layout.pitch_sections:
        specs = [s for s in layout.rows if sec.covers(s.row_number) and s.has_seats]
        out.append(ConfigTriple(sec.pitch_inches, len(specs), sum(s.seat_count for s in specs)))
    return out


# --------------------------------------------------------------------------- indices


def row_density_index(layout: CabinLayout, reference_max_rows: int) -> float:
    """Installed seat-bearing rows as a percentage of the model's maximum."""
    if reference_max_rows <= 0:
        raise DomainError("reference_max_rows must be positive")
    installed = len(seat_bearing_rows(layout))
    if installed > reference_max_rows:
        raise DomainError(
            f"{installed} installed rows exceed the reference maximum {reference_max_rows}; "
            "the index would exceed 100"
        )
    return 100.0 * installed / reference_max_rows


def pitch_index(layout: CabinLayout, reference_max_pitch: float) -> float:
    """Row-weighted mean pitch as a percentage of the model's maximum pitch."""
    _check_coverage(layout)
    rows = seat_bearing_rows(layout)
    if not rows:
        raise DomainError("layout has no seat-bearing rows")
    top = max(s.pitch_inches for s in layout.pitch_sections)
    if reference_max_pitch < top:
        raise DomainError(f"reference pitch {reference_max_pitch} is below section pitch {top}")
    total = 0.0
    for r in rows:
        sec = next(s for s in layout.pitch_sections if s.covers(r))
        total += sec.pitch_inches
    return 100.0 * (total / len(rows)) / reference_max_pitch


# --------------------------------------------------------------------------- registry


def load_layout(path: str | os.PathLike, pitch_bounds: tuple[float, float] = DEFAULT_PITCH_BOUNDS) -> CabinLayout:
    return parse_seat_map(Path(path).read_text(encoding="utf-8"), pitch_bounds)


def load_registry(directory: str | os.PathLike | None = None) -> dict[str, CabinLayout]:
    """Parse every ``*.map`` file in ``directory`` (default: bundled fixtures), keyed by file stem."""
    if directory is None:
        base = resources.files("cabinpds") / "data" / "layouts"
        files = sorted((p for p in base.iterdir() if p.name.endswith(".map")), key=lambda p: p.name)
        return {p.name[:-4]: parse_seat_map(p.read_text(encoding="utf-8")) for p in files}
    return {p.stem: load_layout(p) for p in sorted(Path(directory).glob("*.map"))}


def bundled_concept_layout(name: str = "concept_737-800_skyrider_195") -> CabinLayout:
    text = (resources.files("cabinpds") / "data" / "concept" / f"{name}.map").read_text(encoding="utf-8")
    return parse_seat_map(text, CONCEPT_PITCH_BOUNDS)


def default_reference_path() -> str | None:
    return os.environ.get(REFERENCE_ENV)


def load_reference_table(path: str | os.PathLike | None = None) -> dict[str, ModelReference]:
    """Read ``model,max_rows,max_pitch`` rows.

    Resolution order: explicit path, ``$CABINPDS_REFERENCE``, bundled table.
    """
    path = path or default_reference_path()
    if path is None:
        text = (resources.files("cabinpds") / "data" / "reference.csv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table = {}
    for rec in csv.DictReader(text.splitlines()):
        ref = ModelReference(rec["model"].strip(), int(rec["max_rows"]), float(rec["max_pitch"]))
        table[ref.model] = ref
    return table


def layout_indices(layout: CabinLayout, references: Mapping[str, ModelReference]) -> tuple[float, float]:
    """(IROWDENS, IPITCH) of a layout under its model's reference values."""
    try:
        ref = references[layout.aircraft_model]
    except KeyError:
        raise SeatLookupError(f"no reference values for model {layout.aircraft_model!r}") from None
    return row_density_index(layout, ref.max_rows), pitch_index(layout, ref.max_pitch)


def comfort_placebo(layout: CabinLayout, row: int, letter: str, registry: Mapping[str, CabinLayout]) -> bool:
    """True if the seat sits where a same-model, same-carrier sibling offers extra pitch.

    Only layouts without any extra-pitch cells can carry the placebo flag.
    """
    if comfort_seat_count(layout) > 0:
        return False
    for sibling in registry.values():
        if sibling is layout or sibling.aircraft_model != layout.aircraft_model:
            continue
        if sibling.carrier != layout.carrier or comfort_seat_count(sibling) == 0:
            continue
        try:
            if sibling.cell(row, letter) is CellState.EXTRA_PITCH:
                return True
        except SeatLookupError:
            continue
    return False
