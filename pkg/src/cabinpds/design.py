"""Observation records, validity filtering and design-matrix assembly.

Records are handled column-wise as a :class:`pandas.DataFrame` whose columns
follow :data:`RECORD_FIELDS`; :class:`ObservationRecord` is the row-level view
used for ingestion of individual records and for documentation of the CSV
schema.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from cabinpds.cabin import (
    CabinLayout,
    ModelReference,
    comfort_placebo,
    pitch_index,
    row_density_index,
    seat_flags,
)
from cabinpds.errors import BuildError, CodingError, ConfigError, DomainError, TransformError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationRecord:
    """One surveyed passenger trip. Field order is the CSV column order."""

    fare: float
    advance_days: float
    distance_km: float
    business_trip: int
    flight_minutes: float
    hold_kg: float
    revenue_pax: float
    load_factor: float
    fuel_price: float
    connected: int
    seat_share_pct: float
    route_hhi: float
    last_row: int
    emergency_exit: int
    comfort: int
    comfort_placebo: int
    middle: int
    row_density_index: float
    pitch_index: float
    survey_date: str
    departure_hour: int
    origin: str
    destination: str
    age_band: int
    income_band: int
    sex: str
    trips_band: int

    @property
    def cluster_key(self) -> str:
        return cluster_key(self.origin, self.destination)


RECORD_FIELDS = tuple(f.name for f in dataclasses.fields(ObservationRecord))
# optional provenance columns carried through ingestion when present
PROVENANCE_FIELDS = ("carrier", "layout", "seat_row", "seat_letter")

STRING_FIELDS = ("survey_date", "origin", "destination", "sex")
DUMMY_FIELDS = ("business_trip", "connected", "last_row", "emergency_exit", "comfort", "comfort_placebo", "middle")
INTEGER_FIELDS = ("departure_hour", "age_band", "income_band", "trips_band")


def cluster_key(origin: str, destination: str) -> str:
    a, b = sorted((str(origin), str(destination)))
    return f"{a}-{b}"


def records_to_frame(records: Iterable[ObservationRecord]) -> pd.DataFrame:
    rows = [dataclasses.astuple(r) for r in records]
    return pd.DataFrame(rows, columns=list(RECORD_FIELDS))


def frame_to_records(frame: pd.DataFrame) -> list[ObservationRecord]:
    return [ObservationRecord(**{k: rec[k] for k in RECORD_FIELDS}) for rec in frame.to_dict("records")]


def read_records_csv(path: str | Path) -> pd.DataFrame:
    dtypes = {f: str for f in STRING_FIELDS}
    frame = pd.read_csv(path, dtype=dtypes, keep_default_na=True)
    missing = [f for f in RECORD_FIELDS if f not in frame.columns]
    if missing:
        raise BuildError(f"{path}: missing columns {missing}", {"columns": missing})
    return frame


def write_records_csv(frame: pd.DataFrame, path: str | Path) -> None:
    cols = list(RECORD_FIELDS) + [c for c in PROVENANCE_FIELDS if c in frame.columns]
    frame[cols].to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


# --------------------------------------------------------------------------- variables

# interest variable -> (source field, transform); transform in {"log", "dummy", "adv", "interaction"}
VARIABLES: dict[str, tuple[str, str]] = {
    "ADV": ("advance_days", "adv"),
    "DIST": ("distance_km", "log"),
    "BSN": ("business_trip", "dummy"),
    "FLTIME": ("flight_minutes", "log"),
    "SHIPMENT": ("hold_kg", "log"),
    "REVPAX": ("revenue_pax", "log"),
    "LF": ("load_factor", "log"),
    "FUELP": ("fuel_price", "log"),
    "HUB": ("connected", "dummy"),
    "SEATSH": ("seat_share_pct", "log"),
    "RHHI": ("route_hhi", "log"),
    "LASTROW": ("last_row", "dummy"),
    "EMERGEXIT": ("emergency_exit", "dummy"),
    "COMFORT": ("comfort", "dummy"),
    "COMFORT_PLACEBO": ("comfort_placebo", "dummy"),
    "MIDDLE": ("middle", "dummy"),
    "MIDDLE_1W": ("middle", "interaction"),
    "MIDDLE_2W": ("middle", "interaction"),
    "MIDDLE_3W": ("middle", "interaction"),
    "MIDDLE_GT3W": ("middle", "interaction"),
    "IROWDENS": ("row_density_index", "log"),
    "IPITCH": ("pitch_index", "log"),
}

DISPLAY_NAMES = {
    "COMFORT_PLACEBO": "COMFORT (placebo)",
    "MIDDLE_1W": "MIDDLE × ADV (1w)",
    "MIDDLE_2W": "MIDDLE × ADV (2w)",
    "MIDDLE_3W": "MIDDLE × ADV (3w)",
    "MIDDLE_GT3W": "MIDDLE × ADV (>3w)",
}

ADV_BUCKETS = ("week1", "week2", "week3", "beyond3")
INTERACTION_BUCKET = dict(zip(("MIDDLE_1W", "MIDDLE_2W", "MIDDLE_3W", "MIDDLE_GT3W"), ADV_BUCKETS))

BLOCKS = ("survey_date", "departure_hour", "airport", "pax_profile")

_BASE = ("ADV", "DIST", "IROWDENS")
_S2 = _BASE[:2] + ("BSN",) + _BASE[2:]
_S3 = _S2[:3] + ("FLTIME", "SHIPMENT", "REVPAX", "LF", "FUELP", "HUB") + _S2[3:]
_S4 = _S3[:-1] + ("SEATSH", "RHHI", "IROWDENS")
_S5 = _S4[:-1] + ("LASTROW", "EMERGEXIT", "COMFORT", "MIDDLE", "IROWDENS")
_S6 = _S5[:-2] + ("COMFORT_PLACEBO", "MIDDLE_1W", "MIDDLE_2W", "MIDDLE_3W", "MIDDLE_GT3W", "IROWDENS")
_S8 = _S6[:-1] + ("IPITCH",)


@dataclass(frozen=True)
class SpecDefinition:
    """Interest variables and candidate-control blocks of one specification."""

    spec_id: int | str
    interest: tuple[str, ...]
    blocks: tuple[str, ...]

    def check(self) -> "SpecDefinition":
        """Verify names against the record-based variable and block catalogue."""
        unknown = [v for v in self.interest if v not in VARIABLES]
        if unknown:
            raise ConfigError(f"unknown interest variables {unknown}")
        bad = [b for b in self.blocks if b not in BLOCKS]
        if bad:
            raise ConfigError(f"unknown control blocks {bad}; choose from {BLOCKS}")
        if len(set(self.interest)) != len(self.interest):
            raise ConfigError("duplicate interest variables")
        return self

    @property
    def required_fields(self) -> tuple[str, ...]:
        fields = {VARIABLES[v][0] for v in self.interest}
        if any(VARIABLES[v][1] == "interaction" for v in self.interest):
            fields.add("advance_days")
        block_fields = {
            "survey_date": ("survey_date",),
            "departure_hour": ("departure_hour",),
            "airport": ("origin", "destination"),
            "pax_profile": ("age_band", "income_band", "sex", "trips_band"),
        }
        for b in self.blocks:
            fields.update(block_fields[b])
        fields.update(("fare", "origin", "destination"))
        return tuple(f for f in RECORD_FIELDS if f in fields)


_SHORT = ("survey_date", "departure_hour")
SPECS: dict[int, SpecDefinition] = {
    1: SpecDefinition(1, _BASE, _SHORT),
    2: SpecDefinition(2, _S2, _SHORT),
    3: SpecDefinition(3, _S3, _SHORT),
    4: SpecDefinition(4, _S4, _SHORT),
    5: SpecDefinition(5, _S5, _SHORT),
    6: SpecDefinition(6, _S6, _SHORT),
    7: SpecDefinition(7, _S6, BLOCKS),
    8: SpecDefinition(8, _S8, BLOCKS),
}


def get_spec(spec: int | SpecDefinition) -> SpecDefinition:
    if isinstance(spec, SpecDefinition):
        return spec
    try:
        return SPECS[int(spec)]
    except (KeyError, ValueError):
        raise ConfigError(f"spec id must be in 1-8, got {spec!r}") from None


def load_spec_file(path: str | Path) -> SpecDefinition:
    """Read a spec from JSON or YAML with keys ``name``, ``interest`` and ``blocks``."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict) or not isinstance(data.get("interest"), list):
        raise ConfigError(f"{path}: a spec file needs an 'interest' list")
    return SpecDefinition(data.get("name", Path(path).stem), tuple(data["interest"]),
                          tuple(data.get("blocks") or ())).check()


@dataclass(frozen=True)
class DesignConfig:
    """Variable-construction choices.

    Attributes
    ----------
    adv_transform
        ``"level"`` enters ADV in days, ``"log1p"`` as log(1 + days).
    bucket_edges
        Right-closed upper edges of the first three advance buckets.
    profile_cap
        Maximum number of passenger-profile levels kept.
    """

    adv_transform: str = "level"
    bucket_edges: tuple[int, int, int] = (7, 14, 21)
    profile_cap: int = 1761

    def __post_init__(self):
        if self.adv_transform not in ("level", "log1p"):
            raise ConfigError("adv_transform must be 'level' or 'log1p'")
        e = self.bucket_edges
        if len(e) != 3 or not 0 <= e[0] < e[1] < e[2]:
            raise ConfigError("bucket_edges must be three increasing non-negative values")
        if self.profile_cap < 1:
            raise ConfigError("profile_cap must be positive")


def log_transform(value, variable: str = "value"):
    """Natural log; scalar or array. Nonpositive input raises :class:`TransformError`."""
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise TransformError(variable, "log requires finite positive values")
    out = np.log(arr)
    return float(out) if out.ndim == 0 else out


def bucket_advance(days: float, edges: Sequence[int] = (7, 14, 21)) -> str:
    if days is None or not math.isfinite(days) or days < 0:
        raise DomainError(f"advance days must be non-negative, got {days!r}")
    for name, edge in zip(ADV_BUCKETS, edges):
        if days <= edge:
            return name
    return ADV_BUCKETS[-1]


def bucket_codes(days: np.ndarray, edges: Sequence[int] = (7, 14, 21)) -> np.ndarray:
    """Vectorized bucket index 0-3 (right-closed edges)."""
    days = np.asarray(days, dtype=float)
    if np.any(~np.isfinite(days)) or np.any(days < 0):
        raise DomainError("advance days must be non-negative")
    return np.searchsorted(np.asarray(edges, dtype=float), days, side="left")


# --------------------------------------------------------------------------- filtering


@dataclass(frozen=True)
class FilterReport:
    n_in: int
    n_out: int
    exclusions: dict[str, int]

    @property
    def n_excluded(self) -> int:
        return self.n_in - self.n_out


def _field_failures(frame: pd.DataFrame, fld: str) -> np.ndarray:
    col = frame[fld]
    bad = col.isna().to_numpy()
    if fld in STRING_FIELDS:
        return bad | (col.astype(str).str.strip() == "").to_numpy()
    vals = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
    bad |= ~np.isfinite(vals)
    with np.errstate(invalid="ignore"):
        if fld in DUMMY_FIELDS:
            bad |= ~np.isin(vals, (0.0, 1.0))
        elif fld == "advance_days":
            bad |= vals < 0
        elif fld == "load_factor":
            bad |= (vals <= 0) | (vals > 1)
        elif fld in ("row_density_index", "pitch_index"):
            bad |= (vals <= 0) | (vals > 100)
        elif fld == "departure_hour":
            bad |= (vals < 0) | (vals > 23) | (vals != np.round(vals))
        elif fld in INTEGER_FIELDS:
            bad |= vals != np.round(vals)
        else:
            bad |= vals <= 0
    return bad


def filter_records(frame: pd.DataFrame, spec: int | SpecDefinition | None = None) -> tuple[pd.DataFrame, FilterReport]:
    """Drop records that cannot enter ``spec`` (default: every field) and count failures per field.

    A record failing several fields is counted under each of them.
    """
    fields = get_spec(spec).required_fields if spec is not None else RECORD_FIELDS
    keep = np.ones(len(frame), dtype=bool)
    exclusions = {}
    for fld in fields:
        if fld not in frame.columns:
            raise BuildError(f"column {fld!r} is missing", {"columns": [fld]})
        bad = _field_failures(frame, fld)
        if bad.any():
            exclusions[fld] = int(bad.sum())
        keep &= ~bad
    kept = frame.loc[keep].reset_index(drop=True)
    report = FilterReport(len(frame), int(keep.sum()), exclusions)
    if report.n_excluded:
        log.info("validity filter dropped %d of %d records: %s", report.n_excluded, report.n_in, exclusions)
    return kept, report


# --------------------------------------------------------------------------- control blocks


@dataclass(frozen=True)
class ControlBlock:
    """Indicator columns of one categorical block, base level dropped."""

    name: str
    matrix: sp.csc_matrix
    levels: tuple[str, ...]
    base: str | None

    @property
    def candidates(self) -> int:
        return self.matrix.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [f"{self.name}={lvl}" for lvl in self.levels]


def _indicator(codes: np.ndarray, ncols: int) -> sp.csc_matrix:
    n = len(codes)
    mask = codes >= 0
    return sp.csc_matrix(
        (np.ones(mask.sum()), (np.flatnonzero(mask), codes[mask])), shape=(n, ncols), dtype=float
    )


def _categorical_block(name: str, labels: np.ndarray, cap: int | None = None) -> ControlBlock:
    """Indicator block for one categorical variable.

    Levels are sorted by label; the most frequent level (ties: smallest label)
    is the base. With ``cap``, levels beyond the ``cap`` most frequent are
    folded into the base.
    """
    uniq, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    order = np.lexsort((np.arange(len(uniq)), -counts))
    base_idx = order[0]
    keep = np.zeros(len(uniq), dtype=bool)
    kept_levels = order[: cap] if cap is not None else order
    keep[kept_levels] = True
    if cap is not None and len(uniq) > cap:
        log.info("%s: %d levels observed, %d rarest folded into base", name, len(uniq), len(uniq) - cap)
    keep[base_idx] = False
    col_of = np.full(len(uniq), -1)
    col_of[np.flatnonzero(keep)] = np.arange(keep.sum())
    codes = col_of[inverse]
    return ControlBlock(name, _indicator(codes, int(keep.sum())), tuple(str(u) for u in uniq[keep]), str(uniq[base_idx]))


def _airport_block(origin: np.ndarray, destination: np.ndarray) -> ControlBlock:
    uniq, inv = np.unique(np.concatenate([origin, destination]).astype(str), return_inverse=True)
    n = len(origin)
    rows = np.concatenate([np.arange(n), np.arange(n)])
    m = sp.csr_matrix((np.ones(2 * n), (rows, inv)), shape=(n, len(uniq)))
    m.data[:] = 1.0  # origin == destination would otherwise give 2
    m = m.tocsc()
    counts = np.diff(m.indptr)
    order = np.lexsort((np.arange(len(uniq)), -counts))
    base_idx = order[0]
    keep = (counts > 0) & (counts < n)
    keep[base_idx] = False
    return ControlBlock("airport", m[:, np.flatnonzero(keep)].tocsc(), tuple(uniq[keep]), str(uniq[base_idx]))


def profile_labels(frame: pd.DataFrame, coding: "ProfileCoding | None" = None) -> np.ndarray:
    coding = coding or ProfileCoding()
    coding.check(frame)
    parts = [frame[c].astype(str).to_numpy(dtype=object) for c in ("age_band", "income_band", "sex", "trips_band")]
    return np.array(["|".join(t) for t in zip(*parts)], dtype=object)


@dataclass(frozen=True)
class ProfileCoding:
    """Declared bands of the passenger-profile attributes."""

    age_bands: tuple = tuple(range(1, 11))
    income_bands: tuple = tuple(range(1, 11))
    sexes: tuple = ("F", "M")
    trips_bands: tuple = tuple(range(0, 9))

    @property
    def combinations(self) -> int:
        return len(self.age_bands) * len(self.income_bands) * len(self.sexes) * len(self.trips_bands)

    def check(self, frame: pd.DataFrame) -> None:
        for col, allowed in (("age_band", self.age_bands), ("income_band", self.income_bands),
                             ("sex", self.sexes), ("trips_band", self.trips_bands)):
            vals = frame[col]
            if col != "sex":
                vals = pd.to_numeric(vals, errors="coerce")
            bad = ~vals.isin(allowed)
            if bad.any():
                raise CodingError(f"{col}: undeclared band value(s) {sorted(map(str, vals[bad].unique()))[:5]}")


def expand_profile_dummies(profiles, cap: int = 1761, coding: ProfileCoding | None = None) -> ControlBlock:
    """One indicator per observed (age, income, sex, trips) combination, no base dropped.

    ``profiles`` is a DataFrame with the four band columns or a sequence of
    4-tuples. Beyond ``cap`` combinations, the rarest share one column.
    """
    if not isinstance(profiles, pd.DataFrame):
        profiles = pd.DataFrame(list(profiles), columns=["age_band", "income_band", "sex", "trips_band"])
    labels = profile_labels(profiles, coding)
    uniq, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if len(uniq) > cap:
        order = np.lexsort((np.arange(len(uniq)), -counts))
        keep = np.zeros(len(uniq), dtype=bool)
        keep[order[: cap - 1]] = True
        col_of = np.full(len(uniq), cap - 1)
        col_of[np.flatnonzero(keep)] = np.arange(cap - 1)
        codes = col_of[inverse]
        levels = tuple(uniq[keep]) + ("other",)
        return ControlBlock("pax_profile", _indicator(codes, cap), levels, None)
    return ControlBlock("pax_profile", _indicator(inverse, len(uniq)), tuple(uniq), None)


# --------------------------------------------------------------------------- design


@dataclass(frozen=True)
class DesignMatrix:
    """Outcome, interest columns, candidate-control blocks and cluster labels for one spec."""

    spec: SpecDefinition
    outcome: np.ndarray
    interest: np.ndarray
    interest_names: tuple[str, ...]
    blocks: tuple[ControlBlock, ...]
    clusters: np.ndarray
    degenerate: tuple[str, ...] = ()
    config: DesignConfig = field(default_factory=DesignConfig)

    @property
    def n(self) -> int:
        return len(self.outcome)

    @property
    def n_clusters(self) -> int:
        return len(np.unique(self.clusters))

    def block(self, name: str) -> ControlBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def controls(self) -> tuple[sp.csc_matrix, list[str], np.ndarray]:
        """All candidate controls stacked, their names, and the block index of each column."""
        if not self.blocks:
            return sp.csc_matrix((self.n, 0)), [], np.zeros(0, dtype=int)
        mat = sp.hstack([b.matrix for b in self.blocks], format="csc")
        names = [nm for b in self.blocks for nm in b.column_names]
        owner = np.concatenate([np.full(b.candidates, i) for i, b in enumerate(self.blocks)]).astype(int)
        return mat, names, owner


def interest_column(frame: pd.DataFrame, var: str, config: DesignConfig) -> np.ndarray:
    fld, kind = VARIABLES[var]
    vals = frame[fld].to_numpy(dtype=float)
    if kind == "log":
        return log_transform(vals, var)
    if kind == "dummy":
        return vals.copy()
    if kind == "adv":
        if np.any(vals < 0):
            raise TransformError(var, "negative advance days")
        return vals.copy() if config.adv_transform == "level" else np.log1p(vals)
    bucket = bucket_codes(frame["advance_days"].to_numpy(dtype=float), config.bucket_edges)
    return vals * (bucket == ADV_BUCKETS.index(INTERACTION_BUCKET[var]))


def build_design(
    records: pd.DataFrame | Sequence[ObservationRecord],
    spec: int | SpecDefinition,
    config: DesignConfig | None = None,
) -> DesignMatrix:
    """Assemble the design for ``spec`` from validity-filtered records.

    Raises
    ------
    BuildError
        Empty input, or a field the specification needs is missing on some records
        (``offending`` maps field to the first offending row positions).
    TransformError
        A logged variable is nonpositive.
    """
    config = config or DesignConfig()
    spec = get_spec(spec).check()
    frame = records if isinstance(records, pd.DataFrame) else records_to_frame(records)
    if len(frame) == 0:
        raise BuildError("no records to build a design from")
    offending = {}
    for fld in spec.required_fields:
        if fld not in frame.columns:
            offending[fld] = "column absent"
            continue
        miss = frame[fld].isna().to_numpy()
        if miss.any():
            offending[fld] = np.flatnonzero(miss)[:20].tolist()
    if offending:
        raise BuildError(f"spec {spec.spec_id}: required fields missing on some records", offending)

    y = log_transform(frame["fare"].to_numpy(dtype=float), "P")
    cols, names, degenerate = [], [], []
    for var in spec.interest:
        col = interest_column(frame, var, config)
        if np.ptp(col) == 0:
            degenerate.append(var)
            log.warning("spec %s: interest column %s is constant and is set aside", spec.spec_id, var)
            continue
        cols.append(col)
        names.append(var)
    interest = np.column_stack(cols) if cols else np.zeros((len(frame), 0))

    blocks = []
    for b in spec.blocks:
        if b == "survey_date":
            blocks.append(_categorical_block(b, frame["survey_date"].astype(str).to_numpy(dtype=object)))
        elif b == "departure_hour":
            hours = frame["departure_hour"].astype(int).map("{:02d}".format).to_numpy(dtype=object)
            blocks.append(_categorical_block(b, hours))
        elif b == "airport":
            blocks.append(_airport_block(frame["origin"].to_numpy(dtype=str), frame["destination"].to_numpy(dtype=str)))
        else:
            blocks.append(_categorical_block(b, profile_labels(frame), cap=config.profile_cap))
    clusters = np.array([cluster_key(o, d) for o, d in zip(frame["origin"], frame["destination"])], dtype=object)
    return DesignMatrix(spec, y, interest, tuple(names), tuple(blocks), clusters, tuple(degenerate), config)


# --------------------------------------------------------------------------- cabin join


def seat_lookup_table(
    registry: Mapping[str, CabinLayout], references: Mapping[str, ModelReference]
) -> pd.DataFrame:
    """Seat flags and cabin indices for every existing seat of every registered layout."""
    rows = []
    for key, layout in registry.items():
        ref = references.get(layout.aircraft_model)
        rd = row_density_index(layout, ref.max_rows) if ref else np.nan
        pi = pitch_index(layout, ref.max_pitch) if ref and layout.pitch_sections else np.nan
        for r, ch in layout.seats():
            f = seat_flags(layout, r, ch)
            rows.append((key, r, ch, int(f.is_middle), int(f.is_window), int(f.is_last_row),
                         int(f.is_emergency_exit), int(f.is_comfort),
                         int(comfort_placebo(layout, r, ch, registry)), rd, pi))
    return pd.DataFrame(rows, columns=["layout", "seat_row", "seat_letter", "middle", "window", "last_row",
                                       "emergency_exit", "comfort", "comfort_placebo",
                                       "row_density_index", "pitch_index"])


def attach_cabin_attributes(
    frame: pd.DataFrame, registry: Mapping[str, CabinLayout], references: Mapping[str, ModelReference]
) -> pd.DataFrame:
    """Fill seat flags and cabin indices from ``layout``/``seat_row``/``seat_letter`` columns.

    Seats not found in the registry get missing values, so the validity filter drops them.
    """
    table = seat_lookup_table(registry, references).drop(columns="window")
    keys = ["layout", "seat_row", "seat_letter"]
    left = frame.drop(columns=[c for c in table.columns if c not in keys and c in frame.columns])
    left = left.assign(seat_row=pd.to_numeric(left["seat_row"], errors="coerce").astype("Int64"),
                       seat_letter=left["seat_letter"].astype(str).str.upper())
    table = table.assign(seat_row=table["seat_row"].astype("Int64"))
    out = left.merge(table, on=keys, how="left", validate="many_to_one")
    unmatched = int(out["middle"].isna().sum())
    if unmatched:
        log.warning("%d records reference seats absent from the layout registry", unmatched)
    return out
