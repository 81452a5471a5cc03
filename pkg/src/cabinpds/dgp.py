"""Synthetic passenger-trip data with known coefficients, and Monte Carlo recovery.

The generator builds a route network, draws trips, seats them on the bundled
cabin layouts and composes log fare from the true coefficients, sparse
control effects, an airport-pair effect and idiosyncratic noise. Every
distributional choice is a :class:`DgpConfig` field.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from cabinpds.cabin import load_reference_table, load_registry
from cabinpds.design import (
    ControlBlock,
    DesignConfig,
    DesignMatrix,
    SpecDefinition,
    bucket_codes,
    build_design,
    cluster_key,
    seat_lookup_table,
)
from cabinpds.errors import CabinPdsError, ConfigError
from cabinpds.market import herfindahl_rows
from cabinpds.pds import EstimationSpec, run_specification

log = logging.getLogger(__name__)

AIRPORTS = (
    "AJU BEL BPS BSB BVB CAC CFB CGB CGH CGR CNF CPV CWB CXJ FEN FLN FOR GIG GRU GYN "
    "IGU IMP IOS JDO JOI JPA JPR LDB MAB MAO MCP MCZ MGF MOC NAT NVT PET PMW PNZ PVH "
    "RAO RBR REC SDU SJP SLZ SSA STM THE UBA UDI VCP VIX XAP PPB"
).split()

CARRIERS = ("Gol", "TAM", "Azul", "Avianca")
CARRIER_LAYOUTS = {
    "Gol": ("gol_737-800_177", "gol_737-800_178"),
    "TAM": ("tam_a320_156", "tam_a320_174"),
    "Azul": ("azul_atr72-600_68", "azul_e195_118"),
    "Avianca": ("avianca_a319_132", "avianca_a320_162"),
}

# spec 5 estimates, middle-by-advance terms from spec 6, IPITCH from spec 8
TABLE_TRUTH = {
    "ADV": -0.0033,
    "DIST": 0.2385,
    "BSN": 0.3912,
    "FLTIME": 0.4776,
    "SHIPMENT": 0.0376,
    "REVPAX": -0.1698,
    "LF": 0.1632,
    "FUELP": 0.7424,
    "HUB": 0.5306,
    "SEATSH": 0.0668,
    "RHHI": 0.1490,
    "LASTROW": 0.0322,
    "EMERGEXIT": 0.0306,
    "COMFORT": 0.6669,
    "COMFORT_PLACEBO": 0.0,
    "MIDDLE": 0.0649,
    "MIDDLE_1W": 0.2949,
    "MIDDLE_2W": 0.1018,
    "MIDDLE_3W": -0.0232,
    "MIDDLE_GT3W": -0.0358,
    "IROWDENS": -0.6872,
    "IPITCH": 1.0998,
}

# variables entering every outcome; middle and density terms depend on the mode switches
COMMON_TERMS = ("ADV", "DIST", "BSN", "FLTIME", "SHIPMENT", "REVPAX", "LF", "FUELP", "HUB", "SEATSH",
                "RHHI", "LASTROW", "EMERGEXIT", "COMFORT", "COMFORT_PLACEBO")
MIDDLE_BY_ADVANCE = ("MIDDLE_1W", "MIDDLE_2W", "MIDDLE_3W", "MIDDLE_GT3W")


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process. Defaults match the reference fare coefficients in TABLE_TRUTH.

    The outcome includes either pooled ``MIDDLE`` or the four advance-bucket
    interactions (``middle_mode``), and either ``IROWDENS`` or ``IPITCH``
    (``density_measure``).
    """

    n: int = 15_517
    n_routes: int = 333
    n_airports: int = 55
    n_dates: int = 130
    min_trips_per_route: int = 12
    seed: int = 20_160_301
    coefficients: Mapping[str, float] = field(default_factory=lambda: dict(TABLE_TRUTH))
    middle_mode: str = "by_advance"
    density_measure: str = "pitch"
    adv_transform: str = "level"
    mean_log_fare: float = 6.0
    noise_sd: float = 0.6
    cluster_sd: float = 0.2
    # route network
    airport_size_sd: float = 1.0
    route_factor_dist: float = 0.25
    route_factor_traffic: float = 0.8
    log_dist_mean: float = 6.55
    log_dist_sd: float = 0.55
    dist_bounds: tuple[float, float] = (150.0, 3500.0)
    fltime_route_sd: float = 0.15
    fltime_flight_sd: float = 0.05
    carrier_presence: tuple[float, float, float, float] = (0.85, 0.8, 0.45, 0.25)
    carrier_seat_sd: float = 0.2
    daily_seat_sd: float = 0.15
    layout_weights: Mapping[str, float] = field(default_factory=lambda: {
        "gol_737-800_177": 0.25, "gol_737-800_178": 0.15, "tam_a320_156": 0.15, "tam_a320_174": 0.20,
        "avianca_a320_162": 0.05, "avianca_a319_132": 0.05, "azul_atr72-600_68": 0.075,
        "azul_e195_118": 0.075})
    # passengers
    bsn_logit: float = -1.3
    bsn_peak_shift: float = 1.6
    bsn_peak_hours: tuple[int, ...] = (6, 7, 8, 17, 18, 19)
    adv_mean_business: float = 8.0
    adv_mean_leisure: float = 28.0
    hub_prob: float = 0.2
    middle_weight_late: float = 3.0
    middle_weight_early: float = 0.7
    late_days: int = 7
    hour_weights: tuple[float, ...] = (
        0.2, 0.1, 0.1, 0.1, 0.2, 0.6, 1.4, 1.8, 1.6, 1.2, 1.1, 1.0,
        1.0, 1.0, 1.1, 1.1, 1.3, 1.6, 1.8, 1.5, 1.2, 0.9, 0.6, 0.4)
    age_weights: tuple[float, ...] = (4, 9, 14, 15, 13, 11, 9, 7, 5, 3)
    income_weights: tuple[float, ...] = (3, 6, 10, 14, 15, 14, 12, 10, 9, 7)
    male_share: float = 0.58
    trips_weights: tuple[float, ...] = (25, 20, 15, 11, 9, 7, 6, 4, 3)
    # operations
    lf_mean_logit: float = 1.4
    lf_route_sd: float = 0.35
    lf_flight_sd: float = 0.45
    lf_peak_shift: float = 0.4
    bag_kg_per_pax: float = 14.0
    cargo_log_sd: float = 0.35
    fuel_log_mean: float = 0.75
    fuel_airport_sd: float = 0.08
    fuel_date_sd: float = 0.05
    fuel_flight_sd: float = 0.02
    # sparse control effects
    date_active: int = 10
    date_effect_range: tuple[float, float] = (0.15, 0.25)
    hour_effects: Mapping[int, float] = field(default_factory=lambda: {7: 0.12, 8: 0.15, 18: 0.12, 19: 0.10})
    airport_active: int = 12
    airport_effect_sd: float = 0.08
    profile_active: int = 40
    profile_effect_sd: float = 0.25

    def __post_init__(self):
        if self.middle_mode not in ("pooled", "by_advance"):
            raise ConfigError("middle_mode must be 'pooled' or 'by_advance'")
        if self.density_measure not in ("row_density", "pitch"):
            raise ConfigError("density_measure must be 'row_density' or 'pitch'")
        if self.adv_transform not in ("level", "log1p"):
            raise ConfigError("adv_transform must be 'level' or 'log1p'")
        for name in ("noise_sd", "cluster_sd", "airport_effect_sd", "profile_effect_sd", "carrier_seat_sd",
                     "daily_seat_sd", "fltime_route_sd", "fltime_flight_sd", "lf_route_sd", "lf_flight_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.n < 2 or self.n_routes < 2 or self.n_dates < 2 or self.n_airports < 3:
            raise ConfigError("need at least two routes, two dates and three airports")
        if self.n_airports > len(AIRPORTS):
            raise ConfigError(f"at most {len(AIRPORTS)} airports are available")
        if self.n_routes > self.n_airports * (self.n_airports - 1) // 2:
            raise ConfigError("more routes than airport pairs")
        if self.n < self.n_routes * self.min_trips_per_route:
            raise ConfigError("n too small for the per-route minimum")
        if not all(math.isfinite(v) for v in self.coefficients.values()):
            raise ConfigError("coefficients must be finite")
        missing = [v for v in self.outcome_terms if v not in self.coefficients]
        if missing:
            raise ConfigError(f"no true coefficient for {missing}")
        if self.middle_weight_late < 0 or self.middle_weight_early < 0:
            raise ConfigError("middle weights must be non-negative")
        middle_coefs = [self.coefficients[v] for v in self.outcome_terms if v.startswith("MIDDLE")]
        no_middle = self.middle_weight_late == 0 and self.middle_weight_early == 0
        middle_layouts = [k for k, w in self.layout_weights.items() if w > 0 and not k.startswith("azul")]
        if any(middle_coefs) and (no_middle or not middle_layouts):
            raise ConfigError("a middle-seat coefficient is nonzero but no middle seat can be drawn")
        if sum(self.layout_weights.values()) <= 0:
            raise ConfigError("layout weights must have a positive total")
        unknown = [k for k in self.layout_weights if not any(k in v for v in CARRIER_LAYOUTS.values())]
        if unknown:
            raise ConfigError(f"unknown layouts {unknown}")

    @property
    def outcome_terms(self) -> tuple[str, ...]:
        mid = ("MIDDLE",) if self.middle_mode == "pooled" else MIDDLE_BY_ADVANCE
        dens = ("IROWDENS",) if self.density_measure == "row_density" else ("IPITCH",)
        return COMMON_TERMS + mid + dens

    def replace(self, **changes) -> "DgpConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["coefficients"] = dict(self.coefficients)
        out["layout_weights"] = dict(self.layout_weights)
        out["hour_effects"] = {str(k): v for k, v in self.hour_effects.items()}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "DgpConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown DGP settings {sorted(unknown)}")
        kw = dict(data)
        if "coefficients" in kw:
            kw["coefficients"] = {**TABLE_TRUTH, **kw["coefficients"]}
        if "hour_effects" in kw:
            kw["hour_effects"] = {int(k): float(v) for k, v in kw["hour_effects"].items()}
        for f in dataclasses.fields(cls):
            if f.name in kw and isinstance(kw[f.name], list):
                kw[f.name] = tuple(kw[f.name])
        return cls(**kw)


PRESETS: dict[str, dict] = {
    "pooled_rowdensity": {"middle_mode": "pooled", "density_measure": "row_density"},
    "byadvance_rowdensity": {"middle_mode": "by_advance", "density_measure": "row_density"},
    "byadvance_pitch": {"middle_mode": "by_advance", "density_measure": "pitch"},
}


def preset(name: str, **overrides) -> DgpConfig:
    try:
        return DgpConfig(**{**PRESETS[name], **overrides})
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class GeneratedDataset:
    """Records (as a frame in the ingestion schema) with the truths that produced them."""

    frame: pd.DataFrame
    truth: dict[str, float]
    active_controls: dict[str, dict[str, float]]
    config: DgpConfig

    @property
    def records(self):
        from cabinpds.design import frame_to_records

        return frame_to_records(self.frame)

    def truth_table(self) -> pd.DataFrame:
        rows = [("coefficient", k, v) for k, v in self.truth.items()]
        for block, eff in self.active_controls.items():
            rows += [(block, lvl, v) for lvl, v in sorted(eff.items())]
        return pd.DataFrame(rows, columns=["kind", "name", "value"])


@lru_cache(maxsize=1)
def _seat_tables():
    table = seat_lookup_table(load_registry(), load_reference_table())
    capacity = table.groupby("layout").size().to_dict()
    return {k: g.reset_index(drop=True) for k, g in table.groupby("layout")}, capacity


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def _categorical(rng, weights, size):
    w = np.asarray(weights, dtype=float)
    return rng.choice(len(w), size=size, p=w / w.sum())


def generate(config: DgpConfig = DgpConfig(), seed: int | None = None) -> GeneratedDataset:
    """Draw one dataset. Identical (config, seed) gives an identical frame."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    c = config
    tables, capacity = _seat_tables()
    n = c.n

    # network --------------------------------------------------------------
    airports = np.array(sorted(AIRPORTS[: c.n_airports]))
    size = rng.normal(0, c.airport_size_sd, c.n_airports)
    ia, ib = np.triu_indices(c.n_airports, 1)
    pair_w = np.exp(size[ia] + size[ib])
    pick = rng.choice(len(ia), size=c.n_routes, replace=False, p=pair_w / pair_w.sum())
    pick.sort()
    ra, rb = ia[pick], ib[pick]
    factor = rng.normal(0, 1, c.n_routes)
    log_dist = np.clip(c.log_dist_mean + c.route_factor_dist * factor
                       + rng.normal(0, c.log_dist_sd, c.n_routes), *np.log(c.dist_bounds))
    dist = np.round(np.exp(log_dist), 1)
    fl_route = rng.normal(0, c.fltime_route_sd, c.n_routes)
    presence = rng.random((c.n_routes, len(CARRIERS))) < np.asarray(c.carrier_presence)
    presence[~presence.any(axis=1), 0] = True
    route_seats = (presence * np.exp(0.5 * factor[:, None] + rng.normal(0, c.carrier_seat_sd,
                                                                         presence.shape)) * 900)
    lf_route = rng.normal(0, c.lf_route_sd, c.n_routes)
    cluster_eff = rng.normal(0, c.cluster_sd, c.n_routes)

    dates = pd.date_range("2016-02-01", periods=365, freq="D")
    date_idx = np.sort(rng.choice(365, size=c.n_dates, replace=False))
    date_labels = np.array([d.strftime("%Y-%m-%d") for d in dates[date_idx]])
    fuel_air = rng.normal(0, c.fuel_airport_sd, c.n_airports)
    fuel_date = np.cumsum(rng.normal(0, c.fuel_date_sd / 4, c.n_dates))
    fuel_date -= fuel_date.mean()
    daily = route_seats[:, None, :] * np.exp(rng.normal(0, c.daily_seat_sd, (c.n_routes, c.n_dates, len(CARRIERS))))
    daily = np.round(daily)
    daily[daily <= 0] = 0
    for r, k in zip(*np.nonzero(presence)):
        daily[r, :, k] = np.maximum(daily[r, :, k], 1)

    # trips -------------------------------------------------------------------
    traffic = np.exp(c.route_factor_traffic * factor)
    extra = rng.choice(c.n_routes, size=n - c.n_routes * c.min_trips_per_route, p=traffic / traffic.sum())
    route = np.sort(np.concatenate([np.repeat(np.arange(c.n_routes), c.min_trips_per_route), extra]))
    route = rng.permutation(route)
    flip = rng.random(n) < 0.5
    o_idx = np.where(flip, rb[route], ra[route])
    d_idx = np.where(flip, ra[route], rb[route])
    date = rng.integers(0, c.n_dates, n)
    hour = _categorical(rng, c.hour_weights, n)

    # carrier by route-date seats, layout by carrier
    seats_rd = daily[route, date, :]
    lw = np.array([sum(c.layout_weights.get(l, 0.0) for l in CARRIER_LAYOUTS[k]) for k in CARRIERS])
    cw = seats_rd * (lw > 0)
    cw[cw.sum(axis=1) == 0] = seats_rd[cw.sum(axis=1) == 0]
    cum = np.cumsum(cw, axis=1)
    u = rng.random(n) * cum[:, -1]
    carrier = (u[:, None] >= cum).sum(axis=1)
    layout = np.empty(n, dtype=object)
    for k, name in enumerate(CARRIERS):
        idx = np.flatnonzero(carrier == k)
        opts = CARRIER_LAYOUTS[name]
        w = np.array([c.layout_weights.get(l, 0.0) for l in opts])
        if w.sum() == 0:
            w = np.ones(len(opts))
        layout[idx] = np.array(opts, dtype=object)[_categorical(rng, w, len(idx))]

    share = seats_rd[np.arange(n), carrier] / seats_rd.sum(axis=1)
    seatsh = 100.0 * share
    rhhi = herfindahl_rows(seats_rd)

    # passengers
    peak = np.isin(hour, c.bsn_peak_hours)
    bsn = (rng.random(n) < _logistic(c.bsn_logit + c.bsn_peak_shift * peak)).astype(int)
    mean_adv = np.where(bsn == 1, c.adv_mean_business, c.adv_mean_leisure)
    adv = rng.geometric(1.0 / (mean_adv + 1.0)) - 1
    hub = (rng.random(n) < c.hub_prob).astype(int)
    age = _categorical(rng, c.age_weights, n) + 1
    income = _categorical(rng, c.income_weights, n) + 1
    sex = np.where(rng.random(n) < c.male_share, "M", "F")
    trips = _categorical(rng, c.trips_weights, n)

    # seats
    late = adv <= c.late_days
    seat_rows = np.zeros(n, dtype=int)
    seat_letters = np.empty(n, dtype=object)
    flags = {k: np.zeros(n) for k in ("middle", "last_row", "emergency_exit", "comfort", "comfort_placebo",
                                      "row_density_index", "pitch_index")}
    for name, tab in tables.items():
        for is_late in (False, True):
            idx = np.flatnonzero((layout == name) & (late == is_late))
            if not len(idx):
                continue
            w = np.where(tab["middle"].to_numpy() == 1,
                         c.middle_weight_late if is_late else c.middle_weight_early, 1.0)
            if w.sum() == 0:
                w = np.ones(len(tab))
            pick_seat = rng.choice(len(tab), size=len(idx), p=w / w.sum())
            seat_rows[idx] = tab["seat_row"].to_numpy()[pick_seat]
            seat_letters[idx] = tab["seat_letter"].to_numpy()[pick_seat]
            for k in flags:
                flags[k][idx] = tab[k].to_numpy()[pick_seat]
    cap = np.array([capacity[l] for l in layout], dtype=float)

    # operations
    lf = _logistic(c.lf_mean_logit + lf_route[route] + c.lf_peak_shift * peak
                   + rng.normal(0, c.lf_flight_sd, n))
    revpax = np.maximum(np.round(lf * cap), 1)
    lf = revpax / cap
    hold = np.round(revpax * c.bag_kg_per_pax * np.exp(rng.normal(0, c.cargo_log_sd, n)), 1)
    hold = np.maximum(hold, 1.0)
    fuel = np.round(np.exp(c.fuel_log_mean + fuel_air[o_idx] + fuel_date[date]
                           + rng.normal(0, c.fuel_flight_sd, n)), 4)
    fltime = np.round(np.exp(np.log(30 + dist[route] / 8.5) + fl_route[route]
                             + rng.normal(0, c.fltime_flight_sd, n)), 1)

    # control effects
    active = {}
    date_pick = rng.choice(c.n_dates, size=min(c.date_active, c.n_dates), replace=False)
    date_eff = np.zeros(c.n_dates)
    date_eff[date_pick] = rng.uniform(*c.date_effect_range, len(date_pick)) * rng.choice([-1, 1], len(date_pick))
    active["survey_date"] = {date_labels[i]: float(date_eff[i]) for i in np.sort(date_pick)}
    hour_eff = np.zeros(24)
    for h, v in c.hour_effects.items():
        hour_eff[int(h)] = v
    active["departure_hour"] = {f"{h:02d}": float(hour_eff[h]) for h in range(24) if hour_eff[h] != 0}
    air_pick = rng.choice(c.n_airports, size=min(c.airport_active, c.n_airports), replace=False)
    air_eff = np.zeros(c.n_airports)
    air_eff[air_pick] = rng.normal(0, c.airport_effect_sd, len(air_pick))
    active["airport"] = {airports[i]: float(air_eff[i]) for i in np.sort(air_pick)}
    # the most likely profiles carry effects, so they are observed often enough to matter
    prof_p = (np.asarray(c.age_weights)[:, None, None, None] * np.asarray(c.income_weights)[None, :, None, None]
              * np.array([1 - c.male_share, c.male_share])[None, None, :, None]
              * np.asarray(c.trips_weights)[None, None, None, :])
    top = np.argsort(-prof_p.ravel(), kind="stable")[: c.profile_active]
    prof_eff = np.zeros(prof_p.size)
    prof_eff[top] = rng.normal(0, c.profile_effect_sd, len(top))
    prof_code = np.ravel_multi_index((age - 1, income - 1, (sex == "M").astype(int), trips), prof_p.shape)
    sexes = ("F", "M")
    active["pax_profile"] = {
        f"{a + 1}|{i + 1}|{sexes[s]}|{t}": float(prof_eff[k])
        for k in sorted(top) for a, i, s, t in [np.unravel_index(k, prof_p.shape)]
    }

    # outcome
    x = {
        "ADV": adv.astype(float) if c.adv_transform == "level" else np.log1p(adv),
        "DIST": np.log(dist[route]),
        "BSN": bsn.astype(float),
        "FLTIME": np.log(fltime),
        "SHIPMENT": np.log(hold),
        "REVPAX": np.log(revpax),
        "LF": np.log(lf),
        "FUELP": np.log(fuel),
        "HUB": hub.astype(float),
        "SEATSH": np.log(seatsh),
        "RHHI": np.log(rhhi),
        "LASTROW": flags["last_row"],
        "EMERGEXIT": flags["emergency_exit"],
        "COMFORT": flags["comfort"],
        "COMFORT_PLACEBO": flags["comfort_placebo"],
        "MIDDLE": flags["middle"],
        "IROWDENS": np.log(flags["row_density_index"]),
        "IPITCH": np.log(flags["pitch_index"]),
    }
    bucket = bucket_codes(adv)
    for j, nm in enumerate(MIDDLE_BY_ADVANCE):
        x[nm] = flags["middle"] * (bucket == j)
    truth = {v: float(c.coefficients[v]) for v in c.outcome_terms}
    linear = sum(truth[v] * x[v] for v in c.outcome_terms)
    controls = (date_eff[date] + hour_eff[hour] + air_eff[o_idx] + air_eff[d_idx] + prof_eff[prof_code])
    eta = linear + controls
    intercept = c.mean_log_fare - float(np.mean(eta))
    log_fare = intercept + eta + cluster_eff[route] + rng.normal(0, c.noise_sd, n)

    frame = pd.DataFrame({
        "fare": np.exp(log_fare),
        "advance_days": adv,
        "distance_km": dist[route],
        "business_trip": bsn,
        "flight_minutes": fltime,
        "hold_kg": hold,
        "revenue_pax": revpax.astype(int),
        "load_factor": lf,
        "fuel_price": fuel,
        "connected": hub,
        "seat_share_pct": seatsh,
        "route_hhi": rhhi,
        "last_row": flags["last_row"].astype(int),
        "emergency_exit": flags["emergency_exit"].astype(int),
        "comfort": flags["comfort"].astype(int),
        "comfort_placebo": flags["comfort_placebo"].astype(int),
        "middle": flags["middle"].astype(int),
        "row_density_index": flags["row_density_index"],
        "pitch_index": flags["pitch_index"],
        "survey_date": date_labels[date],
        "departure_hour": hour,
        "origin": airports[o_idx],
        "destination": airports[d_idx],
        "age_band": age,
        "income_band": income,
        "sex": sex,
        "trips_band": trips,
        "carrier": np.array(CARRIERS)[carrier],
        "layout": layout,
        "seat_row": seat_rows,
        "seat_letter": seat_letters,
    })
    truth["(intercept)"] = intercept
    return GeneratedDataset(frame, truth, active, c)


# --------------------------------------------------------------------------- confounded design


@dataclass(frozen=True)
class ConfoundedConfig:
    """Small clustered design where one control drives both treatment and outcome."""

    n_clusters: int = 100
    cluster_size: int = 5
    p_controls: int = 50
    theta: float = 1.0
    confounder_to_treatment: float = 1.0
    confounder_to_outcome: float = 1.0
    cluster_sd: float = 0.5
    noise_sd: float = 1.0
    seed: int = 7


def generate_confounded(config: ConfoundedConfig = ConfoundedConfig(), seed: int | None = None) -> DesignMatrix:
    """Design with interest column ``D`` and Gaussian controls ``x=0..p-1``; control 0 confounds."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    c = config
    n = c.n_clusters * c.cluster_size
    g = np.repeat(np.arange(c.n_clusters), c.cluster_size)
    X = rng.normal(size=(n, c.p_controls))
    d = c.confounder_to_treatment * X[:, 0] + rng.normal(size=n)
    y = (c.theta * d + c.confounder_to_outcome * X[:, 0] + rng.normal(0, c.cluster_sd, c.n_clusters)[g]
         + rng.normal(0, c.noise_sd, n))
    block = ControlBlock("x", sp.csc_matrix(X), tuple(str(j) for j in range(c.p_controls)), None)
    spec = SpecDefinition("confounded", ("D",), ("x",))
    return DesignMatrix(spec, y, d[:, None], ("D",), (block,), np.array([f"g{k:03d}" for k in g], dtype=object))


# --------------------------------------------------------------------------- recovery


@dataclass(frozen=True)
class CoefficientRecovery:
    name: str
    truth: float
    mean_estimate: float
    bias: float
    empirical_sd: float
    mean_se: float
    coverage_95: float
    within_2se: float
    sign_rate: float
    replications: int


@dataclass(frozen=True)
class RecoveryReport:
    spec_id: int | str
    rows: tuple[CoefficientRecovery, ...]
    replications: int
    failures: int
    seconds: float
    estimates: np.ndarray
    std_errors: np.ndarray
    seeds: tuple[int, ...]

    def row(self, name: str) -> CoefficientRecovery:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(r) for r in self.rows])

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format="%.10g", lineterminator="\n")

    def to_text(self) -> str:
        df = self.to_frame()
        return (f"recovery for spec {self.spec_id}: {self.replications} replications, "
                f"{self.failures} failed\n" + df.to_string(index=False, float_format=lambda v: f"{v:.4f}") + "\n")


def replication_seeds(seed: int, replications: int) -> tuple[int, ...]:
    children = np.random.SeedSequence(seed).spawn(replications)
    return tuple(int(ch.generate_state(1, dtype=np.uint32)[0]) for ch in children)


def summarize(names: Sequence[str], truths: Sequence[float], est: np.ndarray, se: np.ndarray,
              spec_id, failures: int, seconds: float, seeds) -> RecoveryReport:
    rows = []
    for j, (nm, tr) in enumerate(zip(names, truths)):
        e, s = est[:, j], se[:, j]
        ok = np.isfinite(e) & np.isfinite(s)
        e, s = e[ok], s[ok]
        m = len(e)
        if m == 0:
            rows.append(CoefficientRecovery(nm, tr, *([math.nan] * 7), 0))
            continue
        # errors at rounding level count as covered even when the reported SE is itself ~0
        err = np.maximum(np.abs(e - tr) - 1e-9 * max(1.0, abs(tr)), 0.0)
        sign = float(np.mean(np.sign(e) == np.sign(tr))) if tr != 0 else math.nan
        rows.append(CoefficientRecovery(
            nm, tr, float(e.mean()), float(e.mean() - tr), float(e.std(ddof=1)) if m > 1 else 0.0,
            float(s.mean()), float(np.mean(err <= 1.959963984540054 * s)), float(np.mean(err <= 2 * s)),
            sign, m))
    return RecoveryReport(spec_id, tuple(rows), est.shape[0], failures, seconds, est, se, tuple(seeds))


def recovery_experiment(
    config: DgpConfig,
    replications: int,
    spec: int | SpecDefinition = 5,
    variables: Sequence[str] | None = None,
    estimation: EstimationSpec = EstimationSpec(),
    progress: Callable[[int, int], None] | None = None,
) -> RecoveryReport:
    """Generate, estimate and compare with the truth over derived seeds.

    Replications that raise are counted in ``failures`` and leave NaN rows.
    """
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    design_cfg = DesignConfig(adv_transform=config.adv_transform)
    seeds = replication_seeds(config.seed, replications)
    names = None
    est = se = None
    failures = 0
    start = time.perf_counter()
    for i, s in enumerate(seeds):
        data = generate(config, seed=s)
        try:
            design = build_design(data.frame, spec, design_cfg)
            res = run_specification(design, estimation)
        except CabinPdsError as exc:
            failures += 1
            log.warning("replication %d (seed %d) failed: %s", i, s, exc)
            continue
        if names is None:
            names = list(variables) if variables is not None else [v for v in res.names if v in data.truth]
            est = np.full((replications, len(names)), np.nan)
            se = np.full((replications, len(names)), np.nan)
        for j, nm in enumerate(names):
            if nm in res.names:
                est[i, j] = res.coefficient(nm)
                se[i, j] = res.std_error(nm)
        if progress:
            progress(i + 1, replications)
    if names is None:
        raise ConfigError("every replication failed")
    truths = [config.coefficients.get(v, 0.0) if v in config.outcome_terms else 0.0 for v in names]
    return summarize(names, truths, est, se, spec if isinstance(spec, int) else spec.spec_id, failures,
                     time.perf_counter() - start, seeds)


def confounded_experiment(config: ConfoundedConfig, replications: int,
                          estimation: EstimationSpec = EstimationSpec()) -> RecoveryReport:
    seeds = replication_seeds(config.seed, replications)
    est = np.full((replications, 1), np.nan)
    se = np.full((replications, 1), np.nan)
    start = time.perf_counter()
    for i, s in enumerate(seeds):
        res = run_specification(generate_confounded(config, seed=s), estimation)
        est[i, 0], se[i, 0] = res.coef[0], res.se[0]
    return summarize(["D"], [config.theta], est, se, "confounded", 0, time.perf_counter() - start, seeds)


def config_to_json(config: DgpConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2)
