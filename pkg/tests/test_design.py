import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cabinpds.cabin import load_reference_table, load_registry
from cabinpds.design import (
    ADV_BUCKETS,
    RECORD_FIELDS,
    SPECS,
    DesignConfig,
    ObservationRecord,
    SpecDefinition,
    attach_cabin_attributes,
    bucket_advance,
    bucket_codes,
    build_design,
    cluster_key,
    expand_profile_dummies,
    filter_records,
    frame_to_records,
    get_spec,
    load_spec_file,
    log_transform,
    read_records_csv,
    records_to_frame,
    write_records_csv,
)
from cabinpds.errors import BuildError, CodingError, ConfigError, DomainError, TransformError


@pytest.mark.parametrize("x,expected", [(1.0, 0.0), (math.e, 1.0), (100.0, 4.605170185988092)])
def test_log_transform(x, expected):
    assert log_transform(x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_log_transform_names_variable(bad):
    with pytest.raises(TransformError, match="DIST"):
        log_transform(np.array([1.0, bad]), "DIST")


@pytest.mark.parametrize("days,bucket", [(0, "week1"), (7, "week1"), (8, "week2"), (14, "week2"),
                                          (15, "week3"), (21, "week3"), (22, "beyond3"), (30, "beyond3")])
def test_bucket_advance(days, bucket):
    assert bucket_advance(days) == bucket
    assert ADV_BUCKETS[bucket_codes(np.array([days]))[0]] == bucket


def test_bucket_advance_negative():
    with pytest.raises(DomainError):
        bucket_advance(-1)


@given(st.floats(0, 400, allow_nan=False))
def test_buckets_partition(days):
    assert bucket_advance(days) == ADV_BUCKETS[int(bucket_codes(np.array([days]))[0])]


def test_cluster_key_order_invariant():
    assert cluster_key("GRU", "SDU") == cluster_key("SDU", "GRU") == "GRU-SDU"


def test_spec_catalogue():
    assert SPECS[1].interest == ("ADV", "DIST", "IROWDENS")
    assert set(SPECS[2].interest) - set(SPECS[1].interest) == {"BSN"}
    assert set(SPECS[3].interest) - set(SPECS[2].interest) == {"FLTIME", "SHIPMENT", "REVPAX", "LF", "FUELP", "HUB"}
    assert set(SPECS[4].interest) - set(SPECS[3].interest) == {"SEATSH", "RHHI"}
    assert set(SPECS[5].interest) - set(SPECS[4].interest) == {"LASTROW", "EMERGEXIT", "COMFORT", "MIDDLE"}
    assert set(SPECS[6].interest) ^ set(SPECS[5].interest) == {
        "MIDDLE", "COMFORT_PLACEBO", "MIDDLE_1W", "MIDDLE_2W", "MIDDLE_3W", "MIDDLE_GT3W"}
    assert SPECS[7].interest == SPECS[6].interest
    assert set(SPECS[8].interest) ^ set(SPECS[7].interest) == {"IROWDENS", "IPITCH"}
    assert SPECS[6].blocks == ("survey_date", "departure_hour")
    assert SPECS[7].blocks == SPECS[8].blocks == ("survey_date", "departure_hour", "airport", "pax_profile")
    for bad in (0, 9):
        with pytest.raises(ConfigError):
            get_spec(bad)


def test_spec_file(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("id: mini\ninterest: [ADV, BSN]\nblocks: [departure_hour]\n")
    spec = load_spec_file(p)
    assert spec.interest == ("ADV", "BSN") and spec.blocks == ("departure_hour",)
    p.write_text('{"interest": ["NOPE"], "blocks": []}')
    with pytest.raises(ConfigError):
        load_spec_file(p)


def test_build_shapes_and_blocks(small_dataset):
    frame = small_dataset.frame
    for s in range(1, 9):
        d = build_design(frame, s)
        assert d.interest.shape == (len(frame), len(SPECS[s].interest))
        assert [b.name for b in d.blocks] == list(SPECS[s].blocks)
        assert d.outcome.shape == (len(frame),)
        np.testing.assert_allclose(d.outcome, np.log(frame["fare"]))
    d = build_design(frame, 8)
    assert d.block("survey_date").candidates == frame["survey_date"].nunique() - 1
    assert d.block("departure_hour").candidates == frame["departure_hour"].nunique() - 1
    assert d.n_clusters == frame.apply(lambda r: cluster_key(r.origin, r.destination), axis=1).nunique()


def test_spec1_spec2_differ_by_bsn(small_dataset):
    a = build_design(small_dataset.frame, 1)
    b = build_design(small_dataset.frame, 2)
    assert set(b.interest_names) - set(a.interest_names) == {"BSN"}
    j = b.interest_names.index("BSN")
    np.testing.assert_array_equal(b.interest[:, j], small_dataset.frame["business_trip"])


def test_interactions_partition_middle(small_dataset):
    d = build_design(small_dataset.frame, 6)
    idx = [d.interest_names.index(v) for v in ("MIDDLE_1W", "MIDDLE_2W", "MIDDLE_3W", "MIDDLE_GT3W")]
    np.testing.assert_array_equal(d.interest[:, idx].sum(axis=1), small_dataset.frame["middle"])


def test_adv_transform(small_dataset):
    frame = small_dataset.frame
    lvl = build_design(frame, 1)
    log1p = build_design(frame, 1, DesignConfig(adv_transform="log1p"))
    np.testing.assert_array_equal(lvl.interest[:, 0], frame["advance_days"])
    np.testing.assert_allclose(log1p.interest[:, 0], np.log1p(frame["advance_days"]))


def test_indicator_blocks_are_binary_full_rank(small_dataset):
    d = build_design(small_dataset.frame, 7)
    for b in d.blocks:
        m = b.matrix.toarray()
        assert set(np.unique(m)) <= {0.0, 1.0}
        assert np.all(m.std(axis=0) > 0)
        if b.name != "airport":
            assert np.all(m.sum(axis=1) <= 1)
        # base column dropped, so the block is full column rank even alongside an intercept
        assert np.linalg.matrix_rank(np.column_stack([np.ones(len(m)), m])) == m.shape[1] + 1


def test_airport_block_flags_both_ends(small_dataset):
    frame = small_dataset.frame
    b = build_design(frame, 7).block("airport")
    m = b.matrix.toarray()
    for j, code in enumerate(b.levels[:5]):
        expect = ((frame["origin"] == code) | (frame["destination"] == code)).to_numpy(dtype=float)
        np.testing.assert_array_equal(m[:, j], expect)


def test_degenerate_middle_column(small_dataset):
    frame = small_dataset.frame.assign(middle=0)
    d = build_design(frame, 5)
    assert "MIDDLE" in d.degenerate and "MIDDLE" not in d.interest_names


def test_build_errors(small_dataset):
    with pytest.raises(BuildError):
        build_design(small_dataset.frame.iloc[:0], 1)
    frame = small_dataset.frame.copy()
    frame.loc[[3, 9], "distance_km"] = np.nan
    with pytest.raises(BuildError) as err:
        build_design(frame, 1)
    assert err.value.offending["distance_km"] == [3, 9]
    with pytest.raises(BuildError):
        build_design(small_dataset.frame.drop(columns="pitch_index"), 8)


def test_build_is_deterministic(small_dataset):
    a = build_design(small_dataset.frame, 8)
    b = build_design(small_dataset.frame, 8)
    ca, na, _ = a.controls()
    cb, nb, _ = b.controls()
    assert na == nb and (ca != cb).nnz == 0


def test_filter_records_reports_per_field(small_dataset):
    frame = small_dataset.frame.copy()
    frame.loc[0, "fare"] = -5
    frame.loc[1, "load_factor"] = 1.2
    frame.loc[2, "middle"] = 2
    frame.loc[3, "pitch_index"] = np.nan
    kept, report = filter_records(frame)
    assert report.exclusions == {"fare": 1, "load_factor": 1, "middle": 1, "pitch_index": 1}
    assert report.n_out == len(frame) - 4 == len(kept)
    kept1, report1 = filter_records(frame, 1)
    assert "pitch_index" not in report1.exclusions and report1.n_out == len(frame) - 1


def test_record_round_trip(small_dataset, tmp_path):
    recs = frame_to_records(small_dataset.frame.head(20))
    assert isinstance(recs[0], ObservationRecord)
    back = records_to_frame(recs)
    assert list(back.columns) == list(RECORD_FIELDS)
    path = tmp_path / "r.csv"
    write_records_csv(small_dataset.frame.head(20), path)
    again = read_records_csv(path)
    pd.testing.assert_frame_equal(again[list(RECORD_FIELDS)], back, check_dtype=False, rtol=1e-9)
    np.testing.assert_allclose(build_design(again, 6).interest, build_design(back, 6).interest, rtol=1e-9)


def test_profile_dummies_examples():
    same = expand_profile_dummies([(3, 4, "F", 1), (3, 4, "F", 1)])
    assert same.candidates == 1 and same.matrix.toarray().sum() == 2
    distinct = expand_profile_dummies([(1, 1, "F", 0), (2, 1, "F", 0), (1, 2, "M", 8)])
    assert distinct.candidates == 3
    np.testing.assert_array_equal(distinct.matrix.toarray().sum(axis=0), 1)
    with pytest.raises(CodingError):
        expand_profile_dummies([(11, 1, "F", 0)])
    with pytest.raises(CodingError):
        expand_profile_dummies([(1, 1, "X", 0)])


def test_profile_dummies_distinct_count_oracle():
    rng = np.random.default_rng(12)
    roster = list(zip(rng.integers(1, 11, 5000), rng.integers(1, 11, 5000), rng.choice(["F", "M"], 5000),
                      rng.integers(0, 9, 5000)))
    distinct = len({(int(a), int(i), str(s), int(t)) for a, i, s, t in roster})
    assert distinct <= 1761
    block = expand_profile_dummies(roster)
    assert block.candidates == distinct
    np.testing.assert_array_equal(block.matrix.toarray().sum(axis=1), 1)


def test_profile_cap_folds_rarest():
    rng = np.random.default_rng(13)
    roster = list(zip(rng.integers(1, 11, 20_000), rng.integers(1, 11, 20_000), rng.choice(["F", "M"], 20_000),
                      rng.integers(0, 9, 20_000)))
    block = expand_profile_dummies(roster, cap=1761)
    assert block.candidates == 1761 and block.levels[-1] == "other"


def test_custom_spec(small_dataset):
    spec = SpecDefinition("mini", ("ADV", "BSN"), ("departure_hour",))
    d = build_design(small_dataset.frame, spec)
    assert d.interest_names == ("ADV", "BSN") and d.spec.spec_id == "mini"


def test_attach_cabin_attributes_recomputes_flags(small_dataset):
    frame = small_dataset.frame.head(300)
    stripped = frame.drop(columns=["middle", "comfort", "pitch_index"])
    out = attach_cabin_attributes(stripped, load_registry(), load_reference_table())
    np.testing.assert_array_equal(out["middle"].to_numpy(), frame["middle"].to_numpy())
    np.testing.assert_array_equal(out["comfort"].to_numpy(), frame["comfort"].to_numpy())
    np.testing.assert_allclose(out["pitch_index"].to_numpy(dtype=float), frame["pitch_index"].to_numpy())
    bogus = stripped.assign(seat_row=99)
    out = attach_cabin_attributes(bogus, load_registry(), load_reference_table())
    assert out["middle"].isna().all()
