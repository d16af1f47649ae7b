import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crashlab.doe import (
    DEFAULT_SPACE,
    DesignPoint,
    DoeMatrix,
    ParameterSpace,
    dumps_doe,
    lhs_sample,
    persist_doe,
    read_doe,
    snap,
)
from crashlab.errors import InvalidArgument, ParseError

CONTINUOUS = ("thickness", "punch_velocity", "layer_temp", "tool_temp", "air_temp")


def column(matrix, name):
    return np.array([getattr(p, name) for p in matrix.points])


def strata_counts(values, lo, hi, n):
    idx = np.floor((values - lo) / (hi - lo) * n).astype(int)
    return np.bincount(np.clip(idx, 0, n - 1), minlength=n)


def test_default_space_ranges():
    s = ParameterSpace()
    assert s.layer_values == (4, 6, 8, 10, 12, 14, 16)
    assert s.thickness_range == (0.1, 0.6)
    assert s.orientation_sets == (("A", (0, 45, -45, 90)), ("B", (30, -30, 60, -60)))
    assert s.punch_velocity_range == (4.0, 6.5)
    assert s.layer_temp_range == (200.0, 400.0)
    assert s.tool_temp_range == (20.0, 220.0)
    assert s.air_temp_range == (10.0, 30.0)


@pytest.mark.parametrize("bad", [
    dict(thickness_range=(0.6, 0.1)),
    dict(n_layers_range=(5, 16)),
    dict(air_temp_range=(30.0, 10.0)),
])
def test_invalid_space_rejected(bad):
    with pytest.raises(InvalidArgument):
        ParameterSpace(**bad)


def test_single_point_inside_space():
    m = lhs_sample(DEFAULT_SPACE, 1, 7)
    assert len(m) == 1
    m.points[0].validate()


def test_unit_interval_strata():
    space = ParameterSpace(air_temp_range=(0.0, 1.0))
    for seed in range(5):
        values = np.sort(column(lhs_sample(space, 4, seed), "air_temp"))
        for k, v in enumerate(values):
            assert k / 4 <= v < (k + 1) / 4


@pytest.mark.parametrize("n", [1, 4, 50, 400])
def test_stratification_and_even_layers(n):
    m = lhs_sample(DEFAULT_SPACE, n, 42)
    assert len(m) == n
    ranges = DEFAULT_SPACE.continuous_ranges()
    for name in CONTINUOUS:
        lo, hi = ranges[name]
        values = column(m, name)
        assert values.min() >= lo and values.max() <= hi
        assert np.all(strata_counts(values, lo, hi, n) == 1)
    assert set(column(m, "n_layers")) <= {4, 6, 8, 10, 12, 14, 16}


def test_layer_bins_are_balanced():
    # 7 even values over 70 stratified latents: exactly 10 per value.
    m = lhs_sample(DEFAULT_SPACE, 70, 3)
    _, counts = np.unique(column(m, "n_layers"), return_counts=True)
    assert list(counts) == [10] * 7


def test_determinism_and_seed_sensitivity():
    a = dumps_doe(lhs_sample(DEFAULT_SPACE, 400, 42))
    b = dumps_doe(lhs_sample(DEFAULT_SPACE, 400, 42))
    c = dumps_doe(lhs_sample(DEFAULT_SPACE, 400, 43))
    assert a == b
    assert a != c


def test_degenerate_interval_is_constant():
    space = ParameterSpace(air_temp_range=(18.0, 18.0), n_layers_range=(8, 8))
    m = lhs_sample(space, 20, 1)
    assert set(column(m, "air_temp")) == {18.0}
    assert set(column(m, "n_layers")) == {8}


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_bad_sample_count(n):
    with pytest.raises(InvalidArgument):
        lhs_sample(DEFAULT_SPACE, n, 1)


def test_bad_seed():
    with pytest.raises(InvalidArgument):
        lhs_sample(DEFAULT_SPACE, 3, -1)
    with pytest.raises(InvalidArgument):
        lhs_sample(DEFAULT_SPACE, 3, 2**64)
    lhs_sample(DEFAULT_SPACE, 3, 2**64 - 1)


def base_latents(**over):
    lat = dict(n_layers=0.5, thickness=0.5, orientation=0.2, punch_velocity=0.5,
               layer_temp=0.5, tool_temp=0.5, air_temp=0.5)
    lat.update(over)
    return [lat[k] for k in ("n_layers", "thickness", "orientation", "punch_velocity",
                             "layer_temp", "tool_temp", "air_temp")]


def test_snap_examples():
    assert snap(base_latents(n_layers=0.0)).n_layers == 4
    assert snap(base_latents(n_layers=0.999)).n_layers == 16
    assert snap(base_latents(orientation=0.49)).orientation == "A"
    assert snap(base_latents(orientation=0.5)).orientation == "B"
    assert snap(base_latents(thickness=0.5)).thickness == pytest.approx(0.35, abs=1e-15)


@pytest.mark.parametrize("u", [-0.1, 1.0, 1.5, float("nan")])
def test_snap_rejects_out_of_range_latent(u):
    with pytest.raises(InvalidArgument):
        snap(base_latents(air_temp=u))


def test_snap_rejects_wrong_length():
    with pytest.raises(InvalidArgument):
        snap([0.1] * 6)


@given(st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=7, max_size=7))
def test_snap_always_lands_in_space(latents):
    p = snap(latents)
    p.validate()
    assert p.n_layers % 2 == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 120), st.integers(0, 2**64 - 1))
def test_lhs_properties(n, seed):
    m = lhs_sample(DEFAULT_SPACE, n, seed)
    ranges = DEFAULT_SPACE.continuous_ranges()
    for name in CONTINUOUS:
        lo, hi = ranges[name]
        assert np.all(strata_counts(column(m, name), lo, hi, n) == 1)
    for p in m.points:
        p.validate()


# -- persistence ------------------------------------------------------------------

def test_round_trip_at_file_precision():
    m = lhs_sample(DEFAULT_SPACE, 50, 11)
    text = dumps_doe(m)
    back = read_doe(io.StringIO(text))
    assert back.seed == 11 and back.generator == "PCG64"
    assert dumps_doe(back) == text
    for p, q in zip(m.points, back.points):
        assert (p.n_layers, p.orientation) == (q.n_layers, q.orientation)
        for name in CONTINUOUS:
            assert getattr(q, name) == pytest.approx(getattr(p, name), rel=5e-6)


def test_round_trip_is_identity_for_file_precision_values():
    points = [DesignPoint(8, 0.25, "A", 5.0, 255.0, 153.0, 18.0),
              DesignPoint(16, 0.6, "B", 6.5, 400.0, 220.0, 30.0)]
    m = DoeMatrix(points=points, seed=5)
    assert read_doe(io.StringIO(dumps_doe(m))) == m


def test_file_layout():
    m = DoeMatrix(points=[DesignPoint(8, 0.25, "A", 5.0, 255.0, 153.0, 18.0)], seed=9)
    lines = dumps_doe(m).splitlines()
    assert lines[0] == "# seed=9 generator=PCG64"
    assert lines[1] == ("sample_id,n_layers,thickness_mm,orientation_set,"
                        "punch_velocity_mps,layer_temp_C,tool_temp_C,air_temp_C")
    assert lines[2] == "0,8,0.25,A,5,255,153,18"


HEADER = ("# seed=1 generator=PCG64\nsample_id,n_layers,thickness_mm,orientation_set,"
          "punch_velocity_mps,layer_temp_C,tool_temp_C,air_temp_C\n")


def test_header_only_file_is_empty_matrix():
    m = read_doe(io.StringIO(HEADER))
    assert len(m) == 0 and m.seed == 1


def test_odd_layer_count_names_row():
    text = HEADER + "0,8,0.25,A,5,255,153,18\n1,5,0.25,A,5,255,153,18\n"
    with pytest.raises(ParseError) as err:
        read_doe(io.StringIO(text))
    assert err.value.row == 4 and err.value.column == "n_layers"


@pytest.mark.parametrize("row, col", [
    ("0,8,0.25,C,5,255,153,18", "orientation_set"),
    ("0,8,0.9,A,5,255,153,18", "thickness_mm"),
    ("0,8,0.25,A,fast,255,153,18", "punch_velocity_mps"),
    ("0,8,0.25,A,5,255,153,45", "air_temp_C"),
])
def test_parse_errors_name_column(row, col):
    with pytest.raises(ParseError) as err:
        read_doe(io.StringIO(HEADER + row + "\n"))
    assert err.value.column == col and err.value.row == 3


def test_short_row_rejected():
    with pytest.raises(ParseError):
        read_doe(io.StringIO(HEADER + "0,8,0.25\n"))


def test_persist_to_stream():
    buf = io.StringIO()
    persist_doe(lhs_sample(DEFAULT_SPACE, 3, 2), buf)
    assert buf.getvalue().count("\n") == 5
