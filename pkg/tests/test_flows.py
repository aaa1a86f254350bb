import gzip
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daytime_density.errors import BadGeoid
from daytime_density.flows import (
    FlowSummary,
    FlowTally,
    aggregate,
    aggregate_od_file,
    block_to_tract,
    merge_summaries,
    net_flow,
    read_marginals_csv,
    write_marginals_csv,
)
from daytime_density.lodes import ODFlow, ParseOptions, parse_od_stream, write_od_csv

A, B = "06075011700", "06001427100"


def blk(tract, n=1):
    return f"{tract}{n:04d}"


@pytest.mark.parametrize(
    "block, tract", [("060750117001001", "06075011700"), ("060014271001002", "06001427100")]
)
def test_block_to_tract(block, tract):
    assert block_to_tract(block) == tract


@pytest.mark.parametrize("bad", ["06075011700100", "0607501170010011", "06075011700100x", ""])
def test_block_to_tract_rejects(bad):
    with pytest.raises(BadGeoid):
        block_to_tract(bad)


def test_three_row_example():
    flows = [ODFlow(blk(A), blk(B), 5), ODFlow(blk(B), blk(A), 2), ODFlow(blk(A, 1), blk(A, 2), 3)]
    assert aggregate(flows) == {
        B: FlowSummary(B, inbound=2, outbound=5, intra=0),
        A: FlowSummary(A, inbound=8, outbound=5, intra=3),
    }


def test_empty_stream():
    assert aggregate([]) == {}


def test_single_intra_flow():
    (s,) = aggregate([ODFlow(blk(A), blk(A, 7), 7)]).values()
    assert s == FlowSummary(A, 7, 7, 7)
    assert net_flow(s) == 0


@pytest.mark.parametrize(
    "population, daytime, expected",
    [(1783, 70728, 68945), (3821, 3319, -502)],
)
def test_net_flow_matches_table_rows(population, daytime, expected):
    # daytime = population + inbound - outbound, so net flow is their difference
    s = FlowSummary("06075011700", inbound=daytime - population + 1000, outbound=1000)
    assert net_flow(s) == expected


def test_net_flow_balanced():
    assert net_flow(FlowSummary(A, 5, 5)) == 0


def test_summary_invariants():
    with pytest.raises(ValueError):
        FlowSummary(A, 1, 5, 2)
    with pytest.raises(ValueError):
        FlowSummary(A, -1, 0, 0)


def test_bad_geoid_propagates():
    with pytest.raises(BadGeoid):
        aggregate([ODFlow("0607501170010", blk(A), 1)])


def test_large_counts_do_not_wrap():
    big = 2**33
    (s,) = aggregate([ODFlow(blk(A), blk(A), big), ODFlow(blk(A), blk(A), big)]).values()
    assert s.inbound == s.outbound == 2**34


tracts = st.sampled_from(["06075011700", "06075020100", "06001400100", "06001427100", "06085500100"])
flow = st.builds(
    lambda w, h, bw, bh, n: ODFlow(f"{w}{bw:04d}", f"{h}{bh:04d}", n),
    tracts, tracts, st.integers(1000, 1003), st.integers(1000, 1003), st.integers(1, 500),
)


@given(st.lists(flow, max_size=80))
@settings(max_examples=100, deadline=None)
def test_conservation(flows):
    summaries = aggregate(flows).values()
    total = sum(f.jobs for f in flows)
    assert sum(s.inbound for s in summaries) == sum(s.outbound for s in summaries) == total
    assert sum(net_flow(s) for s in summaries) == 0


@given(st.lists(flow, max_size=80), st.randoms(use_true_random=False), st.integers(0, 80))
@settings(max_examples=100, deadline=None)
def test_order_and_partition_invariance(flows, rnd, cut):
    expected = aggregate(flows)
    shuffled = list(flows)
    rnd.shuffle(shuffled)
    assert aggregate(shuffled) == expected
    assert merge_summaries(aggregate(flows[:cut]), aggregate(flows[cut:])) == expected
    tally = FlowTally().add_flows(flows[:cut]).merge(FlowTally().add_flows(flows[cut:]))
    assert tally.summaries() == expected


@given(st.lists(flow, max_size=40), tracts, st.integers(1, 1000))
@settings(max_examples=50, deadline=None)
def test_intra_flows_are_neutral(flows, tract, jobs):
    before = {g: net_flow(s) for g, s in aggregate(flows).items()}
    after = {g: net_flow(s) for g, s in aggregate(flows + [ODFlow(blk(tract, 1), blk(tract, 2), jobs)]).items()}
    assert after.pop(tract) == before.pop(tract, 0)
    assert after == before


def test_file_aggregation_matches_stream(mini):
    expected = aggregate(parse_od_stream(mini / "od.csv.gz"))
    assert aggregate_od_file(mini / "od.csv.gz") == expected
    assert aggregate_od_file(mini / "od.csv.gz", ParseOptions(chunk_rows=2)) == expected


def test_parallel_file_aggregation(tmp_path):
    flows = [ODFlow(f"06075{i % 31:06d}1000", f"06001{i % 17:06d}1000", 1 + i % 3) for i in range(3000)]
    path = tmp_path / "od.csv.gz"
    with gzip.open(path, "wt") as fh:
        write_od_csv(flows, fh)
    assert aggregate_od_file(path, ParseOptions(chunk_rows=250, workers=2)) == aggregate(flows)


def test_marginals_csv_round_trip(mini):
    summaries = aggregate_od_file(mini / "od.csv.gz")
    buf = io.StringIO()
    write_marginals_csv(summaries, buf)
    assert buf.getvalue().splitlines()[0] == "geoid,inbound,outbound,intra"
    buf.seek(0)
    assert read_marginals_csv(buf) == summaries
