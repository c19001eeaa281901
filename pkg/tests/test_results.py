import pytest

from spaceris.results import SCHEMAS, Provenance, ResultTable, read_table, write_rows


def test_schema_and_units_rows(tmp_path):
    prov = Provenance("abc123", 7, 1)
    path = ResultTable("rates", [(0, 1, 2.5e9, 0.25), (1, 1, 0.0, 0.25)]).write(tmp_path, prov)
    meta, cols, units, rows = read_table(path)
    assert meta == {"schema": "1", "config": "abc123", "seed": "7", "workers": "1"}
    assert cols == list(SCHEMAS["rates"][0]) and units == ["-", "-", "bit/s", "W"]
    assert rows == [["0", "1", "2500000000.0", "0.25"], ["1", "1", "0.0", "0.25"]]


def test_floats_round_trip_exactly(tmp_path):
    x = 0.1 + 0.2
    path = write_rows(tmp_path / "t.csv", "linkbudget", [("total", x)])
    assert float(read_table(path)[3][0][1]) == x
    assert b"\r" not in path.read_bytes()


def test_bools_written_as_bits():
    text = ResultTable("bcd_trace", [(0, "init", 1.0, True)]).render()
    assert text.splitlines()[-1] == "0,init,1.0,1"


def test_row_width_checked():
    with pytest.raises(ValueError):
        ResultTable("rates", [(0, 1)]).render()


def test_every_schema_has_matching_units():
    for cols, units in SCHEMAS.values():
        assert len(cols) == len(units)
