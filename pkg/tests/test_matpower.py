import pytest

from gridcaps.errors import CaseParseError, StructuralError
from gridcaps.matpower import case_text, load_case, parse_case

from conftest import TOY_CASE


def test_ieee39_generator_set():
    topo = load_case("ieee39")
    assert topo.generator_buses == tuple(range(30, 40))
    assert topo.n_load == 29
    assert topo.n_gen == 10


def test_ieee57_generator_set():
    topo = load_case("ieee57")
    assert topo.generator_buses == (1, 2, 3, 6, 8, 9, 12)
    assert topo.n_load == 50


def test_ieee14_counts():
    topo = load_case("ieee14")
    assert topo.generator_buses == (1, 2, 3, 6, 8)
    assert topo.n_load == 9
    assert topo.base_mva == 100.0
    assert len(topo.branches) == 20


def test_two_bus_toy():
    topo = parse_case(TOY_CASE)
    assert topo.generator_buses == (1,)
    assert topo.load_buses == (2,)
    assert topo.branches == ((1, 2, 0.1),)
    assert topo.base_mva == 100.0
    assert topo.loads_mw[2] == 20.0


def test_malformed_row_reports_line():
    bad = TOY_CASE.replace("1 2 0.0 0.1", "1 2 zz 0.1")
    with pytest.raises(CaseParseError) as err:
        parse_case(bad)
    assert err.value.line is not None
    assert "zz" in str(err.value)


def test_duplicate_bus_id():
    bad = TOY_CASE.replace("2 1 20 5", "1 1 20 5")
    with pytest.raises(StructuralError, match="duplicate bus"):
        parse_case(bad)


def test_disconnected_graph():
    bad = TOY_CASE.replace(
        "mpc.bus = [",
        "mpc.bus = [\n    3 1 5 0 0 0 1 1.0 0 0 1 1.06 0.94;",
    )
    with pytest.raises(StructuralError, match="not connected"):
        parse_case(bad)


def test_missing_table():
    bad = "function mpc = x\nmpc.baseMVA = 100;\n"
    with pytest.raises(CaseParseError, match="missing mpc.bus"):
        parse_case(bad)


def test_out_of_service_branch_skipped():
    text = case_text("ieee14")
    topo = parse_case(text)
    # flip one branch out of service; the 14-bus grid stays connected
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.strip().startswith("1\t2\t0.01938"):
            lines[i] = line.replace("\t1\t-360", "\t0\t-360")
            break
    topo2 = parse_case("\n".join(lines))
    assert len(topo2.branches) == len(topo.branches) - 1


def test_unknown_case_name():
    with pytest.raises(StructuralError, match="unknown case"):
        load_case("ieee118")
