"""MATPOWER case-file ingestion.

Reads the ``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen`` and ``mpc.branch``
tables of a MATPOWER ``.m`` case body and condenses them into the bus
topology used by the dynamic model: which buses host generators, which
are loads, branch reactances, and nominal bus loads.
"""

from __future__ import annotations

import importlib.resources
import re
from dataclasses import dataclass, field

from .errors import CaseParseError, StructuralError

CASE_ALIASES = {"ieee14": "case14", "ieee39": "case39", "ieee57": "case57"}

# column offsets in the MATPOWER tables
_BUS_I, _BUS_PD = 0, 2
_GEN_BUS, _GEN_STATUS = 0, 7
_BR_F, _BR_T, _BR_X, _BR_STATUS = 0, 1, 3, 10


@dataclass(frozen=True)
class BusTopology:
    """Static network description extracted from a case file."""

    bus_ids: tuple
    generator_buses: tuple
    load_buses: tuple
    branches: tuple            # (from_bus, to_bus, reactance) triples
    base_mva: float
    loads_mw: dict = field(default_factory=dict, compare=False)
    name: str = ""

    @property
    def n_gen(self):
        return len(self.generator_buses)

    @property
    def n_load(self):
        return len(self.load_buses)

    def gen_index(self, bus):
        return self.generator_buses.index(bus)

    def load_index(self, bus):
        return self.load_buses.index(bus)

    def validate(self):
        """Raise StructuralError when any topology invariant is broken."""
        if set(self.generator_buses) & set(self.load_buses):
            raise StructuralError("generator and load bus sets overlap")
        if set(self.generator_buses) | set(self.load_buses) != set(self.bus_ids):
            raise StructuralError("generator/load split does not cover all buses")
        known = set(self.bus_ids)
        for f, t, x in self.branches:
            if f not in known or t not in known:
                raise StructuralError(f"branch ({f},{t}) references unknown bus")
            if x <= 0:
                raise StructuralError(f"branch ({f},{t}) has non-positive reactance {x}")
        if not _connected(self.bus_ids, self.branches):
            raise StructuralError("branch graph is not connected")
        return self


def _connected(bus_ids, branches):
    if not bus_ids:
        return False
    adj = {b: [] for b in bus_ids}
    for f, t, _ in branches:
        adj[f].append(t)
        adj[t].append(f)
    seen = {bus_ids[0]}
    stack = [bus_ids[0]]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(bus_ids)


def _strip_comment(line):
    pos = line.find("%")
    return line[:pos] if pos >= 0 else line


def _parse_matrix(lines, start, name):
    """Parse rows of ``mpc.<name> = [ ... ];`` starting after the opener."""
    rows = []
    i = start
    while i < len(lines):
        raw = lines[i]
        text = _strip_comment(raw).strip()
        i += 1
        if not text:
            continue
        closed = "]" in text
        text = text.split("]")[0].strip()
        if text:
            for rowtxt in filter(None, (s.strip() for s in text.split(";"))):
                row = []
                for tok in rowtxt.split():
                    try:
                        row.append(float(tok))
                    except ValueError:
                        raise CaseParseError(
                            f"bad numeric token {tok!r} in mpc.{name}", line=i
                        ) from None
                rows.append((row, i))
        if closed:
            return rows, i
    raise CaseParseError(f"mpc.{name} table is not terminated", line=len(lines))


def parse_case(text: str) -> BusTopology:
    """Parse a MATPOWER case body into a BusTopology.

    Buses listed in the gen table (with status on) are generator buses,
    everything else is a load bus. Only branch reactances are kept; the
    susceptance model downstream is reactance-only.
    """
    lines = text.splitlines()
    base_mva = None
    tables = {}
    name = ""
    opener = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[")
    i = 0
    while i < len(lines):
        stripped = _strip_comment(lines[i]).strip()
        i += 1
        if not stripped:
            continue
        m = re.match(r"function\s+mpc\s*=\s*(\w+)", stripped)
        if m:
            name = m.group(1)
            continue
        m = re.match(r"mpc\.baseMVA\s*=\s*([0-9eE+.\-]+)\s*;", stripped)
        if m:
            try:
                base_mva = float(m.group(1))
            except ValueError:
                raise CaseParseError("bad baseMVA value", line=i) from None
            continue
        m = opener.search(stripped)
        if m:
            which = m.group(1)
            if which in tables:
                raise CaseParseError(f"duplicate mpc.{which} table", line=i)
            tables[which], i = _parse_matrix(lines, i, which)

    if base_mva is None:
        raise CaseParseError("missing mpc.baseMVA")
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseParseError(f"missing mpc.{required} table")

    bus_ids = []
    loads_mw = {}
    for row, ln in tables["bus"]:
        if len(row) < 3:
            raise CaseParseError("bus row too short", line=ln)
        bus = int(row[_BUS_I])
        if bus in loads_mw:
            raise StructuralError(f"duplicate bus id {bus}")
        bus_ids.append(bus)
        loads_mw[bus] = row[_BUS_PD]

    gen_buses = set()
    for row, ln in tables["gen"]:
        if len(row) < 2:
            raise CaseParseError("gen row too short", line=ln)
        status = row[_GEN_STATUS] if len(row) > _GEN_STATUS else 1.0
        if status > 0:
            gen_buses.add(int(row[_GEN_BUS]))

    branches = []
    for row, ln in tables["branch"]:
        if len(row) < 4:
            raise CaseParseError("branch row too short", line=ln)
        status = row[_BR_STATUS] if len(row) > _BR_STATUS else 1.0
        if status > 0:
            branches.append((int(row[_BR_F]), int(row[_BR_T]), float(row[_BR_X])))

    generator_buses = tuple(sorted(gen_buses))
    load_buses = tuple(sorted(set(bus_ids) - gen_buses))
    topo = BusTopology(
        bus_ids=tuple(bus_ids),
        generator_buses=generator_buses,
        load_buses=load_buses,
        branches=tuple(branches),
        base_mva=base_mva,
        loads_mw=loads_mw,
        name=name,
    )
    return topo.validate()


def case_text(case: str) -> str:
    """Return the vendored case body for ieee14/ieee39/ieee57."""
    try:
        stem = CASE_ALIASES[case]
    except KeyError:
        raise StructuralError(
            f"unknown case {case!r}; expected one of {sorted(CASE_ALIASES)}"
        ) from None
    ref = importlib.resources.files("gridcaps.data") / "cases" / f"{stem}.m"
    return ref.read_text()


def load_case(case: str) -> BusTopology:
    """Parse one of the vendored IEEE cases by name."""
    return parse_case(case_text(case))
