"""Gate-level combinational netlists: bench-format parsing, validation,
simulation and graph-matrix extraction.

A circuit is a DAG of gates.  Primary inputs are ordinary nodes of type
INPUT so that every fanin edge has a real endpoint.  Key inputs (the
secret bits consumed by key-gates) are also INPUT-typed nodes but are
tracked separately in ``Circuit.key_inputs`` and get their values from the
``key`` argument of :func:`simulate`, never from the input vector.

LUT gates are k-input programmable gates.  Their truth table is a *key*:
simulation reads it from the key vector.  The ``lut_bits`` stored on the
gate record the ground-truth table so a locked netlist can round-trip
through the bench format; nothing on the attack path reads them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

KEY_INPUT_PREFIX = "keyinput"


class GateType(Enum):
    AND = "AND"
    NAND = "NAND"
    OR = "OR"
    NOR = "NOR"
    XOR = "XOR"
    XNOR = "XNOR"
    NOT = "NOT"
    BUFF = "BUFF"
    INPUT = "INPUT"
    LUT = "LUT"


# Fixed one-hot encoding order; feature width stays 10 across datasets.
ONE_HOT_ORDER = (
    GateType.AND, GateType.NAND, GateType.OR, GateType.NOR, GateType.XOR,
    GateType.XNOR, GateType.NOT, GateType.BUFF, GateType.INPUT, GateType.LUT,
)
ONE_HOT_INDEX = {t: i for i, t in enumerate(ONE_HOT_ORDER)}


class CircuitError(ValueError):
    """Structural invariant violation in a circuit."""


class BenchParseError(ValueError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Gate:
    id: int
    name: str
    type: GateType
    fanin: tuple[int, ...] = ()
    lut_bits: tuple[int, ...] | None = None  # ground-truth table, LUT only


@dataclass
class Circuit:
    """Immutable-by-convention gate-level netlist.

    ``gates[i].id == i`` for all i.  Derived lookup tables are computed once
    at construction; do not mutate fields afterwards.
    """

    gates: tuple[Gate, ...]
    primary_inputs: tuple[int, ...]
    primary_outputs: tuple[int, ...]
    key_inputs: tuple[int, ...] = ()
    name_to_id: dict = field(init=False, repr=False)
    topo_order: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.gates = tuple(self.gates)
        self.primary_inputs = tuple(self.primary_inputs)
        self.primary_outputs = tuple(self.primary_outputs)
        self.key_inputs = tuple(self.key_inputs)
        self._validate()

    @property
    def n(self):
        return len(self.gates)

    def gate(self, gid: int) -> Gate:
        return self.gates[gid]

    def _validate(self):
        n = len(self.gates)
        names = set()
        for i, g in enumerate(self.gates):
            if g.id != i:
                raise CircuitError(f"gate ids must be dense: gate at index {i} has id {g.id}")
            if g.name in names:
                raise CircuitError(f"duplicate gate name {g.name!r}")
            names.add(g.name)
            for f in g.fanin:
                if not 0 <= f < n:
                    raise CircuitError(f"gate {g.name!r} references missing gate id {f}")
            self._check_arity(g)
        self.name_to_id = {g.name: g.id for g in self.gates}

        pi_set = set(self.primary_inputs)
        key_set = set(self.key_inputs)
        if pi_set & key_set:
            raise CircuitError("a node cannot be both primary input and key input")
        for gid in list(self.primary_inputs) + list(self.key_inputs):
            if self.gates[gid].type is not GateType.INPUT:
                raise CircuitError(f"node {self.gates[gid].name!r} listed as input but is {self.gates[gid].type.value}")
        for g in self.gates:
            if g.type is GateType.INPUT and g.id not in pi_set and g.id not in key_set:
                raise CircuitError(f"INPUT gate {g.name!r} not listed in primary_inputs or key_inputs")
        for gid in self.primary_outputs:
            if not 0 <= gid < n:
                raise CircuitError(f"primary output id {gid} does not exist")
        self.topo_order = self._topo_sort()

    @staticmethod
    def _check_arity(g: Gate):
        k = len(g.fanin)
        t = g.type
        if t is GateType.INPUT:
            if k != 0:
                raise CircuitError(f"INPUT {g.name!r} must have no fanin")
        elif t in (GateType.NOT, GateType.BUFF):
            if k != 1:
                raise CircuitError(f"{t.value} {g.name!r} needs exactly 1 fanin, got {k}")
        elif t is GateType.LUT:
            if k < 1:
                raise CircuitError(f"LUT {g.name!r} needs at least 1 fanin")
            if g.lut_bits is not None and len(g.lut_bits) != 2 ** k:
                raise CircuitError(f"LUT {g.name!r} has {len(g.lut_bits)} table bits, expected {2 ** k}")
        else:
            if k < 2:
                raise CircuitError(f"{t.value} {g.name!r} needs at least 2 fanins, got {k}")

    def _topo_sort(self):
        # Kahn's algorithm; FIFO over ascending ids makes the order canonical.
        n = len(self.gates)
        indeg = [len(g.fanin) for g in self.gates]
        fanout = [[] for _ in range(n)]
        for g in self.gates:
            for f in g.fanin:
                fanout[f].append(g.id)
        queue = sorted(i for i in range(n) if indeg[i] == 0)
        order = []
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            order.append(u)
            for v in fanout[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        if len(order) != n:
            cyc = [self.gates[i].name for i in range(n) if indeg[i] > 0]
            raise CircuitError(f"circuit contains a cycle through: {', '.join(sorted(cyc)[:5])}")
        return tuple(order)

    def key_layout(self):
        """Ordered key slots: (gate_id, n_bits) per key input, then per LUT.

        Key-input bits come first in ``key_inputs`` list order, then each
        LUT's 2^k table block in ascending gate-id order.  For instances
        locked with a single scheme this equals location order.
        """
        slots = [(gid, 1) for gid in self.key_inputs]
        for g in self.gates:
            if g.type is GateType.LUT:
                slots.append((g.id, 2 ** len(g.fanin)))
        return slots

    @property
    def key_bits(self):
        return sum(w for _, w in self.key_layout())


@dataclass(frozen=True)
class GraphMatrix:
    """Dense n-by-n structure matrix with its construction tag."""

    kind: str  # "adjacency" | "laplacian"
    data: np.ndarray


_LINE_RE = re.compile(r"^(?P<name>[^\s=()]+)\s*=\s*(?P<rhs>.+)$")
_GATE_RE = re.compile(r"^(?P<type>[A-Za-z]+)\s*\((?P<args>[^)]*)\)\s*$")
_LUT_RE = re.compile(r"^(?P<type>LUT)\s*\[(?P<bits>[01]+)\]\s*\((?P<args>[^)]*)\)\s*$", re.IGNORECASE)
_IO_RE = re.compile(r"^(?P<kw>INPUT|OUTPUT)\s*\((?P<name>[^\s()]+)\)\s*$", re.IGNORECASE)


def parse_bench(text: str) -> Circuit:
    """Parse ISCAS-85 bench syntax into a validated :class:`Circuit`.

    Supported lines: ``INPUT(x)``, ``OUTPUT(y)``, ``y = TYPE(a, b, ...)``
    and the LUT extension ``y = LUT[bits](a, ...)`` where ``bits`` is the
    truth table in fanin-indexed order (first fanin = most significant).
    ``#`` starts a comment.  Type keywords are case-insensitive; BUF is
    accepted as an alias of BUFF.  INPUT names starting with ``keyinput``
    are treated as key inputs.
    """
    inputs: list[str] = []
    outputs: list[str] = []
    defs: list[tuple[str, GateType, list[str], tuple[int, ...] | None, int]] = []
    declared: dict[str, int] = {}  # name -> line of definition

    def declare(name, lineno):
        if name in declared:
            raise BenchParseError(f"duplicate definition of net {name!r} "
                                  f"(first defined on line {declared[name]})", lineno)
        declared[name] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        io = _IO_RE.match(line)
        if io:
            if io.group("kw").upper() == "INPUT":
                declare(io.group("name"), lineno)
                inputs.append(io.group("name"))
            else:
                outputs.append(io.group("name"))
            continue
        m = _LINE_RE.match(line)
        if not m:
            col = len(line) - len(line.lstrip()) + 1
            raise BenchParseError(f"cannot parse line: {line!r}", lineno, col)
        name, rhs = m.group("name"), m.group("rhs").strip()
        lut = _LUT_RE.match(rhs)
        if lut:
            args = [a.strip() for a in lut.group("args").split(",") if a.strip()]
            bits = tuple(int(b) for b in lut.group("bits"))
            if len(args) < 1:
                raise BenchParseError(f"LUT {name!r} needs at least one input", lineno)
            if len(bits) != 2 ** len(args):
                raise BenchParseError(
                    f"LUT {name!r} has {len(bits)} table bits for {len(args)} inputs "
                    f"(expected {2 ** len(args)})", lineno)
            declare(name, lineno)
            defs.append((name, GateType.LUT, args, bits, lineno))
            continue
        g = _GATE_RE.match(rhs)
        if not g:
            col = line.index("=") + 2
            raise BenchParseError(f"cannot parse gate expression {rhs!r}", lineno, col)
        type_kw = g.group("type").upper()
        if type_kw == "BUF":
            type_kw = "BUFF"
        if type_kw == "LUT":
            raise BenchParseError(f"LUT definition for {name!r} must carry a [bits] table", lineno)
        try:
            gtype = GateType[type_kw]
        except KeyError:
            col = line.index("=") + 2
            raise BenchParseError(f"unknown gate type {g.group('type')!r}", lineno, col) from None
        if gtype is GateType.INPUT:
            raise BenchParseError(f"INPUT is not a gate type (use INPUT({name}))", lineno)
        args = [a.strip() for a in g.group("args").split(",") if a.strip()]
        declare(name, lineno)
        defs.append((name, gtype, args, None, lineno))

    gates: list[Gate] = []
    ids: dict[str, int] = {}
    pis, keys = [], []
    for name in inputs:
        gid = len(gates)
        ids[name] = gid
        gates.append(Gate(gid, name, GateType.INPUT))
        (keys if name.lower().startswith(KEY_INPUT_PREFIX) else pis).append(gid)
    for name, gtype, args, bits, lineno in defs:
        gid = len(gates)
        ids[name] = gid
        gates.append(Gate(gid, name, gtype, fanin=(), lut_bits=bits))
    resolved: list[Gate] = []
    for g, (name, gtype, args, bits, lineno) in zip(gates[len(inputs):], defs):
        fanin = []
        for a in args:
            if a not in ids:
                raise BenchParseError(f"gate {name!r} references undefined net {a!r}", lineno)
            fanin.append(ids[a])
        resolved.append(Gate(g.id, name, gtype, tuple(fanin), bits))
    gates[len(inputs):] = resolved

    pos = []
    for name in outputs:
        if name not in ids:
            raise BenchParseError(f"OUTPUT({name}) references undefined net")
        pos.append(ids[name])
    try:
        return Circuit(tuple(gates), tuple(pis), tuple(pos), tuple(keys))
    except CircuitError as exc:
        raise BenchParseError(str(exc)) from exc


def emit_bench(c: Circuit) -> str:
    """Serialize a circuit back to bench text; re-parsing is isomorphic."""
    lines = []
    for gid in list(c.primary_inputs) + list(c.key_inputs):
        lines.append(f"INPUT({c.gates[gid].name})")
    for gid in c.primary_outputs:
        lines.append(f"OUTPUT({c.gates[gid].name})")
    if lines:
        lines.append("")
    for gid in c.topo_order:
        g = c.gates[gid]
        if g.type is GateType.INPUT:
            continue
        args = ", ".join(c.gates[f].name for f in g.fanin)
        if g.type is GateType.LUT:
            if g.lut_bits is None:
                raise CircuitError(f"LUT {g.name!r} has no table bits to emit")
            bits = "".join(str(b) for b in g.lut_bits)
            lines.append(f"{g.name} = LUT[{bits}]({args})")
        else:
            lines.append(f"{g.name} = {g.type.value}({args})")
    return "\n".join(lines) + ("\n" if lines else "")


def graph_matrix(c: Circuit, kind="adjacency", directed=False, self_loops=True) -> GraphMatrix:
    """Dense structure matrix of the fanin relation.

    ``w[i, j] = 1`` iff gate j is a fanin of gate i; undirected mode also
    sets the transpose, self_loops sets the diagonal.  The laplacian is
    ``D - W`` over the same connectivity.
    """
    if kind not in ("adjacency", "laplacian"):
        raise ValueError(f"unknown graph matrix kind {kind!r}")
    n = c.n
    w = np.zeros((n, n), dtype=np.float64)
    for g in c.gates:
        for f in g.fanin:
            w[g.id, f] = 1.0
            if not directed:
                w[f, g.id] = 1.0
    if self_loops:
        np.fill_diagonal(w, 1.0)
    if kind == "adjacency":
        return GraphMatrix("adjacency", w)
    lap = np.diag(w.sum(axis=1)) - w
    return GraphMatrix("laplacian", lap)


def _key_slices(c: Circuit):
    """Map each key slot to its slice of the flat key vector."""
    slices = {}
    pos = 0
    for gid, width in c.key_layout():
        slices[gid] = slice(pos, pos + width)
        pos += width
    return slices, pos


def simulate_many(c: Circuit, inputs: np.ndarray, key=()) -> np.ndarray:
    """Evaluate the circuit on a batch of input vectors.

    ``inputs`` is (batch, |PI|) of 0/1; ``key`` is a flat key vector laid
    out per :meth:`Circuit.key_layout`.  Returns (batch, |PO|) uint8.
    """
    inputs = np.asarray(inputs, dtype=np.uint8)
    if inputs.ndim != 2 or inputs.shape[1] != len(c.primary_inputs):
        raise ValueError(f"expected inputs of shape (batch, {len(c.primary_inputs)}), got {inputs.shape}")
    key = np.asarray(key, dtype=np.uint8).ravel()
    slices, total = _key_slices(c)
    if key.size != total:
        raise ValueError(f"expected {total} key bits, got {key.size}")

    batch = inputs.shape[0]
    vals: list[np.ndarray | None] = [None] * c.n
    for idx, gid in enumerate(c.primary_inputs):
        vals[gid] = inputs[:, idx].astype(bool)
    for gid in c.key_inputs:
        bit = bool(key[slices[gid]][0])
        vals[gid] = np.full(batch, bit, dtype=bool)

    for gid in c.topo_order:
        g = c.gates[gid]
        if g.type is GateType.INPUT:
            continue
        fin = [vals[f] for f in g.fanin]
        t = g.type
        if t is GateType.AND:
            v = np.logical_and.reduce(fin)
        elif t is GateType.NAND:
            v = ~np.logical_and.reduce(fin)
        elif t is GateType.OR:
            v = np.logical_or.reduce(fin)
        elif t is GateType.NOR:
            v = ~np.logical_or.reduce(fin)
        elif t is GateType.XOR:
            v = np.logical_xor.reduce(fin)
        elif t is GateType.XNOR:
            v = ~np.logical_xor.reduce(fin)
        elif t is GateType.NOT:
            v = ~fin[0]
        elif t is GateType.BUFF:
            v = fin[0]
        elif t is GateType.LUT:
            k = len(fin)
            idx = np.zeros(batch, dtype=np.int64)
            for i, f in enumerate(fin):  # first fanin is the most significant bit
                idx |= f.astype(np.int64) << (k - 1 - i)
            table = key[slices[gid]].astype(bool)
            v = table[idx]
        else:  # pragma: no cover
            raise CircuitError(f"cannot simulate gate type {t}")
        vals[gid] = v

    out = np.empty((batch, len(c.primary_outputs)), dtype=np.uint8)
    for j, gid in enumerate(c.primary_outputs):
        out[:, j] = vals[gid]
    return out


def simulate(c: Circuit, inputs, key=()) -> tuple[int, ...]:
    """Evaluate one input vector; returns the primary-output bits."""
    row = np.asarray(inputs, dtype=np.uint8).ravel()
    if row.size != len(c.primary_inputs):
        raise ValueError(f"expected {len(c.primary_inputs)} input bits, got {row.size}")
    out = simulate_many(c, row[None, :], key)
    return tuple(int(b) for b in out[0])


def all_input_vectors(n_inputs: int) -> np.ndarray:
    """All 2^n input vectors as a (2^n, n) array, MSB-first row encoding."""
    if n_inputs < 0:
        raise ValueError("n_inputs must be >= 0")
    count = 1 << n_inputs
    idx = np.arange(count, dtype=np.int64)
    cols = [(idx >> (n_inputs - 1 - i)) & 1 for i in range(n_inputs)]
    return np.stack(cols, axis=1).astype(np.uint8) if n_inputs else np.zeros((1, 0), np.uint8)
