"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written in a different style from the
library code: event-driven scalar simulation instead of vectorized
topological sweeps, exhaustive enumeration instead of search, triple-loop
matmul instead of numpy.  Slow and obviously correct.
"""

from __future__ import annotations

import random

from locktime.netlist import Circuit, Gate, GateType

_BOOL_FUNCS = {
    GateType.AND: lambda vs: all(vs),
    GateType.NAND: lambda vs: not all(vs),
    GateType.OR: lambda vs: any(vs),
    GateType.NOR: lambda vs: not any(vs),
    GateType.XOR: lambda vs: sum(vs) % 2 == 1,
    GateType.XNOR: lambda vs: sum(vs) % 2 == 0,
    GateType.NOT: lambda vs: not vs[0],
    GateType.BUFF: lambda vs: vs[0],
}


def eval_gate(gtype: GateType, values, lut_table=None) -> bool:
    if gtype is GateType.LUT:
        idx = 0
        for v in values:  # first fanin = MSB
            idx = (idx << 1) | int(bool(v))
        return bool(lut_table[idx])
    return _BOOL_FUNCS[gtype]([bool(v) for v in values])


def event_driven_simulate(c: Circuit, inputs, key=()):
    """Reference simulator: worklist of gates whose fanins are all known."""
    key = list(key)
    key_slots = {}
    pos = 0
    for gid, width in c.key_layout():
        key_slots[gid] = key[pos:pos + width]
        pos += width
    assert pos == len(key), f"key length {len(key)} != layout {pos}"

    known = {}
    for gid, bit in zip(c.primary_inputs, inputs):
        known[gid] = bool(bit)
    for gid in c.key_inputs:
        known[gid] = bool(key_slots[gid][0])

    fanout = {g.id: [] for g in c.gates}
    missing = {}
    for g in c.gates:
        if g.type is GateType.INPUT:
            continue
        missing[g.id] = sum(1 for f in g.fanin if f not in known)
        for f in g.fanin:
            fanout[f].append(g.id)

    work = [gid for gid, m in missing.items() if m == 0]
    while work:
        gid = work.pop()
        if gid in known:
            continue
        g = c.gates[gid]
        table = key_slots.get(gid) if g.type is GateType.LUT else None
        known[gid] = eval_gate(g.type, [known[f] for f in g.fanin], table)
        for nxt in fanout[gid]:
            if nxt in known:
                continue
            missing[nxt] -= 1
            if missing[nxt] == 0:
                work.append(nxt)

    return tuple(int(known[gid]) for gid in c.primary_outputs)


def enumerate_cnf(clauses, n_vars):
    """All satisfying assignments of a clause list, by brute force.

    Clauses are lists of nonzero ints (DIMACS convention).  Returns a list
    of dicts var -> bool.  Only sane for small n_vars.
    """
    sols = []
    for m in range(1 << n_vars):
        assign = {v: bool((m >> (v - 1)) & 1) for v in range(1, n_vars + 1)}
        ok = True
        for cl in clauses:
            if not any(assign[abs(l)] == (l > 0) for l in cl):
                ok = False
                break
        if ok:
            sols.append(assign)
    return sols


def cnf_is_satisfiable(clauses, n_vars):
    for m in range(1 << n_vars):
        if all(any(((m >> (abs(l) - 1)) & 1) == (l > 0) for l in cl) for cl in clauses):
            return True
    return False


def enumerate_models_np(clauses, n_vars):
    """Vectorized brute-force model enumeration.

    Returns a (n_models, n_vars) uint8 matrix; column j is variable j+1.
    Independent of both the scalar enumerator above and the package's
    solver; usable up to ~22 variables.
    """
    import numpy as np

    count = 1 << n_vars
    idx = np.arange(count, dtype=np.uint64)
    sat = np.ones(count, dtype=bool)
    for cl in clauses:
        cl_sat = np.zeros(count, dtype=bool)
        for lit in cl:
            bit = ((idx >> np.uint64(abs(lit) - 1)) & np.uint64(1)).astype(bool)
            cl_sat |= bit if lit > 0 else ~bit
        sat &= cl_sat
    models = np.nonzero(sat)[0].astype(np.uint64)
    if n_vars == 0:
        return np.zeros((models.size, 0), dtype=np.uint8)
    cols = [((models >> np.uint64(v)) & np.uint64(1)).astype(np.uint8)
            for v in range(n_vars)]
    return np.stack(cols, axis=1)


def naive_matmul(a, b):
    """Triple-loop matrix product over plain lists."""
    n, k = len(a), len(a[0])
    k2, m = len(b), len(b[0])
    assert k == k2
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


_RAND_TYPES = [GateType.AND, GateType.NAND, GateType.OR, GateType.NOR,
               GateType.XOR, GateType.XNOR, GateType.NOT, GateType.BUFF]


def random_circuit(rng: random.Random, n_inputs=None, n_gates=None) -> Circuit:
    """Random small DAG over the eight standard gate types."""
    n_inputs = n_inputs if n_inputs is not None else rng.randint(1, 4)
    n_gates = n_gates if n_gates is not None else rng.randint(1, 8)
    gates = []
    for i in range(n_inputs):
        gates.append(Gate(i, f"pi{i}", GateType.INPUT))
    for j in range(n_gates):
        gid = n_inputs + j
        gtype = rng.choice(_RAND_TYPES)
        arity = 1 if gtype in (GateType.NOT, GateType.BUFF) else rng.randint(2, 3)
        fanin = tuple(rng.randrange(gid) for _ in range(arity))
        gates.append(Gate(gid, f"g{gid}", gtype, fanin))
    n_pos = rng.randint(1, min(3, n_gates))
    pos = tuple(rng.sample(range(n_inputs, n_inputs + n_gates), n_pos))
    return Circuit(tuple(gates), tuple(range(n_inputs)), pos)


def random_3sat(rng: random.Random, n_vars, n_clauses):
    clauses = []
    for _ in range(n_clauses):
        vs = rng.sample(range(1, n_vars + 1), min(3, n_vars))
        clauses.append([v if rng.random() < 0.5 else -v for v in vs])
    return clauses
