import random

import numpy as np
import pytest

from locktime.cnf import (
    CnfFormula,
    add_dip_constraint,
    build_miter,
    parse_dimacs,
    to_dimacs,
    tseitin,
)
from locktime.netlist import GateType, all_input_vectors, parse_bench, simulate, simulate_many
from locktime.obfuscate import ObfuscationKind, insert_keygate, random_obfuscate
from oracles import enumerate_cnf, enumerate_models_np, random_circuit


def test_single_and_clause_set():
    c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n")
    f = tseitin(c)
    a, b, y = f.var_map["a"], f.var_map["b"], f.var_map["y"]
    assert (a, b, y) == (1, 2, 3)  # inputs first, then internals in topo order
    got = {frozenset(cl) for cl in f.clauses}
    assert got == {frozenset({-y, a}), frozenset({-y, b}), frozenset({y, -a, -b})}
    models = enumerate_cnf([list(cl) for cl in f.clauses], f.n_vars)
    assert {(m[a], m[b], m[y]) for m in models} == \
           {(False, False, False), (False, True, False),
            (True, False, False), (True, True, True)}


def test_not_clause_set():
    c = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n")
    f = tseitin(c)
    a, y = f.var_map["a"], f.var_map["y"]
    assert {frozenset(cl) for cl in f.clauses} == {frozenset({y, a}), frozenset({-y, -a})}


@pytest.mark.parametrize("gtype,arity,expect", [
    ("AND", 3, 4), ("NAND", 4, 5), ("OR", 2, 3), ("NOR", 3, 4),
    ("XOR", 2, 4), ("XNOR", 2, 4), ("BUFF", 1, 2),
])
def test_clause_counts(gtype, arity, expect):
    ins = "\n".join(f"INPUT(i{k})" for k in range(arity))
    args = ", ".join(f"i{k}" for k in range(arity))
    f = tseitin(parse_bench(f"{ins}\nOUTPUT(y)\ny = {gtype}({args})\n"))
    assert len(f.clauses) == expect


def test_lut1_models_are_inverter():
    c = parse_bench("INPUT(a)\nOUTPUT(y)\ny = LUT[10](a)\n")
    f = tseitin(c)
    a, y = f.var_map["a"], f.var_map["y"]
    k0, k1 = f.var_map["y$k0"], f.var_map["y$k1"]
    clauses = [list(cl) for cl in f.clauses] + [[k0], [-k1]]  # key = (1, 0)
    models = enumerate_cnf(clauses, f.n_vars)
    assert {(m[a], m[y]) for m in models} == {(False, True), (True, False)}
    assert len(models) == 2  # aux selector vars are forced


def test_lut2_models_match_every_table():
    c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = LUT[0000](a, b)\n")
    f = tseitin(c)
    a, b, y = f.var_map["a"], f.var_map["b"], f.var_map["y"]
    kv = [f.var_map[f"y$k{j}"] for j in range(4)]
    for table in range(16):
        bits = [(table >> (3 - j)) & 1 for j in range(4)]
        clauses = [list(cl) for cl in f.clauses]
        clauses += [[kv[j]] if bits[j] else [-kv[j]] for j in range(4)]
        models = enumerate_cnf(clauses, f.n_vars)
        assert len(models) == 4
        for m in models:
            idx = (int(m[a]) << 1) | int(m[b])
            assert int(m[y]) == bits[idx]


def test_projection_matches_simulation():
    """Model set projected onto nets == graph of simulate, small circuits."""
    rng = random.Random(19)
    for _ in range(25):
        c = random_circuit(rng, n_inputs=rng.randint(1, 3), n_gates=rng.randint(1, 6))
        f = tseitin(c)
        if f.n_vars > 18:
            continue
        models = enumerate_models_np([list(cl) for cl in f.clauses], f.n_vars)
        n_pi = len(c.primary_inputs)
        assert models.shape[0] == 2 ** n_pi  # exactly one model per input vector
        pi_vars = [f.var_map[c.gates[g].name] - 1 for g in c.primary_inputs]
        net_vars = {g.id: f.var_map[g.name] - 1 for g in c.gates}
        for row in models:
            invec = [row[v] for v in pi_vars]
            expect = {g.id: v for g, v in zip(c.gates, _all_values(c, invec))}
            for gid, var in net_vars.items():
                assert row[var] == expect[gid]


def _all_values(c, invec):
    """Recompute every net value via the public simulator, one net at a time."""
    from locktime.netlist import Circuit
    probe = Circuit(c.gates, c.primary_inputs, tuple(range(c.n)), c.key_inputs)
    return simulate(probe, invec)


def test_tseitin_var_numbering_with_keys(c17):
    inst = random_obfuscate(c17, 2, ObfuscationKind("xor"), seed=1)
    f = tseitin(inst.obfuscated)
    n_pi = len(c17.primary_inputs)
    for i, gid in enumerate(inst.obfuscated.primary_inputs):
        assert f.var_map[inst.obfuscated.gates[gid].name] == i + 1
    key_vars = [f.var_map[inst.obfuscated.gates[g].name] for g in inst.obfuscated.key_inputs]
    assert key_vars == [n_pi + 1, n_pi + 2]


def test_cnf_formula_validation():
    with pytest.raises(ValueError):
        CnfFormula([()], 2)
    with pytest.raises(ValueError):
        CnfFormula([(1, 3)], 2)
    with pytest.raises(ValueError):
        CnfFormula([(0,)], 2)


# --- miter ---

def _tiny_locked():
    base = parse_bench("INPUT(a)\nOUTPUT(z)\nz = NOT(a)\n")
    return base, insert_keygate(base, base.name_to_id["z"], "xor", 0)


def test_miter_requires_keys(c17):
    with pytest.raises(ValueError):
        build_miter(c17)


def test_miter_models_are_differing_key_pairs():
    base, obf = _tiny_locked()
    m = build_miter(obf)
    f = m.formula
    models = enumerate_models_np([list(cl) for cl in f.clauses], f.n_vars)
    assert models.shape[0] > 0  # some DIP distinguishes the two keys
    k1, k2 = m.key1_vars[0] - 1, m.key2_vars[0] - 1
    assert np.all(models[:, k1] != models[:, k2])


def test_redundant_keygate_miter_unsat():
    # key-gate output is ANDed with (a AND NOT a) == 0: key can never matter
    obf = parse_bench(
        "INPUT(a)\nINPUT(keyinput0)\nOUTPUT(z)\n"
        "na = NOT(a)\nc0 = AND(a, na)\nkg = XOR(na, keyinput0)\nz = AND(kg, c0)\n")
    m = build_miter(obf)
    f = m.formula
    models = enumerate_models_np([list(cl) for cl in f.clauses], f.n_vars)
    assert models.shape[0] == 0


def test_dip_constraint_prunes_and_extracts_key():
    base, obf = _tiny_locked()
    m = build_miter(obf)
    oracle_out = simulate(base, [0])
    m2 = add_dip_constraint(m, [0], oracle_out)
    f = m2.formula
    assert enumerate_models_np([list(cl) for cl in f.clauses], f.n_vars).shape[0] == 0
    g = m2.key_constraint_formula()
    models = enumerate_models_np([list(cl) for cl in g.clauses], g.n_vars)
    assert models.shape[0] > 0
    assert np.all(models[:, m2.key1_vars[0] - 1] == 0)  # only the correct key remains
    assert np.all(models[:, m2.key2_vars[0] - 1] == 0)


def test_dip_constraint_dimension_errors(c17):
    inst = random_obfuscate(c17, 1, ObfuscationKind("xor"), seed=2)
    m = build_miter(inst.obfuscated)
    with pytest.raises(ValueError):
        add_dip_constraint(m, [0, 1], [0, 0])
    with pytest.raises(ValueError):
        add_dip_constraint(m, [0, 1, 0, 1, 0], [0])


def test_miter_shares_inputs_between_copies(c17):
    inst = random_obfuscate(c17, 2, ObfuscationKind("lut", 2), seed=3)
    m = build_miter(inst.obfuscated)
    assert len(m.input_vars) == 5
    assert len(m.key1_vars) == len(m.key2_vars) == 8
    assert len(m.out1_vars) == len(m.out2_vars) == 2
    assert set(m.key1_vars).isdisjoint(m.key2_vars)


# --- dimacs ---

def test_dimacs_exact_format():
    assert to_dimacs(CnfFormula([(1, -2)], 2)) == "p cnf 2 1\n1 -2 0\n"
    assert to_dimacs(CnfFormula([], 3)) == "p cnf 3 0\n"


def test_dimacs_roundtrip(c17):
    f = tseitin(c17)
    back = parse_dimacs(to_dimacs(f))
    assert back.n_vars == f.n_vars
    assert sorted(back.clauses) == sorted(f.clauses)


def test_dimacs_parse_errors():
    with pytest.raises(ValueError):
        parse_dimacs("1 -2 0\n")  # no header
    with pytest.raises(ValueError):
        parse_dimacs("p cnf 2 1\n1 -2\n")  # unterminated


def test_enumerators_agree():
    rng = random.Random(23)
    for _ in range(20):
        n = rng.randint(1, 6)
        clauses = [[rng.choice([1, -1]) * rng.randint(1, n) for _ in range(rng.randint(1, 3))]
                   for _ in range(rng.randint(1, 8))]
        scalar = enumerate_cnf(clauses, n)
        vec = enumerate_models_np(clauses, n)
        assert len(scalar) == vec.shape[0]
        scalar_set = {tuple(int(m[v]) for v in range(1, n + 1)) for m in scalar}
        assert scalar_set == {tuple(int(x) for x in row) for row in vec}
