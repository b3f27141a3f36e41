"""Oracle-guided SAT attack (DIP loop) against locked circuits.

The attack owns a miter with two independent key copies.  While the miter
is satisfiable, the model yields a distinguishing input pattern (DIP): an
input on which the two keys disagree.  The oracle — simulation of the
unlocked base circuit — labels the DIP, and both key copies are
constrained to reproduce that label.  When the miter goes unsatisfiable,
every key consistent with the accumulated constraints is functionally
correct; one is extracted by solving the constraints without the
difference assertion.

Effort counters from all solver calls are summed and exposed as runtime
labels; ``conflicts`` is reproducible across machines, wall time is the
natural target but machine-dependent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cnf import add_dip_constraint, build_miter
from .netlist import Circuit, all_input_vectors, simulate, simulate_many
from .obfuscate import ObfuscationInstance
from .satsolve import SolverConfig, SolverStats, SolveStatus, solve

EXHAUSTIVE_PI_LIMIT = 16
RANDOM_VERIFY_VECTORS = 1000


class AttackStatus:
    SOLVED = "SOLVED"
    TIMEOUT = "TIMEOUT"


@dataclass
class AttackResult:
    recovered_key: tuple[int, ...] | None
    dips: list[tuple[int, ...]]
    iterations: int
    wall_seconds: float
    total_stats: SolverStats
    status: str
    per_solve: list[SolverStats] = field(default_factory=list)

    def verified(self) -> bool:
        return self.status == AttackStatus.SOLVED


LABEL_KINDS = ("wall_seconds", "log1p_seconds", "conflicts", "log1p_conflicts")


@dataclass(frozen=True)
class RuntimeLabel:
    instance_id: str
    label_value: float
    label_kind: str
    censored: bool = False


def verification_vectors(c: Circuit, seed: int = 0) -> np.ndarray:
    """Exhaustive inputs when |PI| <= 16, else 1000 seeded random vectors."""
    n = len(c.primary_inputs)
    if n <= EXHAUSTIVE_PI_LIMIT:
        return all_input_vectors(n)
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=(RANDOM_VERIFY_VECTORS, n), dtype=np.uint8)


def keys_equivalent(base: Circuit, obf: Circuit, key, seed: int = 0) -> bool:
    vecs = verification_vectors(base, seed)
    return bool(np.array_equal(simulate_many(base, vecs),
                               simulate_many(obf, vecs, key)))


def sat_attack(inst: ObfuscationInstance, timeout_seconds: float | None = None,
               solver_config: SolverConfig | None = None) -> AttackResult:
    """Run the DIP loop on one instance; see module docstring.

    ``timeout_seconds`` bounds the whole loop; a partial result with
    status TIMEOUT is returned when exceeded.  The wall clock covers
    miter construction through key extraction.
    """
    base_cfg = solver_config or SolverConfig()
    t0 = time.perf_counter()
    deadline = None if timeout_seconds is None else t0 + timeout_seconds

    def remaining():
        if deadline is None:
            return None
        return max(deadline - time.perf_counter(), 1e-9)

    def cfg():
        return SolverConfig(base_cfg.learning, base_cfg.restarts, base_cfg.seed,
                            remaining(), base_cfg.decay, base_cfg.restart_interval)

    total = SolverStats()
    per_solve: list[SolverStats] = []
    dips: list[tuple[int, ...]] = []

    def done(key, status):
        return AttackResult(key, dips, len(dips), time.perf_counter() - t0,
                            total, status, per_solve)

    miter = build_miter(inst.obfuscated)
    while True:
        res = solve(miter.formula, cfg())
        total = total.merged(res.stats)
        per_solve.append(res.stats)
        if res.status is SolveStatus.TIMEOUT:
            return done(None, AttackStatus.TIMEOUT)
        if res.status is SolveStatus.UNSAT:
            break
        dip = tuple(int(res.model[v]) for v in miter.input_vars)
        oracle_out = simulate(inst.base, dip)
        dips.append(dip)
        miter = add_dip_constraint(miter, dip, oracle_out)

    res = solve(miter.key_constraint_formula(), cfg())
    total = total.merged(res.stats)
    per_solve.append(res.stats)
    if res.status is SolveStatus.TIMEOUT:
        return done(None, AttackStatus.TIMEOUT)
    assert res.status is SolveStatus.SAT, "key constraints must stay satisfiable"
    key = tuple(int(res.model[v]) for v in miter.key1_vars)

    if not keys_equivalent(inst.base, inst.obfuscated, key):
        raise RuntimeError("attack soundness violation: recovered key fails "
                           "functional equivalence")  # pragma: no cover
    return done(key, AttackStatus.SOLVED)


def make_label(r: AttackResult, kind: str, instance_id: str = "") -> RuntimeLabel:
    if kind not in LABEL_KINDS:
        raise ValueError(f"label kind must be one of {LABEL_KINDS}, got {kind!r}")
    censored = r.status == AttackStatus.TIMEOUT
    if kind == "wall_seconds":
        value = r.wall_seconds
    elif kind == "log1p_seconds":
        value = float(np.log1p(r.wall_seconds))
    elif kind == "conflicts":
        value = float(r.total_stats.conflicts)
    else:
        value = float(np.log1p(r.total_stats.conflicts))
    return RuntimeLabel(instance_id, value, kind, censored)


def attack_log_record(instance_id: str, inst: ObfuscationInstance,
                      r: AttackResult) -> dict:
    """One JSON-serializable line for the attack log."""
    return {
        "id": instance_id,
        "n_locations": len(inst.locations),
        "iterations": r.iterations,
        "wall_seconds": r.wall_seconds,
        "decisions": r.total_stats.decisions,
        "propagations": r.total_stats.propagations,
        "conflicts": r.total_stats.conflicts,
        "status": r.status,
    }
