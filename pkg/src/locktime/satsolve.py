"""A small, deterministic CDCL SAT solver.

Features: two-watched-literal unit propagation, VSIDS-style decaying
activity with lowest-index tie-break, optional first-UIP clause learning
with non-chronological backjumping, optional Luby restarts, and a wall
clock timeout reported as a distinct status.

Determinism contract: for identical (formula, config) the status, model
and all effort counters are identical across runs and machines; the seed
only chooses initial decision phases.  ``wall_seconds`` is the single
nondeterministic field.

Counter semantics: ``decisions`` counts branch assignments (including
polarity flips when learning is off), ``propagations`` counts literals
enqueued with a reason (unit propagation, initial units, asserting
literals), ``conflicts`` counts conflicting clauses encountered.
"""

from __future__ import annotations

import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cnf import CnfFormula, to_dimacs


class SolveStatus(Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    TIMEOUT = "TIMEOUT"


@dataclass
class SolverConfig:
    learning: bool = True
    restarts: bool = False
    seed: int = 0
    timeout_seconds: float | None = None
    decay: float = 0.95
    restart_interval: int = 64  # conflicts per Luby unit

    def __post_init__(self):
        if self.restarts and not self.learning:
            raise ValueError("restarts without clause learning can loop forever; "
                             "enable learning or disable restarts")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")


@dataclass
class SolverStats:
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0
    wall_seconds: float = 0.0

    def merged(self, other: "SolverStats") -> "SolverStats":
        return SolverStats(self.decisions + other.decisions,
                           self.propagations + other.propagations,
                           self.conflicts + other.conflicts,
                           self.wall_seconds + other.wall_seconds)


@dataclass
class SolveResult:
    status: SolveStatus
    model: dict | None  # var -> bool, full assignment when SAT
    stats: SolverStats = field(default_factory=SolverStats)


def luby(i: int) -> int:
    """Luby restart sequence 1,1,2,1,1,2,4,... (1-indexed)."""
    if i < 1:
        raise ValueError("luby index starts at 1")
    while True:
        k = i.bit_length()  # 2^(k-1) <= i < 2^k
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1


def verify_model(f: CnfFormula, model: dict) -> bool:
    """True iff ``model`` (a full var -> bool map) satisfies every clause."""
    for v in range(1, f.n_vars + 1):
        if v not in model:
            raise ValueError(f"partial model: variable {v} unassigned")
    for cl in f.clauses:
        if not any(model[abs(l)] == (l > 0) for l in cl):
            return False
    return True


class _Solver:
    UNASSIGNED = -1

    def __init__(self, f: CnfFormula, cfg: SolverConfig):
        self.cfg = cfg
        self.n = f.n_vars
        n1 = self.n + 1
        self.assigns = [self.UNASSIGNED] * n1
        self.level = [0] * n1
        self.reason = [-1] * n1  # clause index, -1 for decisions
        self.trail: list[int] = []  # literals in assignment order (true literals)
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.clauses: list[list[int]] = []
        self.watches: list[list[int]] = [[] for _ in range(2 * n1)]
        self.activity = np.zeros(n1, dtype=np.float64)
        self.activity[0] = -np.inf  # index 0 is not a variable
        self.unassigned = np.ones(n1, dtype=bool)
        self.unassigned[0] = False
        self.var_inc = 1.0
        self.stats = SolverStats()
        rng = np.random.default_rng(cfg.seed)
        self.phase = rng.integers(0, 2, size=n1, dtype=np.int64).tolist()
        self.flipped: list[bool] = []  # per decision level, learning-off mode
        self.ok = True

        for cl in f.clauses:
            if not self._add_clause(cl):
                self.ok = False
                break

    # --- clause plumbing ---

    def _add_clause(self, lits) -> bool:
        """Preprocess + register an input clause; False on immediate conflict."""
        seen = {}
        out = []
        for l in lits:
            if -l in seen:
                return True  # tautology, drop
            if l not in seen:
                seen[l] = True
                out.append(l)
        if len(out) == 1:
            return self._enqueue(out[0], reason=-2)  # -2: input unit
        ci = len(self.clauses)
        self.clauses.append(out)
        self._watch(out[0], ci)
        self._watch(out[1], ci)
        return True

    def _watch(self, lit: int, ci: int):
        self.watches[self._lidx(lit)].append(ci)

    @staticmethod
    def _lidx(lit: int) -> int:
        return (lit << 1) if lit > 0 else ((-lit << 1) | 1)

    def _value(self, lit: int) -> int:
        a = self.assigns[lit if lit > 0 else -lit]
        if a < 0:
            return -1
        return a if lit > 0 else 1 - a

    def _enqueue(self, lit: int, reason: int) -> bool:
        v = lit if lit > 0 else -lit
        a = self.assigns[v]
        want = 1 if lit > 0 else 0
        if a >= 0:
            return a == want
        self.assigns[v] = want
        self.unassigned[v] = False
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)
        if reason != -1:
            self.stats.propagations += 1
        return True

    # --- search ---

    def solve(self) -> SolveResult:
        t0 = time.perf_counter()
        deadline = None if self.cfg.timeout_seconds is None \
            else t0 + self.cfg.timeout_seconds
        try:
            status, model = self._search(deadline)
        finally:
            self.stats.wall_seconds = time.perf_counter() - t0
        return SolveResult(status, model, self.stats)

    def _search(self, deadline):
        if not self.ok:
            return SolveStatus.UNSAT, None
        restart_round = 1
        conflicts_here = 0
        budget = self.cfg.restart_interval * luby(restart_round)
        check = 0
        while True:
            check += 1
            if deadline is not None and check % 32 == 0 and time.perf_counter() > deadline:
                return SolveStatus.TIMEOUT, None

            confl = self._propagate()
            if confl is not None:
                self.stats.conflicts += 1
                conflicts_here += 1
                if not self.trail_lim:
                    return SolveStatus.UNSAT, None
                if self.cfg.learning:
                    learnt, back_level = self._analyze(confl)
                    self._backtrack(back_level)
                    if not self._learn(learnt):
                        return SolveStatus.UNSAT, None
                    self._decay_activity()
                    if self.cfg.restarts and conflicts_here >= budget:
                        restart_round += 1
                        conflicts_here = 0
                        budget = self.cfg.restart_interval * luby(restart_round)
                        self._backtrack(0)
                else:
                    if not self._flip_last_untried():
                        return SolveStatus.UNSAT, None
                continue

            v = self._pick_branch()
            if v == 0:
                model = {u: bool(self.assigns[u]) for u in range(1, self.n + 1)}
                return SolveStatus.SAT, model
            self.stats.decisions += 1
            self.trail_lim.append(len(self.trail))
            self.flipped.append(False)
            lit = v if self.phase[v] else -v
            self._enqueue(lit, reason=-1)

    def _propagate(self):
        """Two-watched-literal BCP; returns a conflicting clause index or None."""
        assigns = self.assigns
        clauses = self.clauses
        watches = self.watches
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            fidx = self._lidx(-lit)
            ws = watches[fidx]
            keep = []
            i = 0
            nw = len(ws)
            while i < nw:
                ci = ws[i]
                i += 1
                cl = clauses[ci]
                if cl[0] == -lit:
                    cl[0], cl[1] = cl[1], cl[0]
                first = cl[0]
                a = assigns[first] if first > 0 else assigns[-first]
                v0 = -1 if a < 0 else (a if first > 0 else 1 - a)
                if v0 == 1:
                    keep.append(ci)
                    continue
                moved = False
                for k in range(2, len(cl)):
                    lk = cl[k]
                    ak = assigns[lk] if lk > 0 else assigns[-lk]
                    vk = -1 if ak < 0 else (ak if lk > 0 else 1 - ak)
                    if vk != 0:
                        cl[1], cl[k] = cl[k], cl[1]
                        watches[self._lidx(cl[1])].append(ci)
                        moved = True
                        break
                if moved:
                    continue
                keep.append(ci)
                if v0 == 0:
                    keep.extend(ws[i:])
                    watches[fidx] = keep
                    return ci
                self._enqueue(first, reason=ci)
            watches[fidx] = keep
        return None

    def _pick_branch(self) -> int:
        masked = np.where(self.unassigned, self.activity, -np.inf)
        v = int(np.argmax(masked))  # first max == lowest index on ties
        if masked[v] == -np.inf:
            return 0
        return v

    def _decay_activity(self):
        self.var_inc /= self.cfg.decay
        if self.var_inc > 1e100:
            self.activity[1:] *= 1e-100
            self.var_inc *= 1e-100

    def _bump(self, v: int):
        self.activity[v] += self.var_inc

    def _analyze(self, confl: int):
        """First-UIP conflict analysis; returns (learnt clause, backjump level)."""
        seen = bytearray(self.n + 1)
        learnt = [0]  # placeholder for the asserting literal
        counter = 0
        p = 0
        cur_level = len(self.trail_lim)
        idx = len(self.trail) - 1
        reason = confl
        while True:
            cl = self.clauses[reason]
            for q in cl:
                if q == p:  # the propagated literal itself, true in its reason
                    continue
                v = q if q > 0 else -q
                if not seen[v] and self.level[v] > 0:
                    seen[v] = 1
                    self._bump(v)
                    if self.level[v] == cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[self.trail[idx] if self.trail[idx] > 0 else -self.trail[idx]]:
                idx -= 1
            p = self.trail[idx]
            pv = p if p > 0 else -p
            idx -= 1
            seen[pv] = 0
            counter -= 1
            if counter == 0:
                break
            reason = self.reason[pv]
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        back = max(self.level[q if q > 0 else -q] for q in learnt[1:])
        # move a literal of the backjump level into the second watch slot
        for k in range(1, len(learnt)):
            v = learnt[k] if learnt[k] > 0 else -learnt[k]
            if self.level[v] == back:
                learnt[1], learnt[k] = learnt[k], learnt[1]
                break
        return learnt, back

    def _learn(self, learnt: list[int]) -> bool:
        if len(learnt) == 1:
            return self._enqueue(learnt[0], reason=-2)
        ci = len(self.clauses)
        self.clauses.append(learnt)
        self._watch(learnt[0], ci)
        self._watch(learnt[1], ci)
        return self._enqueue(learnt[0], reason=ci)

    def _backtrack(self, back_level: int):
        while len(self.trail_lim) > back_level:
            lim = self.trail_lim.pop()
            self.flipped.pop()
            while len(self.trail) > lim:
                lit = self.trail.pop()
                v = lit if lit > 0 else -lit
                self.phase[v] = self.assigns[v]  # phase saving
                self.assigns[v] = self.UNASSIGNED
                self.unassigned[v] = True
                self.reason[v] = -1
        self.qhead = min(self.qhead, len(self.trail))

    def _flip_last_untried(self) -> bool:
        """Chronological DPLL backtracking for learning-off mode."""
        while self.trail_lim:
            lim = self.trail_lim[-1]
            decision = self.trail[lim]
            was_flipped = self.flipped[-1]
            # undo this level
            self.trail_lim.pop()
            self.flipped.pop()
            while len(self.trail) > lim:
                lit = self.trail.pop()
                v = lit if lit > 0 else -lit
                self.assigns[v] = self.UNASSIGNED
                self.unassigned[v] = True
                self.reason[v] = -1
            self.qhead = len(self.trail)
            if not was_flipped:
                self.trail_lim.append(len(self.trail))
                self.flipped.append(True)
                self.stats.decisions += 1
                self._enqueue(-decision, reason=-1)
                return True
        return False


def solve(f: CnfFormula, config: SolverConfig | None = None) -> SolveResult:
    """Decide a formula; see module docstring for the determinism contract."""
    cfg = config or SolverConfig()
    result = _Solver(f, cfg).solve()
    if result.status is SolveStatus.SAT:
        assert verify_model(f, result.model), "internal error: model check failed"
    return result


def solve_external(f: CnfFormula, command: list[str],
                   timeout_seconds: float | None = None) -> SolveResult:
    """Escape hatch: run an external DIMACS solver command.

    The command receives the DIMACS path as its last argument and must
    print ``s SATISFIABLE``/``s UNSATISFIABLE`` and ``v`` lines.
    """
    t0 = time.perf_counter()
    with tempfile.NamedTemporaryFile("w", suffix=".cnf", delete=False) as fh:
        fh.write(to_dimacs(f))
        path = fh.name
    try:
        proc = subprocess.run(list(command) + [path], capture_output=True,
                              text=True, timeout=timeout_seconds)
    except subprocess.TimeoutExpired:
        return SolveResult(SolveStatus.TIMEOUT, None,
                           SolverStats(wall_seconds=time.perf_counter() - t0))
    status = None
    lits: list[int] = []
    for line in proc.stdout.splitlines():
        if line.startswith("s "):
            status = line.split()[1]
        elif line.startswith("v "):
            lits.extend(int(t) for t in line.split()[1:] if t != "0")
    wall = time.perf_counter() - t0
    if status == "UNSATISFIABLE":
        return SolveResult(SolveStatus.UNSAT, None, SolverStats(wall_seconds=wall))
    if status == "SATISFIABLE":
        model = {abs(l): l > 0 for l in lits}
        for v in range(1, f.n_vars + 1):
            model.setdefault(v, False)
        return SolveResult(SolveStatus.SAT, model, SolverStats(wall_seconds=wall))
    raise RuntimeError(f"external solver produced no status line: {proc.stdout[:200]!r}")
