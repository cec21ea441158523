"""Wait-free recoverable combining: every thread acts as the combiner.

Each thread owns two state records and learns which one to use next from a
per-thread slot-choice bit stored (and persisted) inside the record
currently published through the versioned reference.  An attempt reads the
reference (load-link), copies the published record, validates the version,
serves every announced request into its own record, flips its slot-choice
bit, and tries to install the record with a store-conditional (a CAS on
the version).  两 failed attempts imply two other installs succeeded after
this thread announced, and the second of those must have seen the
announcement — so the help path can simply read the published response.

Persistence piggybacks a flush flag inside each record: the installer
marks it odd before the install and even after the reference has been
persisted, so any thread that returns while the flag is odd persists the
reference itself before responding.
"""

from __future__ import annotations

from ..engine import BOGROW, CAS, COPYVL, LLX, PWB, PFENCE, PSYNC, R, RMANY, SC, W, WMANY, YIELD
from ..objects import StateView
from ..pmem import PMem
from ..words import WORDS_PER_LINE
from .blocking import ARG_WORDS, lines_for


class WaitFreeCombining:
    """Wait-free combining instance over a sequential object."""

    def __init__(
        self,
        mem: PMem,
        n: int,
        obj,
        *,
        persistence: bool = True,
        name: str = "wfcomb",
        disabled_sites: frozenset = frozenset(),
    ):
        if n < 1:
            raise ValueError("need at least one thread")
        self.mem = mem
        self.n = n
        self.obj = obj
        self.persistence = persistence
        self.name = name
        self._off = disabled_sites
        sw = obj.state_words
        self.state_off = 0
        self.retval_off = sw
        self.deact_off = sw + n
        self.choice_off = sw + 2 * n
        self.flush_off = sw + 3 * n
        self.rec_words = sw + 3 * n + 1
        self.rec_lines = lines_for(self.rec_words)
        self.n_recs = 2 * (n + 1)  # two per thread plus the two initial records

        self.req_base = mem.add_region(f"{name}.req", n)
        self.recs_base = mem.add_region(f"{name}.recs", self.n_recs * self.rec_lines)
        self.sref_base = mem.add_region(f"{name}.sref", 1)  # handle word, version word

        for label in ("init", "request", "record", "fence", "sref", "sync"):
            mem.register_site(f"{name}/{label}")

        self.rounds = 0
        self.served = 0
        self.applied_log: list[tuple[int, int]] = []
        self.shadow = mem.mode == "model"

        # address tables for one-step dependent reads through the reference
        self._choice_tables = [
            tuple(self._choice_addr(rec, q) for rec in range(self.n_recs))
            for q in range(n)
        ]
        self._retval_tables = [
            tuple(self._retval_addr(rec, q) for rec in range(self.n_recs))
            for q in range(n)
        ]
        self._deact_tables = [
            tuple(self._deact_addr(rec, q) for rec in range(self.n_recs))
            for q in range(n)
        ]
        self._flush_table = tuple(self._flush_addr(rec) for rec in range(self.n_recs))

        self._init_image()

    # ------------------------------------------------------------------
    # Layout helpers
    # ------------------------------------------------------------------

    def _func_addr(self, q: int) -> int:
        return self.req_base + q * WORDS_PER_LINE

    def _arg_addr(self, q: int) -> int:
        return self.req_base + q * WORDS_PER_LINE + 1

    def _sa_addr(self, q: int) -> int:
        return self.req_base + q * WORDS_PER_LINE + 1 + ARG_WORDS

    def rec_id(self, row: int, slot: int) -> int:
        return row * 2 + slot

    def _rec_base(self, rec: int) -> int:
        return self.recs_base + rec * self.rec_lines * WORDS_PER_LINE

    def _retval_addr(self, rec: int, q: int) -> int:
        return self._rec_base(rec) + self.retval_off + q

    def _deact_addr(self, rec: int, q: int) -> int:
        return self._rec_base(rec) + self.deact_off + q

    def _choice_addr(self, rec: int, q: int) -> int:
        return self._rec_base(rec) + self.choice_off + q

    def _flush_addr(self, rec: int) -> int:
        return self._rec_base(rec) + self.flush_off

    def state_view(self, rec: int) -> StateView:
        return StateView(self.mem, self._rec_base(rec) + self.state_off)

    def current_rec(self) -> int:
        return self.mem.peek(self.sref_base)

    def current_state_words(self) -> list[int]:
        base = self._rec_base(self.current_rec()) + self.state_off
        return self.mem.vol[base:base + self.obj.state_words]

    def _init_image(self) -> None:
        mem = self.mem
        initial_rec = self.rec_id(self.n, 0)
        for i, w in enumerate(self.obj.initial_words()):
            mem.poke(self._rec_base(initial_rec) + self.state_off + i, w)
        mem.poke(self.sref_base, initial_rec)
        mem.poke(self.sref_base + 1, 0)  # version
        if self.persistence and self._site_on("init"):
            label = f"{self.name}/init"
            for q in range(self.n):
                mem.pwb(0, mem.line_of(self._func_addr(q)), label)
            rec_line = mem.line_of(self._rec_base(initial_rec))
            for i in range(self.rec_lines):
                mem.pwb(0, rec_line + i, label)
            mem.pwb(0, mem.line_of(self.sref_base), label)
            mem.psync(0, label)

    def _site_on(self, site: str) -> bool:
        return site not in self._off

    # ------------------------------------------------------------------
    # Protocol
    # ------------------------------------------------------------------

    def invoke(self, tid: int, func: int, arg: int, seq: int):
        sa = self.mem.peek(self._sa_addr(tid))  # own slot: single-writer
        activate = 1 - (sa & 1)
        yield (
            WMANY,
            (
                (self._func_addr(tid), func),
                (self._arg_addr(tid), arg),
                (self._sa_addr(tid), (seq << 1) | activate),
            ),
        )
        yield (YIELD,)  # backoff after announcing
        return (yield from self._perform(tid))

    def recover(self, tid: int, func: int, arg: int, seq: int):
        sa = yield (R, self._sa_addr(tid))
        if (sa >> 1) != seq:
            return (yield from self.invoke(tid, func, arg, seq))
        _rec, _ver, deact = yield (LLX, self.sref_base, self._deact_tables[tid])
        if (sa & 1) != deact:
            yield (YIELD,)
            return (yield from self._perform(tid))
        return (yield from self._read_response(tid))

    def _read_response(self, tid: int):
        _rec, _ver, rv = yield (LLX, self.sref_base, self._retval_tables[tid])
        return rv

    def _perform(self, tid: int):
        mem = self.mem
        for _attempt in (1, 2):
            cur, ver, choice = yield (LLX, self.sref_base, self._choice_tables[tid])
            mine = self.rec_id(tid, choice)
            if self.shadow:
                # record hygiene: never rebuild the published record
                assert mine != cur, "slot choice points at the published record"
            ok = yield (
                COPYVL,
                self._rec_base(mine),
                self._rec_base(cur),
                self.rec_words,
                self.sref_base + 1,
                ver,
            )
            if not ok:
                continue
            attempt = _Attempt()
            yield from self._pre_serve(tid, mine, attempt)

            announcements = yield (RMANY, tuple(self._sa_addr(q) for q in range(self.n)))
            served_now: list[tuple[int, int]] = []
            for q in range(self.n):
                act = announcements[q] & 1
                if act != mem.peek(self._deact_addr(mine, q)):
                    func = mem.peek(self._func_addr(q))
                    arg = mem.peek(self._arg_addr(q))
                    resp = yield from self._apply_one(tid, mine, q, func, arg, attempt)
                    mem.poke(self._retval_addr(mine, q), resp)
                    mem.poke(self._deact_addr(mine, q), act)
                    served_now.append((q, announcements[q] >> 1))

            # flip own slot choice so a successful install retires this record
            mem.poke(self._choice_addr(mine, tid), 1 - choice)

            if self.persistence:
                yield from self._pre_record_pwbs(tid, mine, attempt)
                if self._site_on("request"):
                    label = f"{self.name}/request"
                    line0 = mem.line_of(self.req_base)
                    for q in range(self.n):
                        yield (PWB, line0 + q, label)
                if self._site_on("record"):
                    label = f"{self.name}/record"
                    line0 = mem.line_of(self._rec_base(mine))
                    for i in range(self.rec_lines):
                        yield (PWB, line0 + i, label)
                if self._site_on("fence"):
                    yield (PFENCE, f"{self.name}/fence")
                lval = yield (R, self._flush_addr(mine))
                if lval % 2 == 0 and self._site_on("flush"):
                    lval += 1
                    yield (W, self._flush_addr(mine), lval)

            won = yield (SC, self.sref_base, ver, mine)
            if won:
                self.rounds += 1
                self.served += len(served_now)
                if self.shadow:
                    self.applied_log.extend(served_now)
                if self.persistence:
                    if self._site_on("sref"):
                        yield (PWB, mem.line_of(self.sref_base), f"{self.name}/sref")
                    if self._site_on("sync"):
                        yield (PSYNC, f"{self.name}/sync")
                    if self._site_on("flush"):
                        yield (CAS, self._flush_addr(mine), lval, lval + 1)
                return (yield from self._read_response(tid))
            yield (BOGROW,)
        # help path: by now some install has served this request
        rec, _ver, lval = yield (LLX, self.sref_base, self._flush_table)
        if self.persistence:
            if lval % 2 == 1:
                # An odd flag means the installer may not have drained yet.
                # Its announcement and record write-backs live in the
                # installer's own pending log, which this thread's psync
                # cannot drain, so the whole persist prefix is repeated
                # here before the reference is made durable.
                if self._site_on("request"):
                    label = f"{self.name}/request"
                    line0 = mem.line_of(self.req_base)
                    for q in range(self.n):
                        yield (PWB, line0 + q, label)
                if self._site_on("record"):
                    label = f"{self.name}/record"
                    line0 = mem.line_of(self._rec_base(rec))
                    for i in range(self.rec_lines):
                        yield (PWB, line0 + i, label)
                if self._site_on("fence"):
                    yield (PFENCE, f"{self.name}/fence")
                if self._site_on("sref"):
                    yield (PWB, mem.line_of(self.sref_base), f"{self.name}/sref")
                if self._site_on("sync"):
                    yield (PSYNC, f"{self.name}/sync")
                if self._site_on("flush"):
                    yield (CAS, self._flush_addr(rec), lval, lval + 1)
        return (yield from self._read_response(tid))

    # ------------------------------------------------------------------
    # Structure hooks
    # ------------------------------------------------------------------

    def _pre_serve(self, tid: int, rec: int, attempt):
        """Runs after a validated copy, before the serve scan."""
        return
        yield

    def _apply_one(self, tid: int, rec: int, q: int, func: int, arg: int, attempt):
        return self.obj.apply(self.state_view(rec), func, arg)
        yield

    def _pre_record_pwbs(self, tid: int, rec: int, attempt):
        """Extra write-backs (e.g. fresh list nodes) before the record pwbs."""
        return
        yield

    # ------------------------------------------------------------------
    # Instrumentation
    # ------------------------------------------------------------------

    def combining_degree(self) -> float:
        if self.rounds == 0:
            raise ValueError("no combining rounds completed")
        return self.served / self.rounds

    def on_crash(self) -> None:
        pass

    def flush_is_even(self) -> bool:
        rec = self.current_rec()
        return self.mem.peek(self._flush_addr(rec)) % 2 == 0

    def sref_persisted(self) -> bool:
        line = self.mem.line_of(self.sref_base)
        return self.mem.psv_line(line) == self.mem.vol_line(line)

    def static_step_bound(self) -> int:
        """Scheduler grants one invoke may need: announce + backoff + two
        full attempts (counting the winner tail) + help path + response read."""
        per_attempt = 3  # reference+choice read, copy+validate, announcement scan
        per_attempt += getattr(self, "pre_serve_step_bound", 0)
        per_attempt += self.n * getattr(self, "apply_step_bound", 0)
        per_attempt += 2  # store-conditional + backoff growth
        if self.persistence:
            per_attempt += getattr(self, "persist_step_bound", 0)
            per_attempt += self.n + self.rec_lines + 1  # request/record pwbs + pfence
            per_attempt += 2  # flush read + odd write
            per_attempt += 3  # winner tail: sref pwb, psync, handshake CAS
        help_path = 1 + (self.n + self.rec_lines + 4 if self.persistence else 0)
        return 2 + 2 * per_attempt + help_path + 1


class _Attempt:
    """Per-attempt scratch shared with structure hooks."""

    __slots__ = ("new_items",)

    def __init__(self):
        self.new_items: set[int] = set()
