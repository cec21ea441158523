"""Blocking software combining with optional detectable recoverability.

Threads announce requests in a per-thread announcement slot (one cache
line: function code, argument, and a word packing the sequence number with
the activate toggle bit), then race on an integer lock whose parity
encodes ownership.  The winner serves every announced-but-unserved request
into the state-record slot not currently indexed, flips the index word,
and releases the lock.  Waiters spin only until the current owner unlocks,
then check whether their toggle bits match.

With persistence enabled the combiner also issues, in order: one pwb per
announcement line, one pwb per line of the state record it filled, a
pfence, the index write, a pwb on the index line, and a psync — so a batch
of d requests costs n + ceil(record_bytes/64) + 1 write-backs total.
Non-combiners execute no persistence instructions.

Recovery is a three-way branch on the announcement slot: an unseen
sequence number means the announcement never persisted (re-invoke);
unequal toggle bits mean announced-but-unserved (re-perform); otherwise
the stored response is returned as-is.
"""

from __future__ import annotations

from ..engine import COPY, PICK, PWB, PFENCE, PSYNC, R, RMANY, TAS, W, WAIT, WMANY
from ..objects import StateView
from ..pmem import PMem
from ..words import WORDS_PER_LINE

ARG_WORDS = 6  # announcement line: func word + 48-byte argument block + seq/activate word


def lines_for(words: int) -> int:
    return -(-words // WORDS_PER_LINE)


class BlockingCombining:
    """One combining instance over a sequential object.

    ``persistence=False`` gives the plain blocking protocol; ``True`` adds
    the recoverable persistence scheme.  ``disabled_sites`` removes named
    persistence call sites (mutation-testing hook, never used in production
    paths).
    """

    def __init__(
        self,
        mem: PMem,
        n: int,
        obj,
        *,
        persistence: bool = True,
        name: str = "bcomb",
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
        self.rec_words = sw + 2 * n
        self.rec_lines = lines_for(self.rec_words)

        self.req_base = mem.add_region(f"{name}.req", n)
        self.state_base = mem.add_region(f"{name}.state", 2 * self.rec_lines)
        self.idx_base = mem.add_region(f"{name}.idx", 1)
        self.lock_addr = mem.add_region(f"{name}.lock", 1, persistent=False)

        for label in ("init", "request", "state", "fence", "mindex", "sync"):
            mem.register_site(f"{name}/{label}")

        # combining statistics and shadow checks (instrumentation only)
        self.rounds = 0
        self.served = 0
        self.lock_owner: int | None = None
        self.applied_log: list[tuple[int, int]] = []  # (thread, seq) applications
        self.shadow = mem.mode == "model"

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

    def _slot_base(self, ind: int) -> int:
        return self.state_base + ind * self.rec_lines * WORDS_PER_LINE

    def _retval_addr(self, ind: int, q: int) -> int:
        return self._slot_base(ind) + self.retval_off + q

    def _deact_addr(self, ind: int, q: int) -> int:
        return self._slot_base(ind) + self.deact_off + q

    def state_view(self, ind: int) -> StateView:
        return StateView(self.mem, self._slot_base(ind) + self.state_off)

    def current_index(self) -> int:
        return self.mem.peek(self.idx_base)

    def current_state_words(self) -> list[int]:
        base = self._slot_base(self.current_index()) + self.state_off
        return self.mem.vol[base:base + self.obj.state_words]

    def _init_image(self) -> None:
        mem = self.mem
        for i, w in enumerate(self.obj.initial_words()):
            mem.poke(self._slot_base(0) + self.state_off + i, w)
        if self.persistence and self._site_on("init"):
            label = f"{self.name}/init"
            for q in range(self.n):
                mem.pwb(0, mem.line_of(self._func_addr(q)), label)
            slot_line = mem.line_of(self._slot_base(0))
            for i in range(self.rec_lines):
                mem.pwb(0, slot_line + i, label)
            mem.pwb(0, mem.line_of(self.idx_base), label)
            mem.psync(0, label)

    def _site_on(self, site: str) -> bool:
        return site not in self._off

    # ------------------------------------------------------------------
    # Protocol
    # ------------------------------------------------------------------

    def invoke(self, tid: int, func: int, arg: int, seq: int):
        """Announce the request and perform/await it.  Generator."""
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
        return (yield from self._perform(tid))

    def recover(self, tid: int, func: int, arg: int, seq: int):
        """Post-crash recovery with the interrupted call's arguments.  Generator."""
        sa = yield (R, self._sa_addr(tid))
        if (sa >> 1) != seq:
            # announcement never persisted: start over
            return (yield from self.invoke(tid, func, arg, seq))
        deact, rv = yield self._check_eff(tid)
        if (sa & 1) != deact:
            return (yield from self._perform(tid))
        return rv

    def _check_eff(self, tid: int) -> tuple:
        """One-step read of (deactivate bit, stored response) through the index."""
        return (
            PICK,
            self.idx_base,
            (self._deact_addr(0, tid), self._retval_addr(0, tid)),
            (self._deact_addr(1, tid), self._retval_addr(1, tid)),
        )

    def _perform(self, tid: int):
        mem = self.mem
        while True:
            won, lval = yield (TAS, self.lock_addr)
            if won:
                break
            yield (WAIT, self.lock_addr, lval)
            sa = mem.peek(self._sa_addr(tid))
            deact, rv = yield self._check_eff(tid)
            if (sa & 1) == deact:
                return rv

        if self.shadow:
            assert self.lock_owner is None, "two active combiners"
            self.lock_owner = tid

        # the index word only changes under the lock, so it is stable here
        cur = mem.peek(self.idx_base)
        ind = 1 - cur
        yield (COPY, self._slot_base(ind), self._slot_base(cur), self.rec_words)
        yield from self._combine_prelude(tid, ind)

        announcements = yield (RMANY, tuple(self._sa_addr(q) for q in range(self.n)))
        served = 0
        for q in range(self.n):
            act = announcements[q] & 1
            if act != mem.peek(self._deact_addr(ind, q)):
                func = mem.peek(self._func_addr(q))
                arg = mem.peek(self._arg_addr(q))
                resp = yield from self._apply_one(tid, ind, q, func, arg)
                mem.poke(self._retval_addr(ind, q), resp)
                mem.poke(self._deact_addr(ind, q), act)
                served += 1
                if self.shadow:
                    self.applied_log.append((q, announcements[q] >> 1))

        yield from self._post_serve(tid, ind)

        if self.persistence:
            yield from self._pwb_request()
            yield from self._pwb_slot(ind)
            if self._site_on("fence"):
                yield (PFENCE, f"{self.name}/fence")
        yield (W, self.idx_base, ind)
        if self.persistence:
            if self._site_on("mindex"):
                yield (PWB, mem.line_of(self.idx_base), f"{self.name}/mindex")
            if self._site_on("sync"):
                yield (PSYNC, f"{self.name}/sync")

        yield from self._post_sync(tid, ind)

        self.rounds += 1
        self.served += served
        if self.shadow:
            assert self.lock_owner == tid
            assert mem.peek(self.lock_addr) % 2 == 1, "lock parity broken"
            for q in range(self.n):
                # toggle bits agree for everything seen in this round
                assert (announcements[q] & 1) == mem.peek(self._deact_addr(ind, q))
            self.lock_owner = None
        lock_now = mem.peek(self.lock_addr)  # owner-exclusive read
        yield (W, self.lock_addr, lock_now + 1)
        return mem.peek(self._retval_addr(ind, tid))

    # ------------------------------------------------------------------
    # Persistence blocks and structure hooks
    # ------------------------------------------------------------------

    def _pwb_request(self):
        if not self._site_on("request"):
            return
        label = f"{self.name}/request"
        line0 = self.mem.line_of(self.req_base)
        for q in range(self.n):
            yield (PWB, line0 + q, label)

    def _pwb_slot(self, ind: int):
        if not self._site_on("state"):
            return
        label = f"{self.name}/state"
        line0 = self.mem.line_of(self._slot_base(ind))
        for i in range(self.rec_lines):
            yield (PWB, line0 + i, label)

    def _combine_prelude(self, tid: int, ind: int):
        """Runs after the state copy, before the serve scan."""
        return
        yield  # generator form for subclass hooks

    def _apply_one(self, tid: int, ind: int, q: int, func: int, arg: int):
        """Apply one request; pure objects take no scheduler steps."""
        return self.obj.apply(self.state_view(ind), func, arg)
        yield  # generator form for subclass hooks

    def _post_serve(self, tid: int, ind: int):
        """Runs after the serve loop, before the standard persistence block."""
        return
        yield

    def _post_sync(self, tid: int, ind: int):
        """Runs after the psync, before the unlock."""
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
        self.lock_owner = None
