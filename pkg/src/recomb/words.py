"""Word-level constants and encodings shared across the library.

All shared state is modeled as 64-bit words grouped into 64-byte cache
lines (8 words per line).  Response values are single words; a few values
at the top of the word range are reserved as sentinels.
"""

from __future__ import annotations

import struct

WORD_BITS = 64
WORD_MASK = (1 << 64) - 1
WORDS_PER_LINE = 8
LINE_BYTES = 64

# Reserved response/link sentinels.  Links are encoded as (index+1)<<1 | mark,
# so 0 is "no link" and zero-initialized memory reads as unlinked.
ACK = 1
EMPTY = WORD_MASK
FULL = WORD_MASK - 1
NIL = 0


def float_to_word(x: float) -> int:
    return int.from_bytes(struct.pack("<d", x), "little")


def word_to_float(w: int) -> float:
    return struct.unpack("<d", (w & WORD_MASK).to_bytes(8, "little"))[0]
