"""Sequential objects simulated by the combining protocols.

Each object's entire state fits in a fixed number of 64-bit words inside
the combining state record, so a combiner can snapshot it with a plain
word copy.  ``apply`` runs under the combiner's exclusion and mutates the
state view in place, returning a one-word response.
"""

from __future__ import annotations

from .words import ACK, EMPTY, FULL, float_to_word, word_to_float


class StateView:
    """Word accessor for the object-state prefix of a state record."""

    __slots__ = ("mem", "base")

    def __init__(self, mem, base: int):
        self.mem = mem
        self.base = base

    def get(self, i: int) -> int:
        return self.mem.vol[self.base + i]

    def set(self, i: int, w: int) -> None:
        self.mem.poke(self.base + i, w)


class FetchIncCounter:
    """Unbounded counter; INC returns the pre-increment value."""

    INC = 1
    state_words = 1

    def initial_words(self):
        return [0]

    def apply(self, view: StateView, func: int, arg: int) -> int:
        old = view.get(0)
        view.set(0, old + 1)
        return old


class AtomicFloat:
    """Reads the current value v, updates it to v*k, returns the value read."""

    MUL = 1
    state_words = 1

    def __init__(self, initial: float = 1.0):
        self.initial = initial

    def initial_words(self):
        return [float_to_word(self.initial)]

    def apply(self, view: StateView, func: int, arg: int) -> int:
        old = view.get(0)
        view.set(0, float_to_word(word_to_float(old) * word_to_float(arg)))
        return old


class RingQueue:
    """Bounded FIFO stored as [head, tail, size, buf...]."""

    ENQ = 1
    DEQ = 2

    def __init__(self, capacity: int = 16):
        self.capacity = capacity
        self.state_words = 3 + capacity

    def initial_words(self):
        return [0] * self.state_words

    def apply(self, view: StateView, func: int, arg: int) -> int:
        head, tail, size = view.get(0), view.get(1), view.get(2)
        if func == self.ENQ:
            if size == self.capacity:
                return FULL
            view.set(3 + tail, arg)
            view.set(1, (tail + 1) % self.capacity)
            view.set(2, size + 1)
            return ACK
        if size == 0:
            return EMPTY
        val = view.get(3 + head)
        view.set(0, (head + 1) % self.capacity)
        view.set(2, size - 1)
        return val


class ArrayStack:
    """Bounded LIFO stored as [top, buf...]."""

    PUSH = 1
    POP = 2

    def __init__(self, capacity: int = 16):
        self.capacity = capacity
        self.state_words = 1 + capacity

    def initial_words(self):
        return [0] * self.state_words

    def apply(self, view: StateView, func: int, arg: int) -> int:
        top = view.get(0)
        if func == self.PUSH:
            if top == self.capacity:
                return FULL
            view.set(1 + top, arg)
            view.set(0, top + 1)
            return ACK
        if top == 0:
            return EMPTY
        val = view.get(top)
        view.set(0, top - 1)
        return val


class BoundedHeap:
    """Bounded min-heap stored as [size, keys...]; the whole array is copied
    and persisted on every combine, which is what makes large heaps costly."""

    INSERT = 1
    DELETE_MIN = 2

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self.state_words = 1 + capacity

    def initial_words(self):
        return [0] * self.state_words

    def apply(self, view: StateView, func: int, arg: int) -> int:
        size = view.get(0)
        if func == self.INSERT:
            if size == self.capacity:
                return FULL
            i = size
            view.set(1 + i, arg)
            while i > 0:
                parent = (i - 1) // 2
                if view.get(1 + parent) <= view.get(1 + i):
                    break
                a, b = view.get(1 + parent), view.get(1 + i)
                view.set(1 + parent, b)
                view.set(1 + i, a)
                i = parent
            view.set(0, size + 1)
            return ACK
        if size == 0:
            return EMPTY
        top = view.get(1)
        last = view.get(size)
        view.set(1, last)
        view.set(0, size - 1)
        size -= 1
        i = 0
        while True:
            left, right = 2 * i + 1, 2 * i + 2
            smallest = i
            if left < size and view.get(1 + left) < view.get(1 + smallest):
                smallest = left
            if right < size and view.get(1 + right) < view.get(1 + smallest):
                smallest = right
            if smallest == i:
                break
            a, b = view.get(1 + i), view.get(1 + smallest)
            view.set(1 + i, b)
            view.set(1 + smallest, a)
            i = smallest
        return top
