from .arena import NodeArena, is_marked, mark, unmark
from .pbqueue import CombiningQueue
from .pbstack import CombiningStack
from .pbheap import CombiningHeap
from .pwfqueue import WaitFreeQueue

__all__ = [
    "NodeArena",
    "mark",
    "unmark",
    "is_marked",
    "CombiningQueue",
    "CombiningStack",
    "CombiningHeap",
    "WaitFreeQueue",
]
