from .blocking import BlockingCombining
from .waitfree import WaitFreeCombining

__all__ = ["BlockingCombining", "WaitFreeCombining"]
