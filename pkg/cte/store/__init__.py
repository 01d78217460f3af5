from .events import EventKind, JournalEvent
from .journal import Journal
from .state import StoreState
from .store import Store

__all__ = ["EventKind", "Journal", "JournalEvent", "Store", "StoreState"]
