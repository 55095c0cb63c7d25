from .service import (
    EVENT_KINDS,
    EventHub,
    SessionError,
    SessionService,
    StateError,
    StreamEvent,
    Subscription,
    WorkbenchConfig,
)
from .store import (
    IntegrityError,
    SessionStore,
    StoreError,
    UnsupportedVersionError,
    data_root,
)
