from app.services.bgp.chunking import chunk_updates, chunk_withdrawals
from app.services.bgp.messages import (
    KeepaliveMessage,
    NotificationMessage,
    OpenMessage,
    UpdateMessage,
    frame_message,
    parse_message,
)
from app.services.bgp.session import (
    LocalIdentity,
    OutboundBatch,
    PeerSession,
    SessionParameters,
    SessionState,
    negotiate,
    run_session,
)
from app.services.bgp.speaker import BgpSpeaker, SpeakerListener
