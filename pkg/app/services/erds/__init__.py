from app.services.erds.adapters import Adapter
from app.services.erds.bgp_adapter import BgpSpeakerAdapter
from app.services.erds.bp_adapter import BpAgentAdapter, translate_bp_event
from app.services.erds.erds_service import ErdsService
from app.services.erds.events import Announce, PeerDown, PeerUp, ReachabilityEvent, Resync, Withdraw
