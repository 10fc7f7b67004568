from app.services.nlri.codec import (
    decode_mp_reach,
    decode_mp_unreach,
    decode_nhna,
    encode_eid_entry,
    encode_mp_reach,
    encode_mp_unreach,
    encode_nhna,
)
from app.services.nlri.models import (
    AFI_DTN,
    ClaEndpoint,
    ClaSafi,
    EidAttribute,
    EidEntry,
    EndpointId,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
    UriCode,
)
