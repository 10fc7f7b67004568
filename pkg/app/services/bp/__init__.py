from app.services.bp.agent import BpAgentSim, FibTable, Registration
from app.services.bp.cla import ClaListener, DeliveryReport, cla_probe
from app.services.bp.protocol import AgentMessage, AgentOp, decode_message, encode_message
