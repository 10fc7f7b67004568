from app.services.node.node_service import ErdsNode, local_identity
