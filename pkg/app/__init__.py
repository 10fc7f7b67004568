"""
EID Reachability Distribution Service
Distributes DTN endpoint reachability between a Bundle Protocol Agent and BGP peers.
"""

__version__ = "0.1.0"
