"""Mobility-aware MANET routing auctions: optimal multi-dimensional mechanism, verifier and simulator."""
from .kernels import BACKEND
from .mechanism import AgentType, Bid, MechanismTables, build_tables, run_auction
from .typespace import TypeSpace

__all__ = ["BACKEND", "AgentType", "Bid", "MechanismTables", "TypeSpace", "build_tables", "run_auction"]
__version__ = "0.1.0"
