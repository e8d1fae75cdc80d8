"""Peer-to-peer prosumer energy trading as a coalition game.

Clears 15-minute slots at the mid-market rate, settles payoffs, compares
against a feed-in-tariff baseline, and checks superadditivity, core
membership and balancedness of the underlying game exhaustively.
"""

from .coalition import (
    AuditCaps,
    StabilityReport,
    allocation_payoffs,
    build_core_witness,
    check_balancedness,
    check_core_membership,
    check_superadditivity,
    coalition_value,
)
from .energy_model import (
    ProsumerSlotState,
    RolePartition,
    SlotAggregates,
    TariffConfig,
    aggregate,
    compute_slot_state,
    partition_roles,
)
from .errors import CapExceededError, SolverError, SourceError, ValidationError
from .io import emit_report, load_tariff, load_traces
from .pricing import PriceQuote, PricingCase, Settlement, mid_price, quote_slot, settle_slot
from .simulator import TraceSet, compare, run_fit, run_p2p, run_stability_audit

__version__ = "0.1.0"
