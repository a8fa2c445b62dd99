"""Operating theatre block scheduling: capacity rules, heuristics and rolling re-planning."""

from .capacity import CapacityTable, compute_table
from .model import Calendar, Instance, PatientRecord, Schedule, objective

__all__ = ["Calendar", "CapacityTable", "Instance", "PatientRecord", "Schedule",
           "compute_table", "objective"]
__version__ = "0.1.0"
