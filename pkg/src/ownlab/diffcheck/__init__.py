"""Random programs, brute-force oracles, and the differential properties built on them."""

from ownlab.diffcheck.campaign import CampaignReport, campaign, run_seed
from ownlab.diffcheck.check import (
    CounterexampleReport, Holds, Inconclusive, Property, Verdicts, Violation, check_oracle,
    check_soundness, check_theorem, is_monomorphic, verdicts,
)
from ownlab.diffcheck.generate import FuzzConfig, generate_program
from ownlab.diffcheck.oracle import InstanceTooLarge, OracleDiag, oracle_access_errors
from ownlab.diffcheck.shrink import shrink

__all__ = [
    "CampaignReport", "CounterexampleReport", "FuzzConfig", "Holds", "Inconclusive",
    "InstanceTooLarge", "OracleDiag", "Property", "Verdicts", "Violation", "campaign",
    "check_oracle", "check_soundness", "check_theorem", "generate_program", "is_monomorphic",
    "oracle_access_errors", "run_seed", "shrink", "verdicts",
]
