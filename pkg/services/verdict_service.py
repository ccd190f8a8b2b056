"""
Verdict Service
Collects the verdicts of one run, or of many runs in the identity suite
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

from modules.verdict import Verdict


@dataclass
class LedgerEntry:
    """Worst case seen so far for one verdict name"""

    name: str
    tolerance: float
    worst_deviation: float = 0.0
    checks: int = 0
    failures: int = 0
    unavailable: int = 0
    first_failure: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.failures == 0


class VerdictLedger:
    """Service class accumulating verdicts by name"""

    def __init__(self):
        self._entries: Dict[str, LedgerEntry] = {}
        self._verdicts: List[Verdict] = []

    def record(self, verdicts: Iterable[Verdict], context: str = '') -> None:
        """
        Record verdicts of one run

        Args:
            verdicts: Verdicts to record
            context: Label of the run (tree seed, claim) kept for the first failure
        """
        for verdict in verdicts:
            self._verdicts.append(verdict)
            entry = self._entries.get(verdict.name)
            if entry is None:
                entry = LedgerEntry(verdict.name, verdict.tolerance)
                self._entries[verdict.name] = entry
            if not verdict.available:
                entry.unavailable += 1
                continue
            entry.checks += 1
            entry.tolerance = max(entry.tolerance, verdict.tolerance)
            if math.isnan(verdict.max_deviation):
                entry.worst_deviation = math.inf
            else:
                entry.worst_deviation = max(entry.worst_deviation, verdict.max_deviation)
            if not verdict.passed:
                entry.failures += 1
                if entry.first_failure is None:
                    entry.first_failure = context or verdict.reason

    def entries(self) -> List[LedgerEntry]:
        return [self._entries[name] for name in sorted(self._entries)]

    def failures(self) -> List[Verdict]:
        return [v for v in self._verdicts if v.available and not v.passed]

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self._entries.values())

    def __len__(self) -> int:
        return len(self._verdicts)

    def get_status(self) -> Dict:
        """
        Get ledger status information

        Returns:
            Dictionary with counts and the overall outcome
        """
        return {
            'verdicts': len(self._verdicts),
            'names': len(self._entries),
            'failures': len(self.failures()),
            'passed': self.passed,
        }

    def clear(self) -> None:
        self._entries.clear()
        self._verdicts.clear()
