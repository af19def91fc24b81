"""Pure-Python DAG weight store.

Per record this keeps the generator, approval edges, an entity bitmask of
"visitors" (entities with a record from which this one is reachable), the
derived weight, and confirmation status.  Adding a record propagates its
generator's bit to unvisited ancestors; each (record, entity) pair is
marked at most once, so the total work over a run is bounded by
records x entities x out-degree.

The generator's own bit is kept in the mask purely as a visited marker;
whether it counts toward the weight is controlled by count_self_indirect.
"""

from __future__ import annotations


class DagStorePy:
    name = "python"

    def __init__(self, w_confirm: int, count_self_indirect: bool = False,
                 w_contribution: int = 0):
        self.w_confirm = w_confirm
        self.w_contribution = w_contribution  # 0 disables crossing reports
        self.count_self_indirect = count_self_indirect
        self.gen: list[int] = []
        self.approved: list[tuple[int, ...]] = []
        self.mask: list[int] = []
        self.weight: list[int] = []
        self.confirmed: list[bool] = []
        self.tailing: set[int] = set()

    def __len__(self) -> int:
        return len(self.gen)

    def add_record(
        self, gen_e: int, approved_ids: tuple[int, ...]
    ) -> tuple[int, list[int], list[int]]:
        """Insert a record.

        Returns (record id, ids newly confirmed, ids whose weight just
        crossed w_contribution).
        """
        rid = len(self.gen)
        bit = 1 << gen_e
        self.gen.append(gen_e)
        self.approved.append(approved_ids)
        # Pre-marking the generator's own bit is sound only when that bit
        # never contributes to the weight (see module docstring).
        self.mask.append(0 if self.count_self_indirect else bit)
        self.weight.append(0)
        self.confirmed.append(False)
        self.tailing.add(rid)

        newly_confirmed: list[int] = []
        newly_capped: list[int] = []
        stack = [a for a in approved_ids]
        mask = self.mask
        weight = self.weight
        gen = self.gen
        confirmed = self.confirmed
        approved = self.approved
        w_confirm = self.w_confirm
        w_contribution = self.w_contribution
        count_self = self.count_self_indirect
        self.tailing.difference_update(approved_ids)
        while stack:
            a = stack.pop()
            if mask[a] & bit:
                continue
            mask[a] |= bit
            if count_self or gen[a] != gen_e:
                w = weight[a] + 1
                weight[a] = w
                if w == w_contribution:
                    newly_capped.append(a)
                if w >= w_confirm and not confirmed[a]:
                    confirmed[a] = True
                    newly_confirmed.append(a)
            stack.extend(approved[a])
        return rid, newly_confirmed, newly_capped

    def inject_confirmed(self, gen_e: int, approved_ids: tuple[int, ...] = ()) -> int:
        """Insert a record already marked confirmed (genesis bootstrap)."""
        rid, _, _ = self.add_record(gen_e, approved_ids)
        self.confirmed[rid] = True
        return rid

    def approvers_count(self, rid: int) -> int:
        return self.weight[rid]

    def is_confirmed(self, rid: int) -> bool:
        return self.confirmed[rid]

    def is_tailing(self, rid: int) -> bool:
        return rid in self.tailing

    def tailing_ids(self) -> list[int]:
        return sorted(self.tailing)

    def approver_entities(self, rid: int) -> list[int]:
        """Entity indices counted in rid's weight."""
        m = self.mask[rid]
        out = []
        e = 0
        while m:
            if m & 1 and (self.count_self_indirect or e != self.gen[rid]):
                out.append(e)
            m >>= 1
            e += 1
        return out
