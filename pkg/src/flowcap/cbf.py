"""Counting Bloom filter that gates per-flow packet capture."""

from __future__ import annotations

from .packet import cell_index


class CountingBloomFilter:
    """2**r saturating cells of ``cell_width`` bits, indexed by CRC32 of the
    four flow ids of a packet.

    The minimum over a packet's indexed cells estimates how many packets of
    that flow were already counted in the current window; admission stops once
    the estimate reaches the per-flow cap. ``cap=None`` disables admission
    gating (every packet admitted, counts still saturate at the cell maximum).

    ``dedupe_indices`` controls what happens when the four ids of one packet
    map to fewer than four distinct cells: True (default) increments each
    distinct cell once per admitted packet, False replays the literal per-id
    increment loop.
    """

    def __init__(self, r: int, cell_width: int = 3, cap: int | None = 4,
                 dedupe_indices: bool = True):
        if not 1 <= r <= 32:
            raise ValueError(f"r must be in 1..32, got {r}")
        if cell_width < 1:
            raise ValueError(f"cell_width must be positive, got {cell_width}")
        if cap is not None:
            if cap < 1:
                raise ValueError(f"cap must be positive, got {cap}")
            if (1 << cell_width) - 1 < cap:
                raise ValueError(
                    f"cell_width {cell_width} cannot count to cap {cap}; "
                    f"need at least {cap.bit_length()} bits")
        self.r = r
        self.num_cells = 1 << r
        self.cell_width = cell_width
        self.cell_max = (1 << cell_width) - 1
        self.cap = cap
        self.dedupe_indices = dedupe_indices
        self.cells: list[int] = [0] * self.num_cells

    @property
    def footprint_bits(self) -> int:
        return self.num_cells * self.cell_width

    @property
    def footprint_bytes(self) -> int:
        return (self.footprint_bits + 7) // 8

    def indices(self, ids) -> tuple[int, ...]:
        return tuple(cell_index(fid, self.r) for fid in ids)

    def estimate(self, ids) -> int:
        """Counted-packet estimate for the flow: min over its indexed cells."""
        cells = self.cells
        return min(cells[i] for i in self.indices(ids))

    def admit_and_count(self, ids) -> bool:
        """Admit the packet if the flow estimate is below the cap, counting it
        in every indexed cell that has budget left. Returns the decision."""
        idx = self.indices(ids)
        cells = self.cells
        if self.cap is not None:
            if min(cells[i] for i in idx) >= self.cap:
                return False
            guard = self.cap
        else:
            guard = self.cell_max
        if self.dedupe_indices:
            idx = set(idx)
        for i in idx:
            if cells[i] < guard:
                cells[i] += 1
        return True

    def reset(self) -> None:
        self.cells = [0] * self.num_cells
