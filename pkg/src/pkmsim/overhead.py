"""Analytical storage, validation and transmission overheads."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .freshness import SECONDS_PER_DAY
from .protocol import ALL_PROTOCOLS, TABLE_PROTOCOLS, ProtocolId, honest_transcript
from .term import SizeModel, encode_size

CSV_COLUMNS = ("protocol", "handshake_bytes", "chi_bytes", "fleet_bytes", "flops_linear", "seconds_linear")


@dataclass(frozen=True)
class StorageParams:
    psi: int = 100
    delta: int = 4
    rho: int = 15
    fleet: int = 64

    def __post_init__(self):
        for name in ("psi", "delta", "rho", "fleet"):
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"{name} must be >= 0")
        if int(self.delta) != self.delta or int(self.rho) != self.rho:
            raise ValueError("delta and rho must be integral")


@dataclass(frozen=True)
class ComputeParams:
    sigma: float = 1e9
    flops_per_compare: int = 2
    # stored timestamps scanned per validation; None means psi * rho
    entries: Optional[int] = None
    literal_lambda: Optional[float] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")


@dataclass(frozen=True)
class StorageOverhead:
    chi: int
    fleet_bytes: int


def storage_overhead(p: StorageParams) -> StorageOverhead:
    chi = p.psi * p.delta * p.rho
    return StorageOverhead(chi, chi * p.fleet)


def validation_cost(c: ComputeParams, entries: Optional[int] = None) -> dict:
    """Linear cost of scanning a table, plus the 2**lambda reading when asked for.

    Overflow in the literal mode is reported through ``literal_saturated``.
    """
    n = entries if entries is not None else (c.entries if c.entries is not None else 0)
    flops = c.flops_per_compare * n
    out = {"flops_linear": flops, "seconds_linear": flops / c.sigma}
    if c.literal_lambda is not None:
        try:
            alpha = 2.0 ** c.literal_lambda
            seconds = alpha / c.sigma
            saturated = math.isinf(alpha) or math.isinf(seconds)
        except OverflowError:
            alpha = seconds = math.inf
            saturated = True
        out.update(flops_literal=alpha, seconds_literal=seconds, literal_saturated=saturated)
    return out


def chi_bytes(p: ProtocolId, s: StorageParams, window: float) -> int:
    """Per-node freshness state: the full table for TSA/HA, the live window cache for ISNAP."""
    if p in TABLE_PROTOCOLS:
        return storage_overhead(s).chi
    if p is ProtocolId.ISNAP:
        return s.delta * _window_entries(s, window)
    return 0


def _window_entries(s: StorageParams, window: float) -> int:
    return math.ceil(s.psi * window / SECONDS_PER_DAY)


def handshake_bytes(p: ProtocolId, m: SizeModel = SizeModel()) -> int:
    transcript, _, _ = honest_transcript(p)
    return sum(encode_size(t, m) for _, t in transcript)


@dataclass(frozen=True)
class ProtocolOverhead:
    protocol: str
    handshake_bytes: int
    chi_bytes: int
    fleet_bytes: int
    flops_linear: int
    seconds_linear: float


@dataclass(frozen=True)
class OverheadReport:
    rows: tuple[ProtocolOverhead, ...]
    orderings: dict
    storage: dict
    validation: dict
    size_model: dict = field(default_factory=dict)

    def row(self, p: ProtocolId) -> ProtocolOverhead:
        return next(r for r in self.rows if r.protocol == p.value)

    def to_json(self) -> dict:
        return {
            "size_model": self.size_model,
            "storage": self.storage,
            "validation": self.validation,
            "protocols": [asdict(r) for r in self.rows],
            "orderings": self.orderings,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([getattr(r, c) for c in CSV_COLUMNS])
        return buf.getvalue()


def orderings(b: dict[ProtocolId, int], delta: int) -> dict[str, bool]:
    P = ProtocolId
    return {
        "HA > PKMv2": b[P.HA] > b[P.PKMV2],
        "ISNAP < HA": b[P.ISNAP] < b[P.HA],
        "ISNAP > TSA": b[P.ISNAP] > b[P.TSA],
        "TSA >= PKMv1": b[P.TSA] >= b[P.PKMV1],
        "TSA = PKMv1 + 3*delta": b[P.TSA] == b[P.PKMV1] + 3 * delta,
    }


def transmission_report(m: SizeModel = SizeModel(), storage: StorageParams = StorageParams(),
                        compute: ComputeParams = ComputeParams(), window: float = 10.0) -> OverheadReport:
    """One honest handshake per protocol, sized under ``m``, with storage and validation costs.

    The literal validation figure uses ``compute.literal_lambda`` when set and
    otherwise the rho * delta exponent.
    """
    b = {p: handshake_bytes(p, m) for p in ALL_PROTOCOLS}
    table_entries = storage.psi * storage.rho if compute.entries is None else compute.entries
    rows = []
    for p in ALL_PROTOCOLS:
        chi = chi_bytes(p, storage, window)
        if p in TABLE_PROTOCOLS:
            entries = table_entries
        elif p is ProtocolId.ISNAP:
            entries = _window_entries(storage, window)
        else:
            entries = 0
        cost = validation_cost(compute, entries)
        rows.append(ProtocolOverhead(p.value, b[p], chi, chi * storage.fleet,
                                     cost["flops_linear"], cost["seconds_linear"]))
    lam = compute.literal_lambda if compute.literal_lambda is not None else storage.rho * storage.delta
    literal = validation_cost(ComputeParams(compute.sigma, compute.flops_per_compare,
                                            table_entries, lam), table_entries)
    s = storage_overhead(storage)
    return OverheadReport(
        rows=tuple(rows),
        orderings=orderings(b, m.timestamp),
        storage={**asdict(storage), "chi": s.chi, "fleet_bytes": s.fleet_bytes},
        validation={"entries": table_entries, "sigma": compute.sigma, "literal_lambda": lam, **literal},
        size_model=asdict(m),
    )
