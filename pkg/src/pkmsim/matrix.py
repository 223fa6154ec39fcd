"""Attack-by-protocol matrix, the expected grid, and report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .attacks import AttackKind, AttackOutcome, Verdict, run_attack
from .config import ScenarioConfig
from .overhead import ComputeParams, OverheadReport, StorageParams, transmission_report
from .protocol import ProtocolId
from .term import SizeModel

log = logging.getLogger(__name__)

S, PS, F, NA = Verdict.SUCCESS, Verdict.PARTIAL, Verdict.FAILED, Verdict.NOT_APPLICABLE
P = ProtocolId

# (verdict, why) per cell; the single reference for --check
EXPECTED_MATRIX: dict[AttackKind, dict[ProtocolId, tuple[Verdict, str]]] = {
    AttackKind.WATER_TORTURE: {
        P.PKMV1: (S, "unauthenticated trigger can be looped"),
        P.PKMV2: (S, "unauthenticated trigger can be looped"),
        P.TSA: (S, "trigger timestamp is unsigned, so copies are re-stamped"),
        P.HA: (S, "trigger timestamp is unsigned, so copies are re-stamped"),
        P.ISNAP: (F, "signed trigger timestamp checked against the window"),
    },
    AttackKind.DOS: {
        P.PKMV1: (S, "looped triggers exhaust the BS cycle budget"),
        P.PKMV2: (S, "looped triggers exhaust the BS cycle budget"),
        P.TSA: (S, "looped triggers exhaust the BS cycle budget"),
        P.HA: (S, "looped triggers exhaust the BS cycle budget"),
        P.ISNAP: (F, "replayed triggers rejected before a cycle starts"),
    },
    AttackKind.MESSAGE_REPLAY: {
        P.PKMV1: (S, "no freshness or peer authentication at all"),
        P.PKMV2: (PS, "trigger replays, nonce-linked steps do not"),
        P.TSA: (F, "timestamp table catches repeats"),
        P.HA: (F, "timestamp table and nonces catch repeats"),
        P.ISNAP: (F, "window validation catches repeats"),
    },
    AttackKind.IDENTITY_THEFT: {
        P.PKMV1: (NA, "fixed network registers MAC identities permanently"),
        P.PKMV2: (S, "MAC sent in clear in the final message"),
        P.TSA: (NA, "fixed network registers MAC identities permanently"),
        P.HA: (S, "MAC sent in clear in the final message"),
        P.ISNAP: (F, "MAC only sent encrypted"),
    },
    AttackKind.IMPERSONATION: {
        P.PKMV1: (S, "SS never authenticates the BS"),
        P.PKMV2: (F, "BS signs its reply"),
        P.TSA: (S, "SS never authenticates the BS"),
        P.HA: (F, "BS signs its reply"),
        P.ISNAP: (F, "BS signs its reply"),
    },
    AttackKind.INTERLEAVING: {
        P.PKMV1: (NA, "subsumed by impersonation"),
        P.PKMV2: (S, "nothing binds a session to time"),
        P.TSA: (NA, "subsumed by impersonation"),
        P.HA: (F, "signed timestamp goes stale in the relay"),
        P.ISNAP: (F, "signed timestamp goes stale in the relay"),
    },
    AttackKind.SUPPRESS_REPLAY: {
        P.PKMV1: (NA, "no timestamps"),
        P.PKMV2: (NA, "no timestamps"),
        P.TSA: (S, "receiver clock lag masks the delay"),
        P.HA: (S, "receiver clock lag masks the delay"),
        P.ISNAP: (F, "periodic resynchronization removes the lag"),
    },
}

MATRIX_CSV_COLUMNS = ("attack", "protocol", "verdict", "metric_name", "metric_value")


class ReportWriteError(OSError):
    pass


@dataclass
class AttackMatrix:
    grid: dict[tuple[AttackKind, ProtocolId], AttackOutcome] = field(default_factory=dict)
    attacks: tuple[AttackKind, ...] = ()
    protocols: tuple[ProtocolId, ...] = ()

    def verdict(self, a: AttackKind, p: ProtocolId) -> Verdict:
        return self.grid[(a, p)].verdict

    def mismatches(self) -> list[tuple[AttackKind, ProtocolId, Verdict, Verdict]]:
        out = []
        for a in self.attacks:
            for p in self.protocols:
                want = EXPECTED_MATRIX[a][p][0]
                got = self.verdict(a, p)
                if got is not want:
                    out.append((a, p, want, got))
        return out

    def matches_expected(self) -> bool:
        return not self.mismatches()

    def cells(self):
        for a in self.attacks:
            for p in self.protocols:
                yield a, p, self.grid[(a, p)]

    def to_json(self, scenario: Optional[ScenarioConfig] = None) -> dict:
        cells = []
        for a, p, o in self.cells():
            verdict, why = EXPECTED_MATRIX[a][p]
            cells.append({"attack": a.value, "protocol": p.value, "verdict": o.verdict.value,
                          "expected": verdict.value, "rationale": why, "reason": o.reason,
                          "metrics": o.metrics})
        out = {"cells": cells, "matches_expected": self.matches_expected()}
        if scenario is not None:
            # where the files went is not part of the result
            out["scenario"] = {k: v for k, v in scenario.to_dict().items() if k != "out_dir"}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(MATRIX_CSV_COLUMNS)
        for a, p, o in self.cells():
            name, value = o.headline
            w.writerow([a.value, p.value, o.verdict.value, name, "" if value is None else value])
        return buf.getvalue()

    def traces(self) -> str:
        lines = []
        for a, p, o in self.cells():
            for i, world in enumerate(o.worlds):
                lines.append(f"# {a.value} {p.value} world {i}")
                lines.extend(world.trace)
        return "\n".join(lines) + "\n"


def run_cell(a: AttackKind, p: ProtocolId, cfg: ScenarioConfig) -> AttackOutcome:
    try:
        return run_attack(a, p, cfg)
    except Exception as e:  # noqa: BLE001 - a broken cell must not pass as Failed
        log.exception("cell %s/%s raised", a.value, p.value)
        return AttackOutcome(Verdict.ERROR, {}, f"{type(e).__name__}: {e}")


def run_matrix(cfg: ScenarioConfig) -> AttackMatrix:
    attacks = tuple(AttackKind(a) for a in cfg.attacks)
    protocols = cfg.protocol_ids()
    m = AttackMatrix(attacks=attacks, protocols=tuple(protocols))
    for a in attacks:
        for p in protocols:
            m.grid[(a, p)] = run_cell(a, p, cfg)
    return m


def overheads_for(cfg: ScenarioConfig, m: SizeModel = SizeModel()) -> OverheadReport:
    storage = StorageParams(cfg.messages_per_day, cfg.timestamp_width, cfg.retention_days, cfg.fleet)
    compute = ComputeParams(cfg.sigma, cfg.flops_per_compare, literal_lambda=cfg.literal_lambda)
    return transmission_report(m, storage, compute, cfg.window)


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise ReportWriteError(f"cannot write {path}: {e.strerror or e}") from None
    return path


def emit_reports(matrix: Optional[AttackMatrix], overheads: Optional[OverheadReport],
                 traces: Optional[str], out_dir: str | Path,
                 scenario: Optional[ScenarioConfig] = None) -> list[Path]:
    out = Path(out_dir)
    written = []
    if matrix is not None:
        written.append(_write(out / "matrix.json", _dumps(matrix.to_json(scenario))))
        written.append(_write(out / "matrix.csv", matrix.to_csv()))
    if overheads is not None:
        written.append(_write(out / "overheads.json", _dumps(overheads.to_json())))
        written.append(_write(out / "overheads.csv", overheads.to_csv()))
    if traces is not None:
        written.append(_write(out / "trace.log", traces))
    return written


def _finite(obj):
    # JSON has no infinity; a saturated literal cost is written as a string
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True, default=str) + "\n"


def restrict(cfg: ScenarioConfig, protocol: Optional[str] = None, attack: Optional[str] = None) -> ScenarioConfig:
    if protocol:
        cfg = replace(cfg, protocols=(protocol,))
    if attack:
        cfg = replace(cfg, attacks=(attack,))
    return cfg
