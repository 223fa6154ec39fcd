"""SS and BS state machines for PKMv1, PKMv2, TSA, HA and ISNAP.

Each message is a flat ``Tuple`` whose field order is fixed by ``LAYOUTS``.
The same table drives message construction (for honest parties and for the
adversary's forgeries) and parsing, so the two can never disagree.  A field
named ``sig`` is always last and signs a ``Tuple`` of every field before it.

``step`` is a pure transition: all randomness (own nonce, AK) is drawn into
the session configuration up front.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

from .freshness import TimestampTable, ValidationWindow, WindowResult, validate_window
from .term import (
    AuthKey, Bcid, Capabilities, Cert, Enc, KeyRef, Lifetime, MacId, Nonce,
    SaidList, SeqNo, Sig, Term, Timestamp, Tuple, priv, pub, sym_decrypt, verify_sig,
)


class ProtocolId(Enum):
    PKMV1 = "PKMv1"
    PKMV2 = "PKMv2"
    TSA = "TSA"
    HA = "HA"
    ISNAP = "ISNAP"


class Role(Enum):
    SS = "SS"
    BS = "BS"


class MsgCode(Enum):
    TRIGGER = "trigger"
    REQUEST = "request"
    REPLY = "reply"
    ACK = "ack"


class RejectReason(Enum):
    BAD_SIGNATURE = "BadSignature"
    NONCE_MISMATCH = "NonceMismatch"
    REPLAY_TABLE = "ReplayDetectedTable"
    STALE = "StaleTimestamp"
    DUPLICATE = "DuplicateInWindow"
    MALFORMED = "Malformed"
    WRONG_PHASE = "WrongPhase"


class ConfigError(ValueError):
    pass


class SessionClosedError(RuntimeError):
    """``step``/``initiate`` called on a session that already finished."""


@dataclass(frozen=True)
class InProgress:
    def __str__(self):
        return "InProgress"


@dataclass(frozen=True)
class Authorized:
    ak: AuthKey
    lifetime: int

    def __str__(self):
        return f"Authorized({self.ak.id})"


@dataclass(frozen=True)
class Rejected:
    reason: RejectReason

    def __str__(self):
        return f"Rejected({self.reason.value})"


Outcome = Union[InProgress, Authorized, Rejected]

ALL_PROTOCOLS = tuple(ProtocolId)
TABLE_PROTOCOLS = frozenset({ProtocolId.TSA, ProtocolId.HA})
MUTUAL_PROTOCOLS = frozenset({ProtocolId.PKMV2, ProtocolId.HA, ProtocolId.ISNAP})
NONCE_LINKED = frozenset({ProtocolId.PKMV2, ProtocolId.HA})
TIMESTAMPED = frozenset({ProtocolId.TSA, ProtocolId.HA, ProtocolId.ISNAP})
# fixed networks register MAC identities permanently
FIXED_NETWORK = frozenset({ProtocolId.PKMV1, ProtocolId.TSA})

MANUFACTURER = "mfr"

_REPLY_HEAD = ("ak_enc", "lifetime", "seq", "saids")
_REQUEST = ("cert", "caps", "bcid", "n_ss")

LAYOUTS: dict[ProtocolId, dict[MsgCode, tuple[str, ...]]] = {
    ProtocolId.PKMV1: {
        MsgCode.TRIGGER: ("mcert",),
        MsgCode.REQUEST: _REQUEST,
        MsgCode.REPLY: _REPLY_HEAD,
    },
    ProtocolId.TSA: {
        MsgCode.TRIGGER: ("mcert", "ts"),
        MsgCode.REQUEST: _REQUEST + ("ts",),
        MsgCode.REPLY: _REPLY_HEAD + ("ts",),
    },
    ProtocolId.PKMV2: {
        MsgCode.TRIGGER: ("mcert",),
        MsgCode.REQUEST: _REQUEST,
        MsgCode.REPLY: _REPLY_HEAD + ("cert", "n_ss", "n_bs", "sig"),
        MsgCode.ACK: ("n_bs", "mac", "mac_enc", "sig"),
    },
    ProtocolId.HA: {
        MsgCode.TRIGGER: ("mcert", "ts"),
        MsgCode.REQUEST: _REQUEST + ("ts",),
        MsgCode.REPLY: _REPLY_HEAD + ("cert", "n_ss", "n_bs", "ts", "sig"),
        MsgCode.ACK: ("n_bs", "mac", "mac_enc", "ts", "sig"),
    },
    ProtocolId.ISNAP: {
        MsgCode.TRIGGER: ("cert", "ts", "bcid", "sig"),
        MsgCode.REPLY: _REPLY_HEAD + ("cert", "ts", "sig"),
        MsgCode.ACK: ("mac_enc", "ts", "sig"),
    },
}

FIELD_TYPES = {
    "mcert": Cert, "cert": Cert, "caps": Capabilities, "bcid": Bcid,
    "n_ss": Nonce, "n_bs": Nonce, "ak_enc": Enc, "lifetime": Lifetime,
    "seq": SeqNo, "saids": SaidList, "ts": Timestamp, "mac": MacId,
    "mac_enc": Enc, "sig": Sig,
}


def message_codes(p: ProtocolId) -> tuple[MsgCode, ...]:
    return tuple(LAYOUTS[p])


def sender_role(code: MsgCode) -> Role:
    return Role.BS if code is MsgCode.REPLY else Role.SS


def mfr_cert(ss: str) -> Cert:
    return Cert(ss, pub(MANUFACTURER))


def node_cert(node: str) -> Cert:
    return Cert(node, pub(node))


def build(p: ProtocolId, code: MsgCode, fields: dict[str, Term],
          signer: Optional[KeyRef] = None) -> Term:
    """Assemble a message from named fields; ``signer`` is required iff the layout has a ``sig``."""
    layout = LAYOUTS[p][code]
    if layout == ("mcert",):
        return fields["mcert"]
    parts = [fields[name] for name in layout if name != "sig"]
    if layout[-1] == "sig":
        if signer is None:
            raise ConfigError(f"{p.value} {code.value} must be signed")
        parts.append(Sig(signer, Tuple(parts)))
    return Tuple(parts)


def parse(p: ProtocolId, code: MsgCode, t: Term) -> Optional[dict[str, Term]]:
    layout = LAYOUTS[p].get(code)
    if layout is None:
        return None
    if layout == ("mcert",):
        return {"mcert": t} if isinstance(t, Cert) else None
    if not isinstance(t, Tuple) or len(t.parts) != len(layout):
        return None
    out = {}
    for name, part in zip(layout, t.parts):
        if not isinstance(part, FIELD_TYPES[name]):
            return None
        out[name] = part
    return out


def signed_body_matches(t: Tuple) -> bool:
    return t.parts[-1].body == Tuple(t.parts[:-1])


@dataclass(frozen=True)
class SessionConfig:
    """Per-session inputs.

    ``nonce`` and ``ak`` are drawn by the caller so that ``step`` stays pure.
    ``peer`` is the BS an SS trusts; a BS learns its peer from the trigger.
    """

    peer: Optional[str] = None
    mac: Optional[MacId] = None
    bcid: Optional[Bcid] = None
    nonce: Optional[Nonce] = None
    ak: Optional[AuthKey] = None
    capabilities: Capabilities = Capabilities(0x00000003)
    lifetime: int = 86400
    said_list: tuple[int, ...] = (0x2001, 0x2002)
    # freshness tolerance for TSA/HA receivers, seconds
    tolerance: Optional[float] = None
    table: Optional[TimestampTable] = None
    window: Optional[ValidationWindow] = None


class Phase:
    SS_IDLE = 0
    SS_TRIGGER_SENT = 1
    SS_AWAIT_REPLY = 2
    BS_AWAIT_TRIGGER = 0
    BS_AWAIT_REQUEST = 1
    BS_AWAIT_ACK = 2
    DONE = 3


@dataclass(frozen=True)
class SessionState:
    protocol: ProtocolId
    role: Role
    identity: str
    cfg: SessionConfig
    phase: int = 0
    peer: Optional[str] = None
    my_nonce: Optional[Nonce] = None
    peer_nonce: Optional[Nonce] = None
    ak: Optional[AuthKey] = None
    table: Optional[TimestampTable] = None
    window: Optional[ValidationWindow] = None
    outcome: Outcome = field(default_factory=InProgress)
    # MAC identity the BS provisioned service for
    peer_mac: Optional[MacId] = None
    verified_peer_sig: bool = False

    @property
    def mac(self) -> Optional[MacId]:
        return self.cfg.mac

    @property
    def bcid(self) -> Optional[Bcid]:
        return self.cfg.bcid

    @property
    def open(self) -> bool:
        return isinstance(self.outcome, InProgress)

    def expects(self) -> Optional[MsgCode]:
        if not self.open:
            return None
        if self.role is Role.SS:
            return MsgCode.REPLY if self.phase == Phase.SS_AWAIT_REPLY else None
        return {
            Phase.BS_AWAIT_TRIGGER: MsgCode.TRIGGER,
            Phase.BS_AWAIT_REQUEST: MsgCode.REQUEST,
            Phase.BS_AWAIT_ACK: MsgCode.ACK,
        }.get(self.phase)


def init_session(p: ProtocolId, role: Role, identity: str, cfg: SessionConfig) -> SessionState:
    missing = []
    if role is Role.SS:
        missing += [n for n in ("peer", "bcid", "mac") if getattr(cfg, n) is None]
        if p is not ProtocolId.ISNAP and cfg.nonce is None:
            missing.append("nonce")
    else:
        if cfg.ak is None:
            missing.append("ak")
        if p in NONCE_LINKED and cfg.nonce is None:
            missing.append("nonce")
    if p in TABLE_PROTOCOLS and cfg.tolerance is None:
        missing.append("tolerance")
    if p is ProtocolId.ISNAP and cfg.window is None:
        missing.append("window")
    if missing:
        raise ConfigError(f"{p.value} {role.value} session needs {', '.join(missing)}")
    table = (cfg.table if cfg.table is not None else TimestampTable()) if p in TABLE_PROTOCOLS else None
    window = cfg.window if p is ProtocolId.ISNAP else None
    return SessionState(
        protocol=p, role=role, identity=identity, cfg=cfg,
        peer=cfg.peer if role is Role.SS else None,
        my_nonce=cfg.nonce, table=table, window=window,
    )


def initiate(s: SessionState, now: float) -> tuple[SessionState, list[tuple[MsgCode, Term]]]:
    """Emit the SS's next unsolicited message: the trigger, then (pre-ISNAP) the request."""
    if s.role is not Role.SS or not s.open:
        raise SessionClosedError("only an open SS session initiates")
    p, cfg = s.protocol, s.cfg
    ts = Timestamp(now)
    if s.phase == Phase.SS_IDLE:
        if p is ProtocolId.ISNAP:
            msg = build(p, MsgCode.TRIGGER,
                        {"cert": node_cert(s.identity), "ts": ts, "bcid": cfg.bcid},
                        signer=priv(s.identity))
            return replace(s, phase=Phase.SS_AWAIT_REPLY), [(MsgCode.TRIGGER, msg)]
        msg = build(p, MsgCode.TRIGGER, {"mcert": mfr_cert(s.identity), "ts": ts})
        return replace(s, phase=Phase.SS_TRIGGER_SENT), [(MsgCode.TRIGGER, msg)]
    if s.phase == Phase.SS_TRIGGER_SENT:
        msg = build(p, MsgCode.REQUEST, {
            "cert": node_cert(s.identity), "caps": cfg.capabilities,
            "bcid": cfg.bcid, "n_ss": s.my_nonce, "ts": ts,
        })
        return replace(s, phase=Phase.SS_AWAIT_REPLY), [(MsgCode.REQUEST, msg)]
    raise SessionClosedError(f"SS in phase {s.phase} has nothing to send")


def step(s: SessionState, incoming: Optional[Term], now: float
         ) -> tuple[SessionState, list[tuple[MsgCode, Term]]]:
    """Consume one message at receiver-local time ``now``.

    Returns the new state and the messages to send in reply.  A message the
    session does not expect in its current phase rejects it with
    ``WrongPhase``; a message that does not fit the layout with ``Malformed``.
    """
    if incoming is None:
        return s, []
    if not s.open:
        raise SessionClosedError(f"session already {s.outcome}")
    code = s.expects()
    if code is None:
        return _reject(s, RejectReason.WRONG_PHASE)
    fields = parse(s.protocol, code, incoming)
    if fields is None:
        return _reject(s, RejectReason.MALFORMED)
    if s.role is Role.BS:
        handler = {MsgCode.TRIGGER: _bs_trigger, MsgCode.REQUEST: _bs_request,
                   MsgCode.ACK: _bs_ack}[code]
    else:
        handler = _ss_reply
    return handler(s, incoming, fields, now)


def _reject(s: SessionState, reason: RejectReason):
    return replace(s, outcome=Rejected(reason)), []


class _Fail(Exception):
    def __init__(self, reason: RejectReason):
        self.reason = reason


def _freshness(s: SessionState, sender: str, fields: dict, now: float) -> SessionState:
    """Apply the protocol's timestamp check; raises ``_Fail``.  Returns the state to commit on success."""
    if s.protocol in TABLE_PROTOCOLS:
        ts = fields["ts"].t
        if s.table.contains(sender, ts):
            raise _Fail(RejectReason.REPLAY_TABLE)
        if abs(now - ts) > s.cfg.tolerance:
            raise _Fail(RejectReason.STALE)
        return replace(s, table=s.table.record(sender, ts, now))
    if s.protocol is ProtocolId.ISNAP:
        result, window = validate_window(fields["ts"].t, now, s.window, sender)
        if result is WindowResult.STALE:
            raise _Fail(RejectReason.STALE)
        if result is WindowResult.DUPLICATE:
            raise _Fail(RejectReason.DUPLICATE)
        return replace(s, window=window)
    return s


def _check_signed(msg: Tuple, fields: dict, signer: str) -> None:
    if not verify_sig(fields["sig"], signer) or not signed_body_matches(msg):
        raise _Fail(RejectReason.BAD_SIGNATURE)


def _check_cert(cert: Cert, subject: Optional[str] = None) -> None:
    if cert.pubkey != pub(cert.subject) or (subject is not None and cert.subject != subject):
        raise _Fail(RejectReason.BAD_SIGNATURE)


def _reply_fields(s: SessionState, ss_key: KeyRef, now: float) -> dict[str, Term]:
    cfg = s.cfg
    return {
        "ak_enc": Enc(ss_key, cfg.ak), "lifetime": Lifetime(cfg.lifetime),
        "seq": SeqNo(0), "saids": SaidList(cfg.said_list),
        "cert": node_cert(s.identity), "n_ss": s.peer_nonce, "n_bs": s.my_nonce,
        "ts": Timestamp(now),
    }


def _bs_trigger(s, msg, fields, now):
    p = s.protocol
    try:
        if p is ProtocolId.ISNAP:
            cert = fields["cert"]
            s = _freshness(s, cert.subject, fields, now)
            _check_cert(cert)
            _check_signed(msg, fields, cert.subject)
            s = replace(s, peer=cert.subject)
            reply = build(p, MsgCode.REPLY, _reply_fields(s, cert.pubkey, now),
                          signer=priv(s.identity))
            return replace(s, phase=Phase.BS_AWAIT_ACK), [(MsgCode.REPLY, reply)]
        mcert = fields["mcert"]
        if mcert.pubkey != pub(MANUFACTURER):
            raise _Fail(RejectReason.MALFORMED)
        subject = mcert.subject
        s = _freshness(s, subject, fields, now)
        return replace(s, peer=subject, phase=Phase.BS_AWAIT_REQUEST), []
    except _Fail as f:
        return _reject(s, f.reason)


def _bs_request(s, msg, fields, now):
    p = s.protocol
    try:
        cert = fields["cert"]
        if cert.subject != s.peer:
            raise _Fail(RejectReason.MALFORMED)
        _check_cert(cert)
        s = _freshness(s, s.peer, fields, now)
    except _Fail as f:
        return _reject(s, f.reason)
    s = replace(s, peer_nonce=fields["n_ss"])
    signer = priv(s.identity) if p in MUTUAL_PROTOCOLS else None
    reply = build(p, MsgCode.REPLY, _reply_fields(s, cert.pubkey, now), signer=signer)
    if p in MUTUAL_PROTOCOLS:
        return replace(s, phase=Phase.BS_AWAIT_ACK), [(MsgCode.REPLY, reply)]
    done = replace(s, phase=Phase.DONE, ak=s.cfg.ak,
                   outcome=Authorized(s.cfg.ak, s.cfg.lifetime))
    return done, [(MsgCode.REPLY, reply)]


def _bs_ack(s, msg, fields, now):
    try:
        s = _freshness(s, s.peer, fields, now)
        if s.protocol in NONCE_LINKED and fields["n_bs"] != s.my_nonce:
            raise _Fail(RejectReason.NONCE_MISMATCH)
        _check_signed(msg, fields, s.peer)
        mac = sym_decrypt(fields["mac_enc"], priv(s.identity))
        if not isinstance(mac, MacId):
            raise _Fail(RejectReason.MALFORMED)
        if "mac" in fields and fields["mac"] != mac:
            raise _Fail(RejectReason.MALFORMED)
    except _Fail as f:
        return _reject(s, f.reason)
    return replace(s, phase=Phase.DONE, ak=s.cfg.ak, peer_mac=mac, verified_peer_sig=True,
                   outcome=Authorized(s.cfg.ak, s.cfg.lifetime)), []


def _ss_reply(s, msg, fields, now):
    p = s.protocol
    try:
        s = _freshness(s, s.peer, fields, now)
        if p in MUTUAL_PROTOCOLS:
            _check_cert(fields["cert"], s.peer)
            _check_signed(msg, fields, s.peer)
        if p in NONCE_LINKED and fields["n_ss"] != s.my_nonce:
            raise _Fail(RejectReason.NONCE_MISMATCH)
        ak = sym_decrypt(fields["ak_enc"], priv(s.identity))
        if not isinstance(ak, AuthKey):
            raise _Fail(RejectReason.MALFORMED)
    except _Fail as f:
        return _reject(s, f.reason)
    lifetime = fields["lifetime"].seconds
    done = replace(s, phase=Phase.DONE, ak=ak, outcome=Authorized(ak, lifetime),
                   verified_peer_sig=p in MUTUAL_PROTOCOLS)
    if p not in MUTUAL_PROTOCOLS:
        return done, []
    bs_key = fields["cert"].pubkey
    ack = build(p, MsgCode.ACK, {
        "n_bs": fields.get("n_bs"), "mac": s.cfg.mac,
        "mac_enc": Enc(bs_key, s.cfg.mac), "ts": Timestamp(now),
    }, signer=priv(s.identity))
    return replace(done, peer_nonce=fields.get("n_bs")), [(MsgCode.ACK, ack)]


def honest_transcript(p: ProtocolId, ss: str = "ss1", bs: str = "bs", *,
                      nonces=(Nonce(1), Nonce(2)), ak: AuthKey = AuthKey("ak-1"),
                      tolerance: float = 10.0, window: float = 10.0,
                      ) -> tuple[list[tuple[MsgCode, Term]], SessionState, SessionState]:
    """Run one unattacked handshake with zero latency, one second per message.

    Returns the messages in transmission order and both final sessions.
    """
    ss_cfg = SessionConfig(peer=bs, mac=MacId("02:00:00:00:00:01"), bcid=Bcid(0x0101),
                           nonce=nonces[0], tolerance=tolerance,
                           window=ValidationWindow(window))
    bs_cfg = SessionConfig(ak=ak, nonce=nonces[1], tolerance=tolerance,
                           window=ValidationWindow(window))
    s = init_session(p, Role.SS, ss, ss_cfg)
    b = init_session(p, Role.BS, bs, bs_cfg)
    now = 0.0
    transcript: list[tuple[MsgCode, Term]] = []
    pending: list[tuple[MsgCode, Term]] = []
    while s.phase in (Phase.SS_IDLE, Phase.SS_TRIGGER_SENT):
        s, out = initiate(s, now)
        pending += out
        now += 1.0
    while pending:
        code, msg = pending.pop(0)
        transcript.append((code, msg))
        if sender_role(code) is Role.SS:
            b, out = step(b, msg, now)
        else:
            s, out = step(s, msg, now)
        pending += out
        now += 1.0
    return transcript, s, b
