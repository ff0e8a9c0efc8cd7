"""Binary encodings: ciphertexts, key files, and the role message envelope.

CipherVector layout (little-endian)::

    b"DFCV" | u16 id_len | client_id | u32 round | u16 n | u32 padded_len | u32 chunks
    then per chunk 2n elements, each u16 length + compressed group element

Key files start with a 4-byte magic, a length-prefixed curve id, then
FieldMatrix payloads.  Envelopes wrap a JSON header and an opaque payload
so the three role boundaries can be split across processes later.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import WireFormatError
from .field import FieldMatrix
from .groups import GroupParams
from .scheme import AggregationKey, CipherVector, ClientKey, MasterSecret, RoundUnmask

CIPHER_MAGIC = b"DFCV"
CIPHER_FIXED_HEADER = 4 + 2 + 4 + 2 + 4 + 4
ELEMENT_PREFIX = 2
ENVELOPE_MAGIC = b"DFEV"
ENVELOPE_VERSION = 1


def _pack_str(s: str) -> bytes:
    data = s.encode()
    return struct.pack("<H", len(data)) + data


def _read_str(data: bytes, pos: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<H", data, pos)
    pos += 2
    return data[pos:pos + length].decode(), pos + length


def cipher_to_bytes(params: GroupParams, cv: CipherVector) -> bytes:
    g2 = params.g2
    out = [CIPHER_MAGIC, _pack_str(cv.client_id),
           struct.pack("<IHII", cv.round_index, cv.chunk_dim, cv.padded_len, cv.n_chunks)]
    for half1, half2 in cv.chunks:
        for elem in (*half1, *half2):
            raw = g2.to_bytes(elem)
            out.append(struct.pack("<H", len(raw)))
            out.append(raw)
    return b"".join(out)


def cipher_from_bytes(params: GroupParams, data: bytes) -> CipherVector:
    if data[:4] != CIPHER_MAGIC:
        raise WireFormatError("not a CipherVector")
    try:
        client_id, pos = _read_str(data, 4)
        round_index, n, padded_len, n_chunks = struct.unpack_from("<IHII", data, pos)
        pos += 14
        g2 = params.g2
        chunks = []
        for _ in range(n_chunks):
            elems = []
            for _ in range(2 * n):
                (length,) = struct.unpack_from("<H", data, pos)
                pos += 2
                elems.append(g2.from_bytes(data[pos:pos + length]))
                pos += length
            chunks.append((tuple(elems[:n]), tuple(elems[n:])))
    except struct.error as exc:
        raise WireFormatError("truncated CipherVector") from exc
    if pos != len(data):
        raise WireFormatError("trailing bytes after CipherVector")
    if n_chunks != -(-padded_len // n):
        raise WireFormatError("chunk count inconsistent with padded_len")
    return CipherVector(client_id, round_index, n, padded_len, tuple(chunks))


def cipher_wire_size(param_count: int, chunk_dim: int, element_wire_size: int, client_id_bytes: int = 0) -> int:
    """Exact serialized size of one CipherVector."""
    n_chunks = -(-param_count // chunk_dim)
    return CIPHER_FIXED_HEADER + client_id_bytes + n_chunks * 2 * chunk_dim * (ELEMENT_PREFIX + element_wire_size)


# -- key files ---------------------------------------------------------------

_CLIENT_MAGIC, _AGG_MAGIC, _MASTER_MAGIC = b"DFCK", b"DFAK", b"DFMS"


def _read_matrices(data: bytes, count: int) -> tuple[list[FieldMatrix], bytes]:
    mats = []
    for _ in range(count):
        m, data = FieldMatrix.read_from(data)
        mats.append(m)
    return mats, data


def client_key_to_bytes(ck: ClientKey) -> bytes:
    return b"".join([_CLIENT_MAGIC, _pack_str(ck.curve_id), _pack_str(ck.client_id),
                     ck.sk1.to_bytes(), ck.sk2.to_bytes(), struct.pack("<H", len(ck.mask_seed)), ck.mask_seed])


def client_key_from_bytes(data: bytes) -> ClientKey:
    if data[:4] != _CLIENT_MAGIC:
        raise WireFormatError("not a client key file")
    curve_id, pos = _read_str(data, 4)
    client_id, pos = _read_str(data, pos)
    (sk1, sk2), rest = _read_matrices(data[pos:], 2)
    (length,) = struct.unpack_from("<H", rest, 0)
    return ClientKey(client_id, sk1, sk2, rest[2:2 + length], curve_id)


def aggregation_key_to_bytes(ak: AggregationKey) -> bytes:
    return _AGG_MAGIC + _pack_str(ak.curve_id) + ak.ak1.to_bytes() + ak.ak2.to_bytes()


def aggregation_key_from_bytes(data: bytes) -> AggregationKey:
    if data[:4] != _AGG_MAGIC:
        raise WireFormatError("not an aggregation key file")
    curve_id, pos = _read_str(data, 4)
    (ak1, ak2), _ = _read_matrices(data[pos:], 2)
    return AggregationKey(ak1, ak2, curve_id)


def master_secret_to_bytes(ms: MasterSecret) -> bytes:
    issued = json.dumps(sorted(ms.issued)).encode()
    return b"".join([
        _MASTER_MAGIC, _pack_str(ms.curve_id), struct.pack("<H", ms.chunk_dim),
        ms.b_mat.to_bytes(), ms.a1_mat.to_bytes(), ms.a2_mat.to_bytes(),
        struct.pack("<H", len(ms.round_mask_seed)), ms.round_mask_seed,
        struct.pack("<H", len(ms.key_seed)), ms.key_seed,
        struct.pack("<I", len(issued)), issued,
    ])


def master_secret_from_bytes(data: bytes) -> MasterSecret:
    if data[:4] != _MASTER_MAGIC:
        raise WireFormatError("not a master secret file")
    curve_id, pos = _read_str(data, 4)
    (n,) = struct.unpack_from("<H", data, pos)
    (b, a1, a2), rest = _read_matrices(data[pos + 2:], 3)
    (l1,) = struct.unpack_from("<H", rest, 0)
    mask_seed = rest[2:2 + l1]
    rest = rest[2 + l1:]
    (l2,) = struct.unpack_from("<H", rest, 0)
    key_seed = rest[2:2 + l2]
    rest = rest[2 + l2:]
    (l3,) = struct.unpack_from("<I", rest, 0)
    issued = set(json.loads(rest[4:4 + l3]))
    return MasterSecret(b, a1, a2, n, mask_seed, key_seed, curve_id, issued)


def fingerprint(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()[:16]


def write_secret_file(path: Path, blob: bytes):
    """Write with mode 0600 from the start; used for master-secret storage."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(blob)
    os.chmod(path, 0o600)


# -- envelopes ---------------------------------------------------------------


class MessageKind(IntEnum):
    BROADCAST = 1
    UPLOAD = 2
    KDC_QUERY = 3
    KDC_RESPONSE = 4


@dataclass(frozen=True)
class Envelope:
    kind: MessageKind
    header: dict[str, Any]
    payload: bytes = b""

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header, sort_keys=True, separators=(",", ":")).encode()
        return b"".join([ENVELOPE_MAGIC, struct.pack("<BBI", ENVELOPE_VERSION, int(self.kind), len(head)),
                         head, struct.pack("<I", len(self.payload)), self.payload])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        if data[:4] != ENVELOPE_MAGIC:
            raise WireFormatError("not an envelope")
        version, kind, head_len = struct.unpack_from("<BBI", data, 4)
        if version != ENVELOPE_VERSION:
            raise WireFormatError(f"unsupported envelope version {version}")
        pos = 10
        header = json.loads(data[pos:pos + head_len])
        pos += head_len
        (payload_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        payload = data[pos:pos + payload_len]
        if len(payload) != payload_len or pos + payload_len != len(data):
            raise WireFormatError("envelope length mismatch")
        return cls(MessageKind(kind), header, payload)


def encode_broadcast(round_index: int, weights: np.ndarray, meta: dict[str, Any]) -> bytes:
    w = np.ascontiguousarray(weights, dtype="<f8")
    header = {"round_index": round_index, "dimension": int(w.size), "meta": meta}
    return Envelope(MessageKind.BROADCAST, header, w.tobytes()).to_bytes()


def decode_broadcast(data: bytes) -> tuple[int, np.ndarray, dict[str, Any]]:
    env = Envelope.from_bytes(data)
    if env.kind is not MessageKind.BROADCAST:
        raise WireFormatError("expected a broadcast message")
    w = np.frombuffer(env.payload, dtype="<f8").copy()
    if w.size != env.header["dimension"]:
        raise WireFormatError("broadcast dimension mismatch")
    return env.header["round_index"], w, env.header["meta"]


def encode_upload(params: GroupParams, cv: CipherVector) -> bytes:
    return Envelope(MessageKind.UPLOAD, {"curve_id": params.curve_id}, cipher_to_bytes(params, cv)).to_bytes()


def decode_upload(params: GroupParams, data: bytes) -> CipherVector:
    env = Envelope.from_bytes(data)
    if env.kind is not MessageKind.UPLOAD or env.header.get("curve_id") != params.curve_id:
        raise WireFormatError("expected an upload for this curve")
    return cipher_from_bytes(params, env.payload)


def encode_kdc_query(round_index: int, participants, padded_len: int) -> bytes:
    header = {"round_index": round_index, "participants": sorted(participants), "padded_len": padded_len}
    return Envelope(MessageKind.KDC_QUERY, header).to_bytes()


def decode_kdc_query(data: bytes) -> tuple[int, list[str], int]:
    env = Envelope.from_bytes(data)
    if env.kind is not MessageKind.KDC_QUERY:
        raise WireFormatError("expected a KDC query")
    h = env.header
    return h["round_index"], list(h["participants"]), h["padded_len"]


def encode_kdc_response(unmask: RoundUnmask, q: int) -> bytes:
    width = (q.bit_length() + 7) // 8
    header = {"round_index": unmask.round_index, "participants": sorted(unmask.participant_set),
              "width": width, "count": len(unmask.lambda_sum)}
    payload = b"".join(v.to_bytes(width, "little") for v in unmask.lambda_sum)
    return Envelope(MessageKind.KDC_RESPONSE, header, payload).to_bytes()


def decode_kdc_response(data: bytes) -> RoundUnmask:
    env = Envelope.from_bytes(data)
    if env.kind is not MessageKind.KDC_RESPONSE:
        raise WireFormatError("expected a KDC response")
    h = env.header
    width = h["width"]
    if len(env.payload) != width * h["count"]:
        raise WireFormatError("unmask payload length mismatch")
    values = tuple(int.from_bytes(env.payload[i:i + width], "little") for i in range(0, len(env.payload), width))
    return RoundUnmask(h["round_index"], frozenset(h["participants"]), values)
