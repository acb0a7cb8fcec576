"""Versioned binary model container and its JSON mirror.

Layout (little endian)::

    b"HFSM" | u16 version | 32-byte sha256 of the taxonomy edge list
    u32 n | n bytes of UTF-8 JSON header (num_features, edges, config)
    u8 has_idf | [u32 n | n x f64 idf]
    u32 #nodes, then per node:
        varint node | varint #children | varint child ids (delta) |
        u8 flags (bit0 = trivial) | [varint trivial child] | f64 lambda |
        varint #subset | varint feature ids (delta) |
        #children x #subset f32 weights, child-major

Only deterministic content goes in the file; timings live in the run manifest.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .errors import ModelFormatError
from .hierarchy import parse_hierarchy
from .trainer import NodeModel, TrainedModel

MAGIC = b"HFSM"
FORMAT_VERSION = 1


def _write_varint(buf: io.BytesIO, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.write(bytes((byte | 0x80,)))
        else:
            buf.write(bytes((byte,)))
            return


def _read_varint(buf: io.BytesIO) -> int:
    shift = 0
    result = 0
    while True:
        b = buf.read(1)
        if not b:
            raise ModelFormatError("truncated varint")
        result |= (b[0] & 0x7F) << shift
        if not b[0] & 0x80:
            return result
        shift += 7


def _write_deltas(buf, ids) -> None:
    prev = 0
    for k, v in enumerate(np.asarray(ids, dtype=np.int64).tolist()):
        _write_varint(buf, v if k == 0 else v - prev)
        prev = v


def _read_deltas(buf, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.int64)
    prev = 0
    for k in range(count):
        d = _read_varint(buf)
        prev = d if k == 0 else prev + d
        out[k] = prev
    return out


def _read_exact(buf, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise ModelFormatError("truncated model file")
    return data


def model_to_bytes(m: TrainedModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    buf.write(hashlib.sha256(m.hierarchy.to_text().encode()).digest())
    header = {
        "num_features": int(m.num_features),
        "edges": [list(e) for e in m.hierarchy.edges()],
        "config": m.config,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(hb)))
    buf.write(hb)
    if m.idf is None:
        buf.write(b"\x00")
    else:
        idf = np.asarray(m.idf, dtype="<f8")
        buf.write(b"\x01")
        buf.write(struct.pack("<I", len(idf)))
        buf.write(idf.tobytes())
    nodes = [n for n in m.hierarchy.internal_nodes if n in m.node_models]
    buf.write(struct.pack("<I", len(nodes)))
    for n in nodes:
        nm = m.node_models[n]
        _write_varint(buf, n)
        _write_varint(buf, len(nm.children))
        _write_deltas(buf, nm.children)
        trivial = nm.trivial_child is not None
        buf.write(bytes((1 if trivial else 0,)))
        if trivial:
            _write_varint(buf, nm.trivial_child)
        buf.write(struct.pack("<d", float(nm.lam) if nm.lam is not None else float("nan")))
        _write_varint(buf, len(nm.subset))
        _write_deltas(buf, nm.subset)
        W = np.asarray(nm.weights, dtype="<f4").reshape(len(nm.subset), len(nm.children))
        buf.write(np.ascontiguousarray(W.T).tobytes())
    return buf.getvalue()


def model_from_bytes(data: bytes) -> TrainedModel:
    buf = io.BytesIO(data)
    if _read_exact(buf, 4) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (version,) = struct.unpack("<H", _read_exact(buf, 2))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    digest = _read_exact(buf, 32)
    (hlen,) = struct.unpack("<I", _read_exact(buf, 4))
    header = json.loads(_read_exact(buf, hlen).decode())
    h = parse_hierarchy([tuple(e) for e in header["edges"]])
    if hashlib.sha256(h.to_text().encode()).digest() != digest:
        raise ModelFormatError("hierarchy hash mismatch")
    idf = None
    if _read_exact(buf, 1) == b"\x01":
        (n_idf,) = struct.unpack("<I", _read_exact(buf, 4))
        idf = np.frombuffer(_read_exact(buf, 8 * n_idf), dtype="<f8").astype(np.float64)
    (n_nodes,) = struct.unpack("<I", _read_exact(buf, 4))
    models = {}
    for _ in range(n_nodes):
        node = _read_varint(buf)
        n_children = _read_varint(buf)
        children = tuple(_read_deltas(buf, n_children).tolist())
        flags = _read_exact(buf, 1)[0]
        trivial = _read_varint(buf) if flags & 1 else None
        (lam,) = struct.unpack("<d", _read_exact(buf, 8))
        n_sub = _read_varint(buf)
        subset = _read_deltas(buf, n_sub)
        raw = np.frombuffer(_read_exact(buf, 4 * n_sub * n_children), dtype="<f4")
        W = raw.reshape(n_children, n_sub).T.astype(np.float64)
        models[node] = NodeModel(node, children, subset, W, None if np.isnan(lam) else lam,
                                 trivial_child=trivial)
    if buf.read(1):
        raise ModelFormatError("trailing bytes after last node block")
    return TrainedModel(h, models, int(header["num_features"]), idf, header.get("config", {}))


def save_model(m: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(m))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def model_to_json(m: TrainedModel) -> dict:
    """Lossless mirror of the binary file (weights as the stored float32 values)."""
    nodes = []
    for n in m.hierarchy.internal_nodes:
        nm = m.node_models.get(n)
        if nm is None:
            continue
        W = np.asarray(nm.weights, dtype=np.float32).astype(np.float64)
        nodes.append({
            "node": n,
            "children": list(nm.children),
            "trivial_child": nm.trivial_child,
            "lambda": nm.lam,
            "subset": np.asarray(nm.subset).tolist(),
            "weights": W.T.tolist(),
        })
    return {
        "format_version": FORMAT_VERSION,
        "hierarchy_sha256": hashlib.sha256(m.hierarchy.to_text().encode()).hexdigest(),
        "num_features": m.num_features,
        "edges": [list(e) for e in m.hierarchy.edges()],
        "config": m.config,
        "idf": None if m.idf is None else np.asarray(m.idf).tolist(),
        "nodes": nodes,
    }


def model_from_json(doc: dict) -> TrainedModel:
    h = parse_hierarchy([tuple(e) for e in doc["edges"]])
    models = {}
    for e in doc["nodes"]:
        W = np.asarray(e["weights"], dtype=np.float64).reshape(len(e["children"]), len(e["subset"])).T
        models[e["node"]] = NodeModel(e["node"], tuple(e["children"]),
                                      np.asarray(e["subset"], dtype=np.int64), W, e["lambda"],
                                      trivial_child=e["trivial_child"])
    idf = None if doc["idf"] is None else np.asarray(doc["idf"], dtype=np.float64)
    return TrainedModel(h, models, doc["num_features"], idf, doc.get("config", {}))
