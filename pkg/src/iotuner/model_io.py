"""Portable deployment files: train anywhere, load and predict bit-exactly.

Layout (little-endian throughout, format_version 1):

    offset  size  field
    0       4     magic "KMLM"
    4       1     format_version (1)
    5       1     model_kind: 1 = neural net, 2 = decision tree
    6       2     class_count (u16)
    8       1     feature schema tag: 0 generic, 1 readahead, 2 nfs
    9       4     feature count (u32)
    13      8*n   per-feature normalizer mean, variance (f32 pairs)
    ...           body (see below)
    end-4   4     CRC-32 of all preceding bytes

Neural-net body: layer count (u16) then per layer
    kind (u8: 1 fc, 2 sigmoid, 3 relu), in (u32), out (u32),
    fc only: weights row-major f32, then biases f32.
Decision-tree body: node count (u32) then pre-order records
    kind (u8: 0 internal, 1 leaf); internal: feature (u16), threshold (f32);
    leaf: class (u16).

Files are written to a temp name and renamed into place, so a crashed save
never leaves a half-written file at the destination.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

from .dtree import DecisionTree, TreeNode
from .errors import ModelCorruptionError, ModelFormatError, ModelVersionError
from .matrix import DTYPE, Matrix
from .nn import ActivationLayer, CrossEntropyLoss, FullyConnectedLayer, Model, SgdOptimizer
from .pipeline import FrozenNormalizer

MAGIC = b"KMLM"
FORMAT_VERSION = 1

KIND_NN = 1
KIND_DTREE = 2

SCHEMA_TAGS = {"generic": 0, "readahead": 1, "nfs": 2}
TAG_SCHEMAS = {v: k for k, v in SCHEMA_TAGS.items()}

LAYER_FC = 1
LAYER_SIGMOID = 2
LAYER_RELU = 3

NODE_INTERNAL = 0
NODE_LEAF = 1


def _nn_body(model: Model) -> bytes:
    parts = [struct.pack("<H", len(model.layers))]
    for layer in model.layers:
        if isinstance(layer, FullyConnectedLayer):
            parts.append(struct.pack("<BII", LAYER_FC, layer.in_dim, layer.out_dim))
            parts.append(np.ascontiguousarray(layer.weights.data, dtype=DTYPE).tobytes())
            parts.append(np.ascontiguousarray(layer.bias.data, dtype=DTYPE).tobytes())
        elif isinstance(layer, ActivationLayer):
            code = LAYER_SIGMOID if layer.kind == "sigmoid" else LAYER_RELU
            parts.append(struct.pack("<BII", code, layer.in_dim, layer.out_dim))
        else:
            raise ModelFormatError(f"unserializable layer type {type(layer).__name__}")
    return b"".join(parts)


def _tree_body(tree: DecisionTree) -> bytes:
    records = []

    def walk(node: TreeNode) -> None:
        if node.is_leaf:
            records.append(struct.pack("<BH", NODE_LEAF, node.label))
        else:
            records.append(struct.pack("<BHf", NODE_INTERNAL, node.feature_index,
                                       node.threshold))
            walk(node.left)
            walk(node.right)

    walk(tree.root)
    return struct.pack("<I", tree.node_count) + b"".join(records)


def save_model(model, normalizer: FrozenNormalizer, path: str,
               schema: str = "generic") -> None:
    """Serialize a model plus its normalizer snapshot, atomically."""
    if schema not in SCHEMA_TAGS:
        raise ValueError(f"unknown feature schema {schema!r}")
    if isinstance(model, Model):
        kind, body = KIND_NN, _nn_body(model)
        class_count = model.class_count
        feature_count = model.input_dim
    elif isinstance(model, DecisionTree):
        kind, body = KIND_DTREE, _tree_body(model)
        class_count = model.class_count
        feature_count = model.feature_dim
    else:
        raise ModelFormatError(f"cannot serialize {type(model).__name__}")
    if normalizer.dim != feature_count:
        raise ValueError(
            f"normalizer covers {normalizer.dim} features, model takes {feature_count}"
        )
    header = MAGIC + struct.pack(
        "<BBHBI", FORMAT_VERSION, kind, class_count, SCHEMA_TAGS[schema], feature_count
    )
    stats = np.empty(2 * feature_count, dtype=DTYPE)
    stats[0::2] = normalizer.mean.astype(DTYPE)
    stats[1::2] = normalizer.variance.astype(DTYPE)
    payload = header + stats.tobytes() + body
    blob = payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)

    dirname = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".model-", dir=dirname)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ModelCorruptionError(
                f"truncated body: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path: str):
    """Reconstruct (model, frozen_normalizer, schema) from a deployment file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 17:  # magic + fixed header + CRC
        raise ModelCorruptionError(f"file too small ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {blob[:4]!r}")
    version = blob[4]
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"format version {version}, expected {FORMAT_VERSION}")
    payload, crc_bytes = blob[:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ModelCorruptionError("CRC mismatch")

    r = _Reader(payload)
    r.take(5)  # magic + version, already checked
    kind, class_count, schema_tag, feature_count = r.unpack("<BHBI")
    schema = TAG_SCHEMAS.get(schema_tag)
    if schema is None:
        raise ModelFormatError(f"unknown feature schema tag {schema_tag}")
    stats = np.frombuffer(r.take(8 * feature_count), dtype=DTYPE)
    normalizer = FrozenNormalizer(stats[0::2].astype(np.float64),
                                  stats[1::2].astype(np.float64))
    if kind == KIND_NN:
        model = _read_nn(r, class_count)
    elif kind == KIND_DTREE:
        model = _read_tree(r, class_count, feature_count)
    else:
        raise ModelFormatError(f"unknown model kind {kind}")
    if r.pos != len(payload):
        raise ModelCorruptionError(f"{len(payload) - r.pos} trailing bytes after body")
    return model, normalizer, schema


def _read_nn(r: _Reader, class_count: int) -> Model:
    (layer_count,) = r.unpack("<H")
    layers: list = []
    for _ in range(layer_count):
        code, in_dim, out_dim = r.unpack("<BII")
        if code == LAYER_FC:
            layer = FullyConnectedLayer(in_dim, out_dim, rng=None)
            w = np.frombuffer(r.take(4 * in_dim * out_dim), dtype=DTYPE)
            b = np.frombuffer(r.take(4 * out_dim), dtype=DTYPE)
            layer.weights = Matrix(w.reshape(out_dim, in_dim))
            layer.bias = Matrix(b.reshape(out_dim, 1))
            layers.append(layer)
        elif code in (LAYER_SIGMOID, LAYER_RELU):
            if in_dim != out_dim:
                raise ModelFormatError(f"activation layer with in {in_dim} != out {out_dim}")
            name = "sigmoid" if code == LAYER_SIGMOID else "relu"
            layers.append(ActivationLayer(name, in_dim))
        else:
            raise ModelFormatError(f"unknown layer kind {code}")
    return Model(layers, CrossEntropyLoss(), SgdOptimizer(), class_count)


def _read_tree(r: _Reader, class_count: int, feature_count: int) -> DecisionTree:
    (node_count,) = r.unpack("<I")
    consumed = 0

    def read_node() -> TreeNode:
        nonlocal consumed
        consumed += 1
        if consumed > node_count:
            raise ModelCorruptionError("tree body has more records than declared")
        (code,) = r.unpack("<B")
        if code == NODE_LEAF:
            (label,) = r.unpack("<H")
            return TreeNode(label=label)
        if code == NODE_INTERNAL:
            feature, threshold = r.unpack("<Hf")
            left = read_node()
            right = read_node()
            return TreeNode(feature_index=feature, threshold=threshold,
                            left=left, right=right)
        raise ModelFormatError(f"unknown tree record kind {code}")

    root = read_node()
    if consumed != node_count:
        raise ModelCorruptionError(
            f"tree declared {node_count} nodes but pre-order held {consumed}"
        )
    return DecisionTree(root, feature_dim=feature_count, class_count=class_count)
