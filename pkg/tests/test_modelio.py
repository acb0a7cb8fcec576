import json

import numpy as np
import pytest
import scipy.sparse as sp

from hierfs.errors import ModelFormatError
from hierfs.modelio import (model_from_bytes, model_from_json, model_to_bytes, model_to_json, load_model,
                            save_model)
from hierfs.predictor import predict_batch
from hierfs.trainer import NodeModel

from conftest import random_model, random_tree


def _model(rng):
    h = random_tree(rng, depth=3)
    m = random_model(h, 300, rng, 0.2)
    m.idf = rng.random(300)
    m.config = {"fs_method": "gini", "training": {"regularizer": "l1"}}
    n = h.internal_nodes[-1]
    nm = m.node_models[n]
    m.node_models[n] = NodeModel(n, nm.children, nm.subset, np.zeros_like(nm.weights), 1.0,
                                 trivial_child=nm.children[0])
    return m


def test_binary_roundtrip(rng, tmp_path):
    m = _model(rng)
    save_model(m, tmp_path / "m.bin")
    back = load_model(tmp_path / "m.bin")
    assert back.hierarchy.edges() == m.hierarchy.edges()
    assert back.num_features == 300
    assert np.array_equal(back.idf, m.idf)
    assert back.config == m.config
    for n, nm in m.node_models.items():
        bn = back.node_models[n]
        assert bn.children == nm.children
        assert np.array_equal(bn.subset, nm.subset)
        assert np.array_equal(bn.weights, nm.weights.astype(np.float32).astype(np.float64))
        assert bn.trivial_child == nm.trivial_child
    # re-serialising the loaded model is byte-identical
    assert model_to_bytes(back) == (tmp_path / "m.bin").read_bytes()


def test_roundtrip_predictions_equal(rng):
    m = model_from_bytes(model_to_bytes(_model(rng)))
    again = model_from_bytes(model_to_bytes(m))
    X = sp.random(200, 300, density=0.05, random_state=3, format="csr")
    assert predict_batch(m, X).labels.tolist() == predict_batch(again, X).labels.tolist()


def test_json_mirror_lossless(rng):
    m = model_from_bytes(model_to_bytes(_model(rng)))
    doc = json.loads(json.dumps(model_to_json(m)))
    back = model_from_json(doc)
    assert model_to_bytes(back) == model_to_bytes(m)


def test_bad_magic_and_version(rng):
    data = bytearray(model_to_bytes(_model(rng)))
    with pytest.raises(ModelFormatError):
        model_from_bytes(b"XXXX" + bytes(data[4:]))
    data[4] = 99
    with pytest.raises(ModelFormatError):
        model_from_bytes(bytes(data))


def test_truncated_and_trailing(rng):
    data = model_to_bytes(_model(rng))
    with pytest.raises(ModelFormatError):
        model_from_bytes(data[:-3])
    with pytest.raises(ModelFormatError):
        model_from_bytes(data + b"\x00")


def test_hash_mismatch(rng):
    data = bytearray(model_to_bytes(_model(rng)))
    data[6] ^= 0xFF
    with pytest.raises(ModelFormatError):
        model_from_bytes(bytes(data))
