import json

import numpy as np
import pytest

from netflow_id.checkpoint import load_model, network_fingerprint, save_model
from netflow_id.dnnd import DnndModel
from netflow_id.graph import generate_er, generate_grid
from netflow_id.ndcn import NdcnModel


def test_fingerprint_depends_on_edges():
    a, b = generate_grid(3), generate_er(9, 0.3, seed=1)
    assert network_fingerprint(a) == network_fingerprint(generate_grid(3))
    assert network_fingerprint(a) != network_fingerprint(b)


@pytest.mark.parametrize("make", [
    lambda net: DnndModel.create(net, (1, 5, 1), (2, 5, 1), seed=1, input_scale=25.0),
    lambda net: NdcnModel.create(net, d=4, seed=2),
])
def test_round_trip(tmp_path, make):
    net = generate_grid(3)
    m = make(net)
    save_model(tmp_path / "m.ckpt", m, {"note": "x"})
    back, meta = load_model(tmp_path / "m.ckpt", net)
    assert type(back) is type(m)
    assert np.array_equal(back.params, m.params)
    assert meta["note"] == "x"
    x = np.linspace(1, 9, 9)
    assert np.array_equal(back.predict(x, [1.0]).states if hasattr(m, "predict") else back.velocity(x),
                          m.predict(x, [1.0]).states if hasattr(m, "predict") else m.velocity(x))


def test_network_mismatch(tmp_path):
    m = DnndModel.create(generate_grid(3), (1, 5, 1), (2, 5, 1), seed=0)
    save_model(tmp_path / "m.ckpt", m)
    other = generate_er(9, 0.3, seed=1)
    with pytest.raises(ValueError, match="different network"):
        load_model(tmp_path / "m.ckpt", other)
    moved, _ = load_model(tmp_path / "m.ckpt", other, check_network=False)
    assert moved.n == 9


def test_bad_format(tmp_path):
    p = tmp_path / "m.ckpt"
    p.write_text(json.dumps({"format": 99}))
    with pytest.raises(ValueError):
        load_model(p, generate_grid(2))
