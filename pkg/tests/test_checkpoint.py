import numpy as np
import pytest

from pgnniv import checkpoint
from pgnniv import hydraulics as hyd
from pgnniv.errors import ParseError
from pgnniv.network import LayerSpec, NetworkSpec, build_network
from pgnniv.training import predict


def specs():
    yield NetworkSpec(1, (LayerSpec(3), LayerSpec(15), LayerSpec(15, "relu"), LayerSpec(1)),
                      pil_markers={1})
    yield NetworkSpec(1, (LayerSpec(3), LayerSpec(3, "model_layer")), pil_markers={1},
                      model_layer_kind="hazen_williams",
                      trainable_physical_params=("lambda1", "lambda2", "lambda3"), pipe=hyd.TABLE1)
    yield NetworkSpec(3, (LayerSpec(3, "relu"), LayerSpec(5, "relu"), LayerSpec(2, "relu"),
                          LayerSpec(1, "model_layer")), pil_markers={1, 3},
                      model_layer_kind="geometry_integrator", length_affine=((10, 0), (10, 0)))


@pytest.mark.parametrize("spec", list(specs()), ids=["mlp", "hazen_williams", "geometry"])
def test_round_trip_is_bit_identical(spec, tmp_path):
    net = build_network(spec, seed=11)
    for p in net.params.values():  # non-trivial biases too
        p.value = p.value + np.random.default_rng(1).normal(size=p.shape) * 1e-3
    path = checkpoint.save(net, tmp_path / "net.txt")
    back = checkpoint.load(path)
    assert back.spec == net.spec
    x = np.random.default_rng(0).uniform(0.5, 5, size=(30, spec.input_size))
    out_a, pil_a = predict(net, x)
    out_b, pil_b = predict(back, x)
    assert np.array_equal(out_a, out_b)
    assert all(np.array_equal(pil_a[k], pil_b[k]) for k in pil_a)
    assert checkpoint.dumps(back) == checkpoint.dumps(net)


def test_malformed_checkpoints():
    text = checkpoint.dumps(build_network(next(specs()), seed=0))
    lines = text.splitlines()
    with pytest.raises(ParseError, match="line 1"):
        checkpoint.loads("\n".join(["# other"] + lines[1:]))
    with pytest.raises(ParseError, match="line 2"):
        checkpoint.loads("\n".join(lines[:1] + ["spec {broken"] + lines[2:]))
    with pytest.raises(ParseError, match="truncated"):
        checkpoint.loads("\n".join(lines[:-1]))
    with pytest.raises(ParseError, match="lacks"):
        checkpoint.loads("\n".join(lines[:4]))
    bad = [l.replace("param W1", "param W9") for l in lines]
    with pytest.raises(ParseError, match="unknown param"):
        checkpoint.loads("\n".join(bad))
