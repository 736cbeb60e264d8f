import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gcpverify.generate import random_network
from gcpverify.model import (AffineLayer, InputBox, Network, ProblemError, Spec, canonicalize, forward,
                             forward_all, load_problem, parse_problem, problem_to_dict, save_problem)

from conftest import DATA


def identity():
    return Network.from_arrays([[[1.0]]], [[0.0]])


def test_identity_file_loads(tmp_path):
    path = tmp_path / "id.json"
    path.write_text(json.dumps({"layers": [{"weight": [[1]], "bias": [0]}],
                                "input": {"center": [0], "eps": 1}}))
    net, box, spec = load_problem(path)
    assert net.num_layers == 1
    np.testing.assert_array_equal(net.weights(1), [[1.0]])
    assert box.eps == 1.0 and spec.coeffs.tolist() == [1.0]


def test_dimension_mismatch_names_layer():
    data = {"layers": [{"weight": np.ones((2, 3)).tolist(), "bias": [0, 0]},
                       {"weight": np.ones((2, 2)).tolist(), "bias": [0, 0]},
                       {"weight": np.ones((1, 3)).tolist(), "bias": [0]}],
            "input": {"center": [0, 0, 0], "eps": 0.1}}
    with pytest.raises(ProblemError, match="layer 3"):
        parse_problem(data)


def test_parse_error_has_line_context(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "layers": [\n  {"weight": [[1]], "bias": [0],}\n ]\n}')
    with pytest.raises(ProblemError, match=r":3:"):
        load_problem(path)


def test_bias_length_must_match():
    with pytest.raises(ProblemError):
        AffineLayer(np.ones((2, 2)), np.ones(3))


def test_non_finite_rejected():
    with pytest.raises(ProblemError):
        AffineLayer([[np.nan]], [0.0])
    with pytest.raises(ProblemError):
        InputBox([0.0], -1.0)
    with pytest.raises(ProblemError):
        Spec([0.0, 0.0])


def test_toy2_fixture_loads():
    net, box, spec = load_problem(DATA / "toy2.json")
    assert [l.weight.shape for l in net.layers] == [(2, 2), (1, 2)]
    assert np.isfinite(forward(canonicalize(net, spec), [0.0, 0.0]))


def test_canonicalize_difference_of_logits():
    rng = np.random.default_rng(0)
    net = random_network(rng, [3, 4, 2])
    f = canonicalize(net, Spec([1.0, -1.0]))
    for x in rng.normal(size=(10, 3)):
        raw = forward_all(net, x)[-1]
        assert forward(f, x) == pytest.approx(raw[0] - raw[1], abs=1e-12)


def test_canonicalize_offset_on_identity():
    f = canonicalize(identity(), Spec([1.0], 2.0))
    assert forward(f, [0.7]) == pytest.approx(2.7)
    assert f.output_dim == 1


def test_canonicalize_length_mismatch():
    with pytest.raises(ProblemError):
        canonicalize(identity(), Spec([1.0, 1.0]))


def test_canonical_component_matches_raw():
    rng = np.random.default_rng(5)
    net = random_network(rng, [2, 5, 3])
    f = canonicalize(net, Spec([0.0, 1.0, 0.0]))
    xs = rng.normal(size=(10, 2))
    np.testing.assert_allclose(forward(f, xs), forward_all(net, xs)[-1][:, 1], atol=1e-12)


def test_forward_examples():
    assert forward(identity(), [0.7]) == pytest.approx(0.7)
    relu = Network.from_arrays([[[1.0]], [[1.0]]], [[0.0], [-0.5]])
    assert forward(relu, [-1.0]) == pytest.approx(-0.5)
    assert forward(relu, [1.0]) == pytest.approx(0.5)
    with pytest.raises(ProblemError):
        forward(relu, [1.0, 2.0])


@given(st.integers(0, 10_000))
def test_save_load_roundtrip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, [2, 3, 2])
    box = InputBox(rng.normal(size=2), float(rng.uniform(0, 1)))
    spec = Spec([1.0, -1.0], float(rng.normal()))
    path = tmp_path_factory.mktemp("rt") / "p.json"
    save_problem(path, net, box, spec)
    net2, box2, spec2 = load_problem(path)
    assert problem_to_dict(net2, box2, spec2) == problem_to_dict(net, box, spec)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0, 2))
def test_box_clamp_stays_inside(x, eps):
    box = InputBox([0.5, -0.5], eps)
    assert box.contains(box.clamp(x), tol=1e-12)
