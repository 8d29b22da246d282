import itertools
from pathlib import Path

import numpy as np
import pytest

from _helpers import random_bits, small_model
from dwnhar.infer import FrozenLayer, FrozenModel, freeze, predict_bits
from dwnhar.rtlgen import Netlist, Node, emit_verilog, interpret, lower, node_counts

GOLDEN = Path(__file__).parent / "golden"


def and_model():
    layer = FrozenLayer(np.array([[0, 1]]), np.array([[0, 0, 0, 1]], dtype=np.uint8))
    return FrozenModel((layer,), 1, 1.0, 2)


def two_class_model():
    routing = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    truth = np.array([[0, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 1], [1, 0, 0, 1]], dtype=np.uint8)
    return FrozenModel((FrozenLayer(routing, truth),), 2, 1.0, 4)


def test_one_lut_netlist():
    net = lower(and_model(), 0)
    assert node_counts(net) == {"lut": 1, "add": 0, "cmp": 0, "reg": 0}
    assert [interpret(net, np.array(b))[1] for b in ([0, 0], [1, 0], [0, 1], [1, 1])] == \
        [[0], [0], [0], [1]]


@pytest.mark.parametrize("luts,k", [(12, 3), (12, 4), (30, 6), (7, 7), (20, 6), (1, 1)])
def test_node_count_formula(luts, k):
    m = freeze(small_model(luts * 7 + k, layers=(luts,), classes=k, arity=2, pool=3, width=10))
    g = luts // k
    counts = node_counts(lower(m, 0))
    assert counts["lut"] == luts
    assert counts["add"] == k * (g - 1)
    assert counts["cmp"] == k - 1
    assert counts["reg"] == 0


def test_pipeline_stages_do_not_change_function(rng):
    f = freeze(small_model(1, layers=(24, 18), arity=3, pool=6, width=30, classes=6))
    x = random_bits(rng, 400, 30)
    want_labels, want_counts = predict_bits(f, x)
    for stages in range(0, 5):
        net = lower(f, stages)
        assert net.pipeline_stages == stages
        assert (node_counts(net)["reg"] > 0) == (stages > 0)
        labels, scores = interpret(net, x)
        assert np.array_equal(labels, want_labels)
        assert np.array_equal(scores, want_counts)


def test_too_many_stages():
    f = freeze(small_model(1, layers=(24, 18), arity=3, pool=6, width=30, classes=6))
    with pytest.raises(ValueError, match="cut points"):
        lower(f, 5)


def test_interpret_matches_predict_random(rng):
    f = freeze(small_model(2, layers=(200,), arity=4, pool=16, width=180, classes=6))
    x = random_bits(rng, 1000, 180)
    labels, _ = interpret(lower(f, 2), x)
    assert np.array_equal(labels, predict_bits(f, x)[0])


def test_exhaustive_eight_bit_model():
    f = freeze(small_model(3, layers=(10, 6), arity=3, pool=4, width=8, classes=3))
    x = np.array(list(itertools.product([0, 1], repeat=8)), dtype=np.uint8)
    labels, scores = interpret(lower(f, 2), x)
    want_labels, want_counts = predict_bits(f, x)
    assert np.array_equal(labels, want_labels)
    assert np.array_equal(scores, want_counts)


def test_all_zero_input_fixed():
    f = freeze(small_model(4, classes=3))
    net = lower(f)
    z = np.zeros(24, dtype=np.uint8)
    assert interpret(net, z) == interpret(net, z)
    assert interpret(net, z)[0] == predict_bits(f, z)[0]


def test_argmax_ties_to_lowest_class():
    # identical groups: every class gets the same score
    routing = np.zeros((6, 2), dtype=np.int64)
    truth = np.ones((6, 4), dtype=np.uint8)
    f = FrozenModel((FrozenLayer(routing, truth),), 3, 1.0, 2)
    assert interpret(lower(f), np.array([1, 0]))[0] == 0


def test_validation_rejects_forward_reference():
    with pytest.raises(ValueError):
        Netlist(2, (Node("lut", (0, 3), 1, (0, 0, 0, 1)),), (2,), None, 1)
    with pytest.raises(ValueError):
        Netlist(2, (Node("lut", (0, 1), 1, (0, 1)),), (2,), None, 1)


def test_arity_limit():
    routing = np.zeros((1, 9), dtype=np.int64)
    f = FrozenModel((FrozenLayer(routing, np.zeros((1, 512), dtype=np.uint8)),), 1, 1.0, 2)
    with pytest.raises(ValueError, match="arity"):
        lower(f)


@pytest.mark.parametrize("name,model,stages", [
    ("and_lut", and_model, 0), ("and_lut_pipelined", and_model, 2),
    ("two_class", two_class_model, 1),
])
def test_golden_files(name, model, stages):
    module = "and_lut" if name.startswith("and_lut") else name
    text = emit_verilog(lower(model(), stages), module)
    assert text == (GOLDEN / f"{name}.sv").read_text()


def test_and_golden_case_body():
    body = [l.strip() for l in (GOLDEN / "and_lut.sv").read_text().splitlines() if "'b" in l]
    assert [l[-2] for l in body if l[0].isdigit()] == ["0", "0", "0", "1"]


def test_emission_deterministic():
    f = freeze(small_model(5, layers=(30,), classes=6))
    assert emit_verilog(lower(f, 2)) == emit_verilog(lower(f, 2))


def test_line_count_linear_in_nodes():
    def size(luts):
        f = freeze(small_model(6, layers=(luts,), arity=4, pool=8, width=64, classes=6))
        net = lower(f, 2)
        return len(net.nodes), emit_verilog(net).count("\n")
    (n1, l1), (n2, l2), (n3, l3) = size(60), size(600), size(6000)
    s1 = (l2 - l1) / (n2 - n1)
    s2 = (l3 - l2) / (n3 - n2)
    assert abs(s2 - s1) / s1 < 0.2


@pytest.mark.parametrize("bad", ["1abc", "my-mod", "module", ""])
def test_invalid_module_name(bad):
    with pytest.raises(ValueError, match="module name"):
        emit_verilog(lower(and_model(), 0), bad)


def test_pyslang_accepts_emitted_text():
    pyslang = pytest.importorskip("pyslang")
    f = freeze(small_model(7, layers=(20, 12), arity=3, classes=4))
    for stages in (0, 3):
        text = emit_verilog(lower(f, stages), "dwn_check")
        comp = pyslang.ast.Compilation()
        comp.addSyntaxTree(pyslang.syntax.SyntaxTree.fromText(text))
        assert [str(d.code) for d in comp.getAllDiagnostics()] == []
