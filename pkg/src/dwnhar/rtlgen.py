"""Lower frozen models to a netlist and emit SystemVerilog.

Wire ids ``0 .. input_width-1`` are the input bits; node ``i`` drives wire
``input_width + i``. Node kinds:

``lut``  arity inputs (pin 0 first), 1-bit output, ``truth[u]`` is the output at address u
``add``  two inputs, unsigned sum
``reg``  one input, delayed one clock (identity when interpreted)
``cmp``  argmax step over two candidates; output carries a value and a class index.
         An input that is a plain score wire takes its class index from ``labels``.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .infer import FrozenModel

MAX_ARITY = 8


@dataclass(frozen=True)
class Node:
    kind: str
    inputs: tuple
    width: int = 1
    truth: tuple = ()
    labels: tuple = ()


@dataclass(frozen=True)
class Netlist:
    input_width: int
    nodes: tuple
    score_wires: tuple
    label_wire: int | None   # final cmp wire, None when there is a single class
    label_width: int
    pipeline_stages: int = 0

    def __post_init__(self):
        validate(self)

    def wire_node(self, wire: int) -> Node | None:
        return None if wire < self.input_width else self.nodes[wire - self.input_width]

    def wire_width(self, wire: int) -> int:
        node = self.wire_node(wire)
        return 1 if node is None else node.width


def validate(net: Netlist) -> None:
    """Structural checks: defined-before-use, arities, truth-table sizes."""
    is_cmp = [False] * net.input_width
    for i, node in enumerate(net.nodes):
        here = net.input_width + i
        for w in node.inputs:
            if not 0 <= w < here:
                raise ValueError(f"node {i} ({node.kind}) reads wire {w} before it is defined")
        k = node.kind
        if k == "lut":
            n = len(node.inputs)
            if not 1 <= n <= MAX_ARITY or len(node.truth) != 1 << n:
                raise ValueError(f"node {i}: lut with {n} inputs and {len(node.truth)} truth bits")
            if any(is_cmp[w] for w in node.inputs):
                raise ValueError(f"node {i}: lut reads a comparator wire")
        elif k == "add":
            if len(node.inputs) != 2 or any(is_cmp[w] for w in node.inputs):
                raise ValueError(f"node {i}: add needs two plain inputs")
        elif k == "reg":
            if len(node.inputs) != 1 or is_cmp[node.inputs[0]]:
                raise ValueError(f"node {i}: reg needs one plain input")
        elif k == "cmp":
            if len(node.inputs) != 2 or len(node.labels) != 2:
                raise ValueError(f"node {i}: cmp needs two inputs and two labels")
            for w, lab in zip(node.inputs, node.labels):
                if is_cmp[w] != (lab is None):
                    raise ValueError(f"node {i}: label must be given exactly for score inputs")
        else:
            raise ValueError(f"node {i}: unknown kind {k!r}")
        is_cmp.append(k == "cmp")
    ends = list(net.score_wires) + ([] if net.label_wire is None else [net.label_wire])
    total = net.input_width + len(net.nodes)
    for w in ends:
        if not 0 <= w < total:
            raise ValueError(f"output wire {w} undefined")
    if net.label_wire is not None and not is_cmp[net.label_wire]:
        raise ValueError("label wire must come from a comparator")


class _Builder:
    def __init__(self, input_width: int):
        self.input_width = input_width
        self.nodes: list[Node] = []
        self.max_value = [1] * input_width
        self.cuts: dict[str, list[int]] = {}

    def add(self, node: Node, max_value: int = 1) -> int:
        self.nodes.append(node)
        self.max_value.append(max_value)
        return self.input_width + len(self.nodes) - 1

    def cut(self, tag: str) -> None:
        self.cuts.setdefault(tag, []).append(len(self.nodes))


def _popcount_tree(b: _Builder, groups: list) -> list:
    """Balanced binary adder trees, built level by level across all groups."""
    levels = [list(g) for g in groups]
    while any(len(g) > 1 for g in levels):
        nxt = []
        for g in levels:
            merged = []
            for i in range(0, len(g) - 1, 2):
                a, c = g[i], g[i + 1]
                mv = b.max_value[a] + b.max_value[c]
                merged.append(b.add(Node("add", (a, c), mv.bit_length()), mv))
            if len(g) % 2:
                merged.append(g[-1])
            nxt.append(merged)
        levels = nxt
        if any(len(g) > 1 for g in levels):
            b.cut("adder")
    return [g[0] for g in levels]


def _argmax_tree(b: _Builder, scores: list) -> int:
    """Balanced comparator tree; the left subtree always holds lower class indices."""
    def build(lo: int, hi: int):
        if hi - lo == 1:
            return scores[lo], lo
        mid = (lo + hi + 1) // 2
        left, lab_l = build(lo, mid)
        right, lab_r = build(mid, hi)
        mv = max(b.max_value[left], b.max_value[right])
        w = b.add(Node("cmp", (left, right), mv.bit_length() or 1, labels=(lab_l, lab_r)), mv)
        return w, None
    return build(0, len(scores))[0]


def _select_cuts(cuts: dict, stages: int) -> list:
    final_layer = cuts["layer"][-1:]
    priority = final_layer + cuts.get("popcount", []) + cuts["layer"][-2::-1] + cuts.get("adder", [])
    if stages > len(priority):
        raise ValueError(f"pipeline_stages={stages} exceeds the {len(priority)} available cut points")
    return sorted(priority[:stages])


def _insert_registers(input_width, nodes, outputs, positions):
    """Register every wire live across each selected cut position."""
    last_use = {}
    for i, node in enumerate(nodes):
        for w in node.inputs:
            last_use[w] = i
    for w in outputs:
        last_use[w] = len(nodes)
    remap = {w: w for w in range(input_width)}
    out: list[Node] = []
    positions = list(positions)
    defined = list(range(input_width))

    def flush(pos):
        for old in defined:
            if last_use.get(old, -1) >= pos:
                cur = remap[old]
                width = 1 if cur < input_width else out[cur - input_width].width
                out.append(Node("reg", (cur,), width))
                remap[old] = input_width + len(out) - 1

    for i, node in enumerate(nodes):
        while positions and positions[0] == i:
            flush(positions.pop(0))
        new_inputs = tuple(remap[w] for w in node.inputs)
        out.append(Node(node.kind, new_inputs, node.width, node.truth, node.labels))
        old_id = input_width + i
        remap[old_id] = input_width + len(out) - 1
        defined.append(old_id)
    while positions:
        flush(positions.pop(0))
    return out, remap


def lower(frozen: FrozenModel, pipeline_stages: int = 2) -> Netlist:
    """One LUT node per model LUT, popcount adder trees, argmax comparator tree.

    ``pipeline_stages`` register stages are placed, in order of preference,
    after the last LUT layer, after the popcount trees, after earlier LUT
    layers, then between adder-tree levels. 0 gives a purely combinational
    netlist.
    """
    if pipeline_stages < 0:
        raise ValueError("pipeline_stages must be non-negative")
    for i, layer in enumerate(frozen.layers):
        if layer.arity > MAX_ARITY:
            raise ValueError(f"layer {i}: arity {layer.arity} exceeds {MAX_ARITY}")
    b = _Builder(frozen.input_width)
    current = list(range(frozen.input_width))
    for layer in frozen.layers:
        nxt = []
        for lut in range(layer.num_luts):
            pins = tuple(current[int(s)] for s in layer.routing[lut])
            truth = tuple(int(v) for v in layer.lut_bits[lut])
            nxt.append(b.add(Node("lut", pins, 1, truth)))
        current = nxt
        b.cut("layer")
    k, g = frozen.num_classes, frozen.group_size
    scores = _popcount_tree(b, [current[c * g:(c + 1) * g] for c in range(k)])
    b.cut("popcount")
    label = _argmax_tree(b, scores) if k > 1 else None
    label_width = max(1, (k - 1).bit_length())

    nodes, outputs = b.nodes, scores + ([] if label is None else [label])
    if pipeline_stages:
        nodes, remap = _insert_registers(
            frozen.input_width, nodes, outputs, _select_cuts(b.cuts, pipeline_stages)
        )
        scores = [remap[w] for w in scores]
        label = None if label is None else remap[label]
    return Netlist(frozen.input_width, tuple(nodes), tuple(scores), label, label_width,
                   pipeline_stages)


def interpret(net: Netlist, bits):
    """Evaluate the netlist node by node; registers act as plain wires.

    ``bits`` is one input vector ``[W]`` (returns ``(label, scores)``) or a
    batch ``[N, W]`` (returns arrays).
    """
    x = np.asarray(bits, dtype=np.int64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.input_width:
        raise ValueError(f"input has {x.shape[1]} bits, netlist expects {net.input_width}")
    vals: list = list(x.T)
    for node in net.nodes:
        k = node.kind
        if k == "lut":
            addr = np.zeros(x.shape[0], dtype=np.int64)
            for j, w in enumerate(node.inputs):
                addr |= vals[w] << j
            vals.append(np.asarray(node.truth, dtype=np.int64)[addr])
        elif k == "add":
            vals.append(vals[node.inputs[0]] + vals[node.inputs[1]])
        elif k == "reg":
            vals.append(vals[node.inputs[0]])
        else:
            cands = []
            for w, lab in zip(node.inputs, node.labels):
                if lab is None:
                    cands.append(vals[w])
                else:
                    cands.append((vals[w], np.full(x.shape[0], lab, dtype=np.int64)))
            (av, ai), (bv, bi) = cands
            take_b = bv > av
            vals.append((np.where(take_b, bv, av), np.where(take_b, bi, ai)))
    scores = np.stack([vals[w] for w in net.score_wires], axis=1)
    if net.label_wire is None:
        labels = np.zeros(x.shape[0], dtype=np.int64)
    else:
        labels = vals[net.label_wire][1]
    if single:
        return int(labels[0]), [int(v) for v in scores[0]]
    return labels, scores


def node_counts(net: Netlist) -> dict:
    c = Counter(n.kind for n in net.nodes)
    return {k: c.get(k, 0) for k in ("lut", "add", "cmp", "reg")}


# -- SystemVerilog -----------------------------------------------------------

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_$]*$")
_KEYWORDS = {
    "module", "endmodule", "input", "output", "inout", "logic", "wire", "reg", "assign",
    "always", "always_ff", "always_comb", "begin", "end", "case", "endcase", "if", "else",
    "for", "function", "task", "posedge", "negedge", "default", "parameter", "localparam",
    "interface", "package", "class", "int", "bit", "byte", "integer", "initial", "generate",
}


def _sig(net: Netlist, w: int, part: str = "") -> str:
    if w < net.input_width:
        return f"x[{w}]"
    return f"n{w - net.input_width}{part}"


def _vec(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


def emit_verilog(net: Netlist, module_name: str = "dwn_top") -> str:
    if not _IDENT.match(module_name) or module_name in _KEYWORDS:
        raise ValueError(f"invalid module name {module_name!r}")
    has_clk = any(n.kind == "reg" for n in net.nodes)
    lw = net.label_width
    ports = []
    if has_clk:
        ports.append("    input  logic clk")
    ports.append(f"    input  logic [{net.input_width - 1}:0] x")
    ports.append(f"    output logic [{lw - 1}:0] label")
    for c, w in enumerate(net.score_wires):
        ports.append(f"    output logic {_vec(net.wire_width(w))}score_{c}")
    counts = node_counts(net)
    lines = [
        f"// {module_name}: {counts['lut']} lut, {counts['add']} add, "
        f"{counts['cmp']} cmp, {counts['reg']} reg nodes; {net.pipeline_stages} pipeline stages",
        f"module {module_name} (",
        ",\n".join(ports),
        ");",
    ]
    for i, node in enumerate(net.nodes):
        w = net.input_width + i
        name = _sig(net, w)
        if node.kind == "lut":
            n = len(node.inputs)
            sel = ", ".join(_sig(net, s) for s in reversed(node.inputs))
            lines.append(f"  logic {name};")
            lines.append("  always_comb begin")
            lines.append(f"    case ({{{sel}}})")
            for u, t in enumerate(node.truth):
                lines.append(f"      {n}'b{u:0{n}b}: {name} = 1'b{t};")
            lines.append(f"      default: {name} = 1'b0;")
            lines.append("    endcase")
            lines.append("  end")
        elif node.kind == "add":
            wa, wc = (net.wire_width(s) for s in node.inputs)
            a, c = (_sig(net, s) for s in node.inputs)
            # zero-extend the narrower operand so both sides have one type
            if wa < wc:
                a = f"{wc}'({a})"
            elif wc < wa:
                c = f"{wa}'({c})"
            lines.append(f"  logic {_vec(node.width)}{name};")
            lines.append(f"  assign {name} = {a} + {c};")
        elif node.kind == "reg":
            lines.append(f"  logic {_vec(node.width)}{name};")
            lines.append(f"  always_ff @(posedge clk) {name} <= {_sig(net, node.inputs[0])};")
        else:
            (a, c), (la, lc) = node.inputs, node.labels
            av = _sig(net, a, "" if la is not None else "_v")
            cv = _sig(net, c, "" if lc is not None else "_v")
            ai = f"{lw}'d{la}" if la is not None else _sig(net, a, "_i")
            ci = f"{lw}'d{lc}" if lc is not None else _sig(net, c, "_i")
            lines.append(f"  logic {_vec(node.width)}{name}_v;")
            lines.append(f"  logic [{lw - 1}:0] {name}_i;")
            lines.append(f"  assign {name}_v = ({cv} > {av}) ? {cv} : {av};")
            lines.append(f"  assign {name}_i = ({cv} > {av}) ? {ci} : {ai};")
    for c, w in enumerate(net.score_wires):
        lines.append(f"  assign score_{c} = {_sig(net, w)};")
    if net.label_wire is None:
        lines.append("  assign label = '0;")
    else:
        lines.append(f"  assign label = {_sig(net, net.label_wire, '_i')};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def report(net: Netlist, module_name: str = "dwn_top") -> str:
    counts = node_counts(net)
    rows = [f"module {module_name}", f"input_width {net.input_width}"]
    rows += [f"{k} {v}" for k, v in counts.items()]
    rows.append(f"pipeline_stages {net.pipeline_stages}")
    return "\n".join(rows) + "\n"
