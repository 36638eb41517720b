#!/usr/bin/env python3
"""Writes the model fixtures under fixtures/.

Every fixture is described once with a tiny graph builder and emitted in the
JSON interchange format. A few are also serialized as ONNX ModelProto binaries
through the official `onnx` package so that the Rust wire decoder is checked
against an independent writer.

Usage: python3 tools/write_fixtures.py [output_dir]
"""

import json
import os
import sys


class Model:
    def __init__(self, opset=17):
        self.nodes = []
        self.inputs = []
        self.outputs = []
        self.initializers = []
        self.opset = opset
        self.names = set()

    def input(self, name):
        self.inputs.append(name)
        return name

    def init(self, name):
        self.initializers.append(name)
        return name

    def output(self, tensor):
        self.outputs.append(tensor)
        return tensor

    def op(self, op_type, inputs, name, n_out=1, attrs=None):
        assert name not in self.names, name
        self.names.add(name)
        outs = [name + ":0"] if n_out == 1 else [f"{name}:{i}" for i in range(n_out)]
        self.nodes.append(
            {"name": name, "op": op_type, "inputs": list(inputs), "outputs": outs, "attrs": attrs or {}}
        )
        return outs[0]

    def const(self, name):
        return self.op("Constant", [], name, attrs={"value": True})

    def to_json(self):
        doc = {
            "nodes": [
                {"name": n["name"], "op": n["op"], "inputs": n["inputs"], "outputs": n["outputs"]}
                for n in self.nodes
            ],
            "inputs": self.inputs,
            "outputs": self.outputs,
            "initializers": self.initializers,
        }
        if self.opset is not None:
            doc["opset"] = self.opset
        return json.dumps(doc, indent=2) + "\n"

    def to_onnx(self, list_initializers_as_inputs=False, anonymous=(), graph_name="fixture"):
        import onnx
        from onnx import TensorProto, helper

        def tensor(name):
            return helper.make_tensor(name, TensorProto.FLOAT, [1], [0.5])

        nodes = []
        for n in self.nodes:
            kwargs = {}
            for key, value in n["attrs"].items():
                if key == "value":
                    kwargs["value"] = tensor(n["name"] + "_value")
                elif key in ("then_branch", "else_branch"):
                    kwargs[key] = value
                else:
                    kwargs[key] = value
            name = "" if n["name"] in anonymous else n["name"]
            nodes.append(helper.make_node(n["op"], n["inputs"], n["outputs"], name=name, **kwargs))

        info = lambda t: helper.make_tensor_value_info(t, TensorProto.FLOAT, None)
        graph_inputs = [info(t) for t in self.inputs]
        if list_initializers_as_inputs:
            graph_inputs += [info(t) for t in self.initializers]
        graph = helper.make_graph(
            nodes,
            graph_name,
            graph_inputs,
            [info(t) for t in self.outputs],
            initializer=[tensor(t) for t in self.initializers],
            doc_string="fixture graph",
        )
        model = helper.make_model(
            graph,
            producer_name="write_fixtures.py",
            opset_imports=[helper.make_opsetid("", self.opset), helper.make_opsetid("ai.onnx.ml", 3)],
        )
        return model.SerializeToString()


# ---------------------------------------------------------------- building blocks


def layer_norm(m, x, prefix, decomposed):
    gamma = m.init(prefix + ".gamma")
    beta = m.init(prefix + ".beta")
    if not decomposed:
        return m.op("LayerNormalization", [x, gamma, beta], prefix + "/LayerNormalization")
    mean = m.op("ReduceMean", [x], prefix + "/ReduceMean")
    centered = m.op("Sub", [x, mean], prefix + "/Sub")
    two = m.const(prefix + "/Constant_pow")
    sq = m.op("Pow", [centered, two], prefix + "/Pow")
    var = m.op("ReduceMean", [sq], prefix + "/ReduceMean_1")
    eps = m.const(prefix + "/Constant_eps")
    shifted = m.op("Add", [var, eps], prefix + "/Add")
    std = m.op("Sqrt", [shifted], prefix + "/Sqrt")
    normed = m.op("Div", [centered, std], prefix + "/Div")
    scaled = m.op("Mul", [normed, gamma], prefix + "/Mul")
    return m.op("Add", [scaled, beta], prefix + "/Add_1")


def gelu(m, x, prefix):
    c = m.const(prefix + "/Constant_sqrt2")
    d = m.op("Div", [x, c], prefix + "/Div")
    e = m.op("Erf", [d], prefix + "/Erf")
    one = m.const(prefix + "/Constant_one")
    a = m.op("Add", [e, one], prefix + "/Add")
    mul = m.op("Mul", [x, a], prefix + "/Mul")
    half = m.const(prefix + "/Constant_half")
    return m.op("Mul", [mul, half], prefix + "/Mul_1")


def projection(m, x, prefix):
    w = m.init(prefix + ".weight")
    b = m.init(prefix + ".bias")
    mm = m.op("MatMul", [x, w], prefix + "/MatMul")
    return m.op("Add", [mm, b], prefix + "/Add")


def heads(m, x, prefix):
    shape = m.const(prefix + "/Constant_shape")
    r = m.op("Reshape", [x, shape], prefix + "/Reshape")
    return m.op("Transpose", [r], prefix + "/Transpose")


def attention_mask(m, prefix="mask"):
    am = m.input("attention_mask")
    axes = m.const(prefix + "/Constant_axes")
    u1 = m.op("Unsqueeze", [am, axes], prefix + "/Unsqueeze")
    u2 = m.op("Unsqueeze", [u1, axes], prefix + "/Unsqueeze_1")
    c = m.op("Cast", [u2], prefix + "/Cast")
    one = m.const(prefix + "/Constant_one")
    s = m.op("Sub", [one, c], prefix + "/Sub")
    big = m.const(prefix + "/Constant_min")
    return m.op("Mul", [s, big], prefix + "/Mul")


def bert_layer(m, h, mask, prefix, decomposed):
    q = heads(m, projection(m, h, prefix + "/query"), prefix + "/query")
    k = heads(m, projection(m, h, prefix + "/key"), prefix + "/key")
    v = heads(m, projection(m, h, prefix + "/value"), prefix + "/value")
    scores = m.op("MatMul", [q, k], prefix + "/scores/MatMul")
    scale = m.const(prefix + "/scores/Constant_scale")
    scaled = m.op("Div", [scores, scale], prefix + "/scores/Div")
    masked = m.op("Add", [scaled, mask], prefix + "/scores/Add")
    probs = m.op("Softmax", [masked], prefix + "/scores/Softmax")
    ctx = m.op("MatMul", [probs, v], prefix + "/context/MatMul")
    ctx_t = m.op("Transpose", [ctx], prefix + "/context/Transpose")
    shape = m.const(prefix + "/context/Constant_shape")
    ctx_r = m.op("Reshape", [ctx_t, shape], prefix + "/context/Reshape")
    attn = projection(m, ctx_r, prefix + "/attention_output")
    res = m.op("Add", [attn, h], prefix + "/attention_output/Add_residual")
    h1 = layer_norm(m, res, prefix + "/attention_output/LayerNorm", decomposed)
    inter = projection(m, h1, prefix + "/intermediate")
    act = gelu(m, inter, prefix + "/intermediate/gelu")
    out = projection(m, act, prefix + "/output")
    res2 = m.op("Add", [out, h1], prefix + "/output/Add_residual")
    return layer_norm(m, res2, prefix + "/output/LayerNorm", decomposed)


def bert(decomposed, layers=2):
    m = Model(16 if decomposed else 17)
    ids = m.input("input_ids")
    tt = m.input("token_type_ids")
    we = m.op("Gather", [m.init("embeddings.word"), ids], "embeddings/word/Gather")
    te = m.op("Gather", [m.init("embeddings.token_type"), tt], "embeddings/token_type/Gather")
    e = m.op("Add", [we, te], "embeddings/Add")
    e2 = m.op("Add", [e, m.init("embeddings.position")], "embeddings/Add_1")
    h = layer_norm(m, e2, "embeddings/LayerNorm", decomposed)
    mask = attention_mask(m)
    for i in range(layers):
        h = bert_layer(m, h, mask, f"encoder/layer.{i}", decomposed)
    m.output(h)
    idx = m.const("pooler/Constant_index")
    first = m.op("Gather", [h, idx], "pooler/Gather")
    dense = m.op("Gemm", [first, m.init("pooler.weight"), m.init("pooler.bias")], "pooler/Gemm")
    m.output(m.op("Tanh", [dense], "pooler/Tanh"))
    return m


def roberta(layers=2):
    m = Model(17)
    ids = m.input("input_ids")
    tt = m.input("token_type_ids")
    we = m.op("Gather", [m.init("embeddings.word"), ids], "embeddings/word/Gather")
    pad = m.const("embeddings/position_ids/Constant_pad")
    eq = m.op("Equal", [ids, pad], "embeddings/position_ids/Equal")
    ne = m.op("Not", [eq], "embeddings/position_ids/Not")
    mask = m.op("Cast", [ne], "embeddings/position_ids/Cast")
    axis = m.const("embeddings/position_ids/Constant_axis")
    cs = m.op("CumSum", [mask, axis], "embeddings/position_ids/CumSum")
    inc = m.op("Mul", [cs, mask], "embeddings/position_ids/Mul")
    inc_l = m.op("Cast", [inc], "embeddings/position_ids/Cast_1")
    pos_ids = m.op("Add", [inc_l, pad], "embeddings/position_ids/Add")
    pe = m.op("Gather", [m.init("embeddings.position"), pos_ids], "embeddings/position/Gather")
    te = m.op("Gather", [m.init("embeddings.token_type"), tt], "embeddings/token_type/Gather")
    e = m.op("Add", [we, te], "embeddings/Add")
    e2 = m.op("Add", [e, pe], "embeddings/Add_1")
    h = layer_norm(m, e2, "embeddings/LayerNorm", False)
    amask = attention_mask(m)
    for i in range(layers):
        h = bert_layer(m, h, amask, f"encoder/layer.{i}", False)
    m.output(h)
    return m


def deberta():
    """One disentangled-attention layer with the width-wise relative position branches."""
    m = Model(17)
    hidden = m.input("hidden_states")
    q = projection(m, hidden, "attention/query")
    k = projection(m, hidden, "attention/key")
    kt = m.op("Transpose", [k], "attention/key/Transpose")
    scores = m.op("MatMul", [q, kt], "attention/scores/MatMul")
    c2p = m.op("MatMul", [q, m.init("rel_embeddings.key")], "attention/c2p/MatMul")
    p2c = m.op("MatMul", [k, m.init("rel_embeddings.query")], "attention/p2c/MatMul")
    shape = m.op("Shape", [hidden], "rel_pos/Shape")
    cos = m.op("ConstantOfShape", [m.init("rel_pos.shape")], "rel_pos/ConstantOfShape")
    mul = m.op("Mul", [cos, m.const("rel_pos/Constant_neg")], "rel_pos/Mul")
    eq = m.op("Equal", [mul, m.const("rel_pos/Constant_neg1")], "rel_pos/Equal")
    where = m.op("Where", [eq, cos, m.const("rel_pos/Constant_fill")], "rel_pos/Where")
    e1 = m.op("Expand", [where, shape], "attention/c2p/Expand")
    g1 = m.op("GatherElements", [c2p, e1], "attention/c2p/GatherElements")
    a1 = m.op("Add", [g1, m.const("attention/c2p/Constant_bias")], "attention/c2p/Add")
    e2 = m.op("Expand", [where, shape], "attention/p2c/Expand")
    g2 = m.op("GatherElements", [p2c, e2], "attention/p2c/GatherElements")
    t2 = m.op("Transpose", [g2], "attention/p2c/Transpose")
    s1 = m.op("Add", [scores, a1], "attention/scores/Add")
    s2 = m.op("Add", [s1, t2], "attention/scores/Add_1")
    m.output(m.op("Softmax", [s2], "attention/scores/Softmax"))
    return m


def vit(layers=2):
    """Plant prefixes: patch/ (embedding), qkv/ (attention heads), mlp/ (activation), head/ (classifier)."""
    m = Model(17)
    px = m.input("pixel_values")
    conv = m.op("Conv", [px, m.init("patch.weight"), m.init("patch.bias")], "patch/Conv")
    r = m.op("Reshape", [conv, m.const("patch/Constant_shape")], "patch/Reshape")
    t = m.op("Transpose", [r], "patch/Transpose")
    cat = m.op("Concat", [m.init("cls_token"), t], "patch/Concat")
    x = m.op("Add", [cat, m.init("position_embeddings")], "patch/Add")
    for i in range(layers):
        p = f"layer.{i}"
        ln1 = layer_norm(m, x, f"qkv/{p}/norm1", False)
        qkv = heads(m, projection(m, ln1, f"qkv/{p}/qkv"), f"qkv/{p}/qkv")
        q = m.op("Gather", [qkv, m.const(f"qkv/{p}/Constant_q")], f"qkv/{p}/Gather_q")
        k = m.op("Gather", [qkv, m.const(f"qkv/{p}/Constant_k")], f"qkv/{p}/Gather_k")
        v = m.op("Gather", [qkv, m.const(f"qkv/{p}/Constant_v")], f"qkv/{p}/Gather_v")
        kt = m.op("Transpose", [k], f"{p}/attn/Transpose")
        sc = m.op("MatMul", [q, kt], f"{p}/attn/MatMul")
        scl = m.op("Mul", [sc, m.const(f"{p}/attn/Constant_scale")], f"{p}/attn/Mul")
        sm = m.op("Softmax", [scl], f"{p}/attn/Softmax")
        ctx = m.op("MatMul", [sm, v], f"{p}/attn/MatMul_1")
        ctx = m.op("Transpose", [ctx], f"{p}/attn/Transpose_1")
        ctx = m.op("Reshape", [ctx, m.const(f"{p}/attn/Constant_shape")], f"{p}/attn/Reshape")
        proj = projection(m, ctx, f"{p}/attn/proj")
        res = m.op("Add", [x, proj], f"{p}/Add_residual")
        ln2 = layer_norm(m, res, f"{p}/norm2", False)
        fc1 = projection(m, ln2, f"{p}/mlp/fc1")
        act = gelu(m, fc1, f"mlp/{p}/gelu")
        fc2 = projection(m, act, f"{p}/mlp/fc2")
        x = m.op("Add", [res, fc2], f"{p}/Add_residual_1")
    ln = layer_norm(m, x, "norm", False)
    cls = m.op("Gather", [ln, m.const("head/Constant_index")], "head/Gather")
    logits = m.op("Gemm", [cls, m.init("head.weight"), m.init("head.bias")], "head/Gemm")
    m.output(logits)
    return m


def bottleneck(m, x, prefix, convs):
    h = x
    for i in range(convs):
        h = m.op("Conv", [h, m.init(f"{prefix}.conv{i}.weight")], f"{prefix}/Conv_{i}")
        if i + 1 < convs:
            h = m.op("Relu", [h], f"{prefix}/Relu_{i}")
    s = m.op("Add", [h, x], f"{prefix}/Add")
    return m.op("Relu", [s], f"{prefix}/Relu_out")


def ocr():
    """ResNet-style feature extractor feeding a Sequencer2D-style LSTM mixer."""
    m = Model(17)
    img = m.input("image")
    c = m.op("Conv", [img, m.init("stem.weight")], "resnet/stem/Conv")
    c = m.op("Relu", [c], "resnet/stem/Relu")
    x = m.op("MaxPool", [c], "resnet/stem/MaxPool")
    x = bottleneck(m, x, "resnet/layer1.0", 3)
    x = bottleneck(m, x, "resnet/layer1.1", 3)
    x = bottleneck(m, x, "resnet/layer2.0", 2)
    x = m.op("Reshape", [x, m.const("seq/Constant_shape")], "seq/Reshape")
    y = layer_norm(m, x, "seq/norm", False)
    ht = m.op("Transpose", [y], "seq/horizontal/Transpose")
    hl = m.op("LSTM", [ht, m.init("seq.h.W"), m.init("seq.h.R")], "seq/horizontal/LSTM", n_out=3)
    hr = m.op("Reshape", [hl, m.const("seq/horizontal/Constant_shape")], "seq/horizontal/Reshape")
    vl = m.op("LSTM", [y, m.init("seq.v.W"), m.init("seq.v.R")], "seq/vertical/LSTM", n_out=3)
    vr = m.op("Reshape", [vl, m.const("seq/vertical/Constant_shape")], "seq/vertical/Reshape")
    cat = m.op("Concat", [hr, vr], "seq/Concat")
    fc = projection(m, cat, "seq/fc")
    res = m.op("Add", [y, fc], "seq/Add_residual")
    logits = m.op("MatMul", [res, m.init("head.weight")], "head/MatMul")
    m.output(logits)
    return m


def diamond():
    m = Model(None)
    preds = {1: [], 2: [1], 3: [2], 4: [3], 5: [3], 6: [4], 7: [5], 8: [6, 7], 9: [8]}
    for i in range(1, 10):
        m.nodes.append(
            {"name": str(i), "op": f"Op{i}", "inputs": [f"t{p}" for p in preds[i]], "outputs": [f"t{i}"], "attrs": {}}
        )
    return m


def constant_mul():
    m = Model(None)
    a = m.const("Constant_a")
    b = m.const("Constant_b")
    m.op("Mul", [a, b], "Mul")
    return m


def conv_relu(opset=13):
    m = Model(opset)
    x = m.input("X")
    c = m.op("Conv", [x, m.init("W")], "conv")
    m.output(m.op("Relu", [c], "relu"))
    return m


def control_flow():
    """If node with subgraph attributes plus an anonymous node."""
    from onnx import TensorProto, helper

    branch = lambda tag: helper.make_graph(
        [helper.make_node("Identity", ["X"], [tag + "_out"], name=tag + "_identity")],
        tag,
        [],
        [helper.make_tensor_value_info(tag + "_out", TensorProto.FLOAT, None)],
    )
    m = Model(17)
    x = m.input("X")
    cond = m.op("Greater", [x, m.init("threshold")], "cond")
    m.op("If", [cond], "branch", attrs={"then_branch": branch("then"), "else_branch": branch("else")})
    rel = m.op("Relu", [x], "anon_relu")
    m.output("branch:0")
    m.output(rel)
    return m


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "fixtures")
    os.makedirs(out, exist_ok=True)

    def write(name, data, mode="w"):
        with open(os.path.join(out, name), mode) as f:
            f.write(data)

    json_fixtures = {
        "diamond.json": diamond(),
        "constant_mul.json": constant_mul(),
        "deberta.json": deberta(),
        "bert.json": bert(decomposed=False),
        "bert_opset16.json": bert(decomposed=True),
        "roberta.json": roberta(),
        "vit.json": vit(),
        "ocr.json": ocr(),
    }
    for name, model in json_fixtures.items():
        write(name, model.to_json())

    write("conv_relu.onnx", conv_relu().to_onnx(list_initializers_as_inputs=True), "wb")
    write("conv_relu_opset17.onnx", conv_relu(17).to_onnx(), "wb")
    write("bert.onnx", bert(decomposed=False).to_onnx(), "wb")
    write("bert_opset16.onnx", bert(decomposed=True).to_onnx(), "wb")
    write("control_flow.onnx", control_flow().to_onnx(anonymous={"anon_relu"}), "wb")


if __name__ == "__main__":
    main()
