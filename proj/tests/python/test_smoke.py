import json

import pytest

import echo_recompute as er


def test_models_listed():
    assert {"add_tanh", "broadcast_attn", "nmt_like", "tanh_fc"} <= set(er.model_names())


def test_add_tanh_stash():
    stash = {
        s: er.analyze("add_tanh", strategy=s, weight_multiplier=1)["memory"]["stashed_feature_map_bytes"]
        for s in ("baseline", "mirror", "echo")
    }
    assert stash == {"baseline": 4096, "mirror": 8192, "echo": 4096}


def test_attention_reduction():
    report = er.analyze("broadcast_attn:T=64,N=256")
    assert report["schema"] == "echo.analyze/1"
    assert report["feature_map_reduction"] == 32.0
    assert report["plan"]["mirrored"] == 128


def test_report_field_order_is_stable():
    keys = list(er.analyze("lstm_cell"))
    assert keys[:3] == ["schema", "input", "strategy"]
    assert er.analyze("lstm_cell") == er.analyze("lstm_cell")


def test_compare_rows():
    doc = er.compare("add_tanh", ["baseline", "mirror"])
    assert [r["strategy"] for r in doc["rows"]] == ["baseline", "mirror"]
    assert doc["rows"][1]["stash_ratio"] == 2.0
    with pytest.raises(ValueError):
        er.compare("add_tanh", ["echo"])


def test_graph_document_round_trip():
    text = er.build_model("tanh_fc:B=2,H=3")
    doc = json.loads(text)
    assert doc["version"] == 1
    assert er.analyze(text)["plan"]["dead"] == 1


def test_unknown_op_is_reported():
    doc = json.loads(er.build_model("add_tanh:N=2"))
    doc["nodes"][1]["op"] = "warp"
    with pytest.raises(RuntimeError, match="warp"):
        er.analyze(json.dumps(doc))


def test_verify():
    assert er.verify("lstm_cell", strategy="echo")["ok"]
    assert er.verify("broadcast_attn:T=4,N=8", strategy="mirror", seed=2)["ok"]
    with pytest.raises(er.CapExceeded):
        er.verify("broadcast_attn")


def test_dot():
    assert er.export_dot("add_tanh:N=4", strategy="mirror").startswith("digraph")
