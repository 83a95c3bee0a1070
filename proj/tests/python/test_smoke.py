import json
import math

import pytest
import requests

import icldyn


def config(**overrides):
    c = {
        "name": "smoke",
        "task": {"synthetic": {"size": 40}},
        "backend": {"kind": "bayes", "prior_identity": 0.5, "noise": 0.1},
        "transforms": [
            {"kind": "default"},
            {"name": "random", "kind": "randomize", "proportion": 1.0},
        ],
        "repetitions": 20,
        "max_context": 8,
        "bootstrap": {"resamples": 200},
    }
    c.update(overrides)
    return json.dumps(c)


def test_guessing_baseline_uniform():
    b = icldyn.guessing_baseline([0.5, 0.5])
    assert b.accuracy == pytest.approx(0.5)
    assert b.loglik == pytest.approx(-0.6931, abs=1e-4)
    assert b.entropy == pytest.approx(0.6931, abs=1e-4)


def test_significance_rule():
    assert icldyn.significance(icldyn.SampleStats(0.42, 0.02), True).bold
    assert not icldyn.significance(icldyn.SampleStats(0.02, 0.02), True).bold
    assert icldyn.significance(icldyn.SampleStats(0.3, 0.01), False).gray


def test_bayes_one_consistent_example():
    p = icldyn.bayes_predict(0.5, 0.1, [(1, 1)], 1)
    assert p[1] == pytest.approx(0.82)


def test_merge_tokenizer_picks_in_context_label_token():
    pieces = {"Sentence": 1, ":": 2, " '": 3, "'": 4, "\n": 5, "Answer": 6,
              " positive": 7, "positive": 8, " negative": 9, "negative": 10, " ": 11}
    tok = icldyn.WordTokenizer(pieces, icldyn.WhitespaceMode.merge)
    assert tok.tokenize("Answer: positive") == [6, 2, 7]
    assert icldyn.resolve_label_tokens(tok, ["negative", "positive"]) == [9, 7]


def test_run_experiment_and_reload(tmp_path):
    res = icldyn.run_experiment(config(), str(tmp_path))
    assert res.transforms == ["default", "random"]
    assert res.max_context == 8
    curves = res.curves("default")
    assert len(curves["loglik"]) == 8 and curves["runs"] == 20
    records = res.records("random")
    assert len(records) == 20 and all(r["logprob_calls"] == 1 for r in records)
    rows = icldyn.summarize(res, icldyn.Metric.loglik)
    assert rows[0]["variant"] == "random" and rows[0]["mean_difference"] > 0
    back = icldyn.load_experiment(str(tmp_path))
    assert back.config_hash == res.config_hash == icldyn.config_hash(config())
    assert (tmp_path / "summary_loglik.csv").read_text().startswith("backend,")


def test_unknown_config_key_raises():
    with pytest.raises(icldyn.ConfigError):
        icldyn.run_experiment(json.dumps({"repetitons": 3}))
    assert issubclass(icldyn.TokenLimitError, icldyn.BackendError)
    assert issubclass(icldyn.BackendError, icldyn.Error)


def test_wire_protocol_against_served_backend():
    srv = icldyn.serve_reference_backend(config(backend={"kind": "echo", "max_input_tokens": 64}))
    with srv, requests.Session() as http:
        info = http.get(srv.url + "/v1/info", timeout=5).json()
        assert info["max_input_tokens"] == 64 and info["vocab_size"] > 0
        text = "Sentence: 'good movie'\nAnswer:"
        tokens = http.post(srv.url + "/v1/tokenize", json={"text": text}, timeout=5).json()["tokens"]
        back = http.post(srv.url + "/v1/detokenize", json={"tokens": tokens}, timeout=5).json()
        assert back["text"] == text
        body = {"tokens": tokens, "positions": [len(tokens)], "token_ids": [tokens[0]]}
        rows = http.post(srv.url + "/v1/logprobs", json=body, timeout=5).json()["logprobs"]
        assert len(rows) == 1 and len(rows[0]) == 1
        assert rows[0][0] is None or rows[0][0] <= 0.0
        over = http.post(srv.url + "/v1/logprobs",
                         json={"tokens": [1] * 65, "positions": [1], "token_ids": [1]}, timeout=5)
        assert over.status_code == 413
        assert over.json()["error"]["code"] == "token_limit"


def test_remote_backend_matches_local(tmp_path):
    local = icldyn.run_experiment(config(backend={"kind": "echo"}), str(tmp_path / "local"))
    with icldyn.serve_reference_backend(config(backend={"kind": "echo"})) as srv:
        remote = icldyn.run_experiment(
            config(backend={"kind": "remote", "url": srv.url}), str(tmp_path / "remote"))
    for name in ("default", "random"):
        a, b = local.records(name), remote.records(name)
        for x, y in zip(a, b):
            for p, q in zip(x["probs"], y["probs"]):
                assert all(math.isclose(u, v, abs_tol=1e-12) for u, v in zip(p, q))
