import json
import math

import numpy as np
import pytest

import adapcr


def test_text_helpers():
    assert adapcr.tokenize("Dirty Pretty Things!") == ["dirty", "pretty", "things"]
    assert adapcr.concat_query("A", "B") == "A [SEP] B"
    assert adapcr.normalize_answer("The May Revolution!") == "may revolution"
    assert adapcr.exact_match("the paris", ["Paris"]) == 1
    assert adapcr.answer_f1("may revolution", ["the may revolution of argentina"]) == pytest.approx(2 / 3)


def test_hash_embed_is_unit_norm():
    v = adapcr.hash_embed("alpha beta gamma", 64)
    assert isinstance(v, np.ndarray)
    assert v.shape == (64,)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert not adapcr.hash_embed("", 64).any()


def test_losses():
    probs = adapcr.normalize_pret([1.0, 0.0], 1.0)
    assert probs[0] == pytest.approx(math.e / (math.e + 1))
    loss, grad = adapcr.pool_loss("rag", [0.0, 0.0], [math.log(0.2), math.log(0.4)], gamma=1.0)
    assert loss == pytest.approx(-math.log(0.3), abs=1e-9)
    assert len(grad) == 2
    assert adapcr.mock_lm_score(["red fox"], "what?", "red fox") == pytest.approx(2 * math.log(0.95))
    with pytest.raises(adapcr.AdapcrError):
        adapcr.normalize_pret([1.0], 0.0)


def test_gradcheck():
    for loss in ("rag", "kl", "ce"):
        assert adapcr.gradcheck(loss=loss, seed=2)["max_rel_diff"] < 1e-4


def test_fixture_retrieve_train():
    fx = adapcr.generate_fixture("two_hop", n=10, corpus_size=40, seed=3)
    assert len(fx["corpus"]) == 40
    assert len(fx["dataset"]) == 10
    q = fx["dataset"][0]["question"]
    ids = adapcr.bm25_top(fx["corpus"], q, 100)
    texts = dict(fx["corpus"])
    result = adapcr.retrieve([(i, texts[i]) for i in ids], q)
    assert len(result["candidates"]) == 30
    if 0 in fx["truth"] and fx["verified"] == 10:
        assert result["winner"]["passage_ids"] == fx["truth"][0]

    trained = adapcr.train(fx["corpus"], fx["dataset"], epochs=2, batch_size=4, seed=1)
    assert [row[0] for row in trained["curve"]] == [0, 1, 2]
    assert trained["query"].shape == (256, 256)


def test_cli(tmp_path):
    code, out = adapcr.run_cli(["--log-level", "off", "gradcheck", "--losses", "ce"])
    assert code == 0
    assert json.loads(out)["pass"] is True
    code, _ = adapcr.run_cli(["--log-level", "off", "retrieve"])
    assert code == 3
    code, _ = adapcr.run_cli(
        ["--log-level", "off", "fixture", "--n", "5", "--corpus-size", "30", "--out-dir", str(tmp_path)]
    )
    assert code == 0
    assert (tmp_path / "corpus.jsonl").exists()
