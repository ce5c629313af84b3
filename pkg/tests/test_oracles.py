import json
import socket
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from seqdesign.oracles import (CompositeOracle, ExternalOracle,
                               LongestRunOracle, OracleError,
                               PatternFractionOracle, TokenCountOracle,
                               WeightedCompositionOracle, build_oracle)

MOCK = [sys.executable, str(Path(__file__).parent / "mock_oracle.py")]


def test_token_count_oracle():
    o = TokenCountOracle("C")
    assert o.score("C N C C")[0] == 3.0
    assert o.score("")[0] == 0.0
    assert o.query_count == 2


def test_weighted_composition_oracle():
    o = WeightedCompositionOracle({"C": 1.5, "N": -0.5})
    assert o.score("C C N O")[0] == pytest.approx(2.5)


def test_longest_run_oracle():
    o = LongestRunOracle("A")
    assert o.score("A A B A A A B")[0] == 3.0
    assert o.score("B B")[0] == 0.0


def test_pattern_fraction_oracle():
    o = PatternFractionOracle(["C", "N"])
    assert o.score("C N O O")[0] == pytest.approx(0.5)
    assert o.score("")[0] == 0.0


def test_composite_oracle_stacks_scores():
    o = CompositeOracle([TokenCountOracle("C"), LongestRunOracle("C")])
    np.testing.assert_allclose(o.score("C C N C"), [3.0, 2.0])


def test_score_batch_counts_failures():
    class Boom(TokenCountOracle):
        def _score_one(self, text):
            if "X" in text:
                raise RuntimeError("boom")
            return super()._score_one(text)

    o = Boom("C")
    res = o.score_batch(["C C", "X", "C"])
    assert [r.ok for r in res] == [True, False, True]
    assert o.query_count == 3  # failures are spent queries too


def test_build_oracle_registry():
    o = build_oracle({"kind": "token_count", "token": "C", "id": "cc"})
    assert isinstance(o, TokenCountOracle) and o.id == "cc"
    with pytest.raises(OracleError):
        build_oracle({"kind": "nope"})
    with pytest.raises(OracleError):
        build_oracle({"kind": "token_count"})  # missing token


def external(*extra, scores=("len", "count:C"), timeout=10.0):
    return ExternalOracle(scores=list(scores), argv=MOCK + list(extra),
                          timeout=timeout)


def test_external_oracle_round_trip():
    o = external()
    try:
        np.testing.assert_allclose(o.score("C N C"), [3.0, 2.0])
        res = o.score_batch(["C", "N N", ""])
        assert all(r.ok for r in res)
        np.testing.assert_allclose(res[0].values, [1.0, 1.0])
        np.testing.assert_allclose(res[1].values, [2.0, 0.0])
        np.testing.assert_allclose(res[2].values, [0.0, 0.0])
        assert o.query_count == 4
    finally:
        o.close()


def test_external_oracle_rematches_out_of_order_responses():
    o = external("--shuffle", "8")
    try:
        texts = [" ".join(["C"] * i) for i in range(8)]
        res = o.score_batch(texts)
        assert all(r.ok for r in res)
        for i, r in enumerate(res):
            assert r.values[0] == float(i)
    finally:
        o.close()


def test_external_oracle_per_candidate_errors():
    o = external("--fail-token", "X")
    try:
        res = o.score_batch(["C C", "X C", "C"])
        assert [r.ok for r in res] == [True, False, True]
        assert "refusing" in res[1].error
        # single-score API surfaces the error as an exception
        with pytest.raises(OracleError):
            o.score("X")
    finally:
        o.close()


def test_external_oracle_skips_garbage_lines():
    o = external("--garbage-every", "2")
    try:
        res = o.score_batch(["C", "C C", "C C C", "C C C C"])
        assert all(r.ok for r in res)
        assert [r.values[0] for r in res] == [1.0, 2.0, 3.0, 4.0]
    finally:
        o.close()


def test_external_oracle_timeout_is_per_candidate():
    o = external("--drop-token", "X", timeout=1.0)
    try:
        res = o.score_batch(["C", "X"])
        assert res[0].ok
        assert not res[1].ok and "timeout" in res[1].error
    finally:
        o.close()


def test_external_oracle_handles_worker_death():
    o = external("--die-after", "1", timeout=5.0)
    try:
        res = o.score_batch(["C", "C C", "C C C"])
        assert res[0].ok
        assert not res[1].ok and not res[2].ok
    finally:
        o.close()


def test_external_oracle_unknown_score_name():
    o = ExternalOracle(scores=["bogus"], argv=MOCK, timeout=10.0)
    try:
        res = o.score_batch(["C"])
        assert not res[0].ok and "unknown score" in res[0].error
    finally:
        o.close()


def _tcp_server(ready, stop):
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    srv.listen(1)
    ready["port"] = srv.getsockname()[1]
    ready["event"].set()
    srv.settimeout(10)
    conn, _ = srv.accept()
    with conn, conn.makefile("r", encoding="utf-8") as rd, \
            conn.makefile("w", encoding="utf-8") as wr:
        for line in rd:
            if stop.is_set():
                break
            req = json.loads(line)
            toks = req["seq"].split()
            wr.write(json.dumps({"id": req["id"],
                                 "values": [float(len(toks))]}) + "\n")
            wr.flush()
    srv.close()


def test_external_oracle_tcp_transport():
    ready = {"event": threading.Event()}
    stop = threading.Event()
    t = threading.Thread(target=_tcp_server, args=(ready, stop), daemon=True)
    t.start()
    assert ready["event"].wait(5)
    o = ExternalOracle(scores=["len"], host="127.0.0.1", port=ready["port"],
                       timeout=10.0)
    try:
        res = o.score_batch(["A B", "A"])
        assert [r.values[0] for r in res] == [2.0, 1.0]
    finally:
        stop.set()
        o.close()


def test_external_oracle_requires_transport():
    with pytest.raises(OracleError):
        ExternalOracle(scores=["len"])
