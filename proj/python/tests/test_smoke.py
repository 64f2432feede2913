import math

import numpy as np
import pytest

import qincompat as q


@pytest.fixture(scope="module")
def fx():
    return q.fixtures()


def test_fixtures_are_valid(fx):
    assert set(fx) == {"PAIR_ID", "PAIR_CONST", "CHANNELS_RAND", "TRIPLE_EXCL", "POVM_XZ", "CLASSICAL_FREE"}
    for family in fx.values():
        assert family.validate() == ""
        assert family.instruments[0].chois[0].dtype == np.complex128


def test_hierarchy_rows(fx):
    assert q.hierarchy(fx["PAIR_ID"]) == {
        "classical": "Compatible",
        "parallel": "Incompatible",
        "q": "Compatible",
        "non_exclusive": "Compatible",
    }
    row = q.hierarchy(fx["POVM_XZ"])
    assert row["classical"] == row["parallel"] == row["q"] == "Incompatible"


def test_noisy_povms_become_compatible():
    assert q.check("classical", q.fixtures(0.65)["POVM_XZ"])["status"] == "Compatible"
    assert q.check("classical", q.fixtures(0.75)["POVM_XZ"])["status"] == "Incompatible"


def test_invalid_instrument_is_reported():
    bad = q.Instrument([("A", 2)], [("B", 2)], [np.eye(4) * 0.55])
    assert bad.validate() == "not trace-preserving"
    ok = q.Instrument([("A", 2)], [("B", 2)], [np.eye(4) / 2])
    assert ok.validate() == ""


def test_json_round_trip(fx):
    family = fx["TRIPLE_EXCL"]
    back = q.Family.from_json(family.to_json())
    assert q.family_distance(family, back) == 0.0
    with pytest.raises(ValueError):
        q.Family.from_json({"programs": ["a"]})


def test_identity_game(fx):
    assert q.score(fx["PAIR_ID"], fx["PAIR_ID"]) == pytest.approx(1.0, abs=1e-12)
    report = q.utility(fx["PAIR_ID"], fx["PAIR_ID"], "q", restarts=2, iterations=20)
    assert report["value"] == pytest.approx(1.0, abs=1e-6)
    assert report["protocol"]["framework"] == "q"


def test_xz_guessing_threshold(fx):
    sharp = q.fixtures(1.0)["POVM_XZ"]
    assert q.free_threshold(sharp, "c") == pytest.approx(0.5 * (1 + 1 / math.sqrt(2)), abs=1e-5)


def test_witness_game_separates(fx):
    target = fx["PAIR_CONST"]
    game, margin = q.witness_game(target, "classical")
    assert game.validate() == ""
    assert q.score(target, game) - q.free_threshold(game, "c") >= margin - 1e-7
    with pytest.raises(ValueError):
        q.witness_game(fx["CLASSICAL_FREE"], "classical")
