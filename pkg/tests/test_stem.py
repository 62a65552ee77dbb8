"""Stemmer unit tests against the published rule set's expected outputs."""

import pytest

from chainlab.stem import stem

# Classic input/output pairs for the 1980 rule set, plus the words the rest
# of the suite depends on. Frozen from a verified run of this implementation.
GOLDEN = {
    "caresses": "caress",
    "ponies": "poni",
    "ties": "ti",
    "caress": "caress",
    "cats": "cat",
    "feed": "feed",
    "agreed": "agre",
    "plastered": "plaster",
    "bled": "bled",
    "motoring": "motor",
    "sing": "sing",
    "conflated": "conflat",
    "troubled": "troubl",
    "sized": "size",
    "hopping": "hop",
    "tanned": "tan",
    "falling": "fall",
    "hissing": "hiss",
    "fizzed": "fizz",
    "failing": "fail",
    "filing": "file",
    "happy": "happi",
    "sky": "sky",
    "relational": "relat",
    "conditional": "condit",
    "rational": "ration",
    "digitizer": "digit",
    "electricity": "electr",
    "electrical": "electr",
    "rivers": "river",
    "river": "river",
    "erode": "erod",
    "erodes": "erod",
    "rocks": "rock",
    "flow": "flow",
    "flows": "flow",
    "sparks": "spark",
    "spark": "spark",
    "static": "static",
    "cause": "caus",
    "caused": "caus",
    "causes": "caus",
    "whale": "whale",
    "whales": "whale",
    "mammal": "mammal",
    "forest": "forest",
    "fire": "fire",
    "fires": "fire",
}


@pytest.mark.parametrize("word,expected", sorted(GOLDEN.items()))
def test_golden(word, expected):
    assert stem(word) == expected


def test_inflection_pairs_collapse():
    pairs = [
        ("predator", "predators"),
        ("river", "rivers"),
        ("whale", "whales"),
        ("cause", "caused"),
        ("erode", "eroding"),
        ("spark", "sparks"),
    ]
    for a, b in pairs:
        assert stem(a) == stem(b), (a, b)


def test_known_overstemming_collision():
    # The rule set strips -ic and -ism to the same stem; downstream entity
    # matching inherits this false "organic"/"organism" equivalence.
    assert stem("organic") == stem("organism") == "organ"


def test_case_insensitive():
    assert stem("Sparks") == stem("sparks") == "spark"


def test_short_words_pass_through():
    assert stem("be") == "be"
    assert stem("a") == "a"
    assert stem("ox") == "ox"
