import re
from pathlib import Path

import pytest

from nprf.corpus import preprocess
from nprf.porter import stem

nltk_porter = pytest.importorskip("nltk.stem.porter")

ROOT = Path(__file__).resolve().parents[1]

# Pairs from Porter's 1980 description of the algorithm.
KNOWN = {
    "caresses": "caress", "ponies": "poni", "ties": "ti", "caress": "caress", "cats": "cat",
    "feed": "feed", "agreed": "agre", "plastered": "plaster", "bled": "bled", "motoring": "motor",
    "sing": "sing", "conflated": "conflat", "troubled": "troubl", "sized": "size", "hopping": "hop",
    "tanned": "tan", "falling": "fall", "hissing": "hiss", "fizzed": "fizz", "failing": "fail",
    "filing": "file", "happy": "happi", "sky": "sky", "relational": "relat", "conditional": "condit",
    "rational": "ration", "valenci": "valenc", "digitizer": "digit", "conformabli": "conform",
    "radicalli": "radic", "differentli": "differ", "vileli": "vile", "analogousli": "analog",
    "vietnamization": "vietnam", "predication": "predic", "operator": "oper", "feudalism": "feudal",
    "decisiveness": "decis", "hopefulness": "hope", "callousness": "callous", "formaliti": "formal",
    "sensitiviti": "sensit", "sensibiliti": "sensibl", "triplicate": "triplic", "formative": "form",
    "formalize": "formal", "electriciti": "electr", "electrical": "electr", "hopeful": "hope",
    "goodness": "good", "revival": "reviv", "allowance": "allow", "inference": "infer",
    "airliner": "airlin", "gyroscopic": "gyroscop", "adjustable": "adjust", "defensible": "defens",
    "irritant": "irrit", "replacement": "replac", "adjustment": "adjust", "dependent": "depend",
    "adoption": "adopt", "homologou": "homolog", "communism": "commun", "activate": "activ",
    "angulariti": "angular", "homologous": "homolog", "effective": "effect", "bowdlerize": "bowdler",
    "probate": "probat", "rate": "rate", "cease": "ceas", "controll": "control", "roll": "roll",
}


@pytest.mark.parametrize("word,expected", sorted(KNOWN.items()))
def test_published_examples(word, expected):
    assert stem(word) == expected


def test_matches_reference_implementation_on_vocabulary():
    oracle = nltk_porter.PorterStemmer(mode=nltk_porter.PorterStemmer.ORIGINAL_ALGORITHM)
    words = set()
    for path in [ROOT / "README.md", *Path(__file__).parent.glob("*.py"), *(ROOT / "src").rglob("*.py")]:
        words |= set(re.split(r"[^a-z]+", path.read_text(errors="ignore").lower()))
    words |= set(KNOWN)
    # the reference C code leaves words of one or two letters alone
    words = sorted(w for w in words if len(w) > 2)
    mismatches = [(w, stem(w), oracle.stem(w)) for w in words if stem(w) != oracle.stem(w)]
    assert not mismatches, mismatches[:20]


def test_short_words_untouched():
    assert stem("as") == "as"
    assert stem("is") == "is"


def test_preprocess_example():
    assert preprocess("running runners ran") == ["run", "runner", "ran"]
