"""Small bundled corpora: an E2E-style sample and a synthetic copy task."""

from __future__ import annotations

from importlib import resources

import numpy as np

from . import data as D

ADJECTIVES = ("cheap", "nice", "cozy", "quiet", "busy", "fancy")
_ONSETS = "b d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


def e2e_sample_path():
    return str(resources.files("hrm") / "resources" / "e2e_sample.csv")


def load_e2e_sample():
    """The bundled 32-row E2E-format sample as a training :class:`~hrm.data.Corpus`."""
    return D.Corpus("train", D.group_examples(D.read_e2e_csv(e2e_sample_path())))


def random_names(count, rng, exclude=()):
    """Distinct made-up names of one or two tokens, each 2-3 syllables."""
    names, seen = [], set(exclude)
    while len(names) < count:
        words = []
        for _ in range(int(rng.integers(1, 3))):
            syl = int(rng.integers(2, 4))
            words.append("".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syl)))
        name = tuple(words)
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def copy_instance(name, adjective):
    da = D.DialogueAct.make(D.E2E_ACT, [("name", list(name)), ("quality", [adjective])])
    tokens = ["the", *name, "is", "a", adjective, "place"]
    return da, tokens


def make_copy_corpus(seed=0, n_train=200, n_test=50):
    """``the NAME is a ADJ place`` with disjoint train/test name sets.

    Returns ``(train, test)`` corpora; test names never occur in training.
    """
    rng = np.random.default_rng(seed)
    names = random_names(n_train + n_test, rng)
    train_rows = [copy_instance(n, ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]) for n in names[:n_train]]
    test_rows = [copy_instance(n, ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]) for n in names[n_train:]]
    return D.Corpus("train", D.group_examples(train_rows)), D.Corpus("test", D.group_examples(test_rows))
