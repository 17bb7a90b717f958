import numpy as np

from sampling.rng import PREDICT_BRANCH, REPLICATE_BRANCH, STICK_BRANCH, RngStream, as_generator


def test_same_triple_same_draws():
    a = RngStream(42, 3, (1, 2)).generator.random(10)
    b = RngStream(42, 3, (1, 2)).generator.random(10)
    np.testing.assert_array_equal(a, b)


def test_child_independent_of_creation_order():
    root = RngStream(5)
    first = root.child(2).generator.random(4)
    root.child(1).generator.random(100)
    again = RngStream(5).child(2).generator.random(4)
    np.testing.assert_array_equal(first, again)


def test_child_matches_explicit_path():
    np.testing.assert_array_equal(
        RngStream(1).child(4, 7).generator.random(3),
        RngStream(1, 0, (4, 7)).generator.random(3),
    )


def test_distinct_streams_differ():
    base = RngStream(0)
    draws = [s.generator.random(5) for s in (base, base.child(0), RngStream(0, 1), RngStream(1))]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_branch_tags_distinct():
    assert len({STICK_BRANCH, REPLICATE_BRANCH, PREDICT_BRANCH}) == 3


def test_reset_restarts_stream():
    s = RngStream(8)
    first = s.generator.random(3)
    np.testing.assert_array_equal(s.reset().generator.random(3), first)


def test_as_generator_passthrough():
    gen = np.random.default_rng(0)
    assert as_generator(gen) is gen
    s = RngStream(0)
    assert as_generator(s) is s.generator
