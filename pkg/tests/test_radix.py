import random

from irminsul.radix import RadixTree


def lcp(a, b):
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def brute_force_match(inserted, seq):
    """Longest common prefix over all inserted sequences, earliest witness."""
    best_len, best_handle = 0, None
    for handle, stored in inserted:
        m = lcp(stored, seq)
        if m > best_len:
            best_len, best_handle = m, handle
    return best_len, best_handle


def test_empty_tree():
    assert RadixTree().match_prefix([1, 2, 3]) == (0, None)


def test_empty_query():
    tree = RadixTree()
    tree.insert([1, 2, 3], "a")
    assert tree.match_prefix([]) == (0, None)


def test_self_match():
    tree = RadixTree()
    tree.insert([1, 2, 3], "a")
    assert tree.match_prefix([1, 2, 3]) == (3, "a")


def test_divergence():
    tree = RadixTree()
    tree.insert([1, 2, 3], "a")
    m, w = tree.match_prefix([1, 2, 9])
    assert (m, w) == (2, "a")


def test_longer_query_than_stored():
    tree = RadixTree()
    tree.insert([1, 2], "a")
    assert tree.match_prefix([1, 2, 3, 4]) == (2, "a")


def test_earliest_witness_on_tie():
    tree = RadixTree()
    tree.insert([1, 2, 3], "first")
    tree.insert([1, 2, 4], "second")
    m, w = tree.match_prefix([1, 2, 99])
    assert m == 2
    assert w == "first"


def test_monotonicity():
    rng = random.Random(3)
    tree = RadixTree()
    query = [rng.randrange(8) for _ in range(12)]
    last = 0
    for i in range(200):
        tree.insert([rng.randrange(8) for _ in range(rng.randint(1, 12))], i)
        m, _ = tree.match_prefix(query)
        assert m >= last
        last = m


def test_randomized_oracle_10k_ops():
    """match_prefix equals brute-force longest-common-prefix throughout."""
    rng = random.Random(20_24)
    tree = RadixTree()
    inserted = []
    for op in range(10_000):
        seq = [rng.randrange(6) for _ in range(rng.randint(0, 14))]
        if rng.random() < 0.5:
            tree.insert(seq, op)
            inserted.append((op, list(seq)))
        else:
            expect_len, expect_handle = brute_force_match(inserted, seq)
            got_len, got_handle = tree.match_prefix(seq)
            assert got_len == expect_len
            if expect_len > 0:
                assert got_handle == expect_handle
