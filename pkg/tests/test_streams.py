"""Counter-addressed random streams and block partitioning."""

import numpy as np

from fblbounds.streams import BLOCK_SIZE, iter_blocks, stream_for


def test_same_address_same_stream():
    a = stream_for(7, 3).standard_normal(16)
    b = stream_for(7, 3).standard_normal(16)
    np.testing.assert_array_equal(a, b)


def test_different_addresses_differ():
    a = stream_for(7, 3).standard_normal(16)
    b = stream_for(7, 4).standard_normal(16)
    c = stream_for(8, 3).standard_normal(16)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_path_depth_matters():
    a = stream_for(7, 1, 2).standard_normal(8)
    b = stream_for(7, 1).standard_normal(8)
    assert not np.array_equal(a, b)


def test_iter_blocks_partitions_exactly():
    for n in (1, BLOCK_SIZE - 1, BLOCK_SIZE, BLOCK_SIZE + 1, 3 * BLOCK_SIZE + 17):
        blocks = list(iter_blocks(n))
        assert blocks[0][1] == 0
        assert sum(count for _, _, count in blocks) == n
        # contiguous, ordered, indexed from zero
        for i, (block_idx, start, count) in enumerate(blocks):
            assert block_idx == i
            assert count > 0
        for (_, s1, c1), (_, s2, _) in zip(blocks, blocks[1:]):
            assert s1 + c1 == s2
