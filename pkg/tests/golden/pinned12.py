"""The pinned 12-node graph behind ``division.golden`` (plain data, no package imports)."""

NUM_NODES = 12
EDGES = [
    (0, 1), (0, 4), (1, 2), (1, 5), (2, 3), (2, 6), (3, 7), (4, 5), (4, 8),
    (5, 6), (5, 9), (6, 7), (6, 10), (8, 9), (9, 10), (10, 11), (3, 11), (0, 10),
]
MODES = ("edge_centric", "node_centric")
HASHES = ("md5", "sha1", "sha256", "decimal_test")
S_VALUES = (2, 5, 50)
PAD = 8
