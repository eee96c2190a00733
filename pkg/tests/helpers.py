"""Test-only utilities shared across modules."""

import numpy as np

from mondrian.rand import RngStream


class ScriptedRng(RngStream):
    """Replays fixed uniform and exponential draws in order."""

    def __init__(self, uniforms=(), exponentials=()):
        super().__init__(0, 0)
        self.uniforms = list(uniforms)
        self.exponentials = list(exponentials)

    def random(self):
        return self.uniforms.pop(0)

    def standard_exponential(self):
        return self.exponentials.pop(0)

    def exhausted(self):
        return not self.uniforms and not self.exponentials


def check_structure(tree):
    """Assert the structural invariants every tree must satisfy."""
    root = tree.root
    assert tree.parent[root] < 0
    seen = set()
    for j in tree.preorder():
        seen.add(j)
        l, r = tree.left[j], tree.right[j]
        assert (l < 0) == (r < 0), "both children or none"
        lo, hi = tree.lower[j], tree.upper[j]
        assert np.all(lo <= hi)
        if j != root:
            p = tree.parent[j]
            assert j in (tree.left[p], tree.right[p]), "parent/child links disagree"
            assert tree.tau[j] > tree.tau[p]
            assert np.all(tree.lower[p] <= lo) and np.all(hi <= tree.upper[p])
        if l >= 0:
            assert tree.points[j] is None
            assert not tree.paused[j]
            d = tree.split_dim[j]
            assert lo[d] <= tree.split_loc[j] <= hi[d]
            # children's boxes sit on their side of the split
            assert tree.upper[l][d] <= tree.split_loc[j] < tree.lower[r][d]
        else:
            assert tree.points[j], "every leaf holds at least one point"
            assert tree.tau[j] == tree.lifetime
            if tree.paused[j]:
                labels = tree.store.labels[tree.points[j]]
                assert np.all(labels == labels[0])
    return seen


def recomputed_extents(tree):
    """Bounding boxes of the points below every node, from scratch."""
    out = {}
    for j in tree.postorder():
        if tree.left[j] < 0:
            X = tree.store.features[tree.points[j]]
            out[j] = (X.min(axis=0), X.max(axis=0))
        else:
            (a, b), (c, d) = out[tree.left[j]], out[tree.right[j]]
            out[j] = (np.minimum(a, c), np.maximum(b, d))
    return out
