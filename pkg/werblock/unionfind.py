"""Disjoint-set forest with path halving and union by rank."""

from collections.abc import Iterable


class UnionFind:
    """Union-find over the integers 0..n-1."""

    def __init__(self, n: int) -> None:
        self.size = n
        self.parent = list(range(n))
        self.rank = [0] * n

    def count(self) -> int:
        """Number of disjoint sets."""
        return self.size

    def find(self, x: int) -> int:
        i = x
        while i != self.parent[i]:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, x: int, y: int) -> None:
        i, j = self.find(x), self.find(y)
        if i == j:
            return
        if self.rank[i] < self.rank[j]:
            self.parent[i] = j
        elif self.rank[i] > self.rank[j]:
            self.parent[j] = i
        else:
            self.parent[j] = i
            self.rank[i] += 1
        self.size -= 1

    def groups(self) -> list[list[int]]:
        """Sets with members ascending, ordered by their smallest member."""
        members: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            members.setdefault(self.find(x), []).append(x)
        return sorted(members.values(), key=lambda g: g[0])


def components(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    """Connected components of an undirected graph on n vertices."""
    uf = UnionFind(n)
    for i, j in edges:
        uf.union(i, j)
    return uf.groups()
