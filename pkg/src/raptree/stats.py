"""Tree statistics in the layout of the dataset-level tree summary table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from raptree.tree import RaTree


@dataclass(frozen=True)
class TreeStats:
    leaf_count: int
    internal_count: int
    cluster_size_mean: float
    cluster_size_std: float
    parents_per_leaf_mean: float
    parents_per_leaf_std: float
    layer_sizes: list[int]

    @property
    def layers(self) -> int:
        return len(self.layer_sizes)

    def to_dict(self) -> dict[str, object]:
        return {
            "leaf_count": self.leaf_count,
            "internal_count": self.internal_count,
            "cluster_size_mean": self.cluster_size_mean,
            "cluster_size_std": self.cluster_size_std,
            "parents_per_leaf_mean": self.parents_per_leaf_mean,
            "parents_per_leaf_std": self.parents_per_leaf_std,
            "layer_sizes": list(self.layer_sizes),
        }

    def table(self, name: str = "index") -> str:
        header = ("Dataset", "Number of Leaves", "Number of Internal Nodes", "Cluster Size", "Number of parents per leaf")
        row = (
            name,
            f"{self.leaf_count:,}",
            f"{self.internal_count:,}",
            f"{self.cluster_size_mean:.2f} ± {self.cluster_size_std:.2f}",
            f"{self.parents_per_leaf_mean:.3f} ± {self.parents_per_leaf_std:.3f}",
        )
        widths = [max(len(a), len(b)) for a, b in zip(header, row)]
        lines = [
            " | ".join(h.ljust(w) for h, w in zip(header, widths)),
            "-+-".join("-" * w for w in widths),
            " | ".join(c.ljust(w) for c, w in zip(row, widths)),
            f"layers: {self.layers} ({' / '.join(str(s) for s in self.layer_sizes)})",
        ]
        return "\n".join(lines)


def _mean_std(values: list[int]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def tree_stats(tree: RaTree) -> TreeStats:
    """Cluster size counts children per summary node; parents per leaf is over leaves of a
    tree with at least one summary layer (zero otherwise)."""
    summaries = [n for n in tree.nodes.values() if n.kind == "summary"]
    leaves = [tree.nodes[i] for i in tree.leaves()]
    cs_mean, cs_std = _mean_std([len(n.children) for n in summaries])
    if len(tree.layers) > 1:
        pp_mean, pp_std = _mean_std([len(n.parents) for n in leaves])
    else:
        pp_mean, pp_std = 0.0, 0.0
    return TreeStats(
        leaf_count=len(leaves),
        internal_count=len(summaries),
        cluster_size_mean=cs_mean,
        cluster_size_std=cs_std,
        parents_per_leaf_mean=pp_mean,
        parents_per_leaf_std=pp_std,
        layer_sizes=[len(layer) for layer in tree.layers],
    )
