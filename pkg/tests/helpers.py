"""Shared builders for the covers and pipeline tests."""

from dataclasses import dataclass
from fractions import Fraction

from coarsemedian.cone import build_cone, build_nets
from coarsemedian.covers import build_covers, build_trees, embed_product, map_fc


@dataclass
class Chain:
    cone: object
    covers: object
    forest: object
    maps: dict

    def embed(self, **kw):
        return embed_product(self.cone, self.forest, self.maps, **kw)


def chain(Z, r, k_max, strategy="ultrametric", seed=0, coords=None, eps=None):
    """Nets, cone, covers, trees and colour maps on one base."""
    r = Fraction(r)
    cone = build_cone(build_nets(Z, r, k_max, seed))
    cov = build_covers(Z, r, k_max, strategy, eps=eps, coords=coords)
    forest = build_trees(cov)
    maps = {c: map_fc(cone, forest, c) for c in cov.colours}
    return Chain(cone, cov, forest, maps)
