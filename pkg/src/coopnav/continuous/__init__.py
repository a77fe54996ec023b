from .terrain import (
    RASTER_SIZE,
    TerrainMap,
    TraversabilityKnowledge,
    generate_terrain,
    observe_radial,
)
from .voronoi import VoronoiGraph, build_graph, sample_seeds

__all__ = [
    "RASTER_SIZE",
    "TerrainMap",
    "TraversabilityKnowledge",
    "generate_terrain",
    "observe_radial",
    "VoronoiGraph",
    "build_graph",
    "sample_seeds",
]
