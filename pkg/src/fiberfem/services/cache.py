"""In-memory cache of discretizations."""

import hashlib
import json
from dataclasses import dataclass
from typing import Any

from cachetools import LRUCache

from ..core import get_logger, settings
from ..engine.assembly import FemSystem
from ..engine.linear_solvers import EigenBasis, SpdFactorization
from ..engine.mesh import Mesh
from ..models import MeshConfig

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class Discretization:
    """Mesh, FEM operators and oriented eigenbasis shared by problems on one mesh."""

    mesh: Mesh
    system: FemSystem
    spd: SpdFactorization
    basis: EigenBasis


class DiscretizationCache:
    """LRU cache of discretizations.

    Cache key is based on:
    - Mesh parameters (nx, ny, width, height)
    - Eigen count k
    - Eigen tolerance
    """

    def __init__(self, max_size: int | None = None) -> None:
        """Initialize the cache.

        Args:
            max_size: Maximum number of discretizations (default from settings)
        """
        self._max_size = max_size or settings.cache_max_size
        self._cache: LRUCache[str, Discretization] = LRUCache(maxsize=self._max_size)
        self._hits = 0
        self._misses = 0
        logger.debug("cache_initialized", max_size=self._max_size)

    def _generate_key(self, mesh: MeshConfig, k: int) -> str:
        key_data = {
            "mesh": mesh.model_dump(),
            "k": k,
            "eigen_tolerance": settings.eigen_tolerance,
        }
        key_string = json.dumps(key_data, sort_keys=True)
        return hashlib.md5(key_string.encode()).hexdigest()

    def get(self, mesh: MeshConfig, k: int) -> Discretization | None:
        """Cached discretization or None."""
        key = self._generate_key(mesh, k)
        cached = self._cache.get(key)
        if cached is not None:
            self._hits += 1
            logger.debug("cache_hit", key=key[:8], k=k)
            return cached
        self._misses += 1
        logger.debug("cache_miss", key=key[:8], k=k)
        return None

    def set(self, mesh: MeshConfig, k: int, value: Discretization) -> None:
        """Store a discretization."""
        key = self._generate_key(mesh, k)
        self._cache[key] = value
        logger.debug("cache_set", key=key[:8], k=k, interior=value.system.size)

    def clear(self) -> int:
        """Clear all entries.

        Returns:
            Number of entries cleared
        """
        count = len(self._cache)
        self._cache.clear()
        logger.info("cache_cleared", entries_removed=count)
        return count

    def get_stats(self) -> dict[str, Any]:
        """Get cache statistics."""
        total = self._hits + self._misses
        hit_rate = (self._hits / total * 100) if total > 0 else 0.0
        return {
            "size": len(self._cache),
            "max_size": self._max_size,
            "hits": self._hits,
            "misses": self._misses,
            "hit_rate_percent": round(hit_rate, 2),
        }
