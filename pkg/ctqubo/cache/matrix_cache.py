import os
import time
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import scipy.sparse as sp
import structlog
from filelock import FileLock, Timeout

from ctqubo.models.ct_models import ProjectionGeometry, WeightModel
from ctqubo.projection.system_matrix import SystemMatrix, build_system_matrix
from ctqubo.utils.serialization import deserialize, generate_stable_key, pack_array, serialize, unpack_array

logger = structlog.get_logger()

CACHE_FORMAT_VERSION = 1

class SystemMatrixCache:
    """
    On-disk cache of built system matrices.

    Entries are msgpack files sharded by key prefix; each key has its own
    file lock so concurrent processes building the same geometry serialize.
    """

    def __init__(
        self,
        cache_dir: str,
        shards: int = 8,
        lock_timeout: int = 30,
    ):
        self.cache_dir = Path(cache_dir).expanduser()
        self.shards = shards
        self.lock_timeout = lock_timeout

        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.lock_dir = self.cache_dir / ".locks"
        self.lock_dir.mkdir(exist_ok=True)

        self._stats = {
            "hits": 0,
            "misses": 0,
            "lock_timeouts": 0,
            "corrupt_entries": 0,
        }

        logger.debug(
            "matrix_cache_init",
            cache_dir=str(self.cache_dir),
            shards=self.shards,
            lock_timeout=self.lock_timeout
        )

    @staticmethod
    def key_for(geom: ProjectionGeometry, dims: Tuple[int, int], model: WeightModel) -> str:
        return generate_stable_key(
            CACHE_FORMAT_VERSION,
            geom.model_dump(mode="json"),
            list(dims),
            model.model_dump(mode="json"),
        )

    def _get_shard_path(self, key: str) -> Path:
        shard_id = int(key[:2], 16) % self.shards
        shard_dir = self.cache_dir / f"shard_{shard_id}"
        shard_dir.mkdir(exist_ok=True)
        return shard_dir / f"{key}.cache"

    def _get_lock_path(self, key: str) -> Path:
        return self.lock_dir / f"{key}.lock"

    def _is_lock_stale(self, lock_path: Path, max_age: int = 300) -> bool:
        if not lock_path.exists():
            return False

        try:
            age = time.time() - lock_path.stat().st_mtime
            return age > max_age
        except OSError:
            return False

    def cleanup_stale_locks(self, max_age: int = 300) -> int:
        cleaned = 0
        for lock_file in self.lock_dir.glob("*.lock"):
            if not self._is_lock_stale(lock_file, max_age):
                continue
            lock = FileLock(str(lock_file))
            try:
                lock.acquire(timeout=0.1)
                try:
                    lock_file.unlink(missing_ok=True)
                    cleaned += 1
                finally:
                    lock.release()
            except Timeout:
                pass
            except OSError as e:
                logger.warning("lock_cleanup_failed", lock_file=str(lock_file), error=str(e))

        if cleaned > 0:
            logger.info("stale_locks_cleaned", count=cleaned)
        return cleaned

    def _read(self, key: str, cache_path: Path) -> Optional[Dict[str, Any]]:
        try:
            payload = deserialize(cache_path.read_bytes())
            if payload.get("version") != CACHE_FORMAT_VERSION:
                raise ValueError(f"unknown cache entry version {payload.get('version')}")
            return payload
        except Exception as e:
            self._stats["corrupt_entries"] += 1
            logger.warning("matrix_cache_entry_corrupt", key=key, error=str(e))
            cache_path.unlink(missing_ok=True)
            return None

    def get(self, geom: ProjectionGeometry, dims: Tuple[int, int], model: WeightModel) -> Optional[SystemMatrix]:
        key = self.key_for(geom, dims, model)
        cache_path = self._get_shard_path(key)

        if not cache_path.exists():
            self._stats["misses"] += 1
            return None

        lock = FileLock(str(self._get_lock_path(key)))
        try:
            with lock.acquire(timeout=self.lock_timeout):
                payload = self._read(key, cache_path)
        except Timeout:
            self._stats["lock_timeouts"] += 1
            logger.warning("matrix_cache_get_timeout", key=key)
            return None

        if payload is None:
            self._stats["misses"] += 1
            return None

        matrix = sp.csr_matrix(
            (unpack_array(payload["data"]), unpack_array(payload["indices"]), unpack_array(payload["indptr"])),
            shape=tuple(payload["shape"]),
        )
        self._stats["hits"] += 1
        return SystemMatrix(geometry=geom, image_dims=tuple(dims), matrix=matrix, weight_model=model)

    def set(self, sm: SystemMatrix):
        key = self.key_for(sm.geometry, sm.image_dims, sm.weight_model)
        cache_path = self._get_shard_path(key)

        payload = {
            "version": CACHE_FORMAT_VERSION,
            "shape": list(sm.matrix.shape),
            "data": pack_array(sm.matrix.data),
            "indices": pack_array(sm.matrix.indices),
            "indptr": pack_array(sm.matrix.indptr),
            "created_at": time.time(),
        }

        lock = FileLock(str(self._get_lock_path(key)))
        try:
            with lock.acquire(timeout=self.lock_timeout):
                tmp_path = cache_path.with_suffix(".tmp")
                tmp_path.write_bytes(serialize(payload))
                os.replace(tmp_path, cache_path)
        except Timeout:
            self._stats["lock_timeouts"] += 1
            logger.warning("matrix_cache_set_timeout", key=key)

    def get_or_build(
        self,
        geom: ProjectionGeometry,
        dims: Tuple[int, int],
        model: WeightModel = WeightModel(),
    ) -> SystemMatrix:
        cached = self.get(geom, dims, model)
        if cached is not None:
            logger.info("matrix_cache_hit", angles=geom.num_angles, bins=geom.bin_count, dims=list(dims))
            return cached

        sm = build_system_matrix(geom, dims, model)
        self.set(sm)
        return sm

    def clear_all(self) -> int:
        removed = 0
        for shard_dir in self.cache_dir.glob("shard_*"):
            for cache_file in shard_dir.glob("*.cache"):
                cache_file.unlink(missing_ok=True)
                removed += 1
        logger.info("matrix_cache_cleared", removed=removed)
        return removed

    def get_stats(self) -> Dict[str, Any]:
        total = self._stats["hits"] + self._stats["misses"]
        hit_rate = self._stats["hits"] / total if total > 0 else 0.0
        entries = sum(1 for _ in self.cache_dir.glob("shard_*/*.cache"))

        return {
            **self._stats,
            "entries": entries,
            "hit_rate": round(hit_rate, 3),
            "total_requests": total,
        }

    def health_check(self) -> bool:
        probe = self.cache_dir / ".health_check"
        try:
            probe.write_bytes(serialize({"status": "ok"}))
            healthy = deserialize(probe.read_bytes()) == {"status": "ok"}
            probe.unlink(missing_ok=True)
            return healthy
        except Exception as e:
            logger.error("health_check_failed", error=str(e))
            return False

def default_cache() -> Optional[SystemMatrixCache]:
    if os.getenv("CTQUBO_CACHE_DISABLED", "0") == "1":
        return None
    return SystemMatrixCache(
        cache_dir=os.getenv("CTQUBO_CACHE_DIR", "~/.cache/ctqubo"),
        shards=int(os.getenv("CTQUBO_CACHE_SHARDS", "8")),
        lock_timeout=int(os.getenv("CTQUBO_CACHE_LOCK_TIMEOUT", "30")),
    )
