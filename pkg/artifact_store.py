"""
Run artifacts
Run directories, manifests and the CSV / JSON writers used by experiments
"""

import hashlib
import json
import logging
import os
import platform
import time
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy
import sklearn

from config import Config
from fields import GridField2D
from levy_process import JumpPath

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy containers and scalars to plain JSON types"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    if obj is None or isinstance(obj, (int, str)):
        return obj
    return str(obj)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def read_vector_csv(path: str) -> np.ndarray:
    """Read a vector written by RunArtifacts.write_vector (comment line, header, values)"""
    return np.atleast_1d(np.loadtxt(path, delimiter=",", comments="#", skiprows=2))


class RunArtifacts:
    """
    One run directory. The manifest is written with status "incomplete" on
    creation and rewritten by finalize().
    """

    def __init__(self, out_dir: str, experiment: str, seed: int, config: Dict[str, Any],
                 reference: bool = False):
        self.out_dir = out_dir
        self.experiment = experiment
        self.seed = int(seed)
        self.config = config
        self.reference = reference
        self.files: List[str] = []
        self._started = time.perf_counter()
        os.makedirs(self.out_dir, exist_ok=True)
        self.manifest = {
            "status": "incomplete",
            "experiment": experiment,
            "seed": self.seed,
            "reference_mode": reference,
            "started_at": datetime.now(tz=timezone.utc).isoformat(),
            "config": config,
            "defaults": Config.get_config(),
            "versions": self.versions(),
            "files": {}
        }
        self._write_manifest()
        logger.info(f"Run directory {self.out_dir} initialized for {experiment} (seed {self.seed})")

    @staticmethod
    def versions() -> Dict[str, str]:
        return {
            "id_priors": TOOL_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__
        }

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _write_manifest(self):
        with open(self.path("manifest.json"), "w", encoding="utf-8", newline="\n") as handle:
            json.dump(to_jsonable(self.manifest), handle, indent=2, sort_keys=True)
            handle.write("\n")

    def _register(self, name: str):
        if name not in self.files:
            self.files.append(name)

    def _savetxt(self, name: str, array: np.ndarray, header: str):
        np.savetxt(self.path(name), array, fmt=Config.OUTPUT_CONFIG["csv_format"], delimiter=",",
                   newline="\n", header=header, comments="")
        self._register(name)

    def write_vector(self, name: str, values, column: str = "value", n_terms: Optional[int] = None,
                     n_g: Optional[int] = None) -> str:
        """One value per line under a '# N=.. n_g=.. seed=..' line and a header"""
        meta = f"# N={n_terms if n_terms is not None else 'NA'} n_g={n_g if n_g is not None else 'NA'} seed={self.seed}"
        self._savetxt(name, np.asarray(values, dtype=float).reshape(-1, 1), f"{meta}\n{column}")
        return self.path(name)

    def write_table(self, name: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
        """Rows of dicts as a numeric CSV with the given column order"""
        table = np.array([[float(row[c]) for c in columns] for row in rows], dtype=float)
        self._savetxt(name, table.reshape(len(rows), len(columns)), ",".join(columns))
        return self.path(name)

    def write_matrix(self, name: str, matrix: np.ndarray, columns: Sequence[str]) -> str:
        self._savetxt(name, np.atleast_2d(matrix), ",".join(columns))
        return self.path(name)

    def write_path(self, name: str, path: JumpPath) -> str:
        table = np.column_stack([path.jump_times, path.jump_sizes]) if path.n_jumps else np.zeros((0, 2))
        self._savetxt(name, table, f"# jumps={path.n_jumps} seed={self.seed}\ntime,size")
        return self.path(name)

    def write_field_2d(self, name: str, field: GridField2D) -> str:
        self._savetxt(name, field.values, f"# n={field.n} seed={self.seed}")
        return self.path(name)

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as handle:
            json.dump(to_jsonable(payload), handle, indent=2, sort_keys=True)
            handle.write("\n")
        self._register(name)
        return self.path(name)

    def finalize(self, status: str, error: Optional[Dict[str, Any]] = None):
        self.manifest["status"] = status
        self.manifest["wall_time_seconds"] = time.perf_counter() - self._started
        self.manifest["files"] = {name: sha256_file(self.path(name)) for name in self.files}
        if error:
            self.manifest["error"] = error
        self._write_manifest()
        logger.info(f"Run {self.experiment} finalized with status '{status}'")
