"""
Output helpers: JSON reports via srsly, CSV tables via pandas, and ordered
joblib sweeps.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import mpmath
import numpy as np
import pandas as pd
import srsly
from joblib import Parallel, delayed
from mpmath import mp
from pydantic import BaseModel

from . import config

logger = logging.getLogger(__name__)


def to_serializable(obj: Any, digits: int = 30) -> Any:
    """Convert numbers to decimal strings so JSON keeps full precision."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, mpmath.mpf):
        return mpmath.nstr(obj, digits, strip_zeros=False) if mp.isfinite(obj) else str(obj)
    if isinstance(obj, mpmath.mpc):
        return {"re": to_serializable(obj.real, digits), "im": to_serializable(obj.imag, digits)}
    if isinstance(obj, (float, np.floating)):
        return repr(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": repr(float(obj.real)), "im": repr(float(obj.imag))}
    if isinstance(obj, mpmath.matrix):
        return [[to_serializable(obj[i, j], digits) for j in range(obj.cols)] for i in range(obj.rows)]
    if isinstance(obj, np.ndarray):
        return [to_serializable(x, digits) for x in obj.tolist()]
    if isinstance(obj, BaseModel):
        return to_serializable(obj.model_dump(), digits)
    if isinstance(obj, dict):
        return {str(k): to_serializable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable(x, digits) for x in obj]
    if hasattr(obj, "_asdict"):
        return to_serializable(obj._asdict(), digits)
    return str(obj)


def make_header(command: str, run_config: Any = None, bits: Optional[int] = None,
                digits: Optional[int] = None) -> Dict[str, Any]:
    """Reproducibility header carried by every output file."""
    bits = bits or config.PRECISION_BITS
    return {
        "command": command,
        "config": to_serializable(run_config) if run_config is not None else {},
        "bits": bits,
        "digits": digits or int(bits * 0.30103),
        "version": config.VERSION,
    }


def write_report(path, payload: Dict[str, Any], header: Dict[str, Any]) -> Path:
    """Write a JSON report with a header block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {"header": header}
    data.update(to_serializable(payload, header.get("digits", 30)))
    srsly.write_json(path, data)
    logger.info(f"Wrote {path}")
    return path


def read_report(path) -> Dict[str, Any]:
    return srsly.read_json(Path(path))


def write_table(path, frame: pd.DataFrame, header: Dict[str, Any]) -> Path:
    """Write a CSV with a '#'-prefixed reproducibility header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {srsly.json_dumps(value)}\n")
        frame.to_csv(fh, index=False)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_table(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def frame_from_rows(rows: Iterable[Dict[str, Any]], digits: int = 30) -> pd.DataFrame:
    """DataFrame whose mpmath entries are rendered as decimal strings."""
    return pd.DataFrame([{k: to_serializable(v, digits) for k, v in row.items()} for row in rows])


def ordered_sweep(fn: Callable, tasks: Sequence, workers: Optional[int] = None) -> List[Any]:
    """
    Run fn over tasks with joblib and return results in task order.

    Each task is tagged with its index so the assembled output does not
    depend on the worker count.
    """
    workers = workers or config.WORKERS

    def run(index, task):
        return index, fn(task)

    if workers == 1 or len(tasks) <= 1:
        results = [run(i, t) for i, t in enumerate(tasks)]
    else:
        results = Parallel(n_jobs=workers)(delayed(run)(i, t) for i, t in enumerate(tasks))
    results.sort(key=lambda item: item[0])
    return [payload for _, payload in results]


def output_path(out_dir: Optional[str], name: str) -> Path:
    return Path(out_dir or config.OUTPUT_DIR) / name
