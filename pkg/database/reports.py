"""
Report files: CSV and JSON writers, readers for earlier outputs
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import aiofiles
import numpy as np
import pandas as pd

from analyzers.dist import SAMPLE_COLUMN

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def wait_file_name(hop: int, direction: str) -> str:
    """Per-hop sample file name; hops are numbered from 1 on the client side."""
    return f"waits_hop{hop}_{direction}.csv"


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


async def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8", newline="") as handle:
        await handle.write(frame_to_csv(frame))
    logger.debug(f"Wrote {len(frame)} row(s) to {path}")
    return path


async def write_rows(path: PathLike, rows: Iterable[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> Path:
    frame = pd.DataFrame(list(rows), columns=list(columns) if columns else None)
    return await write_frame(path, frame)


async def write_samples(path: PathLike, samples: np.ndarray) -> Path:
    return await write_frame(path, pd.DataFrame({SAMPLE_COLUMN: np.asarray(samples, dtype=np.int64)}))


async def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    async with aiofiles.open(path, "w", encoding="utf-8", newline="") as handle:
        await handle.write(text)
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def read_frame(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Report file not found: {path}")
    return pd.read_csv(path)


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Report file not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def collect_outputs(out_dir: PathLike) -> List[str]:
    """File names under an output directory, sorted."""
    return sorted(item.name for item in Path(out_dir).iterdir() if item.is_file())
