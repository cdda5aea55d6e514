# app/kac_decay/connectors/result_files.py
import json
import os
from datetime import datetime, timezone

import numpy as np
import pandas as pd


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def dumps(payload: dict) -> str:
    """Stable key order, UTF-8 text."""
    return json.dumps(payload, default=_jsonable, sort_keys=True, indent=2, ensure_ascii=False)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(df: pd.DataFrame, path: str, config: dict, header: dict = None) -> str:
    """
    Comma-separated curve file with LF endings. Comment lines starting with
    '#' carry the generation time, any `header` entries and the config echo.
    """
    _ensure_parent(path)
    lines = [f"# generated: {datetime.now(timezone.utc).isoformat()}"]
    for key in sorted(header or {}):
        lines.append(f"# {key}: {header[key]}")
    lines.append("# config: " + json.dumps(config, default=_jsonable, sort_keys=True))
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write("\n".join(lines) + "\n")
        df.to_csv(file, index=False, lineterminator="\n", float_format="%.17g")
    return path


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_json(payload: dict, path: str, config: dict) -> str:
    """Scalar report with the config under `config` and the time under `generated`."""
    _ensure_parent(path)
    document = dict(payload)
    document["config"] = config
    document["generated"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(dumps(document) + "\n")
    return path


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)
