"""
File interchange for observations, matrices, fields, fit records and study tables.

CSV observation files start with a ``# window: x0,x1,y0,y1`` line; floats are
written with 17 significant digits so equal runs give byte-identical files.
"""
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from estavg.models.presets import preset_spec
from estavg.schemas.averaging import MseMatrix
from estavg.schemas.experiment import ExperimentConfig, FitRecord, PipelineResult, ResultRow, ResultTable
from estavg.schemas.geometry import GermGrainSet, IntensityField, PointPattern, Window

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"
_BINARY_HEADER = 2 * 8 + 4 * 8


def _write_with_header(path: PathLike, header: Dict[str, str], frame: pd.DataFrame, index: bool = False) -> None:
    buffer = io.StringIO()
    for key, value in header.items():
        buffer.write(f"# {key}: {value}\n")
    frame.to_csv(buffer, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    Path(path).write_text(buffer.getvalue())


def _read_with_header(path: PathLike, **kwargs) -> Tuple[Dict[str, str], pd.DataFrame]:
    lines = Path(path).read_text().splitlines(keepends=True)
    header = {}
    body_start = 0
    for line in lines:
        if not line.startswith("#"):
            break
        key, _, value = line[1:].partition(":")
        header[key.strip()] = value.strip()
        body_start += 1
    frame = pd.read_csv(io.StringIO("".join(lines[body_start:])), float_precision="round_trip", **kwargs)
    return header, frame


def _window_text(window: Window) -> str:
    return ",".join(FLOAT_FORMAT % v for v in window.as_tuple())


def _header_window(header: Dict[str, str], path: PathLike) -> Window:
    if "window" not in header:
        raise ValueError(f"{path}: missing '# window: x0,x1,y0,y1' header")
    return Window.parse(header["window"])


def write_pattern(pattern: PointPattern, path: PathLike) -> None:
    frame = pd.DataFrame({"x": pattern.x, "y": pattern.y})
    _write_with_header(path, {"window": _window_text(pattern.window)}, frame)


def write_grains(grains: GermGrainSet, path: PathLike) -> None:
    frame = pd.DataFrame({"x": grains.germs[:, 0], "y": grains.germs[:, 1], "r": grains.radii})
    _write_with_header(path, {"window": _window_text(grains.window)}, frame)


def write_observation(observation: Union[PointPattern, GermGrainSet], path: PathLike) -> None:
    if isinstance(observation, GermGrainSet):
        write_grains(observation, path)
    else:
        write_pattern(observation, path)


def read_observation(path: PathLike) -> Union[PointPattern, GermGrainSet]:
    """
    Read a pattern (columns x, y) or a disc set (columns x, y, r).

    Raises:
        ValueError: If the header or columns are missing, or validation fails
    """
    header, frame = _read_with_header(path, dtype=float)
    window = _header_window(header, path)
    if not {"x", "y"} <= set(frame.columns):
        raise ValueError(f"{path}: expected columns x and y")
    xy = frame[["x", "y"]].to_numpy(dtype=float)
    if "r" in frame.columns:
        return GermGrainSet(germs=xy, radii=frame["r"].to_numpy(dtype=float), window=window)
    return PointPattern(points=xy, window=window)


def read_pattern(path: PathLike) -> PointPattern:
    observation = read_observation(path)
    if not isinstance(observation, PointPattern):
        raise ValueError(f"{path}: expected a point pattern, found a disc set")
    return observation


def write_mse_matrix(matrix: MseMatrix, path: PathLike) -> None:
    frame = pd.DataFrame(matrix.as_array(), index=matrix.labels, columns=matrix.labels)
    frame.index.name = "label"
    header = {"flags": ",".join(matrix.flags)} if matrix.flags else {}
    _write_with_header(path, header, frame, index=True)


def read_mse_matrix(path: PathLike) -> MseMatrix:
    header, frame = _read_with_header(path, index_col=0)
    flags = [f for f in header.get("flags", "").split(",") if f]
    if list(frame.index.astype(str)) != list(frame.columns):
        raise ValueError(f"{path}: row and column labels differ")
    return MseMatrix.from_array(list(frame.columns), frame.to_numpy(dtype=float), flags)


def write_field_csv(field: IntensityField, path: PathLike) -> None:
    """Long format: one (x, y, value) row per pixel center, x varying slowest."""
    xs, ys = np.meshgrid(field.x_centers, field.y_centers, indexing="ij")
    frame = pd.DataFrame({"x": xs.ravel(), "y": ys.ravel(), "value": field.values.ravel()})
    header = {"window": _window_text(field.window), "grid": f"{field.nx},{field.ny}"}
    _write_with_header(path, header, frame)


def read_field_csv(path: PathLike) -> IntensityField:
    header, frame = _read_with_header(path, dtype=float)
    window = _header_window(header, path)
    nx, ny = (int(v) for v in header["grid"].split(","))
    return IntensityField(window=window, nx=nx, ny=ny, values=frame["value"].to_numpy().reshape(nx, ny))


def write_field_binary(field: IntensityField, path: PathLike) -> None:
    """int64 LE nx, ny; four float64 LE window bounds; nx * ny float64 LE values, row-major."""
    payload = (
        np.array([field.nx, field.ny], dtype="<i8").tobytes()
        + np.array(field.window.as_tuple(), dtype="<f8").tobytes()
        + np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    )
    Path(path).write_bytes(payload)


def read_field_binary(path: PathLike) -> IntensityField:
    payload = Path(path).read_bytes()
    if len(payload) < _BINARY_HEADER:
        raise ValueError(f"{path}: truncated field header")
    nx, ny = (int(v) for v in np.frombuffer(payload, dtype="<i8", count=2))
    bounds = np.frombuffer(payload, dtype="<f8", count=4, offset=16)
    if len(payload) != _BINARY_HEADER + 8 * nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} field values")
    values = np.frombuffer(payload, dtype="<f8", offset=_BINARY_HEADER).reshape(nx, ny)
    window = Window(x0=bounds[0], x1=bounds[1], y0=bounds[2], y1=bounds[3])
    return IntensityField(window=window, nx=nx, ny=ny, values=values.copy())


def write_field(field: IntensityField, path: PathLike) -> None:
    """Binary for ``.bin``, CSV otherwise."""
    if Path(path).suffix == ".bin":
        write_field_binary(field, path)
    else:
        write_field_csv(field, path)


def write_fit_records(records: Iterable[FitRecord], path: PathLike) -> None:
    lines = [record.model_dump_json() + "\n" for record in records]
    Path(path).write_text("".join(lines))


def read_fit_records(path: PathLike) -> List[FitRecord]:
    return [
        FitRecord.model_validate_json(line)
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]


def write_result_table(table: ResultTable, path: PathLike) -> None:
    frame = pd.DataFrame(
        [row.model_dump() for row in table.rows], columns=["name", "parameter", "mse", "se"]
    )
    header = {"replications": str(table.replications)}
    if table.failed_replications:
        header["failed"] = ",".join(str(r) for r in table.failed_replications)
    _write_with_header(path, header, frame)


def read_result_table(path: PathLike) -> ResultTable:
    header, frame = _read_with_header(path, dtype={"name": str, "parameter": str})
    rows = [
        ResultRow(
            name=row.name, parameter=row.parameter, mse=float(row.mse),
            se=None if pd.isna(row.se) else float(row.se),
        )
        for row in frame.itertuples(index=False)
    ]
    failed = [int(r) for r in header.get("failed", "").split(",") if r]
    return ResultTable(rows=rows, replications=int(header["replications"]), failed_replications=failed)


def write_pipeline_result(result: PipelineResult, path: PathLike) -> None:
    Path(path).write_text(result.model_dump_json(indent=2) + "\n")


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a config mapping. A ``preset`` key supplies the model and window,
    which explicit ``model`` / ``window`` entries override.
    """
    data = dict(data or {})
    preset = data.pop("preset", None)
    if preset is not None:
        spec, window = preset_spec(str(preset))
        data.setdefault("model", spec.model_dump())
        data.setdefault("window", window.model_dump())
    if isinstance(data.get("window"), str):
        data["window"] = Window.parse(data["window"]).model_dump()
    return ExperimentConfig.model_validate(data)


def load_experiment_config(path: PathLike) -> ExperimentConfig:
    """Read a YAML experiment config."""
    with open(path) as handle:
        data = yaml.safe_load(handle)
    if data is not None and not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping of ExperimentConfig fields")
    logger.debug("Loaded experiment config from %s", path)
    return parse_experiment_config(data)


def dump_experiment_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(json.loads(config.model_dump_json()), sort_keys=False)
