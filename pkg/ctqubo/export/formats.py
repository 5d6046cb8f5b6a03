"""
Versioned file formats: PGM/CSV images, sinogram CSV, the QUBO coefficient
text file, and JSON documents.

Every writer emits a version line and every reader rejects versions it does
not know. Reals are printed with Python's shortest round-trip repr, so CSV
values and QUBO coefficients survive a read/write cycle exactly.
"""
from pathlib import Path
from typing import Any, Iterator, List, Optional, Tuple, Union

import numpy as np
import orjson
import scipy.sparse as sp
import structlog

from ctqubo.core.images import BinaryImage, GridImage
from ctqubo.models.ct_models import EncodingSpec, ProjectionGeometry
from ctqubo.models.errors import IoError, ParseError
from ctqubo.projection.system_matrix import Sinogram
from ctqubo.qubo.model import QuboModel

logger = structlog.get_logger()

FORMAT_VERSION = 1
PGM_MAXVAL = 255
JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY

PathLike = Union[str, Path]

def _real(value: float) -> str:
    return repr(float(value))

def _parse_real(token: str, line: int, path: Path) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", line=line, path=str(path))
    if not np.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", line=line, path=str(path))
    return value

def _parse_int(token: str, line: int, path: Path) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", line=line, path=str(path))

def _write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path

def _read_lines(path: PathLike) -> Tuple[Path, List[str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return path, text.splitlines()

def _check_version(line: str, lineno: int, path: Path):
    parts = line.split()
    if len(parts) != 2 or parts[0] != "#version":
        raise ParseError(f"expected '#version {FORMAT_VERSION}', got {line!r}", line=lineno, path=str(path))
    if parts[1] != str(FORMAT_VERSION):
        raise ParseError(f"unsupported format version {parts[1]}", line=lineno, path=str(path))

def _header_value(lines: List[str], index: int, key: str, path: Path) -> str:
    if index >= len(lines):
        raise ParseError(f"missing '#{key}' header", line=index + 1, path=str(path))
    parts = lines[index].split(maxsplit=1)
    if len(parts) != 2 or parts[0] != f"#{key}":
        raise ParseError(f"expected '#{key} <value>', got {lines[index]!r}", line=index + 1, path=str(path))
    return parts[1].strip()

# --- PGM (plain P2) -------------------------------------------------------

def _pgm_levels(image: Union[GridImage, BinaryImage]) -> np.ndarray:
    if isinstance(image, BinaryImage):
        return image.mask.astype(np.int64) * PGM_MAXVAL
    values = np.clip(image.values, 0.0, None)
    peak = float(values.max())
    if peak == 0.0:
        return np.zeros(values.shape, dtype=np.int64)
    return np.rint(values / peak * PGM_MAXVAL).astype(np.int64)

def write_pgm(image: Union[GridImage, BinaryImage], path: PathLike, png: bool = False) -> Path:
    """Plain PGM scaled to maxval 255 (masks map 1 to 255); optionally a PNG beside it."""
    levels = _pgm_levels(image)
    height, width = levels.shape
    rows = "\n".join(" ".join(str(v) for v in row) for row in levels)
    written = _write_text(path, f"P2\n# version {FORMAT_VERSION}\n{width} {height}\n{PGM_MAXVAL}\n{rows}\n")
    if png:
        write_png(levels, written.with_suffix(".png"))
    return written

def _pgm_tokens(lines: List[str], path: Path) -> Iterator[Tuple[str, int]]:
    for lineno, line in enumerate(lines, start=1):
        content, _, comment = line.partition("#")
        if comment:
            parts = comment.split()
            if len(parts) == 2 and parts[0] == "version" and parts[1] != str(FORMAT_VERSION):
                raise ParseError(f"unsupported format version {parts[1]}", line=lineno, path=str(path))
        for token in content.split():
            yield token, lineno

def read_pgm(path: PathLike) -> GridImage:
    """Plain PGM as values / maxval, so a written mask reads back as 0/1."""
    path, lines = _read_lines(path)
    tokens = _pgm_tokens(lines, path)

    def take(what: str) -> Tuple[str, int]:
        try:
            return next(tokens)
        except StopIteration:
            raise ParseError(f"file ends before {what}", line=len(lines), path=str(path))

    magic, lineno = take("the magic number")
    if magic != "P2":
        raise ParseError(f"expected plain PGM magic 'P2', got {magic!r}", line=lineno, path=str(path))

    width = _parse_int(*take("the width"), path)
    height = _parse_int(*take("the height"), path)
    maxval = _parse_int(*take("maxval"), path)
    if width < 1 or height < 1 or maxval < 1:
        raise ParseError(f"invalid PGM header {width}x{height} maxval {maxval}", line=lineno, path=str(path))

    values = np.empty(width * height)
    for p in range(width * height):
        token, lineno = take(f"pixel {p}")
        level = _parse_int(token, lineno, path)
        if not 0 <= level <= maxval:
            raise ParseError(f"pixel value {level} outside [0, {maxval}]", line=lineno, path=str(path))
        values[p] = level / maxval

    return GridImage(values.reshape(height, width))

def write_png(levels: np.ndarray, path: PathLike) -> Path:
    """8-bit grayscale PNG preview of already-scaled PGM levels."""
    try:
        from PIL import Image
    except ImportError:
        logger.error("pillow_not_installed")
        raise ImportError("Install Pillow: pip install Pillow")

    path = Path(path)
    try:
        Image.fromarray(levels.astype(np.uint8)).save(path, format="PNG")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path

# --- image CSV -------------------------------------------------------------

def write_image_csv(image: Union[GridImage, BinaryImage], path: PathLike) -> Path:
    values = image.values if isinstance(image, GridImage) else image.mask.astype(np.float64)
    height, width = values.shape
    lines = [f"#version {FORMAT_VERSION}", f"#dims {width} {height}"]
    lines.extend(",".join(_real(v) for v in row) for row in values)
    return _write_text(path, "\n".join(lines) + "\n")

def read_image_csv(path: PathLike) -> GridImage:
    path, lines = _read_lines(path)
    if not lines:
        raise ParseError("empty file", line=1, path=str(path))
    _check_version(lines[0], 1, path)

    dims = _header_value(lines, 1, "dims", path).split()
    if len(dims) != 2:
        raise ParseError("expected '#dims <width> <height>'", line=2, path=str(path))
    width, height = (_parse_int(t, 2, path) for t in dims)
    if width < 1 or height < 1:
        raise ParseError(f"invalid dims {width}x{height}", line=2, path=str(path))

    body = lines[2:]
    if len(body) < height:
        raise ParseError(f"expected {height} rows, found {len(body)}", line=len(lines) + 1, path=str(path))

    values = np.empty((height, width))
    for i in range(height):
        lineno = i + 3
        cells = body[i].split(",")
        if len(cells) != width:
            raise ParseError(f"expected {width} values, found {len(cells)}", line=lineno, path=str(path))
        values[i] = [_parse_real(c.strip(), lineno, path) for c in cells]

    return GridImage(values)

# --- image dispatch by suffix --------------------------------------------

def write_image(image: Union[GridImage, BinaryImage], path: PathLike, png: bool = False) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return write_image_csv(image, path)
    return write_pgm(image, path, png=png)

def read_image(path: PathLike) -> GridImage:
    path = Path(path)
    if not path.exists():
        raise IoError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        return read_image_csv(path)
    return read_pgm(path)

def read_mask(path: PathLike) -> BinaryImage:
    image = read_image(path)
    if not np.all((image.values == 0.0) | (image.values == 1.0)):
        raise ParseError("mask file holds values other than 0 and full scale", path=str(path))
    return BinaryImage(image.values.astype(np.uint8))

# --- sinogram CSV ----------------------------------------------------------

def write_sinogram_csv(sino: Sinogram, path: PathLike) -> Path:
    geom = sino.geometry
    lines = [
        f"#version {FORMAT_VERSION}",
        f"#bin_width {_real(geom.bin_width)}",
        f"#detector_offset {_real(geom.detector_offset)}",
        ",".join(["angle_deg"] + [f"bin_{b}" for b in range(geom.bin_count)]),
    ]
    for angle, row in zip(geom.angles, sino.values):
        lines.append(",".join([_real(angle)] + [_real(v) for v in row]))
    return _write_text(path, "\n".join(lines) + "\n")

def read_sinogram_csv(path: PathLike) -> Sinogram:
    path, lines = _read_lines(path)
    if not lines:
        raise ParseError("empty file", line=1, path=str(path))
    _check_version(lines[0], 1, path)

    bin_width = _parse_real(_header_value(lines, 1, "bin_width", path), 2, path)
    detector_offset = _parse_real(_header_value(lines, 2, "detector_offset", path), 3, path)

    if len(lines) < 4:
        raise ParseError("missing column header", line=4, path=str(path))
    header = [c.strip() for c in lines[3].split(",")]
    expected = ["angle_deg"] + [f"bin_{b}" for b in range(len(header) - 1)]
    if len(header) < 2 or header != expected:
        raise ParseError("expected header 'angle_deg,bin_0,...'", line=4, path=str(path))
    bin_count = len(header) - 1

    angles: List[float] = []
    rows: List[List[float]] = []
    for offset, line in enumerate(lines[4:]):
        lineno = offset + 5
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != bin_count + 1:
            raise ParseError(f"expected {bin_count + 1} fields, found {len(cells)}", line=lineno, path=str(path))
        values = [_parse_real(c.strip(), lineno, path) for c in cells]
        angles.append(values[0])
        rows.append(values[1:])

    if not rows:
        raise ParseError("no angle rows", line=len(lines) + 1, path=str(path))

    try:
        geometry = ProjectionGeometry(
            angles=tuple(angles),
            bin_count=bin_count,
            bin_width=bin_width,
            detector_offset=detector_offset,
        )
    except ValueError as e:
        raise ParseError(f"invalid geometry: {e}", path=str(path)) from e

    return Sinogram(geometry, np.array(rows))

# --- QUBO coefficient file -------------------------------------------------

def format_qubo(model: QuboModel) -> str:
    """
    Text form of a model.

    Headers: #version, #vars, #offset, #encoding (JSON or 'none') and one
    '#layout <pixel> <level> <var>' line per variable when an encoding is
    attached. Then one 'i j value' line per coefficient with i <= j, ascending,
    where i == j is a linear term, closed by '#end <count>'.
    """
    lines = [
        f"#version {FORMAT_VERSION}",
        f"#vars {model.num_vars}",
        f"#offset {_real(model.offset)}",
    ]

    enc = model.encoding
    if enc is None:
        lines.append("#encoding none")
    else:
        lines.append("#encoding " + orjson.dumps(enc.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS).decode())
        for pixel in range(enc.num_pixels):
            for level in range(enc.vars_per_pixel):
                lines.append(f"#layout {pixel} {level} {enc.var_index(pixel, level)}")

    count = 0
    for i, j, value in model.iter_terms():
        lines.append(f"{i} {j} {_real(value)}")
        count += 1
    lines.append(f"#end {count}")
    return "\n".join(lines) + "\n"

def write_qubo(model: QuboModel, path: PathLike) -> Path:
    written = _write_text(path, format_qubo(model))
    logger.info("qubo_written", path=str(written), num_vars=model.num_vars, fingerprint=model.fingerprint())
    return written

def _parse_encoding(raw: str, lineno: int, path: Path) -> Optional[EncodingSpec]:
    if raw == "none":
        return None
    try:
        return EncodingSpec.model_validate(orjson.loads(raw))
    except (orjson.JSONDecodeError, ValueError) as e:
        raise ParseError(f"invalid encoding: {e}", line=lineno, path=str(path)) from e

def read_qubo(path: PathLike) -> QuboModel:
    path, lines = _read_lines(path)
    if not lines:
        raise ParseError("empty file", line=1, path=str(path))
    _check_version(lines[0], 1, path)

    num_vars = _parse_int(_header_value(lines, 1, "vars", path), 2, path)
    if num_vars < 0:
        raise ParseError(f"negative variable count {num_vars}", line=2, path=str(path))
    offset = _parse_real(_header_value(lines, 2, "offset", path), 3, path)
    if offset < 0.0:
        raise ParseError(f"negative offset {offset}", line=3, path=str(path))
    encoding = _parse_encoding(_header_value(lines, 3, "encoding", path), 4, path)

    index = 4
    expected_layout = 0
    while index < len(lines) and lines[index].startswith("#layout"):
        lineno = index + 1
        parts = lines[index].split()
        if len(parts) != 4:
            raise ParseError("expected '#layout <pixel> <level> <var>'", line=lineno, path=str(path))
        pixel, level, var = (_parse_int(t, lineno, path) for t in parts[1:])
        if encoding is None or var != encoding.var_index(pixel, level) or var != expected_layout:
            raise ParseError(f"layout entry ({pixel}, {level}) -> {var} does not match the encoding", line=lineno, path=str(path))
        expected_layout += 1
        index += 1
    if encoding is not None and expected_layout != encoding.num_vars:
        raise ParseError(
            f"layout lists {expected_layout} variables, encoding has {encoding.num_vars}", line=index + 1, path=str(path)
        )

    linear = np.zeros(num_vars)
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    count = 0
    previous = (-1, -1)
    terminated = False

    for index in range(index, len(lines)):
        lineno = index + 1
        line = lines[index]
        if line.startswith("#end"):
            declared = _parse_int(line.split(maxsplit=1)[-1], lineno, path)
            if declared != count:
                raise ParseError(f"trailer declares {declared} terms, read {count}", line=lineno, path=str(path))
            terminated = True
            if any(rest.strip() for rest in lines[index + 1:]):
                raise ParseError("content after '#end'", line=lineno + 1, path=str(path))
            break

        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'i j value', got {line!r}", line=lineno, path=str(path))
        i, j = _parse_int(parts[0], lineno, path), _parse_int(parts[1], lineno, path)
        value = _parse_real(parts[2], lineno, path)
        if not (0 <= i <= j < num_vars):
            raise ParseError(f"term ({i}, {j}) outside 0 <= i <= j < {num_vars}", line=lineno, path=str(path))
        if (i, j) <= previous:
            raise ParseError(f"term ({i}, {j}) is out of order or repeated", line=lineno, path=str(path))
        previous = (i, j)

        if i == j:
            linear[i] = value
        else:
            rows.append(i)
            cols.append(j)
            data.append(value)
        count += 1

    if not terminated:
        raise ParseError("file is truncated: missing '#end' trailer", line=len(lines) + 1, path=str(path))

    quadratic = sp.csr_matrix((data, (rows, cols)), shape=(num_vars, num_vars))
    return QuboModel(num_vars=num_vars, linear=linear, quadratic=quadratic, offset=offset, encoding=encoding)

# --- JSON ------------------------------------------------------------------

def dumps_json(data: Any) -> bytes:
    return orjson.dumps(data, option=JSON_OPTIONS) + b"\n"

def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dumps_json(data))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path

def read_json(path: PathLike) -> Any:
    """Documents carrying a `format_version` must match ours; others pass through."""
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except orjson.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}", line=getattr(e, "lineno", None), path=str(path)) from e

    if isinstance(data, dict) and "format_version" in data and data["format_version"] != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {data['format_version']!r}", path=str(path))
    return data
