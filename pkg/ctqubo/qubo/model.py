from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ctqubo.core.images import GridImage
from ctqubo.models.ct_models import EncodingMode, EncodingSpec
from ctqubo.models.errors import DimensionError, EncodingError, InvalidArgument
from ctqubo.utils.serialization import generate_stable_key

COEFFICIENT_EPSILON = 1e-12

@dataclass(frozen=True, eq=False)
class Assignment:
    bits: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.bits)
        if raw.ndim != 1:
            raise DimensionError(f"assignment must be one-dimensional, got shape {raw.shape}")
        if not np.all((raw == 0) | (raw == 1)):
            raise InvalidArgument("assignment bits must be 0 or 1")
        bits = raw.astype(np.uint8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def zeros(cls, num_vars: int) -> "Assignment":
        return cls(np.zeros(num_vars, dtype=np.uint8))

    def __len__(self) -> int:
        return self.bits.size

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(int(b) for b in self.bits)

@dataclass(frozen=True, eq=False)
class QuboModel:
    """
    E(x) = sum_i linear[i] x_i + sum_{i<j} quadratic[i, j] x_i x_j.

    `offset` is the constant dropped from the least-squares residual (the sum
    of squared sinogram values); E(x) + offset is the residual itself.
    Variable pixel * m + k is level k of pixel p when `encoding` is set.
    """
    num_vars: int
    linear: np.ndarray
    quadratic: sp.csr_matrix
    offset: float = 0.0
    encoding: Optional[EncodingSpec] = None

    def __post_init__(self):
        if not (np.isfinite(self.offset) and self.offset >= 0.0):
            raise InvalidArgument(f"offset must be a finite sum of squares (>= 0), got {self.offset}")
        linear = np.array(self.linear, dtype=np.float64).reshape(-1)
        if linear.size != self.num_vars:
            raise DimensionError(f"linear has {linear.size} entries for {self.num_vars} variables")
        linear[np.abs(linear) < COEFFICIENT_EPSILON] = 0.0

        quadratic = sp.triu(sp.csr_matrix(self.quadratic, dtype=np.float64), k=1, format="csr")
        if quadratic.shape != (self.num_vars, self.num_vars):
            raise DimensionError(f"quadratic shape {quadratic.shape} does not fit {self.num_vars} variables")
        quadratic.data[np.abs(quadratic.data) < COEFFICIENT_EPSILON] = 0.0
        quadratic.eliminate_zeros()
        quadratic.sort_indices()

        if self.encoding is not None and self.encoding.num_vars != self.num_vars:
            raise DimensionError(
                f"encoding describes {self.encoding.num_vars} variables, model has {self.num_vars}"
            )

        linear.setflags(write=False)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quadratic", quadratic)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_terms(
        cls,
        num_vars: int,
        linear: Mapping[int, float],
        quadratic: Mapping[Tuple[int, int], float],
        offset: float = 0.0,
        encoding: Optional[EncodingSpec] = None,
    ) -> "QuboModel":
        """Build from term maps; (i, i) pairs fold into linear, (j, i) pairs into (i, j)."""
        dense_linear = np.zeros(num_vars)
        for var, coef in linear.items():
            dense_linear[var] += coef

        rows, cols, data = [], [], []
        for (i, j), coef in quadratic.items():
            if i == j:
                dense_linear[i] += coef
                continue
            rows.append(min(i, j))
            cols.append(max(i, j))
            data.append(coef)

        upper = sp.csr_matrix((data, (rows, cols)), shape=(num_vars, num_vars))
        return cls(num_vars=num_vars, linear=dense_linear, quadratic=upper, offset=offset, encoding=encoding)

    def linear_terms(self) -> Dict[int, float]:
        return {int(i): float(self.linear[i]) for i in np.flatnonzero(self.linear)}

    def quadratic_terms(self) -> Dict[Tuple[int, int], float]:
        coo = self.quadratic.tocoo()
        return {(int(i), int(j)): float(v) for i, j, v in zip(coo.row, coo.col, coo.data)}

    def iter_terms(self) -> Iterator[Tuple[int, int, float]]:
        """All coefficients as (i, j, value) with i <= j, ascending; i == j is linear."""
        quadratic = self.quadratic
        for i in range(self.num_vars):
            if self.linear[i] != 0.0:
                yield i, i, float(self.linear[i])
            start, stop = quadratic.indptr[i], quadratic.indptr[i + 1]
            for j, value in zip(quadratic.indices[start:stop], quadratic.data[start:stop]):
                yield i, int(j), float(value)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric coupling matrix Q + Q^T with a zero diagonal."""
        symmetric = (self.quadratic + self.quadratic.T).tocsr()
        symmetric.sort_indices()
        return symmetric

    def max_abs_delta(self) -> float:
        """Upper bound on |E(flip_i(x)) - E(x)| over all i and x."""
        if self.num_vars == 0:
            return 0.0
        row_sums = np.asarray(abs(self.adjacency).sum(axis=1)).ravel()
        return float(np.max(np.abs(self.linear) + row_sums))

    def fingerprint(self) -> str:
        return generate_stable_key(
            self.num_vars,
            self.offset,
            self.linear.tobytes(),
            self.quadratic.indptr.astype(np.int64).tobytes(),
            self.quadratic.indices.astype(np.int64).tobytes(),
            self.quadratic.data.tobytes(),
        )

    def to_bqm(self):
        """Export as a dimod BinaryQuadraticModel (offset included) for external samplers."""
        try:
            import dimod
        except ImportError as e:
            raise ImportError("dimod is required for BQM export: pip install dimod") from e

        return dimod.BinaryQuadraticModel(
            self.linear_terms(),
            self.quadratic_terms(),
            self.offset,
            dimod.BINARY,
        )

    @classmethod
    def from_bqm(cls, bqm, encoding: Optional[EncodingSpec] = None) -> "QuboModel":
        import dimod

        binary = bqm.change_vartype(dimod.BINARY, inplace=False)
        num_vars = len(binary.variables)
        index = {v: i for i, v in enumerate(sorted(binary.variables))}
        linear = {index[v]: float(bias) for v, bias in binary.linear.items()}
        quadratic = {(index[u], index[v]): float(bias) for (u, v), bias in binary.quadratic.items()}
        return cls.from_terms(num_vars, linear, quadratic, float(binary.offset), encoding)

def _check_length(model: QuboModel, x: Assignment):
    if len(x) != model.num_vars:
        raise DimensionError(f"assignment has {len(x)} bits, model has {model.num_vars} variables")

def energy(model: QuboModel, x: Assignment) -> float:
    """Energy without the offset."""
    _check_length(model, x)
    bits = x.bits.astype(np.float64)
    return float(model.linear @ bits + bits @ (model.quadratic @ bits))

def decode(x: Assignment, enc: EncodingSpec) -> GridImage:
    """Pixel value = sum over its set variables of the level value (alpha_k or 2**k)."""
    if len(x) != enc.num_vars:
        raise DimensionError(f"assignment has {len(x)} bits, encoding needs {enc.num_vars}")
    per_pixel = x.bits.reshape(enc.num_pixels, enc.vars_per_pixel).astype(np.float64)
    values = per_pixel @ enc.level_values()
    return GridImage(values.reshape(enc.height, enc.width))

def encode(img: GridImage, enc: EncodingSpec) -> Assignment:
    if img.dims != (enc.width, enc.height):
        raise DimensionError(f"image dims {img.dims} do not match encoding {(enc.width, enc.height)}")

    m = enc.vars_per_pixel
    bits = np.zeros((enc.num_pixels, m), dtype=np.uint8)
    values = img.flat()

    if enc.mode == EncodingMode.SEGMENTATION:
        levels = enc.level_values()
        for pixel, value in enumerate(values):
            if value == 0.0:
                continue
            matches = np.flatnonzero(levels == value)
            if matches.size == 0:
                raise EncodingError(f"pixel {pixel} value {value} is not one of the levels {levels.tolist()}")
            bits[pixel, matches[0]] = 1
    else:
        limit = 2 ** m
        for pixel, value in enumerate(values):
            if value != np.floor(value) or not (0 <= value < limit):
                raise EncodingError(f"pixel {pixel} value {value} is not an integer in [0, {limit})")
            code = int(value)
            for k in range(m):
                bits[pixel, k] = (code >> k) & 1

    return Assignment(bits.ravel())

def one_hot_violations(x: Assignment, enc: EncodingSpec) -> int:
    """Number of pixels with more than one level bit set (segmentation only)."""
    if enc.mode != EncodingMode.SEGMENTATION:
        return 0
    per_pixel = x.bits.reshape(enc.num_pixels, enc.vars_per_pixel).sum(axis=1)
    return int(np.count_nonzero(per_pixel > 1))
