"""Periodic grids, sampled fields, discrete norms and spectral transforms.

Fields live on the torus ``[0, 2*pi)^d`` sampled at ``x_i = i * h`` with
``h = 2*pi / n`` per axis.  Integrals are Riemann sums with the cell volume
``w = prod(h)`` as weight, which is exact for trigonometric polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _stencil


class ComponentMismatchError(ValueError):
    """Raised when a field has the wrong number of components for an operation."""


class GridMismatchError(ValueError):
    """Raised when two fields that must share a grid do not."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid of dimension 2 or 3.

    Parameters
    ----------
    shape : per-axis sample counts; each must be even and at least 4.
    """

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {len(shape)}")
        for n in shape:
            if n < 4 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 4, got {shape}")

    @classmethod
    def cube(cls, n: int, dim: int = 2) -> "TorusGrid":
        return cls((n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2.0 * math.pi / n for n in self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def volume(self) -> float:
        return (2.0 * math.pi) ** self.dim

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Sample coordinates as a tuple of dense ``ij``-indexed arrays."""
        axes = [np.arange(n) * h for n, h in zip(self.shape, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self, odd: bool = False) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, shaped for broadcasting.

        With ``odd=True`` the Nyquist entry is set to zero, which is the
        convention used for odd (first-derivative type) multipliers so that
        real fields map to real fields.
        """
        out = []
        for i, n in enumerate(self.shape):
            k = np.fft.fftfreq(n, d=1.0 / n)
            if odd:
                k[n // 2] = 0.0
            bshape = [1] * self.dim
            bshape[i] = n
            out.append(k.reshape(bshape))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable scalar or vector samples on a :class:`TorusGrid`.

    ``data`` has shape ``(components, *grid.shape)``; a bare array of shape
    ``grid.shape`` is accepted as a scalar field.
    """

    grid: TorusGrid
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.shape == self.grid.shape:
            data = data[np.newaxis]
        if data.ndim != self.grid.dim + 1 or data.shape[1:] != self.grid.shape or data.shape[0] < 1:
            raise ComponentMismatchError(
                f"data shape {data.shape} does not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field samples must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, grid: TorusGrid, components: int = 1) -> "Field":
        return cls(grid, np.zeros((components,) + grid.shape))

    @classmethod
    def from_function(cls, grid: TorusGrid, *funcs: Callable[..., np.ndarray]) -> "Field":
        """Sample one callable per component at the grid coordinates."""
        xs = grid.coordinates()
        return cls(grid, np.stack([np.broadcast_to(fn(*xs), grid.shape) for fn in funcs]))

    @property
    def components(self) -> int:
        return self.data.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.components == 1

    @property
    def values(self) -> np.ndarray:
        """Scalar samples of shape ``grid.shape`` (scalar fields only)."""
        if not self.is_scalar:
            raise ComponentMismatchError("values is only defined for scalar fields")
        return self.data[0]

    def with_data(self, data: np.ndarray) -> "Field":
        return Field(self.grid, data)

    def _check(self, other: "Field"):
        if self.grid != other.grid:
            raise GridMismatchError(f"grids differ: {self.grid.shape} vs {other.grid.shape}")
        if self.components != other.components:
            raise ComponentMismatchError(
                f"component counts differ: {self.components} vs {other.components}")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return self.with_data(self.data - other.data)

    def __neg__(self) -> "Field":
        return self.with_data(-self.data)

    def __mul__(self, alpha: float) -> "Field":
        return self.with_data(float(alpha) * self.data)

    __rmul__ = __mul__

    def __truediv__(self, alpha: float) -> "Field":
        return self.with_data(self.data / float(alpha))

    def mean(self) -> np.ndarray:
        """Per-component mean value."""
        return self.data.reshape(self.components, -1).mean(axis=1)


NORM_KINDS = ("Lp", "Linf", "BV", "LinfPlusW1d", "W1p")


@dataclass(frozen=True)
class NormSpec:
    """Choice of discrete norm.

    ``kind`` is one of ``Lp``, ``Linf``, ``BV``, ``LinfPlusW1d`` and ``W1p``;
    ``p`` is required for ``Lp`` and ``W1p`` and must lie strictly in (1, inf).
    """

    kind: str
    p: float | None = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind in ("Lp", "W1p"):
            if self.p is None or not (1.0 < float(self.p) < math.inf):
                raise ValueError(f"{self.kind} needs 1 < p < inf, got {self.p}")
            object.__setattr__(self, "p", float(self.p))
        elif self.p is not None:
            raise ValueError(f"{self.kind} takes no exponent")

    @classmethod
    def lp(cls, p: float) -> "NormSpec":
        return cls("Lp", p)

    @classmethod
    def linf(cls) -> "NormSpec":
        return cls("Linf")

    @classmethod
    def bv(cls) -> "NormSpec":
        return cls("BV")

    @classmethod
    def linf_w1d(cls) -> "NormSpec":
        return cls("LinfPlusW1d")

    @classmethod
    def w1p(cls, p: float) -> "NormSpec":
        return cls("W1p", p)

    def __str__(self) -> str:
        return f"{self.kind}({self.p:g})" if self.p is not None else self.kind


def pointwise_magnitude(a: np.ndarray, dim: int) -> np.ndarray:
    """Euclidean norm over all non-spatial axes of ``a``."""
    lead = a.ndim - dim
    if lead == 0:
        return np.abs(a)
    axes = tuple(range(lead))
    top = float(np.abs(a).max()) if a.size else 0.0
    if 1e-150 < top < 1e150 or top == 0.0:
        return np.sqrt(np.sum(a * a, axis=axes))
    # squares would under- or overflow
    b = a / top
    return top * np.sqrt(np.sum(b * b, axis=axes))


def array_norm(a: np.ndarray, grid: TorusGrid, spec: NormSpec) -> float:
    """:func:`compute_norm` on a raw ``(components, *shape)`` array."""
    w = grid.cell_volume
    if spec.kind == "Lp":
        mag = pointwise_magnitude(a, grid.dim)
        return _lp(mag, w, spec.p)
    if spec.kind == "Linf":
        return float(pointwise_magnitude(a, grid.dim).max())
    grad = _stencil.gradient(a, grid.spacing)
    if spec.kind == "BV":
        # isotropic per component, summed over components
        return float(w * sum(pointwise_magnitude(g, grid.dim).sum() for g in grad))
    if spec.kind == "W1p":
        return _lp(pointwise_magnitude(grad, grid.dim), w, spec.p)
    linf = float(pointwise_magnitude(a, grid.dim).max())
    return linf + _lp(pointwise_magnitude(grad, grid.dim), w, float(grid.dim))


def _lp(mag: np.ndarray, w: float, p: float) -> float:
    top = float(mag.max()) if mag.size else 0.0
    if top == 0.0:
        return 0.0
    # scale out the maximum so large exponents cannot overflow
    return top * float(w * np.sum((mag / top) ** p)) ** (1.0 / p)


def compute_norm(f: Field, spec: NormSpec) -> float:
    """Discrete norm of ``f``.

    Pointwise vector magnitudes are Euclidean.  ``BV`` is the isotropic total
    variation of the forward-difference gradient, computed per component and
    summed; ``LinfPlusW1d`` is the sum of the sup norm and the ``L^d`` norm of
    the (Frobenius) gradient.
    """
    return array_norm(f.data, f.grid, spec)


def project_zero_mean(f: Field) -> Field:
    """Remove the mean of a scalar field."""
    if not f.is_scalar:
        raise ComponentMismatchError("zero-mean projection expects a scalar field")
    data = f.data - f.data.mean()
    # a second pass removes the rounding residue of the first
    data -= data.mean()
    return f.with_data(data)


def inner_product(f: Field, g: Field) -> float:
    """Weighted pairing ``sum_x w f(x) . g(x)``."""
    f._check(g)
    return f.grid.cell_volume * float(np.vdot(f.data, g.data))


def fft_forward(f: Field) -> np.ndarray:
    """Unnormalized DFT over the spatial axes, shape ``(components, *shape)``."""
    return np.fft.fftn(f.data, axes=tuple(range(1, f.grid.dim + 1)))


def fft_inverse(coeffs: np.ndarray, grid: TorusGrid) -> Field:
    """Inverse of :func:`fft_forward`; the imaginary part is discarded."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape == grid.shape:
        coeffs = coeffs[np.newaxis]
    return Field(grid, np.fft.ifftn(coeffs, axes=tuple(range(1, grid.dim + 1))).real)


def spectral_energy(coeffs: np.ndarray, grid: TorusGrid) -> float:
    """Squared L2 norm from DFT coefficients (discrete Parseval identity)."""
    return grid.cell_volume / grid.size * float(np.sum(np.abs(coeffs) ** 2))


def check_same_grid(fields: Sequence[Field]):
    grids = {f.grid for f in fields}
    if len(grids) > 1:
        raise GridMismatchError("fields live on different grids")
