"""
Forward models F: R^n -> R^m and the nonlinear compressive-sensing family
F(x) = â(A·b̂(x)).

Jacobians are applied matrix-free: two diagonal scalings around one product
with A (or Aᵀ for the adjoint). Nothing here materializes F'(x).
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np

from tools.errors import DivergedError, DomainError
from tools.regularizer import as_signal


class OperatorForm(str, Enum):
    ADDITIVE = "additive"      # â(u) = u + u^c, b̂(x) = x + x^d
    PURE_POWER = "pure_power"  # â(u) = u^c,     b̂(x) = x^d


class ForwardModel(ABC):
    """A nonlinear operator with its Jacobian and adjoint Jacobian actions."""

    @abstractmethod
    def dims(self) -> tuple[int, int]:
        """(n, m): input and output dimension."""

    @abstractmethod
    def apply(self, x) -> np.ndarray:
        """F(x), length m."""

    @abstractmethod
    def jacobian_apply(self, x, v) -> np.ndarray:
        """F'(x)·v, length m."""

    @abstractmethod
    def jacobian_adjoint_apply(self, x, w) -> np.ndarray:
        """F'(x)*·w, length n."""

    def _input(self, x, name: str = "x") -> np.ndarray:
        x = as_signal(x, name)
        n, _ = self.dims()
        if x.size != n:
            raise DomainError(f"{name} has length {x.size}, model expects {n}")
        return x

    def _output(self, y, name: str = "w") -> np.ndarray:
        y = as_signal(y, name)
        _, m = self.dims()
        if y.size != m:
            raise DomainError(f"{name} has length {y.size}, model produces {m}")
        return y


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise DivergedError(f"{what} produced non-finite values")
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class NonlinearCsModel(ForwardModel):
    """y = â(A·b̂(x)) with componentwise power nonlinearities of degree c and d."""

    matrix: np.ndarray
    c: int = 1
    d: int = 1
    form: OperatorForm = OperatorForm.ADDITIVE

    def __post_init__(self):
        A = np.array(self.matrix, dtype=np.float64, order="C")
        if A.ndim != 2 or A.size == 0:
            raise DomainError(f"measurement matrix must be 2-D and non-empty, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise DomainError("measurement matrix has non-finite entries")
        for label, degree in (("c", self.c), ("d", self.d)):
            if int(degree) != degree or degree < 1:
                raise DomainError(f"{label} must be a positive integer, got {degree}")
        A.flags.writeable = False
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "c", int(self.c))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "form", OperatorForm(self.form))

    def dims(self) -> tuple[int, int]:
        m, n = self.matrix.shape
        return n, m

    @property
    def additive(self) -> bool:
        return self.form is OperatorForm.ADDITIVE

    def _b_hat(self, x: np.ndarray) -> np.ndarray:
        p = np.power(x, self.d)
        return x + p if self.additive else p

    def _a_hat(self, u: np.ndarray) -> np.ndarray:
        p = np.power(u, self.c)
        return u + p if self.additive else p

    def _b_slope(self, x: np.ndarray) -> np.ndarray:
        s = self.d * np.power(x, self.d - 1)
        return 1.0 + s if self.additive else s

    def _a_slope(self, u: np.ndarray) -> np.ndarray:
        s = self.c * np.power(u, self.c - 1)
        return 1.0 + s if self.additive else s

    def apply(self, x) -> np.ndarray:
        x = self._input(x)
        with np.errstate(over="ignore", invalid="ignore"):
            y = self._a_hat(self.matrix @ self._b_hat(x))
        return _finite(y, "F(x)")

    def jacobian_apply(self, x, v) -> np.ndarray:
        x = self._input(x)
        v = self._input(v, "v")
        with np.errstate(over="ignore", invalid="ignore"):
            u = self.matrix @ self._b_hat(x)
            jv = self._a_slope(u) * (self.matrix @ (self._b_slope(x) * v))
        return _finite(jv, "F'(x)v")

    def jacobian_adjoint_apply(self, x, w) -> np.ndarray:
        x = self._input(x)
        w = self._output(w)
        with np.errstate(over="ignore", invalid="ignore"):
            u = self.matrix @ self._b_hat(x)
            jtw = self._b_slope(x) * (self.matrix.T @ (self._a_slope(u) * w))
        return _finite(jtw, "F'(x)*w")


def finite_difference_jacobian_apply(model: ForwardModel, x, v, h: float = 1e-5) -> np.ndarray:
    """Central difference (F(x + hv) − F(x − hv)) / 2h."""
    if not h > 0.0:
        raise DomainError(f"finite difference step must be positive, got {h}")
    x = as_signal(x)
    v = as_signal(v, "v")
    forward = model.apply(x + h * v)
    backward = model.apply(x - h * v)
    return _finite((forward - backward) / (2.0 * h), "finite difference")


def rescale_matrix(A, factor: float) -> np.ndarray:
    """Multiplies every entry of A by `factor` (the 0.05 conditioning rescale)."""
    if not factor > 0.0:
        raise DomainError(f"rescale factor must be positive, got {factor}")
    A = np.asarray(A, dtype=np.float64)
    return factor * A


def spectral_norm(A) -> float:
    return float(np.linalg.norm(np.asarray(A, dtype=np.float64), 2))
