"""Manufactured data and exact eigenvalues used by the studies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = math.pi


@dataclass(frozen=True)
class SourceProblem:
    name: str
    f: Callable
    u: Callable
    grad_u: Callable


def _sinsin(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _sinsin_grad(x, y):
    return (PI * np.cos(PI * x) * np.sin(PI * y), PI * np.sin(PI * x) * np.cos(PI * y))


EXAMPLE1 = SourceProblem(
    "example1",
    f=lambda x, y: 2 * PI ** 2 * _sinsin(x, y),
    u=_sinsin,
    grad_u=_sinsin_grad,
)

PROBLEMS = {"example1": EXAMPLE1}


def get_problem(name: str) -> SourceProblem:
    try:
        return PROBLEMS[name]
    except KeyError:
        from .exceptions import PreconditionError
        raise PreconditionError(f"unknown source problem {name!r}; choose from {sorted(PROBLEMS)}")


def exact_eigenvalues_rectangle(k: int, width: float = 1.0, height: float = 1.0) -> np.ndarray:
    """k smallest Dirichlet eigenvalues of -Laplace on a rectangle, with multiplicity."""
    kmax = k + 1
    vals = sorted((p / width) ** 2 + (q / height) ** 2
                  for p in range(1, kmax + 1) for q in range(1, kmax + 1))
    return PI ** 2 * np.array(vals[:k])


# Third Dirichlet eigenvalue of the L-shape (0,2)^2 minus [1,2]^2, carried by sin(pi x) sin(pi y).
LSHAPE_LAMBDA3 = 2 * PI ** 2
