"""Desk-scale numerical lab for the error-composition mathematics.

Everything the budget model takes for granted is checked here on small dense
matrices: the spectral norm as the error metric, the additivity of per-factor
errors under composition of unitaries, the closed-form distance of z-rotations
(which makes perturbations with exactly controlled error possible), and the
step-count scaling of split-step approximations to Ising time evolution that
motivates modelling the step count as ``1/sqrt(tolerance)``.

Matrices are plain complex numpy arrays of dimension ``2**n`` with ``n <= 6``;
this module is an oracle, not a simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MatrixDomainError(ValueError):
    """Raised for matrices or parameters outside the lab's domain."""


class AssemblyError(RuntimeError):
    """Internal consistency failure while assembling an operator."""


_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value of a dense matrix."""
    arr = np.asarray(matrix, dtype=complex)
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise MatrixDomainError("matrix contains non-finite entries")
    return float(np.linalg.svd(arr, compute_uv=False)[0])


def rz(theta: float) -> np.ndarray:
    """Rotation about the z-axis: ``diag(exp(-i theta/2), exp(i theta/2))``."""
    phase = np.exp(-0.5j * theta)
    return np.array([[phase, 0.0], [0.0, phase.conjugate()]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    """Rotation about the x-axis: ``exp(-i theta sigma_x / 2)``."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def rz_distance(theta: float) -> float:
    """Closed form for ``||rz(theta) - I|| = 2 |sin(theta / 4)|``."""
    return 2.0 * abs(math.sin(theta / 4.0))


def is_unitary(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    arr = np.asarray(matrix, dtype=complex)
    eye = np.eye(arr.shape[0])
    return spectral_norm(arr.conj().T @ arr - eye) <= tol


def random_unitary(dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix.

    The R diagonal's phases are divided out so the distribution is exactly
    Haar rather than QR-convention dependent.
    """
    z = rng.standard_normal((dimension, dimension)) + 1j * rng.standard_normal(
        (dimension, dimension)
    )
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _embed_single_qubit(gate: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    left = np.eye(2**qubit)
    right = np.eye(2 ** (n_qubits - qubit - 1))
    return np.kron(np.kron(left, gate), right)


def perturb_unitary(
    unitary: np.ndarray, eps: float, rng: np.random.Generator
) -> np.ndarray:
    """Unitary at operator-norm distance in ``[0.9 eps, eps]`` from the input.

    Dresses the input with a z-rotation on a random qubit; the rotation angle
    is solved from the closed-form distance ``2 |sin(phi/4)|``, which makes
    the perturbation size exactly controllable (a random Hermitian direction
    would only bound it approximately).
    """
    arr = np.asarray(unitary, dtype=complex)
    dimension = arr.shape[0]
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise MatrixDomainError(f"expected a square matrix, got shape {arr.shape}")
    if dimension & (dimension - 1) or dimension < 2:
        raise MatrixDomainError(f"dimension must be a power of two >= 2, got {dimension}")
    if not 0.0 <= eps < 2.0:
        raise MatrixDomainError(f"perturbation size must lie in [0, 2), got {eps}")
    n_qubits = dimension.bit_length() - 1
    qubit = int(rng.integers(n_qubits))
    realised = rng.uniform(0.9 * eps, eps)
    phi = 4.0 * math.asin(realised / 2.0)
    return arr @ _embed_single_qubit(rz(phi), qubit, n_qubits)


@dataclass(frozen=True)
class CompositionReport:
    """Result of randomized error-composition trials.

    ``max_ratio`` is the largest observed distance divided by the summed
    per-factor budgets; additivity of the budgets means it can never exceed 1,
    and ``violations`` counts the trials where it did.
    """

    trials: int
    length: int
    dimension: int
    epsilons: tuple[float, ...]
    violations: int
    max_ratio: float
    mean_ratio: float

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "length": self.length,
            "dimension": self.dimension,
            "epsilons": list(self.epsilons),
            "violations": self.violations,
            "max_ratio": self.max_ratio,
            "mean_ratio": self.mean_ratio,
        }


def verify_composition_bound(
    length: int,
    dimension: int,
    epsilons: float | Sequence[float],
    trials: int,
    rng: np.random.Generator,
) -> CompositionReport:
    """Measure composed error of perturbed unitary products against the budget.

    For each trial, draws ``length`` Haar factors, perturbs factor ``i`` by
    ``epsilons[i]``, and compares the spectral distance of the full products
    with ``sum(epsilons)``.
    """
    if np.isscalar(epsilons):
        eps_list = tuple(float(epsilons) for _ in range(length))
    else:
        eps_list = tuple(float(e) for e in epsilons)
        if len(eps_list) != length:
            raise MatrixDomainError(
                f"got {len(eps_list)} budgets for {length} factors"
            )
    budget = sum(eps_list)

    violations = 0
    max_ratio = 0.0
    ratio_sum = 0.0
    for _ in range(trials):
        exact = np.eye(dimension, dtype=complex)
        approx = np.eye(dimension, dtype=complex)
        for eps in eps_list:
            u = random_unitary(dimension, rng)
            v = perturb_unitary(u, eps, rng)
            exact = u @ exact
            approx = v @ approx
        distance = spectral_norm(exact - approx)
        if budget == 0.0:
            ratio = 0.0
            if distance > 1e-12:
                violations += 1
        else:
            ratio = distance / budget
            if distance > budget:
                violations += 1
        max_ratio = max(max_ratio, ratio)
        ratio_sum += ratio
    return CompositionReport(
        trials=trials,
        length=length,
        dimension=dimension,
        epsilons=eps_list,
        violations=violations,
        max_ratio=max_ratio,
        mean_ratio=ratio_sum / trials if trials else 0.0,
    )


# Alias documenting what the randomized trials check.
verify_lemma1 = verify_composition_bound


@dataclass(frozen=True)
class IsingEvolutionSpec:
    """Split-step approximation problem for a periodic transverse-field chain.

    ``couplings[i]`` couples sites ``i`` and ``i+1 (mod n)``; ``fields[i]`` is
    the transverse field at site ``i``.  ``steps`` repetitions of the
    ``order``-one or symmetric second-order split approximate the evolution
    over ``time``.
    """

    n: int
    couplings: tuple[float, ...]
    fields: tuple[float, ...]
    time: float
    steps: int
    order: str = "first"

    def __post_init__(self) -> None:
        if not 2 <= self.n <= 6:
            raise MatrixDomainError(f"chain length must be in 2..6, got {self.n}")
        if len(self.couplings) != self.n or len(self.fields) != self.n:
            raise MatrixDomainError("need one coupling and one field per site")
        if self.steps < 1:
            raise MatrixDomainError(f"step count must be positive, got {self.steps}")
        if self.order not in ("first", "second"):
            raise MatrixDomainError(f"order must be 'first' or 'second', got {self.order!r}")

    @classmethod
    def uniform(
        cls, n: int, coupling: float, field: float, time: float, steps: int, order: str = "first"
    ) -> "IsingEvolutionSpec":
        return cls(n, (coupling,) * n, (field,) * n, time, steps, order)


def _site_spins(n: int) -> np.ndarray:
    """Spin values (+1/-1) of every site in every computational basis state."""
    index = np.arange(2**n)
    bits = (index[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return 1.0 - 2.0 * bits


def build_hamiltonian(spec: IsingEvolutionSpec) -> np.ndarray:
    """Dense ``-sum J zz - sum Gamma x`` Hamiltonian of the periodic chain."""
    dimension = 2**spec.n
    spins = _site_spins(spec.n)
    diag = np.zeros(dimension)
    for i in range(spec.n):
        diag -= spec.couplings[i] * spins[:, i] * spins[:, (i + 1) % spec.n]
    h = np.diag(diag).astype(complex)
    for i in range(spec.n):
        h -= spec.fields[i] * _embed_single_qubit(_SIGMA_X, i, spec.n)
    if spectral_norm(h - h.conj().T) > 1e-12:
        raise AssemblyError("assembled Hamiltonian is not Hermitian")
    return h


def _zz_layer(spec: IsingEvolutionSpec, tau: float) -> np.ndarray:
    """Product of two-site zz rotations: ``exp(-i tau * (-sum J zz))``.

    Per-bond rotation angles are ``-2 tau J`` in the ``diag(e^{-i a/2},
    e^{i a/2})`` convention, realised directly on the diagonal.
    """
    spins = _site_spins(spec.n)
    phase = np.zeros(2**spec.n)
    for i in range(spec.n):
        angle_z = -2.0 * tau * spec.couplings[i]
        phase += 0.5 * angle_z * spins[:, i] * spins[:, (i + 1) % spec.n]
    return np.diag(np.exp(-1j * phase))


def _x_layer(spec: IsingEvolutionSpec, tau: float) -> np.ndarray:
    """Product of single-site x rotations: ``exp(-i tau * (-sum Gamma x))``."""
    out = np.eye(2**spec.n, dtype=complex)
    for i in range(spec.n):
        angle_x = -2.0 * tau * spec.fields[i]
        out = out @ _embed_single_qubit(rx(angle_x), i, spec.n)
    return out


def exact_propagator(spec: IsingEvolutionSpec) -> np.ndarray:
    h = build_hamiltonian(spec)
    eigenvalues, eigenvectors = np.linalg.eigh(h)
    phases = np.exp(-1j * spec.time * eigenvalues)
    return (eigenvectors * phases) @ eigenvectors.conj().T


def split_step_propagator(spec: IsingEvolutionSpec) -> np.ndarray:
    tau = spec.time / spec.steps
    if spec.order == "first":
        step = _zz_layer(spec, tau) @ _x_layer(spec, tau)
    else:
        half = _x_layer(spec, tau / 2.0)
        step = half @ _zz_layer(spec, tau) @ half
    return np.linalg.matrix_power(step, spec.steps)


def trotter_error(spec: IsingEvolutionSpec) -> float:
    """Spectral distance between the exact evolution and the split-step product."""
    return spectral_norm(exact_propagator(spec) - split_step_propagator(spec))


def trotter_error_sweep(
    spec: IsingEvolutionSpec, step_counts: Sequence[int]
) -> list[tuple[int, float]]:
    """Errors of the same problem at several step counts."""
    from dataclasses import replace

    return [(m, trotter_error(replace(spec, steps=m))) for m in step_counts]


def fit_loglog_slope(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of ``log(y)`` against ``log(x)``."""
    xs = np.log([p[0] for p in points])
    ys = np.log([p[1] for p in points])
    return float(np.polyfit(xs, ys, 1)[0])
