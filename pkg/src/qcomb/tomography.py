"""Two-qubit frequency-bin state tomography by maximum likelihood.

Projection measurements use the four single-photon analysis states
|0>, |1>, |+> = (|0>+|1>)/sqrt(2), |L> = (|0>+i|1>)/sqrt(2) on each photon.
Superposition projections are realized by a phase shift theta on the |1>
component (theta = 0 gives |+>, theta = pi/2 gives |L>), so of the 4 x 4 x 4
(basis_s, basis_i, phase setting) permutations only 36 are legal; the counts
of the settings realizing the same projection are summed, N_v = sum_k n_vk,
and modeled as N_v = N <Psi_v| rho |Psi_v> with one overall scale N.

Reconstruction minimizes

    L = sum_v (N <Psi_v|rho_p|Psi_v> - N_v)^2 / (2 N <Psi_v|rho_p|Psi_v>)

over a physical density matrix rho_p = T^dag T / tr(T^dag T), T lower
triangular (16 real parameters: positivity and unit trace by construction),
with the scale N as a 17th parameter. The optimizer starts from a
linear-inversion seed projected to the physical cone and restarts from
perturbed seeds; the lowest likelihood wins, ties broken by restart index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product

import numpy as np
from scipy.optimize import least_squares

BASIS_TOKENS = ("0", "1", "+", "L")

_SQ = 1.0 / np.sqrt(2.0)
_KET = {
    "0": np.array([1.0, 0.0], dtype=complex),
    "1": np.array([0.0, 1.0], dtype=complex),
    "+": np.array([_SQ, _SQ], dtype=complex),
    "L": np.array([_SQ, 1j * _SQ], dtype=complex),
}
# phase settings under which each analysis state is realized
_LEGAL_THETA = {
    "0": (0.0, np.pi / 2.0),
    "1": (0.0, np.pi / 2.0),
    "+": (0.0,),
    "L": (np.pi / 2.0,),
}

BELL_PHI_PLUS = np.array([_SQ, 0.0, 0.0, _SQ], dtype=complex)


class TomographyConvergenceError(RuntimeError):
    """Optimizer failed on every restart; carries the best attempt."""

    def __init__(self, message: str, best_result=None, residuals=None):
        super().__init__(message)
        self.best_result = best_result
        self.residuals = residuals


def projection_vector(basis_s: str, basis_i: str) -> np.ndarray:
    """Two-photon projection state |basis_s>_s (x) |basis_i>_i, unit norm."""
    for token in (basis_s, basis_i):
        if token not in _KET:
            raise ValueError(f"unknown basis token {token!r}; use one of {BASIS_TOKENS}")
    return np.kron(_KET[basis_s], _KET[basis_i])


def projection_pairs() -> list[tuple[str, str]]:
    """The 16 projections in canonical order."""
    return list(product(BASIS_TOKENS, BASIS_TOKENS))


def legal_settings() -> list[tuple[str, str, float, float]]:
    """All 36 legal (basis_s, basis_i, theta_s, theta_i) permutations."""
    out = []
    for bs, bi in projection_pairs():
        for th_s in _LEGAL_THETA[bs]:
            for th_i in _LEGAL_THETA[bi]:
                out.append((bs, bi, th_s, th_i))
    return out


def multiplicity(basis_s: str, basis_i: str) -> int:
    """Number of phase settings realizing one projection (1, 2, or 4)."""
    return len(_LEGAL_THETA[basis_s]) * len(_LEGAL_THETA[basis_i])


@dataclass(frozen=True)
class ProjectionSetting:
    """One measured permutation of projection bases and phase setting."""

    basis_s: str
    basis_i: str
    theta_s: float
    theta_i: float
    counts: float
    duration_s: float = 60.0

    def __post_init__(self) -> None:
        for basis, theta, label in (
            (self.basis_s, self.theta_s, "signal"),
            (self.basis_i, self.theta_i, "idler"),
        ):
            if basis not in _KET:
                raise ValueError(f"unknown {label} basis {basis!r}")
            if not any(np.isclose(theta, t) for t in _LEGAL_THETA[basis]):
                raise ValueError(
                    f"{label} basis {basis!r} is not realized at theta={theta}"
                )
        if self.counts < 0:
            raise ValueError(f"counts must be >= 0, got {self.counts}")


@dataclass(frozen=True)
class DensityMatrix:
    """4x4 Hermitian, unit-trace, positive-semidefinite two-qubit state."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) >= 1e-12:
            raise ValueError("matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"trace {tr} differs from 1 beyond 1e-9")
        if np.linalg.eigvalsh(m).min() < -1e-9:
            raise ValueError("matrix has a negative eigenvalue beyond -1e-9")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.real(psi.conj() @ self.matrix @ psi))


@dataclass(frozen=True)
class TomographyResult:
    rho: DensityMatrix
    n_scale: float
    likelihood: float
    seed_likelihood: float
    restarts_converged: int
    aggregated_counts: dict


def _projector_tensor() -> np.ndarray:
    """(16, 4, 4) tensor with P[v][a][b] = conj(Psi_v[a]) Psi_v[b]."""
    mats = []
    for bs, bi in projection_pairs():
        psi = projection_vector(bs, bi)
        mats.append(np.outer(psi.conj(), psi))
    return np.array(mats)


_PROJ = _projector_tensor()


def projection_probabilities(rho: np.ndarray) -> np.ndarray:
    """<Psi_v| rho |Psi_v> for the 16 canonical projections."""
    return np.real(np.einsum("vab,ab->v", _PROJ, np.asarray(rho, dtype=complex)))


def expected_counts(rho, n_scale: float) -> dict[tuple[str, str], float]:
    """Expected aggregated counts N_v = n_scale * <Psi_v|rho|Psi_v>."""
    if n_scale <= 0:
        raise ValueError(f"n_scale must be positive, got {n_scale}")
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    probs = projection_probabilities(m)
    return {pair: float(n_scale * p) for pair, p in zip(projection_pairs(), probs)}


def sample_settings(
    rho, n_scale: float, rng: np.random.Generator | None = None
) -> list[ProjectionSetting]:
    """Synthesize the 36 permutation counts for a state.

    Each permutation's expectation is N_v / multiplicity so the aggregated
    projection totals match the constant-scale count model. Poisson noise is
    applied when a generator is given, otherwise counts are exact
    expectations rounded to integers.
    """
    expected = expected_counts(rho, n_scale)
    out = []
    for bs, bi, th_s, th_i in legal_settings():
        mean = expected[(bs, bi)] / multiplicity(bs, bi)
        counts = float(rng.poisson(mean)) if rng is not None else float(np.rint(mean))
        out.append(
            ProjectionSetting(
                basis_s=bs, basis_i=bi, theta_s=th_s, theta_i=th_i, counts=counts
            )
        )
    return out


def aggregate_counts(settings) -> dict[tuple[str, str], float]:
    """Sum the 36 permutation counts into the 16 projection totals N_v.

    Requires exactly the 36 legal permutations, each present once.
    """
    seen = {}
    for s in settings:
        key = None
        for bs, bi, th_s, th_i in legal_settings():
            if (
                s.basis_s == bs
                and s.basis_i == bi
                and np.isclose(s.theta_s, th_s)
                and np.isclose(s.theta_i, th_i)
            ):
                key = (bs, bi, th_s, th_i)
                break
        if key is None:
            raise ValueError(
                f"illegal permutation ({s.basis_s},{s.basis_i},"
                f"{s.theta_s},{s.theta_i})"
            )
        if key in seen:
            raise ValueError(f"duplicate permutation {key}")
        seen[key] = s.counts
    if len(seen) != 36:
        missing = 36 - len(seen)
        raise ValueError(f"{missing} of the 36 permutations are missing")
    totals: dict[tuple[str, str], float] = {pair: 0.0 for pair in projection_pairs()}
    for (bs, bi, _, _), counts in seen.items():
        totals[(bs, bi)] += counts
    return totals


def background_correct(settings, accidentals):
    """Subtract per-setting accidental estimates, clamping at zero.

    Returns (corrected settings, list of indices that were clamped).
    """
    settings = list(settings)
    accidentals = list(accidentals)
    if len(accidentals) != len(settings):
        raise ValueError("need one accidental estimate per setting")
    corrected = []
    clamped = []
    for idx, (s, acc) in enumerate(zip(settings, accidentals)):
        if acc < 0:
            raise ValueError(f"accidental estimate must be >= 0, got {acc}")
        new = s.counts - acc
        if new < 0:
            new = 0.0
            clamped.append(idx)
        corrected.append(replace(s, counts=new))
    return corrected, clamped


# lower-triangle visit order for the 12 off-diagonal parameters
_LOWER_INDICES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
_FLIP = np.eye(4)[::-1]


def _t_to_matrix(t: np.ndarray) -> np.ndarray:
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = t[:4]
    for j, (r, c) in enumerate(_LOWER_INDICES):
        T[r, c] = t[4 + 2 * j] + 1j * t[5 + 2 * j]
    return T


def _matrix_to_t(T: np.ndarray) -> np.ndarray:
    t = np.zeros(16)
    t[:4] = np.real(np.diag(T))
    for j, (r, c) in enumerate(_LOWER_INDICES):
        t[4 + 2 * j] = T[r, c].real
        t[5 + 2 * j] = T[r, c].imag
    return t


def _rho_from_t(t: np.ndarray) -> np.ndarray:
    T = _t_to_matrix(t)
    rho = T.conj().T @ T
    tr = np.trace(rho).real
    if tr <= 0.0:
        return np.eye(4, dtype=complex) / 4.0
    return rho / tr


def _lower_t_of(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dag T = rho (flip-Cholesky)."""
    L = np.linalg.cholesky(_FLIP @ rho @ _FLIP)
    return _FLIP @ L.conj().T @ _FLIP


def _linear_inversion(n_v: np.ndarray, n_scale: float) -> np.ndarray:
    """Solve N_v = n_scale <Psi_v|rho|Psi_v> for Hermitian rho."""
    p = n_v / n_scale
    design = np.zeros((16, 16))
    for v in range(16):
        pv = _PROJ[v]
        col = 0
        for a in range(4):
            design[v, col] = pv[a, a].real
            col += 1
        for a in range(4):
            for b in range(a + 1, 4):
                design[v, col] = 2.0 * pv[a, b].real
                design[v, col + 1] = -2.0 * pv[a, b].imag
                col += 2
    x = np.linalg.solve(design, p)
    rho = np.zeros((4, 4), dtype=complex)
    col = 0
    for a in range(4):
        rho[a, a] = x[col]
        col += 1
    for a in range(4):
        for b in range(a + 1, 4):
            rho[a, b] = x[col] + 1j * x[col + 1]
            rho[b, a] = x[col] - 1j * x[col + 1]
            col += 2
    return rho


def _project_physical(rho: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace."""
    vals, vecs = np.linalg.eigh(rho)
    vals = np.maximum(vals, floor)
    rho_p = (vecs * vals) @ vecs.conj().T
    return rho_p / np.trace(rho_p).real


def _likelihood_residuals(z: np.ndarray, n_v: np.ndarray) -> np.ndarray:
    rho = _rho_from_t(z[:16])
    model = z[16] * projection_probabilities(rho)
    floor = 1e-9 * max(z[16], 1.0)
    return (model - n_v) / np.sqrt(2.0 * np.maximum(model, floor))


def likelihood(rho, n_scale: float, settings) -> float:
    """The count-model likelihood functional for given state and counts."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    totals = aggregate_counts(settings)
    n_v = np.array([totals[pair] for pair in projection_pairs()])
    model = n_scale * projection_probabilities(m)
    floor = 1e-9 * max(n_scale, 1.0)
    return float(np.sum((model - n_v) ** 2 / (2.0 * np.maximum(model, floor))))


def mle_reconstruct(
    settings, restarts: int = 5, seed: int = 0
) -> TomographyResult:
    """Maximum-likelihood density matrix from the 36 measured permutations.

    The scale N is fitted jointly, initialized from the counts of the
    complete {|0>,|1>} x {|0>,|1>} basis quadruple (whose probabilities sum
    to one). Runs `restarts` optimizations: the first from the physical
    projection of the linear-inversion seed, the rest from perturbed copies;
    convergence is relative likelihood change below 1e-10. Returns the best
    by likelihood (ties: earliest restart). Raises
    TomographyConvergenceError if no restart converges.
    """
    totals = aggregate_counts(settings)
    n_v = np.array([totals[pair] for pair in projection_pairs()])
    if n_v.sum() <= 0:
        raise ValueError("total counts must be positive")
    n0 = sum(totals[(a, b)] for a in "01" for b in "01")
    if n0 <= 0:
        raise ValueError("counts in the computational-basis quadruple are zero")

    rho_seed = _project_physical(_linear_inversion(n_v, n0))
    t_seed = _matrix_to_t(_lower_t_of(rho_seed))
    z_seed = np.concatenate([t_seed, [n0]])
    seed_cost = float(np.sum(_likelihood_residuals(z_seed, n_v) ** 2))

    lower = np.concatenate([np.full(16, -np.inf), [1e-6 * n0]])
    upper = np.full(17, np.inf)
    scale = max(float(np.max(np.abs(t_seed))), 1e-3)

    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(17,)))
    )
    best = None
    best_cost = np.inf
    converged = 0
    last_res = None
    for attempt in range(restarts):
        z0 = z_seed.copy()
        if attempt > 0:
            z0[:16] = t_seed + 0.05 * scale * rng.standard_normal(16)
            z0[16] = n0 * (1.0 + 0.05 * rng.standard_normal())
        z0 = np.clip(z0, lower, upper)
        res = least_squares(
            _likelihood_residuals,
            z0,
            args=(n_v,),
            bounds=(lower, upper),
            ftol=1e-10,
            xtol=1e-12,
            gtol=1e-14,
            max_nfev=4000,
        )
        last_res = res
        if res.status > 0:
            converged += 1
            cost = float(np.sum(res.fun**2))
            if cost < best_cost - 1e-15:
                best_cost = cost
                best = res
    if best is None:
        raise TomographyConvergenceError(
            f"MLE failed to converge in {restarts} restarts",
            best_result=last_res,
            residuals=None if last_res is None else last_res.fun,
        )
    rho = DensityMatrix(_rho_from_t(best.x[:16]))
    return TomographyResult(
        rho=rho,
        n_scale=float(best.x[16]),
        likelihood=best_cost,
        seed_likelihood=seed_cost,
        restarts_converged=converged,
        aggregated_counts={f"{a},{b}": v for (a, b), v in totals.items()},
    )


def fidelity(rho, target: np.ndarray) -> float:
    """<psi| rho |psi> for a physical state and a unit-norm pure target."""
    dm = rho if isinstance(rho, DensityMatrix) else DensityMatrix(np.asarray(rho))
    psi = np.asarray(target, dtype=complex)
    if psi.shape != (4,):
        raise ValueError("target must be a 4-component state vector")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"target norm {norm} is not 1")
    val = psi.conj() @ dm.matrix @ psi
    if abs(val.imag) > 1e-12:
        raise ValueError(f"fidelity has a non-real value {val}")
    f = float(val.real)
    if -1e-9 <= f < 0.0:
        return 0.0
    if 1.0 < f <= 1.0 + 1e-9:
        return 1.0
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fidelity {f} outside [0, 1]")
    return f


def trace_distance(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    """T(a, b) = 0.5 * sum |eigvals(a - b)|."""
    a = rho_a.matrix if isinstance(rho_a, DensityMatrix) else np.asarray(rho_a)
    b = rho_b.matrix if isinstance(rho_b, DensityMatrix) else np.asarray(rho_b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a - b))))
