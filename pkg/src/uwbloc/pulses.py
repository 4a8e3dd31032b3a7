"""Orthogonal UWB pulse design over a cardinal B-spline basis.

Pulses are linear combinations of shifted cardinal B-splines. A genetic
algorithm searches coefficient matrices whose pulses (i) stay under a
spectral mask, (ii) have zero-sum coefficient rows (no DC), and (iii) are
mutually orthogonal, while maximizing how much of the mask's power budget
each pulse uses.

Scaling convention: amplitude is a free transmit gain, so candidates are
scored at the largest mask-compliant energy for their shape. The returned
pulse set is stored at that energy (``energy_es``), which makes the stored
coefficients directly mask-compliant and the spectral-effectiveness figures
meaningful.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectrum import HZ_PER_MHZ, SpectralMask, effectiveness, fcc_like_mask, mask_violation, psd
from .waveform import Waveform, energy

__all__ = [
    "InfeasibleDesignError",
    "BSplineBasis",
    "bspline_eval",
    "synthesize_pulse",
    "DesignConfig",
    "PulseSet",
    "design_pulses",
    "orthogonality_matrix",
    "pulse_set_to_json",
    "load_pulse_set",
]

DEFAULT_DT = 50e-12  # 20 GSa/s


class InfeasibleDesignError(RuntimeError):
    """The optimizer could not reach a feasible pulse set in budget.

    Carries the best candidate found and a per-constraint report so the
    failure can be inspected.
    """

    def __init__(self, message: str, report: dict, coeffs: np.ndarray):
        super().__init__(message)
        self.report = report
        self.coeffs = coeffs


def bspline_eval(m: int, knot_spacing: float, t: np.ndarray | float) -> np.ndarray | float:
    """Cardinal B-spline of order m with knot spacing T, evaluated at t.

    The order-m spline is the m-fold convolution of the unit box on [0, T),
    normalized so integer-T shifts form a partition of unity. Support is
    [0, m*T]; order 1 is the box itself, order 2 the unit triangle.
    """
    if m < 1:
        raise ValueError(f"order must be >= 1, got {m}")
    if knot_spacing <= 0:
        raise ValueError(f"knot spacing must be positive, got {knot_spacing}")
    x = np.asarray(t, dtype=float) / knot_spacing
    out = np.zeros_like(x)
    if m == 1:
        out = np.where((x >= 0.0) & (x < 1.0), 1.0, 0.0)
    else:
        # divided-difference closed form: sum_j (-1)^j C(m,j) (x-j)_+^(m-1) / (m-1)!
        for j in range(m + 1):
            y = x - j
            out += (-1.0) ** j * math.comb(m, j) * np.where(y > 0.0, y, 0.0) ** (m - 1)
        out /= math.factorial(m - 1)
        out = np.where((x >= 0.0) & (x <= m), out, 0.0)
    if np.isscalar(t):
        return float(out)
    return out


@dataclass(frozen=True)
class BSplineBasis:
    """Ns shifted copies of the order-m cardinal B-spline, spacing T."""

    order_m: int
    knot_spacing: float
    count_ns: int

    def __post_init__(self) -> None:
        if self.order_m < 1:
            raise ValueError("order_m must be >= 1")
        if self.knot_spacing <= 0:
            raise ValueError("knot_spacing must be positive")
        if self.count_ns < 1:
            raise ValueError("count_ns must be >= 1")

    @property
    def support(self) -> float:
        """Total support of the synthesized pulse: (Ns - 1 + m) * T."""
        return (self.count_ns - 1 + self.order_m) * self.knot_spacing

    def sample_matrix(self, dt: float) -> np.ndarray:
        """(Ns, n) matrix of each shifted basis function on the sample grid."""
        n = int(math.floor(self.support / dt + 1e-9)) + 1
        t = np.arange(n) * dt
        rows = [
            bspline_eval(self.order_m, self.knot_spacing, t - k * self.knot_spacing)
            for k in range(self.count_ns)
        ]
        return np.vstack(rows)


def synthesize_pulse(coeffs_row: np.ndarray, basis: BSplineBasis, dt: float) -> Waveform:
    """Superpose weighted shifted B-splines; linear in the coefficients."""
    c = np.asarray(coeffs_row, dtype=float)
    if c.shape != (basis.count_ns,):
        raise ValueError(f"expected {basis.count_ns} coefficients, got {c.shape}")
    samples = c @ basis.sample_matrix(dt)
    return Waveform(samples, dt, 0.0)


@dataclass(frozen=True)
class DesignConfig:
    """Knobs for the genetic pulse-design run."""

    pulse_count: int = 4
    basis_count: int = 30
    spline_order: int = 4
    pulse_duration: float = 1.28e-9
    mask: SpectralMask = field(default_factory=fcc_like_mask)
    dt: float = DEFAULT_DT
    nfft: int = 4096
    population: int = 200
    generations: int = 500
    mutation_rate: float = 0.15
    sigma_start: float = 0.3
    sigma_end: float = 0.01
    crossover_rate: float = 0.7
    tournament_k: int = 3
    elitism: int = 2
    weight_rowsum: float = 10.0
    weight_gram: float = 10.0
    seed: int = 0
    tol_mask_db: float = 0.5
    tol_orthogonality: float = 0.05

    def __post_init__(self) -> None:
        if self.pulse_count < 1:
            raise ValueError("pulse_count must be >= 1")
        if self.basis_count < self.spline_order:
            raise ValueError("basis_count must be >= spline_order")
        for name in ("population", "generations", "mutation_rate", "sigma_start",
                     "sigma_end", "tournament_k", "weight_rowsum",
                     "weight_gram", "pulse_duration", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.elitism < 1:
            raise ValueError("elitism must be >= 1")

    @property
    def knot_spacing(self) -> float:
        """T chosen so the pulse support equals pulse_duration exactly."""
        return self.pulse_duration / (self.basis_count + self.spline_order - 1)

    @property
    def basis(self) -> BSplineBasis:
        return BSplineBasis(self.spline_order, self.knot_spacing, self.basis_count)


@dataclass(frozen=True)
class PulseSet:
    """Result of a design run: coefficients plus realized waveforms.

    Invariants (re-verified by the loader): zero-sum coefficient rows, Gram
    matrix within tolerance of energy_es * I, and each pulse's PSD under the
    design mask.
    """

    coeffs: np.ndarray
    basis: BSplineBasis
    pulses: tuple[Waveform, ...]
    energy_es: float
    effectiveness: np.ndarray
    objective: float
    objective_history: np.ndarray

    @property
    def pulse_count(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dt(self) -> float:
        return self.pulses[0].dt


def _project_zero_sum(pop: np.ndarray) -> np.ndarray:
    """Project each coefficient row onto the zero-sum hyperplane."""
    return pop - pop.mean(axis=-1, keepdims=True)


class _Evaluator:
    """Batched fitness evaluation for a (P, L, Ns) population."""

    def __init__(self, cfg: DesignConfig):
        self.cfg = cfg
        self.phi = cfg.basis.sample_matrix(cfg.dt)
        freq = np.fft.rfftfreq(cfg.nfft, d=cfg.dt)
        limits_db = cfg.mask.limit_at(freq)
        self.band = ~np.isnan(limits_db)
        if not np.any(self.band):
            raise InfeasibleDesignError(
                "mask does not cover the sampled band", {}, np.empty(0))
        self.limits_lin = 10.0 ** (limits_db[self.band] / 10.0)
        self.df_mhz = float(freq[1] - freq[0]) / HZ_PER_MHZ
        self.mask_integral = cfg.mask.integral_linear()
        if self.mask_integral <= 0.0:
            raise InfeasibleDesignError(
                "mask allows zero power; design infeasible", {}, np.empty(0))
        # one-sided spectral weights matching psd()
        w = np.full(freq.shape, 2.0)
        w[0] = 1.0
        if cfg.nfft % 2 == 0:
            w[-1] = 1.0
        self.weights = w[self.band] * HZ_PER_MHZ

    def shape_metrics(self, pop: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-candidate (budget energy, xi_l, normalized Gram) at best scale."""
        cfg = self.cfg
        pulses = pop @ self.phi  # (P, L, n)
        energies = np.sum(pulses**2, axis=-1) * cfg.dt  # (P, L)
        spec = np.fft.rfft(pulses, n=cfg.nfft, axis=-1) * cfg.dt
        lin = (np.abs(spec[..., self.band]) ** 2) * self.weights  # per MHz
        ok = energies > 1e-30
        safe_e = np.where(ok, energies, 1.0)
        d1 = lin / safe_e[..., None]  # unit-energy density
        with np.errstate(divide="ignore"):
            budget_l = np.min(
                np.where(d1 > 0.0, self.limits_lin / np.where(d1 > 0, d1, 1.0), np.inf),
                axis=-1,
            )
        budget = np.min(np.where(ok, budget_l, 0.0), axis=-1)  # (P,)
        inband = np.sum(d1, axis=-1) * self.df_mhz  # fraction of unit energy in band
        xi = budget[:, None] * inband / self.mask_integral  # (P, L)
        gram = pulses @ pulses.transpose(0, 2, 1) * cfg.dt  # (P, L, L)
        diag = np.sqrt(np.clip(np.einsum("pll->pl", gram), 1e-300, None))
        gram_n = gram / (diag[:, :, None] * diag[:, None, :])
        xi = np.where(ok, xi, 0.0)
        return budget, xi, gram_n

    def fitness(self, pop: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        _, xi, gram_n = self.shape_metrics(pop)
        eye = np.eye(pop.shape[1])
        pen_gram = np.sum((gram_n - eye) ** 2, axis=(1, 2))
        pen_sum = np.sum(np.abs(pop.sum(axis=-1)), axis=-1)
        # candidates are pre-scaled to their mask budget, so the mask-violation
        # penalty term is identically zero and omitted from the arithmetic
        return xi.sum(axis=-1) - cfg.weight_gram * pen_gram - cfg.weight_rowsum * pen_sum


def _orthogonalize_rows(cand: np.ndarray, gram_metric: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Gram-Schmidt coefficient rows in the sampled-pulse inner product.

    Linear combinations of zero-sum rows stay zero-sum, so this yields
    orthogonal, DC-free starting points for the search.
    """
    out = cand.copy()
    l_count = out.shape[0]
    for i in range(l_count):
        for j in range(i):
            denom = out[j] @ gram_metric @ out[j]
            if denom > 1e-30:
                out[i] -= (out[i] @ gram_metric @ out[j]) / denom * out[j]
        norm = math.sqrt(max(out[i] @ gram_metric @ out[i], 0.0))
        if norm < 1e-12:
            out[i] = _project_zero_sum(rng.normal(size=out[i].shape))
            norm = math.sqrt(max(out[i] @ gram_metric @ out[i], 1e-30))
        out[i] /= norm
    return out


def design_pulses(cfg: DesignConfig) -> PulseSet:
    """Run the genetic search and return a verified pulse set.

    Deterministic for a fixed seed. Raises InfeasibleDesignError with the
    best candidate and a constraint report if the generation budget ends
    without a feasible set.
    """
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(cfg)
    l_count, ns = cfg.pulse_count, cfg.basis_count
    gram_metric = ev.phi @ ev.phi.T * cfg.dt

    pop = rng.normal(size=(cfg.population, l_count, ns))
    pop = _project_zero_sum(pop)
    for p in range(cfg.population):
        pop[p] = _orthogonalize_rows(pop[p], gram_metric, rng)

    fit = ev.fitness(pop)
    history = np.empty(cfg.generations)
    sigma_decay = (cfg.sigma_end / cfg.sigma_start) ** (1.0 / max(cfg.generations - 1, 1))

    for gen in range(cfg.generations):
        order = np.argsort(fit)[::-1]
        history[gen] = fit[order[0]]
        elite = pop[order[: cfg.elitism]].copy()

        # tournament selection of parent indices
        draws = rng.integers(0, cfg.population, size=(cfg.population, cfg.tournament_k))
        parents = draws[np.arange(cfg.population), np.argmax(fit[draws], axis=1)]
        children = pop[parents].copy()

        # uniform crossover between consecutive parent pairs
        do_cross = rng.random(cfg.population // 2) < cfg.crossover_rate
        swap = rng.random((cfg.population // 2, l_count, ns)) < 0.5
        swap &= do_cross[:, None, None]
        a = children[0::2][: swap.shape[0]]
        b = children[1::2][: swap.shape[0]]
        a_sw = np.where(swap, b, a)
        b_sw = np.where(swap, a, b)
        children[0::2][: swap.shape[0]] = a_sw
        children[1::2][: swap.shape[0]] = b_sw

        sigma = cfg.sigma_start * sigma_decay**gen
        mutate = rng.random(children.shape) < cfg.mutation_rate
        children += mutate * rng.normal(0.0, sigma, size=children.shape)
        children = _project_zero_sum(children)

        children[: cfg.elitism] = elite
        pop = children
        fit = ev.fitness(pop)

    best = pop[int(np.argmax(fit))]
    budget, _, _ = ev.shape_metrics(best[None])
    e_s = float(budget[0])

    if e_s <= 0.0:
        raise InfeasibleDesignError(
            "no positive mask-compliant energy for best candidate", {"budget": e_s}, best)

    # scale every row to the common compliant energy, then re-project
    pulses_raw = best @ ev.phi
    row_energy = np.sum(pulses_raw**2, axis=-1) * cfg.dt
    if np.min(row_energy) <= 0.0:
        raise InfeasibleDesignError(
            "best candidate contains a zero pulse", {"budget": e_s}, best)
    coeffs = best * np.sqrt(e_s / row_energy)[:, None]
    coeffs = _project_zero_sum(coeffs)

    pulses = tuple(synthesize_pulse(coeffs[i], cfg.basis, cfg.dt) for i in range(l_count))
    xi = np.empty(l_count)
    worst_viol = -np.inf
    for i, pw in enumerate(pulses):
        freq, dens = psd(pw, cfg.nfft)
        xi[i] = effectiveness(freq, dens, cfg.mask)
        worst_viol = max(worst_viol, mask_violation(freq, dens, cfg.mask))
    gram = _gram(pulses)
    off = _max_off_diagonal(gram / e_s)
    rowsum = float(np.max(np.abs(coeffs.sum(axis=1))))

    report = {
        "mask_violation_db": worst_viol,
        "max_gram_off_diagonal": off,
        "max_row_sum": rowsum,
        "min_effectiveness": float(xi.min()),
        "energy_es": e_s,
    }
    feasible = (
        worst_viol <= cfg.tol_mask_db
        and off <= cfg.tol_orthogonality
        and rowsum < 1e-9
        and np.all(xi > 0.0)
    )
    if not feasible:
        raise InfeasibleDesignError(
            f"design did not reach feasibility in {cfg.generations} generations: {report}",
            report,
            coeffs,
        )
    return PulseSet(
        coeffs=coeffs,
        basis=cfg.basis,
        pulses=pulses,
        energy_es=e_s,
        effectiveness=xi,
        objective=float(xi.sum()),
        objective_history=history,
    )


def _gram(pulses: tuple[Waveform, ...]) -> np.ndarray:
    mat = np.vstack([p.samples for p in pulses])
    return mat @ mat.T * pulses[0].dt


def _max_off_diagonal(g: np.ndarray) -> float:
    if g.shape[0] < 2:
        return 0.0
    off = g - np.diag(np.diag(g))
    return float(np.max(np.abs(off)))


def orthogonality_matrix(ps: PulseSet) -> np.ndarray:
    """Pairwise pulse inner products normalized by the set energy."""
    return _gram(ps.pulses) / ps.energy_es


# -- serialization ----------------------------------------------------------

def pulse_set_to_json(ps: PulseSet, path: str | Path | None = None) -> dict:
    obj = {
        "basis": {
            "m": ps.basis.order_m,
            "T": ps.basis.knot_spacing,
            "Ns": ps.basis.count_ns,
        },
        "coeffs": ps.coeffs.tolist(),
        "Es": ps.energy_es,
        "dt": ps.dt,
    }
    if path is not None:
        Path(path).write_text(json.dumps(obj))
    return obj


def load_pulse_set(
    source: str | Path | dict,
    mask: SpectralMask | None = None,
    nfft: int = 4096,
    tol_orthogonality: float = 0.05,
    tol_mask_db: float = 0.5,
) -> PulseSet:
    """Re-synthesize a stored pulse set and re-verify its invariants.

    Checks zero-sum rows and Gram structure always; mask compliance when a
    mask is supplied.
    """
    if isinstance(source, dict):
        obj = source
    else:
        obj = json.loads(Path(source).read_text())
    basis = BSplineBasis(int(obj["basis"]["m"]), float(obj["basis"]["T"]), int(obj["basis"]["Ns"]))
    coeffs = np.asarray(obj["coeffs"], dtype=float)
    e_s = float(obj["Es"])
    dt = float(obj["dt"])
    if coeffs.ndim != 2 or coeffs.shape[1] != basis.count_ns:
        raise ValueError("coefficient matrix does not match basis count")
    rowsum = float(np.max(np.abs(coeffs.sum(axis=1))))
    if rowsum >= 1e-9:
        raise ValueError(f"stored coefficients violate zero-sum rows (max |sum| = {rowsum:g})")
    pulses = tuple(synthesize_pulse(coeffs[i], basis, dt) for i in range(coeffs.shape[0]))
    gram = _gram(pulses) / e_s
    if _max_off_diagonal(gram) > tol_orthogonality:
        raise ValueError(
            f"stored pulses are not orthogonal within tolerance "
            f"(max off-diagonal {_max_off_diagonal(gram):.3g})")
    if np.max(np.abs(np.diag(gram) - 1.0)) > 0.02:
        raise ValueError("stored Es does not match pulse energies")
    xi = np.zeros(coeffs.shape[0])
    if mask is not None:
        for i, pw in enumerate(pulses):
            freq, dens = psd(pw, nfft)
            if mask_violation(freq, dens, mask) > tol_mask_db:
                raise ValueError(f"stored pulse {i} violates the mask")
            xi[i] = effectiveness(freq, dens, mask)
    return PulseSet(
        coeffs=coeffs,
        basis=basis,
        pulses=pulses,
        energy_es=e_s,
        effectiveness=xi,
        objective=float(xi.sum()),
        objective_history=np.empty(0),
    )
