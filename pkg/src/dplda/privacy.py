"""Privacy calculus for iterated subsampled Gaussian mechanisms.

Covers Gaussian noise calibration, zero-concentrated differential privacy
(zCDP) composition and conversion to (epsilon, delta)-DP, privacy
amplification by uniform subsampling, the inverse solver that maps a total
budget to a per-iteration budget under linear, advanced, or zCDP composition,
and a forward accountant for the spend actually incurred.

All functions are pure; AccountantLedger is single-writer, append-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from scipy.optimize import brentq


class BudgetInfeasibleError(ValueError):
    """No per-iteration budget can meet the requested total."""


class CompositionMethod(str, enum.Enum):
    LINEAR = "linear"
    ADVANCED = "advanced"
    ZCDP = "zcdp"
    NONE = "none"


@dataclass(frozen=True)
class DpBudget:
    """An (epsilon, delta) differential privacy guarantee."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must be in [0, 1)")


@dataclass(frozen=True)
class ZcdpBudget:
    """A rho-zCDP guarantee."""

    rho: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")


@dataclass(frozen=True)
class BudgetSpec:
    """Total privacy budget plus the mechanism schedule it must cover."""

    epsilon_tot: float
    delta_tot: float
    iterations: int
    sampling_ratio: float
    sensitivity: float
    method: CompositionMethod

    def __post_init__(self):
        if self.epsilon_tot <= 0:
            raise ValueError("epsilon_tot must be positive")
        if not 0.0 < self.delta_tot < 1.0:
            raise ValueError("delta_tot must be in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValueError("sampling_ratio must be in (0, 1]")
        if self.sensitivity <= 0:
            raise ValueError("sensitivity must be positive")


@dataclass(frozen=True)
class PerIterationBudget:
    """Per-iteration (epsilon, delta) and the Gaussian noise scale meeting it
    with equality."""

    epsilon_iter: float
    delta_iter: float
    sigma: float


def gaussian_sigma(sensitivity: float, epsilon: float, delta: float) -> float:
    """Smallest Gaussian noise standard deviation giving (epsilon, delta)-DP
    at the given L2 sensitivity: sigma = sensitivity*sqrt(2*ln(1.25/delta))/epsilon.
    """
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def gaussian_epsilon(sensitivity: float, sigma: float, delta: float) -> float:
    """Epsilon of the Gaussian mechanism at scale sigma (inverse of
    gaussian_sigma in epsilon)."""
    if sensitivity <= 0 or sigma <= 0:
        raise ValueError("sensitivity and sigma must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / sigma


def zcdp_of_gaussian(sensitivity: float, sigma: float) -> ZcdpBudget:
    """zCDP cost of one Gaussian mechanism release: rho = sensitivity^2 / (2*sigma^2)."""
    if sensitivity <= 0 or sigma <= 0:
        raise ValueError("sensitivity and sigma must be positive")
    return ZcdpBudget(sensitivity * sensitivity / (2.0 * sigma * sigma))


def compose_zcdp(budgets) -> ZcdpBudget:
    """zCDP composes additively; the empty composition costs nothing."""
    return ZcdpBudget(math.fsum(b.rho for b in budgets))


def zcdp_to_dp(rho, delta: float) -> DpBudget:
    """Convert rho-zCDP to (epsilon, delta)-DP: epsilon = rho + 2*sqrt(rho*ln(1/delta))."""
    if isinstance(rho, ZcdpBudget):
        rho = rho.rho
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return DpBudget(rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta)), delta)


def amplify(epsilon_iter: float, delta_iter: float, sampling_ratio: float) -> DpBudget:
    """Guarantee of an (epsilon_iter, delta_iter)-DP mechanism run on a
    uniform subsample with the given sampling ratio.

    epsilon' = ln(1 + ratio*(e^epsilon_iter - 1)), delta' = ratio*delta_iter.
    """
    if epsilon_iter <= 0:
        raise ValueError("epsilon_iter must be positive")
    if not 0.0 < delta_iter < 1.0:
        raise ValueError("delta_iter must be in (0, 1)")
    if not 0.0 < sampling_ratio <= 1.0:
        raise ValueError("sampling_ratio must be in (0, 1]")
    if sampling_ratio == 1.0:
        return DpBudget(epsilon_iter, delta_iter)
    if epsilon_iter < 1.0:
        eps = math.log1p(sampling_ratio * math.expm1(epsilon_iter))
    else:
        # ln(nu*e^x + 1 - nu) rewritten to survive large x.
        eps = epsilon_iter + math.log(sampling_ratio) + math.log1p(
            (1.0 - sampling_ratio) * math.exp(-epsilon_iter) / sampling_ratio
        )
    return DpBudget(eps, sampling_ratio * delta_iter)


def invert_amplify(
    epsilon_prime: float, delta_prime: float, sampling_ratio: float
) -> tuple[float, float]:
    """Per-iteration budget whose subsampled guarantee is (epsilon', delta').

    epsilon_iter = ln(1 + (e^epsilon' - 1)/ratio), delta_iter = delta'/ratio.
    Exact inverse of amplify.
    """
    if epsilon_prime <= 0:
        raise ValueError("epsilon_prime must be positive")
    if not 0.0 < delta_prime < 1.0:
        raise ValueError("delta_prime must be in (0, 1)")
    if not 0.0 < sampling_ratio <= 1.0:
        raise ValueError("sampling_ratio must be in (0, 1]")
    delta_iter = delta_prime / sampling_ratio
    if delta_iter >= 1.0:
        raise BudgetInfeasibleError(
            "tolerance not amplifiable: delta'/sampling_ratio = "
            f"{delta_iter:.6g} >= 1"
        )
    if sampling_ratio == 1.0:
        return epsilon_prime, delta_prime
    if epsilon_prime < 1.0:
        eps = math.log1p(math.expm1(epsilon_prime) / sampling_ratio)
    else:
        eps = epsilon_prime - math.log(sampling_ratio) + math.log1p(
            (sampling_ratio - 1.0) * math.exp(-epsilon_prime)
        )
    return eps, delta_iter


def zcdp_total_rho(epsilon_tot: float, delta_tot: float) -> float:
    """rho solving epsilon_tot = rho + 2*sqrt(rho*ln(1/delta_tot)).

    Quadratic in sqrt(rho); the positive root is written in a
    cancellation-free form.
    """
    if epsilon_tot <= 0:
        raise ValueError("epsilon_tot must be positive")
    if not 0.0 < delta_tot < 1.0:
        raise ValueError("delta_tot must be in (0, 1)")
    log_term = math.log(1.0 / delta_tot)
    root = epsilon_tot / (math.sqrt(log_term + epsilon_tot) + math.sqrt(log_term))
    return root * root


def _advanced_epsilon_prime(epsilon_tot: float, delta_dd: float, iterations: int) -> float:
    """Per-iteration epsilon' under advanced composition with slack delta''.

    Root of J*e*(exp(e)-1) + sqrt(2*J*ln(1/delta''))*e = epsilon_tot, which is
    monotone in e, so the bracket [0, epsilon_tot/sqrt(2*J*ln(1/delta''))] is
    valid.
    """
    scale = math.sqrt(2.0 * iterations * math.log(1.0 / delta_dd))

    def overshoot(eps):
        return iterations * eps * math.expm1(eps) + scale * eps - epsilon_tot

    return brentq(overshoot, 0.0, epsilon_tot / scale, xtol=1e-18, rtol=8.9e-16)


def solve_budget(spec: BudgetSpec) -> PerIterationBudget:
    """Map a total budget to the per-iteration budget and noise scale.

    The composition method fixes the intermediate per-iteration guarantee
    (epsilon', delta') before subsampling:

    * zcdp: solve the total rho, spread the implied noise variance over the
      iterations, and read epsilon' off the variance constraint at equality
      with delta' = delta_tot.
    * linear: (epsilon', delta') = (epsilon_tot/J, delta_tot/J).
    * advanced: delta'' = delta_tot/2, delta' = delta_tot/(2J); epsilon' from
      the slack-variable total at equality.

    invert_amplify then yields (epsilon_iter, delta_iter) and the Gaussian
    scale follows from gaussian_sigma at equality.
    """
    if spec.method == CompositionMethod.NONE:
        raise ValueError("composition method 'none' has no per-iteration budget")
    iterations = spec.iterations
    if spec.method == CompositionMethod.ZCDP:
        rho_tot = zcdp_total_rho(spec.epsilon_tot, spec.delta_tot)
        tau = iterations * spec.sensitivity**2 / (2.0 * rho_tot)
        delta_prime = spec.delta_tot
        epsilon_prime = spec.sensitivity * math.sqrt(
            2.0 * math.log(1.25 / delta_prime) / tau
        )
    elif spec.method == CompositionMethod.LINEAR:
        epsilon_prime = spec.epsilon_tot / iterations
        delta_prime = spec.delta_tot / iterations
    elif spec.method == CompositionMethod.ADVANCED:
        delta_prime = spec.delta_tot / (2.0 * iterations)
        epsilon_prime = _advanced_epsilon_prime(
            spec.epsilon_tot, spec.delta_tot / 2.0, iterations
        )
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown composition method {spec.method!r}")

    epsilon_iter, delta_iter = invert_amplify(
        epsilon_prime, delta_prime, spec.sampling_ratio
    )
    sigma = gaussian_sigma(spec.sensitivity, epsilon_iter, delta_iter)
    return PerIterationBudget(epsilon_iter, delta_iter, sigma)


@dataclass(frozen=True)
class IterationSpend:
    """Privacy cost of one iteration after subsampling amplification."""

    iteration: int
    epsilon_prime: float
    delta_prime: float
    rho: float


@dataclass
class AccountantLedger:
    """Append-only record of per-iteration spend with running totals.

    Totals compose under the ledger's method: additive rho for zcdp
    (converted at ``delta_tot``), plain sums for linear, and the
    slack-variable formula for advanced.
    """

    method: CompositionMethod
    delta_tot: float
    records: list[IterationSpend] = field(default_factory=list, init=False)
    _rho_sum: float = field(default=0.0, init=False, repr=False)
    _eps_prime_sum: float = field(default=0.0, init=False, repr=False)
    _delta_prime_sum: float = field(default=0.0, init=False, repr=False)
    _adv_linear_sum: float = field(default=0.0, init=False, repr=False)  # sum eps'*(e^eps'-1)
    _adv_square_sum: float = field(default=0.0, init=False, repr=False)  # sum eps'^2

    def record_gaussian(
        self,
        iteration: int,
        sensitivity: float,
        sigma: float,
        sampling_ratio: float,
        delta_iter: float,
    ) -> IterationSpend:
        """Cost one Gaussian release on a subsample and append it.

        Only sigma/sensitivity enters, so the accounting is unit-free. The
        iteration is costed as the amplified (epsilon', delta')-DP Gaussian
        mechanism, whose zCDP price at the variance constraint held with
        equality is epsilon'^2 / (4*ln(1.25/delta')).
        """
        eps_iter = gaussian_epsilon(sensitivity, sigma, delta_iter)
        amplified = amplify(eps_iter, delta_iter, sampling_ratio)
        rho = amplified.epsilon**2 / (4.0 * math.log(1.25 / amplified.delta))
        rec = IterationSpend(iteration, amplified.epsilon, amplified.delta, rho)
        self._append(rec)
        return rec

    def record_nonprivate(self, iteration: int) -> IterationSpend:
        """Append a zero-cost record (keeps one entry per iteration)."""
        rec = IterationSpend(iteration, 0.0, 0.0, 0.0)
        self.records.append(rec)
        return rec

    def _append(self, rec: IterationSpend) -> None:
        self.records.append(rec)
        self._rho_sum += rec.rho
        self._eps_prime_sum += rec.epsilon_prime
        self._delta_prime_sum += rec.delta_prime
        self._adv_linear_sum += rec.epsilon_prime * math.expm1(rec.epsilon_prime)
        self._adv_square_sum += rec.epsilon_prime**2

    def __len__(self) -> int:
        return len(self.records)

    @property
    def rho_total(self) -> float:
        return self._rho_sum

    def total(self, delta_tot: float | None = None) -> DpBudget:
        """Forward-accounted total spend so far."""
        if delta_tot is None:
            delta_tot = self.delta_tot
        if not self.records or self.method == CompositionMethod.NONE:
            return DpBudget(0.0, 0.0)
        if self.method == CompositionMethod.ZCDP:
            return zcdp_to_dp(self._rho_sum, delta_tot)
        if self.method == CompositionMethod.LINEAR:
            return DpBudget(self._eps_prime_sum, self._delta_prime_sum)
        # Advanced: heterogeneous slack-variable bound; for identical records
        # this is exactly J*eps'*(e^eps'-1) + sqrt(2*J*ln(1/delta''))*eps'.
        delta_dd = delta_tot / 2.0
        epsilon = self._adv_linear_sum + math.sqrt(
            2.0 * math.log(1.0 / delta_dd) * self._adv_square_sum
        )
        return DpBudget(epsilon, delta_dd + self._delta_prime_sum)


def forward_account(ledger: AccountantLedger, delta_tot: float | None = None) -> DpBudget:
    """Total (epsilon, delta) actually spent by the iterations in ``ledger``,
    composed under the ledger's method and converted at ``delta_tot``."""
    return ledger.total(delta_tot)


def account_iterations(
    method: CompositionMethod,
    iterations: int,
    sensitivity: float,
    sigma: float,
    sampling_ratio: float,
    delta_iter: float,
    delta_tot: float,
) -> DpBudget:
    """Closed-form forward account of ``iterations`` identical Gaussian
    releases.

    Same totals as a ledger of identical records (multiplication replaces the
    J-fold sum), at O(1) cost, so large iteration counts stay cheap.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    if iterations == 0 or method == CompositionMethod.NONE:
        return DpBudget(0.0, 0.0)
    eps_iter = gaussian_epsilon(sensitivity, sigma, delta_iter)
    amplified = amplify(eps_iter, delta_iter, sampling_ratio)
    if method == CompositionMethod.ZCDP:
        rho_iter = amplified.epsilon**2 / (4.0 * math.log(1.25 / amplified.delta))
        return zcdp_to_dp(iterations * rho_iter, delta_tot)
    if method == CompositionMethod.LINEAR:
        return DpBudget(
            iterations * amplified.epsilon, iterations * amplified.delta
        )
    delta_dd = delta_tot / 2.0
    epsilon = iterations * amplified.epsilon * math.expm1(amplified.epsilon) + math.sqrt(
        2.0 * iterations * math.log(1.0 / delta_dd)
    ) * amplified.epsilon
    return DpBudget(epsilon, delta_dd + iterations * amplified.delta)
