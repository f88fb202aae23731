"""Closed-form MLE fits for path durations, AIC model selection and binning."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MODELS = ("exponential", "normal", "lognormal")
N_PARAMS = {"exponential": 1, "normal": 2, "lognormal": 2}


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    std_errors: dict
    loglik: float
    aic: float
    n: int

    @property
    def k(self) -> int:
        return N_PARAMS[self.model]

    def cdf(self, x):
        x = np.asarray(x, float)
        if self.model == "exponential":
            return np.where(x > 0, -np.expm1(-self.params["rate"] * np.maximum(x, 0)), 0.0)
        if self.model == "normal":
            z = (x - self.params["mu"]) / (self.params["sigma"] * math.sqrt(2))
            return 0.5 * (1 + _erf(z))
        if self.model == "lognormal":
            with np.errstate(divide="ignore"):
                z = (np.log(np.maximum(x, 0)) - self.params["mu"]) / (self.params["sigma"] * math.sqrt(2))
            return np.where(x > 0, 0.5 * (1 + _erf(z)), 0.0)
        raise FitError(f"unknown model {self.model!r}")

    def quantile(self, q: float) -> float:
        if self.model == "exponential":
            return -math.log1p(-q) / self.params["rate"]
        lo, hi = 0.0, 1.0
        while self.cdf(hi) < q:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) < q:
                lo = mid
            else:
                hi = mid
        return hi

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "std_errors": self.std_errors,
            "loglik": self.loglik,
            "aic": self.aic,
            "n": self.n,
        }


_erf = np.vectorize(math.erf, otypes=[float])


def _prepare(samples, positive: bool) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise FitError("insufficient data: need at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise FitError("samples must be finite")
    if positive and np.any(x <= 0):
        raise FitError("samples must be strictly positive")
    return x


def _result(model, params, ses, loglik, n) -> FitResult:
    return FitResult(model, params, ses, float(loglik), 2 * N_PARAMS[model] - 2 * float(loglik), n)


def fit_exponential_mle(samples) -> FitResult:
    x = _prepare(samples, positive=True)
    n = x.size
    total = x.sum()
    rate = n / total
    loglik = n * math.log(rate) - rate * total
    return _result("exponential", {"rate": float(rate)}, {"rate": float(rate / math.sqrt(n))}, loglik, n)


def _gaussian(x: np.ndarray):
    n = x.size
    mu = x.mean()
    var = np.mean((x - mu) ** 2)
    if var <= 0 or not np.isfinite(var):
        raise FitError("degenerate sample: zero variance")
    sigma = math.sqrt(var)
    loglik = -0.5 * n * (math.log(2 * math.pi * var) + 1)
    return mu, sigma, loglik, {"mu": sigma / math.sqrt(n), "sigma": sigma / math.sqrt(2 * n)}


def fit_normal_mle(samples) -> FitResult:
    x = _prepare(samples, positive=False)
    mu, sigma, loglik, ses = _gaussian(x)
    return _result("normal", {"mu": float(mu), "sigma": sigma}, ses, loglik, x.size)


def fit_lognormal_mle(samples) -> FitResult:
    x = _prepare(samples, positive=True)
    logs = np.log(x)
    mu, sigma, loglik, ses = _gaussian(logs)
    # change of variables: density in x picks up 1/x
    loglik -= logs.sum()
    return _result("lognormal", {"mu": float(mu), "sigma": sigma}, ses, loglik, x.size)


FITTERS = {"exponential": fit_exponential_mle, "normal": fit_normal_mle, "lognormal": fit_lognormal_mle}


def fit_all(samples) -> list[FitResult]:
    out = []
    for name in MODELS:
        try:
            out.append(FITTERS[name](samples))
        except FitError:
            continue
    return out


def select_best(samples) -> FitResult:
    """Minimum-AIC fit; ties prefer fewer parameters, then the order of ``MODELS``."""
    fits = fit_all(samples)
    if not fits:
        raise FitError("no candidate distribution could be fitted")
    return min(fits, key=lambda f: (f.aic, f.k, MODELS.index(f.model)))


def exponential_cap(fit: FitResult, quantile: float = 0.995) -> float:
    return fit.quantile(quantile)


def discretize_duration(fit: FitResult, num_bins: int, d_cap: float) -> np.ndarray:
    """Equal-width bins on ``[0, d_cap]``; mass outside is folded into the end bins."""
    if num_bins < 2:
        raise FitError("num_bins must be >= 2")
    if not d_cap > 0 or not math.isfinite(d_cap):
        raise FitError("d_cap must be positive and finite")
    if fit.model not in MODELS:
        raise FitError(f"unknown model {fit.model!r}")
    edges = np.linspace(0.0, d_cap, num_bins + 1)
    cdf = fit.cdf(edges)
    mass = np.diff(cdf)
    mass[0] += cdf[0]
    mass[-1] += 1.0 - cdf[-1]
    mass = np.maximum(mass, 0.0)
    if not np.isfinite(mass).all() or mass.sum() <= 0:
        raise FitError("fit produced an invalid distribution")
    return mass / mass.sum()
