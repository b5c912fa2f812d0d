"""Decomposition checks on linear-Gaussian models, where every term is closed form.

The model pairs two joints over (x, z)::

    p(z) = N(0, I)         p(x|z) = N(A z + b, sigma^2 I)
    q(x) = N(m, diag(S))   q(z|x) = N(C x + d, tau^2 I)

Joint vectors are ordered ``[x, z]``.  Full-covariance algebra lives here
because marginals and reverse conditionals of these joints are not diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

LOG_2PI = math.log(2.0 * math.pi)

# kl-split-x:  KL(q||p) = E_q(x) KL(q(z|x)||p(z|x)) + KL(q(x)||p(x))
# kl-split-z:  KL(q||p) = E_q(z) KL(q(x|z)||p(x|z)) + KL(q(z)||p(z))
# skl-split-z: KLs = E_p(z) KL(p(x|z)||q(x|z)) + E_q(z) KL(q(x|z)||p(x|z)) + KLs(p(z), q(z))
# skl-split-x: the same with the roles of x and z exchanged
IDENTITIES = ("kl-split-x", "kl-split-z", "skl-split-z", "skl-split-x")


class DegenerateModelError(ValueError):
    pass


# ------------------------------------------------------------ Gaussian algebra


def mvn_kl(mu0, cov0, mu1, cov1) -> float:
    """KL(N(mu0, cov0) || N(mu1, cov1)) for full covariances."""
    mu0, mu1 = np.asarray(mu0, float), np.asarray(mu1, float)
    cov0, cov1 = np.atleast_2d(cov0), np.atleast_2d(cov1)
    k = len(mu0)
    c1 = np.linalg.cholesky(cov1)
    c0 = np.linalg.cholesky(cov0)
    a = np.linalg.solve(c1, c0)
    diff = np.linalg.solve(c1, mu1 - mu0)
    logdet = 2.0 * (np.sum(np.log(np.diag(c1))) - np.sum(np.log(np.diag(c0))))
    return 0.5 * (np.sum(a * a) + diff @ diff - k + logdet)


def mvn_kl_batch(mu0: np.ndarray, cov0, mu1: np.ndarray, cov1) -> np.ndarray:
    """Row-wise KL between Gaussians whose covariances are shared across rows."""
    cov0, cov1 = np.atleast_2d(cov0), np.atleast_2d(cov1)
    k = cov0.shape[0]
    c1 = np.linalg.cholesky(cov1)
    c0 = np.linalg.cholesky(cov0)
    a = np.linalg.solve(c1, c0)
    logdet = 2.0 * (np.sum(np.log(np.diag(c1))) - np.sum(np.log(np.diag(c0))))
    const = 0.5 * (np.sum(a * a) - k + logdet)
    diff = np.linalg.solve(c1, (np.atleast_2d(mu1) - np.atleast_2d(mu0)).T)
    return const + 0.5 * np.sum(diff * diff, axis=0)


def mvn_log_pdf(x: np.ndarray, mean, cov) -> np.ndarray:
    x = np.atleast_2d(x)
    chol = np.linalg.cholesky(np.atleast_2d(cov))
    sol = np.linalg.solve(chol, (x - mean).T)
    return -0.5 * (np.sum(sol * sol, axis=0) + len(mean) * LOG_2PI) - np.sum(np.log(np.diag(chol)))


@dataclass(frozen=True)
class LinearConditional:
    """N(M u + c, cov) as a function of the conditioning value u."""

    M: np.ndarray
    c: np.ndarray
    cov: np.ndarray

    def mean(self, u: np.ndarray) -> np.ndarray:
        return np.atleast_2d(u) @ self.M.T + self.c


def condition(mean: np.ndarray, cov: np.ndarray, given: slice, target: slice) -> LinearConditional:
    """Conditional of ``target`` coordinates given ``given`` coordinates of a joint Gaussian."""
    s_tg = cov[target, given]
    s_gg = cov[given, given]
    gain = np.linalg.solve(s_gg, s_tg.T).T
    return LinearConditional(gain, mean[target] - gain @ mean[given], cov[target, target] - gain @ s_tg.T)


def symmetric_kl(mu0, cov0, mu1, cov1) -> float:
    return mvn_kl(mu0, cov0, mu1, cov1) + mvn_kl(mu1, cov1, mu0, cov0)


# --------------------------------------------------------------------- model


@dataclass(frozen=True)
class LinearGaussianSpec:
    A: np.ndarray
    b: np.ndarray
    sigma: float
    C: np.ndarray
    d: np.ndarray
    tau: float
    m: np.ndarray
    S: np.ndarray
    dx: int = field(init=False)
    dz: int = field(init=False)

    def __post_init__(self):
        conv = {k: np.atleast_1d(np.asarray(getattr(self, k), dtype=np.float64)) for k in ("b", "d", "m", "S")}
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        dx, dz = A.shape
        if C.shape != (dz, dx) or conv["b"].shape != (dx,) or conv["d"].shape != (dz,) \
                or conv["m"].shape != (dx,) or conv["S"].shape != (dx,):
            raise DegenerateModelError(
                f"non-conforming shapes: A {A.shape}, C {C.shape}, b {conv['b'].shape}, d {conv['d'].shape}, "
                f"m {conv['m'].shape}, S {conv['S'].shape}")
        if not (self.sigma > 0 and self.tau > 0 and np.all(conv["S"] > 0)):
            raise DegenerateModelError("sigma, tau and S must be strictly positive")
        for k, v in conv.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dz", dz)

    @classmethod
    def random(cls, rng: np.random.Generator, dx: int = 2, dz: int = 2, scale: float = 0.8) -> "LinearGaussianSpec":
        return cls(A=scale * rng.standard_normal((dx, dz)), b=0.5 * rng.standard_normal(dx),
                   sigma=rng.uniform(0.5, 1.5), C=scale * rng.standard_normal((dz, dx)),
                   d=0.5 * rng.standard_normal(dz), tau=rng.uniform(0.5, 1.5),
                   m=0.5 * rng.standard_normal(dx), S=rng.uniform(0.5, 2.0, size=dx))

    @classmethod
    def matched(cls, dx: int = 2, dz: int = 2) -> "LinearGaussianSpec":
        """Both joints equal N(0, I): A = C = 0, unit noise, standard data marginal."""
        return cls(np.zeros((dx, dz)), np.zeros(dx), 1.0, np.zeros((dz, dx)), np.zeros(dz), 1.0,
                   np.zeros(dx), np.ones(dx))

    @property
    def xs(self) -> slice:
        return slice(0, self.dx)

    @property
    def zs(self) -> slice:
        return slice(self.dx, self.dx + self.dz)

    def joint_p(self) -> tuple[np.ndarray, np.ndarray]:
        A = self.A
        cov = np.block([[A @ A.T + self.sigma ** 2 * np.eye(self.dx), A],
                        [A.T, np.eye(self.dz)]])
        return np.concatenate([self.b, np.zeros(self.dz)]), cov

    def joint_q(self) -> tuple[np.ndarray, np.ndarray]:
        S, C = np.diag(self.S), self.C
        cov = np.block([[S, S @ C.T],
                        [C @ S, C @ S @ C.T + self.tau ** 2 * np.eye(self.dz)]])
        return np.concatenate([self.m, C @ self.m + self.d]), cov

    def check_nondegenerate(self) -> None:
        for name, (_, cov) in (("p", self.joint_p()), ("q", self.joint_q())):
            if np.min(np.linalg.eigvalsh(cov)) <= 1e-10:
                raise DegenerateModelError(f"joint {name} covariance is singular")

    def marginal(self, joint: str, part: str) -> tuple[np.ndarray, np.ndarray]:
        mean, cov = self.joint_p() if joint == "p" else self.joint_q()
        s = self.xs if part == "x" else self.zs
        return mean[s], cov[s, s]

    def conditional(self, joint: str, target: str) -> LinearConditional:
        mean, cov = self.joint_p() if joint == "p" else self.joint_q()
        if target == "x":
            return condition(mean, cov, self.zs, self.xs)
        return condition(mean, cov, self.xs, self.zs)

    # samplers over the factorizations that define each joint
    def sample_p(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        z = rng.standard_normal((n, self.dz))
        x = z @ self.A.T + self.b + self.sigma * rng.standard_normal((n, self.dx))
        return x, z

    def sample_q(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        x = self.m + np.sqrt(self.S) * rng.standard_normal((n, self.dx))
        z = x @ self.C.T + self.d + self.tau * rng.standard_normal((n, self.dz))
        return x, z

    def joint_kl_qp(self) -> float:
        return mvn_kl(*self.joint_q(), *self.joint_p())

    def joint_kl_pq(self) -> float:
        return mvn_kl(*self.joint_p(), *self.joint_q())

    def joint_symmetric_kl(self) -> float:
        return symmetric_kl(*self.joint_q(), *self.joint_p())


def _mc(values: np.ndarray) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(len(values)))


def _expected_conditional_kl(model: LinearGaussianSpec, outer: str, given: str, n: int,
                             rng: np.random.Generator) -> tuple[float, float]:
    """E over ``given`` ~ marginal of joint ``outer`` of KL(outer's conditional || other's conditional)."""
    other = "q" if outer == "p" else "p"
    target = "z" if given == "x" else "x"
    mean, cov = model.marginal(outer, given)
    u = rng.multivariate_normal(mean, cov, size=n)
    c_self = model.conditional(outer, target)
    c_other = model.conditional(other, target)
    return _mc(mvn_kl_batch(c_self.mean(u), c_self.cov, c_other.mean(u), c_other.cov))


@dataclass
class DecompositionReport:
    identity: str
    lhs: float
    rhs_terms: dict[str, float]
    rhs_sum: float
    standard_error: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs_sum)

    def passed(self, n_se: float = 3.0) -> bool:
        return self.gap < n_se * self.standard_error

    def to_record(self) -> dict:
        return {"identity": self.identity, "lhs": self.lhs, "rhs_sum": self.rhs_sum,
                "standard_error": self.standard_error, "gap": self.gap, "rhs_terms": dict(self.rhs_terms)}


def evaluate_decomposition(model: LinearGaussianSpec, identity: str, n_samples: int = 100_000,
                           rng: np.random.Generator | int | None = None) -> DecompositionReport:
    """Compare a closed-form joint divergence with its chain-rule decomposition.

    Conditional KL terms are closed form per sampled conditioning point and
    averaged; marginal KL terms are exact.  ``standard_error`` is the
    combined Monte Carlo error of the averaged terms.
    """
    if identity not in IDENTITIES:
        raise ValueError(f"identity must be one of {IDENTITIES}, got {identity!r}")
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    model.check_nondegenerate()
    rng = np.random.default_rng(rng)
    terms: dict[str, float] = {}
    errors: list[float] = []

    def add_mc(name, outer, given):
        mean, se = _expected_conditional_kl(model, outer, given, n_samples, rng)
        terms[name] = mean
        errors.append(se)

    if identity == "kl-split-x":
        lhs = model.joint_kl_qp()
        add_mc("E_q(x) KL(q(z|x)||p(z|x))", "q", "x")
        terms["KL(q(x)||p(x))"] = mvn_kl(*model.marginal("q", "x"), *model.marginal("p", "x"))
    elif identity == "kl-split-z":
        lhs = model.joint_kl_qp()
        add_mc("E_q(z) KL(q(x|z)||p(x|z))", "q", "z")
        terms["KL(q(z)||p(z))"] = mvn_kl(*model.marginal("q", "z"), *model.marginal("p", "z"))
    elif identity == "skl-split-z":
        lhs = model.joint_symmetric_kl()
        add_mc("E_p(z) KL(p(x|z)||q(x|z))", "p", "z")
        add_mc("E_q(z) KL(q(x|z)||p(x|z))", "q", "z")
        terms["KLs(p(z)||q(z))"] = symmetric_kl(*model.marginal("p", "z"), *model.marginal("q", "z"))
    else:
        lhs = model.joint_symmetric_kl()
        add_mc("E_p(x) KL(p(z|x)||q(z|x))", "p", "x")
        add_mc("E_q(x) KL(q(z|x)||p(z|x))", "q", "x")
        terms["KLs(p(x)||q(x))"] = symmetric_kl(*model.marginal("p", "x"), *model.marginal("q", "x"))
    se = math.sqrt(sum(e * e for e in errors))
    return DecompositionReport(identity, lhs, terms, sum(terms.values()), se)


# ------------------------------------------------------------ support proxy


def support_coverage_report(samples_a, samples_b, radius: float) -> dict[str, float]:
    """Fraction of each set lying within ``radius`` of some point of the other.

    A high ``fraction_a_covered`` with a low ``fraction_b_covered`` says the
    support of a sits inside the support of b, not the reverse.
    """
    a = np.atleast_2d(np.asarray(samples_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(samples_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("support_coverage_report needs two nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    dist_a, _ = cKDTree(b).query(a, k=1)
    dist_b, _ = cKDTree(a).query(b, k=1)
    return {"fraction_a_covered": float(np.mean(dist_a <= radius)),
            "fraction_b_covered": float(np.mean(dist_b <= radius))}
