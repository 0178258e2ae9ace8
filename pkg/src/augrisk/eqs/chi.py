"""Finite-p trace and Frobenius limit terms of the deterministic objective.

All nine terms are built from resolvents (s lambda / n Sigma^+ + I)^+ of the
augmented covariance, evaluated in its eigenbasis.  The first and second
families normalize by m (the original-sample count); the third member of
each family, which contracts against the rank-one projection, carries no
normalization.

The resolvent parameter is s lambda / n with n = m k.  The ridge term of the
estimator objective is lambda/(2n) ||beta||^2, and carrying that through the
quadratic completion yields s lambda / n inside the resolvents; at k = 1
this is indistinguishable from the s lambda / m normalization that parts of
the derivation display, and the isotropic closed forms below agree with the
known unaugmented system either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..covmodel import CovarianceModel
from ..linalg import eigh_clamped, psd_pinv_sqrt, psd_sqrt, range_projection, sym

FD_STEP = 1e-5


@dataclass(frozen=True)
class LimitTerms:
    """Snapshot of the nine limit terms at one (s1, s2) pair."""

    kappa_bar_star: float
    kappa_bar_o: float
    chi11: float
    chi12: float
    chi13: float
    chi21: float
    chi22: float
    chi23: float
    chi31: float
    chi32: float
    chi33: float
    norm_sigma_new_beta_star: float
    s1t1: float
    s2t2: float


class ChiTerms:
    """Evaluator for the limit terms of one covariance model.

    chi1j(s) are traces of resolvent-weighted projections, chi2j(s) squared
    Frobenius norms weighted by the test covariance, chi3j(s1, s2) the same
    with the mixed-penalty square root in front.
    """

    def __init__(self, model: CovarianceModel, sigma_new: np.ndarray,
                 lam: float, m: float, k: int = 1):
        if lam <= 0 or m <= 0:
            raise ValueError("lambda and m must be positive")
        self.model = model
        self.lam = float(lam)
        self.m = float(m)
        self.k = int(k)
        self.n = self.m * self.k
        self.sigma_new = np.asarray(sigma_new, dtype=float)

        p = model.dims.p
        vals, vecs = eigh_clamped(model.sigma)
        self._evals = vals
        self._q = vecs
        self._a = (model.p_sigma - model.sigma_star,
                   model.sigma_star,
                   model.p_star)
        self._diag = [np.diag(vecs.T @ a @ vecs).copy() for a in self._a]
        w = psd_pinv_sqrt(model.sigma)
        wtw = w @ self.sigma_new @ w
        g = vecs.T @ wtw @ vecs
        self._m_fro = []
        for a in self._a:
            qa = vecs.T @ a
            h = qa @ qa.T
            self._m_fro.append(g * h.T)

        self.kappa_bar_star = model.kappa_star
        self.kappa_bar_o = model.kappa_o
        root_new = psd_sqrt(self.sigma_new)
        self.norm_sigma_new_beta_star = float(np.linalg.norm(root_new @ model.beta_star))

    def _f(self, s: float) -> np.ndarray:
        """Resolvent eigenvalues: 1/(1 + s lambda / (n w_i)) on the range."""
        w = self._evals
        out = np.ones_like(w)
        pos = w > 0
        out[pos] = 1.0 / (1.0 + s * self.lam / (self.n * w[pos]))
        return out

    def _chi1(self, j: int, s: float) -> float:
        val = float(self._f(s) @ self._diag[j])
        return val / self.m if j < 2 else val

    def _chi2(self, j: int, s: float) -> float:
        f = self._f(s)
        val = float(f @ self._m_fro[j] @ f)
        return val / self.m if j < 2 else val

    def chi11(self, s): return self._chi1(0, s)
    def chi12(self, s): return self._chi1(1, s)
    def chi13(self, s): return self._chi1(2, s)
    def chi21(self, s): return self._chi2(0, s)
    def chi22(self, s): return self._chi2(1, s)
    def chi23(self, s): return self._chi2(2, s)

    def chi3(self, j: int, s1: float, s2: float) -> float:
        model = self.model
        s1 = max(s1, 1e-12)
        s2 = max(s2, 1e-12)
        btilde = (self.lam / (2.0 * self.n)) * np.linalg.pinv(model.sigma, hermitian=True) \
            + 0.5 / s1 * self._a[0] + 0.5 / s2 * self._a[1]
        root_b = psd_sqrt(sym(btilde))
        p_new = range_projection(self.sigma_new)
        w = psd_pinv_sqrt(model.sigma)
        s_of_j = s1 if j == 0 else s2
        f = self._f(s_of_j)
        resolvent = (self._q * f) @ self._q.T
        mat = root_b @ psd_sqrt(model.sigma) @ p_new @ w @ resolvent @ self._a[j]
        val = float(np.sum(mat * mat))
        return val / self.m if j < 2 else val

    def _chi1_ds(self, j: int, s: float) -> float:
        h = FD_STEP * max(1.0, abs(s))
        return (self._chi1(j, s + h) - self._chi1(j, s - h)) / (2.0 * h)

    # -- assembled objective pieces ------------------------------------

    def chi1_bar(self, state) -> float:
        s1 = state.sigma1 * state.tau1
        s2 = state.sigma2 * state.tau2
        ks2 = self.kappa_bar_star**2
        return ((state.r1 + state.r2)**2 * s1 / (2.0 * self.k) * self.chi11(s1)
                + state.r2**2 * s2 / 2.0 * self.chi12(s2)
                + state.theta**2 * ks2 * s2 / 2.0 * self.chi13(s2))

    def chi2_bar(self, state) -> float:
        s1 = state.sigma1 * state.tau1
        s2 = state.sigma2 * state.tau2
        ks2 = self.kappa_bar_star**2
        return ((state.r1 + state.r2)**2 * s1**2 / self.k * self.chi21(s1)
                + state.r2**2 * s2**2 * self.chi22(s2)
                + state.theta**2 * ks2 * s2**2 * self.chi23(s2))

    def chi3_bar(self, state) -> float:
        s1 = state.sigma1 * state.tau1
        s2 = state.sigma2 * state.tau2
        ks2 = self.kappa_bar_star**2
        return ((state.r1 + state.r2)**2 * s1**2 / self.k * self.chi3(0, s1, s2)
                + state.r2**2 * s2**2 * self.chi3(1, s1, s2)
                + state.theta**2 * ks2 * s2**2 * self.chi3(2, s1, s2))

    def chi1_partials(self, state) -> dict:
        """d chi1_bar / d(each variable), via the product structure.

        The scalar maps s -> chi1j(s) are differentiated by central finite
        differences; everything else is analytic.
        """
        s1 = state.sigma1 * state.tau1
        s2 = state.sigma2 * state.tau2
        ks2 = self.kappa_bar_star**2
        c11, c12, c13 = self.chi11(s1), self.chi12(s2), self.chi13(s2)
        d11, d12, d13 = self._chi1_ds(0, s1), self._chi1_ds(1, s2), self._chi1_ds(2, s2)
        rsum = state.r1 + state.r2
        bracket1 = c11 + s1 * d11
        bracket2 = (state.r2**2 * (c12 + s2 * d12)
                    + state.theta**2 * ks2 * (c13 + s2 * d13))
        return {
            "sigma1": rsum**2 * state.tau1 / (2.0 * self.k) * bracket1,
            "tau1": rsum**2 * state.sigma1 / (2.0 * self.k) * bracket1,
            "sigma2": state.tau2 / 2.0 * bracket2,
            "tau2": state.sigma2 / 2.0 * bracket2,
            "r1": rsum * s1 / self.k * c11,
            "r2": rsum * s1 / self.k * c11 + state.r2 * s2 * c12,
            "theta": state.theta * ks2 * s2 * c13,
        }

    def snapshot(self, s1t1: float, s2t2: float) -> LimitTerms:
        return LimitTerms(
            kappa_bar_star=self.kappa_bar_star, kappa_bar_o=self.kappa_bar_o,
            chi11=self.chi11(s1t1), chi12=self.chi12(s2t2), chi13=self.chi13(s2t2),
            chi21=self.chi21(s1t1), chi22=self.chi22(s2t2), chi23=self.chi23(s2t2),
            chi31=self.chi3(0, s1t1, s2t2), chi32=self.chi3(1, s1t1, s2t2),
            chi33=self.chi3(2, s1t1, s2t2),
            norm_sigma_new_beta_star=self.norm_sigma_new_beta_star,
            s1t1=s1t1, s2t2=s2t2)


def chi_terms(model: CovarianceModel, sigma_new: np.ndarray, s1t1: float,
              s2t2: float, lam: float, m: float, k: int = 1) -> LimitTerms:
    """Snapshot of the nine limit terms at the given (s1, s2)."""
    return ChiTerms(model, sigma_new, lam, m, k=k).snapshot(s1t1, s2t2)
