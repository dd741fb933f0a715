"""Best linear prediction of subject curves from sparse observations.

Under a working Gaussian model the subject's latent curve and its noisy
observations are jointly Gaussian with covariances given by the fitted
model, so the conditional mean and covariance are available in closed
form. Predictions borrow strength across responses through the
cross-covariance blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import norm

from .errors import FuncovError
from .fpca import CovarianceModel, EigenSystem, stack_blocks
from .splines import eval_basis_matrix

# Relative jitter used once if the observation covariance is numerically
# singular.
V_JITTER = 1e-10


@dataclass
class PredictionResult:
    """Predicted curves for one subject on a common time grid.

    Attributes
    ----------
    times : ndarray, shape (m,)
        Prediction grid, shared by all responses.
    xhat : ndarray, shape (p, m)
        Predicted curves.
    cov : ndarray, shape (pm, pm)
        Conditional covariance, rows ordered response-major.
    lower, upper : ndarray, shape (p, m)
        Pointwise prediction band.
    scores : ndarray, shape (L,)
        Estimated component scores.
    jitter : float
        Diagonal jitter added to the observation covariance (0.0 when
        none was needed).
    """

    times: np.ndarray
    xhat: np.ndarray
    cov: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    scores: np.ndarray
    jitter: float


def _normal_quantile(level: float) -> float:
    # 1.96 is used verbatim for the conventional 95% band.
    if level == 0.95:
        return 1.96
    return float(norm.ppf(0.5 + level / 2.0))


def predict_subject(
    model: CovarianceModel,
    eig: EigenSystem,
    obs_times,
    obs_values,
    new_times,
    npc: int | None = None,
    level: float = 0.95,
) -> PredictionResult:
    """Predict one subject's p curves at common new times.

    Parameters
    ----------
    model : CovarianceModel
        A refined (PSD) model is expected; any model works numerically.
    eig : EigenSystem
        Eigendecomposition of the same model, used for the scores.
    obs_times, obs_values : sequences of ndarray, length p
        The subject's observed times and values per response; empty
        arrays mark unobserved responses. A subject observed in no
        response gets the population mean and prior covariance.
    new_times : array_like
        Grid to predict on, shared across responses.
    npc : int, optional
        Number of component scores to return; defaults to the
        explained-variance choice stored in ``eig``.
    level : float
        Band coverage level in (0, 1).

    Returns
    -------
    PredictionResult
    """
    p, c = model.p, model.ws.c
    if len(obs_times) != p or len(obs_values) != p:
        raise FuncovError(f"expected {p} per-response observation arrays")
    if not 0.0 < level < 1.0:
        raise FuncovError(f"band level must lie in (0, 1), got {level}")
    new_times = np.atleast_1d(np.asarray(new_times, dtype=float))
    m_new = new_times.size
    Theta = stack_blocks(model)

    obs_times = [np.asarray(t, dtype=float).ravel() for t in obs_times]
    obs_values = [np.asarray(v, dtype=float).ravel() for v in obs_values]
    counts = [t.size for t in obs_times]
    m_obs = int(sum(counts))

    # block-diagonal observed design and stacked centered observations
    Bo = np.zeros((m_obs, p * c))
    resid = np.zeros(m_obs)
    noise = np.zeros(m_obs)
    row = 0
    for k in range(p):
        t, v = obs_times[k], obs_values[k]
        if t.size != v.size:
            raise FuncovError(f"times/values mismatch in response {k}")
        if t.size == 0:
            continue
        Bo[row : row + t.size, k * c : (k + 1) * c] = eval_basis_matrix(model.ws, t)
        resid[row : row + t.size] = v - model.means[k](t)
        noise[row : row + t.size] = model.sigma2[k]
        row += t.size

    Bn_small = eval_basis_matrix(model.ws, new_times)
    Bn = np.kron(np.eye(p), Bn_small)
    prior = Bn @ Theta @ Bn.T
    mu_new = np.concatenate([model.means[k](new_times) for k in range(p)])

    L = eig.npc if npc is None else int(npc)
    if not 0 <= L <= eig.d.size:
        raise FuncovError(f"score count {L} out of range")

    if m_obs == 0:
        xhat_flat = mu_new
        cov = 0.5 * (prior + prior.T)
        scores = np.zeros(L)
        jitter = 0.0
    else:
        cross = Bn @ Theta @ Bo.T
        V = Bo @ Theta @ Bo.T + np.diag(noise)
        jitter = 0.0
        try:
            cf = cho_factor(V)
        except (LinAlgError, np.linalg.LinAlgError):
            jitter = V_JITTER * float(np.trace(V)) / V.shape[0]
            try:
                cf = cho_factor(V + jitter * np.eye(V.shape[0]))
            except (LinAlgError, np.linalg.LinAlgError):
                raise FuncovError(
                    "observation covariance is singular even after jitter"
                ) from None
        w = cho_solve(cf, resid)
        xhat_flat = cross @ w + mu_new
        cov = prior - cross @ cho_solve(cf, cross.T)
        cov = 0.5 * (cov + cov.T)
        Gh_stack = np.kron(np.eye(p), model.ws.G_half)
        proj = Gh_stack @ Theta @ Bo.T @ w
        scores = eig.U[:, :L].T @ proj

    z = _normal_quantile(level)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    xhat = xhat_flat.reshape(p, m_new)
    half = (z * se).reshape(p, m_new)
    return PredictionResult(
        times=new_times,
        xhat=xhat,
        cov=cov,
        lower=xhat - half,
        upper=xhat + half,
        scores=scores,
        jitter=jitter,
    )
