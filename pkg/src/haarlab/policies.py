"""Stochastic policy heads over tanh MLPs.

GaussianPolicy: diagonal Gaussian with a state-independent log-std
vector, used for primitive (continuous) actions. CategoricalPolicy:
softmax over skill indices. Both expose exactly what the trust-region
optimizer needs: sampling, log densities, weighted log-prob gradients,
closed-form KL against cached old distributions, and Fisher-vector
products (Gauss-Newton form, exact for the KL Hessian at the cached
parameters).

Policies optionally carry a fixed per-input scale vector applied before
the network; raw observations keep their physical units while the net
sees O(1) inputs.
"""

from __future__ import annotations

import numpy as np

from .nets import (MlpSpec, backward, forward, forward_cached, init_mlp_params,
                   rop_forward, tanh_derivs, unpack_layers)
from .params import NumericsError, ParamVector, ShapeError


def _forward_1d(layers, x: np.ndarray) -> np.ndarray:
    """Lean single-vector forward over cached layer views."""
    a = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = W @ a + b
        a = z if i == last else np.tanh(z)
    return a

LOG_2PI = float(np.log(2.0 * np.pi))

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


def one_hot(index: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v


class GaussianPolicy:
    """pi(a|x) = N(mlp(x), diag(exp(log_std))^2), log_std clamped to [-5, 2]."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator,
                 input_scale: np.ndarray | None = None, init_log_std: float = -0.5):
        self.spec = spec
        self.action_dim = spec.output_dim
        self.params = ParamVector.from_segments([
            ("mean_net", init_mlp_params(spec, rng)),
            ("log_std", np.full(spec.output_dim, init_log_std)),
        ])
        if input_scale is None:
            input_scale = np.ones(spec.input_dim)
        self.input_scale = np.asarray(input_scale, dtype=np.float64)
        if self.input_scale.shape != (spec.input_dim,):
            raise ShapeError("input_scale must match the network input dimension")
        # layer views into the parameter buffer; set_flat writes in place,
        # so these stay valid across updates
        self._rebuild_views()

    def _rebuild_views(self):
        self._layers = unpack_layers(self.spec, self.params.segment("mean_net"))
        self._log_std = self.params.segment("log_std")

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_layers")
        state.pop("_log_std")
        return state

    def __setstate__(self, state):
        # cached views alias the parameter buffer; rebuild after unpickling
        self.__dict__.update(state)
        self._rebuild_views()

    # -- parameter plumbing -------------------------------------------------

    def flat(self) -> np.ndarray:
        return self.params.values.copy()

    def set_flat(self, values: np.ndarray) -> None:
        self.params.replace_values(values)
        np.clip(self._log_std, LOG_STD_MIN, LOG_STD_MAX, out=self._log_std)

    @property
    def log_std(self) -> np.ndarray:
        return self._log_std

    def _scaled(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=np.float64) * self.input_scale

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return forward(self.spec, self.params.segment("mean_net"), self._scaled(obs))

    # -- distribution interface ---------------------------------------------

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample an action; returns (action, log_prob, mean)."""
        mu = _forward_1d(self._layers, obs * self.input_scale)
        if not np.isfinite(mu.sum()):
            raise NumericsError("policy mean is not finite")
        eps = rng.standard_normal(self.action_dim)
        action = mu + np.exp(self._log_std) * eps
        logp = (-0.5 * float(eps @ eps) - float(self._log_std.sum())
                - 0.5 * self.action_dim * LOG_2PI)
        return action, logp, mu

    def log_prob(self, obs: np.ndarray, action: np.ndarray) -> float | np.ndarray:
        """Exact log density; obs may be a single vector or a batch."""
        mu = self.mean(obs)
        log_std = self.log_std
        z = (np.asarray(action, dtype=np.float64) - mu) * np.exp(-log_std)
        quad = (z * z).sum(axis=-1)
        out = -0.5 * quad - log_std.sum() - 0.5 * self.action_dim * LOG_2PI
        return float(out) if np.ndim(out) == 0 else out

    def dist_params(self, obs: np.ndarray):
        """Cacheable distribution parameters: (means, log_std copy)."""
        return self.mean(obs), self.log_std.copy()

    def grad_logprob_weighted(self, obs: np.ndarray, actions: np.ndarray,
                              weights: np.ndarray) -> np.ndarray:
        """Gradient of mean_i(weights_i * log pi(a_i|x_i)) over all parameters."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        weights = np.asarray(weights, dtype=np.float64).ravel()
        n = obs.shape[0]
        if actions.shape[0] != n or weights.shape[0] != n or n == 0:
            raise ShapeError("batch arrays must be nonempty and aligned")
        w = self.params.segment("mean_net")
        mu, acts = forward_cached(self.spec, w, self._scaled(obs))
        log_std = self.log_std
        inv_var = np.exp(-2.0 * log_std)
        diff = actions - mu
        # d logp / d mu = (a - mu) / sigma^2
        gy = (weights[:, None] * diff * inv_var) / n
        g_net = backward(self.spec, w, acts, gy)
        # d logp / d log_std = ((a-mu)/sigma)^2 - 1
        zsq = diff * diff * inv_var
        g_log_std = (weights[:, None] * (zsq - 1.0)).sum(axis=0) / n
        return np.concatenate([g_net, g_log_std])

    def mean_kl(self, old_dist, obs: np.ndarray) -> float:
        """Mean KL(old || current) over the batch, closed form."""
        old_mu, old_log_std = old_dist
        mu = self.mean(np.atleast_2d(obs))
        log_std = self.log_std
        var = np.exp(2.0 * log_std)
        old_var = np.exp(2.0 * old_log_std)
        per_dim = (log_std - old_log_std
                   + (old_var + (old_mu - mu) ** 2) / (2.0 * var) - 0.5)
        return float(per_dim.sum(axis=-1).mean())

    def kl_grad(self, old_dist, obs: np.ndarray) -> np.ndarray:
        """Gradient of mean_kl w.r.t. the current parameters."""
        old_mu, old_log_std = old_dist
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        n = obs.shape[0]
        w = self.params.segment("mean_net")
        mu, acts = forward_cached(self.spec, w, self._scaled(obs))
        log_std = self.log_std
        inv_var = np.exp(-2.0 * log_std)
        old_var = np.exp(2.0 * old_log_std)
        gy = (mu - old_mu) * inv_var / n
        g_net = backward(self.spec, w, acts, gy)
        g_log_std = (1.0 - (old_var + (old_mu - mu) ** 2) * inv_var).sum(axis=0) / n
        return np.concatenate([g_net, g_log_std])

    def fvp_builder(self, obs: np.ndarray, damping: float):
        """Closure computing (F + damping I) v at the current parameters.

        The forward pass through the batch happens once; repeated
        applications (conjugate gradient) only pay for the directional
        passes. The parameters are snapshotted, so the closure stays
        valid if the policy is updated afterwards.
        """
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        n = obs.shape[0]
        w = self.params.segment("mean_net").copy()
        _, acts = forward_cached(self.spec, w, self._scaled(obs))
        derivs = tanh_derivs(acts)
        inv_var_n = np.exp(-2.0 * self.log_std) / n
        n_net = self.spec.n_params
        size = self.params.size
        spec = self.spec

        def apply(v: np.ndarray) -> np.ndarray:
            v = np.asarray(v, dtype=np.float64)
            if v.size != size:
                raise ShapeError("direction vector does not match parameter layout")
            r_mu = rop_forward(spec, w, v[:n_net], acts, derivs)
            g_net = backward(spec, w, acts, r_mu * inv_var_n, derivs)
            return np.concatenate([g_net, 2.0 * v[n_net:]]) + damping * v

        return apply

    def fvp(self, obs: np.ndarray, v: np.ndarray, damping: float) -> np.ndarray:
        """(F + damping I) v with F the KL Hessian at the current parameters."""
        return self.fvp_builder(obs, damping)(v)


class CategoricalPolicy:
    """pi(a|x) = softmax(mlp(x)) over n_skills discrete choices."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator,
                 input_scale: np.ndarray | None = None):
        self.spec = spec
        self.n_skills = spec.output_dim
        self.params = ParamVector.from_segments([
            ("logits_net", init_mlp_params(spec, rng)),
        ])
        if input_scale is None:
            input_scale = np.ones(spec.input_dim)
        self.input_scale = np.asarray(input_scale, dtype=np.float64)
        if self.input_scale.shape != (spec.input_dim,):
            raise ShapeError("input_scale must match the network input dimension")
        self._rebuild_views()

    def _rebuild_views(self):
        self._layers = unpack_layers(self.spec, self.params.segment("logits_net"))

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_layers")
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._rebuild_views()

    def flat(self) -> np.ndarray:
        return self.params.values.copy()

    def set_flat(self, values: np.ndarray) -> None:
        self.params.replace_values(values)

    def _scaled(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=np.float64) * self.input_scale

    def logits(self, obs: np.ndarray) -> np.ndarray:
        return forward(self.spec, self.params.segment("logits_net"), self._scaled(obs))

    def log_probs(self, obs: np.ndarray) -> np.ndarray:
        z = self.logits(obs)
        zmax = z.max(axis=-1, keepdims=True)
        s = z - zmax
        return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample a skill index; returns (index, log_prob, log_prob_vector)."""
        z = _forward_1d(self._layers, obs * self.input_scale)
        z = z - z.max()
        logp = z - np.log(np.exp(z).sum())
        if not np.isfinite(logp.sum()):
            raise NumericsError("policy logits are not finite")
        p = np.exp(logp)
        u = rng.random()
        index = int(np.searchsorted(np.cumsum(p), u * p.sum()))
        index = min(index, self.n_skills - 1)
        return index, float(logp[index]), logp

    def log_prob(self, obs: np.ndarray, action) -> float | np.ndarray:
        logp = self.log_probs(obs)
        if logp.ndim == 1:
            return float(logp[int(action)])
        idx = np.asarray(action, dtype=np.intp)
        return logp[np.arange(logp.shape[0]), idx]

    def dist_params(self, obs: np.ndarray) -> np.ndarray:
        return self.log_probs(obs)

    def grad_logprob_weighted(self, obs: np.ndarray, actions, weights) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        idx = np.asarray(actions, dtype=np.intp).ravel()
        weights = np.asarray(weights, dtype=np.float64).ravel()
        n = obs.shape[0]
        if idx.shape[0] != n or weights.shape[0] != n or n == 0:
            raise ShapeError("batch arrays must be nonempty and aligned")
        w = self.params.segment("logits_net")
        z, acts = forward_cached(self.spec, w, self._scaled(obs))
        zmax = z.max(axis=1, keepdims=True)
        e = np.exp(z - zmax)
        p = e / e.sum(axis=1, keepdims=True)
        gy = -p
        gy[np.arange(n), idx] += 1.0
        gy *= weights[:, None] / n
        return backward(self.spec, w, acts, gy)

    def mean_kl(self, old_dist: np.ndarray, obs: np.ndarray) -> float:
        old_logp = np.atleast_2d(old_dist)
        new_logp = np.atleast_2d(self.log_probs(obs))
        p_old = np.exp(old_logp)
        return float((p_old * (old_logp - new_logp)).sum(axis=1).mean())

    def kl_grad(self, old_dist: np.ndarray, obs: np.ndarray) -> np.ndarray:
        old_logp = np.atleast_2d(old_dist)
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        n = obs.shape[0]
        w = self.params.segment("logits_net")
        z, acts = forward_cached(self.spec, w, self._scaled(obs))
        zmax = z.max(axis=1, keepdims=True)
        e = np.exp(z - zmax)
        p = e / e.sum(axis=1, keepdims=True)
        gy = (p - np.exp(old_logp)) / n
        return backward(self.spec, w, acts, gy)

    def fvp_builder(self, obs: np.ndarray, damping: float):
        """Closure computing (F + damping I) v at the current parameters."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        n = obs.shape[0]
        w = self.params.segment("logits_net").copy()
        z, acts = forward_cached(self.spec, w, self._scaled(obs))
        derivs = tanh_derivs(acts)
        zmax = z.max(axis=1, keepdims=True)
        e = np.exp(z - zmax)
        p = e / e.sum(axis=1, keepdims=True)
        size = self.params.size
        spec = self.spec

        def apply(v: np.ndarray) -> np.ndarray:
            v = np.asarray(v, dtype=np.float64)
            if v.size != size:
                raise ShapeError("direction vector does not match parameter layout")
            r = rop_forward(spec, w, v, acts, derivs)
            gy = (p * r - p * (p * r).sum(axis=1, keepdims=True)) / n
            return backward(spec, w, acts, gy, derivs) + damping * v

        return apply

    def fvp(self, obs: np.ndarray, v: np.ndarray, damping: float) -> np.ndarray:
        return self.fvp_builder(obs, damping)(v)
