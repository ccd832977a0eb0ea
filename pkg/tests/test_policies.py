import numpy as np
import pytest

from haarlab.nets import MlpSpec, unpack_layers
from haarlab.params import ShapeError
from haarlab.policies import LOG_2PI, CategoricalPolicy, GaussianPolicy, one_hot

from helpers import finite_diff_grad, rel_err


def zero_net(policy, segment):
    policy.params.segment(segment)[:] = 0.0


def set_output_bias(policy, segment, bias):
    w = policy.params.segment(segment)
    _, b = unpack_layers(policy.spec, w)[-1]
    b[:] = bias


def make_gaussian(rng=None, input_dim=3, action_dim=2, hidden=(5, 4)):
    rng = rng or np.random.default_rng(0)
    return GaussianPolicy(MlpSpec(input_dim, hidden, action_dim), rng)


def make_categorical(rng=None, input_dim=3, n=3, hidden=(5, 4)):
    rng = rng or np.random.default_rng(0)
    return CategoricalPolicy(MlpSpec(input_dim, hidden, n), rng)


# -- sampling -----------------------------------------------------------------

def test_categorical_forced_action():
    pol = make_categorical(n=3)
    zero_net(pol, "logits_net")
    set_output_bias(pol, "logits_net", [30.0, 0.0, 0.0])
    obs = np.zeros(3)
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, logp, _ = pol.act(obs, rng)
        assert a == 0
        assert abs(logp) < 1e-12


def test_gaussian_tight_variance_sampling():
    pol = make_gaussian()
    pol.params.segment("log_std")[:] = -5.0
    obs = np.array([0.3, -0.2, 1.0])
    mu = pol.mean(obs)
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, _, _ = pol.act(obs, rng)
        assert np.all(np.abs(a - mu) <= 5.0 * np.exp(-5.0))


def test_categorical_empirical_frequencies():
    pol = make_categorical(n=3)
    zero_net(pol, "logits_net")
    set_output_bias(pol, "logits_net", np.log([0.2, 0.3, 0.5]))
    obs = np.zeros(3)
    rng = np.random.default_rng(3)
    counts = np.zeros(3)
    n = 100_000
    for _ in range(n):
        a, _, _ = pol.act(obs, rng)
        counts[a] += 1
    freqs = counts / n
    assert np.max(np.abs(freqs - [0.2, 0.3, 0.5])) <= 0.01


def test_sampled_logprob_equals_log_prob():
    pol = make_gaussian()
    obs = np.array([0.5, 0.1, -1.2])
    rng = np.random.default_rng(4)
    a, logp, _ = pol.act(obs, rng)
    assert abs(logp - pol.log_prob(obs, a)) <= 1e-12
    cat = make_categorical()
    a, logp, _ = cat.act(obs, rng)
    assert abs(logp - cat.log_prob(obs, a)) <= 1e-12


# -- log densities ------------------------------------------------------------

def test_gaussian_logprob_at_mode():
    pol = make_gaussian(action_dim=3)
    pol.params.segment("log_std")[:] = [-0.3, 0.2, -1.0]
    obs = np.array([0.5, 0.1, -1.2])
    mu = pol.mean(obs)
    expected = -float(pol.log_std.sum()) - 1.5 * LOG_2PI
    assert abs(pol.log_prob(obs, mu) - expected) <= 1e-12


def test_categorical_uniform_logprob():
    pol = make_categorical(n=6)
    zero_net(pol, "logits_net")
    obs = np.zeros(3)
    for a in range(6):
        assert abs(pol.log_prob(obs, a) - np.log(1.0 / 6.0)) <= 1e-12


def test_gaussian_density_integrates_to_one():
    # quadrature oracle on a 1-D action grid
    pol = make_gaussian(action_dim=1, hidden=(4,))
    obs = np.array([0.2, -0.4, 0.9])
    mu = float(pol.mean(obs)[0])
    sigma = float(np.exp(pol.log_std[0]))
    grid = np.linspace(mu - 8 * sigma, mu + 8 * sigma, 20001)
    dens = np.exp([pol.log_prob(obs, np.array([g])) for g in grid])
    integral = np.trapezoid(dens, grid)
    assert abs(integral - 1.0) <= 1e-6


def test_categorical_probs_sum_to_one_random():
    rng = np.random.default_rng(5)
    pol = make_categorical(n=5)
    for _ in range(1000):
        pol.params.segment("logits_net")[:] = rng.standard_normal(pol.spec.n_params) * 2.0
        logp = pol.log_probs(rng.standard_normal(3))
        p = np.exp(logp)
        assert abs(p.sum() - 1.0) <= 1e-9
        assert np.all(p >= 0.0)


def test_gaussian_bin_frequencies_match_density():
    # Monte-Carlo frequency of discretized bins vs exp(log_prob) * width
    pol = make_gaussian(action_dim=1, hidden=(4,))
    obs = np.array([0.0, 0.3, -0.7])
    mu = float(pol.mean(obs)[0])
    sigma = float(np.exp(pol.log_std[0]))
    rng = np.random.default_rng(6)
    n = 200_000
    samples = np.array([pol.act(obs, rng)[0][0] for _ in range(n)])
    width = 0.1 * sigma
    for center in [mu, mu + sigma, mu - 1.5 * sigma]:
        inside = np.mean(np.abs(samples - center) <= width / 2)
        p_est = np.exp(pol.log_prob(obs, np.array([center]))) * width
        sd = np.sqrt(p_est * (1 - p_est) / n)
        assert abs(inside - p_est) <= 3 * sd + 1e-4  # small slack for bin curvature


# -- gradients ----------------------------------------------------------------

def test_zero_weights_zero_gradient():
    for pol in (make_gaussian(), make_categorical()):
        rng = np.random.default_rng(7)
        obs = rng.standard_normal((4, 3))
        if isinstance(pol, GaussianPolicy):
            acts = rng.standard_normal((4, 2))
        else:
            acts = rng.integers(0, 3, size=4)
        g = pol.grad_logprob_weighted(obs, acts, np.zeros(4))
        assert np.array_equal(g, np.zeros_like(g))


def test_gaussian_grad_matches_finite_differences():
    rng = np.random.default_rng(8)
    pol = make_gaussian(hidden=(4, 3))
    obs = rng.standard_normal(3)
    action = rng.standard_normal(2)
    theta0 = pol.flat()

    def scalar(theta):
        pol.set_flat(theta)
        val = pol.log_prob(obs, action)
        pol.set_flat(theta0)
        return val

    analytic = pol.grad_logprob_weighted(obs[None, :], action[None, :], np.array([1.0]))
    numeric = finite_diff_grad(scalar, theta0, h=1e-5)
    assert rel_err(analytic, numeric).max() <= 1e-4


def test_categorical_grad_matches_finite_differences():
    rng = np.random.default_rng(9)
    pol = make_categorical(hidden=(4, 3))
    obs = rng.standard_normal(3)
    action = 1
    theta0 = pol.flat()

    def scalar(theta):
        pol.set_flat(theta)
        val = pol.log_prob(obs, action)
        pol.set_flat(theta0)
        return val

    analytic = pol.grad_logprob_weighted(obs[None, :], [action], np.array([1.0]))
    numeric = finite_diff_grad(scalar, theta0, h=1e-5)
    assert rel_err(analytic, numeric).max() <= 1e-4


def test_batch_gradient_is_mean_of_samples():
    rng = np.random.default_rng(10)
    pol = make_gaussian()
    obs = rng.standard_normal((6, 3))
    acts = rng.standard_normal((6, 2))
    w = rng.standard_normal(6)
    batch = pol.grad_logprob_weighted(obs, acts, w)
    acc = np.zeros_like(batch)
    for i in range(6):
        acc += pol.grad_logprob_weighted(obs[i:i + 1], acts[i:i + 1], w[i:i + 1])
    assert np.max(np.abs(batch - acc / 6)) <= 1e-10


# -- KL and Fisher-vector products ---------------------------------------------

def test_kl_zero_at_same_params():
    rng = np.random.default_rng(11)
    obs = rng.standard_normal((5, 3))
    gp = make_gaussian()
    assert gp.mean_kl(gp.dist_params(obs), obs) == 0.0
    cp = make_categorical()
    assert cp.mean_kl(cp.dist_params(obs), obs) == 0.0


def test_categorical_kl_hand_value():
    pol = make_categorical(n=2)
    zero_net(pol, "logits_net")
    set_output_bias(pol, "logits_net", np.log([0.9, 0.1]))
    obs = np.zeros((1, 3))
    old = np.log(np.array([[0.5, 0.5]]))
    expected = 0.5 * np.log(0.5 / 0.9) + 0.5 * np.log(0.5 / 0.1)
    assert abs(pol.mean_kl(old, obs) - expected) <= 1e-12


def test_gaussian_kl_unit_shift():
    pol = make_gaussian(action_dim=1, hidden=(4,))
    zero_net(pol, "mean_net")
    set_output_bias(pol, "mean_net", [1.0])
    pol.params.segment("log_std")[:] = 0.0
    obs = np.zeros((1, 3))
    old = (np.array([[0.0]]), np.array([0.0]))
    assert abs(pol.mean_kl(old, obs) - 0.5) <= 1e-12


def test_fvp_zero_vector():
    pol = make_gaussian()
    obs = np.random.default_rng(12).standard_normal((4, 3))
    out = pol.fvp(obs, np.zeros(pol.params.size), damping=0.1)
    assert np.array_equal(out, np.zeros_like(out))


def test_fvp_linearity():
    rng = np.random.default_rng(13)
    for pol in (make_gaussian(), make_categorical()):
        obs = rng.standard_normal((4, 3))
        v = rng.standard_normal(pol.params.size)
        a = pol.fvp(obs, 2.5 * v, damping=0.1)
        b = 2.5 * pol.fvp(obs, v, damping=0.1)
        assert np.max(np.abs(a - b)) <= 1e-10


@pytest.mark.parametrize("maker", [make_gaussian, make_categorical])
def test_fvp_matches_finite_difference_hessian(maker):
    rng = np.random.default_rng(14)
    pol = maker(hidden=(4,))
    obs = rng.standard_normal((5, 3))
    old = pol.dist_params(obs)
    theta0 = pol.flat()
    v = rng.standard_normal(pol.params.size)
    h = 1e-5

    pol.set_flat(theta0 + h * v)
    gp = pol.kl_grad(old, obs)
    pol.set_flat(theta0 - h * v)
    gm = pol.kl_grad(old, obs)
    pol.set_flat(theta0)
    hv_fd = (gp - gm) / (2 * h)
    hv = pol.fvp(obs, v, damping=0.0)
    denom = max(np.linalg.norm(hv), np.linalg.norm(hv_fd), 1e-8)
    assert np.linalg.norm(hv - hv_fd) / denom <= 1e-4


def test_fvp_matches_fd_on_tiny_policy():
    # near-minimal policy: 1 weight + 1 bias + 1 log_std
    rng = np.random.default_rng(15)
    pol = GaussianPolicy(MlpSpec(1, (), 1), rng)
    obs = rng.standard_normal((6, 1))
    old = pol.dist_params(obs)
    theta0 = pol.flat()
    h = 1e-4
    n = pol.params.size
    hess = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        pol.set_flat(theta0 + h * e)
        gp = pol.kl_grad(old, obs)
        pol.set_flat(theta0 - h * e)
        gm = pol.kl_grad(old, obs)
        pol.set_flat(theta0)
        hess[:, i] = (gp - gm) / (2 * h)
    v = rng.standard_normal(n)
    assert rel_err(pol.fvp(obs, v, damping=0.0), hess @ v, floor=1e-4).max() <= 1e-3


def test_kl_grad_matches_finite_differences():
    rng = np.random.default_rng(16)
    for pol in (make_gaussian(hidden=(4,)), make_categorical(hidden=(4,))):
        obs = rng.standard_normal((5, 3))
        # evaluate against a *different* old distribution so the gradient is nonzero
        theta0 = pol.flat()
        pol.set_flat(theta0 + 0.05 * rng.standard_normal(theta0.size))
        old = pol.dist_params(obs)
        pol.set_flat(theta0)

        def scalar(theta):
            pol.set_flat(theta)
            val = pol.mean_kl(old, obs)
            pol.set_flat(theta0)
            return val

        analytic = pol.kl_grad(old, obs)
        numeric = finite_diff_grad(scalar, theta0, h=1e-5)
        assert rel_err(analytic, numeric).max() <= 1e-4


def test_log_std_clamped_after_update():
    pol = make_gaussian()
    theta = pol.flat()
    theta[-pol.action_dim:] = [-9.0, 9.0]
    pol.set_flat(theta)
    assert np.array_equal(pol.log_std, [-5.0, 2.0])


def test_one_hot():
    assert np.array_equal(one_hot(2, 4), [0.0, 0.0, 1.0, 0.0])


def test_input_scale_shape_checked():
    with pytest.raises(ShapeError):
        GaussianPolicy(MlpSpec(3, (4,), 2), np.random.default_rng(0), input_scale=np.ones(2))
