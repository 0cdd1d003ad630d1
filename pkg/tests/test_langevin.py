import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langaug.energy import EnergyArch, EnergyParams
from langaug.errors import ConfigError, DimensionError, DivergenceError
from langaug.langevin import (LangevinConfig, channel_replace_hook, chain_noise_block,
                              langevin_step, run_chain, run_chain_batch)
from langaug.numerics import derive_stream


def quadratic_params(mu):
    mu = np.asarray(mu, dtype=np.float64)
    arch = EnergyArch(kind="quadratic", input_shape=mu.shape)
    return EnergyParams(arch, mu.copy())


class TestStep:
    def test_zero_step_size(self):
        x = np.array([1.0, 2.0])
        out = langevin_step(x, np.array([5.0, -1.0]), 0.0, np.array([3.0, 3.0]))
        assert np.array_equal(out, x)

    def test_zero_grad_zero_noise(self):
        x = np.array([1.0, 2.0])
        assert np.array_equal(langevin_step(x, np.zeros(2), 0.3, np.zeros(2)), x)

    def test_arithmetic(self):
        out = langevin_step(np.array([1.0]), np.array([2.0]), 0.1, np.array([0.0]))
        assert out[0] == pytest.approx(0.99)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2), st.floats(-3, 3))
    @settings(max_examples=50, deadline=None)
    def test_update_formula(self, x, g, step, eps):
        out = langevin_step(np.array([x]), np.array([g]), step, np.array([eps]))
        assert out[0] == pytest.approx(x - 0.5 * step * step * g + step * eps, rel=1e-12, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            langevin_step(np.zeros(2), np.zeros(3), 0.1, np.zeros(2))


class TestChain:
    def test_stored_count_matches_stride_arithmetic(self):
        config = LangevinConfig(step_size=0.05, n_steps=40, store_stride=3, store_offset=3)
        assert config.stored_steps() == [3, 6, 9, 12, 15, 18, 21, 24, 27, 30, 33, 36, 39]
        params = quadratic_params([0.0, 0.0])
        rec = run_chain(np.zeros(2), params, config, derive_stream(0, [("c", 0)]))
        assert rec.steps() == config.stored_steps()
        assert len(rec.stored) == 13

    def test_zero_steps_keeps_x0(self):
        config = LangevinConfig(step_size=0.1, n_steps=0)
        params = quadratic_params([1.0])
        rec = run_chain(np.array([2.0]), params, config, derive_stream(0, [("c", 0)]))
        assert rec.stored == []
        assert np.array_equal(rec.x0, np.array([2.0]))

    def test_single_chain_stationary_mean(self):
        # One chain's 10^4 post-burn-in iterates have an autocorrelation
        # time of ~1600 steps at this step size, so the mean carries an MC
        # stderr of ~0.4 per coordinate; the bound below is the analytic
        # 3 sigma for that ESS. The pooled 64-chain acceptance run enforces
        # the tight stationarity contract.
        mu = np.array([1.0, -1.0])
        beta = 0.05
        config = LangevinConfig(step_size=beta, n_steps=20000, store_stride=1, store_offset=10001)
        rec = run_chain(np.zeros(2), quadratic_params(mu), config, derive_stream(7, [("chain", 0)]))
        its = rec.iterates()
        mean = its.mean(axis=0)
        a = 1.0 - beta**2 / 2.0
        var_analytic = 1.0 / (1.0 - beta**2 / 4.0)
        sigma_mean = np.sqrt(var_analytic * (1 + a) / (1 - a) / its.shape[0])
        assert np.all(np.abs(mean - mu) < 3 * sigma_mean)
        # the chain has clearly moved from the origin start to the mode
        assert np.linalg.norm(mean - mu) < np.linalg.norm(mean)

    def test_chains_deterministic_and_order_independent(self):
        params = quadratic_params([0.5])
        config = LangevinConfig(step_size=0.1, n_steps=50, store_stride=5, store_offset=5)
        first = run_chain(np.zeros(1), params, config, derive_stream(3, [("chain", 4)]))
        run_chain(np.zeros(1), params, config, derive_stream(3, [("chain", 9)]))
        again = run_chain(np.zeros(1), params, config, derive_stream(3, [("chain", 4)]))
        assert all(np.array_equal(a[1], b[1]) for a, b in zip(first.stored, again.stored))

    def test_batch_matches_per_chain(self):
        params = quadratic_params([0.3, -0.2])
        config = LangevinConfig(step_size=0.1, n_steps=12, store_stride=4, store_offset=4)
        x0 = derive_stream(1, [("x0", 0)]).standard_normal((5, 2))
        noise = np.stack([
            chain_noise_block(derive_stream(2, [("chain", c)]), config.n_steps, (2,))
            for c in range(5)
        ], axis=1)
        _, stored = run_chain_batch(x0, params, config, noise)
        for c in range(5):
            rec = run_chain(x0[c], params, config, derive_stream(2, [("chain", c)]))
            for t, xt in rec.stored:
                assert np.array_equal(stored[t][c], xt)

    def test_divergence_reported_with_step(self):
        arch = EnergyArch(kind="quadratic", input_shape=(1,))
        params = EnergyParams(arch, np.array([0.0]))
        config = LangevinConfig(step_size=1e160, n_steps=10)
        with pytest.raises(DivergenceError) as err:
            run_chain(np.array([1.0]), params, config, derive_stream(0, [("c", 0)]))
        assert err.value.step is not None

    def test_stationary_distribution_pooled(self):
        # 16 chains x 4000 steps against the exact discrete-time law; the
        # mean tolerance is self-calibrated from the chain-mean spread
        mu = np.array([2.0])
        beta = 0.3
        config = LangevinConfig(step_size=beta, n_steps=4000, store_stride=1, store_offset=2001)
        chains = []
        for c in range(16):
            rec = run_chain(np.array([2.0]), quadratic_params(mu), config,
                            derive_stream(31, [("chain", c)]))
            chains.append(rec.iterates().ravel())
        chain_means = np.array([c.mean() for c in chains])
        pooled = np.concatenate(chains)
        stderr = chain_means.std(ddof=1) / np.sqrt(16)
        var_analytic = 1.0 / (1.0 - beta**2 / 4.0)
        assert abs(pooled.mean() - 2.0) < 3 * stderr
        assert abs(pooled.var() / var_analytic - 1.0) < 0.1


class TestHook:
    def test_idempotent(self):
        it = derive_stream(0, [("a", 0)]).standard_normal((3, 4, 4))
        orig = derive_stream(1, [("b", 0)]).standard_normal((3, 4, 4))
        once = channel_replace_hook(it, orig, 1)
        twice = channel_replace_hook(once, orig, 1)
        assert np.array_equal(once, twice)

    def test_channel_contents(self):
        it = derive_stream(2, [("a", 0)]).standard_normal((3, 4, 4))
        orig = derive_stream(3, [("b", 0)]).standard_normal((3, 4, 4))
        out = channel_replace_hook(it, orig, 2)
        assert np.array_equal(out[2], orig[2])
        assert np.array_equal(out[:2], it[:2])

    def test_single_channel_degenerates_with_warning(self):
        it = derive_stream(4, [("a", 0)]).standard_normal((1, 4, 4))
        orig = derive_stream(5, [("b", 0)]).standard_normal((1, 4, 4))
        with pytest.warns(UserWarning):
            out = channel_replace_hook(it, orig, 0)
        assert np.array_equal(out, orig)

    def test_out_of_range_channel(self):
        x = np.zeros((2, 4, 4))
        with pytest.raises(ConfigError):
            channel_replace_hook(x, x, 5)

    def test_hook_applied_inside_chain(self):
        arch = EnergyArch(kind="quadratic", input_shape=(2, 4, 4))
        params = EnergyParams(arch, np.zeros(arch.input_dim))
        config = LangevinConfig(step_size=0.2, n_steps=6, store_stride=1, store_offset=1,
                                channel_replace=0)
        x0 = derive_stream(6, [("x", 0)]).standard_normal((2, 4, 4))
        rec = run_chain(x0, params, config, derive_stream(7, [("c", 0)]))
        for _, xt in rec.stored:
            assert np.array_equal(xt[0], x0[0])
            assert not np.array_equal(xt[1], x0[1])


def test_config_validation():
    with pytest.raises(ConfigError):
        LangevinConfig(step_size=-0.1)
    with pytest.raises(ConfigError):
        LangevinConfig(store_stride=0)


def test_chain_persistence(tmp_path):
    from langaug.langevin import save_chain
    from langaug.ldtn import read_meta, read_tensor

    params = quadratic_params([0.0, 1.0])
    config = LangevinConfig(step_size=0.1, n_steps=9, store_stride=3, store_offset=3)
    rec = run_chain(np.zeros(2), params, config, derive_stream(12, [("pair", 1), ("chain", 4)]),
                    pair=(0, 1))
    save_chain(rec, tmp_path / "chain", config)
    stack = read_tensor(tmp_path / "chain.ldtn")
    assert stack.shape == (3, 2)
    assert np.array_equal(stack, rec.iterates())
    meta = read_meta(tmp_path / "chain")
    assert meta["pair"] == [0, 1]
    assert meta["steps"] == [3, 6, 9]
    assert meta["rng_labels"] == [["pair", 1], ["chain", 4]]
    assert meta["config"]["n_steps"] == 9
