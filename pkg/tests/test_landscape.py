"""Gradients, singular-value sandwich bounds, stationarity, and the trainer."""

import dataclasses

import numpy as np
import pytest

from framelets import analysis, convops, landscape, netbuild
from conftest import make_spec

SANDWICH_SLACK = 1e-8


def skip_spec():
    # s = (8, 12) >= T and d = (4, 8, 12) with d_{l-1} >= d_0 at every level
    return make_spec(kappa=2, r=2, m=4, q=[1, 2, 3], skip=True)


def random_data(spec, seed, T=2):
    gen = np.random.default_rng(seed)
    return landscape.TrainingSet(
        X=gen.standard_normal((spec.d[0], T)),
        Y=gen.standard_normal((spec.d[0], T)),
    )


def margin_safe(spec, mats, data, margin=1e-4):
    return all(
        analysis.trace_margin(spec, netbuild.forward_matrices(spec, mats, data.X[:, i]))
        >= margin
        for i in range(data.T)
    )


def zero_loss_data(spec, mats, X):
    Y = np.column_stack(
        [netbuild.forward_matrices(spec, mats, X[:, i]).y for i in range(X.shape[1])]
    )
    return landscape.TrainingSet(X=X, Y=Y)


class TestLoss:
    def test_zero_residual(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=0)
        mats = netbuild.realize(spec, bank)
        data = zero_loss_data(spec, mats, np.random.default_rng(1).standard_normal((4, 3)))
        assert landscape.loss(spec, mats, data) == 0.0

    def test_single_sample_arithmetic(self):
        # all-zero filters give F == 0, so the loss is half the target norm
        spec = make_spec(kappa=1, m=4, q=[1, 2])
        zero = np.zeros((1, 2, 2))
        bank = netbuild.LayerBank(
            enc_filters=(zero,), dec_filters=(zero.copy(),),
            pool=(np.eye(4),), unpool=(np.eye(4),),
        )
        data = landscape.TrainingSet(
            X=np.ones((4, 1)), Y=np.array([[3.0], [4.0], [0.0], [0.0]])
        )
        assert landscape.loss(spec, netbuild.realize(spec, bank), data) == 12.5

    def test_matches_naive_summation(self, rng):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=2)
        mats = netbuild.realize(spec, bank)
        data = random_data(spec, seed=3, T=4)
        total = 0.0
        for i in range(4):
            diff = netbuild.forward_matrices(spec, mats, data.X[:, i]).y - data.Y[:, i]
            total += sum(float(v) ** 2 for v in diff)
        assert abs(landscape.loss(spec, mats, data) - 0.5 * total) <= 1e-12


class TestFeatureMatrices:
    def test_single_sample_column(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=1)
        mats = netbuild.realize(spec, bank)
        data = random_data(spec, seed=5, T=1)
        feats = landscape.feature_matrices(spec, mats, data)
        trace = netbuild.forward_matrices(spec, mats, data.X[:, 0])
        np.testing.assert_array_equal(feats.xi_kappa[:, 0], trace.enc[-1])
        np.testing.assert_array_equal(feats.gamma[0][:, 0], trace.skip[0])

    def test_duplicate_sample_rank_deficiency(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=1)
        mats = netbuild.realize(spec, bank)
        x = np.random.default_rng(2).standard_normal(spec.d[0])
        data = landscape.TrainingSet(
            X=np.column_stack([x, x]), Y=np.zeros((spec.d[0], 2))
        )
        feats = landscape.feature_matrices(spec, mats, data)
        for gamma in feats.gamma:
            sv = np.linalg.svd(gamma, compute_uv=False)
            assert sv[-1] <= 1e-12

    def test_overparameterized_full_rank(self):
        spec = skip_spec()  # s_l >= T = 2
        bank = netbuild.random_bank(spec, seed=4)
        mats = netbuild.realize(spec, bank)
        data = random_data(spec, seed=6, T=2)
        feats = landscape.feature_matrices(spec, mats, data)
        sv = np.linalg.svd(feats.gamma[1], compute_uv=False)
        assert sv[-1] > 0.0


class TestAnalyticGradients:
    def test_zero_residual_gives_exact_zero(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=3)
        mats = netbuild.realize(spec, bank)
        data = zero_loss_data(spec, mats,
                              np.random.default_rng(4).standard_normal((4, 2)))
        for l in (1, 2):
            assert np.all(landscape.grad_skip_analytic(spec, mats, data, l) == 0.0)
        assert np.all(landscape.grad_enc_analytic(spec, mats, data) == 0.0)

    def test_tiny_case_finite_differences(self):
        spec = make_spec(kappa=1, r=2, m=4, q=[1, 2], skip=True)
        bank = netbuild.random_bank(spec, seed=5)
        mats = netbuild.realize(spec, bank)
        data = random_data(spec, seed=7, T=1)
        assert margin_safe(spec, mats, data)
        ga = landscape.grad_skip_analytic(spec, mats, data, 1)
        gf = landscape.fd_grad_skip(spec, mats, data, 1)
        assert np.linalg.norm(ga - gf) <= 1e-5 * np.linalg.norm(gf)

    @pytest.mark.parametrize("l", [1, 2])
    def test_random_cases_skip(self, l):
        spec = skip_spec()
        done = 0
        for seed in range(40):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 100)
            if not margin_safe(spec, mats, data):
                continue
            ga = landscape.grad_skip_analytic(spec, mats, data, l)
            gf = landscape.fd_grad_skip(spec, mats, data, l)
            assert np.linalg.norm(ga - gf) <= 1e-5 * max(np.linalg.norm(gf), 1e-30)
            done += 1
            if done >= 10:
                break
        assert done >= 5

    def test_random_cases_encoder(self):
        spec = skip_spec()
        done = 0
        for seed in range(40):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 200)
            if not margin_safe(spec, mats, data):
                continue
            ga = landscape.grad_enc_analytic(spec, mats, data)
            gf = landscape.fd_grad_enc(spec, mats, data)
            assert np.linalg.norm(ga - gf) <= 1e-5 * max(np.linalg.norm(gf), 1e-30)
            done += 1
            if done >= 10:
                break
        assert done >= 5

    def test_requires_skip_network(self):
        spec = make_spec(kappa=1, m=4)
        bank = netbuild.random_bank(spec, seed=0)
        mats = netbuild.realize(spec, bank)
        with pytest.raises(ValueError, match="skip"):
            landscape.grad_skip_analytic(spec, mats, random_data(spec, 1), 1)

    def test_kink_adjacent_data_rejected(self):
        spec = make_spec(kappa=1, r=2, m=4, q=[1, 2], skip=True)
        bank = netbuild.random_bank(spec, seed=9)
        mats = netbuild.realize(spec, bank)
        data = landscape.TrainingSet(X=np.zeros((4, 1)), Y=np.ones((4, 1)))
        with pytest.raises(analysis.KinkMarginError, match="resample"):
            landscape.fd_grad_skip(spec, mats, data, 1)
        with pytest.raises(analysis.KinkMarginError, match="resample"):
            landscape.grad_skip_analytic(spec, mats, data, 1, margin=1e-8)
        # without a margin request the analytic form stays exact at kinks
        grad = landscape.grad_skip_analytic(spec, mats, data, 1)
        assert grad.shape == mats[0].S_tilde.shape


class TestBoundCertificates:
    def test_zero_loss_everything_zero(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=6)
        mats = netbuild.realize(spec, bank)
        data = zero_loss_data(spec, mats,
                              np.random.default_rng(8).standard_normal((4, 2)))
        cert = landscape.certify_bounds_skip(spec, mats, data, 1)
        assert cert.loss == 0.0
        assert cert.grad_norm == 0.0
        assert cert.lower == 0.0 and cert.upper == 0.0

    @pytest.mark.parametrize("l", [1, 2])
    def test_sandwich_holds_skip(self, l):
        spec = skip_spec()
        for seed in range(25):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 300)
            cert = landscape.certify_bounds_skip(spec, mats, data, l)
            assert cert.applicable
            scale = max(cert.upper, 1e-30)
            assert cert.lower <= cert.grad_norm + SANDWICH_SLACK * scale
            assert cert.grad_norm <= cert.upper + SANDWICH_SLACK * scale

    def test_sandwich_holds_encoder(self):
        spec = skip_spec()
        for seed in range(25):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 400)
            cert = landscape.certify_bounds_enc(spec, mats, data)
            assert cert.applicable  # d_1 = 8 >= T, d_2 = 12 >= d_0
            scale = max(cert.upper, 1e-30)
            assert cert.lower <= cert.grad_norm + SANDWICH_SLACK * scale
            assert cert.grad_norm <= cert.upper + SANDWICH_SLACK * scale
            assert cert.printed is not None
            assert "feature_sigma_min" in cert.printed

    def test_duplicate_samples_zero_lower_bound(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=7)
        mats = netbuild.realize(spec, bank)
        x = np.random.default_rng(9).standard_normal(spec.d[0])
        data = landscape.TrainingSet(
            X=np.column_stack([x, x]),
            Y=np.random.default_rng(10).standard_normal((spec.d[0], 2)),
        )
        cert = landscape.certify_bounds_skip(spec, mats, data, 1)
        assert cert.feature_sigma_min <= 1e-12
        assert cert.lower <= 1e-10
        assert cert.grad_norm <= cert.upper + SANDWICH_SLACK * cert.upper

    def test_positive_factors_force_positive_gradient(self):
        # stationarity direction: nonzero loss plus nonzero sigmas means the
        # gradient cannot vanish
        spec = skip_spec()
        hits = 0
        for seed in range(25):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 500)
            cert = landscape.certify_bounds_enc(spec, mats, data)
            if (cert.applicable and cert.loss > 1e-8
                    and cert.feature_sigma_min > 1e-10
                    and cert.factor_sigma_min > 1e-10):
                assert cert.grad_norm > 0.0
                assert cert.lower > 0.0
                hits += 1
        assert hits > 0

    def test_residual_scaling_is_linear(self):
        # moving targets toward the outputs scales residuals by c with the
        # masks untouched, so grad norm and both bounds scale by exactly c
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=11)
        mats = netbuild.realize(spec, bank)
        data = random_data(spec, seed=600)
        outs = np.column_stack(
            [netbuild.forward_matrices(spec, mats, data.X[:, i]).y for i in range(data.T)]
        )
        c = 0.125
        scaled = landscape.TrainingSet(X=data.X, Y=outs - c * (outs - data.Y))
        base = landscape.certify_bounds_skip(spec, mats, data, 2)
        small = landscape.certify_bounds_skip(spec, mats, scaled, 2)
        for attr in ("grad_norm", "lower", "upper"):
            b, s = getattr(base, attr), getattr(small, attr)
            assert abs(s - c * b) <= 1e-10 * max(1.0, abs(b))


class TestStationarity:
    def test_full_relu_instances(self):
        # seeds screened so the rank conditions genuinely hold under full ReLU
        spec = netbuild.NetworkSpec(kappa=1, r=2, q=(1, 3), m=(2, 2), skip=True,
                                    nonlinearity="relu")
        hits = 0
        for seed in (4, 7, 11, 21, 22, 26):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 5000)
            report = landscape.check_stationarity(spec, mats, data, loss_floor=1e-6)
            assert report.ok
            if report.applicable and report.loss > 1e-6:
                hits += 1
                held = [e for e in report.layers if e["conditions_hold"]]
                assert all(e["grad_norm"] > 1e-12 for e in held)
        assert hits >= 3

    def test_encoder_only_relu_generically_applicable(self):
        spec = make_spec(kappa=2, r=2, m=4, q=[1, 2, 3], skip=True,
                         nonlinearity="relu_encoder")
        for seed in range(5):
            bank = netbuild.random_bank(spec, seed=seed)
            mats = netbuild.realize(spec, bank)
            data = random_data(spec, seed=seed + 7000)
            report = landscape.check_stationarity(spec, mats, data, loss_floor=1e-6)
            assert report.ok
            assert report.applicable
            assert report.loss > 1e-6

    def test_rank_deficient_features_inapplicable(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=13)
        mats = netbuild.realize(spec, bank)
        x = np.random.default_rng(14).standard_normal(spec.d[0])
        data = landscape.TrainingSet(
            X=np.column_stack([x, x]),
            Y=np.random.default_rng(15).standard_normal((spec.d[0], 2)),
        )
        report = landscape.check_stationarity(spec, mats, data)
        assert not any(e["gamma_full_rank"] for e in report.layers)
        assert report.ok

    def test_zero_loss_zero_gradient(self):
        spec = skip_spec()
        bank = netbuild.random_bank(spec, seed=16)
        mats = netbuild.realize(spec, bank)
        data = zero_loss_data(spec, mats,
                              np.random.default_rng(17).standard_normal((4, 2)))
        report = landscape.check_stationarity(spec, mats, data)
        assert report.loss == 0.0
        assert all(e["grad_norm"] == 0.0 for e in report.layers)
        assert report.ok


class TestTapGradients:
    @pytest.mark.parametrize("skip", [False, True])
    def test_finite_differences(self, skip):
        spec = make_spec(kappa=2, r=2, m=4, q=[1, 2, 2], skip=skip)
        bank = netbuild.random_bank(spec, seed=4)
        data = random_data(spec, seed=5)
        mats = netbuild.realize(spec, bank)
        if not margin_safe(spec, mats, data):
            pytest.skip("sampled kink-adjacent data")
        enc_g, dec_g, base = landscape.tap_gradients(spec, bank, data)
        assert abs(base - landscape.loss(spec, mats, data)) <= 1e-12
        h = 1e-6
        for which, grads in (("enc_filters", enc_g), ("dec_filters", dec_g)):
            for l in range(spec.kappa):
                tensor = getattr(bank, which)[l]
                for idx in np.ndindex(tensor.shape):
                    plus = [f.copy() for f in getattr(bank, which)]
                    minus = [f.copy() for f in getattr(bank, which)]
                    plus[l][idx] += h
                    minus[l][idx] -= h
                    bp = dataclasses.replace(bank, **{which: tuple(plus)})
                    bm = dataclasses.replace(bank, **{which: tuple(minus)})
                    fd = (landscape.loss(spec, netbuild.realize(spec, bp), data)
                          - landscape.loss(spec, netbuild.realize(spec, bm), data)) / (2 * h)
                    assert abs(fd - grads[l][idx]) <= 1e-5 * max(abs(fd), 1e-6)


class TestTrainGD:
    def test_linear_net_reaches_least_squares_floor(self):
        spec = make_spec(kappa=1, r=2, m=4, q=[1, 2], nonlinearity="none")
        bank = netbuild.random_bank(spec, seed=1)
        gen = np.random.default_rng(3)
        data = landscape.TrainingSet(X=gen.standard_normal((4, 1)),
                                     Y=gen.standard_normal((4, 1)))
        # oracle: zero loss is attainable over the decoder taps alone,
        # because the output is linear in them
        mats = netbuild.realize(spec, bank)
        trace = netbuild.forward_matrices(spec, mats, data.X[:, 0])
        cols = []
        for k in range(spec.q[1]):
            src = bank.unpool[0] @ trace.enc[0][k * 4:(k + 1) * 4]
            for t in range(spec.r):
                tap = np.zeros(spec.r)
                tap[t] = 1.0
                cols.append(convops.circ_conv(src, tap))
        A = np.column_stack(cols)
        sol, *_ = np.linalg.lstsq(A, data.Y[:, 0], rcond=None)
        assert np.linalg.norm(A @ sol - data.Y[:, 0]) <= 1e-10

        result = landscape.train_gd(
            spec, bank, data,
            landscape.TrainConfig(step_size=0.5, iterations=4000, stop_loss=1e-12),
        )
        assert result.losses[-1] <= 1e-10
        assert result.converged

    def test_skip_relu_monotone_descent(self):
        spec = make_spec(kappa=1, r=2, m=4, q=[1, 4], skip=True)
        bank = netbuild.random_bank(spec, seed=2)
        gen = np.random.default_rng(8)
        data = landscape.TrainingSet(X=gen.standard_normal((4, 2)),
                                     Y=gen.standard_normal((4, 2)))
        result = landscape.train_gd(
            spec, bank, data,
            landscape.TrainConfig(step_size=0.5, iterations=150,
                                  checkpoint_every=50),
        )
        assert all(a >= b for a, b in zip(result.losses, result.losses[1:]))
        assert result.losses[-1] < result.losses[0]
        assert len(result.certificates) >= 2
        for _, certs in result.certificates:
            assert all(c.kind == "skip" for c in certs)

    def test_zero_residual_stops_immediately(self):
        spec = make_spec(kappa=1, r=2, m=4, q=[1, 2], skip=True)
        bank = netbuild.random_bank(spec, seed=3)
        mats = netbuild.realize(spec, bank)
        data = zero_loss_data(spec, mats,
                              np.random.default_rng(4).standard_normal((4, 2)))
        result = landscape.train_gd(spec, bank, data,
                                    landscape.TrainConfig(iterations=50))
        assert result.losses == [0.0]
        assert result.converged

    def test_divergence_aborts(self):
        spec = make_spec(kappa=1, r=2, m=4, q=[1, 2], nonlinearity="none")
        bank = netbuild.random_bank(spec, seed=5)
        data = random_data(spec, seed=6)
        with pytest.raises(landscape.TrainingDiverged, match="step size"):
            landscape.train_gd(
                spec, bank, data,
                landscape.TrainConfig(step_size=1e4, iterations=100,
                                      armijo=False, divergence_loss=1e10),
            )
