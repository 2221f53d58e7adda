import numpy as np

from kmmr.datagen import Dataset, ScenarioSpec, generate
from kmmr.itc import CalibrationSpec, FMatrix, f_matrix, itc, lambda_hat, null_calibration
from kmmr.itc import test_statistic as rank_statistic
from kmmr.kernels import KernelSpec, eval_kernel, gram
from kmmr.mmr import MmrProblem, fit_linear
from kmmr.models import PolyModel, residual_grad_matrix
from kmmr.numerics import SymMatrix, kron_vec, vec


def make_dataset(x, y, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return Dataset(x=x, y=np.asarray(y, dtype=float), z=z, y_mean=0.0, y_std=1.0, split="t")


def pair_u(G, z, spec, i, j):
    return np.outer(G[i], G[j]) * eval_kernel(spec, z[i], z[j])


class TestFMatrix:
    def test_poly_sign_cancellation(self):
        rng = np.random.default_rng(1)
        n = 12
        ds = make_dataset(rng.standard_normal(n), np.zeros(n), rng.uniform(-3, 3, n))
        spec = KernelSpec("gaussian", bandwidth=1.0)
        model = PolyModel.zeros(2)
        F = f_matrix(ds, spec, model, np.zeros(3))
        from kmmr.models import basis_matrix

        Phi = basis_matrix(model, ds.x)
        K = gram(spec, ds.z).entries
        expect = Phi.T @ K @ Phi / n**2
        assert np.max(np.abs(F.entries - expect)) < 1e-14

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(2)
        n = 10
        ds = make_dataset(rng.standard_normal(n), np.zeros(n), rng.uniform(-3, 3, n))
        spec = KernelSpec("polynomial", degree=2, offset=1.0)
        model = PolyModel.zeros(1)
        theta = rng.standard_normal(2)
        F = f_matrix(ds, spec, model, theta)
        G = residual_grad_matrix(model.with_params(theta), ds.x)
        oracle = np.zeros((2, 2))
        for i in range(n):
            for j in range(n):
                oracle += pair_u(G, ds.z, spec, i, j)
        oracle /= n**2
        assert np.max(np.abs(F.entries - oracle)) < 1e-12

    def test_duplicate_basis_column_exactly_singular(self):
        # x identical across two samples makes columns (x, x^2) collinear only
        # in contrived cases; instead duplicate via degree-0-plus-constant model
        rng = np.random.default_rng(3)
        n = 20
        x = np.ones(n)  # basis rows (1, x) = (1, 1): duplicated columns
        ds = make_dataset(x, np.zeros(n), rng.uniform(-3, 3, n))
        F = f_matrix(ds, KernelSpec("gaussian", bandwidth=1.0), PolyModel.zeros(1), np.zeros(2))
        t_hat, _ = rank_statistic(F)
        eig_max = np.linalg.eigvalsh(F.entries)[-1]
        assert np.sqrt(t_hat) <= 1e-12 * max(eig_max, 1e-300)


class TestTestStatistic:
    def test_diagonal(self):
        F = FMatrix(
            matrix=SymMatrix(np.diag([4.0, 1.0])),
            theta=np.zeros(2),
            kernel=KernelSpec("linear"),
        )
        t_hat, c_hat = rank_statistic(F)
        assert t_hat == 1.0
        assert np.allclose(np.abs(c_hat), [0.0, 1.0])

    def test_singular(self):
        F = FMatrix(
            matrix=SymMatrix(np.array([[1.0, 1.0], [1.0, 1.0]])),
            theta=np.zeros(2),
            kernel=KernelSpec("linear"),
        )
        t_hat, _ = rank_statistic(F)
        assert t_hat <= 1e-30

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((4, 4))
        a = a @ a.T
        perm = rng.permutation(4)
        F1 = FMatrix(matrix=SymMatrix(a), theta=np.zeros(4), kernel=KernelSpec("linear"))
        F2 = FMatrix(
            matrix=SymMatrix(a[np.ix_(perm, perm)]), theta=np.zeros(4), kernel=KernelSpec("linear")
        )
        t1, _ = rank_statistic(F1)
        t2, _ = rank_statistic(F2)
        assert abs(t1 - t2) < 1e-10 * max(t1, 1e-300)

    def test_negative_eigenvalue_clamped(self):
        F = FMatrix(
            matrix=SymMatrix(np.diag([1.0, -1e-14])),
            theta=np.zeros(2),
            kernel=KernelSpec("linear"),
        )
        t_hat, _ = rank_statistic(F)
        assert t_hat == 0.0


class TestLambdaHat:
    def test_constant_pairs_zero_variance(self):
        # all gradients equal and a constant kernel row structure
        n = 8
        ds = make_dataset(np.full(n, 2.0), np.zeros(n), np.zeros(n))
        model = PolyModel.zeros(1)
        lam = lambda_hat(ds, KernelSpec("gaussian", bandwidth=1.0), model, np.zeros(2), np.array([1.0, 0.0]))
        assert lam == 0.0

    def test_scalar_reduction_c1(self):
        rng = np.random.default_rng(5)
        n = 9
        ds = make_dataset(rng.standard_normal(n), np.zeros(n), rng.uniform(-3, 3, n))
        spec = KernelSpec("gaussian", bandwidth=0.7)
        model = PolyModel.zeros(0)  # single parameter, gradient = -1
        lam = lambda_hat(ds, spec, model, np.zeros(1), np.array([1.0]))
        K = gram(spec, ds.z).entries
        vals = K * np.outer(-np.ones(n), -np.ones(n))
        oracle = np.mean(vals**2) - np.mean(vals) ** 2
        assert abs(lam - oracle) < 1e-12

    def test_matches_explicit_omega_oracle(self):
        rng = np.random.default_rng(6)
        n, c = 15, 2
        ds = make_dataset(rng.standard_normal(n), np.zeros(n), rng.uniform(-3, 3, n))
        spec = KernelSpec("polynomial", degree=2, offset=1.0)
        model = PolyModel.zeros(c - 1)
        theta = rng.standard_normal(c)
        c_hat = rng.standard_normal(c)
        c_hat /= np.linalg.norm(c_hat)

        G = residual_grad_matrix(model.with_params(theta), ds.x)
        vecs = np.array(
            [vec(pair_u(G, ds.z, spec, i, j)) for i in range(n) for j in range(n)]
        )
        omega = vecs.T @ vecs / n**2 - np.outer(vecs.mean(axis=0), vecs.mean(axis=0))
        cc = kron_vec(c_hat, c_hat)
        oracle = float(cc @ omega @ cc)

        lam = lambda_hat(ds, spec, model, theta, c_hat)
        assert abs(lam - oracle) < 1e-10 * max(abs(oracle), 1.0)


class TestItc:
    def test_split_determinism(self):
        train, _, _ = generate(ScenarioSpec("LS", "linear", n=60, seed=3))
        model = PolyModel.zeros(1)
        kernel = KernelSpec("gaussian", bandwidth=1.0)
        fit = fit_linear(MmrProblem(dataset=train, kernel=kernel, model=model))
        a = itc(train, kernel, model, fit.theta, split_seed=9)
        b = itc(train, kernel, model, fit.theta, split_seed=9)
        assert a == b
        c = itc(train, kernel, model, fit.theta, split_seed=10)
        assert a.itc_value != c.itc_value

    def test_duplicate_column_never_identifiable(self):
        rng = np.random.default_rng(7)
        n = 60
        ds = make_dataset(np.ones(n), np.zeros(n), rng.uniform(-3, 3, n))
        report = itc(ds, KernelSpec("gaussian", bandwidth=1.0), PolyModel.zeros(1), np.zeros(2), split_seed=1)
        assert not report.identifiable

    def test_linear_kernel_underidentifies_quadratic_model(self):
        # rank-1 instrument space vs 3 parameters: never identifiable
        for seed in (527, 1, 2):
            train, _, _ = generate(ScenarioSpec("LS", "linear", n=1000, seed=seed))
            model = PolyModel.zeros(2)
            kernel = KernelSpec("linear")
            fit = fit_linear(MmrProblem(dataset=train, kernel=kernel, model=model))
            report = itc(train, kernel, model, fit.theta, split_seed=seed)
            assert not report.identifiable

    def test_degenerate_lambda_flagged(self):
        n = 16
        ds = make_dataset(np.full(n, 1.0), np.zeros(n), np.zeros(n))
        report = itc(ds, KernelSpec("gaussian", bandwidth=1.0), PolyModel.zeros(1), np.zeros(2), split_seed=1)
        assert report.degenerate
        assert report.itc_value == 0.0
        assert not report.identifiable

    def test_kernel_scale_invariance(self):
        # kappa * k multiplies F by kappa, T by kappa^2, Lambda by kappa^2:
        # the criterion is invariant.  Polynomial offset scaling realizes
        # kappa * k exactly for degree 1: (z z' + p) * kappa via linear+const
        # is not in the family, so check through the report pieces instead.
        rng = np.random.default_rng(8)
        n = 40
        x = rng.standard_normal(n)
        z = rng.uniform(-3, 3, n)
        ds = make_dataset(x, np.zeros(n), z)
        model = PolyModel.zeros(1)
        theta = np.zeros(2)

        report = itc(ds, KernelSpec("gaussian", bandwidth=1.0), model, theta, split_seed=5)

        # manual scaled run through the same internals
        from kmmr.numerics import substream, sym_eigen

        kappa = 7.3
        perm = substream(5, "itc-split").permutation(n)
        ia, ib = np.sort(perm[: n // 2]), np.sort(perm[n // 2 :])
        K = gram(KernelSpec("gaussian", bandwidth=1.0), z).entries
        G = residual_grad_matrix(model, x)
        for scale, expect in ((1.0, report.itc_value), (kappa, report.itc_value)):
            Ka = scale * K[np.ix_(ia, ia)]
            F = G[ia].T @ Ka @ G[ia] / len(ia) ** 2
            eig = sym_eigen(F)
            lam_c = max(eig.values[-1], 0.0)
            c_hat = eig.vectors[:, -1]
            Vm = (scale * K[np.ix_(ib, ib)]) * np.outer(G[ib] @ c_hat, G[ib] @ c_hat)
            lam = np.mean(Vm**2) - np.mean(Vm) ** 2
            value = len(ia) * lam_c**2 / lam
            assert abs(value - expect) < 1e-10 * max(expect, 1e-300)

    def test_alpha_threshold_monotone(self):
        train, _, _ = generate(ScenarioSpec("LS", "linear", n=120, seed=11))
        model = PolyModel.zeros(1)
        kernel = KernelSpec("gaussian", bandwidth=0.5)
        fit = fit_linear(MmrProblem(dataset=train, kernel=kernel, model=model))
        strict = itc(train, kernel, model, fit.theta, alpha=0.05, split_seed=2)
        loose = itc(train, kernel, model, fit.theta, alpha=0.5, split_seed=2)
        assert loose.identifiable or not strict.identifiable


class TestCalibrationDesigns:
    def test_full_rank_design_rejects(self):
        rate = null_calibration(
            CalibrationSpec(n=600, alpha=0.05, design="full_rank", seed=1), replications=20
        )
        assert rate > 0.9

    def test_report_fields_consistent(self):
        train, _, _ = generate(ScenarioSpec("LS", "linear", n=80, seed=13))
        model = PolyModel.zeros(1)
        kernel = KernelSpec("gaussian", bandwidth=1.0)
        fit = fit_linear(MmrProblem(dataset=train, kernel=kernel, model=model))
        rep = itc(train, kernel, model, fit.theta, split_seed=4)
        if not rep.degenerate:
            assert abs(rep.itc_value - rep.n_used[0] * rep.t_hat / rep.lambda_hat) < 1e-12
        assert rep.n_used == (40, 40)
