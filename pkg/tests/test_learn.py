import numpy as np
import pytest

from palpbench.learn import (
    Dataset,
    DivergenceError,
    MlpError,
    SvmError,
    evaluate,
    kkt_violation,
    load_model,
    loss_and_gradients,
    mlp_train,
    pca_fit,
    pca_project,
    pca_reconstruct,
    save_model,
    stratified_split,
    svm_train,
)
from palpbench.learn.mlp import init_model
from palpbench.learn.svm import KERNELS, scale_gamma


def blobs(n_per=40, centers=((0.0, 0.0), (6.0, 6.0)), sd=0.5, seed=0):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c, center in enumerate(centers):
        X.append(rng.normal(center, sd, (n_per, len(center))))
        y.extend([c] * n_per)
    return np.vstack(X), np.array(y)


class TestPca:
    def test_line_has_full_first_ratio(self):
        t = np.linspace(0, 1, 50)
        X = np.outer(t, [1.0, 2.0, 3.0]) + [5.0, 5.0, 5.0]
        with pytest.warns(UserWarning):
            model = pca_fit(X, 2)
        assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)

    def test_isotropic_cloud_even_ratios(self):
        rng = np.random.default_rng(1)
        X = rng.normal(0.0, 1.0, (10000, 2))
        model = pca_fit(X, 2)
        assert model.explained_variance_ratio[0] == pytest.approx(0.5, abs=0.05)
        assert model.explained_variance_ratio[1] == pytest.approx(0.5, abs=0.05)

    def test_full_reconstruction(self):
        rng = np.random.default_rng(2)
        X = rng.normal(0.0, 1.0, (40, 5))
        model = pca_fit(X, 5)
        back = pca_reconstruct(model, pca_project(model, X))
        assert np.abs(back - X).max() < 1e-6

    def test_components_orthonormal_and_ratios_descending(self):
        rng = np.random.default_rng(3)
        X = rng.normal(0.0, 1.0, (100, 6)) * np.array([5, 3, 2, 1, 0.5, 0.1])
        model = pca_fit(X, 4)
        gram = model.components @ model.components.T
        assert np.allclose(gram, np.eye(4), atol=1e-9)
        assert np.all(np.diff(model.explained_variance_ratio) <= 1e-12)
        assert model.explained_variance_ratio.sum() <= 1.0 + 1e-12

    def test_projected_covariance_diagonal(self):
        rng = np.random.default_rng(4)
        X = rng.normal(0.0, 1.0, (500, 4)) @ rng.normal(0, 1, (4, 4))
        model = pca_fit(X, 4)
        scores = pca_project(model, X)
        cov = np.cov(scores.T)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() / np.abs(np.diag(cov)).max() < 1e-6

    def test_empty_and_bad_k(self):
        with pytest.raises(ValueError):
            pca_fit(np.zeros((1, 3)), 1)
        with pytest.raises(ValueError):
            pca_fit(np.zeros((10, 3)), 4)


class TestSvm:
    def test_separable_blobs_perfect_training_accuracy(self):
        X, y = blobs()
        model = svm_train(X, y, ("a", "b"))
        assert (model.predict(X) == y).mean() == 1.0

    def test_xor_with_rbf(self):
        pts = []
        labels = []
        rng = np.random.default_rng(5)
        for cx, cy, label in ((0, 0, 0), (4, 4, 0), (0, 4, 1), (4, 0, 1)):
            pts.append(rng.normal((cx, cy), 0.3, (25, 2)))
            labels.extend([label] * 25)
        X = np.vstack(pts)
        y = np.array(labels)
        model = svm_train(X, y, ("same", "diff"), gamma=0.5)
        assert (model.predict(X) == y).mean() == 1.0

    def test_single_class_rejected(self):
        X = np.zeros((10, 2))
        y = np.zeros(10, dtype=int)
        with pytest.raises(SvmError):
            svm_train(X, y, ("only",))

    def test_dual_feasibility_and_kkt(self):
        X, y = blobs(seed=6)
        C = 10.0
        model = svm_train(X, y, ("a", "b"), C=C)
        for m in model.machines:
            # support coefficients live in the box [0, C] (signed by label)
            assert np.all(np.abs(m.dual_coef) <= C + 1e-9)
            assert m.max_kkt_violation <= 1e-3 + 1e-9

    def test_probability_rows_sum_to_one(self):
        X, y = blobs(seed=7)
        model = svm_train(X, y, ("a", "b"))
        rng = np.random.default_rng(8)
        probe = rng.normal(3.0, 4.0, (50, 2))
        probs = model.predict_proba(probe)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert probs.min() >= 0.0 and probs.max() <= 1.0

    def test_boundary_point_near_half(self):
        # mirror-symmetric 2-class layout: the origin lies on the decision
        # boundary by construction, so probabilities must split evenly
        rng = np.random.default_rng(9)
        right = rng.normal((3.0, 0.0), 0.6, (60, 2))
        X = np.vstack([-right, right])
        y = np.array([0] * 60 + [1] * 60)
        model = svm_train(X, y, ("l", "r"))
        p = model.predict_proba(np.array([[0.0, 0.0]]))[0]
        assert p[0] == pytest.approx(0.5, abs=0.05)
        assert p[1] == pytest.approx(0.5, abs=0.05)

    def test_deep_inside_region_confident(self):
        X, y = blobs(n_per=60, centers=((-3.0, 0.0), (3.0, 0.0)), sd=0.6, seed=10)
        model = svm_train(X, y, ("l", "r"))
        p = model.predict_proba(np.array([[-3.0, 0.0]]))[0]
        assert p[0] > 0.9

    def test_dimension_mismatch(self):
        X, y = blobs(seed=11)
        model = svm_train(X, y, ("a", "b"))
        with pytest.raises(SvmError, match="dimension"):
            model.predict(np.zeros((3, 5)))

    def test_argmax_invariant_under_uniform_scaling(self):
        X, y = blobs(n_per=30, centers=((0, 0), (4, 0), (2, 4)), sd=0.7, seed=12)
        model = svm_train(X, y, ("a", "b", "c"))
        probe = np.random.default_rng(13).normal(2.0, 3.0, (40, 2))
        probs = model.predict_proba(probe)
        assert np.array_equal(probs.argmax(axis=1), (13.7 * probs).argmax(axis=1))

    def test_kkt_violation_helper_on_uniform_alpha(self):
        X, y = blobs(n_per=10, seed=14)
        y_signed = np.where(y == 0, 1.0, -1.0)
        K = KERNELS["rbf"](X, X, scale_gamma(X))
        # untrained multipliers violate KKT badly
        assert kkt_violation(K, y_signed, np.zeros(len(y)), 0.0, 10.0) > 0.5


class TestMlp:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        X = rng.normal(0.0, 1.0, (5, 7))
        y = rng.integers(0, 3, 5)
        model = init_model((7, 16, 3), seed=1)
        _, grad_w, grad_b = loss_and_gradients(model, X, y)
        h = 1e-5
        worst = 0.0
        for layer in range(len(model.weights)):
            for param, grads in ((model.weights, grad_w), (model.biases, grad_b)):
                flat = param[layer].reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + h
                    lp, _, _ = loss_and_gradients(model, X, y)
                    flat[i] = orig - h
                    lm, _, _ = loss_and_gradients(model, X, y)
                    flat[i] = orig
                    numeric = (lp - lm) / (2 * h)
                    analytic = grads[layer].reshape(-1)[i]
                    rel = abs(numeric - analytic) / max(1e-8, abs(numeric) + abs(analytic))
                    worst = max(worst, rel)
        assert worst < 1e-4

    def test_separable_blobs_100_percent(self):
        X, y = blobs(seed=15)
        model = mlp_train(X, y, ("a", "b"), hidden=(16,), epochs=200, lr=0.1, seed=0)
        assert (model.predict(X) == y).mean() == 1.0

    def test_fixed_seed_reproducible(self):
        X, y = blobs(seed=16)
        m1 = mlp_train(X, y, ("a", "b"), epochs=50, seed=3)
        m2 = mlp_train(X, y, ("a", "b"), epochs=50, seed=3)
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)
        assert m1.loss_history == m2.loss_history

    def test_softmax_rows_sum_to_one(self):
        X, y = blobs(seed=17)
        model = mlp_train(X, y, ("a", "b"), epochs=20, seed=0)
        probs = model.predict_proba(np.random.default_rng(18).normal(0, 5, (30, 2)))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_names_lr(self):
        X, y = blobs(seed=19)
        X = X * 1e6
        with pytest.raises(DivergenceError, match="lr=1000"):
            mlp_train(X, y, ("a", "b"), epochs=50, lr=1000.0, seed=0)

    def test_single_class_rejected(self):
        with pytest.raises(MlpError):
            mlp_train(np.zeros((5, 2)), np.zeros(5, dtype=int), ("one",))

    def test_loss_history_decreases(self):
        X, y = blobs(seed=20)
        model = mlp_train(X, y, ("a", "b"), epochs=100, seed=0)
        assert model.loss_history[-1] < model.loss_history[0]


class TestDatasetAndEvaluate:
    def make_dataset(self, n_per=30, seed=21):
        X, y = blobs(n_per=n_per, centers=((0, 0), (5, 5), (0, 5), (5, 0)), sd=0.4, seed=seed)
        return Dataset(vectors=X, labels=y, class_names=("a", "b", "c", "d"))

    def test_stratified_split_fractions(self):
        ds = self.make_dataset()
        train, test = stratified_split(ds, test_fraction=0.3, seed=0)
        assert len(train) + len(test) == len(ds)
        for c in range(4):
            assert (test.labels == c).sum() == 9
            assert (train.labels == c).sum() == 21

    def test_standardization_from_train_only(self):
        ds = self.make_dataset()
        train, test = stratified_split(ds, seed=1)
        assert np.allclose(train.vectors.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(train.vectors.std(axis=0), 1.0, atol=1e-9)
        # test split standardized with the same (train) parameters
        assert train.standardization is test.standardization
        assert not np.allclose(test.vectors.mean(axis=0), 0.0, atol=1e-6)

    def test_perfect_predictor_diagonal(self):
        ds = self.make_dataset()

        class Oracle:
            def predict(self, X):
                return ds.labels

        cm = evaluate(Oracle(), ds)
        assert cm.accuracy == 1.0
        assert np.array_equal(cm.counts, np.diag(np.bincount(ds.labels)))

    def test_constant_predictor_quarter_accuracy(self):
        ds = self.make_dataset()

        class Constant:
            def predict(self, X):
                return np.zeros(len(X), dtype=int)

        cm = evaluate(Constant(), ds)
        assert cm.accuracy == pytest.approx(0.25)
        assert np.allclose(cm.per_class_recall, [1.0, 0.0, 0.0, 0.0])

    def test_affine_rescaling_invariance(self):
        ds = self.make_dataset(seed=22)
        train1, test1 = stratified_split(ds, seed=2)
        rescaled = Dataset(
            vectors=ds.vectors * np.array([2.7, 11.0]) + np.array([-3.0, 40.0]),
            labels=ds.labels,
            class_names=ds.class_names,
        )
        train2, test2 = stratified_split(rescaled, seed=2)
        m1 = mlp_train(train1.vectors, train1.labels, ds.class_names, epochs=60, seed=0)
        m2 = mlp_train(train2.vectors, train2.labels, ds.class_names, epochs=60, seed=0)
        assert np.array_equal(m1.predict(test1.vectors), m2.predict(test2.vectors))

    def test_fused_mlp_at_least_force_only_on_tabulated_materials(self):
        from palpbench.features import extract_features, feature_names
        from palpbench.materials import table_material, uniform_phantom
        from palpbench.rig import RigConfig, RigSimulator

        classes = ("pla15", "pla5", "tpu", "porcine")
        rows, labels = [], []
        for ci, key in enumerate(classes):
            phantom = uniform_phantom(table_material(key), nx=6, ny=6, origin=(95.0, 95.0))
            sim = RigSimulator(phantom, RigConfig(seed=40 + ci))
            for iy in range(6):
                for ix in range(6):
                    sim.move_to(95.5 + ix, 95.5 + iy)
                    rows.append(extract_features(sim.palpate(2.0, 45.0)).values)
                    labels.append(ci)
        full = Dataset(vectors=np.array(rows), labels=np.array(labels),
                       class_names=classes, feature_names=feature_names(),
                       sensor_mask=("force", "mic_left", "mic_right"))
        accs = {}
        for name, mask in (("force", ("force",)), ("fused", ("force", "mic_left", "mic_right"))):
            sub = full.select_sensors(mask)
            train, test = stratified_split(sub, test_fraction=0.3, seed=0)
            model = mlp_train(train.vectors, train.labels, classes, epochs=300, seed=0)
            accs[name] = evaluate(model, test).accuracy
        assert accs["fused"] >= accs["force"]

    def test_confusion_matrix_exports(self, tmp_path):
        ds = self.make_dataset()
        train, test = stratified_split(ds, seed=3)
        model = mlp_train(train.vectors, train.labels, ds.class_names, epochs=100, seed=0)
        cm = evaluate(model, test)
        csv = cm.to_csv()
        assert csv.startswith("truth\\pred,a,b,c,d")
        png = tmp_path / "cm.png"
        cm.save_png(png)
        assert png.stat().st_size > 1000


class TestModelIo:
    def test_svm_round_trip(self, tmp_path):
        X, y = blobs(seed=23)
        model = svm_train(X, y, ("a", "b"))
        path = tmp_path / "svm.json"
        save_model(model, path, dataset_hash="abc123", sensor_mask=("force",))
        loaded, std, mask, ds_hash = load_model(path)
        assert ds_hash == "abc123"
        assert mask == ("force",)
        probe = np.random.default_rng(24).normal(3, 3, (20, 2))
        assert np.allclose(loaded.predict_proba(probe), model.predict_proba(probe))

    def test_mlp_round_trip(self, tmp_path):
        X, y = blobs(seed=25)
        from palpbench.learn import Standardization

        std = Standardization.fit(X)
        model = mlp_train(std.apply(X), y, ("a", "b"), epochs=30, seed=0)
        path = tmp_path / "mlp.json"
        save_model(model, path, standardization=std)
        loaded, std2, _, _ = load_model(path)
        probe = np.random.default_rng(26).normal(3, 3, (20, 2))
        assert np.allclose(
            loaded.predict_proba(std2.apply(probe)), model.predict_proba(std.apply(probe))
        )

    def test_unsupported_version(self, tmp_path):
        import json

        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": 42}))
        from palpbench.learn import ModelIoError

        with pytest.raises(ModelIoError):
            load_model(path)
