"""Quick check of the Python bindings.

    pip install --no-build-isolation ./crates/py   # or: maturin develop -m crates/py/Cargo.toml
    python python/smoke_test.py
"""

import tempfile

import qcosa


def main():
    assert len(qcosa.LANDMARKS) == 18

    base, cohort = qcosa.phantom(per_class=6, seed=3, width=33, height=33)
    assert len(cohort) == 12
    labels = [s.label for s in cohort]
    assert labels.count("osa") == labels.count("control") == 6
    assert len(base.pixels) == 33 * 33

    reg = qcosa.register_subjects(base, cohort[0])
    assert len(reg.map) == len(reg.mu) == 33 * 33
    assert all(abs(m) < 1 for m in reg.mu)
    assert reg.landmark_residual < 0.5

    windows, distances = qcosa.extract_features(base, cohort[0], window=9)
    assert len(windows) == 15 * 81
    assert all(d > 0 for d in distances)

    assert abs(qcosa.deformation_index(0.5 + 0j, 1.0, 0.0) - 0.5) < 1e-12

    t, df, p = qcosa.welch_t_test([1.0, 2.0, 3.0, 4.0], [2.5, 3.5, 4.5, 5.5])
    assert 0 < p < 1 and t < 0 and df > 0

    rows = [[float(i % 2) + 0.01 * i, 0.3 * i] for i in range(10)]
    lab = ["osa" if i % 2 else "control" for i in range(10)]
    pv = qcosa.bagged_p_values(rows, lab)
    assert qcosa.select_top_k(pv, 1) == [0]

    model = qcosa.ThresholdModel.train([[r[0]] for r in rows], lab)
    assert model.predict([0.0])[0] == "control"
    assert model.predict([1.2])[0] == "osa"

    pred = ["osa", "control", "control", "control"]
    truth = ["osa", "osa", "control", "control"]
    assert qcosa.confusion_metrics(pred, truth) == (0.5, 1.0, 0.75)

    w = qcosa.candidate_weights(0.25)
    assert len(w) == 3 and all(abs(a * a + b * b - 1) < 1e-12 for a, b in w)

    try:
        qcosa.select_top_k([0.1], 0)
    except qcosa.QcosaError as e:
        assert "[" in str(e)
    else:
        raise AssertionError("expected QcosaError")

    with tempfile.TemporaryDirectory() as d:
        qcosa.phantom(per_class=9, seed=5, width=33, height=33, out=d)
        subjects = qcosa.load_manifest(f"{d}/manifest.toml")
        assert len(subjects) == 18
        report = qcosa.evaluate(subjects, n_tests=1, k=20, rho=0.5, folds=3, seed=1)
        assert "[aggregate]" in report and "qc-threshold" in report

    print("python smoke test ok")


if __name__ == "__main__":
    main()
