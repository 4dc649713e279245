"""Acceptance suite: each test checks one criterion at its stated tolerance.

Every test prints (and the terminal summary repeats) a single
``PASS/FAIL criterion N: ...`` line with its wall time.
"""

import json
import time
from fractions import Fraction

import numpy as np
from scipy import stats

from acceptance_report import criterion
from golden_streams import GOLDEN, recording
from qp_oracle import dual_optimum
from penrt.cli import main
from penrt.dataset import IndicatorVector
from penrt.gaussian_regions import (
    ACTIVE_DIMS,
    fit_region_mixtures,
    gm_loocv,
    gm_predict,
    triples,
)
from penrt.ingest import extract_duration
from penrt.model_selection import (
    Config,
    ConfusionMatrix,
    GridSpec,
    loocv,
    metrics,
    nested_cv,
    repeated_kfold,
)
from penrt.svm import KernelSpec, gram
from penrt.svm.model import dual_objective, predict_many, train_csvc
from penrt.synth import reference_spec, sample_cohort
from penrt.threshold import adhoc_loocv, adhoc_train

REFERENCE_SEED = 42


# -- 1 -------------------------------------------------------------------------------


def test_criterion_01_metrics_oracle():
    with criterion(1, "exact metrics of the 25/2/1/25 confusion matrix") as rec:
        cm = ConfusionMatrix(tp=25, fp=2, fn=1, tn=25)
        start = time.perf_counter()
        m = metrics(cm)
        took = time.perf_counter() - start
        assert (m.accuracy, m.sensitivity, m.specificity) == (
            Fraction(50, 53), Fraction(25, 26), Fraction(25, 27)
        )
        assert [round(100 * float(v)) for v in (m.accuracy, m.sensitivity, m.specificity)] == [
            94, 96, 93
        ]
        rec.detail = f"call took {took * 1e3:.3f} ms"
        assert took < 1e-3


# -- 2 -------------------------------------------------------------------------------


def _oracle_bias(alpha, y, K, c):
    """Offset from the QP optimum: free points sit on the margin."""
    g = K @ (alpha * y)
    free = (alpha > 1e-6 * c) & (alpha < c * (1 - 1e-6))
    if free.any():
        return float(np.mean(y[free] - g[free]))
    # no free point: any offset inside the KKT bracket is optimal, take its middle
    lo, hi = -np.inf, np.inf
    for a, yi, gi in zip(alpha, y, g):
        at_zero = a <= 1e-6 * c
        if (yi > 0) == at_zero:
            lo = max(lo, yi - gi)
        else:
            hi = min(hi, yi - gi)
    return float((lo + hi) / 2)


def test_criterion_02_smo_against_qp_oracle():
    with criterion(2, "SMO dual optimum and predictions vs dense QP on 50 problems") as rec:
        rng = np.random.default_rng(2)
        worst, solve_time = 0.0, 0.0
        for _ in range(50):
            n = int(rng.integers(2, 9))
            X = rng.normal(size=(n, 2))
            y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
            rng.shuffle(y)
            c = float(rng.choice([0.1, 1.0, 10.0, 100.0]))
            kern = KernelSpec.rbf(float(rng.choice([0.1, 0.5, 1.0, 5.0])))
            start = time.perf_counter()
            model = train_csvc(X, y, c, kern, tol=1e-9)
            solve_time += time.perf_counter() - start
            K = gram(kern, X)
            alpha = np.zeros(n)
            for sv, coef in zip(model.support_points, model.dual_coeffs):
                i = int(np.flatnonzero((X == sv).all(axis=1))[0])
                alpha[i] = coef * y[i]
            ref, ref_alpha = dual_optimum(K, y, c)
            worst = max(worst, abs(dual_objective(alpha, y, K) - ref))
            assert abs(dual_objective(alpha, y, K) - ref) <= 1e-6
            ref_dec = K @ (ref_alpha * y) + _oracle_bias(ref_alpha, y, K, c)
            assert (predict_many(model, X) == np.where(ref_dec >= 0, 1, -1)).all()
        rec.detail = f"max |objective gap| {worst:.1e}, SMO time {solve_time:.2f} s"
        assert solve_time < 10


# -- 3 -------------------------------------------------------------------------------


def test_criterion_03_grid_enumeration():
    with criterion(3, "default grid has 12,700 configurations") as rec:
        start = time.perf_counter()
        grid = GridSpec.default()
        configs = grid.configs()
        took = time.perf_counter() - start
        assert len(grid) == len(configs) == 12_700 == 127 * 10 * 10
        assert len(set(configs)) == 12_700
        assert configs[0] == Config(IndicatorVector.from_tasks([1]), 0.1, 0.1)
        assert configs[-1] == Config(IndicatorVector.from_tasks(range(1, 8)), 100.0, 100.0)
        rec.detail = f"enumeration {took * 1e3:.1f} ms"
        assert took < 1


# -- 4 -------------------------------------------------------------------------------


def test_criterion_04_loocv_ncv_kfold_consistency():
    with criterion(4, "single-config NCV and k=n k-fold reproduce LOOCV") as rec:
        counts = {(1, "HC"): 3, (1, "ES-AD"): 2, (2, "HC"): 5, (2, "ES-AD"): 4,
                  (3, "HC"): 1, (3, "ES-AD"): 2, (4, "HC"): 1, (4, "ES-AD"): 2}
        ds = sample_cohort(reference_spec(7).with_counts(counts))
        assert len(ds) == 20
        config = Config(IndicatorVector.from_tasks([2, 4, 7]), 1.0, 2.0)
        lo = loocv(ds, config)
        nc = nested_cv(ds, GridSpec.single([2, 4, 7], 1.0, 2.0))
        assert nc.accuracy == 1 - lo.error_rate
        kf = repeated_kfold(ds, len(ds), config, repetitions=100, seed=0)
        assert set(kf.error_counts) == {lo.confusion.errors}
        rec.detail = f"LOOCV errors {lo.confusion.errors}/20, NCV accuracy {nc.accuracy}"


# -- 5 -------------------------------------------------------------------------------


def test_criterion_05_mixture_estimation():
    with criterion(5, "mixture means within 3 SE in >= 99/100 trials, exact weights") as rec:
        spec = reference_spec(0)
        cells = list(spec.counts)
        targets = {}
        for key in cells:
            cell = spec.model.cell(*key)
            std = spec.std_override.get(key, cell.std)
            for d in range(3):
                if std[d] == 0:
                    targets[(key, d)] = (cell.mean[d], 0.0)
                    continue
                upper = 15.0 if d < 2 else np.inf
                a, b = -cell.mean[d] / std[d], (upper - cell.mean[d]) / std[d]
                dist = stats.truncnorm(a, b, loc=cell.mean[d], scale=std[d])
                targets[(key, d)] = (float(dist.mean()), float(dist.std()))
        hits = {k: 0 for k in targets}
        all_ok_trials = 0
        fit_time = 0.0
        for trial in range(100):
            ds = sample_cohort(spec.with_seed(1000 + trial).with_counts({k: 500 for k in cells}))
            start = time.perf_counter()
            model = fit_region_mixtures(ds)
            fit_time += time.perf_counter() - start
            trial_ok = True
            for (key, d), (mu, sd) in targets.items():
                cell = model.cell(*key)
                assert cell.pi == Fraction(1, 2)
                if sd == 0:
                    ok = cell.mean[d] == mu
                else:
                    ok = abs(cell.mean[d] - mu) <= 3 * sd / np.sqrt(cell.n_used)
                hits[(key, d)] += ok
                trial_ok &= ok
            all_ok_trials += trial_ok
        estimable = {k: v for k, v in hits.items() if targets[k][1] > 0}
        worst = min(estimable.values())
        rec.detail = (
            f"{len(estimable)} estimable coordinates, worst {worst}/100; "
            f"trials with every coordinate inside: {all_ok_trials}/100; fit time {fit_time:.2f} s"
        )
        assert all(hits[k] == 100 for k in hits if targets[k][1] == 0)
        assert worst >= 99
        assert fit_time < 5


# -- 6 -------------------------------------------------------------------------------


def _linear_space_argmax(model, regions, X):
    """Direct pi * prod N evaluation per point, vectorised, no logs."""
    neg, pos = model.classes
    out = []
    undefined = 0
    for r, x in zip(regions, X):
        score = {}
        for lab in (neg, pos):
            cell = model.cell(r, lab)
            if not cell.usable:
                score[lab] = None
                continue
            dens = np.prod([stats.norm.pdf(x[d], cell.mean[d], cell.std[d])
                            for d in ACTIVE_DIMS[r]])
            score[lab] = float(cell.pi) * dens
        if score[neg] is None and score[pos] is None:
            pn, pp = model.cell(r, neg).pi, model.cell(r, pos).pi
            out.append(neg if pn > pp else pos)
            continue
        sn = 0.0 if score[neg] is None else score[neg]
        sp = 0.0 if score[pos] is None else score[pos]
        undefined += sn == 0 and sp == 0
        out.append(neg if sn > sp else pos)
    return out, undefined


def _points(model, rng, n):
    regions = rng.integers(1, 5, n)
    X = np.empty((n, 3))
    for i, r in enumerate(regions):
        usable = [c for c in model.classes if model.cell(r, c).mean is not None]
        cell = model.cell(r, usable[rng.integers(len(usable))])
        sd = cell.std if cell.std is not None else (0.5, 0.5, 15.0)
        for d in range(3):
            at15 = (d == 0 and r in (2, 3)) or (d == 1 and r in (2, 4))
            if at15:
                X[i, d] = 15.0
            elif d < 2:
                X[i, d] = np.clip(rng.normal(cell.mean[d], 2 * max(sd[d], 0.05)), 0, 14.999)
            else:
                X[i, d] = abs(rng.normal(cell.mean[d], 2 * sd[d]))
    return regions, X


def test_criterion_06_mixture_prediction_oracle(reference_cohort):
    with criterion(6, "gm_predict equals linear-space argmax on 10,000 points") as rec:
        rng = np.random.default_rng(6)
        models = [fit_region_mixtures(reference_cohort), reference_spec().model]
        agree, total, undefined, predict_time = 0, 0, 0, 0.0
        for model in models:
            regions, X = _points(model, rng, 5000)
            expected, undef = _linear_space_argmax(model, regions, X)
            start = time.perf_counter()
            got = [gm_predict(model, x) for x in X]
            predict_time += time.perf_counter() - start
            agree += sum(a == b for a, b in zip(got, expected))
            total += len(X)
            undefined += undef
        rec.detail = f"{agree}/{total} agree, predict time {predict_time:.2f} s"
        assert undefined == 0
        assert agree == total == 10_000
        assert predict_time < 1


# -- 7 -------------------------------------------------------------------------------


def _candidates(values, low, high):
    v = sorted(set(values))
    return np.array([low] + v + [(a + b) / 2 for a, b in zip(v, v[1:])] + [high])


def _brute_force(X, is_hc):
    """Full (p4, p7, p2) cross-product, plus the two independent sub-searches."""
    eps = 1e-7
    c4 = _candidates(X[:, 0], 0.0, 15 - eps)
    c7 = _candidates(X[:, 1], 0.0, 15 - eps)
    c2 = _candidates(X[:, 2], eps, 1e9)
    c4, c7, c2 = c4[c4 < 15], c7[c7 < 15], c2[c2 > 0]
    r2 = (X[:, 0] >= 15) & (X[:, 1] >= 15)
    A = X[None, :, 0] >= c4[:, None]
    B = X[None, :, 1] >= c7[:, None]
    C = X[None, :, 2] <= c2[:, None]
    outside = A[:, None, :] & B[None, :, :]
    joint = min(
        int(np.min(np.sum(np.where(r2, C[k], outside) != is_hc, axis=2))) for k in range(len(c2))
    )
    e2 = int(np.min(np.sum((C != is_hc)[:, r2], axis=1)))
    e47 = int(np.min(np.sum((outside != is_hc)[:, :, ~r2], axis=2)))
    return joint, e2, e47


def _random_cohort(rng):
    n = int(rng.integers(4, 61))
    spec = reference_spec(int(rng.integers(2**32)))
    weights = np.array([spec.counts[k] for k in sorted(spec.counts)], dtype=float)
    draw = rng.multinomial(n, weights / weights.sum())
    counts = dict(zip(sorted(spec.counts), (int(v) for v in draw)))
    ds = sample_cohort(spec.with_counts(counts))
    if min(ds.counts().get(c, 0) for c in ("HC", "ES-AD")) == 0:
        return _random_cohort(rng)
    return ds


def test_criterion_07_threshold_rule_optimality():
    with criterion(7, "threshold training equals full brute force on 20 cohorts") as rec:
        rng = np.random.default_rng(7)
        train_time = 0.0
        sizes = []
        for _ in range(20):
            ds = _random_cohort(rng)
            start = time.perf_counter()
            fit = adhoc_train(ds)
            train_time += time.perf_counter() - start
            _, labels, X = triples(ds)
            X = X.copy()
            X[:, :2] = np.minimum(X[:, :2], 15)
            is_hc = np.array([lab == "HC" for lab in labels])
            joint, e2, e47 = _brute_force(X, is_hc)
            assert fit.errors == joint == e2 + e47
            p = fit.params
            r2 = (X[:, 0] >= 15) & (X[:, 1] >= 15)
            says_hc = np.where(r2, X[:, 2] <= p.p2, (X[:, 0] >= p.p4) & (X[:, 1] >= p.p7))
            assert int(np.sum(says_hc != is_hc)) == fit.errors
            sizes.append(len(ds))
        rec.detail = f"cohort sizes {min(sizes)}..{max(sizes)}, training time {train_time:.2f} s"
        assert train_time < 5


# -- 8 -------------------------------------------------------------------------------


def test_criterion_08_reference_cohort_structure(reference_cohort):
    with criterion(8, "structural properties on the seeded 53-sample cohort") as rec:
        ds = reference_cohort
        tat = adhoc_train(ds).errors
        cv = adhoc_loocv(ds).confusion.errors
        gm = gm_loocv(ds)
        gm_no_t2 = gm_loocv(ds, drop_t2_outside_region2=True)
        _, labels, X = triples(ds)
        small = set()
        for r in range(1, 5):
            in_r = [lab for lab, rr in zip(labels, gm.regions) if rr == r]
            if min(in_r.count("HC"), in_r.count("ES-AD")) < 3:
                small.add(r)
        a = tat <= cv
        b = set(gm.error_regions()) <= small
        c = gm.error_ids() == gm_no_t2.error_ids()
        rec.detail = (
            f"(a) threshold train {tat} <= LOOCV {cv}: {a}; "
            f"(b) GM errors in regions {gm.error_regions()} (small: {sorted(small)}): {b}; "
            f"(c) GM errors {gm.errors} -> {gm_no_t2.errors} without t2 "
            f"{gm.error_ids()} -> {gm_no_t2.error_ids()}: {c}"
        )
        assert a
        assert b
        assert c


# -- 9 -------------------------------------------------------------------------------


def test_criterion_09_golden_durations():
    with criterion(9, "12 golden pen streams, all five modes exact") as rec:
        assert len(GOLDEN) == 12
        checked = 0
        for name, task, rows, expected in GOLDEN:
            rec_ = recording(task, rows)
            got = {m: extract_duration(rec_, m) for m in range(1, 6)}
            assert set(expected) == {1, 2, 3, 4, 5}
            for m, v in expected.items():
                assert got[m] == v, (name, m, got[m], v)
                checked += 1
            assert abs(got[5] - (got[1] - got[2])) < 1e-12, name
            if task in (4, 6, 7):
                assert got[4] == min(got[3], 15.0), name
        clamped = sum(task in (4, 6, 7) and exp[3] > 15 for _, task, _, exp in GOLDEN)
        rec.detail = f"{checked} durations checked, {clamped} clamped"
        assert clamped >= 3


# -- 10 ------------------------------------------------------------------------------


def _cli(capsys, argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    assert code == 0, argv
    return out


def test_criterion_10_cli_determinism(tmp_path, capsys):
    with criterion(10, "every CLI command: byte-identical JSON across runs and threads") as rec:
        ref = tmp_path / "ref.csv"
        streams = tmp_path / "streams"
        _cli(capsys, ["synth", "--seed", REFERENCE_SEED, "--out", ref, "--streams", streams])
        tm = tmp_path / "t.json"
        gm = tmp_path / "g.json"
        _cli(capsys, ["adhoc-train", ref, "--model-out", tm])
        _cli(capsys, ["gm-fit", ref, "--model-out", gm])
        small = ["--c", "1,10", "--gamma", "1,2"]
        commands = [
            ["synth", "--seed", REFERENCE_SEED, "--format", "json"],
            ["extract", streams, "--format", "json"],
            ["gridsearch", ref, *small],
            ["ncv", ref, "--tasks", "2,4,7", *small],
            ["kfold", ref, "--tasks", "2,4,7", "--c", "1", "--gamma", "2",
             "--k", "5", "--repetitions", "50", "--seed", "11"],
            ["gm-fit", ref],
            ["gm-eval", ref],
            ["gm-eval", ref, "--model", gm],
            ["adhoc-train", ref],
            ["adhoc-eval", ref],
            ["adhoc-eval", ref, "--model", tm],
        ]
        for argv in commands:
            outs = [_cli(capsys, argv + ["--threads", t]) for t in (1, 1, 8)]
            assert outs[0] == outs[1] == outs[2], argv[0]
            json.loads(outs[0])
        rec.detail = f"{len(commands)} invocations x 3 runs"


# -- 11 ------------------------------------------------------------------------------


def test_criterion_11_full_grid_runtime(tmp_path, capsys):
    with criterion(11, "full 12,700-config LOOCV grid on 53 samples under 600 s") as rec:
        ref = tmp_path / "ref.csv"
        _cli(capsys, ["synth", "--seed", REFERENCE_SEED, "--out", ref])
        start = time.perf_counter()
        report = json.loads(_cli(capsys, ["gridsearch", ref, "--threads", 8]))
        took = time.perf_counter() - start
        assert report["n_configurations"] == 12_700
        best = report["loocv"]["best_config"]
        rec.detail = (
            f"wall {took:.1f} s, best tasks {best['tasks']} c={best['c']:g} "
            f"gamma={best['gamma']:g}, {report['loocv']['errors']} LOOCV errors"
        )
        assert took < 600
