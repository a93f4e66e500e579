import numpy as np
import pytest
from hypothesis import given, strategies as st

from certgraph import gnn, pipeline
from certgraph.division import DivisionConfig, HashSpec, SubgraphFamily
from certgraph.gnn import ModelParams, TrainConfig
from certgraph.graph import Graph, GraphTaskDataset
from certgraph.pipeline import CertifiedResult, GuardError, build, certified_accuracy_curve, certify
from certgraph.voting import Certificate, VoteTally, certified_size

from conftest import GOLDEN

FAST = TrainConfig(epochs=30)


def _bias_params(bias, d=8, h=2):
    C = len(bias)
    return ModelParams(np.zeros((d, h)), np.zeros((h, h)), np.zeros((h, C)), np.asarray(bias, float))


def _ensemble(params, ds, mode="edge_centric"):
    cfg = DivisionConfig(mode, len(params), ds.task)
    return pipeline.Ensemble(cfg, TrainConfig(task=ds.task), tuple(params), ds.num_classes,
                             pipeline._feature_dim(ds), pipeline.dataset_digest(ds))


def _result(correct, P):
    return CertifiedResult(0, 0, 0 if correct else 1, Certificate(0, 1, P), VoteTally((1, 0)))


class TestBuild:
    def test_six_checkpoints_bit_identical(self, sbm):
        cfg = DivisionConfig(S=6)
        a = build(sbm, cfg, FAST)
        b = build(sbm, cfg, FAST)
        assert a.S == 6
        assert all(p.identical(q) for p, q in zip(a.params, b.params))

    def test_parallel_matches_serial(self, sbm):
        cfg = DivisionConfig(S=3)
        a = build(sbm, cfg, TrainConfig(epochs=5))
        b = build(sbm, cfg, TrainConfig(epochs=5), jobs=2)
        assert all(p.identical(q) for p, q in zip(a.params, b.params))

    def test_single_classifier_certifies_nothing(self, sbm):
        ens = build(sbm, DivisionConfig(S=1), FAST)
        assert all(r.certificate.certified_size == 0 for r in certify(ens, sbm))

    def test_graph_task_three_training_graphs(self):
        rng = np.random.default_rng(0)
        graphs = [Graph(rng.standard_normal((4, 2)), [(0, 1), (1, 2), (2, 3)]) for _ in range(5)]
        ds = GraphTaskDataset(graphs, [0, 1, 0, 1, 0], [0, 1, 2], [], [3, 4], 2)
        ens = build(ds, DivisionConfig(S=4, task="graph"), TrainConfig(epochs=5, task="graph"))
        assert ens.S == 4 and len(certify(ens, ds)) == 2

    def test_task_mismatch(self, sbm):
        with pytest.raises(ValueError):
            build(sbm, DivisionConfig(S=2), TrainConfig(task="graph"))

    def test_training_error_names_classifier(self, sbm):
        with pytest.raises(gnn.TrainingError, match="classifier 1"):
            build(sbm, DivisionConfig(S=2), TrainConfig(epochs=3, learning_rate=1e300))

    def test_manifest_records_provenance(self, sbm):
        m = build(sbm, DivisionConfig(S=2), TrainConfig(epochs=2)).manifest()
        assert m["dataset_digest"] == pipeline.dataset_digest(sbm)
        assert m["training"]["global_seed"] == 0 and m["division"]["S"] == 2


class TestCertify:
    def test_unanimous_six(self, sbm):
        ens = _ensemble([_bias_params([1.0, 0.0])] * 6, sbm)
        res = certify(ens, sbm)
        assert {r.certificate.certified_size for r in res} == {3}
        assert {r.prediction for r in res} == {0}

    def test_split_three_three(self, sbm):
        ens = _ensemble([_bias_params([1.0, 0.0])] * 3 + [_bias_params([0.0, 1.0])] * 3, sbm, "node_centric")
        r = certify(ens, sbm)[0]
        assert r.tally.counts == (3, 3) and r.prediction == 0 and r.certificate.certified_size == 0

    def test_correct_flag(self, sbm):
        res = certify(_ensemble([_bias_params([1.0, 0.0])] * 2, sbm), sbm)
        assert all(r.correct == (r.label == 0) for r in res)

    def test_feature_dim_mismatch(self, sbm):
        ens = _ensemble([_bias_params([1.0, 0.0], d=3)], sbm)
        with pytest.raises(ValueError):
            certify(ens, sbm)

    @pytest.mark.parametrize("mode", ["edge", "node"])
    def test_golden_run(self, sbm, mode):
        cfg = DivisionConfig(mode, 6, "node", HashSpec("md5"))
        res = certify(build(sbm, cfg, TrainConfig()), sbm)
        curve = certified_accuracy_curve(res, 3)
        assert pipeline.results_csv(res) == (GOLDEN / f"sbm_{mode}_results.csv").read_text()
        assert pipeline.curve_csv(curve) == (GOLDEN / f"sbm_{mode}_curve.csv").read_text()

    @pytest.mark.parametrize("mode", ["edge", "node"])
    def test_golden_rows_consistent_with_votes(self, mode):
        """Recompute winner, runner-up and P from each recorded tally by hand."""
        lines = (GOLDEN / f"sbm_{mode}_results.csv").read_text().splitlines()[1:]
        for line in lines:
            item, label, pred, runner, P, correct, votes = line.split(",")
            n = [int(v) for v in votes.split()]
            a = 0 if n[0] >= n[1] else 1
            b = 1 - a
            assert (int(pred), int(runner)) == (a, b)
            assert int(P) == max(0, (n[a] - n[b] - (a > b)) // 2)
            assert int(correct) == (label == pred)
            assert sum(n) == 6


class TestCurve:
    def test_all_correct_certified(self):
        curve = certified_accuracy_curve([_result(True, 2), _result(True, 3)], 3)
        assert [a for _, a in curve] == [1.0, 1.0, 1.0, 0.5]

    def test_no_correct(self):
        assert [a for _, a in certified_accuracy_curve([_result(False, 3)] * 3, 2)] == [0.0, 0.0, 0.0]

    def test_empty(self):
        with pytest.raises(ValueError):
            certified_accuracy_curve([], 2)

    @given(items=st.lists(st.tuples(st.booleans(), st.integers(0, 10)), min_size=1, max_size=30))
    def test_non_increasing(self, items):
        curve = certified_accuracy_curve([_result(c, p) for c, p in items], 12)
        accs = [a for _, a in curve]
        assert all(x >= y for x, y in zip(accs, accs[1:]))
        assert accs[0] == sum(c for c, _ in items) / len(items)

    def test_csv_format(self):
        assert pipeline.curve_csv([(0, 1.0), (1, 2 / 3)]) == "p,certified_accuracy\n0,1.000000\n1,0.666667\n"


def _everything_everywhere(graph, config):
    return SubgraphFamily(graph, config, (graph,) * config.S)


class TestFuzz:
    def test_small_run_is_clean(self, sbm):
        r = pipeline.soundness_fuzz(sbm, DivisionConfig("node_centric", 4), FAST, trials=3, seed=2)
        assert r.trials + r.skipped == 3
        assert r.violations == 0 and r.surrogate_mismatches == 0
        assert "violations: 0" in r.summary()

    def test_guard(self, sbm):
        with pytest.raises(GuardError, match="S <= 10"):
            pipeline.soundness_fuzz(sbm, DivisionConfig(S=50), FAST, trials=1)

    def test_broken_division_is_caught(self, sbm):
        r = pipeline.soundness_fuzz(sbm, DivisionConfig(S=4), TrainConfig(epochs=5), trials=5,
                                    divide_fn=_everything_everywhere, stop_on_violation=True)
        assert r.bound_violations >= 1
        rec = r.failures[0]
        assert rec.differing_sets > rec.budget and rec.perturbation.edits

    def test_constructed_flip_beyond_certificate(self):
        """A budget of P+1 aimed at the critical classifiers can flip a prediction."""
        votes = VoteTally((4, 2))
        P = certified_size(votes).certified_size
        assert P == 1
        flipped = VoteTally((4 - (P + 1), 2 + (P + 1)))
        assert certified_size(flipped).winner == 1


class TestSweeps:
    def test_hash_sweep_rejects_decimal(self, sbm):
        with pytest.raises(ValueError):
            pipeline.hash_sweep(sbm, DivisionConfig(S=2), FAST, hashes=("decimal-test",))

    def test_s_sweep_keys(self, sbm):
        out = pipeline.s_sweep(sbm, DivisionConfig(S=2), TrainConfig(epochs=3), [1, 2], max_p=1)
        assert sorted(out) == [1, 2] and all(len(c) == 2 for c, _ in out.values())

    def test_hash_sweep_three_curves(self, sbm):
        out = pipeline.hash_sweep(sbm, DivisionConfig(S=2), TrainConfig(epochs=3))
        assert sorted(out) == ["md5", "sha1", "sha256"]
