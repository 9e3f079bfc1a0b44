import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from azwhite import GraphSignal
from azwhite.graph import DynamicGraph, complete_graph
from azwhite.harness import (
    REPORT_COLUMNS,
    ExperimentConfig,
    clopper_pearson,
    default_graph,
    format_residual_table,
    gpvar_optimality_experiment,
    load_config,
    residual_analysis,
    run_calibration,
    run_experiment,
    run_power_sweep,
    run_sparse_vs_complete,
    workers_from_env,
)
from azwhite.signalgen import DEFAULT_THETA, GpvarParams, gen_white

SMALL = dict(T=(60,), R=8, seed=1)


class TestConfig:
    def test_defaults_and_grids(self):
        cfg = ExperimentConfig(T=100, c=[0.0, 0.1], distributions="chi2:1")
        assert cfg.T == (100,) and cfg.c == (0.0, 0.1)
        assert cfg.distributions[0].name == "chi2:1"

    @pytest.mark.parametrize(
        "kwargs",
        [dict(R=0), dict(T=()), dict(coupling="diagonal"), dict(edge_modes=("dense",)), dict(T=1), dict(c=-0.1)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_coupling(self):
        assert ExperimentConfig(coupling="both").coefficients(0.2) == (0.2, 0.2)
        assert ExperimentConfig(coupling="spatial").coefficients(0.2) == (0.2, 0.0)
        assert ExperimentConfig(coupling="temporal").coefficients(0.2) == (0.0, 0.2)

    def test_workers_from_env(self, monkeypatch):
        monkeypatch.delenv("AZW_THREADS", raising=False)
        assert workers_from_env() == 1
        monkeypatch.setenv("AZW_THREADS", "3")
        assert workers_from_env() == 3
        monkeypatch.setenv("AZW_THREADS", "0")
        assert workers_from_env() >= 1

    def test_load_config(self):
        text = """
        # calibration grid
        T = 100, 200
        dist = gauss, chi2:5
        c = 0
        R = 25
        lambda = 0, 0.5, 1
        seed = 9
        graph_kind = erdos_renyi
        n = 12
        p = 0.5
        graph_seed = 3
        """
        cfg = load_config(text)
        assert cfg.T == (100, 200) and cfg.R == 25 and cfg.seed == 9
        assert cfg.lambdas == (0.0, 0.5, 1.0)
        assert [d.name for d in cfg.distributions] == ["gauss", "chi2:5"]
        assert cfg.graph.n_nodes == 12

    def test_load_config_errors(self):
        with pytest.raises(ValueError, match="line 1"):
            load_config("colour = blue")
        with pytest.raises(ValueError, match="line 2"):
            load_config("R = 3\nnonsense")
        with pytest.raises(ValueError, match="loader"):
            load_config("graph = g.tsv")


class TestClopperPearson:
    # Reference values by root-finding on the binomial tails.
    @pytest.mark.parametrize(
        "k, n, lo, hi",
        [
            (0, 10, 0.0, 0.30849710781876083),
            (5, 10, 0.18708602844739852, 0.8129139715526015),
            (10, 10, 0.6915028921812392, 1.0),
            (99, 100, 0.9455406146079194, 0.9997468539670226),
            (5, 200, 0.008166166190842502, 0.05737435112684582),
        ],
    )
    def test_values(self, k, n, lo, hi):
        a, b = clopper_pearson(k, n)
        assert a == pytest.approx(lo, abs=1e-12) and b == pytest.approx(hi, abs=1e-12)


class TestExperiments:
    def test_report_shape_and_rates(self):
        cfg = ExperimentConfig(c=(0.0, 0.3), lambdas=(0.0, 0.5, 1.0), distributions=("gauss", "unifmix"), **SMALL)
        rep = run_experiment(cfg)
        assert len(rep.cells) == 2 * 2 * 3
        for cell in rep.cells:
            assert cell.rate == cell.rejections / cell.R
            assert cell.ci_lo <= cell.rate <= cell.ci_hi
            assert 0 <= cell.mean_p <= 1

    def test_csv_columns(self):
        rep = run_experiment(ExperimentConfig(**SMALL))
        lines = rep.to_csv().splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert lines[0] == "dist,c_sp,c_tm,T,F,lambda,mode,R,rejections,rate,ci_lo,ci_hi"
        assert len(lines) == 2
        assert '"lambda": 0.5' in rep.to_json()

    def test_single_repetition(self):
        rep = run_calibration(ExperimentConfig(T=(50,), R=1, seed=2))
        assert rep.cells[0].rate in (0.0, 1.0)

    def test_calibration_needs_zero_grid(self):
        with pytest.raises(ValueError):
            run_calibration(ExperimentConfig(c=(0.1,), **SMALL))

    def test_power_needs_two_levels(self):
        with pytest.raises(ValueError):
            run_power_sweep(ExperimentConfig(c=(0.1,), **SMALL))

    def test_deterministic_and_thread_independent(self):
        cfg = ExperimentConfig(c=(0.0, 0.1), distributions=("chi2mix",), **SMALL)
        a = run_experiment(cfg).to_csv()
        assert run_experiment(cfg).to_csv() == a
        assert run_experiment(replace(cfg, workers=3)).to_csv() == a

    def test_paired_across_modes_and_lambdas(self):
        base = ExperimentConfig(c=(0.0, 0.05), coupling="spatial", **SMALL)
        wide = replace(base, edge_modes=("sparse", "complete"), lambdas=(0.5, 1.0))
        narrow = run_experiment(base)
        rich = run_experiment(wide)
        for cell in narrow.cells:
            twin = rich.get(c_sp=cell.c_sp, mode="sparse", **{"lambda": 0.5})
            assert (twin.rejections, twin.mean_abs_c, twin.mean_p) == (cell.rejections, cell.mean_abs_c, cell.mean_p)

    def test_complete_mode_edges(self):
        g = complete_graph(default_graph().nodes)
        assert g.n_edges == 30 * 29 // 2

    def test_sparse_vs_complete_under_null(self):
        rep = run_sparse_vs_complete(ExperimentConfig(T=(100,), R=100, seed=4))
        for cell in rep.cells:
            assert cell.c_tm == 0.0
            assert 0.0 <= cell.rate <= 0.12
        assert {c.mode for c in rep.cells} == {"sparse", "complete"}

    def test_power_grows_with_length(self):
        rep = run_power_sweep(ExperimentConfig(T=(50, 400), c=(0.0, 0.08), R=40, seed=5))
        short, long_ = rep.get(T=50, c_sp=0.08), rep.get(T=400, c_sp=0.08)
        assert long_.rate >= short.rate
        assert long_.rate > 0.5


def _white(g, T, seed):
    return gen_white(g, 1, "gauss", seed=seed, T=T)


class TestResiduals:
    G = default_graph()

    def test_constant_residuals(self):
        X = GraphSignal.from_array(np.full((20, 30), 0.7))
        rows = residual_analysis(X, self.G)
        first = rows[0]
        assert first.mae == pytest.approx(0.7)
        assert first.median_p < 0.001
        assert all(p < 1e-10 for p in first.az_p.values())
        assert rows[1].name == "residuals-m"

    def test_centred_row_median(self):
        rng = np.random.default_rng(0)
        X = GraphSignal.from_array(rng.standard_normal((40, 30)) + 0.5)
        rows = residual_analysis({"model": X}, self.G)
        assert [r.name for r in rows] == ["model", "model-m"]
        assert rows[1].median_p == pytest.approx(1.0)
        assert rows[0].median_p < 0.001

    def test_node_mismatch(self):
        X = GraphSignal.from_array(np.ones((5, 31)))
        with pytest.raises(ValueError, match=r"not in graph: \[30\]"):
            residual_analysis(X, self.G)
        Y = GraphSignal.from_array(np.ones((5, 29)))
        with pytest.raises(ValueError, match=r"without residuals: \[29\]"):
            residual_analysis(Y, self.G)

    def test_length_mismatch(self):
        X = GraphSignal.from_array(np.ones((5, 30)))
        with pytest.raises(ValueError, match="T=5"):
            residual_analysis(X, DynamicGraph.from_static(self.G, 4))

    def test_white_pvalues_uniform(self):
        ps = {0.0: [], 0.5: [], 1.0: []}
        for r in range(300):
            row = residual_analysis(_white(self.G, 40, seed=500 + r), self.G)[0]
            for lam, p in row.az_p.items():
                ps[lam].append(p)
        for lam, values in ps.items():
            assert stats.kstest(values, "uniform").pvalue > 0.01, lam

    def test_table_format(self):
        rows = residual_analysis(_white(self.G, 30, seed=1), self.G)
        text = format_residual_table(rows)
        header = text.splitlines()[0].split()
        assert header == ["MAE", "Median=0", "AZ-test(lambda=0)", "AZ-test(lambda=0.5)", "AZ-test(lambda=1)"]
        assert len(text.splitlines()) == 3

    def test_warmup_gap(self):
        X = _white(self.G, 30, seed=2)
        mask = X.mask.copy()
        mask[:2] = False
        rows = residual_analysis(GraphSignal(X.nodes, X.values, mask), self.G)
        assert all(math.isfinite(p) for p in rows[0].az_p.values())


class TestGpvarExperiment:
    def test_small_run(self):
        exp = gpvar_optimality_experiment(T=300, R=3, seed=1)
        assert exp.mae_matches_noise
        assert [r.name for r in exp.table] == ["optimal", "optimal-m", "perturbed", "perturbed-m"]
        assert set(exp.rejections) == {(n, lam) for n in ("optimal", "perturbed") for lam in (0.0, 0.5, 1.0)}
        assert 0 <= exp.rate("optimal") <= 1

    def test_mae_is_noise_mean(self):
        exp = gpvar_optimality_experiment(T=200, R=1, seed=2)
        assert exp.table[0].mae == pytest.approx(math.sqrt(2 / math.pi), abs=0.05)

    def test_structural_misspecification_detected(self):
        # Dropping the lag-2 taps leaves clear dependence in the residuals.
        wrong = GpvarParams(np.c_[DEFAULT_THETA[:, :1], np.zeros((3, 1))])
        exp = gpvar_optimality_experiment(T=3000, R=10, seed=3, perturb=wrong)
        assert exp.rate("perturbed", 0.0) >= 0.9
        assert exp.rate("perturbed", 1.0) >= 0.9
