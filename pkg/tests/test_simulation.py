"""
=============================================================================
TESTES DO MÓDULO SIMULATION
=============================================================================
Testa os processos geradores, os estimandos oráculo e a orquestração das
tabelas de simulação.
"""

import numpy as np
import pytest
from scipy import special

from densities import Gaussian
from probit_bart import BartConfig
from projection import estimands
from simulation import (
    BivariateProbitConfig,
    Laplace,
    NonlinearDGPConfig,
    bivariate_density,
    bivariate_tau,
    gen_bivariate_probit,
    gen_nonlinear,
    monotonicity_experiment,
    nonlinear_functions,
    oracle_estimands,
    _metricas,
    recovery_experiment,
    run_table,
)


# =============================================================================
# PROBIT BIVARIADO
# =============================================================================

class TestBivariateProbit:
    """Gerador com regressor endógeno e verdade em forma fechada."""

    def test_coeficientes_nulos_celulas_iguais(self, rng):
        cfg = BivariateProbitConfig(n=40_000, beta0=0, beta1=0, alpha0=0, alpha1=0, rho=0.0, gamma=0.0)
        sim = gen_bivariate_probit(cfg, rng)
        G, B = sim.data.G, sim.data.B
        for g in (0, 1):
            for b in (0, 1):
                assert np.mean((G == g) & (B == b)) == pytest.approx(0.25, abs=0.01)

    def test_gamma_zero_tau_um(self, rng):
        cfg = BivariateProbitConfig(n=100, gamma=0.0)
        sim = gen_bivariate_probit(cfg, rng)
        np.testing.assert_allclose(sim.tau, 1.0)

    def test_tau_contra_monte_carlo(self, rng):
        cfg = BivariateProbitConfig(n=1, p=5, gamma=1.75)
        x = np.full((1, 5), 0.1)
        eta = cfg.alpha0 + cfg.alpha1 * x.sum()
        e2 = rng.standard_normal(400_000)
        p_do1 = np.mean(eta + e2 >= -cfg.gamma)
        p_do0 = np.mean(eta + e2 >= 0)
        assert bivariate_tau(cfg, x)[0] == pytest.approx(p_do1 / p_do0, rel=0.02)

    def test_densidade_equivalente(self):
        """Com f = N(0, rho/(1-rho)) a projecao reproduz o tau bivariado."""
        rho = 0.4
        cfg = BivariateProbitConfig(n=1, rho=rho, gamma=1.0)
        X = np.array([[0.2, -0.5, 0.1, 0.0, 0.3], [-0.9, 0.4, 0.8, -0.2, 0.5]])
        d = bivariate_density(rho)
        eta = cfg.alpha0 + cfg.alpha1 * X.sum(axis=1)
        escala = np.sqrt(1.0 + d.sd ** 2)
        est = estimands(eta * escala, (eta + cfg.gamma) * escala, d)
        np.testing.assert_allclose(est.tau, bivariate_tau(cfg, X), rtol=1e-8)

    def test_mapeamento_de_rho(self):
        assert bivariate_density(0.5).sd == pytest.approx(1.0)
        with pytest.raises(ValueError, match="rho"):
            bivariate_density(0.0)

    def test_configuracao_invalida(self):
        with pytest.raises(ValueError, match="rho"):
            BivariateProbitConfig(n=10, rho=1.0)
        with pytest.raises(ValueError, match="gamma"):
            BivariateProbitConfig(n=10, gamma=-1.0)


# =============================================================================
# PROCESSO NAO LINEAR
# =============================================================================

class TestNonlinear:
    """Funções estruturais e oráculo."""

    def test_funcoes_na_origem(self):
        b0, b1, g = nonlinear_functions(np.zeros((1, 10)))
        assert b0[0] == pytest.approx(-1.75)
        assert b1[0] == pytest.approx(-0.25)
        assert g[0] == pytest.approx(-0.625)

    def test_coordenadas_de_ruido_sem_efeito(self, rng):
        X = rng.uniform(-1, 1, size=(50, 10))
        Y = X.copy()
        ruido = [2, 3, 6, 7, 8, 9]
        Y[:, ruido] = rng.uniform(-1, 1, size=(50, len(ruido)))
        for a, b in zip(nonlinear_functions(X), nonlinear_functions(Y)):
            np.testing.assert_array_equal(a, b)

    def test_tau_oraculo_na_origem(self):
        o = oracle_estimands(np.array([-1.75]), np.array([-0.25]), Gaussian(0.0, 1.0))
        assert o.tau[0] == pytest.approx(3.98, abs=0.01)

    def test_acrr_oraculo(self, rng):
        X = rng.uniform(-1, 1, size=(200_000, 10))
        b0, b1, _ = nonlinear_functions(X)
        assert oracle_estimands(b0, b1, Gaussian(0.0, 1.0)).acrr == pytest.approx(4.43, abs=0.06)

    def test_gerador(self, rng):
        sim = gen_nonlinear(NonlinearDGPConfig(n=300), rng)
        assert sim.data.n == 300
        assert sim.data.p == 10
        np.testing.assert_allclose(sim.b1 - sim.b0, 1.5)

    def test_p_minimo(self):
        with pytest.raises(ValueError, match="p deve ser >= 6"):
            NonlinearDGPConfig(n=10, p=5)

    def test_densidade_verdadeira_explicita(self):
        d = Laplace(0.0, 1.0)
        assert NonlinearDGPConfig(n=10, density=d).true_density() is d
        assert NonlinearDGPConfig(n=10, mu=1.0, sigma=2.0).true_density() == Gaussian(1.0, 2.0)


class TestLaplace:
    """Laplace parametrizada pelo desvio padrão."""

    def test_quadratura_momentos(self):
        d = Laplace(0.5, 1.3)
        regra = d.quadrature()
        assert regra.weights.sum() == pytest.approx(1.0)
        assert regra.nodes @ regra.weights == pytest.approx(0.5, abs=1e-8)
        assert ((regra.nodes - 0.5) ** 2) @ regra.weights == pytest.approx(1.3 ** 2, rel=1e-6)

    def test_amostragem(self, rng):
        amostra = Laplace(0.0, 2.0).sample(rng, 200_000)
        assert amostra.std() == pytest.approx(2.0, rel=0.02)

    def test_sd_invalido(self):
        with pytest.raises(ValueError, match="Desvio padrao"):
            Laplace(0.0, 0.0)


# =============================================================================
# TABELAS
# =============================================================================

class TestRunTable:
    """Orquestração das tabelas de simulação."""

    def test_tabela_desconhecida(self, config_minima):
        with pytest.raises(ValueError, match="Tabela desconhecida"):
            run_table("inexistente", 100, config_minima, seed=1)

    def test_n_invalido(self, config_minima):
        with pytest.raises(ValueError, match="n deve ser"):
            run_table("evalue", 0, config_minima, seed=1)

    def test_tabela_evalue_pequena(self, config_minima):
        tabela = run_table("evalue", 60, config_minima, seed=4)
        assert len(tabela) == 5
        assert {"density", "rr_obs_mean", "evalue_mean", "tau_mean", "rel_dev_mean", "seed"} <= set(tabela.columns)

    def test_recuperacao_rapida(self, config_minima):
        cfg = BivariateProbitConfig(n=150, rho=0.4, gamma=1.0)
        rel = recovery_experiment(cfg, config_minima, bivariate_density(0.4), seed=3)
        assert rel.seed == 3
        assert rel.acrr_true > 1.0
        assert np.isfinite(rel.acrr_est)

    def test_metricas_usam_as_mesmas_linhas(self):
        tau_true = np.array([1.0, 2.0, 3.0, 100.0])
        tau_est = np.array([1.5, 2.0, 2.5, np.inf])
        G = np.array([1, 0, 1, 0])
        rel = _metricas(tau_true, tau_est, G, seed=0, label="N(0,sd=1)")
        assert rel.n_infinite == 1
        assert rel.acrr_true == pytest.approx(2.0)
        assert rel.acrr_est == pytest.approx(2.0)
        assert rel.acrrc_true == pytest.approx(2.0)

    @pytest.mark.slow
    def test_recuperacao_bivariada(self):
        cfg = BivariateProbitConfig(n=10_000, rho=0.25, gamma=1.0)
        fit = BartConfig(n_trees=50, burn_in=500, n_draws=500)
        rel = recovery_experiment(cfg, fit, bivariate_density(0.25), seed=2024)
        assert 2.0 <= rel.acrr_est <= 4.0
        assert rel.icrr_cor >= 0.70

    @pytest.mark.slow
    def test_recuperacao_nao_linear(self):
        cfg = NonlinearDGPConfig(n=10_000)
        fit = BartConfig(n_trees=50, burn_in=500, n_draws=500)
        rel = recovery_experiment(cfg, fit, Gaussian(0.0, 1.0), seed=2024)
        assert rel.acrr_true == pytest.approx(4.43, abs=0.1)
        assert abs(rel.acrr_est - rel.acrr_true) <= 0.35 * rel.acrr_true

    @pytest.mark.slow
    def test_monotonicidade_melhora_correlacao(self):
        cfg = BivariateProbitConfig(n=3000, rho=0.25, gamma=1.0)
        fit = BartConfig(n_trees=50, burn_in=500, n_draws=500)
        tabela = monotonicity_experiment(cfg, fit, seeds=[1, 2, 3])
        assert (tabela["cor_monotone"] >= tabela["cor_unconstrained"] - 0.01).all()
