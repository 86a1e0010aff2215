"""
=============================================================================
TESTES DO MÓDULO PROJECTION
=============================================================================
Testa o objetivo, a solução estrutural, os estimandos e a projeção da
posteriori para várias densidades.
"""

import numpy as np
import pytest
from scipy import special

from densities import Gaussian, Sharkfin, quadrature
from projection import (
    SensitivitySpec,
    aggregate,
    estimands,
    model_cells,
    objective,
    project_posterior,
    results_table,
    solve_many,
    solve_structural,
    unit_posteriors,
)
from reduced_form import ReducedFormDraws, cell_probabilities


def _alvos(pG, pB1, pB0):
    c = cell_probabilities(pG, pB1, pB0)
    return [float(c.p11), float(c.p10), float(c.p01)]


# =============================================================================
# OBJETIVO E SOLUCAO
# =============================================================================

class TestObjective:
    """Distância na escala probit."""

    def test_zero_no_ponto_verdadeiro(self):
        d = Gaussian(0.0, 0.5)
        alvos = model_cells(-1.0, 0.2, -0.5, d)
        assert objective(-1.0, 0.2, -0.5, alvos, d) < 1e-16

    def test_positivo_fora_do_ponto(self):
        d = Gaussian(0.0, 0.5)
        alvos = model_cells(-1.0, 0.2, -0.5, d)
        assert objective(-0.5, 0.2, -0.5, alvos, d) > 1e-4

    def test_alvo_no_limite_avisa(self):
        d = Gaussian(0.0, 1.0)
        with pytest.warns(UserWarning, match="limitadas"):
            valor = objective(0.0, 0.5, 0.0, [0.0, 0.2, 0.3], d)
        assert np.isfinite(valor)


class TestSolveStructural:
    """Inversão da forma reduzida para (b0, b1, g)."""

    def test_recupera_parametros(self):
        d = Gaussian(0.0, 0.5)
        alvos = model_cells(-1.0, 0.2, -0.5, d)
        s = solve_structural(alvos, d)
        assert s.converged
        assert s.b0 == pytest.approx(-1.0, abs=1e-4)
        assert s.b1 == pytest.approx(0.2, abs=1e-4)
        assert s.g == pytest.approx(-0.5, abs=1e-4)

    def test_recupera_com_sharkfin(self):
        d = Sharkfin.from_variance(0.5, 1.0)
        alvos = model_cells(-0.8, 0.1, 0.3, d)
        s = solve_structural(alvos, d)
        assert s.b1 >= s.b0
        assert s.objective < 1e-6

    def test_sem_confundimento_devolve_rr_observado(self):
        """Com f quase pontual em 0, tau = pB1 / pB0."""
        d = Gaussian(0.0, 1e-3)
        s = solve_structural(_alvos(0.3, 0.25, 0.05), d)
        est = estimands(s.b0, s.b1, d)
        assert float(est.tau) == pytest.approx(5.0, rel=0.01)

    def test_sem_associacao_tau_um(self):
        d = Gaussian(0.0, 1e-3)
        s = solve_structural(_alvos(0.4, 0.2, 0.2), d)
        assert s.b1 >= s.b0
        assert float(estimands(s.b0, s.b1, d).tau) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize(
        "d, celulas",
        [
            (Gaussian(0.0, 0.5), (0.3, 0.25, 0.05)),
            (Gaussian(0.0, 1.0), (0.6, 0.4, 0.1)),
            (Sharkfin.from_variance(0.25, 0.5), (0.2, 0.3, 0.1)),
        ],
    )
    def test_resolver_de_novo_nao_melhora(self, d, celulas):
        alvos = _alvos(*celulas)
        s = solve_structural(alvos, d)
        de_novo = solve_structural(alvos, d, init=(s.b0, s.b1, s.g))
        assert s.objective - de_novo.objective <= 1e-12

    def test_ponto_inicial_explicito(self):
        d = Gaussian(0.0, 0.5)
        alvos = model_cells(-1.0, 0.2, -0.5, d)
        s = solve_structural(alvos, d, init=(-0.9, 0.1, -0.4))
        assert s.b0 == pytest.approx(-1.0, abs=1e-4)


# =============================================================================
# ESTIMANDOS E AGREGADOS
# =============================================================================

class TestEstimands:
    """Pr(B=1|do(g)), tau e Delta."""

    def test_b_iguais_tau_um(self):
        est = estimands(-0.4, -0.4, Gaussian(0.0, 1.0))
        assert float(est.tau) == pytest.approx(1.0)
        assert float(est.delta) == pytest.approx(0.0)

    def test_forma_fechada_gaussiana(self):
        """int Phi(b+u) N(u; 0, s) du = Phi(b / sqrt(1 + s^2))."""
        s = 0.8
        b0, b1 = np.array([-1.2, 0.0]), np.array([0.3, 0.5])
        est = estimands(b0, b1, Gaussian(0.0, s))
        esperado0 = special.ndtr(b0 / np.sqrt(1 + s * s))
        esperado1 = special.ndtr(b1 / np.sqrt(1 + s * s))
        np.testing.assert_allclose(est.pDo0, esperado0, atol=1e-10)
        np.testing.assert_allclose(est.tau, esperado1 / esperado0, rtol=1e-8)

    def test_b1_menor_que_b0(self):
        with pytest.raises(ValueError, match="b1 >= b0"):
            estimands(0.5, 0.2, Gaussian(0.0, 1.0))

    def test_underflow_marcado(self):
        est = estimands(np.array([-60.0]), np.array([0.0]), Gaussian(0.0, 1e-3))
        assert est.underflow[0]
        assert np.isinf(est.tau[0])


class TestAggregate:
    """ACRR e versões condicionadas."""

    def test_media_simples(self):
        a = aggregate([1.0, 3.0], [0.1, 0.3])
        assert a.acrr == pytest.approx(2.0)
        assert a.delta_mean == pytest.approx(0.2)

    def test_tratados_e_controles(self):
        a = aggregate([1.0, 3.0, 5.0], [0.0, 0.0, 0.0], G=[1, 0, 1])
        assert a.acrr_treated == pytest.approx(3.0)
        assert a.acrr_controls == pytest.approx(3.0)

    def test_subconjunto_booleano(self):
        a = aggregate([1.0, 3.0, 5.0], [0.0, 0.0, 0.0], subset=np.array([True, False, True]))
        assert a.acrr == pytest.approx(3.0)

    def test_subconjunto_vazio(self):
        with pytest.raises(ValueError, match="vazio"):
            aggregate([1.0, 3.0], [0.0, 0.0], subset=[])


# =============================================================================
# PROJECAO DA POSTERIORI
# =============================================================================

class TestSolveMany:
    """Resolução vetorizada."""

    def test_acrr_decresce_com_variancia(self):
        """Mais confundimento explica mais da associação observada."""
        taus = []
        for sd in (0.1, 0.5, 1.0):
            sol = solve_many([0.4], [0.3], [0.1], Gaussian(0.0, sd))
            taus.append(float(sol.tau[0]))
        assert taus[0] > taus[1] > taus[2] >= 1.0 - 1e-6

    def test_ordem_preservada(self):
        d = Gaussian(0.0, 0.3)
        pG = np.array([0.3, 0.5, 0.7])
        pB1 = np.array([0.4, 0.2, 0.6])
        pB0 = np.array([0.1, 0.2, 0.3])
        sol = solve_many(pG, pB1, pB0, d)
        for i in range(3):
            s = solve_structural(_alvos(pG[i], pB1[i], pB0[i]), d)
            assert sol.b0[i] == pytest.approx(s.b0, abs=1e-6)


class TestProjectPosterior:
    """Projeção por draw e nas médias."""

    def test_modo_invalido(self, draws_sinteticos):
        spec = SensitivitySpec(densities=(Gaussian(0.0, 0.5),))
        with pytest.raises(ValueError, match="Modo invalido"):
            project_posterior(draws_sinteticos, spec, mode="todos")

    def test_spec_sem_densidade(self):
        with pytest.raises(ValueError, match="pelo menos uma"):
            SensitivitySpec(densities=())

    def test_por_draw(self, draws_sinteticos):
        spec = SensitivitySpec(densities=(Gaussian(0.0, 0.5), Sharkfin.from_variance(0.5, 1.0)))
        resultados = project_posterior(draws_sinteticos, spec, n_subsample=8, seed=1)
        assert len(resultados) == 2
        r = resultados[0]
        assert r.tau.shape == (8, 6)
        assert r.acrr.shape == (8,)
        assert np.all(np.diff(r.draw_index) > 0)
        assert np.all(r.tau >= 1.0 - 1e-6)

    def test_draws_constantes_igualam_medias(self, draws_sinteticos):
        D = 5
        linha = lambda v: np.repeat(v[:1], D, axis=0)
        constantes = ReducedFormDraws(
            linha(draws_sinteticos.pG), linha(draws_sinteticos.pB1), linha(draws_sinteticos.pB0),
            G=draws_sinteticos.G,
        )
        spec = SensitivitySpec(densities=(Gaussian(0.0, 0.5),))
        por_draw = project_posterior(constantes, spec, mode="per-draw")[0]
        medias = project_posterior(constantes, spec, mode="mean-only")[0]
        np.testing.assert_allclose(por_draw.acrr, medias.acrr[0], rtol=1e-6)

    def test_tabela_de_resultados(self, draws_sinteticos):
        spec = SensitivitySpec(densities=(Gaussian(0.0, 0.5),))
        resultados = project_posterior(draws_sinteticos, spec, mode="mean-only")
        tabela = results_table(resultados)
        assert list(tabela.columns) == [
            "density", "acrr_mean", "acrr_2.5", "acrr_97.5", "delta_mean",
            "delta_2.5", "delta_97.5", "acrrt_mean", "acrrc_mean", "nonconvergence",
        ]
        assert tabela.loc[0, "density"] == "N(0,sd=0.5)"

    def test_posteriori_por_unidade(self, draws_sinteticos):
        spec = SensitivitySpec(densities=(Gaussian(0.0, 0.5),))
        r = project_posterior(draws_sinteticos, spec, n_subsample=6, seed=2)[0]
        tabela = unit_posteriors(draws_sinteticos, r)
        assert len(tabela) == 6
        assert tabela["label"].tolist() == list(draws_sinteticos.labels)
        assert np.all(tabela["tau_2.5"] <= tabela["tau_97.5"])

    def test_reprodutivel_com_semente(self, draws_sinteticos):
        spec = SensitivitySpec(densities=(Gaussian(0.0, 0.5),))
        a = project_posterior(draws_sinteticos, spec, n_subsample=4, seed=3)[0]
        b = project_posterior(draws_sinteticos, spec, n_subsample=4, seed=3)[0]
        np.testing.assert_array_equal(a.draw_index, b.draw_index)
        np.testing.assert_array_equal(a.tau, b.tau)
