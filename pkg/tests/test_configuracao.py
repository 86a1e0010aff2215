"""
=============================================================================
TESTES DO MÓDULO CONFIGURACAO
=============================================================================
"""

from pathlib import Path

import pytest

from configuracao import DENSIDADES_PADRAO, RunConfig, aplicar_flags, carregar_config, config_from_dict
from densities import Gaussian, Sharkfin


@pytest.fixture(autouse=True)
def ambiente_limpo(monkeypatch):
    for nome in ("MBART_SEED", "MBART_THREADS", "MBART_OUTPUT_DIR", "MBART_QUADRATURE_NODES"):
        monkeypatch.delenv(nome, raising=False)


@pytest.fixture
def arquivo_toml(tmp_path) -> Path:
    caminho = tmp_path / "execucao.toml"
    caminho.write_text(
        """
[bart]
n_trees = 30
burn_in = 50
n_draws = 40

[projecao]
mode = "mean-only"
draws = 100

[dados]
treatment = "going_concern"
outcome = "bankrupt"
label = "firma"

[[densidades]]
kind = "gaussian"
sd = 0.5

[[densidades]]
kind = "sharkfin"
q = 0.25
variance = 1.0
""",
        encoding="utf-8",
    )
    return caminho


class TestCarregarConfig:
    """Leitura do TOML com os padrões do ambiente."""

    def test_sem_arquivo_usa_padroes(self):
        config = carregar_config()
        assert config.seed == 2024
        assert config.threads == 1
        assert config.densities == DENSIDADES_PADRAO
        assert config.mode == "per-draw"

    def test_arquivo_completo(self, arquivo_toml):
        config = carregar_config(arquivo_toml)
        assert config.bart.n_trees == 30
        assert config.bart.eta == 0.95
        assert config.mode == "mean-only"
        assert config.n_subsample == 100
        assert config.schema.treatment == "going_concern"
        assert config.schema.label == "firma"
        assert config.densities[0] == Gaussian(0.0, 0.5)
        assert isinstance(config.densities[1], Sharkfin)
        assert config.densities[1].moments()[1] == pytest.approx(1.0, abs=1e-6)

    def test_variaveis_de_ambiente(self, monkeypatch):
        monkeypatch.setenv("MBART_SEED", "77")
        monkeypatch.setenv("MBART_OUTPUT_DIR", "saida_teste")
        config = carregar_config()
        assert config.seed == 77
        assert config.output_dir == Path("saida_teste")

    def test_ambiente_invalido(self, monkeypatch):
        monkeypatch.setenv("MBART_THREADS", "muitas")
        with pytest.raises(ValueError, match="MBART_THREADS"):
            carregar_config()

    def test_arquivo_sobrepoe_ambiente(self, monkeypatch):
        monkeypatch.setenv("MBART_SEED", "77")
        config = config_from_dict({"execucao": {"seed": 5}})
        assert config.seed == 5

    def test_chave_bart_desconhecida(self):
        with pytest.raises(ValueError, match="Chaves desconhecidas"):
            config_from_dict({"bart": {"arvores": 10}})

    def test_densidade_sem_parametro(self):
        with pytest.raises(ValueError, match="sd"):
            config_from_dict({"densidades": [{"kind": "gaussian"}]})

    def test_toml_invalido(self, tmp_path):
        caminho = tmp_path / "ruim.toml"
        caminho.write_text("[bart\nn_trees = ", encoding="utf-8")
        with pytest.raises(ValueError, match="invalido"):
            carregar_config(caminho)

    def test_arquivo_inexistente(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            carregar_config(tmp_path / "nao_existe.toml")


class TestRunConfig:
    """Validação e flags da CLI."""

    def test_modo_invalido(self):
        with pytest.raises(ValueError, match="Modo de projecao"):
            RunConfig(mode="tudo")

    def test_flags_sobrepoem(self):
        config = aplicar_flags(RunConfig(), seed=9, threads=None, bart_n_trees=12, bart_burn_in=None)
        assert config.seed == 9
        assert config.threads == 1
        assert config.bart.n_trees == 12
        assert config.bart.burn_in == 2000

    def test_sem_flags_devolve_o_mesmo(self):
        config = RunConfig()
        assert aplicar_flags(config, seed=None) is config

    def test_spec_de_sensibilidade(self):
        spec = RunConfig(restarts=1, nodes=32).sensitivity_spec()
        assert spec.restarts == 1
        assert spec.nodes == 32
        assert spec.densities == DENSIDADES_PADRAO

    def test_rotulos_das_densidades(self):
        config = config_from_dict({
            "densidades": [
                {"kind": "gaussian", "sd": 0.5, "label": "Fraca"},
                {"kind": "sharkfin", "q": 0.25, "s": 0.5, "label": "Shark A"},
                {"kind": "gaussian", "sd": 1.0},
            ]
        })
        assert [d.label for d in config.densities] == ["Fraca", "Shark A", "N(0,sd=1)"]
