"""
=============================================================================
TESTES DO MÓDULO ARTEFATOS
=============================================================================
"""

import struct

import numpy as np
import pandas as pd
import pytest

from artefatos import (
    MAGIC,
    ArtefatoInvalidoError,
    carregar_csv_longo,
    carregar_draws,
    escrever_tabela,
    exportar_csv_longo,
    hash_artefato,
    ler_cabecalho,
    ler_comentarios,
    ler_tabela,
    salvar_draws,
)


class TestArtefatoBinario:
    """Gravação e leitura do artefato .rfd."""

    def test_leitura_devolve_os_mesmos_valores(self, draws_sinteticos, tmp_path):
        caminho = salvar_draws(draws_sinteticos, tmp_path / "sub" / "rf.rfd")
        lido = carregar_draws(caminho)
        np.testing.assert_array_equal(lido.pG, draws_sinteticos.pG)
        np.testing.assert_array_equal(lido.pB0, draws_sinteticos.pB0)
        np.testing.assert_array_equal(lido.G, draws_sinteticos.G)
        np.testing.assert_array_equal(lido.X, draws_sinteticos.X)
        assert lido.labels == draws_sinteticos.labels
        assert lido.feature_names == ("x1", "x2")
        assert lido.metadata == {"seed": 7}

    def test_cabecalho(self, draws_sinteticos, tmp_path):
        caminho = salvar_draws(draws_sinteticos, tmp_path / "rf.rfd")
        cabecalho = ler_cabecalho(caminho)
        assert cabecalho["n_draws"] == 40
        assert cabecalho["n_obs"] == 6
        assert [c["nome"] for c in cabecalho["colunas"]] == ["pG", "pB1", "pB0", "G", "B", "X"]

    def test_assinatura_invalida(self, tmp_path):
        caminho = tmp_path / "lixo.rfd"
        caminho.write_bytes(b"NAOEARTEFATO" + bytes(32))
        with pytest.raises(ArtefatoInvalidoError, match="nao e um artefato"):
            carregar_draws(caminho)

    def test_versao_incompativel(self, tmp_path):
        caminho = tmp_path / "futuro.rfd"
        caminho.write_bytes(MAGIC + struct.pack("<HI", 99, 2) + b"{}")
        with pytest.raises(ArtefatoInvalidoError, match="Versao"):
            carregar_draws(caminho)

    def test_arquivo_truncado(self, draws_sinteticos, tmp_path):
        caminho = salvar_draws(draws_sinteticos, tmp_path / "rf.rfd")
        caminho.write_bytes(caminho.read_bytes()[:-100])
        with pytest.raises(ArtefatoInvalidoError, match="truncada"):
            carregar_draws(caminho)

    def test_arquivo_inexistente(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            carregar_draws(tmp_path / "nada.rfd")

    def test_hash_estavel(self, draws_sinteticos, tmp_path):
        a = salvar_draws(draws_sinteticos, tmp_path / "a.rfd")
        b = salvar_draws(draws_sinteticos, tmp_path / "b.rfd")
        assert hash_artefato(a) == hash_artefato(b)
        assert len(hash_artefato(a)) == 64


class TestTabelas:
    """CSV longo e tabelas com comentários."""

    def test_csv_longo(self, draws_sinteticos, tmp_path):
        caminho = exportar_csv_longo(draws_sinteticos, tmp_path / "draws.csv")
        df = ler_tabela(caminho)
        assert len(df) == 40 * 6
        assert list(df.columns) == ["draw", "obs", "pG", "pB1", "pB0"]
        assert ler_comentarios(caminho)["seed"] == "7"

        lido = carregar_csv_longo(caminho)
        np.testing.assert_allclose(lido.pB1, draws_sinteticos.pB1, rtol=1e-9)

    def test_csv_longo_colunas_erradas(self, tmp_path):
        caminho = tmp_path / "ruim.csv"
        pd.DataFrame({"a": [1], "b": [2]}).to_csv(caminho, index=False)
        with pytest.raises(ArtefatoInvalidoError, match="Colunas inesperadas"):
            carregar_csv_longo(caminho)

    def test_comentarios_no_inicio(self, tmp_path):
        df = pd.DataFrame({"density": ["N(0,sd=1)"], "acrr_mean": [2.5]})
        caminho = escrever_tabela(df, tmp_path / "t.csv", {"seed": 11, "mode": "per-draw"})
        linhas = caminho.read_text(encoding="utf-8").splitlines()
        assert linhas[:2] == ["# seed=11", "# mode=per-draw"]
        assert ler_comentarios(caminho) == {"seed": "11", "mode": "per-draw"}
        pd.testing.assert_frame_equal(ler_tabela(caminho), df)

    def test_saida_identica_byte_a_byte(self, tmp_path):
        df = pd.DataFrame({"x": [0.1, 1 / 3], "y": ["a", "b"]})
        a = escrever_tabela(df, tmp_path / "a.csv", {"seed": 1})
        b = escrever_tabela(df, tmp_path / "b.csv", {"seed": 1})
        assert a.read_bytes() == b.read_bytes()
