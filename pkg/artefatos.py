"""
=============================================================================
ARTEFATOS - Persistencia dos draws da forma reduzida e das tabelas
=============================================================================

O artefato binario separa o ajuste (caro) da projecao (barata): a
projecao pode ser refeita com outras densidades sem reajustar o BART.

Formato do arquivo (.rfd):
- 8 bytes: assinatura MAGIC
- 2 bytes: versao (uint16, little endian)
- 4 bytes: tamanho N do cabecalho (uint32, little endian)
- N bytes: cabecalho JSON (metadados, colunas, shapes)
- payload: colunas na ordem do cabecalho, float64 / int8 little endian, C-order

Tabelas de resultado sao CSV com linhas de comentario "# chave=valor"
no inicio (semente, densidades, modo) e sem carimbo de tempo.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from reduced_form import ReducedFormDraws

logger = logging.getLogger(__name__)

# =============================================================================
# CONFIGURACAO
# =============================================================================

MAGIC = b"MBARTRF\x00"
VERSAO = 1
EXTENSAO = ".rfd"
NOME_PADRAO = "forma_reduzida" + EXTENSAO

_TIPOS = {"f8": "<f8", "i1": "|i1"}


class ArtefatoInvalidoError(ValueError):
    """Arquivo que nao e um artefato valido ou de versao incompativel."""


def inicializar_diretorio(diretorio: Union[str, Path]) -> Path:
    """Cria o diretorio de saida se ainda nao existir."""
    diretorio = Path(diretorio)
    diretorio.mkdir(parents=True, exist_ok=True)
    return diretorio


# =============================================================================
# ARTEFATO BINARIO
# =============================================================================

def _colunas(draws: ReducedFormDraws) -> Dict[str, np.ndarray]:
    colunas = {"pG": draws.pG, "pB1": draws.pB1, "pB0": draws.pB0}
    if draws.G is not None:
        colunas["G"] = np.asarray(draws.G, dtype=np.int8)
    if draws.B is not None:
        colunas["B"] = np.asarray(draws.B, dtype=np.int8)
    if draws.X is not None:
        colunas["X"] = np.asarray(draws.X, dtype=np.float64)
    return colunas


def salvar_draws(draws: ReducedFormDraws, caminho: Union[str, Path]) -> Path:
    """
    Grava o artefato binario.

    Returns:
        Caminho do arquivo gravado
    """
    caminho = Path(caminho)
    inicializar_diretorio(caminho.parent)

    colunas = _colunas(draws)
    cabecalho = {
        "versao": VERSAO,
        "n_draws": draws.n_draws,
        "n_obs": draws.n_obs,
        "layout": ["draw", "obs"],
        "colunas": [
            {"nome": nome, "tipo": "i1" if v.dtype == np.int8 else "f8", "shape": list(v.shape)}
            for nome, v in colunas.items()
        ],
        "feature_names": list(draws.feature_names),
        "labels": list(draws.labels) if draws.labels is not None else None,
        "metadata": draws.metadata,
    }
    texto = json.dumps(cabecalho, sort_keys=True, ensure_ascii=True).encode("utf-8")

    with open(caminho, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSAO, len(texto)))
        f.write(texto)
        for nome, v in colunas.items():
            tipo = _TIPOS["i1" if v.dtype == np.int8 else "f8"]
            f.write(np.ascontiguousarray(v, dtype=tipo).tobytes())

    logger.info("Artefato gravado: %s (%d draws x %d obs)", caminho, draws.n_draws, draws.n_obs)
    return caminho


def ler_cabecalho(caminho: Union[str, Path]) -> dict:
    """Le so o cabecalho (metadados) de um artefato."""
    with open(caminho, "rb") as f:
        return _ler_cabecalho(f, caminho)


def _ler_cabecalho(f, caminho) -> dict:
    assinatura = f.read(len(MAGIC))
    if assinatura != MAGIC:
        raise ArtefatoInvalidoError(f"Arquivo nao e um artefato de forma reduzida: {caminho}")
    bruto = f.read(6)
    if len(bruto) != 6:
        raise ArtefatoInvalidoError(f"Artefato truncado: {caminho}")
    versao, tamanho = struct.unpack("<HI", bruto)
    if versao != VERSAO:
        raise ArtefatoInvalidoError(
            f"Versao de artefato incompativel: {versao} (esperada {VERSAO}) em {caminho}"
        )
    try:
        return json.loads(f.read(tamanho).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArtefatoInvalidoError(f"Cabecalho corrompido em {caminho}: {e}") from e


def carregar_draws(caminho: Union[str, Path]) -> ReducedFormDraws:
    """
    Le o artefato binario.

    Raises:
        FileNotFoundError: se o arquivo nao existe
        ArtefatoInvalidoError: assinatura, versao ou tamanho invalidos
    """
    caminho = Path(caminho)
    if not caminho.exists():
        raise FileNotFoundError(f"Artefato nao encontrado: {caminho}")

    with open(caminho, "rb") as f:
        cabecalho = _ler_cabecalho(f, caminho)
        colunas = {}
        for col in cabecalho["colunas"]:
            tipo = np.dtype(_TIPOS[col["tipo"]])
            shape = tuple(col["shape"])
            n_bytes = int(np.prod(shape, dtype=np.int64)) * tipo.itemsize
            bruto = f.read(n_bytes)
            if len(bruto) != n_bytes:
                raise ArtefatoInvalidoError(f"Coluna '{col['nome']}' truncada em {caminho}")
            colunas[col["nome"]] = np.frombuffer(bruto, dtype=tipo).reshape(shape).copy()

    labels = cabecalho.get("labels")
    return ReducedFormDraws(
        pG=colunas["pG"],
        pB1=colunas["pB1"],
        pB0=colunas["pB0"],
        metadata=cabecalho.get("metadata", {}),
        G=colunas.get("G"),
        B=colunas.get("B"),
        X=colunas.get("X"),
        feature_names=tuple(cabecalho.get("feature_names", [])),
        labels=tuple(labels) if labels is not None else None,
    )


def hash_artefato(caminho: Union[str, Path]) -> str:
    """Hash SHA-256 do conteudo do arquivo."""
    h = hashlib.sha256()
    with open(caminho, "rb") as f:
        for bloco in iter(lambda: f.read(1 << 20), b""):
            h.update(bloco)
    return h.hexdigest()


def exportar_csv_longo(draws: ReducedFormDraws, caminho: Union[str, Path]) -> Path:
    """Exporta os draws no formato longo: draw, obs, pG, pB1, pB0."""
    D, n = draws.n_draws, draws.n_obs
    df = pd.DataFrame({
        "draw": np.repeat(np.arange(D), n),
        "obs": np.tile(np.arange(n), D),
        "pG": draws.pG.ravel(),
        "pB1": draws.pB1.ravel(),
        "pB0": draws.pB0.ravel(),
    })
    cabecalho = {"versao": VERSAO, "seed": draws.metadata.get("seed")}
    return escrever_tabela(df, caminho, cabecalho)


def carregar_csv_longo(caminho: Union[str, Path]) -> ReducedFormDraws:
    df = pd.read_csv(caminho, comment="#")
    esperadas = ["draw", "obs", "pG", "pB1", "pB0"]
    if list(df.columns[:5]) != esperadas:
        raise ArtefatoInvalidoError(f"Colunas inesperadas no CSV {caminho}: {list(df.columns)}")
    D = int(df["draw"].max()) + 1
    n = int(df["obs"].max()) + 1
    df = df.sort_values(["draw", "obs"])
    return ReducedFormDraws(
        pG=df["pG"].to_numpy().reshape(D, n),
        pB1=df["pB1"].to_numpy().reshape(D, n),
        pB0=df["pB0"].to_numpy().reshape(D, n),
    )


# =============================================================================
# TABELAS DE RESULTADO
# =============================================================================

def escrever_tabela(
    df: pd.DataFrame,
    caminho: Union[str, Path],
    cabecalho: Optional[dict] = None,
) -> Path:
    """
    Grava um CSV com linhas "# chave=valor" antes da tabela.

    A saida so depende do conteudo (sem datas), entao a mesma
    configuracao + semente produz arquivos identicos byte a byte.
    """
    caminho = Path(caminho)
    inicializar_diretorio(caminho.parent)
    with open(caminho, "w", encoding="utf-8", newline="") as f:
        for chave, valor in (cabecalho or {}).items():
            f.write(f"# {chave}={valor}\n")
        df.to_csv(f, index=False, float_format="%.10g", lineterminator="\n")
    return caminho


def ler_tabela(caminho: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(caminho, comment="#")


def ler_comentarios(caminho: Union[str, Path]) -> dict:
    """Le as linhas "# chave=valor" do inicio de uma tabela."""
    comentarios = {}
    with open(caminho, encoding="utf-8") as f:
        for linha in f:
            if not linha.startswith("#"):
                break
            chave, _, valor = linha[1:].strip().partition("=")
            comentarios[chave.strip()] = valor.strip()
    return comentarios
