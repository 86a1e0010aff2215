"""
=============================================================================
INGESTAO - Leitura e validacao do conjunto de observacoes
=============================================================================

Le um CSV com cabecalho e monta o ObservationSet:
- coluna de tratamento G (0/1)
- coluna de desfecho B (0/1)
- coluna de rotulo opcional (ex.: id do pais-ano)
- covariaveis numericas

Valores ausentes em uma covariavel so sao aceitos quando existe a coluna
indicadora "<coluna>_missing"; nesse caso o valor ausente vira 0.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ObservationSet:
    """Conjunto de observacoes (x_i, G_i, B_i)."""

    X: np.ndarray
    G: np.ndarray
    B: np.ndarray
    feature_names: Tuple[str, ...] = ()
    labels: Optional[Tuple[str, ...]] = None
    imputed: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.G = np.asarray(self.G).astype(np.int8)
        self.B = np.asarray(self.B).astype(np.int8)
        n = self.X.shape[0]

        if self.G.shape != (n,) or self.B.shape != (n,):
            raise ValueError(f"G e B devem ter {n} elementos (linhas de X)")
        for nome, v in (("G", self.G), ("B", self.B)):
            if not np.all((v == 0) | (v == 1)):
                raise ValueError(f"{nome} deve conter apenas 0 e 1")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("Covariaveis com valores nao finitos")
        if not self.feature_names:
            self.feature_names = tuple(f"x{j + 1}" for j in range(self.X.shape[1]))
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names deve ter um nome por coluna de X")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels deve ter um rotulo por linha")

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def resumo(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "tratados": int(self.G.sum()),
            "desfechos": int(self.B.sum()),
            "imputados": dict(self.imputed),
        }


@dataclass(frozen=True)
class DataSchema:
    """Nomes das colunas no CSV de entrada."""

    treatment: str = "G"
    outcome: str = "B"
    label: Optional[str] = None
    covariates: Optional[Tuple[str, ...]] = None
    missing_suffix: str = "_missing"


def _binaria(serie: pd.Series, nome: str) -> np.ndarray:
    valores = pd.to_numeric(serie, errors="coerce")
    invalido = ~valores.isin([0, 1])
    if invalido.any():
        linha = int(np.flatnonzero(invalido.to_numpy())[0])
        raise ValueError(
            f"Coluna '{nome}' deve ser 0/1; valor invalido '{serie.iloc[linha]}' na linha {linha + 1}"
        )
    return valores.to_numpy().astype(np.int8)


def from_frame(df: pd.DataFrame, schema: DataSchema = DataSchema()) -> ObservationSet:
    """Monta o ObservationSet a partir de um DataFrame ja carregado."""
    obrigatorias = [schema.treatment, schema.outcome] + ([schema.label] if schema.label else [])
    faltando = [c for c in obrigatorias if c not in df.columns]
    if faltando:
        raise ValueError(f"Colunas obrigatorias ausentes: {faltando}")

    G = _binaria(df[schema.treatment], schema.treatment)
    B = _binaria(df[schema.outcome], schema.outcome)

    if schema.covariates is not None:
        covariaveis = list(schema.covariates)
        faltando = [c for c in covariaveis if c not in df.columns]
        if faltando:
            raise ValueError(f"Covariaveis ausentes no arquivo: {faltando}")
    else:
        covariaveis = [c for c in df.columns if c not in obrigatorias]
    if not covariaveis:
        raise ValueError("Nenhuma covariavel encontrada")

    colunas = []
    imputados = {}
    for c in covariaveis:
        bruto = df[c]
        valores = pd.to_numeric(bruto, errors="coerce")

        nao_numerico = valores.isna() & bruto.notna()
        if nao_numerico.any():
            linha = int(np.flatnonzero(nao_numerico.to_numpy())[0])
            raise ValueError(f"Valor nao numerico '{bruto.iloc[linha]}' na coluna '{c}', linha {linha + 1}")

        ausente = valores.isna()
        if ausente.any():
            indicadora = f"{c}{schema.missing_suffix}"
            if indicadora not in df.columns:
                linha = int(np.flatnonzero(ausente.to_numpy())[0])
                raise ValueError(
                    f"Valor ausente na coluna '{c}', linha {linha + 1}, sem a coluna indicadora '{indicadora}'"
                )
            marcada = pd.to_numeric(df[indicadora], errors="coerce").eq(1).to_numpy()
            sem_marca = ausente.to_numpy() & ~marcada
            if sem_marca.any():
                linha = int(np.flatnonzero(sem_marca)[0])
                raise ValueError(
                    f"Valor ausente na coluna '{c}', linha {linha + 1}, com a indicadora '{indicadora}' diferente de 1"
                )
            valores = valores.fillna(0.0)
            imputados[c] = int(ausente.sum())

        arr = valores.to_numpy(dtype=float)
        if not np.all(np.isfinite(arr)):
            linha = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"Valor nao finito na coluna '{c}', linha {linha + 1}")
        colunas.append(arr)

    if imputados:
        logger.info("Valores ausentes imputados com 0: %s", imputados)

    rotulos = tuple(str(v) for v in df[schema.label]) if schema.label else None
    return ObservationSet(
        X=np.column_stack(colunas),
        G=G,
        B=B,
        feature_names=tuple(covariaveis),
        labels=rotulos,
        imputed=imputados,
    )


def ingest_csv(path: Union[str, Path], schema: DataSchema = DataSchema()) -> ObservationSet:
    """
    Le o CSV e valida as colunas.

    Raises:
        FileNotFoundError: se o arquivo nao existe
        ValueError: em qualquer violacao de formato (a mensagem indica a linha)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Arquivo de dados nao encontrado: {path}")

    df = pd.read_csv(path)
    if df.empty:
        raise ValueError(f"Arquivo de dados sem linhas: {path}")

    dados = from_frame(df, schema)
    logger.info("Dados carregados de %s: %s", path, dados.resumo())
    return dados


def schema_from_config(cfg: dict) -> DataSchema:
    covs: Optional[Sequence[str]] = cfg.get("covariates")
    return DataSchema(
        treatment=cfg.get("treatment", "G"),
        outcome=cfg.get("outcome", "B"),
        label=cfg.get("label"),
        covariates=tuple(covs) if covs else None,
        missing_suffix=cfg.get("missing_suffix", "_missing"),
    )
