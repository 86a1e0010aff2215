"""
=============================================================================
CONFIGURACAO - Parametros de execucao (ambiente + arquivo TOML + CLI)
=============================================================================

Precedencia: flags da CLI > arquivo TOML > variaveis de ambiente (.env)
> valores padrao.

Variaveis de ambiente:
    MBART_SEED              semente mestre (padrao 2024)
    MBART_THREADS           paralelismo (padrao 1)
    MBART_OUTPUT_DIR        diretorio de saida (padrao "resultados")
    MBART_QUADRATURE_NODES  nos de quadratura (padrao 64)

Exemplo de arquivo:

    [bart]
    n_trees = 100
    burn_in = 2000
    n_draws = 2000

    [projecao]
    mode = "per-draw"
    draws = 500

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
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from densities import ASYMMETRIC_MIXTURE, SYMMETRIC_MIXTURE, ConfounderDensity, Gaussian, Sharkfin, density_from_config
from ingestao import DataSchema, schema_from_config
from probit_bart import BartConfig
from projection import MODOS, SensitivitySpec
from subgroup import PROFUNDIDADE_PADRAO, RESPOSTAS

logger = logging.getLogger(__name__)

# =============================================================================
# PADROES
# =============================================================================

SEMENTE_PADRAO = 2024
THREADS_PADRAO = 1
SAIDA_PADRAO = "resultados"
NOS_PADRAO = 64

# Conjunto usado quando o arquivo nao define [[densidades]]
DENSIDADES_PADRAO: Tuple[ConfounderDensity, ...] = (
    Gaussian(0.0, 0.1),
    Gaussian(0.0, 0.5),
    Gaussian(0.0, 1.0),
    Sharkfin(0.25, 0.5),
    Sharkfin(0.75, 1.25),
    SYMMETRIC_MIXTURE,
    ASYMMETRIC_MIXTURE,
)


def _env_int(nome: str, padrao: int) -> int:
    valor = os.getenv(nome)
    if valor is None or valor == "":
        return padrao
    try:
        return int(valor)
    except ValueError as e:
        raise ValueError(f"Variavel de ambiente {nome} deve ser inteira, recebido: '{valor}'") from e


@dataclass
class RunConfig:
    """Tudo o que uma execucao da CLI precisa."""

    bart: BartConfig = field(default_factory=BartConfig)
    densities: Tuple[ConfounderDensity, ...] = DENSIDADES_PADRAO
    mode: str = "per-draw"
    n_subsample: int = 500
    xatol: float = 1e-8
    fatol: float = 1e-12
    max_iter: int = 4000
    restarts: int = 3
    nodes: int = NOS_PADRAO
    schema: DataSchema = field(default_factory=DataSchema)
    max_depth: int = PROFUNDIDADE_PADRAO
    min_leaf: Optional[int] = None
    response: str = "tau"
    n_monitor: int = 1000
    seed: int = SEMENTE_PADRAO
    threads: int = THREADS_PADRAO
    output_dir: Path = Path(SAIDA_PADRAO)

    def __post_init__(self):
        if self.mode not in MODOS:
            raise ValueError(f"Modo de projecao invalido: '{self.mode}'. Use um de {MODOS}")
        if self.response not in RESPOSTAS:
            raise ValueError(f"Resposta de subgrupo invalida: '{self.response}'. Use um de {RESPOSTAS}")
        if self.threads < 1:
            raise ValueError(f"threads deve ser >= 1, recebido: {self.threads}")
        if self.n_subsample < 1:
            raise ValueError(f"draws da projecao deve ser >= 1, recebido: {self.n_subsample}")
        self.output_dir = Path(self.output_dir)

    def sensitivity_spec(self) -> SensitivitySpec:
        return SensitivitySpec(
            densities=self.densities,
            xatol=self.xatol,
            fatol=self.fatol,
            max_iter=self.max_iter,
            restarts=self.restarts,
            nodes=self.nodes,
        )


def _bart_de_dict(secao: dict) -> BartConfig:
    validos = {f.name for f in fields(BartConfig)}
    desconhecidos = set(secao) - validos
    if desconhecidos:
        raise ValueError(f"Chaves desconhecidas em [bart]: {sorted(desconhecidos)}")
    return BartConfig(**secao)


def config_from_dict(dados: dict) -> RunConfig:
    """Monta o RunConfig a partir do dict do TOML, com padroes do ambiente."""
    kwargs = {
        "seed": _env_int("MBART_SEED", SEMENTE_PADRAO),
        "threads": _env_int("MBART_THREADS", THREADS_PADRAO),
        "output_dir": Path(os.getenv("MBART_OUTPUT_DIR") or SAIDA_PADRAO),
        "nodes": _env_int("MBART_QUADRATURE_NODES", NOS_PADRAO),
    }

    if "bart" in dados:
        kwargs["bart"] = _bart_de_dict(dados["bart"])

    projecao = dados.get("projecao", {})
    for chave, destino in (
        ("mode", "mode"), ("draws", "n_subsample"), ("xatol", "xatol"), ("fatol", "fatol"),
        ("max_iter", "max_iter"), ("restarts", "restarts"), ("nodes", "nodes"),
    ):
        if chave in projecao:
            kwargs[destino] = projecao[chave]

    if "dados" in dados:
        kwargs["schema"] = schema_from_config(dados["dados"])

    subgrupo = dados.get("subgrupo", {})
    for chave in ("max_depth", "min_leaf", "response"):
        if chave in subgrupo:
            kwargs[chave] = subgrupo[chave]

    if "n_monitor" in dados.get("diagnostico", {}):
        kwargs["n_monitor"] = int(dados["diagnostico"]["n_monitor"])

    execucao = dados.get("execucao", {})
    for chave in ("seed", "threads", "output_dir"):
        if chave in execucao:
            kwargs[chave] = execucao[chave]

    if "densidades" in dados:
        densidades = [density_from_config(d) for d in dados["densidades"]]
        if not densidades:
            raise ValueError("[[densidades]] vazio: informe pelo menos uma densidade")
        kwargs["densities"] = tuple(densidades)

    return RunConfig(**kwargs)


def carregar_config(caminho: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Le o arquivo TOML (se informado) e aplica os padroes do ambiente.

    Raises:
        FileNotFoundError: se o caminho nao existe
        ValueError: se o TOML e invalido ou tem parametros invalidos
    """
    if caminho is None:
        return config_from_dict({})

    caminho = Path(caminho)
    if not caminho.exists():
        raise FileNotFoundError(f"Arquivo de configuracao nao encontrado: {caminho}")
    try:
        with open(caminho, "rb") as f:
            dados = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ValueError(f"Arquivo de configuracao invalido ({caminho}): {e}") from e

    config = config_from_dict(dados)
    logger.info("Configuracao carregada de %s (%d densidade(s))", caminho, len(config.densities))
    return config


def aplicar_flags(config: RunConfig, **flags) -> RunConfig:
    """Sobrescreve campos com as flags da CLI que foram informadas."""
    mudancas = {k: v for k, v in flags.items() if v is not None}
    bart = {k[len("bart_"):]: mudancas.pop(k) for k in list(mudancas) if k.startswith("bart_")}
    if bart:
        mudancas["bart"] = replace(config.bart, **bart)
    return replace(config, **mudancas) if mudancas else config
