"""
=============================================================================
CONFTEST - Fixtures compartilhadas para os testes
=============================================================================
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Adiciona o diretorio raiz ao path para importar os modulos
sys.path.insert(0, str(Path(__file__).parent.parent))

from ingestao import ObservationSet
from probit_bart import BartConfig
from reduced_form import ReducedFormDraws


# =============================================================================
# FIXTURES DE CONFIGURACAO
# =============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def config_pequena() -> BartConfig:
    """BART reduzido para os testes rodarem em segundos."""
    return BartConfig(n_trees=20, n_cutpoints=100, burn_in=100, n_draws=100, min_leaf_size=5)


@pytest.fixture
def config_minima() -> BartConfig:
    return BartConfig(n_trees=5, n_cutpoints=20, burn_in=10, n_draws=20, min_leaf_size=2)


# =============================================================================
# FIXTURES DE DADOS
# =============================================================================

@pytest.fixture
def observacoes(rng) -> ObservationSet:
    """200 linhas de um probit simples com efeito positivo do tratamento."""
    n = 200
    X = rng.uniform(-1, 1, size=(n, 3))
    G = (rng.random(n) < 0.4 + 0.2 * (X[:, 0] > 0)).astype(np.int8)
    pB = np.where(G == 1, 0.5, 0.2) + 0.1 * X[:, 1]
    B = (rng.random(n) < pB).astype(np.int8)
    return ObservationSet(X, G, B, feature_names=("x1", "x2", "x3"), labels=tuple(f"f{i}" for i in range(n)))


@pytest.fixture
def draws_sinteticos(rng) -> ReducedFormDraws:
    """
    Draws de forma reduzida gerados diretamente (sem MCMC): 40 draws x 6
    observacoes, com pB1 >= pB0 em todos.
    """
    D, n = 40, 6
    base_g = np.array([0.2, 0.35, 0.5, 0.3, 0.6, 0.45])
    base_b0 = np.array([0.05, 0.1, 0.15, 0.08, 0.2, 0.12])
    razao = np.array([3.0, 2.0, 1.5, 4.0, 1.2, 2.5])
    ruido = lambda: rng.normal(0, 0.01, size=(D, n))
    pG = np.clip(base_g + ruido(), 0.05, 0.95)
    pB0 = np.clip(base_b0 + ruido(), 0.01, 0.3)
    pB1 = np.clip(pB0 * razao, pB0, 0.95)
    G = np.array([1, 0, 1, 0, 1, 0], dtype=np.int8)
    B = np.array([1, 0, 0, 0, 1, 1], dtype=np.int8)
    X = rng.uniform(-1, 1, size=(n, 2))
    return ReducedFormDraws(
        pG=pG, pB1=pB1, pB0=pB0, metadata={"seed": 7},
        G=G, B=B, X=X, feature_names=("x1", "x2"),
        labels=tuple(f"firma_{i}" for i in range(n)),
    )


@pytest.fixture
def csv_observacoes(tmp_path) -> Path:
    """CSV pequeno e bem formado com rotulo e covariavel com indicadora de ausencia."""
    df = pd.DataFrame({
        "firma": ["a-2001", "b-2001", "c-2002"],
        "G": [1, 0, 1],
        "B": [0, 0, 1],
        "alavancagem": [0.3, 1.2, 0.8],
        "rd": [0.1, None, 0.05],
        "rd_missing": [0, 1, 0],
    })
    caminho = tmp_path / "dados.csv"
    df.to_csv(caminho, index=False)
    return caminho
