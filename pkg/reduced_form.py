"""
=============================================================================
FORMA REDUZIDA - Draws conjuntos de Pr(G=1|x), Pr(B=1|x,G=1), Pr(B=1|x,G=0)
=============================================================================

Ajusta duas cadeias independentes:
1. Tratamento: probit BART de G em x
2. Desfecho: BART monotono de B em (x, G)

As sementes das cadeias saem de SeedSequence(semente).spawn(2), entao o
resultado so depende da semente mestre, com ou sem paralelismo.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import NamedTuple, Optional

import numpy as np

from ingestao import ObservationSet
from monotone_bart import fit_monotone
from probit_bart import BartConfig, fit_probit_bart

try:
    from joblib import Parallel, delayed
    JOBLIB_DISPONIVEL = True
except ImportError:
    JOBLIB_DISPONIVEL = False

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ReducedFormDraws:
    """
    Draws da forma reduzida, matrizes (D, n) float64.

    O draw d de pG e o draw d de (pB1, pB0) formam a amostra conjunta d.
    """

    pG: np.ndarray
    pB1: np.ndarray
    pB0: np.ndarray
    metadata: dict = field(default_factory=dict)
    G: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None
    feature_names: tuple = ()
    labels: Optional[tuple] = None

    def __post_init__(self):
        self.pG = np.asarray(self.pG, dtype=np.float64)
        self.pB1 = np.asarray(self.pB1, dtype=np.float64)
        self.pB0 = np.asarray(self.pB0, dtype=np.float64)
        if not (self.pG.shape == self.pB1.shape == self.pB0.shape) or self.pG.ndim != 2:
            raise ValueError(
                f"pG, pB1 e pB0 devem ter o mesmo shape (D, n): "
                f"{self.pG.shape}, {self.pB1.shape}, {self.pB0.shape}"
            )

    @property
    def n_draws(self) -> int:
        return int(self.pG.shape[0])

    @property
    def n_obs(self) -> int:
        return int(self.pG.shape[1])

    def check_invariants(self, tol: float = 0.0):
        """Probabilidades em [0, 1] e pB1 >= pB0 em todo draw."""
        for nome in ("pG", "pB1", "pB0"):
            v = getattr(self, nome)
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError(f"{nome} fora de [0, 1]")
        if np.any(self.pB1 < self.pB0 - tol):
            raise ValueError("Monotonicidade violada: pB1 < pB0 em algum draw")

    def posterior_means(self):
        return self.pG.mean(axis=0), self.pB1.mean(axis=0), self.pB0.mean(axis=0)

    def rr_obs(self) -> np.ndarray:
        """Razao de risco observada pB1 / pB0 por draw e observacao."""
        with np.errstate(divide="ignore"):
            return self.pB1 / self.pB0

    def select(self, draws: np.ndarray) -> "ReducedFormDraws":
        return ReducedFormDraws(
            self.pG[draws], self.pB1[draws], self.pB0[draws], dict(self.metadata),
            self.G, self.B, self.X, self.feature_names, self.labels,
        )


class CellProbabilities(NamedTuple):
    """Probabilidades das celulas, indice (B, G)."""

    p11: np.ndarray
    p10: np.ndarray
    p01: np.ndarray

    @property
    def p00(self):
        return 1.0 - self.p11 - self.p10 - self.p01


def cell_probabilities(pG, pB1, pB0) -> CellProbabilities:
    """
    (Pr(B=1,G=1), Pr(B=1,G=0), Pr(B=0,G=1)) a partir da forma reduzida.
    """
    pG = np.asarray(pG, dtype=float)
    pB1 = np.asarray(pB1, dtype=float)
    pB0 = np.asarray(pB0, dtype=float)
    return CellProbabilities(p11=pB1 * pG, p10=pB0 * (1.0 - pG), p01=(1.0 - pB1) * pG)


# =============================================================================
# AJUSTE
# =============================================================================

def _cadeia_tratamento(X, G, config, seed_seq):
    return fit_probit_bart(X, G, config, rng=np.random.default_rng(seed_seq)).prob


def _cadeia_desfecho(X, G, B, config, seed_seq):
    draws = fit_monotone(X, G, B, config, rng=np.random.default_rng(seed_seq))
    return draws.pB1, draws.pB0


def _executar(tarefas, threads: int):
    if threads > 1 and JOBLIB_DISPONIVEL:
        return Parallel(n_jobs=min(threads, len(tarefas)))(delayed(f)(*args) for f, args in tarefas)
    return [f(*args) for f, args in tarefas]


def fit_reduced_form(
    dataset: ObservationSet,
    config: BartConfig = BartConfig(),
    seed: int = 2024,
    threads: int = 1,
) -> ReducedFormDraws:
    """
    Ajusta tratamento e desfecho e alinha os draws pelo indice.

    Args:
        dataset: observacoes
        config: hiperparametros BART (iguais nas duas cadeias)
        seed: semente mestre
        threads: > 1 roda as duas cadeias em paralelo (joblib)
    """
    if dataset.n == 0:
        raise ValueError("Conjunto de observacoes vazio")

    inicio = datetime.now().isoformat(timespec="seconds")
    seq_tratamento, seq_desfecho = np.random.SeedSequence(seed).spawn(2)

    logger.info("Ajustando forma reduzida: n=%d, p=%d, semente=%d", dataset.n, dataset.p, seed)
    pG, (pB1, pB0) = _executar(
        [
            (_cadeia_tratamento, (dataset.X, dataset.G, config, seq_tratamento)),
            (_cadeia_desfecho, (dataset.X, dataset.G, dataset.B, config, seq_desfecho)),
        ],
        threads,
    )

    metadata = {
        "seed": int(seed),
        "config": config.to_dict(),
        "inicio": inicio,
        "fim": datetime.now().isoformat(timespec="seconds"),
        "n_obs": dataset.n,
        "n_covariaveis": dataset.p,
    }
    draws = ReducedFormDraws(
        pG=pG, pB1=pB1, pB0=pB0, metadata=metadata,
        G=dataset.G, B=dataset.B, X=dataset.X,
        feature_names=tuple(dataset.feature_names), labels=dataset.labels,
    )
    draws.check_invariants()
    return draws
