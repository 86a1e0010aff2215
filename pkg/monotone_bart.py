"""
=============================================================================
MONOTONE BART - Probit BART monotono por aumento de dados
=============================================================================

Modelo do desfecho com a restricao Pr(B=1|x,G=1) >= Pr(B=1|x,G=0):

    Pr(B=1 | x, G=1) = Phi(h1(x))
    Pr(B=1 | x, G=0) = Phi(h0(x)) * Phi(h1(x))

Para as linhas G=0, B = R0 * R1 com R0 ~ Bern(Phi(h0)) e R1 ~ Bern(Phi(h1))
latentes. Condicionado a (R0, R1), o modelo vira dois probit BART comuns:
- h1 treina em TODAS as linhas (resposta B se G=1, R1 se G=0)
- h0 treina so nas linhas G=0 (resposta R0)
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special

from probit_bart import (
    INTERVALO_LOG,
    BartConfig,
    ProbitBartSampler,
    build_cutpoints,
    probit_offset,
    _validar_binario,
)

logger = logging.getLogger(__name__)


# =============================================================================
# AUMENTACAO
# =============================================================================

def sample_R(h0_fit, h1_fit, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sorteia (R0, R1) para linhas com G=0, B=0.

    Pesos (em escala log): (0,0) ~ (1-p0)(1-p1), (1,0) ~ p0(1-p1),
    (0,1) ~ (1-p0)p1; o par (1,1) e impossivel quando B=0.
    """
    h0 = np.atleast_1d(np.asarray(h0_fit, dtype=float))
    h1 = np.atleast_1d(np.asarray(h1_fit, dtype=float))
    lq0, lp0 = special.log_ndtr(-h0), special.log_ndtr(h0)
    lq1, lp1 = special.log_ndtr(-h1), special.log_ndtr(h1)

    logw = np.stack([lq0 + lq1, lp0 + lq1, lq0 + lp1])
    logw -= special.logsumexp(logw, axis=0)
    w = np.exp(logw)

    u = rng.random(h0.size)
    c00 = w[0]
    c10 = w[0] + w[1]
    R0 = ((u >= c00) & (u < c10)).astype(np.int8)
    R1 = (u >= c10).astype(np.int8)
    return R0, R1


def monotone_likelihood(B, G, p0, p1) -> float:
    """Verossimilhanca observada do modelo monotono."""
    B, G = np.asarray(B), np.asarray(G)
    p = np.where(G == 1, p1, np.asarray(p0) * np.asarray(p1))
    return float(np.prod(np.where(B == 1, p, 1.0 - p)))


def augmented_likelihood(B, G, p0, p1, R0, R1) -> float:
    """
    Verossimilhanca aumentada: para G=0 entra Pr(R0) Pr(R1) 1{B = R0 R1};
    para G=1 entra a bernoulli de B com p1.
    """
    B, G = np.asarray(B), np.asarray(G)
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    R0, R1 = np.asarray(R0), np.asarray(R1)

    tratado = np.where(B == 1, p1, 1.0 - p1)
    f0 = np.where(R0 == 1, p0, 1.0 - p0)
    f1 = np.where(R1 == 1, p1, 1.0 - p1)
    controle = f0 * f1 * (B == R0 * R1)
    return float(np.prod(np.where(G == 1, tratado, controle)))


# =============================================================================
# ESTADO DA CADEIA
# =============================================================================

@dataclass(eq=False)
class MonotoneChainState:
    h1: ProbitBartSampler
    h0: ProbitBartSampler
    G: np.ndarray
    B: np.ndarray
    R0: np.ndarray
    R1: np.ndarray

    @property
    def controles(self) -> np.ndarray:
        return self.G == 0

    def check_invariants(self):
        """B = R0 * R1 nas linhas G = 0."""
        c = self.controles
        if not np.array_equal(self.B[c], self.R0[c] * self.R1[c]):
            raise RuntimeError("Estado inconsistente: B != R0 * R1 em alguma linha de controle")

    def resposta_h1(self) -> np.ndarray:
        return np.where(self.G == 1, self.B, self.R1).astype(np.int8)

    def prob_tratado(self) -> np.ndarray:
        return self.h1.probabilities()

    def prob_controle(self) -> np.ndarray:
        return self.h0.probabilities() * self.h1.probabilities()


def _atualizar_R(state: MonotoneChainState, rng: np.random.Generator):
    n = state.G.size
    livres = np.flatnonzero(state.controles & (state.B == 0))
    if livres.size == 0:
        return
    h0 = state.h0.latent_fit()[:n][livres]
    h1 = state.h1.latent_fit()[:n][livres]
    R0, R1 = sample_R(h0, h1, rng)
    state.R0[livres] = R0
    state.R1[livres] = R1


def init_chain(
    X_todas: np.ndarray,
    G: np.ndarray,
    B: np.ndarray,
    config: BartConfig,
    rng: np.random.Generator,
) -> MonotoneChainState:
    """
    Inicializa a cadeia. X_todas tem as n linhas de treino primeiro,
    seguidas das linhas de predicao. R0 = R1 = B nas linhas de controle.
    """
    n = G.size
    grid = build_cutpoints(X_todas, config.n_cutpoints)

    train1 = np.zeros(X_todas.shape[0], dtype=bool)
    train1[:n] = True
    train0 = train1.copy()
    train0[:n] = G == 0

    # Phi(h0) ~ Pr(B=1|G=0) / Pr(B=1|G=1)
    taxa1 = B[G == 1].mean() if np.any(G == 1) else 0.5
    taxa0 = B[G == 0].mean() if np.any(G == 0) else 0.5
    razao = taxa0 / taxa1 if taxa1 > 0 else taxa0
    n0 = int(np.sum(G == 0))
    borda = 0.5 / max(n0, 1)
    offset0 = float(special.ndtri(np.clip(razao, borda, 1.0 - borda)))

    h1 = ProbitBartSampler(X_todas, config, rng, train=train1, grid=grid, offset=probit_offset(B))
    h0 = ProbitBartSampler(X_todas, config, rng, train=train0, grid=grid, offset=offset0)

    R0 = np.where(G == 0, B, 0).astype(np.int8)
    R1 = np.where(G == 0, B, 0).astype(np.int8)
    return MonotoneChainState(h1=h1, h0=h0, G=G.astype(np.int8), B=B.astype(np.int8), R0=R0, R1=R1)


def mcmc_step(state: MonotoneChainState, rng: np.random.Generator) -> MonotoneChainState:
    """R | h0, h1  ->  h1 | R  ->  R | h0, h1  ->  h0 | R."""
    _atualizar_R(state, rng)
    state.h1.step(state.resposta_h1())

    _atualizar_R(state, rng)
    state.h0.step(state.R0[state.controles])
    return state


# =============================================================================
# AJUSTE
# =============================================================================

@dataclass(eq=False)
class MonotoneFitDraws:
    """Draws de Pr(B=1|x,G=1) e Pr(B=1|x,G=0); pB1 >= pB0 em todo draw."""

    pB1: np.ndarray
    pB0: np.ndarray
    seed: Optional[int] = None

    @property
    def n_draws(self) -> int:
        return int(self.pB1.shape[0])


def fit_monotone(
    X: np.ndarray,
    G: np.ndarray,
    B: np.ndarray,
    config: BartConfig = BartConfig(),
    predict_rows: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> MonotoneFitDraws:
    """
    Ajusta o modelo monotono e retorna draws de (Phi(h1), Phi(h0) Phi(h1)).

    Raises:
        ValueError: se nao ha linhas tratadas (G=1)
    """
    X = np.asarray(X, dtype=float)
    G = _validar_binario(G, "G")
    B = _validar_binario(B, "B")
    if not (X.shape[0] == G.size == B.size):
        raise ValueError("X, G e B devem ter o mesmo numero de linhas")
    if not np.any(G == 1):
        raise ValueError("Nenhuma linha tratada (G=1): o modelo monotono nao e identificado")
    if not np.any(G == 0):
        warnings.warn("Nenhuma linha de controle (G=0): h0 sera amostrado do prior")

    rng = rng if rng is not None else np.random.default_rng(seed)
    n = G.size
    if predict_rows is not None:
        todas = np.vstack([X, np.asarray(predict_rows, dtype=float)])
        saida = np.arange(n, todas.shape[0])
    else:
        todas = X
        saida = np.arange(n)

    state = init_chain(todas, G, B, config, rng)
    pB1 = np.empty((config.n_draws, saida.size))
    pB0 = np.empty((config.n_draws, saida.size))

    d = 0
    for it in range(config.total_iterations):
        mcmc_step(state, rng)
        pos = it - config.burn_in
        if pos >= 0 and pos % config.thin == 0:
            p1 = state.prob_tratado()[saida]
            pB1[d] = p1
            pB0[d] = state.h0.probabilities()[saida] * p1
            d += 1
        if (it + 1) % INTERVALO_LOG == 0:
            state.h1.resync()
            state.h0.resync()
            state.check_invariants()
            logger.info("BART monotono: iteracao %d/%d", it + 1, config.total_iterations)

    state.check_invariants()
    return MonotoneFitDraws(pB1=pB1, pB0=pB0, seed=seed)
