"""
=============================================================================
DENSIDADES - Familia de densidades do confundidor f(u)
=============================================================================

Este modulo define as densidades suportadas para a informacao privada U:
1. Gaussiana N(mu, sd)
2. Sharkfin (q, s): unimodal em zero, assimetrica, caudas gaussianas
3. Mistura de gaussianas

E avalia as integrais de marginalizacao usadas em todo o pipeline:
- int Phi(a+u) f(u) du                      (marginal_single)
- int Phi(a+u) Phi(b+u) f(u) du e variantes (marginal_pair)

As integrais sao feitas por quadratura:
- Gaussiana: Gauss-Hermite com mudanca de variavel
- Mistura: uniao das regras de cada componente, escaladas pelos pesos
- Sharkfin: cada lobo (meia-normal) por Gauss-Legendre em [0, 10] desvios

Convencao: o segundo parametro da gaussiana e sempre o DESVIO PADRAO,
inclusive no mapeamento do probit bivariado sd = sqrt(rho / (1 - rho)).
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats

logger = logging.getLogger(__name__)

# =============================================================================
# CONFIGURACAO
# =============================================================================

NOS_PADRAO = 64
MIN_NOS = 16

# Abaixo deste desvio padrao a gaussiana vira massa pontual
SD_DEGENERADO = 1e-6

# Truncamento (em desvios efetivos) dos lobos da sharkfin
TRUNCAMENTO = 10.0

MODOS_PAR = ("both", "first_neg", "second_neg", "neither")

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Regra de quadratura: int h(u) f(u) du ~ sum w_k h(u_k)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def K(self) -> int:
        return int(self.nodes.size)

    def integrate(self, h) -> float:
        return float(np.dot(self.weights, h(self.nodes)))


def _nova_regra(nodes: np.ndarray, weights: np.ndarray) -> QuadratureRule:
    """Ordena os nos e junta nos repetidos (somando os pesos)."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    unicos, inverso = np.unique(nodes, return_inverse=True)
    pesos = np.bincount(inverso, weights=weights, minlength=unicos.size)
    unicos.setflags(write=False)
    pesos.setflags(write=False)
    return QuadratureRule(nodes=unicos, weights=pesos)


def _regra_hermite(mean: float, sd: float, K: int) -> Tuple[np.ndarray, np.ndarray]:
    if sd < SD_DEGENERADO:
        return np.array([mean]), np.array([1.0])
    x, w = np.polynomial.hermite.hermgauss(K)
    return mean + np.sqrt(2.0) * sd * x, w / np.sqrt(np.pi)


def _regra_meia_normal(K: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nos em [0, TRUNCAMENTO] para a meia-normal padrao, pesos somando 1."""
    x, w = np.polynomial.legendre.leggauss(K)
    t = 0.5 * TRUNCAMENTO * (x + 1.0)
    pesos = 0.5 * TRUNCAMENTO * w * 2.0 * stats.norm.pdf(t)
    return t, pesos / pesos.sum()


# =============================================================================
# FAMILIA DE DENSIDADES
# =============================================================================

class ConfounderDensity(ABC):
    """Densidade f(u) da informacao privada (ortogonalizada) U."""

    kind: str = ""

    @abstractmethod
    def pdf(self, u: ArrayLike) -> np.ndarray:
        ...

    @abstractmethod
    def moments(self) -> Tuple[float, float]:
        """Retorna (media, desvio padrao)."""

    @abstractmethod
    def _nos_e_pesos(self, K: int) -> Tuple[np.ndarray, np.ndarray]:
        ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def label(self) -> str:
        ...

    def quadrature(self, K: int = NOS_PADRAO) -> QuadratureRule:
        return quadrature(self, K)


@dataclass(frozen=True)
class Gaussian(ConfounderDensity):
    mean: float = 0.0
    sd: float = 1.0
    nome: Optional[str] = field(default=None, compare=False)

    kind = "gaussian"

    def __post_init__(self):
        if not np.isfinite(self.mean):
            raise ValueError(f"Media invalida para gaussiana: {self.mean}")
        if not (self.sd > 0):
            raise ValueError(f"Desvio padrao deve ser > 0, recebido: {self.sd}")

    def pdf(self, u: ArrayLike) -> np.ndarray:
        return stats.norm.pdf(u, loc=self.mean, scale=self.sd)

    def moments(self) -> Tuple[float, float]:
        return float(self.mean), float(self.sd)

    def _nos_e_pesos(self, K):
        return _regra_hermite(self.mean, self.sd, K)

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)

    @property
    def label(self) -> str:
        if self.nome:
            return self.nome
        return f"N({self.mean:g},sd={self.sd:g})"


@dataclass(frozen=True)
class Sharkfin(ConfounderDensity):
    """
    Densidade "sharkfin": moda em zero, caudas gaussianas.

    Lobo negativo: meia-normal com sd s e massa q.
    Lobo positivo: meia-normal com sd s(1-q)/q e massa (1-q).
    Logo Pr(U < 0) = q exatamente.
    """

    q: float = 0.5
    s: float = 1.0
    nome: Optional[str] = field(default=None, compare=False)

    kind = "sharkfin"

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q deve estar em (0, 1), recebido: {self.q}")
        if not (self.s > 0):
            raise ValueError(f"s deve ser > 0, recebido: {self.s}")

    @classmethod
    def from_variance(cls, q: float, variance: float, nome: Optional[str] = None) -> "Sharkfin":
        """Resolve a escala s que atinge a variancia pedida para esse q."""
        if not (variance > 0):
            raise ValueError(f"Variancia deve ser > 0, recebido: {variance}")
        sd_unitario = cls(q=q, s=1.0).moments()[1]
        return cls(q=q, s=float(np.sqrt(variance) / sd_unitario), nome=nome)

    @property
    def s_positivo(self) -> float:
        return self.s * (1.0 - self.q) / self.q

    def pdf(self, u: ArrayLike) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        neg = 2.0 * self.q * stats.norm.pdf(u, scale=self.s)
        pos = 2.0 * self.q * stats.norm.pdf(u * self.q / (1.0 - self.q), scale=self.s)
        return np.where(u <= 0, neg, pos)

    def moments(self) -> Tuple[float, float]:
        raiz = np.sqrt(2.0 / np.pi)
        q, s, sp = self.q, self.s, self.s_positivo
        media = -q * s * raiz + (1.0 - q) * sp * raiz
        segundo = q * s ** 2 + (1.0 - q) * sp ** 2
        return float(media), float(np.sqrt(segundo - media ** 2))

    def _nos_e_pesos(self, K):
        t, w = _regra_meia_normal(K)
        nos = np.concatenate([-self.s * t[::-1], self.s_positivo * t])
        pesos = np.concatenate([self.q * w[::-1], (1.0 - self.q) * w])
        return nos, pesos

    def sample(self, rng, size):
        z = np.abs(rng.standard_normal(size))
        negativo = rng.random(size) < self.q
        return np.where(negativo, -self.s * z, self.s_positivo * z)

    @property
    def label(self) -> str:
        if self.nome:
            return self.nome
        return f"Shark(q={self.q:g},s={self.s:g})"


@dataclass(frozen=True)
class Mixture(ConfounderDensity):
    weights: Tuple[float, ...] = (1.0,)
    means: Tuple[float, ...] = (0.0,)
    sds: Tuple[float, ...] = (1.0,)
    nome: Optional[str] = field(default=None, compare=False)

    kind = "mixture"

    def __post_init__(self):
        # Aceita listas vindas do arquivo de configuracao
        for campo in ("weights", "means", "sds"):
            object.__setattr__(self, campo, tuple(float(v) for v in getattr(self, campo)))
        if not (len(self.weights) == len(self.means) == len(self.sds)) or not self.weights:
            raise ValueError("Mistura precisa de listas weights/means/sds do mesmo tamanho")
        if any(w < 0 for w in self.weights):
            raise ValueError(f"Pesos da mistura devem ser >= 0: {self.weights}")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"Pesos da mistura devem somar 1: soma={sum(self.weights)}")
        if any(not (s > 0) for s in self.sds):
            raise ValueError(f"Desvios da mistura devem ser > 0: {self.sds}")

    def components(self):
        return [
            (w, Gaussian(m, s))
            for w, m, s in zip(self.weights, self.means, self.sds)
            if w > 0
        ]

    def pdf(self, u: ArrayLike) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return sum(w * g.pdf(u) for w, g in self.components())

    def moments(self) -> Tuple[float, float]:
        w = np.array(self.weights)
        m = np.array(self.means)
        s = np.array(self.sds)
        media = float(np.dot(w, m))
        segundo = float(np.dot(w, s ** 2 + m ** 2))
        return media, float(np.sqrt(segundo - media ** 2))

    def _nos_e_pesos(self, K):
        nos, pesos = [], []
        for w, g in self.components():
            x, p = g._nos_e_pesos(K)
            nos.append(x)
            pesos.append(w * p)
        return np.concatenate(nos), np.concatenate(pesos)

    def sample(self, rng, size):
        comp = rng.choice(len(self.weights), size=size, p=np.array(self.weights))
        return rng.normal(np.array(self.means)[comp], np.array(self.sds)[comp])

    @property
    def label(self) -> str:
        if self.nome:
            return self.nome
        partes = [f"{w:g}*N({m:g},{s:g})" for w, m, s in zip(self.weights, self.means, self.sds)]
        return "Mix[" + "+".join(partes) + "]"


# Misturas usadas na analise de sensibilidade
SYMMETRIC_MIXTURE = Mixture((0.05, 0.90, 0.05), (-2.0, 0.0, 2.0), (0.05, 0.05, 0.05), "Mistura simetrica")
ASYMMETRIC_MIXTURE = Mixture((0.01, 0.94, 0.05), (-2.0, 0.0, 2.0), (0.05, 0.05, 0.05), "Mistura assimetrica")


# =============================================================================
# OPERACOES
# =============================================================================

def pdf(d: ConfounderDensity, u: ArrayLike) -> np.ndarray:
    return d.pdf(u)


def moments(d: ConfounderDensity) -> Tuple[float, float]:
    return d.moments()


@lru_cache(maxsize=256)
def _regra_em_cache(d: ConfounderDensity, K: int) -> QuadratureRule:
    nos, pesos = d._nos_e_pesos(K)
    return _nova_regra(nos, pesos)


def quadrature(d: ConfounderDensity, K: int = NOS_PADRAO) -> QuadratureRule:
    """
    Regra de quadratura para a densidade d com K nos por componente/lobo.

    Raises:
        ValueError: se K < 16
    """
    if K < MIN_NOS:
        raise ValueError(f"Numero de nos deve ser >= {MIN_NOS}, recebido: {K}")
    return _regra_em_cache(d, int(K))


def _como_saida(valores: np.ndarray):
    return float(valores) if np.ndim(valores) == 0 else valores


def marginal_single(
    d: ConfounderDensity,
    a: ArrayLike,
    regra: Optional[QuadratureRule] = None,
    K: int = NOS_PADRAO,
):
    """int Phi(a+u) f(u) du, vetorizado em a."""
    regra = regra if regra is not None else quadrature(d, K)
    a = np.asarray(a, dtype=float)
    valores = special.ndtr(a[..., None] + regra.nodes) @ regra.weights
    return _como_saida(valores)


def marginal_pair(
    d: ConfounderDensity,
    a: ArrayLike,
    b: ArrayLike,
    mode: str = "both",
    regra: Optional[QuadratureRule] = None,
    K: int = NOS_PADRAO,
):
    """
    Integrais de pares de CDFs normais contra f:

        both:       int Phi(a+u)     Phi(b+u)     f(u) du
        first_neg:  int (1-Phi(a+u)) Phi(b+u)     f(u) du
        second_neg: int Phi(a+u)     (1-Phi(b+u)) f(u) du
        neither:    int (1-Phi(a+u)) (1-Phi(b+u)) f(u) du

    Os quatro modos somam 1 para quaisquer a, b.
    """
    if mode not in MODOS_PAR:
        raise ValueError(f"Modo invalido: {mode}. Use um de {MODOS_PAR}")
    regra = regra if regra is not None else quadrature(d, K)
    a = np.asarray(a, dtype=float)[..., None] + regra.nodes
    b = np.asarray(b, dtype=float)[..., None] + regra.nodes

    # 1 - Phi(x) = Phi(-x), sem cancelamento nas caudas
    fa = special.ndtr(-a) if mode in ("first_neg", "neither") else special.ndtr(a)
    fb = special.ndtr(-b) if mode in ("second_neg", "neither") else special.ndtr(b)
    return _como_saida((fa * fb) @ regra.weights)


# =============================================================================
# CONSTRUCAO A PARTIR DE CONFIGURACAO
# =============================================================================

def density_from_config(cfg: Dict) -> ConfounderDensity:
    """
    Constroi uma densidade a partir de um dict (secao [[densidades]]).

    Chaves:
        kind = "gaussian": mean (0), sd
        kind = "sharkfin": q, s  (ou q, variance)
        kind = "mixture":  weights, means, sds
        label (opcional, substitui o rotulo automatico)
    """
    kind = str(cfg.get("kind", "")).lower()
    nome = cfg.get("label")
    nome = str(nome) if nome else None

    try:
        if kind == "gaussian":
            return Gaussian(float(cfg.get("mean", 0.0)), float(cfg["sd"]), nome)
        if kind == "sharkfin":
            if "variance" in cfg:
                return Sharkfin.from_variance(float(cfg["q"]), float(cfg["variance"]), nome)
            return Sharkfin(float(cfg["q"]), float(cfg["s"]), nome)
        if kind == "mixture":
            return Mixture(cfg["weights"], cfg["means"], cfg["sds"], nome)
    except KeyError as e:
        raise ValueError(f"Densidade '{kind}' sem o parametro obrigatorio {e}") from e

    raise ValueError(f"Tipo de densidade desconhecido: '{kind}' (use gaussian, sharkfin ou mixture)")


# =============================================================================
# TESTE DO MODULO
# =============================================================================

if __name__ == "__main__":
    print("=" * 60)
    print("DESVIOS PADRAO IMPLICITOS DAS DENSIDADES")
    print("=" * 60)

    for d in [
        Gaussian(0, 0.1), Gaussian(0, 0.5), Gaussian(0, 1.0),
        Sharkfin(0.25, 0.5), Sharkfin(0.75, 1.25),
        SYMMETRIC_MIXTURE, ASYMMETRIC_MIXTURE,
    ]:
        media, sd = d.moments()
        print(f"    - {d.label:<40} media={media:+.3f}  sd={sd:.3f}")
