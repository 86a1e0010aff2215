"""
=============================================================================
SUBGRUPOS - Arvore de regressao sobre efeitos individuais
=============================================================================

Resume a heterogeneidade do efeito ajustando uma unica arvore CART
(gulosa, criterio SSE) as medias a posteriori de uma resposta por
observacao (tau, Delta ou Pr(B=1|do(0))). Depois calcula, draw a draw,
a diferenca entre as folhas de maior e de menor media.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PROFUNDIDADE_PADRAO = 3
MIN_FOLHA_PADRAO = 50
RESPOSTAS = ("tau", "delta", "pdo0")


def min_leaf_padrao(n: int) -> int:
    return max(MIN_FOLHA_PADRAO, n // 100)


@dataclass(eq=False)
class CartNode:
    members: np.ndarray
    mean: float
    sse: float
    depth: int
    var: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["CartNode"] = None
    right: Optional["CartNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(eq=False)
class CartTree:
    root: CartNode
    max_depth: int
    min_leaf: int
    feature_names: tuple = ()

    def leaves(self) -> List[CartNode]:
        folhas, pilha = [], [self.root]
        while pilha:
            no = pilha.pop()
            if no.is_leaf:
                folhas.append(no)
            else:
                pilha.extend([no.right, no.left])
        return folhas

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def sse(self) -> float:
        return float(sum(f.sse for f in self.leaves()))

    def _nome(self, j: int) -> str:
        return self.feature_names[j] if j < len(self.feature_names) else f"x{j + 1}"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        saida = np.empty(X.shape[0])
        for i, linha in enumerate(X):
            no = self.root
            while not no.is_leaf:
                no = no.left if linha[no.var] <= no.threshold else no.right
            saida[i] = no.mean
        return saida

    def to_text(self) -> str:
        linhas = []

        def visitar(no: CartNode, prefixo: str):
            rotulo = f"{prefixo}n={no.members.size}, media={no.mean:.4g}"
            if no.is_leaf:
                linhas.append(rotulo + " *")
                return
            linhas.append(rotulo)
            nome = self._nome(no.var)
            recuo = "  " * (no.depth + 1)
            visitar(no.left, f"{recuo}{nome} <= {no.threshold:.6g}: ")
            visitar(no.right, f"{recuo}{nome} > {no.threshold:.6g}: ")

        visitar(self.root, "")
        return "\n".join(linhas)

    def to_dict(self) -> dict:
        def converter(no: CartNode) -> dict:
            d = {"n": int(no.members.size), "mean": float(no.mean), "depth": int(no.depth)}
            if not no.is_leaf:
                d.update({
                    "feature": self._nome(no.var),
                    "threshold": float(no.threshold),
                    "left": converter(no.left),
                    "right": converter(no.right),
                })
            return d

        return converter(self.root)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def _sse(y: np.ndarray) -> float:
    return float(np.sum((y - y.mean()) ** 2)) if y.size else 0.0


def _melhor_divisao(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Melhor (var, limiar, sse) por busca exaustiva em todos os cortes."""
    n = y.size
    melhor = (None, None, np.inf)
    for j in range(X.shape[1]):
        ordem = np.argsort(X[:, j], kind="stable")
        xs, ys = X[ordem, j], y[ordem]
        s1 = np.cumsum(ys)
        s2 = np.cumsum(ys ** 2)
        n_esq = np.arange(1, n)
        soma_esq, quad_esq = s1[:-1], s2[:-1]
        soma_dir, quad_dir = s1[-1] - soma_esq, s2[-1] - quad_esq
        n_dir = n - n_esq
        sse = (quad_esq - soma_esq ** 2 / n_esq) + (quad_dir - soma_dir ** 2 / n_dir)

        valido = (xs[:-1] < xs[1:]) & (n_esq >= min_leaf) & (n_dir >= min_leaf)
        if not valido.any():
            continue
        sse = np.where(valido, sse, np.inf)
        k = int(np.argmin(sse))
        if sse[k] < melhor[2]:
            melhor = (j, 0.5 * (xs[k] + xs[k + 1]), float(sse[k]))
    return melhor


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int = PROFUNDIDADE_PADRAO,
    min_leaf: Optional[int] = None,
    feature_names: Sequence[str] = (),
) -> CartTree:
    """
    CART guloso minimizando a soma de quadrados. Para quando a
    profundidade maxima e atingida, quando uma divisao deixaria menos de
    min_leaf pontos num lado ou quando nao ha reducao de SSE.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError(f"X tem {X.shape[0]} linhas e y tem {y.size}")
    if y.size == 0:
        raise ValueError("Nao ha observacoes para ajustar a arvore")
    if not np.all(np.isfinite(y)):
        raise ValueError("Resposta da arvore contem valores nao finitos")
    if max_depth < 1:
        raise ValueError(f"max_depth deve ser >= 1, recebido: {max_depth}")
    min_leaf = min_leaf_padrao(y.size) if min_leaf is None else int(min_leaf)
    if min_leaf < 1:
        raise ValueError(f"min_leaf deve ser >= 1, recebido: {min_leaf}")

    def crescer(membros: np.ndarray, profundidade: int) -> CartNode:
        ys = y[membros]
        no = CartNode(members=membros, mean=float(ys.mean()), sse=_sse(ys), depth=profundidade)
        if profundidade >= max_depth or membros.size < 2 * min_leaf:
            return no
        var, limiar, sse = _melhor_divisao(X[membros], ys, min_leaf)
        if var is None or sse >= no.sse - 1e-12 * max(1.0, no.sse):
            return no
        vai_esq = X[membros, var] <= limiar
        no.var, no.threshold = var, float(limiar)
        no.left = crescer(membros[vai_esq], profundidade + 1)
        no.right = crescer(membros[~vai_esq], profundidade + 1)
        return no

    arvore = CartTree(
        root=crescer(np.arange(y.size), 0),
        max_depth=max_depth,
        min_leaf=min_leaf,
        feature_names=tuple(feature_names),
    )
    logger.info("Arvore de subgrupos: %d folha(s), SSE=%.4g", arvore.n_leaves, arvore.sse())
    return arvore


@dataclass(eq=False)
class SubgroupDifference:
    """Diferenca (folha de maior media) - (folha de menor media) por draw."""

    values: np.ndarray
    leaf_max: Optional[CartNode] = None
    leaf_min: Optional[CartNode] = None
    degenerate: bool = False

    def summary(self) -> dict:
        if self.degenerate:
            return {"mean": float("nan"), "2.5": float("nan"), "97.5": float("nan"), "prob_positive": float("nan")}
        return {
            "mean": float(np.mean(self.values)),
            "2.5": float(np.quantile(self.values, 0.025)),
            "97.5": float(np.quantile(self.values, 0.975)),
            "prob_positive": float(np.mean(self.values > 0)),
        }


def subgroup_difference(tree: CartTree, per_draw: np.ndarray) -> SubgroupDifference:
    """
    Posteriori da diferenca entre as folhas extremas, usando as folhas
    escolhidas pelas medias da arvore. Arvore de uma folha: vazio + aviso.
    """
    per_draw = np.atleast_2d(np.asarray(per_draw, dtype=float))
    folhas = tree.leaves()
    if len(folhas) < 2:
        logger.warning("Arvore com uma unica folha: diferenca entre subgrupos indefinida")
        return SubgroupDifference(values=np.zeros(0), degenerate=True)

    medias = [f.mean for f in folhas]
    maior = folhas[int(np.argmax(medias))]
    menor = folhas[int(np.argmin(medias))]
    valores = per_draw[:, maior.members].mean(axis=1) - per_draw[:, menor.members].mean(axis=1)
    return SubgroupDifference(values=valores, leaf_max=maior, leaf_min=menor)


def leaf_assignment(tree: CartTree, n: int) -> np.ndarray:
    """Indice (na ordem de leaves()) da folha de cada observacao de treino."""
    saida = np.full(n, -1, dtype=int)
    for k, folha in enumerate(tree.leaves()):
        saida[folha.members] = k
    return saida
