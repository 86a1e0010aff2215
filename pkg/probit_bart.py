"""
=============================================================================
PROBIT BART - Soma de arvores com ligacao probit
=============================================================================

Amostrador MCMC para Pr(Y=1 | x) = Phi(h(x)), com h uma soma de L arvores
de regressao. Cada varredura de Gibbs:

1. Sorteia a variavel latente Z ~ N(h(x), 1) truncada pelo sinal de Y
2. Para cada arvore, calcula o residuo parcial e propoe GROW / PRUNE /
   CHANGE (Metropolis-Hastings com os parametros das folhas integrados)
3. Sorteia os parametros das folhas da posteriori conjugada normal

O amostrador guarda a atribuicao de folha de TODAS as linhas (treino e
predicao) de modo que o ajuste de cada arvore sai de uma indexacao.
"""

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import special, stats

logger = logging.getLogger(__name__)

# =============================================================================
# CONFIGURACAO
# =============================================================================

PROB_GROW = 0.25
PROB_PRUNE = 0.25
PROB_CHANGE = 0.5

INTERVALO_LOG = 500


@dataclass(frozen=True)
class BartConfig:
    """Hiperparametros do prior de arvores e do amostrador."""

    n_trees: int = 100
    eta: float = 0.95
    zeta: float = 2.0
    k: float = 2.0
    n_cutpoints: int = 1000
    burn_in: int = 2000
    n_draws: int = 2000
    min_leaf_size: int = 5
    thin: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees deve ser >= 1, recebido: {self.n_trees}")
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta deve estar em (0, 1), recebido: {self.eta}")
        if self.zeta < 0:
            raise ValueError(f"zeta deve ser >= 0, recebido: {self.zeta}")
        if not (self.k > 0):
            raise ValueError(f"k deve ser > 0, recebido: {self.k}")
        if self.n_cutpoints < 1:
            raise ValueError(f"n_cutpoints deve ser >= 1, recebido: {self.n_cutpoints}")
        if self.burn_in < 0 or self.n_draws < 1 or self.thin < 1:
            raise ValueError("burn_in >= 0, n_draws >= 1 e thin >= 1 sao obrigatorios")
        if self.min_leaf_size < 0:
            raise ValueError(f"min_leaf_size deve ser >= 0, recebido: {self.min_leaf_size}")

    @property
    def sigma_mu(self) -> float:
        """Desvio padrao do prior das folhas: 0.5 / (k * sqrt(L))."""
        return 0.5 / (self.k * np.sqrt(self.n_trees))

    @property
    def total_iterations(self) -> int:
        return self.burn_in + self.n_draws * self.thin

    def to_dict(self) -> dict:
        return asdict(self)


# =============================================================================
# PONTOS DE CORTE
# =============================================================================

@dataclass(frozen=True, eq=False)
class CutpointGrid:
    """Grade de cortes por variavel; variaveis constantes nao sao admissiveis."""

    values: tuple
    admissible: np.ndarray

    @property
    def n_vars(self) -> int:
        return len(self.values)


def build_cutpoints(X: np.ndarray, n_cut: int) -> CutpointGrid:
    """
    Grade uniforme com n_cut pontos no interior de [min, max] de cada coluna:
    min + (max - min) * j / (n_cut + 1), j = 1..n_cut.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"Matriz de covariaveis vazia ou mal formada: shape={X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("Matriz de covariaveis contem valores nao finitos")
    if n_cut < 1:
        raise ValueError(f"n_cut deve ser >= 1, recebido: {n_cut}")

    fracoes = np.arange(1, n_cut + 1) / (n_cut + 1)
    valores = []
    admissiveis = []
    for j in range(X.shape[1]):
        lo, hi = X[:, j].min(), X[:, j].max()
        if hi > lo:
            valores.append(lo + (hi - lo) * fracoes)
            admissiveis.append(j)
        else:
            valores.append(np.array([lo]))

    return CutpointGrid(values=tuple(valores), admissible=np.array(admissiveis, dtype=np.intp))


# =============================================================================
# ARVORE
# =============================================================================

class DecisionTree:
    """
    Arvore binaria em vetores paralelos indexados pelo id do no.

    Ids nao sao reaproveitados; nos podados ficam marcados como mortos.
    row_node guarda a folha de cada linha (treino e predicao).
    """

    def __init__(self, n_rows: int, mu0: float = 0.0, capacidade: int = 16):
        self.n_nodes = 1
        self.var = np.full(capacidade, -1, dtype=np.intp)
        self.cut = np.full(capacidade, -1, dtype=np.intp)
        self.cut_value = np.full(capacidade, np.nan)
        self.left = np.full(capacidade, -1, dtype=np.intp)
        self.right = np.full(capacidade, -1, dtype=np.intp)
        self.parent = np.full(capacidade, -1, dtype=np.intp)
        self.depth = np.zeros(capacidade, dtype=np.intp)
        self.mu = np.zeros(capacidade)
        self.alive = np.zeros(capacidade, dtype=bool)

        self.alive[0] = True
        self.mu[0] = mu0
        self.row_node = np.zeros(n_rows, dtype=np.intp)

    # -------------------------------------------------------------------------
    # Consultas
    # -------------------------------------------------------------------------

    def is_leaf(self, k: int) -> bool:
        return self.left[k] < 0

    def leaves(self) -> np.ndarray:
        ids = np.arange(self.n_nodes)
        return ids[self.alive[: self.n_nodes] & (self.left[: self.n_nodes] < 0)]

    def internal(self) -> np.ndarray:
        ids = np.arange(self.n_nodes)
        return ids[self.alive[: self.n_nodes] & (self.left[: self.n_nodes] >= 0)]

    def nog_nodes(self) -> np.ndarray:
        """Nos internos cujos dois filhos sao folhas."""
        internos = self.internal()
        if internos.size == 0:
            return internos
        ok = (self.left[self.left[internos]] < 0) & (self.left[self.right[internos]] < 0)
        return internos[ok]

    @property
    def n_leaves(self) -> int:
        return int(self.leaves().size)

    def fit(self) -> np.ndarray:
        return self.mu[self.row_node]

    # -------------------------------------------------------------------------
    # Modificacoes
    # -------------------------------------------------------------------------

    def _novo_no(self, pai: int) -> int:
        if self.n_nodes == self.var.size:
            for nome in ("var", "cut", "cut_value", "left", "right", "parent", "depth", "mu", "alive"):
                atual = getattr(self, nome)
                extra = np.full_like(atual, -1 if atual.dtype == np.intp else 0)
                if nome == "cut_value":
                    extra[:] = np.nan
                setattr(self, nome, np.concatenate([atual, extra]))
        k = self.n_nodes
        self.n_nodes += 1
        self.var[k] = self.cut[k] = self.left[k] = self.right[k] = -1
        self.parent[k] = pai
        self.depth[k] = self.depth[pai] + 1
        self.mu[k] = self.mu[pai]
        self.alive[k] = True
        return k

    def grow(self, leaf: int, var: int, cut: int, cut_value: float, X: np.ndarray):
        esq = self._novo_no(leaf)
        dir_ = self._novo_no(leaf)
        self.var[leaf], self.cut[leaf], self.cut_value[leaf] = var, cut, cut_value
        self.left[leaf], self.right[leaf] = esq, dir_

        linhas = np.flatnonzero(self.row_node == leaf)
        vai_esq = X[linhas, var] <= cut_value
        self.row_node[linhas] = np.where(vai_esq, esq, dir_)
        return esq, dir_

    def prune(self, node: int, mu: Optional[float] = None):
        esq, dir_ = self.left[node], self.right[node]
        self.row_node[(self.row_node == esq) | (self.row_node == dir_)] = node
        self.alive[esq] = self.alive[dir_] = False
        self.left[node] = self.right[node] = -1
        self.var[node] = self.cut[node] = -1
        self.cut_value[node] = np.nan
        if mu is not None:
            self.mu[node] = mu

    def change(self, node: int, var: int, cut: int, cut_value: float, X: np.ndarray):
        esq, dir_ = self.left[node], self.right[node]
        linhas = np.flatnonzero((self.row_node == esq) | (self.row_node == dir_))
        vai_esq = X[linhas, var] <= cut_value
        self.row_node[linhas] = np.where(vai_esq, esq, dir_)
        self.var[node], self.cut[node], self.cut_value[node] = var, cut, cut_value


# =============================================================================
# PRIOR E VEROSSIMILHANCA MARGINAL
# =============================================================================

def split_probability(depth, config: BartConfig):
    return config.eta * (1.0 + np.asarray(depth, dtype=float)) ** (-config.zeta)


def log_tree_prior(tree: DecisionTree, config: BartConfig) -> float:
    """Log do prior da forma: prod_int p(d) * prod_folhas (1 - p(d))."""
    internos = tree.internal()
    folhas = tree.leaves()
    return float(
        np.sum(np.log(split_probability(tree.depth[internos], config)))
        + np.sum(np.log1p(-split_probability(tree.depth[folhas], config)))
    )


def _log_marginal_folha(n, s, sigma2: float):
    """Log verossimilhanca marginal (a menos de constante) de uma folha."""
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    return -0.5 * np.log1p(n * sigma2) + 0.5 * sigma2 * s ** 2 / (1.0 + n * sigma2)


def _estatisticas(tree: DecisionTree, residual: np.ndarray, train: np.ndarray):
    """Contagem e soma de residuos de treino por no."""
    n = np.bincount(tree.row_node[train], minlength=tree.n_nodes).astype(float)
    s = np.bincount(tree.row_node[train], weights=residual[train], minlength=tree.n_nodes)
    return n, s


def _divisao(tree, linhas_no, var, cut_value, X, residual, train):
    linhas = np.flatnonzero(linhas_no & train)
    vai_esq = X[linhas, var] <= cut_value
    r = residual[linhas]
    return (
        float(vai_esq.sum()), float(r[vai_esq].sum()),
        float((~vai_esq).sum()), float(r[~vai_esq].sum()),
    )


def log_ratio_grow(tree, leaf, var, cut_value, residual, config, X, grid, train) -> Optional[float]:
    """Log da razao de aceitacao do GROW; None se viola o tamanho minimo."""
    nl, sl, nr, sr = _divisao(tree, tree.row_node == leaf, var, cut_value, X, residual, train)
    if nl < config.min_leaf_size or nr < config.min_leaf_size:
        return None

    d = tree.depth[leaf]
    p_no = split_probability(d, config)
    p_filho = split_probability(d + 1, config)
    log_prior = np.log(p_no) + 2.0 * np.log1p(-p_filho) - np.log1p(-p_no)

    s2 = config.sigma_mu ** 2
    log_lik = (
        _log_marginal_folha(nl, sl, s2) + _log_marginal_folha(nr, sr, s2)
        - _log_marginal_folha(nl + nr, sl + sr, s2)
    )

    # Numero de nos "nog" depois do GROW
    nog = tree.nog_nodes().size + 1
    pai = tree.parent[leaf]
    if pai >= 0:
        irmao = tree.right[pai] if tree.left[pai] == leaf else tree.left[pai]
        if tree.is_leaf(irmao):
            nog -= 1
    log_prop = np.log(PROB_PRUNE / nog) - np.log(PROB_GROW / tree.n_leaves)

    return float(log_prior + log_lik + log_prop)


def log_ratio_prune(tree, node, residual, config, train) -> float:
    n, s = _estatisticas(tree, residual, train)
    esq, dir_ = tree.left[node], tree.right[node]
    nl, sl, nr, sr = n[esq], s[esq], n[dir_], s[dir_]

    d = tree.depth[node]
    p_no = split_probability(d, config)
    p_filho = split_probability(d + 1, config)
    log_prior = np.log1p(-p_no) - np.log(p_no) - 2.0 * np.log1p(-p_filho)

    s2 = config.sigma_mu ** 2
    log_lik = (
        _log_marginal_folha(nl + nr, sl + sr, s2)
        - _log_marginal_folha(nl, sl, s2) - _log_marginal_folha(nr, sr, s2)
    )

    nog = tree.nog_nodes().size
    folhas_depois = tree.n_leaves - 1
    log_prop = np.log(PROB_GROW / folhas_depois) - np.log(PROB_PRUNE / nog)

    return float(log_prior + log_lik + log_prop)


def log_ratio_change(tree, node, var, cut_value, residual, config, X, train) -> Optional[float]:
    """CHANGE so atua em nos nog; a proposta e simetrica."""
    linhas_no = (tree.row_node == tree.left[node]) | (tree.row_node == tree.right[node])
    nl, sl, nr, sr = _divisao(tree, linhas_no, var, cut_value, X, residual, train)
    if nl < config.min_leaf_size or nr < config.min_leaf_size:
        return None
    ol, osl, or_, osr = _divisao(
        tree, linhas_no, tree.var[node], tree.cut_value[node], X, residual, train
    )
    s2 = config.sigma_mu ** 2
    return float(
        _log_marginal_folha(nl, sl, s2) + _log_marginal_folha(nr, sr, s2)
        - _log_marginal_folha(ol, osl, s2) - _log_marginal_folha(or_, osr, s2)
    )


def _sortear_regra(grid: CutpointGrid, rng: np.random.Generator):
    var = int(rng.choice(grid.admissible))
    cut = int(rng.integers(grid.values[var].size))
    return var, cut, float(grid.values[var][cut])


def update_tree(
    tree: DecisionTree,
    residual: np.ndarray,
    config: BartConfig,
    rng: np.random.Generator,
    X: np.ndarray,
    grid: CutpointGrid,
    train: Optional[np.ndarray] = None,
) -> str:
    """
    Um passo Metropolis-Hastings na estrutura da arvore.

    Returns:
        Nome do movimento aceito ("grow", "prune", "change") ou "" se rejeitado
    """
    if train is None:
        train = np.ones(tree.row_node.size, dtype=bool)

    u = rng.random()
    if u < PROB_GROW:
        if grid.admissible.size == 0:
            return ""
        leaf = int(rng.choice(tree.leaves()))
        var, cut, valor = _sortear_regra(grid, rng)
        log_r = log_ratio_grow(tree, leaf, var, valor, residual, config, X, grid, train)
        if log_r is not None and np.log(rng.random()) < log_r:
            tree.grow(leaf, var, cut, valor, X)
            return "grow"
    elif u < PROB_GROW + PROB_PRUNE:
        nogs = tree.nog_nodes()
        if nogs.size == 0:
            return ""
        node = int(rng.choice(nogs))
        log_r = log_ratio_prune(tree, node, residual, config, train)
        if np.log(rng.random()) < log_r:
            tree.prune(node)
            return "prune"
    else:
        nogs = tree.nog_nodes()
        if nogs.size == 0 or grid.admissible.size == 0:
            return ""
        node = int(rng.choice(nogs))
        var, cut, valor = _sortear_regra(grid, rng)
        log_r = log_ratio_change(tree, node, var, valor, residual, config, X, train)
        if log_r is not None and np.log(rng.random()) < log_r:
            tree.change(node, var, cut, valor, X)
            return "change"
    return ""


def draw_leaves(
    tree: DecisionTree,
    residual: np.ndarray,
    config: BartConfig,
    rng: np.random.Generator,
    train: Optional[np.ndarray] = None,
):
    """mu_folha | R ~ N(sigma2 S / (1 + n sigma2), sigma2 / (1 + n sigma2))."""
    if train is None:
        train = np.ones(tree.row_node.size, dtype=bool)
    n, s = _estatisticas(tree, residual, train)
    folhas = tree.leaves()
    s2 = config.sigma_mu ** 2
    denom = 1.0 + n[folhas] * s2
    media = s2 * s[folhas] / denom
    tree.mu[folhas] = media + np.sqrt(s2 / denom) * rng.standard_normal(folhas.size)


# =============================================================================
# VARIAVEL LATENTE
# =============================================================================

def sample_latent(y: np.ndarray, fit: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Z ~ N(fit, 1) truncada em (0, inf) se y=1 e (-inf, 0] se y=0."""
    y = np.asarray(y)
    fit = np.asarray(fit, dtype=float)
    if y.size == 0:
        return np.zeros(0)
    a = np.where(y == 1, -fit, -np.inf)
    b = np.where(y == 1, np.inf, -fit)
    z = stats.truncnorm.rvs(a, b, loc=fit, scale=1.0, random_state=rng)
    z = np.where(y == 1, np.maximum(z, np.finfo(float).tiny), np.minimum(z, 0.0))
    return np.atleast_1d(z)


# =============================================================================
# AMOSTRADOR
# =============================================================================

class ProbitBartSampler:
    """
    Estado de uma cadeia probit BART.

    Args:
        X: covariaveis de todas as linhas (treino + predicao)
        config: hiperparametros
        rng: gerador de numeros aleatorios
        train: mascara das linhas de treino (default: todas)
        grid: grade de cortes (default: construida sobre X)
        offset: deslocamento fixo da escala latente
        init_fit: valor inicial da soma das arvores, dividido igualmente
            entre as folhas-raiz
    """

    def __init__(
        self,
        X: np.ndarray,
        config: BartConfig,
        rng: np.random.Generator,
        train: Optional[np.ndarray] = None,
        grid: Optional[CutpointGrid] = None,
        offset: float = 0.0,
        init_fit: float = 0.0,
    ):
        self.X = np.asarray(X, dtype=float)
        self.config = config
        self.rng = rng
        self.n_rows = self.X.shape[0]
        self.train = np.ones(self.n_rows, dtype=bool) if train is None else np.asarray(train, dtype=bool)
        self.grid = grid if grid is not None else build_cutpoints(self.X, config.n_cutpoints)
        self.offset = float(offset)
        mu0 = float(init_fit) / config.n_trees
        self.trees: List[DecisionTree] = [DecisionTree(self.n_rows, mu0=mu0) for _ in range(config.n_trees)]
        self.resync()
        self.aceitos = {"grow": 0, "prune": 0, "change": 0}

    def latent_fit(self) -> np.ndarray:
        return self.offset + self.fit_total

    def probabilities(self) -> np.ndarray:
        return special.ndtr(self.latent_fit())

    def step(self, y_train: np.ndarray):
        """Uma varredura de Gibbs com as respostas das linhas de treino."""
        z = np.zeros(self.n_rows)
        z[self.train] = sample_latent(y_train, self.latent_fit()[self.train], self.rng)
        alvo = z - self.offset

        for tree in self.trees:
            antigo = tree.fit()
            residual = alvo - (self.fit_total - antigo)
            movimento = update_tree(tree, residual, self.config, self.rng, self.X, self.grid, self.train)
            if movimento:
                self.aceitos[movimento] += 1
            draw_leaves(tree, residual, self.config, self.rng, self.train)
            self.fit_total += tree.fit() - antigo

    def resync(self):
        """Recalcula a soma das arvores (remove deriva numerica)."""
        self.fit_total = np.sum([t.fit() for t in self.trees], axis=0)


def probit_offset(y: np.ndarray) -> float:
    """Phi^-1 da media de y, limitada para y constante."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    borda = 0.5 / y.size
    return float(special.ndtri(np.clip(y.mean(), borda, 1.0 - borda)))


@dataclass(eq=False)
class ProbitFitDraws:
    """Draws pos burn-in de Phi(h(x)) nas linhas pedidas."""

    prob: np.ndarray
    seed: Optional[int] = None
    config: Optional[BartConfig] = None
    offset: float = 0.0
    aceitos: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return int(self.prob.shape[0])


def _validar_binario(y: np.ndarray, nome: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{nome} deve ser um vetor")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"{nome} deve conter apenas 0 e 1")
    return y.astype(np.int8)


def fit_probit_bart(
    X: np.ndarray,
    y: np.ndarray,
    config: BartConfig = BartConfig(),
    predict_rows: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    init_fit: float = 0.0,
) -> ProbitFitDraws:
    """
    Ajusta probit BART e retorna draws de Pr(Y=1|x).

    Se predict_rows for informado, os draws cobrem essas linhas; senao as
    linhas de treino. A grade de cortes e construida sobre treino + predicao.
    """
    X = np.asarray(X, dtype=float)
    y = _validar_binario(y, "y")
    if X.shape[0] != y.size:
        raise ValueError(f"X tem {X.shape[0]} linhas e y tem {y.size}")
    if y.size and (y.min() == y.max()):
        warnings.warn(f"Resposta constante (todos = {y[0]}); o ajuste fica no limite do offset")

    rng = rng if rng is not None else np.random.default_rng(seed)
    n = X.shape[0]
    if predict_rows is not None:
        todas = np.vstack([X, np.asarray(predict_rows, dtype=float)])
        saida = np.arange(n, todas.shape[0])
    else:
        todas = X
        saida = np.arange(n)
    train = np.zeros(todas.shape[0], dtype=bool)
    train[:n] = True

    sampler = ProbitBartSampler(todas, config, rng, train=train, offset=probit_offset(y), init_fit=init_fit)
    draws = np.empty((config.n_draws, saida.size))

    d = 0
    for it in range(config.total_iterations):
        sampler.step(y)
        pos = it - config.burn_in
        if pos >= 0 and pos % config.thin == 0:
            draws[d] = sampler.probabilities()[saida]
            d += 1
        if (it + 1) % INTERVALO_LOG == 0:
            sampler.resync()
            logger.info("probit BART: iteracao %d/%d", it + 1, config.total_iterations)

    return ProbitFitDraws(prob=draws, seed=seed, config=config, offset=sampler.offset, aceitos=dict(sampler.aceitos))
