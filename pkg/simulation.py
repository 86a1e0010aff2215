"""
=============================================================================
SIMULACAO - Processos geradores de validacao e experimentos de recuperacao
=============================================================================

Geradores:
1. Probit bivariado com regressor endogeno (verdade em forma fechada)
2. Processo nao linear com U ~ N(mu, sigma^2) ou qualquer densidade

Experimentos (cada um vira uma tabela CSV via main.py simulate):
- bivariate: recuperacao do ACRR no probit bivariado (gamma x rho)
- nonlinear: f correta (normal) vs f errada (Laplace)
- sharkfin: U sharkfin, f correta vs q errado / variancia errada
- evalue: tau projetado vs E-value para varias f
- monotone: correlacao do ICRR com e sem a restricao de monotonicidade
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special, stats

from densities import ConfounderDensity, Gaussian, Sharkfin
from evalue import compare, resumo
from ingestao import ObservationSet
from probit_bart import BartConfig, fit_probit_bart
from projection import SensitivitySpec, aggregate, estimands, project_posterior
from reduced_form import ReducedFormDraws, fit_reduced_form

logger = logging.getLogger(__name__)


# =============================================================================
# DENSIDADE DE LAPLACE (so para experimentos de f errada)
# =============================================================================

@dataclass(frozen=True)
class Laplace(ConfounderDensity):
    """Laplace parametrizada pelo desvio padrao: escala b = sd / sqrt(2)."""

    mean: float = 0.0
    sd: float = 1.0

    kind = "laplace"

    def __post_init__(self):
        if not (self.sd > 0):
            raise ValueError(f"Desvio padrao deve ser > 0, recebido: {self.sd}")

    @property
    def escala(self) -> float:
        return self.sd / np.sqrt(2.0)

    def pdf(self, u):
        return stats.laplace.pdf(u, loc=self.mean, scale=self.escala)

    def moments(self):
        return float(self.mean), float(self.sd)

    def _nos_e_pesos(self, K):
        # Gauss-Laguerre em cada lado da moda
        t, w = np.polynomial.laguerre.laggauss(K)
        b = self.escala
        nos = np.concatenate([self.mean - b * t[::-1], self.mean + b * t])
        pesos = np.concatenate([w[::-1], w]) / 2.0
        return nos, pesos / pesos.sum()

    def sample(self, rng, size):
        return rng.laplace(self.mean, self.escala, size)

    @property
    def label(self) -> str:
        return f"Lap({self.mean:g},sd={self.sd:g})"


def bivariate_density(rho: float) -> Gaussian:
    """f equivalente ao probit bivariado: N(0, sd = sqrt(rho / (1 - rho)))."""
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho deve estar em (0, 1) para o mapeamento, recebido: {rho}")
    return Gaussian(0.0, float(np.sqrt(rho / (1.0 - rho))))


# =============================================================================
# GERADORES
# =============================================================================

@dataclass(frozen=True)
class BivariateProbitConfig:
    n: int
    p: int = 5
    beta0: float = 0.0
    beta1: float = -0.2
    alpha0: float = -0.5
    alpha1: float = -0.5
    rho: float = 0.25
    gamma: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError(f"n e p devem ser >= 1 (n={self.n}, p={self.p})")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError(f"|rho| deve ser < 1, recebido: {self.rho}")
        if self.gamma < 0:
            raise ValueError(f"gamma deve ser >= 0, recebido: {self.gamma}")


@dataclass(frozen=True)
class NonlinearDGPConfig:
    n: int
    mu: float = 0.0
    sigma: float = 1.0
    p: int = 10
    density: Optional[ConfounderDensity] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n deve ser >= 1, recebido: {self.n}")
        if not (self.sigma > 0):
            raise ValueError(f"sigma deve ser > 0, recebido: {self.sigma}")
        if self.p < 6:
            raise ValueError(f"O processo usa x1, x2, x5 e x6: p deve ser >= 6, recebido: {self.p}")

    def true_density(self) -> ConfounderDensity:
        return self.density if self.density is not None else Gaussian(self.mu, self.sigma)


@dataclass(eq=False)
class SimulatedData:
    data: ObservationSet
    tau: Optional[np.ndarray] = None
    b0: Optional[np.ndarray] = None
    b1: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None


def _covariaveis(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, p))


def bivariate_tau(cfg: BivariateProbitConfig, X: np.ndarray) -> np.ndarray:
    """tau(x) = Phi(gamma + alpha0 + alpha1 sum(x)) / Phi(alpha0 + alpha1 sum(x))."""
    eta = cfg.alpha0 + cfg.alpha1 * X.sum(axis=1)
    return special.ndtr(cfg.gamma + eta) / special.ndtr(eta)


def gen_bivariate_probit(cfg: BivariateProbitConfig, rng: np.random.Generator) -> SimulatedData:
    """
    (Zg, Zb) ~ N((beta0 + beta1 sum x, alpha0 + alpha1 sum x), [[1, rho], [rho, 1]]),
    G = 1{Zg >= 0}, B = 1{Zb >= -gamma G}.
    """
    X = _covariaveis(cfg.n, cfg.p, rng)
    s = X.sum(axis=1)
    e1 = rng.standard_normal(cfg.n)
    e2 = cfg.rho * e1 + np.sqrt(1.0 - cfg.rho ** 2) * rng.standard_normal(cfg.n)

    G = (cfg.beta0 + cfg.beta1 * s + e1 >= 0).astype(np.int8)
    B = (cfg.alpha0 + cfg.alpha1 * s + e2 >= -cfg.gamma * G).astype(np.int8)
    return SimulatedData(data=ObservationSet(X, G, B), tau=bivariate_tau(cfg, X))


def nonlinear_functions(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    b0 = x5 + x1 sin(2 x6) - 1.75, b1 = b0 + 1.5, g = 0.5 b0 + x2 + 0.25
    (indices a partir de 1).
    """
    X = np.atleast_2d(X)
    b0 = X[:, 4] + X[:, 0] * np.sin(2.0 * X[:, 5]) - 1.75
    return b0, b0 + 1.5, 0.5 * b0 + X[:, 1] + 0.25


def gen_nonlinear(cfg: NonlinearDGPConfig, rng: np.random.Generator) -> SimulatedData:
    X = _covariaveis(cfg.n, cfg.p, rng)
    b0, b1, g = nonlinear_functions(X)
    u = cfg.true_density().sample(rng, cfg.n)

    G = (rng.random(cfg.n) < special.ndtr(g + u)).astype(np.int8)
    pB = special.ndtr(np.where(G == 1, b1, b0) + u)
    B = (rng.random(cfg.n) < pB).astype(np.int8)
    return SimulatedData(data=ObservationSet(X, G, B), b0=b0, b1=b1, g=g)


@dataclass(eq=False)
class OracleEstimands:
    tau: np.ndarray
    delta: np.ndarray
    acrr: float


def oracle_estimands(b0, b1, d_true: ConfounderDensity) -> OracleEstimands:
    est = estimands(b0, b1, d_true)
    return OracleEstimands(tau=est.tau, delta=est.delta, acrr=float(np.mean(est.tau)))


def _verdade(sim: SimulatedData, cfg) -> np.ndarray:
    if sim.tau is not None:
        return sim.tau
    return oracle_estimands(sim.b0, sim.b1, cfg.true_density()).tau


def _gerar(cfg, rng) -> SimulatedData:
    if isinstance(cfg, BivariateProbitConfig):
        return gen_bivariate_probit(cfg, rng)
    if isinstance(cfg, NonlinearDGPConfig):
        return gen_nonlinear(cfg, rng)
    raise ValueError(f"Configuracao de simulacao desconhecida: {type(cfg).__name__}")


# =============================================================================
# EXPERIMENTOS
# =============================================================================

@dataclass(frozen=True)
class RecoveryReport:
    acrr_true: float
    acrr_est: float
    icrr_cor: float
    icrr_rmse: float
    acrrt_true: float
    acrrt_est: float
    acrrc_true: float
    acrrc_est: float
    seed: int
    density: str
    n_infinite: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _metricas(tau_true, tau_est, G, seed: int, label: str) -> RecoveryReport:
    finitos = np.isfinite(tau_est)
    verdade = aggregate(tau_true[finitos], np.zeros(int(finitos.sum())), G[finitos])
    estimado = aggregate(tau_est[finitos], np.zeros(int(finitos.sum())), G[finitos])
    t, e = tau_true[finitos], tau_est[finitos]
    cor = float(np.corrcoef(t, e)[0, 1]) if t.size > 1 and np.std(e) > 0 and np.std(t) > 0 else float("nan")
    return RecoveryReport(
        acrr_true=verdade.acrr,
        acrr_est=estimado.acrr,
        icrr_cor=cor,
        icrr_rmse=float(np.sqrt(np.mean((e - t) ** 2))),
        acrrt_true=verdade.acrr_treated,
        acrrt_est=estimado.acrr_treated,
        acrrc_true=verdade.acrr_controls,
        acrrc_est=estimado.acrr_controls,
        seed=int(seed),
        density=label,
        n_infinite=int((~finitos).sum()),
    )


def _ajustar(sim: SimulatedData, fit_cfg: BartConfig, seed: int, threads: int) -> ReducedFormDraws:
    return fit_reduced_form(sim.data, fit_cfg, seed=seed, threads=threads)


def _tau_projetado(draws: ReducedFormDraws, d: ConfounderDensity, threads: int) -> np.ndarray:
    resultado = project_posterior(draws, SensitivitySpec(densities=(d,)), mode="mean-only", threads=threads)[0]
    return resultado.tau[0]


def recovery_experiment(
    dgp_cfg,
    fit_cfg: BartConfig,
    d_assumed: ConfounderDensity,
    seed: int = 2024,
    threads: int = 1,
) -> RecoveryReport:
    """
    Gera dados, ajusta a forma reduzida, projeta em modo mean-only com
    d_assumed e compara com a verdade.
    """
    seq_dados, seq_ajuste = np.random.SeedSequence(seed).spawn(2)
    sim = _gerar(dgp_cfg, np.random.default_rng(seq_dados))
    draws = _ajustar(sim, fit_cfg, int(seq_ajuste.generate_state(1)[0]), threads)
    tau_est = _tau_projetado(draws, d_assumed, threads)
    return _metricas(_verdade(sim, dgp_cfg), tau_est, sim.data.G, seed, d_assumed.label)


def fit_unconstrained(
    X: np.ndarray,
    G: np.ndarray,
    B: np.ndarray,
    config: BartConfig,
    seed: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Comparador sem monotonicidade: um probit BART de B em (x, G),
    predito em G = 1 e G = 0. Retorna draws (pB1, pB0).
    """
    n = X.shape[0]
    XG = np.column_stack([X, G])
    pred = np.vstack([np.column_stack([X, np.ones(n)]), np.column_stack([X, np.zeros(n)])])
    prob = fit_probit_bart(XG, B, config, predict_rows=pred, seed=seed).prob
    return prob[:, :n], prob[:, n:]


def monotonicity_experiment(
    cfg: BivariateProbitConfig,
    fit_cfg: BartConfig,
    seeds: Sequence[int],
    threads: int = 1,
) -> pd.DataFrame:
    """Correlacao do ICRR estimado com a verdade, com e sem monotonicidade."""
    d = bivariate_density(cfg.rho)
    linhas = []
    for seed in seeds:
        seq_dados, seq_mono, seq_livre = np.random.SeedSequence(seed).spawn(3)
        sim = gen_bivariate_probit(cfg, np.random.default_rng(seq_dados))
        dados = sim.data

        mono = _ajustar(sim, fit_cfg, int(seq_mono.generate_state(1)[0]), threads)
        tau_mono = _tau_projetado(mono, d, threads)

        pB1, pB0 = fit_unconstrained(dados.X, dados.G, dados.B, fit_cfg, int(seq_livre.generate_state(1)[0]))
        # Sem monotonicidade a projecao precisa de pB1 >= pB0 na media
        pB1m, pB0m = pB1.mean(axis=0), pB0.mean(axis=0)
        livre = ReducedFormDraws(
            pG=mono.pG.mean(axis=0, keepdims=True),
            pB1=np.maximum(pB1m, pB0m)[None, :],
            pB0=pB0m[None, :],
            G=dados.G,
        )
        tau_livre = _tau_projetado(livre, d, threads)

        linhas.append({
            "seed": int(seed),
            "cor_monotone": _metricas(sim.tau, tau_mono, dados.G, seed, d.label).icrr_cor,
            "cor_unconstrained": _metricas(sim.tau, tau_livre, dados.G, seed, d.label).icrr_cor,
            "violations_unconstrained": float(np.mean(pB1m < pB0m)),
        })
    return pd.DataFrame(linhas)


# =============================================================================
# TABELAS
# =============================================================================

GAMMAS = (1.0, 1.75, 2.5)
RHOS = (0.25, 0.4, 0.6, 0.8)

# (mu, sigma) da normal verdadeira e (mu, sd) da Laplace errada
LINHAS_NAO_LINEAR = (
    ((0.0, 1.0), (0.0, 1.2)),
    ((0.0, 1.5), (0.0, 1.75)),
    ((0.0, 2.0), (0.0, 2.5)),
    ((0.0, 2.5), (0.0, 2.0)),
    ((-1.0, 1.0), (-1.0, 1.3)),
    ((1.0, 2.0), (1.0, 2.4)),
    ((-2.0, 2.0), (-2.0, 2.3)),
    ((2.0, 1.0), (2.0, 1.3)),
)

# (q, variancia) verdadeira e (q, variancia) assumida
LINHAS_SHARKFIN = (
    ("q", (0.25, 3.0), (0.40, 3.0)),
    ("q", (0.40, 3.0), (0.70, 3.0)),
    ("q", (0.60, 3.0), (0.30, 3.0)),
    ("q", (0.75, 3.0), (0.92, 3.0)),
    ("q", (0.25, 0.5), (0.10, 0.5)),
    ("q", (0.40, 0.5), (0.20, 0.5)),
    ("q", (0.60, 0.5), (0.80, 0.5)),
    ("q", (0.75, 0.5), (0.45, 0.5)),
    ("variance", (0.25, 3.0), (0.25, 1.0)),
    ("variance", (0.40, 3.0), (0.40, 2.0)),
    ("variance", (0.60, 3.0), (0.60, 0.6)),
    ("variance", (0.75, 3.0), (0.75, 1.5)),
    ("variance", (0.25, 0.5), (0.25, 2.0)),
    ("variance", (0.40, 0.5), (0.40, 2.0)),
    ("variance", (0.60, 0.5), (0.60, 4.0)),
    ("variance", (0.75, 0.5), (0.75, 5.0)),
    ("q_extreme", (0.1, 3.0), (0.9, 3.0)),
    ("q_extreme", (0.1, 0.5), (0.9, 0.5)),
    ("q_extreme", (0.1, 1.0), (0.9, 1.0)),
    ("q_extreme", (0.1, 1.0), (0.5, 1.0)),
    ("q_extreme", (0.5, 1.0), (0.1, 1.0)),
    ("q_extreme", (0.5, 1.0), (0.9, 1.0)),
    ("q_extreme", (0.9, 1.0), (0.1, 1.0)),
    ("q_extreme", (0.9, 1.0), (0.5, 1.0)),
)

DENSIDADES_EVALUE = (
    Gaussian(0.0, 0.01),
    Gaussian(0.0, 0.5),
    Gaussian(0.0, 1.0),
    Sharkfin.from_variance(0.25, 1.0),
    Sharkfin.from_variance(0.75, 1.0),
)

SEMENTES_MONOTONIA = 3


def _sementes(seed: int, n: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def tabela_bivariada(n: int, fit_cfg: BartConfig, seed: int, threads: int = 1) -> pd.DataFrame:
    linhas = []
    combinacoes = [(g, r) for r in RHOS for g in GAMMAS]
    for (gamma, rho), s in zip(combinacoes, _sementes(seed, len(combinacoes))):
        logger.info("Tabela bivariada: gamma=%.2f, rho=%.2f", gamma, rho)
        cfg = BivariateProbitConfig(n=n, rho=rho, gamma=gamma)
        rel = recovery_experiment(cfg, fit_cfg, bivariate_density(rho), s, threads)
        linhas.append({"gamma": gamma, "rho": rho, **rel.to_dict()})
    return pd.DataFrame(linhas)


def tabela_nao_linear(n: int, fit_cfg: BartConfig, seed: int, threads: int = 1) -> pd.DataFrame:
    linhas = []
    for ((mu, sigma), (lmu, lsd)), s in zip(LINHAS_NAO_LINEAR, _sementes(seed, len(LINHAS_NAO_LINEAR))):
        cfg = NonlinearDGPConfig(n=n, mu=mu, sigma=sigma)
        seq_dados, seq_ajuste = np.random.SeedSequence(s).spawn(2)
        sim = gen_nonlinear(cfg, np.random.default_rng(seq_dados))
        draws = _ajustar(sim, fit_cfg, int(seq_ajuste.generate_state(1)[0]), threads)
        verdade = _verdade(sim, cfg)

        certo = _metricas(verdade, _tau_projetado(draws, cfg.true_density(), threads), sim.data.G, s, "")
        errada = Laplace(lmu, lsd)
        errado = _metricas(verdade, _tau_projetado(draws, errada, threads), sim.data.G, s, "")
        linhas.append({
            "f_true": cfg.true_density().label,
            "acrr_true": certo.acrr_true,
            "acrr_est": certo.acrr_est,
            "rmse": certo.icrr_rmse,
            "f_wrong": errada.label,
            "acrr_wrong": errado.acrr_est,
            "rmse_wrong": errado.icrr_rmse,
            "seed": s,
        })
    return pd.DataFrame(linhas)


def tabela_sharkfin(n: int, fit_cfg: BartConfig, seed: int, threads: int = 1) -> pd.DataFrame:
    """Ajustes sao reaproveitados entre linhas com a mesma f verdadeira."""
    ajustes: Dict[Tuple[float, float], tuple] = {}
    sementes = dict(zip(sorted({v for _, v, _ in LINHAS_SHARKFIN}), _sementes(seed, 64)))
    linhas = []
    for variante, (q, var), (qe, vare) in LINHAS_SHARKFIN:
        verdadeira = Sharkfin.from_variance(q, var)
        if (q, var) not in ajustes:
            s = sementes[(q, var)]
            cfg = NonlinearDGPConfig(n=n, density=verdadeira)
            seq_dados, seq_ajuste = np.random.SeedSequence(s).spawn(2)
            sim = gen_nonlinear(cfg, np.random.default_rng(seq_dados))
            draws = _ajustar(sim, fit_cfg, int(seq_ajuste.generate_state(1)[0]), threads)
            ajustes[(q, var)] = (sim, draws, _verdade(sim, cfg), s)
        sim, draws, verdade, s = ajustes[(q, var)]

        errada = Sharkfin.from_variance(qe, vare)
        certo = _metricas(verdade, _tau_projetado(draws, verdadeira, threads), sim.data.G, s, "")
        errado = _metricas(verdade, _tau_projetado(draws, errada, threads), sim.data.G, s, "")
        linhas.append({
            "variant": variante,
            "f_true": f"Shark({q:g},{verdadeira.s:.2f};{var:g})",
            "acrr_true": certo.acrr_true,
            "acrr_est": certo.acrr_est,
            "rmse": certo.icrr_rmse,
            "acrrt_true": certo.acrrt_true,
            "acrrt_est": certo.acrrt_est,
            "acrrc_true": certo.acrrc_true,
            "acrrc_est": certo.acrrc_est,
            "f_wrong": f"Shark({qe:g},{errada.s:.2f};{vare:g})",
            "acrr_wrong": errado.acrr_est,
            "rmse_wrong": errado.icrr_rmse,
            "acrrt_wrong": errado.acrrt_est,
            "acrrc_wrong": errado.acrrc_est,
            "seed": s,
        })
    return pd.DataFrame(linhas)


def tabela_evalue(n: int, fit_cfg: BartConfig, seed: int, threads: int = 1) -> pd.DataFrame:
    """E-value vs tau projetado nos dados do processo nao linear."""
    seq_dados, seq_ajuste = np.random.SeedSequence(seed).spawn(2)
    sim = gen_nonlinear(NonlinearDGPConfig(n=n), np.random.default_rng(seq_dados))
    draws = _ajustar(sim, fit_cfg, int(seq_ajuste.generate_state(1)[0]), threads)
    spec = SensitivitySpec(densities=DENSIDADES_EVALUE)
    linhas = []
    for resultado in project_posterior(draws, spec, mode="mean-only", threads=threads):
        linhas.append({**resumo(compare(draws, resultado), resultado.label), "seed": seed})
    return pd.DataFrame(linhas)


def tabela_monotonicidade(n: int, fit_cfg: BartConfig, seed: int, threads: int = 1) -> pd.DataFrame:
    cfg = BivariateProbitConfig(n=n, rho=0.25, gamma=1.0)
    return monotonicity_experiment(cfg, fit_cfg, _sementes(seed, SEMENTES_MONOTONIA), threads)


TABELAS: Dict[str, Callable[..., pd.DataFrame]] = {
    "bivariate": tabela_bivariada,
    "nonlinear": tabela_nao_linear,
    "sharkfin": tabela_sharkfin,
    "evalue": tabela_evalue,
    "monotone": tabela_monotonicidade,
}


def run_table(nome: str, n: int, fit_cfg: BartConfig, seed: int, threads: int = 1) -> pd.DataFrame:
    if nome not in TABELAS:
        raise ValueError(f"Tabela desconhecida: '{nome}'. Opcoes: {sorted(TABELAS)}")
    if n < 1:
        raise ValueError(f"n deve ser >= 1, recebido: {n}")
    return TABELAS[nome](n, fit_cfg, seed, threads)
