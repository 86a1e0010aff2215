"""
=============================================================================
PROJECAO - Da forma reduzida para o risco causal sob uma densidade f
=============================================================================

Para cada observacao e cada draw da forma reduzida, acha (b0, b1, g) com
b1 >= b0 cujas celulas modeladas

    Pr(B=1,G=1) = int Phi(b1+u) Phi(g+u) f(u) du
    Pr(B=1,G=0) = int Phi(b0+u) (1-Phi(g+u)) f(u) du
    Pr(B=0,G=1) = int (1-Phi(b1+u)) Phi(g+u) f(u) du

reproduzem as celulas da forma reduzida. A distancia e medida na escala
probit (Phi^-1). A otimizacao usa Nelder-Mead (scipy) em (b0, delta, g)
com b1 = b0 + delta^2.

Com (b0, b1) resolvidos:
    Pr(B=1|do(G=g)) = int Phi(b_g + u) f(u) du
    tau = Pr(B=1|do(1)) / Pr(B=1|do(0)),  Delta = diferenca
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, special

from densities import NOS_PADRAO, ConfounderDensity, QuadratureRule, marginal_pair, marginal_single, quadrature
from reduced_form import ReducedFormDraws, cell_probabilities

try:
    from joblib import Parallel, delayed
    JOBLIB_DISPONIVEL = True
except ImportError:
    JOBLIB_DISPONIVEL = False

logger = logging.getLogger(__name__)

# =============================================================================
# CONFIGURACAO
# =============================================================================

LIMITE_PROB = 1e-12
LIMITE_UNDERFLOW = 1e-300
MODOS = ("per-draw", "mean-only")
TAMANHO_BLOCO = 256


@dataclass(frozen=True)
class SensitivitySpec:
    """Densidades a avaliar e tolerancias do otimizador."""

    densities: Tuple[ConfounderDensity, ...]
    xatol: float = 1e-8
    fatol: float = 1e-12
    max_iter: int = 4000
    restarts: int = 3
    nodes: int = NOS_PADRAO

    def __post_init__(self):
        object.__setattr__(self, "densities", tuple(self.densities))
        if not self.densities:
            raise ValueError("SensitivitySpec precisa de pelo menos uma densidade")
        if self.restarts < 0 or self.max_iter < 1:
            raise ValueError("restarts >= 0 e max_iter >= 1 sao obrigatorios")


@dataclass(frozen=True)
class StructuralEntry:
    """Solucao para uma observacao."""

    b0: float
    b1: float
    g: float
    objective: float
    converged: bool


# =============================================================================
# OBJETIVO
# =============================================================================

def _limitar(p, avisar: bool = True) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    fora = (p < LIMITE_PROB) | (p > 1.0 - LIMITE_PROB)
    if avisar and np.any(fora):
        warnings.warn(
            f"{int(np.sum(fora))} probabilidade(s) alvo fora de [{LIMITE_PROB}, 1-{LIMITE_PROB}] foram limitadas"
        )
    return np.clip(p, LIMITE_PROB, 1.0 - LIMITE_PROB)


def model_cells(b0, b1, g, d: ConfounderDensity, regra: Optional[QuadratureRule] = None):
    """Celulas modeladas (Pr(B=1,G=1), Pr(B=1,G=0), Pr(B=0,G=1))."""
    regra = regra if regra is not None else quadrature(d)
    return (
        marginal_pair(d, b1, g, "both", regra=regra),
        marginal_pair(d, b0, g, "second_neg", regra=regra),
        marginal_pair(d, b1, g, "first_neg", regra=regra),
    )


def _objetivo_probit(b0, b1, g, alvos_probit, d, regra) -> float:
    # Mesmas operacoes de model_cells(), sem a sobrecarga de marginal_pair
    u, w = regra.nodes, regra.weights
    ug = g + u
    u1 = b1 + u
    fg = special.ndtr(ug)
    modelo = np.array([
        (special.ndtr(u1) * fg) @ w,
        (special.ndtr(b0 + u) * special.ndtr(-ug)) @ w,
        (special.ndtr(-u1) * fg) @ w,
    ])
    modelo = np.clip(modelo, LIMITE_PROB, 1.0 - LIMITE_PROB)
    return float(np.sum((alvos_probit - special.ndtri(modelo)) ** 2))


def objective(
    b0: float,
    b1: float,
    g: float,
    targets: Sequence[float],
    d: ConfounderDensity,
    regra: Optional[QuadratureRule] = None,
) -> float:
    """
    Soma dos quadrados das diferencas, na escala probit, entre as tres
    celulas alvo (p11, p10, p01) e as modeladas. Sempre >= 0.
    """
    regra = regra if regra is not None else quadrature(d)
    alvos = special.ndtri(_limitar(targets))
    return _objetivo_probit(b0, b1, g, alvos, d, regra)


def _inicio_fechado(alvos: np.ndarray) -> np.ndarray:
    """Solucao com u = 0 (sem confundimento), na parametrizacao (b0, delta, g)."""
    p11, p10, p01 = alvos
    pG = p11 + p01
    pB1 = p11 / pG
    pB0 = p10 / (1.0 - pG) if pG < 1.0 else p10
    lim = lambda p: float(np.clip(p, LIMITE_PROB, 1.0 - LIMITE_PROB))
    b0 = special.ndtri(lim(pB0))
    b1 = special.ndtri(lim(pB1))
    g = special.ndtri(lim(pG))
    return np.array([b0, np.sqrt(max(b1 - b0, 0.0)), g])


def solve_structural(
    targets: Sequence[float],
    d: ConfounderDensity,
    init: Optional[Sequence[float]] = None,
    spec: Optional[SensitivitySpec] = None,
    regra: Optional[QuadratureRule] = None,
    avisar: bool = True,
) -> StructuralEntry:
    """
    Acha (b0, b1, g) com b1 >= b0 que minimizam objective().

    Convergiu quando o simplex encolhe abaixo de xatol/fatol ou quando o
    objetivo fica abaixo de 1e-12. Ate `restarts` reinicios com
    perturbacao; no fim fica o melhor ponto encontrado.

    Args:
        targets: (p11, p10, p01)
        init: ponto inicial (b0, b1, g); default: solucao fechada com u = 0
    """
    spec = spec if spec is not None else SensitivitySpec(densities=(d,))
    regra = regra if regra is not None else quadrature(d, spec.nodes)
    alvos = _limitar(targets, avisar=avisar)
    alvos_probit = special.ndtri(alvos)

    def f(theta):
        b0, delta, g = theta
        return _objetivo_probit(b0, b0 + delta * delta, g, alvos_probit, d, regra)

    if init is not None:
        b0, b1, g = (float(v) for v in init)
        theta0 = np.array([b0, np.sqrt(max(b1 - b0, 0.0)), g])
    else:
        theta0 = _inicio_fechado(alvos)

    rng = np.random.default_rng(0)
    melhor = None
    convergiu = False
    x0 = theta0
    for tentativa in range(spec.restarts + 1):
        res = optimize.minimize(
            f, x0, method="Nelder-Mead",
            options={"xatol": spec.xatol, "fatol": spec.fatol, "maxiter": spec.max_iter, "maxfev": 2 * spec.max_iter},
        )
        if melhor is None or res.fun < melhor.fun:
            melhor = res
        convergiu = bool(res.success) or res.fun < LIMITE_PROB
        if convergiu:
            break
        x0 = melhor.x + rng.normal(scale=0.5, size=3)
        logger.debug("Nelder-Mead nao convergiu (tentativa %d, f=%.3g); reiniciando", tentativa + 1, res.fun)

    b0, delta, g = melhor.x
    return StructuralEntry(
        b0=float(b0), b1=float(b0 + delta * delta), g=float(g),
        objective=float(melhor.fun), converged=convergiu,
    )


# =============================================================================
# ESTIMANDOS
# =============================================================================

@dataclass(eq=False)
class Estimands:
    pDo0: np.ndarray
    pDo1: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    underflow: np.ndarray


def estimands(b0, b1, d: ConfounderDensity, regra: Optional[QuadratureRule] = None) -> Estimands:
    """
    Pr(B=1|do(0)), Pr(B=1|do(1)), tau e Delta. Se Pr(B=1|do(0)) < 1e-300
    o tau vira +inf e a observacao fica marcada em `underflow`.
    """
    b0 = np.asarray(b0, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    if np.any(b1 < b0 - 1e-12):
        raise ValueError("Parametros estruturais exigem b1 >= b0")
    regra = regra if regra is not None else quadrature(d)

    p0 = np.asarray(marginal_single(d, b0, regra=regra), dtype=float)
    p1 = np.asarray(marginal_single(d, b1, regra=regra), dtype=float)
    underflow = p0 < LIMITE_UNDERFLOW
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(underflow, np.inf, p1 / np.where(underflow, 1.0, p0))
    return Estimands(pDo0=p0, pDo1=p1, tau=tau, delta=p1 - p0, underflow=underflow)


@dataclass(frozen=True)
class Aggregate:
    acrr: float
    delta_mean: float
    acrr_treated: float
    acrr_controls: float


def aggregate(tau, delta, G=None, subset=None) -> Aggregate:
    """
    ACRR = media de tau, Delta medio, e as versoes nos tratados/controles.

    Raises:
        ValueError: se o subconjunto e vazio
    """
    tau = np.asarray(tau, dtype=float)
    delta = np.asarray(delta, dtype=float)
    idx = np.arange(tau.size) if subset is None else np.asarray(subset)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("Subconjunto vazio: nao ha observacoes para agregar")

    def media(v):
        return float(np.mean(v)) if v.size else float("nan")

    if G is None:
        tratados = controles = float("nan")
    else:
        G = np.asarray(G)[idx]
        tratados = media(tau[idx][G == 1])
        controles = media(tau[idx][G == 0])
    return Aggregate(
        acrr=media(tau[idx]), delta_mean=media(delta[idx]),
        acrr_treated=tratados, acrr_controls=controles,
    )


# =============================================================================
# VARIAS OBSERVACOES
# =============================================================================

@dataclass(eq=False)
class StructuralSolution:
    """Solucoes e estimandos de um vetor de observacoes."""

    b0: np.ndarray
    b1: np.ndarray
    g: np.ndarray
    objective: np.ndarray
    converged: np.ndarray
    pDo0: np.ndarray
    pDo1: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    underflow: np.ndarray


def _resolver_bloco(alvos: np.ndarray, d, spec) -> np.ndarray:
    regra = quadrature(d, spec.nodes)
    saida = np.empty((alvos.shape[0], 5))
    for i, t in enumerate(alvos):
        s = solve_structural(t, d, spec=spec, regra=regra, avisar=False)
        saida[i] = (s.b0, s.b1, s.g, s.objective, s.converged)
    return saida


def solve_many(pG, pB1, pB0, d: ConfounderDensity, spec: Optional[SensitivitySpec] = None, threads: int = 1) -> StructuralSolution:
    """
    Resolve a projecao observacao a observacao. Com threads > 1 os blocos
    rodam em paralelo (joblib) e sao concatenados na ordem original.
    """
    spec = spec if spec is not None else SensitivitySpec(densities=(d,))
    cel = cell_probabilities(pG, pB1, pB0)
    alvos = _limitar(np.column_stack([np.ravel(cel.p11), np.ravel(cel.p10), np.ravel(cel.p01)]))

    blocos = [alvos[i:i + TAMANHO_BLOCO] for i in range(0, alvos.shape[0], TAMANHO_BLOCO)]
    if threads > 1 and JOBLIB_DISPONIVEL and len(blocos) > 1:
        partes = Parallel(n_jobs=threads)(delayed(_resolver_bloco)(b, d, spec) for b in blocos)
    else:
        partes = [_resolver_bloco(b, d, spec) for b in blocos]
    r = np.vstack(partes) if partes else np.empty((0, 5))

    est = estimands(r[:, 0], r[:, 1], d, quadrature(d, spec.nodes))
    return StructuralSolution(
        b0=r[:, 0], b1=r[:, 1], g=r[:, 2], objective=r[:, 3], converged=r[:, 4].astype(bool),
        pDo0=est.pDo0, pDo1=est.pDo1, tau=est.tau, delta=est.delta, underflow=est.underflow,
    )


# =============================================================================
# POSTERIORI PROJETADA
# =============================================================================

@dataclass(eq=False)
class DensityResult:
    """Resultado da projecao para uma densidade."""

    label: str
    mode: str
    acrr: np.ndarray
    delta_mean: np.ndarray
    acrr_treated: np.ndarray
    acrr_controls: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    pDo0: np.ndarray
    pDo1: np.ndarray
    draw_index: np.ndarray
    nonconvergence: float
    underflow: int = 0

    @staticmethod
    def _resumo(v: np.ndarray) -> Tuple[float, float, float]:
        v = np.asarray(v, dtype=float)
        return float(np.mean(v)), float(np.quantile(v, 0.025)), float(np.quantile(v, 0.975))

    def summary(self) -> dict:
        acrr, acrr_lo, acrr_hi = self._resumo(self.acrr)
        dm, d_lo, d_hi = self._resumo(self.delta_mean)
        return {
            "density": self.label,
            "acrr_mean": acrr,
            "acrr_2.5": acrr_lo,
            "acrr_97.5": acrr_hi,
            "delta_mean": dm,
            "delta_2.5": d_lo,
            "delta_97.5": d_hi,
            "acrrt_mean": float(np.nanmean(self.acrr_treated)) if np.any(np.isfinite(self.acrr_treated)) else float("nan"),
            "acrrc_mean": float(np.nanmean(self.acrr_controls)) if np.any(np.isfinite(self.acrr_controls)) else float("nan"),
            "nonconvergence": self.nonconvergence,
        }


def _subamostra(n_draws: int, n_subsample: int, seed: Optional[int]) -> np.ndarray:
    if n_subsample >= n_draws:
        return np.arange(n_draws)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_draws, size=n_subsample, replace=False))


def project_posterior(
    draws: ReducedFormDraws,
    spec: SensitivitySpec,
    mode: str = "per-draw",
    n_subsample: int = 500,
    seed: Optional[int] = None,
    threads: int = 1,
) -> List[DensityResult]:
    """
    Projeta a posteriori da forma reduzida em cada densidade de spec.

    per-draw: resolve cada observacao em cada draw de uma subamostra
              (sem reposicao) de tamanho n_subsample.
    mean-only: resolve uma vez nas medias a posteriori de (pG, pB1, pB0).
    """
    if mode not in MODOS:
        raise ValueError(f"Modo invalido: {mode}. Use um de {MODOS}")
    if draws.n_draws == 0:
        raise ValueError("Artefato sem draws")

    if mode == "mean-only":
        indices = np.array([-1])
        pG, pB1, pB0 = (v[None, :] for v in draws.posterior_means())
    else:
        indices = _subamostra(draws.n_draws, n_subsample, seed)
        escolhidos = draws.select(indices)
        pG, pB1, pB0 = escolhidos.pG, escolhidos.pB1, escolhidos.pB0

    S, n = pG.shape
    resultados = []
    for d in spec.densities:
        logger.info("Projetando %d draw(s) x %d obs na densidade %s", S, n, d.label)
        sol = solve_many(pG, pB1, pB0, d, spec, threads)
        formato = lambda v: np.asarray(v).reshape(S, n)
        tau, delta = formato(sol.tau), formato(sol.delta)

        agregados = [aggregate(tau[s], delta[s], draws.G) for s in range(S)]
        nao_conv = float(np.mean(~sol.converged)) if sol.converged.size else 0.0
        if nao_conv > 0:
            warnings.warn(f"Densidade {d.label}: {nao_conv:.1%} das projecoes nao convergiram")

        resultados.append(DensityResult(
            label=d.label,
            mode=mode,
            acrr=np.array([a.acrr for a in agregados]),
            delta_mean=np.array([a.delta_mean for a in agregados]),
            acrr_treated=np.array([a.acrr_treated for a in agregados]),
            acrr_controls=np.array([a.acrr_controls for a in agregados]),
            tau=tau,
            delta=delta,
            pDo0=formato(sol.pDo0),
            pDo1=formato(sol.pDo1),
            draw_index=indices,
            nonconvergence=nao_conv,
            underflow=int(np.sum(sol.underflow)),
        ))
    return resultados


def results_table(resultados: Sequence[DensityResult]) -> pd.DataFrame:
    """Tabela de sensibilidade: uma linha por densidade."""
    return pd.DataFrame([r.summary() for r in resultados])


def unit_posteriors(draws: ReducedFormDraws, resultado: DensityResult) -> pd.DataFrame:
    """
    Resumo por observacao: RR observado, Pr(B=1|do(0)), Pr(B=1|do(1)) e tau
    com intervalo de 95%.
    """
    if resultado.mode == "mean-only":
        pB1, pB0 = (v[None, :] for v in draws.posterior_means()[1:])
    else:
        pB1, pB0 = draws.pB1[resultado.draw_index], draws.pB0[resultado.draw_index]
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = pB1 / pB0

    n = resultado.tau.shape[1]
    rotulos = list(draws.labels) if draws.labels is not None else [str(i) for i in range(n)]
    return pd.DataFrame({
        "obs": np.arange(n),
        "label": rotulos,
        "rr_obs_mean": rr.mean(axis=0),
        "pdo0_mean": resultado.pDo0.mean(axis=0),
        "pdo1_mean": resultado.pDo1.mean(axis=0),
        "tau_mean": resultado.tau.mean(axis=0),
        "tau_2.5": np.quantile(resultado.tau, 0.025, axis=0),
        "tau_97.5": np.quantile(resultado.tau, 0.975, axis=0),
    })
