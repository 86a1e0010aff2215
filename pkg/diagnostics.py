"""
=============================================================================
DIAGNOSTICOS - Convergencia das cadeias MCMC
=============================================================================

- Tamanho efetivo de amostra (n_eff) com autocorrelacoes via FFT,
  somadas em pares ate o primeiro par negativo
- Teste de Geweke: medias do primeiro trecho vs ultimo trecho, com
  variancia das medias estimada por medias em lotes
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import special

from reduced_form import ReducedFormDraws

logger = logging.getLogger(__name__)

MIN_TAMANHO = 100
N_LOTES = 20
N_MONITORADAS = 1000
COORDENADAS = ("pG", "pB1", "pB0")


def _validar(chain) -> np.ndarray:
    x = np.asarray(chain, dtype=float).ravel()
    if x.size < MIN_TAMANHO:
        raise ValueError(f"Cadeia curta demais: {x.size} valores (minimo {MIN_TAMANHO})")
    return x


def autocorrelation(chain, max_lag: Optional[int] = None) -> np.ndarray:
    """Autocorrelacao amostral (lags 0..max_lag) via FFT."""
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    x = x - x.mean()
    tamanho = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, tamanho)
    acov = np.fft.irfft(f * np.conj(f), tamanho)[:n] / n
    if acov[0] <= 0:
        return np.full(n if max_lag is None else max_lag + 1, np.nan)
    rho = acov / acov[0]
    return rho if max_lag is None else rho[: max_lag + 1]


def _degenerada(x: np.ndarray) -> bool:
    return bool(np.ptp(x) <= 1e-14 * max(1.0, np.abs(x).max()))


def ess(chain) -> float:
    """
    n_eff = n / (1 + 2 sum rho_t), somando pares (rho_2k + rho_2k+1)
    enquanto positivos. Cadeia constante retorna nan (com aviso).
    """
    x = _validar(chain)
    if _degenerada(x):
        warnings.warn("Cadeia constante: n_eff indefinido")
        return float("nan")

    rho = autocorrelation(x)
    n = x.size
    n_pares = n // 2
    pares = rho[0: 2 * n_pares: 2] + rho[1: 2 * n_pares: 2]
    negativos = np.flatnonzero(pares <= 0)
    ate = negativos[0] if negativos.size else n_pares
    tau = -1.0 + 2.0 * float(np.sum(pares[:ate]))
    return float(n / max(tau, 1.0 / n))


def batch_means_variance(x, n_batches: int = N_LOTES) -> float:
    """Variancia da media amostral estimada por medias em lotes."""
    x = np.asarray(x, dtype=float)
    tamanho = x.size // n_batches
    if tamanho < 1:
        raise ValueError(f"Trecho com {x.size} valores nao comporta {n_batches} lotes")
    medias = x[: tamanho * n_batches].reshape(n_batches, tamanho).mean(axis=1)
    return float(np.var(medias, ddof=1) / n_batches)


@dataclass(frozen=True)
class GewekeResult:
    z: float
    prob: float


def geweke(chain, first_frac: float = 0.1, last_frac: float = 0.5, n_batches: int = N_LOTES) -> GewekeResult:
    """
    z = (media_inicio - media_fim) / sqrt(var_inicio + var_fim)
    e prob = Phi(z).
    """
    x = _validar(chain)
    if not (0 < first_frac < 1 and 0 < last_frac < 1 and first_frac + last_frac <= 1):
        raise ValueError(f"Fracoes invalidas: first={first_frac}, last={last_frac}")
    if _degenerada(x):
        warnings.warn("Cadeia constante: estatistica de Geweke indefinida")
        return GewekeResult(z=float("nan"), prob=float("nan"))

    n = x.size
    inicio = x[: int(first_frac * n)]
    fim = x[n - int(last_frac * n):]
    if min(inicio.size, fim.size) < 2:
        raise ValueError(f"Trechos de Geweke com menos de 2 valores (n={n}, first={first_frac}, last={last_frac})")
    # Trechos curtos usam lotes de 1 valor
    var = (
        batch_means_variance(inicio, min(n_batches, inicio.size))
        + batch_means_variance(fim, min(n_batches, fim.size))
    )
    if var <= 0:
        return GewekeResult(z=float("nan"), prob=float("nan"))
    z = (inicio.mean() - fim.mean()) / np.sqrt(var)
    return GewekeResult(z=float(z), prob=float(special.ndtr(z)))


@dataclass(frozen=True)
class ChainDiagnostics:
    n_eff: float
    n_eff_ratio: float
    geweke_z: float
    geweke_prob: float
    degenerada: bool


def diagnose_chain(chain) -> ChainDiagnostics:
    x = _validar(chain)
    with warnings.catch_warnings(record=True) as avisos:
        warnings.simplefilter("always")
        n_eff = ess(x)
        gw = geweke(x)
    return ChainDiagnostics(
        n_eff=n_eff,
        n_eff_ratio=n_eff / x.size,
        geweke_z=gw.z,
        geweke_prob=gw.prob,
        degenerada=bool(avisos),
    )


def _monitoradas(n_obs: int, n_monitor: int, seed: Optional[int]) -> np.ndarray:
    if n_monitor >= n_obs:
        return np.arange(n_obs)
    return np.sort(np.random.default_rng(seed).choice(n_obs, size=n_monitor, replace=False))


def diagnose_draws(draws: ReducedFormDraws, n_monitor: int = N_MONITORADAS, seed: Optional[int] = None) -> pd.DataFrame:
    """
    Diagnostico de cada coordenada (pG, pB1, pB0) em ate n_monitor
    observacoes sorteadas. Uma linha por (coordenada, observacao).
    """
    obs = _monitoradas(draws.n_obs, n_monitor, seed)
    linhas = []
    for coord in COORDENADAS:
        matriz = getattr(draws, coord)
        for i in obs:
            diag = diagnose_chain(matriz[:, i])
            linhas.append({
                "coordinate": coord,
                "obs": int(i),
                "n_eff_ratio": diag.n_eff_ratio,
                "geweke_z": diag.geweke_z,
                "geweke_prob": diag.geweke_prob,
                "degenerate": diag.degenerada,
            })
    degeneradas = sum(l["degenerate"] for l in linhas)
    if degeneradas:
        logger.warning("%d cadeia(s) constante(s) entre as monitoradas", degeneradas)
    return pd.DataFrame(linhas)


def summarize(tabela: pd.DataFrame) -> pd.DataFrame:
    """Media do n_eff relativo e fracao |z| > 1.96 por coordenada."""
    return (
        tabela.assign(rejeita=lambda t: t["geweke_z"].abs() > 1.96)
        .groupby("coordinate", sort=False)
        .agg(
            n_eff_ratio_mean=("n_eff_ratio", "mean"),
            geweke_z_mean=("geweke_z", "mean"),
            geweke_reject_frac=("rejeita", "mean"),
            monitored=("obs", "size"),
        )
        .reset_index()
    )


def trace_frame(draws: ReducedFormDraws, obs: Sequence[int]) -> pd.DataFrame:
    """Tracos no formato longo: draw, coordinate, obs, value."""
    partes = []
    for coord in COORDENADAS:
        matriz = getattr(draws, coord)
        for i in obs:
            partes.append(pd.DataFrame({
                "draw": np.arange(draws.n_draws),
                "coordinate": coord,
                "obs": int(i),
                "value": matriz[:, i],
            }))
    return pd.concat(partes, ignore_index=True) if partes else pd.DataFrame(columns=["draw", "coordinate", "obs", "value"])


def autocorrelation_frame(draws: ReducedFormDraws, obs: Sequence[int], max_lag: int = 50) -> pd.DataFrame:
    partes = []
    for coord in COORDENADAS:
        matriz = getattr(draws, coord)
        for i in obs:
            rho = autocorrelation(matriz[:, i], min(max_lag, draws.n_draws - 1))
            partes.append(pd.DataFrame({"lag": np.arange(rho.size), "coordinate": coord, "obs": int(i), "acf": rho}))
    return pd.concat(partes, ignore_index=True) if partes else pd.DataFrame(columns=["lag", "coordinate", "obs", "acf"])
